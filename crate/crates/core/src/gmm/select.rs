use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::em::{fit_em, EmConfig};
use super::silhouette::{silhouette, DEFAULT_SILHOUETTE_SUBSAMPLE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub em: EmConfig,
    pub silhouette_subsample: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            silhouette_subsample: DEFAULT_SILHOUETTE_SUBSAMPLE,
        }
    }
}

/// Silhouette sweep over candidate component counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSelection {
    pub tested_ks: Vec<usize>,
    pub silhouette_scores: Vec<f64>,
    pub best_k: usize,
    /// Wall-clock seconds per K (fit + silhouette).
    pub timings: Vec<f64>,
    pub fit_seconds: Vec<f64>,
    pub silhouette_seconds: Vec<f64>,
}

/// `{2, …, min(30, n / 5)}`, never empty.
pub fn default_grid(n: usize) -> Vec<usize> {
    let hi = (n / 5).clamp(2, 30);
    (2..=hi).collect()
}

/// The EM seed used for component count `k`; refitting with it reproduces the
/// model scored during selection.
pub fn em_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, k as u64)
}

/// Fits one GMM per grid entry, hard-assigns the data and scores the partition.
/// `best_k` maximizes the silhouette; ties go to the smaller K. A fit that collapses
/// to a single occupied cluster scores -1.
pub fn select_components<T: Scalar>(
    data: &Matrix<T>,
    grid: &[usize],
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<ComponentSelection> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must not be empty"));
    }
    let mut ks = grid.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > data.rows()) {
        return Err(Error::invalid("grid", format!("K={k} outside 1..={}", data.rows())));
    }
    let mut out = ComponentSelection {
        tested_ks: Vec::new(),
        silhouette_scores: Vec::new(),
        best_k: ks[0],
        timings: Vec::new(),
        fit_seconds: Vec::new(),
        silhouette_seconds: Vec::new(),
    };
    let mut best = f64::NEG_INFINITY;
    for k in ks {
        let t0 = Instant::now();
        let model = fit_em(data, k, &cfg.em, em_seed(seed, k))?;
        let labels = model.hard_assign_all(data)?;
        let fit = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let score = match silhouette(data, &labels, cfg.silhouette_subsample, seed) {
            Ok(s) => s.as_f64(),
            Err(Error::TooFewClusters) => -1.0,
            Err(e) => return Err(e),
        };
        let sil = t1.elapsed().as_secs_f64();
        if score > best {
            best = score;
            out.best_k = k;
        }
        out.tested_ks.push(k);
        out.silhouette_scores.push(score);
        out.fit_seconds.push(fit);
        out.silhouette_seconds.push(sil);
        out.timings.push(fit + sil);
    }
    Ok(out)
}
