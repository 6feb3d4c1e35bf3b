use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Label, Sample};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::{squared_distance, Scalar};

pub const DEFAULT_K_NEIGHBORS: usize = 5;

/// Where an output sample of [`smote_tomek`] came from. Indices refer to the input slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Original(usize),
    /// `base + u * (neighbor - base)`.
    Synthetic { base: usize, neighbor: usize, u: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSet<T> {
    pub samples: Vec<Sample<T>>,
    pub provenance: Vec<Provenance>,
    pub synthetic_added: usize,
    pub tomek_links_removed: usize,
}

impl<T: Scalar> BalancedSet<T> {
    pub fn class_counts(&self) -> (usize, usize) {
        let attacks = self.samples.iter().filter(|s| s.label.is_attack()).count();
        (self.samples.len() - attacks, attacks)
    }
}

/// SMOTE oversampling of the minority class up to the majority count, followed by
/// removal of both endpoints of every Tomek link. Classes are benign vs. attack.
pub fn smote_tomek<T: Scalar>(samples: &[Sample<T>], k_neighbors: usize, seed: u64) -> Result<BalancedSet<T>> {
    if samples.iter().any(|s| s.label == Label::Unlabeled) {
        return Err(Error::invalid("samples", "SMOTE-Tomek needs labeled samples"));
    }
    let (attack, benign): (Vec<usize>, Vec<usize>) =
        (0..samples.len()).partition(|&i| samples[i].label.is_attack());
    if attack.is_empty() || benign.is_empty() {
        return Err(Error::SingleClass);
    }
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors", "must be at least 1"));
    }
    let (minority, majority) = if attack.len() <= benign.len() {
        (attack, benign)
    } else {
        (benign, attack)
    };
    let deficit = majority.len() - minority.len();
    if deficit > 0 && minority.len() <= k_neighbors {
        return Err(Error::invalid(
            "k_neighbors",
            format!("minority class has {} samples, need more than {k_neighbors}", minority.len()),
        ));
    }

    let mut out: Vec<Sample<T>> = samples.to_vec();
    let mut provenance: Vec<Provenance> = (0..samples.len()).map(Provenance::Original).collect();

    if deficit > 0 {
        let neighbors: Vec<Vec<usize>> = minority
            .iter()
            .map(|&i| k_nearest(samples, i, &minority, k_neighbors))
            .collect();
        let mut rng = seeded(seed);
        for s in 0..deficit {
            let slot = s % minority.len();
            let base = minority[slot];
            let neighbor = neighbors[slot][rng.random_range(0..k_neighbors)];
            let u: f64 = rng.random();
            let ut = T::lit(u);
            let features = samples[base]
                .features
                .iter()
                .zip(&samples[neighbor].features)
                .map(|(&a, &b)| a + ut * (b - a))
                .collect();
            out.push(Sample::new(features, samples[base].label));
            provenance.push(Provenance::Synthetic { base, neighbor, u });
        }
    }

    let links = tomek_links(&out);
    let mut drop = vec![false; out.len()];
    for &(i, j) in &links {
        drop[i] = true;
        drop[j] = true;
    }
    let (samples, provenance): (Vec<_>, Vec<_>) = out
        .into_iter()
        .zip(provenance)
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(p, _)| p)
        .unzip();
    Ok(BalancedSet {
        samples,
        provenance,
        synthetic_added: deficit,
        tomek_links_removed: links.len(),
    })
}

/// `k` nearest members of `pool` to sample `i` (excluding `i`); ties go to the lower index.
fn k_nearest<T: Scalar>(samples: &[Sample<T>], i: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(T, usize)> = pool
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (squared_distance(&samples[i].features, &samples[j].features), j))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Mutual nearest-neighbour pairs `(i, j)`, `i < j`, whose labels fall in different classes.
pub(crate) fn tomek_links<T: Scalar>(samples: &[Sample<T>]) -> Vec<(usize, usize)> {
    let n = samples.len();
    let nearest: Vec<Option<usize>> = (0..n)
        .map(|i| {
            let mut best: Option<(T, usize)> = None;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = squared_distance(&samples[i].features, &samples[j].features);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            best.map(|(_, j)| j)
        })
        .collect();
    (0..n)
        .filter_map(|i| {
            let j = nearest[i]?;
            (i < j
                && nearest[j] == Some(i)
                && samples[i].label.is_attack() != samples[j].label.is_attack())
            .then_some((i, j))
        })
        .collect()
}
