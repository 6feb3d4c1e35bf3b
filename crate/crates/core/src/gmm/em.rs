use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GmmModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::scalar::{log_sum_exp, squared_distance, Scalar};

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

/// Fits a diagonal GMM by expectation-maximization.
///
/// Means are seeded with k-means++, weights start uniform and every component starts
/// with the per-feature data variance. Variances are clamped below at
/// `variance_floor`, which keeps each M-step a constrained maximizer, so the recorded
/// log-likelihood trace never decreases.
pub fn fit_em<T: Scalar>(data: &Matrix<T>, k: usize, cfg: &EmConfig, seed: u64) -> Result<GmmModel<T>> {
    let n = data.rows();
    let d = data.cols();
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::invalid("k", "need at least one component"));
    }
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    let floor = T::lit(cfg.variance_floor);
    let nt = T::from_count(n);

    let means = kmeans_plus_plus(data, k, seed);
    let mut data_var = vec![T::zero(); d];
    for j in 0..d {
        let col: Vec<T> = data.iter_rows().map(|r| r[j]).collect();
        let (_, s) = crate::scalar::mean_and_population_std(&col);
        data_var[j] = (s * s).max(floor);
    }
    let mut variances = Matrix::zeros(k, d);
    for c in 0..k {
        variances.row_mut(c).copy_from_slice(&data_var);
    }
    let mut model = GmmModel {
        weights: vec![T::one() / T::from_count(k); k],
        means,
        variances,
        cluster_stds: Matrix::zeros(k, d),
        log_likelihood_trace: Vec::new(),
        converged: false,
    };

    let mut resp = Matrix::zeros(n, k);
    let mut prev = f64::NEG_INFINITY;
    let mut evaluated = false;
    for _ in 0..cfg.max_iters {
        let ll = e_step(&model, data, &mut resp) / nt;
        let ll = ll.as_f64();
        model.log_likelihood_trace.push(ll);
        if ll - prev < cfg.tol {
            model.converged = true;
            evaluated = true;
            break;
        }
        prev = ll;
        m_step(&mut model, data, &resp, floor);
    }
    if !evaluated {
        let ll = e_step(&model, data, &mut resp) / nt;
        model.log_likelihood_trace.push(ll.as_f64());
    }
    model.cluster_stds = empirical_stds(&model, data);
    Ok(model)
}

/// Fills `resp` with posterior probabilities; returns the total log-likelihood.
fn e_step<T: Scalar>(model: &GmmModel<T>, data: &Matrix<T>, resp: &mut Matrix<T>) -> T {
    let mut total = T::zero();
    for i in 0..data.rows() {
        let lw = model.weighted_log_densities(data.row(i));
        let norm = log_sum_exp(&lw);
        total += norm;
        for (r, l) in resp.row_mut(i).iter_mut().zip(lw) {
            *r = (l - norm).exp();
        }
    }
    total
}

fn m_step<T: Scalar>(model: &mut GmmModel<T>, data: &Matrix<T>, resp: &Matrix<T>, floor: T) {
    let n = data.rows();
    let d = data.cols();
    let nt = T::from_count(n);
    for c in 0..model.k() {
        let nk: T = (0..n).map(|i| resp.get(i, c)).sum();
        model.weights[c] = nk / nt;
        if nk <= T::min_positive_value() {
            // Dead component: zero weight, parameters left in place.
            continue;
        }
        let mut mu = vec![T::zero(); d];
        for i in 0..n {
            let r = resp.get(i, c);
            for (m, &x) in mu.iter_mut().zip(data.row(i)) {
                *m += r * x;
            }
        }
        mu.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![T::zero(); d];
        for i in 0..n {
            let r = resp.get(i, c);
            for j in 0..d {
                let diff = data.get(i, j) - mu[j];
                var[j] += r * diff * diff;
            }
        }
        for v in var.iter_mut() {
            *v = (*v / nk).max(floor);
        }
        model.means.row_mut(c).copy_from_slice(&mu);
        model.variances.row_mut(c).copy_from_slice(&var);
    }
}

/// Per-component std of hard-assigned points; components with fewer than two members
/// fall back to `sqrt(σ²)`.
fn empirical_stds<T: Scalar>(model: &GmmModel<T>, data: &Matrix<T>) -> Matrix<T> {
    let k = model.k();
    let d = model.dim();
    let labels: Vec<usize> = data
        .iter_rows()
        .map(|r| super::argmax(&model.weighted_log_densities(r)))
        .collect();
    let mut out = Matrix::zeros(k, d);
    for c in 0..k {
        let members: Vec<&[T]> = labels
            .iter()
            .zip(data.iter_rows())
            .filter(|(&l, _)| l == c)
            .map(|(_, r)| r)
            .collect();
        for j in 0..d {
            let s = if members.len() < 2 {
                model.variances.get(c, j).sqrt()
            } else {
                let col: Vec<T> = members.iter().map(|r| r[j]).collect();
                crate::scalar::mean_and_population_std(&col).1
            };
            out.set(c, j, s);
        }
    }
    out
}

/// k-means++ seeding: first center uniform, later ones with probability ∝ D².
fn kmeans_plus_plus<T: Scalar>(data: &Matrix<T>, k: usize, seed: u64) -> Matrix<T> {
    let n = data.rows();
    let mut rng = seeded(seed);
    let mut centers = Matrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = data
        .iter_rows()
        .map(|r| squared_distance(r, data.row(first)).as_f64())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        for (i, r) in data.iter_rows().enumerate() {
            let dist = squared_distance(r, centers.row(c)).as_f64();
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
    }
    centers
}
