//! Diagonal-covariance Gaussian mixtures: EM fitting, the mixture density used as the
//! detection gate, silhouette scoring and silhouette-driven choice of the component count.

mod em;
mod select;
mod silhouette;

pub use em::{fit_em, EmConfig, VARIANCE_FLOOR};
pub use select::{default_grid, em_seed, select_components, ComponentSelection, SelectionConfig};
pub use silhouette::{silhouette, DEFAULT_SILHOUETTE_SUBSAMPLE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{log_sum_exp, Scalar};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A fitted K-component mixture with diagonal covariances.
///
/// `cluster_stds` holds the empirical per-dimension spread of the training points
/// hard-assigned to each component; the histogram featurizer uses it (together with
/// the means as cluster centers) to define each cluster's membership band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GmmModel<T> {
    pub weights: Vec<T>,
    pub means: Matrix<T>,
    pub variances: Matrix<T>,
    pub cluster_stds: Matrix<T>,
    /// Mean per-sample log-likelihood after each EM iteration.
    #[serde(default)]
    pub log_likelihood_trace: Vec<f64>,
    #[serde(default)]
    pub converged: bool,
}

impl<T: Scalar> GmmModel<T> {
    /// Builds a model from explicit parameters; `cluster_stds` defaults to `sqrt(variances)`.
    pub fn new(weights: Vec<T>, means: Matrix<T>, variances: Matrix<T>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("weights", "need at least one component"));
        }
        for m in [&means, &variances] {
            if m.rows() != k || m.cols() != means.cols() {
                return Err(Error::ShapeMismatch);
            }
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::invalid("weights", "must be non-negative"));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::invalid("weights", format!("sum to {total}, expected 1")));
        }
        if variances.as_slice().iter().any(|&v| v <= T::zero()) {
            return Err(Error::invalid("variances", "must be positive"));
        }
        let cluster_stds = variances.map(|v| v.sqrt());
        Ok(Self {
            weights,
            means,
            variances,
            cluster_stds,
            log_likelihood_trace: Vec::new(),
            converged: true,
        })
    }

    pub fn with_cluster_stds(mut self, stds: Matrix<T>) -> Result<Self> {
        if stds.rows() != self.k() || stds.cols() != self.dim() {
            return Err(Error::ShapeMismatch);
        }
        self.cluster_stds = stds;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// Cluster centers are the component means.
    pub fn cluster_centers(&self) -> &Matrix<T> {
        &self.means
    }

    pub(crate) fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `ln π_k + ln N(x; μ_k, diag σ²_k)` for every component, without dimension checks.
    pub(crate) fn weighted_log_densities(&self, x: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        let ln2pi = T::lit(LN_2PI);
        (0..self.k())
            .map(|k| {
                let mu = self.means.row(k);
                let var = self.variances.row(k);
                let mut acc = T::zero();
                for j in 0..x.len() {
                    let d = x[j] - mu[j];
                    acc += ln2pi + var[j].ln() + d * d / var[j];
                }
                self.weights[k].ln() - half * acc
            })
            .collect()
    }

    pub fn log_density(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        Ok(log_sum_exp(&self.weighted_log_densities(x)))
    }

    /// Mixture pdf at `x`. This is a density, so values above 1 are possible.
    pub fn density(&self, x: &[T]) -> Result<T> {
        Ok(self.log_density(x)?.exp())
    }

    /// Most likely component; ties go to the lowest index.
    pub fn hard_assign(&self, x: &[T]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(argmax(&self.weighted_log_densities(x)))
    }

    pub fn hard_assign_all(&self, data: &Matrix<T>) -> Result<Vec<usize>> {
        data.iter_rows().map(|r| self.hard_assign(r)).collect()
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let lw = self.weighted_log_densities(x);
        let norm = log_sum_exp(&lw);
        Ok(lw.into_iter().map(|v| (v - norm).exp()).collect())
    }
}

pub(crate) fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn model(w: &[f64], mu: &[&[f64]], var: &[&[f64]]) -> GmmModel<f64> {
        GmmModel::new(
            w.to_vec(),
            Matrix::from_rows(mu.iter().copied()).unwrap(),
            Matrix::from_rows(var.iter().copied()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_peak() {
        let m = model(&[1.0], &[&[0.0]], &[&[1.0]]);
        assert!((m.density(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        let twin = model(&[0.5, 0.5], &[&[0.0], &[0.0]], &[&[1.0], &[1.0]]);
        assert!((twin.density(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn density_matches_naive_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = model(
            &[0.3, 0.7],
            &[&[0.5, -1.0], &[-0.2, 0.8]],
            &[&[0.6, 1.3], &[2.0, 0.4]],
        );
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let mut naive = 0.0;
            for k in 0..2 {
                let mut p = m.weights[k];
                for j in 0..2 {
                    let v = m.variances.get(k, j);
                    let d = x[j] - m.means.get(k, j);
                    p *= (-d * d / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                }
                naive += p;
            }
            assert!((m.density(&x).unwrap() - naive).abs() < 1e-10);
        }
    }

    #[test]
    fn hard_assign_ties_and_centers() {
        let tie = model(&[0.5, 0.5], &[&[-1.0], &[1.0]], &[&[1.0], &[1.0]]);
        assert_eq!(tie.hard_assign(&[0.0]).unwrap(), 0);
        let one: &[f64] = &[1.0];
        let sep = model(&[0.25; 4], &[&[0.0], &[10.0], &[20.0], &[30.0]], &[one; 4]);
        assert_eq!(sep.hard_assign(&[20.0]).unwrap(), 2);
        assert!(matches!(sep.hard_assign(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mu = Matrix::from_rows([[0.0]]).unwrap();
        assert!(GmmModel::new(vec![0.5], mu.clone(), mu.map(|_| 1.0)).is_err());
        assert!(GmmModel::new(vec![1.0], mu.clone(), mu.map(|_| 0.0)).is_err());
    }

    #[test]
    fn far_point_underflows_to_zero() {
        let m = model(&[1.0], &[&[0.0, 0.0]], &[&[1.0, 1.0]]);
        assert_eq!(m.density(&[100.0, 100.0]).unwrap(), 0.0);
    }
}
