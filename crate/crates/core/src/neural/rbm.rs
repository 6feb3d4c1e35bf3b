//! Bernoulli RBMs trained with one-step contrastive divergence, stacked greedily to
//! initialise the autoencoders.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::autoencoder::{Architecture, Autoencoder, ModelKind};
use super::weights::{Dense, NetworkWeights};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::scalar::{sigmoid, Scalar};

/// Weights `w` are `visible × hidden`; `a` are visible biases, `b` hidden biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RbmModel<T> {
    pub w: Matrix<T>,
    pub a: Vec<T>,
    pub b: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbmConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub init_std: f64,
    /// Start visible biases at `ln(p/(1−p))` of each column's data mean (clamped to
    /// [0.01, 0.99]) instead of zero.
    pub data_visible_bias: bool,
}

impl Default for RbmConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.05,
            batch_size: 16,
            init_std: 0.01,
            data_visible_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmTraining<T> {
    pub model: RbmModel<T>,
    /// Mean squared visible reconstruction error per epoch.
    pub epoch_errors: Vec<f64>,
}

impl<T: Scalar> RbmModel<T> {
    /// Weights drawn from `N(0, init_std²)`, zero biases.
    pub fn initial(visible: usize, hidden: usize, init_std: f64, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0));
        let normal = Normal::new(0.0, init_std).expect("non-negative std");
        let mut w = Matrix::zeros(visible, hidden);
        for v in w.as_mut_slice() {
            *v = T::lit(normal.sample(&mut rng));
        }
        Self {
            w,
            a: vec![T::zero(); visible],
            b: vec![T::zero(); hidden],
        }
    }

    /// The starting point of [`train_cd1`] for the same `seed`: [`RbmModel::initial`]
    /// plus the configured visible-bias start for `data`.
    pub fn initial_for(data: &Matrix<T>, hidden: usize, cfg: &RbmConfig, seed: u64) -> Self {
        let mut m = Self::initial(data.cols(), hidden, cfg.init_std, seed);
        if cfg.data_visible_bias && data.rows() > 0 {
            let n = data.rows() as f64;
            for (i, a) in m.a.iter_mut().enumerate() {
                let p = (data.iter_rows().map(|r| r[i].as_f64()).sum::<f64>() / n).clamp(0.01, 0.99);
                *a = T::lit((p / (1.0 - p)).ln());
            }
        }
        m
    }

    pub fn visible(&self) -> usize {
        self.a.len()
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    fn check(expected: usize, found: usize) -> Result<()> {
        if expected != found {
            return Err(Error::DimensionMismatch { expected, found });
        }
        Ok(())
    }

    /// `P(h_j = 1 | v) = σ(Σ_i w_ij v_i + b_j)`.
    pub fn hidden_prob(&self, v: &[T]) -> Result<Vec<T>> {
        Self::check(self.visible(), v.len())?;
        Ok(self.hidden_prob_unchecked(v))
    }

    fn hidden_prob_unchecked(&self, v: &[T]) -> Vec<T> {
        let mut act = self.b.clone();
        for (i, &vi) in v.iter().enumerate() {
            for (x, &w) in act.iter_mut().zip(self.w.row(i)) {
                *x += vi * w;
            }
        }
        act.into_iter().map(sigmoid).collect()
    }

    /// `P(v_i = 1 | h) = σ(Σ_j w_ij h_j + a_i)`.
    pub fn visible_prob(&self, h: &[T]) -> Result<Vec<T>> {
        Self::check(self.hidden(), h.len())?;
        Ok(self.visible_prob_unchecked(h))
    }

    fn visible_prob_unchecked(&self, h: &[T]) -> Vec<T> {
        (0..self.visible())
            .map(|i| {
                let act: T = self.w.row(i).iter().zip(h).map(|(&w, &hj)| w * hj).sum();
                sigmoid(act + self.a[i])
            })
            .collect()
    }

    /// `E(v, h) = −Σ_ij w_ij v_i h_j − Σ_i a_i v_i − Σ_j b_j h_j`.
    pub fn energy(&self, v: &[T], h: &[T]) -> Result<T> {
        Self::check(self.visible(), v.len())?;
        Self::check(self.hidden(), h.len())?;
        let mut e = T::zero();
        for (i, &vi) in v.iter().enumerate() {
            let row: T = self.w.row(i).iter().zip(h).map(|(&w, &hj)| w * hj).sum();
            e -= vi * row + self.a[i] * vi;
        }
        e -= self.b.iter().zip(h).map(|(&b, &hj)| b * hj).sum::<T>();
        Ok(e)
    }
}

/// CD-1 training on rows of `data`, which must lie in `[0, 1]`.
///
/// Per sample: `h⁰ ~ P(h | v⁰)`, `v¹ = P(v | h⁰)`; the update is
/// `ΔW ∝ v⁰ P(h | v⁰)ᵀ − v¹ P(h | v¹)ᵀ`, averaged over each mini-batch.
pub fn train_cd1<T: Scalar>(data: &Matrix<T>, hidden: usize, cfg: &RbmConfig, seed: u64) -> Result<RbmTraining<T>> {
    if data.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    for (r, row) in data.iter_rows().enumerate() {
        if let Some(c) = row.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::OutOfUnitRange { row: r, col: c });
        }
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    let nv = data.cols();
    let mut model = RbmModel::initial_for(data, hidden, cfg, seed);
    let mut rng = seeded(derive_seed(seed, 1));
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut epoch_errors = Vec::with_capacity(cfg.epochs);
    let lr = T::lit(cfg.lr);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut err = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut dw = Matrix::<T>::zeros(nv, hidden);
            let mut da = vec![T::zero(); nv];
            let mut db = vec![T::zero(); hidden];
            for &r in batch {
                let v0 = data.row(r);
                let ph0 = model.hidden_prob_unchecked(v0);
                let h0: Vec<T> = ph0
                    .iter()
                    .map(|&p| if rng.random::<f64>() < p.as_f64() { T::one() } else { T::zero() })
                    .collect();
                let v1 = model.visible_prob_unchecked(&h0);
                let ph1 = model.hidden_prob_unchecked(&v1);
                for i in 0..nv {
                    for j in 0..hidden {
                        let delta = v0[i] * ph0[j] - v1[i] * ph1[j];
                        dw.set(i, j, dw.get(i, j) + delta);
                    }
                    da[i] += v0[i] - v1[i];
                    let d = (v0[i] - v1[i]).as_f64();
                    err += d * d / nv as f64;
                }
                for j in 0..hidden {
                    db[j] += ph0[j] - ph1[j];
                }
            }
            let step = lr / T::from_count(batch.len());
            for (w, &d) in model.w.as_mut_slice().iter_mut().zip(dw.as_slice()) {
                *w += step * d;
            }
            for (a, &d) in model.a.iter_mut().zip(&da) {
                *a += step * d;
            }
            for (b, &d) in model.b.iter_mut().zip(&db) {
                *b += step * d;
            }
        }
        epoch_errors.push(err / data.rows() as f64);
    }
    Ok(RbmTraining { model, epoch_errors })
}

/// Two greedily trained RBMs: `input → hidden` on the data, `hidden → latent` on the
/// first RBM's hidden probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmStack<T> {
    pub first: RbmTraining<T>,
    pub second: RbmTraining<T>,
}

impl<T: Scalar> RbmStack<T> {
    pub fn train(data: &Matrix<T>, arch: Architecture, cfg: &RbmConfig, seed: u64) -> Result<Self> {
        if data.cols() != arch.input {
            return Err(Error::DimensionMismatch {
                expected: arch.input,
                found: data.cols(),
            });
        }
        let first = train_cd1(data, arch.hidden, cfg, derive_seed(seed, 11))?;
        let hidden = Matrix::from_rows(
            data.iter_rows()
                .map(|r| first.model.hidden_prob_unchecked(r)),
        )?;
        let second = train_cd1(&hidden, arch.latent, cfg, derive_seed(seed, 12))?;
        Ok(Self { first, second })
    }

    /// Unrolls the stack into autoencoder weights: encoder layers take `(W, b)` of
    /// each RBM, decoder layers take `(Wᵀ, a)` in mirrored order. The VAE's
    /// log-variance head starts at zero.
    pub fn unroll(&self, kind: ModelKind) -> NetworkWeights<T> {
        let r1 = &self.first.model;
        let r2 = &self.second.model;
        let enc = |r: &RbmModel<T>| Dense {
            weights: r.w.clone(),
            bias: r.b.clone(),
        };
        let dec = |r: &RbmModel<T>| Dense {
            weights: r.w.transpose(),
            bias: r.a.clone(),
        };
        let mut layers = vec![enc(r1), enc(r2)];
        if kind == ModelKind::Vae {
            layers.push(Dense::zeros(r2.visible(), r2.hidden()));
        }
        layers.push(dec(r2));
        layers.push(dec(r1));
        NetworkWeights::new(layers)
    }
}

/// RBM-pretrained initial weights for an autoencoder over `data`.
pub fn init_from_rbms<T: Scalar>(
    data: &Matrix<T>,
    kind: ModelKind,
    arch: Architecture,
    cfg: &RbmConfig,
    seed: u64,
) -> Result<NetworkWeights<T>> {
    Ok(RbmStack::train(data, arch, cfg, seed)?.unroll(kind))
}

/// Builds an autoencoder from RBM pretraining or, when disabled, Glorot-uniform init.
pub fn initial_model<T: Scalar>(
    data: &Matrix<T>,
    kind: ModelKind,
    use_rbm: bool,
    cfg: &RbmConfig,
    seed: u64,
) -> Result<Autoencoder<T>> {
    let arch = Architecture::for_input(data.cols());
    if use_rbm {
        Autoencoder::from_weights(kind, init_from_rbms(data, kind, arch, cfg, seed)?)
    } else {
        Ok(Autoencoder::random(kind, arch, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbm(seed: u64) -> RbmModel<f64> {
        let mut m = RbmModel::initial(3, 2, 0.5, seed);
        m.a = vec![0.1, -0.2, 0.3];
        m.b = vec![-0.4, 0.5];
        m
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let m = RbmModel::<f64>::initial(3, 2, 0.0, 0);
        assert_eq!(m.hidden_prob(&[1.0, 0.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(m.visible_prob(&[1.0, 1.0]).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn large_bias_saturates() {
        let mut m = RbmModel::<f64>::initial(2, 1, 0.0, 0);
        m.b[0] = 50.0;
        // 1 - 1e-20 rounds to 1 in f64, so compare the complement.
        assert!(1.0 - m.hidden_prob(&[0.0, 0.0]).unwrap()[0] < 1e-20);
    }

    #[test]
    fn energy_single_term_and_zero() {
        let mut m = RbmModel::<f64>::initial(1, 1, 0.0, 0);
        m.w.set(0, 0, 1.0);
        assert_eq!(m.energy(&[1.0], &[1.0]).unwrap(), -1.0);
        assert_eq!(rbm(1).energy(&[0.0; 3], &[0.0; 2]).unwrap(), 0.0);
        assert!(m.energy(&[1.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn probabilities_and_energy_match_direct_formulas() {
        let m = rbm(4);
        let v = [0.3, 0.9, 0.1];
        let h = [0.7, 0.2];
        let ph = m.hidden_prob(&v).unwrap();
        let pv = m.visible_prob(&h).unwrap();
        let mut e = 0.0;
        for j in 0..2 {
            let act: f64 = (0..3).map(|i| m.w.get(i, j) * v[i]).sum::<f64>() + m.b[j];
            assert!((ph[j] - 1.0 / (1.0 + (-act).exp())).abs() < 1e-12);
        }
        for i in 0..3 {
            let act: f64 = (0..2).map(|j| m.w.get(i, j) * h[j]).sum::<f64>() + m.a[i];
            assert!((pv[i] - 1.0 / (1.0 + (-act).exp())).abs() < 1e-12);
            for j in 0..2 {
                e -= m.w.get(i, j) * v[i] * h[j];
            }
            e -= m.a[i] * v[i];
        }
        for j in 0..2 {
            e -= m.b[j] * h[j];
        }
        assert!((m.energy(&v, &h).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let data = Matrix::from_rows([[0.1, 0.9], [0.5, 0.5], [1.0, 0.0]]).unwrap();
        let cfg = RbmConfig { lr: 0.0, ..RbmConfig::default() };
        let t = train_cd1(&data, 3, &cfg, 21).unwrap();
        assert_eq!(t.model, RbmModel::initial_for(&data, 3, &cfg, 21));
        let zero_bias = RbmConfig { data_visible_bias: false, ..cfg };
        let t = train_cd1(&data, 3, &zero_bias, 21).unwrap();
        assert_eq!(t.model, RbmModel::initial(2, 3, cfg.init_std, 21));
    }

    #[test]
    fn visible_bias_starts_at_data_logit() {
        let data = Matrix::from_rows([[0.5, 0.0, 0.75], [0.5, 0.0, 0.25]]).unwrap();
        let m = RbmModel::<f64>::initial_for(&data, 2, &RbmConfig::default(), 0);
        assert_eq!(m.a[0], 0.0);
        assert!((m.a[1] - (0.01f64 / 0.99).ln()).abs() < 1e-12);
        assert_eq!(m.b, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range_data() {
        let data = Matrix::from_rows([[0.1, 1.5]]).unwrap();
        assert!(matches!(
            train_cd1(&data, 2, &RbmConfig::default(), 0),
            Err(Error::OutOfUnitRange { row: 0, col: 1 })
        ));
    }

    #[test]
    fn identical_rows_are_learned() {
        let row = [0.9, 0.1, 0.9, 0.1, 0.9, 0.1];
        let data = Matrix::from_rows(std::iter::repeat_n(row, 40)).unwrap();
        let cfg = RbmConfig {
            epochs: 30,
            data_visible_bias: false,
            ..RbmConfig::default()
        };
        let t = train_cd1(&data, 3, &cfg, 5).unwrap();
        let first = t.epoch_errors[0];
        let last = *t.epoch_errors.last().unwrap();
        assert!(last < first, "{first} -> {last}");
        // Visible biases move toward the logit of the pattern: positive where v = 0.9.
        for (i, &a) in t.model.a.iter().enumerate() {
            assert_eq!(a > 0.0, row[i] > 0.5, "bias {i} = {a}");
        }
        assert_eq!(t.model, train_cd1(&data, 3, &cfg, 5).unwrap().model);
    }

    #[test]
    fn unrolling_copies_rbm_weights() {
        let data = Matrix::from_rows((0..12).map(|i| {
            let x = (i % 4) as f64 / 4.0;
            [x, 1.0 - x, 0.5, x * x, 0.25, 1.0]
        }))
        .unwrap();
        let arch = Architecture::for_input(6);
        let stack = RbmStack::train(&data, arch, &RbmConfig::default(), 3).unwrap();
        let vae = stack.unroll(ModelKind::Vae);
        assert_eq!(vae.layers[0].weights, stack.first.model.w);
        assert_eq!(vae.layers[0].bias, stack.first.model.b);
        assert_eq!(vae.layers[1].weights, stack.second.model.w);
        assert!(vae.layers[2].weights.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(vae.layers[4].weights, stack.first.model.w.transpose());
        assert_eq!(vae.layers[4].bias, stack.first.model.a);
        assert_eq!(vae.shapes(), arch.layer_shapes(ModelKind::Vae));
        let ae = stack.unroll(ModelKind::Ae);
        assert_eq!(ae.shapes(), arch.layer_shapes(ModelKind::Ae));
        assert_eq!(ae.layers[2].weights, stack.second.model.w.transpose());
    }
}
