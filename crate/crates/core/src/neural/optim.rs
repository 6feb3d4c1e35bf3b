use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::autoencoder::Autoencoder;
use super::weights::NetworkWeights;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::scalar::Scalar;

/// RMSprop: `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − ν·g / sqrt(acc + ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Rmsprop<T> {
    pub lr: T,
    pub rho: T,
    pub eps: T,
    pub accumulator: Vec<T>,
}

impl<T: Scalar> Rmsprop<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            rho: T::lit(0.9),
            eps: T::lit(1e-8),
            accumulator: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut NetworkWeights<T>, grad: &NetworkWeights<T>) -> Result<()> {
        if !params.same_shape(grad) {
            return Err(Error::ShapeMismatch);
        }
        let n = params.num_params();
        if self.accumulator.len() != n {
            self.accumulator = vec![T::zero(); n];
        }
        let one = T::one();
        for ((p, &g), acc) in params
            .params_mut()
            .zip(grad.params())
            .zip(self.accumulator.iter_mut())
        {
            *acc = self.rho * *acc + (one - self.rho) * g * g;
            *p -= self.lr * g / (*acc + self.eps).sqrt();
        }
        Ok(())
    }
}

/// One pass over `data` in seeded-shuffled mini-batches. Each step uses the mean
/// gradient of the batch; VAE noise is drawn from the same seeded stream. Returns the
/// mean per-sample loss observed during the epoch.
pub fn train_epoch<T: Scalar>(
    model: &mut Autoencoder<T>,
    data: &Matrix<T>,
    opt: &mut Rmsprop<T>,
    batch_size: usize,
    seed: u64,
) -> Result<T> {
    if data.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    order.shuffle(&mut rng);
    let latent = model.latent_dim();
    let mut total = T::zero();
    let mut noise = vec![T::zero(); latent];
    for batch in order.chunks(batch_size) {
        let w = T::one() / T::from_count(batch.len());
        let mut grad = model.weights.zeros_like();
        for &i in batch {
            for e in noise.iter_mut() {
                let v: f64 = StandardNormal.sample(&mut rng);
                *e = T::lit(v);
            }
            total += model.accumulate_gradient(data.row(i), Some(&noise), w, &mut grad)?;
        }
        opt.step(&mut model.weights, &grad)?;
    }
    Ok(total / T::from_count(data.rows()))
}
