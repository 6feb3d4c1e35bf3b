use serde::{Deserialize, Serialize};

use super::weights::{Dense, NetworkWeights};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Vae,
    Ae,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Vae => "VAE",
            ModelKind::Ae => "AE",
        })
    }
}

/// Layer widths: `input → hidden → latent → hidden → input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Architecture {
    /// Hidden layer half the input width, latent a third, both rounded up.
    pub fn for_input(k: usize) -> Self {
        Self {
            input: k,
            hidden: k.div_ceil(2),
            latent: k.div_ceil(3),
        }
    }

    pub fn layer_shapes(&self, kind: ModelKind) -> Vec<(usize, usize)> {
        let Self { input, hidden, latent } = *self;
        match kind {
            ModelKind::Vae => vec![
                (input, hidden),
                (hidden, latent),
                (hidden, latent),
                (latent, hidden),
                (hidden, input),
            ],
            ModelKind::Ae => vec![(input, hidden), (hidden, latent), (latent, hidden), (hidden, input)],
        }
    }
}

/// Dense autoencoder over histogram vectors.
///
/// VAE layers: encoder, mean head, log-variance head, two decoder layers. AE layers:
/// two encoder layers, two decoder layers. Hidden layers use ReLU, the latent code is
/// linear and the output is a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Autoencoder<T> {
    pub kind: ModelKind,
    pub arch: Architecture,
    pub weights: NetworkWeights<T>,
}

/// Output of a forward pass. For the plain AE `z_mu` is the latent code and
/// `z_logvar` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub reconstruction: Vec<T>,
    pub z_mu: Vec<T>,
    pub z_logvar: Vec<T>,
}

struct Trace<T> {
    pre_hidden: Vec<T>,
    hidden: Vec<T>,
    z_mu: Vec<T>,
    z_logvar: Vec<T>,
    noise: Vec<T>,
    z: Vec<T>,
    pre_dec: Vec<T>,
    dec: Vec<T>,
    out: Vec<T>,
}

fn relu<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.max(T::zero())).collect()
}

pub fn rmse<T: Scalar>(a: &[T], b: &[T]) -> T {
    let ss: T = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum();
    (ss / T::from_count(a.len())).sqrt()
}

/// KL divergence of `N(μ, exp(logvar))` from the standard normal.
pub fn kl_to_standard_normal<T: Scalar>(z_mu: &[T], z_logvar: &[T]) -> T {
    let half = T::lit(0.5);
    z_mu.iter()
        .zip(z_logvar)
        .map(|(&m, &lv)| half * (m * m + lv.exp() - lv - T::one()))
        .sum()
}

/// RMSE reconstruction term plus the KL term (which is zero for an empty `z_logvar`,
/// i.e. the plain AE).
pub fn vae_loss<T: Scalar>(h: &[T], reconstruction: &[T], z_mu: &[T], z_logvar: &[T]) -> Result<T> {
    if h.len() != reconstruction.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            found: reconstruction.len(),
        });
    }
    if z_logvar.is_empty() {
        return Ok(rmse(h, reconstruction));
    }
    if z_mu.len() != z_logvar.len() {
        return Err(Error::DimensionMismatch {
            expected: z_mu.len(),
            found: z_logvar.len(),
        });
    }
    Ok(rmse(h, reconstruction) + kl_to_standard_normal(z_mu, z_logvar))
}

impl<T: Scalar> Autoencoder<T> {
    pub fn from_weights(kind: ModelKind, weights: NetworkWeights<T>) -> Result<Self> {
        let shapes = weights.shapes();
        let (input, hidden) = *shapes.first().ok_or(Error::ShapeMismatch)?;
        let latent = shapes.get(1).ok_or(Error::ShapeMismatch)?.1;
        let arch = Architecture { input, hidden, latent };
        if shapes != arch.layer_shapes(kind) {
            return Err(Error::ShapeMismatch);
        }
        Ok(Self { kind, arch, weights })
    }

    /// Glorot-uniform initialization with zero biases.
    pub fn random(kind: ModelKind, arch: Architecture, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let layers = arch
            .layer_shapes(kind)
            .into_iter()
            .map(|(i, o)| Dense::glorot(i, o, &mut rng))
            .collect();
        Self {
            kind,
            arch,
            weights: NetworkWeights::new(layers),
        }
    }

    pub fn zeros(kind: ModelKind, arch: Architecture) -> Self {
        let layers = arch
            .layer_shapes(kind)
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Self {
            kind,
            arch,
            weights: NetworkWeights::new(layers),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent
    }

    fn trace(&self, h: &[T], noise: Option<&[T]>) -> Result<Trace<T>> {
        if h.len() != self.arch.input {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input,
                found: h.len(),
            });
        }
        let latent = self.arch.latent;
        let noise = match noise {
            Some(n) if n.len() != latent => {
                return Err(Error::DimensionMismatch {
                    expected: latent,
                    found: n.len(),
                })
            }
            Some(n) if self.kind == ModelKind::Vae => n.to_vec(),
            _ => vec![T::zero(); latent],
        };
        let l = &self.weights.layers;
        let pre_hidden = l[0].forward(h);
        let hidden = relu(&pre_hidden);
        let (z_mu, z_logvar, z, dec_at) = match self.kind {
            ModelKind::Vae => {
                let mu = l[1].forward(&hidden);
                let lv = l[2].forward(&hidden);
                let half = T::lit(0.5);
                let z = mu
                    .iter()
                    .zip(&lv)
                    .zip(&noise)
                    .map(|((&m, &v), &e)| m + (half * v).exp() * e)
                    .collect();
                (mu, lv, z, 3)
            }
            ModelKind::Ae => {
                let code = l[1].forward(&hidden);
                (code.clone(), Vec::new(), code, 2)
            }
        };
        let pre_dec = l[dec_at].forward(&z);
        let dec = relu(&pre_dec);
        let out = l[dec_at + 1].forward(&dec).into_iter().map(sigmoid).collect();
        Ok(Trace {
            pre_hidden,
            hidden,
            z_mu,
            z_logvar,
            noise,
            z,
            pre_dec,
            dec,
            out,
        })
    }

    /// Forward pass. `noise` is the unit-normal draw of the reparameterization
    /// `z = μ + exp(logvar / 2) ⊙ ε`; `None` means ε = 0 (posterior mean). Ignored for AE.
    pub fn forward(&self, h: &[T], noise: Option<&[T]>) -> Result<ForwardOutput<T>> {
        let t = self.trace(h, noise)?;
        Ok(ForwardOutput {
            reconstruction: t.out,
            z_mu: t.z_mu,
            z_logvar: t.z_logvar,
        })
    }

    /// RMSE between `h` and its deterministic reconstruction.
    pub fn reconstruction_error(&self, h: &[T]) -> Result<T> {
        let out = self.forward(h, None)?;
        Ok(rmse(h, &out.reconstruction))
    }

    pub fn loss(&self, h: &[T], noise: Option<&[T]>) -> Result<T> {
        let o = self.forward(h, noise)?;
        vae_loss(h, &o.reconstruction, &o.z_mu, &o.z_logvar)
    }

    /// Per-sample loss and its exact gradient, accumulated (scaled by `weight`) into `grad`.
    pub fn accumulate_gradient(
        &self,
        h: &[T],
        noise: Option<&[T]>,
        weight: T,
        grad: &mut NetworkWeights<T>,
    ) -> Result<T> {
        if !grad.same_shape(&self.weights) {
            return Err(Error::ShapeMismatch);
        }
        let t = self.trace(h, noise)?;
        let k = T::from_count(h.len());
        let err = rmse(h, &t.out);
        let mut loss = err;

        // d(rmse)/d(out_j) = (out_j - h_j) / (K · rmse), through the sigmoid.
        let d_out: Vec<T> = if err > T::zero() {
            t.out
                .iter()
                .zip(h)
                .map(|(&o, &y)| weight * (o - y) / (k * err) * o * (T::one() - o))
                .collect()
        } else {
            vec![T::zero(); h.len()]
        };
        let l = &self.weights.layers;
        let dec_at = match self.kind {
            ModelKind::Vae => 3,
            ModelKind::Ae => 2,
        };
        grad.layers[dec_at + 1].accumulate(&t.dec, &d_out);
        let d_dec = relu_backward(&l[dec_at + 1].backward_input(&d_out), &t.pre_dec);
        grad.layers[dec_at].accumulate(&t.z, &d_dec);
        let d_z = l[dec_at].backward_input(&d_dec);

        let d_hidden = match self.kind {
            ModelKind::Vae => {
                loss += kl_to_standard_normal(&t.z_mu, &t.z_logvar);
                let half = T::lit(0.5);
                let d_mu: Vec<T> = d_z
                    .iter()
                    .zip(&t.z_mu)
                    .map(|(&g, &m)| g + weight * m)
                    .collect();
                let d_lv: Vec<T> = d_z
                    .iter()
                    .zip(&t.z_logvar)
                    .zip(&t.noise)
                    .map(|((&g, &lv), &e)| {
                        g * half * (half * lv).exp() * e + weight * half * (lv.exp() - T::one())
                    })
                    .collect();
                grad.layers[1].accumulate(&t.hidden, &d_mu);
                grad.layers[2].accumulate(&t.hidden, &d_lv);
                let a = l[1].backward_input(&d_mu);
                let b = l[2].backward_input(&d_lv);
                a.iter().zip(&b).map(|(&x, &y)| x + y).collect::<Vec<T>>()
            }
            ModelKind::Ae => {
                grad.layers[1].accumulate(&t.hidden, &d_z);
                l[1].backward_input(&d_z)
            }
        };
        let d_pre = relu_backward(&d_hidden, &t.pre_hidden);
        grad.layers[0].accumulate(h, &d_pre);
        Ok(loss)
    }

    /// Loss and gradient for a single sample.
    pub fn loss_and_gradient(&self, h: &[T], noise: Option<&[T]>) -> Result<(T, NetworkWeights<T>)> {
        let mut g = self.weights.zeros_like();
        let loss = self.accumulate_gradient(h, noise, T::one(), &mut g)?;
        Ok((loss, g))
    }
}

fn relu_backward<T: Scalar>(grad: &[T], pre: &[T]) -> Vec<T> {
    grad.iter()
        .zip(pre)
        .map(|(&g, &p)| if p > T::zero() { g } else { T::zero() })
        .collect()
}
