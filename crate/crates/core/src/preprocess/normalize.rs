use serde::{Deserialize, Serialize};

use crate::dataio::Sample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NormalizationParams<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

pub fn fit_normalizer<T: Scalar>(samples: &[Sample<T>]) -> Result<NormalizationParams<T>> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let d = samples[0].dim();
    let floor = T::lit(STD_FLOOR);
    let mut mean = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    for j in 0..d {
        let col = samples
            .iter()
            .map(|s| {
                s.features.get(j).copied().ok_or(Error::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        let (m, s) = crate::scalar::mean_and_population_std(&col);
        mean.push(m);
        std.push(s.max(floor));
    }
    Ok(NormalizationParams { mean, std })
}

impl<T: Scalar> NormalizationParams<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, sample: &Sample<T>) -> Result<Sample<T>> {
        self.check(&sample.features)?;
        let features = sample
            .features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect();
        Ok(Sample::new(features, sample.label))
    }

    pub fn invert(&self, sample: &Sample<T>) -> Result<Sample<T>> {
        self.check(&sample.features)?;
        let features = sample
            .features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&z, (&m, &s))| z * s + m)
            .collect();
        Ok(Sample::new(features, sample.label))
    }

    pub fn apply_all(&self, samples: &[Sample<T>]) -> Result<Vec<Sample<T>>> {
        samples.iter().map(|s| self.apply(s)).collect()
    }
}
