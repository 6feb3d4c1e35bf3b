//! Shapiro-Wilk W test using Royston's AS R94 coefficient and p-value approximations.

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

/// Largest sample the AS R94 approximation is validated for.
pub const DEFAULT_MAX_N: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub w_statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    /// Number of features whose results were combined (1 for a univariate test).
    pub features_tested: usize,
}

fn poly(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Univariate test. Inputs longer than `max_n` are tested on a seeded random subsample.
pub fn shapiro_wilk<T: Scalar>(values: &[T], max_n: usize, seed: u64) -> Result<NormalityReport> {
    let mut x: Vec<f64> = if values.len() > max_n {
        let mut rng = seeded(seed);
        sample_indices(&mut rng, values.len(), max_n)
            .into_iter()
            .map(|i| values[i].as_f64())
            .collect()
    } else {
        values.iter().map(|v| v.as_f64()).collect()
    };
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values", "non-finite entry"));
    }
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let range = x[n - 1] - x[0];
    if range <= 0.0 || range < 1e-19 * x[n - 1].abs() {
        return Err(Error::ZeroVariance);
    }

    let a = coefficients(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let ssx: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let ssa: f64 = a.iter().map(|v| v * v).sum();
    let w = ((num * num) / (ssa * ssx)).min(1.0);
    Ok(NormalityReport {
        w_statistic: w,
        p_value: p_value(w, n),
        sample_size: n,
        features_tested: 1,
    })
}

/// Full antisymmetric coefficient vector for ordered data, length `n`.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut upper = vec![0.0; half];
    if n == 3 {
        upper[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let an25 = n as f64 + 0.25;
        // Expected normal order statistics of the lower half (negative values).
        let m: Vec<f64> = (1..=half)
            .map(|i| std.inverse_cdf((i as f64 - 0.375) / an25))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / (n as f64).sqrt();
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            upper[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        upper[0] = a1;
        for i in first..half {
            upper[i] = -m[i] / fac;
        }
    }
    let mut a = vec![0.0; n];
    for (i, &c) in upper.iter().enumerate() {
        a[i] = -c;
        a[n - 1 - i] = c;
    }
    a
}

fn p_value(w: f64, n: usize) -> f64 {
    if n == 3 {
        const SIX_OVER_PI: f64 = 1.909_859_317_102_744;
        const PI_OVER_THREE: f64 = std::f64::consts::FRAC_PI_3;
        return (SIX_OVER_PI * (w.sqrt().asin() - PI_OVER_THREE)).clamp(0.0, 1.0);
    }
    let w1 = 1.0 - w;
    if w1 <= 0.0 {
        return 1.0;
    }
    let mut y = w1.ln();
    let an = n as f64;
    let (m, s) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return 1e-99;
        }
        y = -(gamma - y).ln();
        (
            poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an),
            poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp(),
        )
    } else {
        let ln_n = an.ln();
        (
            poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n),
            poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp(),
        )
    };
    let dist = Normal::new(m, s).expect("positive scale");
    dist.sf(y).clamp(0.0, 1.0)
}

/// Tests each feature column separately and reports the median W and the median
/// p-value. Constant columns are skipped; it is an error if every column is constant.
pub fn shapiro_wilk_columns<T: Scalar>(data: &Matrix<T>, max_n: usize, seed: u64) -> Result<NormalityReport> {
    let mut ws = Vec::new();
    let mut ps = Vec::new();
    let mut sample_size = 0;
    for j in 0..data.cols() {
        let col: Vec<T> = data.iter_rows().map(|r| r[j]).collect();
        match shapiro_wilk(&col, max_n, derive_seed(seed, j as u64)) {
            Ok(r) => {
                ws.push(r.w_statistic);
                ps.push(r.p_value);
                sample_size = r.sample_size;
            }
            Err(Error::ZeroVariance) => continue,
            Err(e) => return Err(e),
        }
    }
    if ws.is_empty() {
        return Err(Error::ZeroVariance);
    }
    Ok(NormalityReport {
        w_statistic: median(&mut ws),
        p_value: median(&mut ps),
        sample_size,
        features_tested: ws.len(),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
