use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::scalar::{squared_distance, Scalar};

pub const DEFAULT_SILHOUETTE_SUBSAMPLE: usize = 2000;

/// Mean silhouette coefficient with Euclidean distance. Points in singleton clusters
/// score 0. When `data` has more than `subsample` rows the score is computed on a
/// seeded random subset of that size.
pub fn silhouette<T: Scalar>(data: &Matrix<T>, labels: &[usize], subsample: usize, seed: u64) -> Result<T> {
    if labels.len() != data.rows() {
        return Err(Error::DimensionMismatch {
            expected: data.rows(),
            found: labels.len(),
        });
    }
    let idx: Vec<usize> = if data.rows() > subsample {
        let mut rng = seeded(seed);
        let mut v = sample_indices(&mut rng, data.rows(), subsample).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..data.rows()).collect()
    };

    // Compact cluster ids over the points actually scored.
    let mut ids = BTreeMap::new();
    for &i in &idx {
        let next = ids.len();
        ids.entry(labels[i]).or_insert(next);
    }
    if ids.len() < 2 {
        return Err(Error::TooFewClusters);
    }
    let cluster: Vec<usize> = idx.iter().map(|&i| ids[&labels[i]]).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &c in &cluster {
        sizes[c] += 1;
    }

    let scores: Vec<T> = (0..idx.len())
        .into_par_iter()
        .map(|p| {
            let own = cluster[p];
            if sizes[own] < 2 {
                return T::zero();
            }
            let mut sums = vec![T::zero(); sizes.len()];
            let xi = data.row(idx[p]);
            for (q, &c) in cluster.iter().enumerate() {
                if q != p {
                    sums[c] += squared_distance(xi, data.row(idx[q])).sqrt();
                }
            }
            let a = sums[own] / T::from_count(sizes[own] - 1);
            let b = (0..sizes.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / T::from_count(sizes[c]))
                .fold(T::infinity(), T::min);
            let denom = a.max(b);
            if denom > T::zero() {
                (b - a) / denom
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(scores.iter().copied().sum::<T>() / T::from_count(scores.len()))
}
