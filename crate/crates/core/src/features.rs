//! Histogram featurization: entry `g` of a sample's histogram is the fraction of its
//! features that fall inside cluster `g`'s band `[center - std, center + std]`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gmm::GmmModel;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct HistogramVector<T>(pub Vec<T>);

impl<T> HistogramVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Band membership counts divided by the feature count. Bounds are inclusive; a zero
/// std collapses the band to the center value.
pub fn histogram_one<T: Scalar>(x: &[T], model: &GmmModel<T>) -> Result<HistogramVector<T>> {
    model.check_dim(x)?;
    let d = T::from_count(x.len());
    let centers = model.cluster_centers();
    let h = (0..model.k())
        .map(|g| {
            let c = centers.row(g);
            let s = model.cluster_stds.row(g);
            let inside = x
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v >= c[j] - s[j] && v <= c[j] + s[j])
                .count();
            T::from_count(inside) / d
        })
        .collect();
    Ok(HistogramVector(h))
}

/// Row-wise [`histogram_one`]: an `n × K` matrix.
pub fn histogram_batch<T: Scalar>(data: &Matrix<T>, model: &GmmModel<T>) -> Result<Matrix<T>> {
    let mut out = Matrix::zeros(data.rows(), model.k());
    for (i, row) in data.iter_rows().enumerate() {
        out.row_mut(i).copy_from_slice(&histogram_one(row, model)?.0);
    }
    Ok(out)
}

/// Writes a histogram matrix as CSV with columns `h0..h{K-1}`.
pub fn write_histograms_csv<T: Scalar, W: std::io::Write>(h: &Matrix<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..h.cols()).map(|k| format!("h{k}")))?;
    for row in h.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| crate::Error::io("<csv writer>", e))?;
    Ok(())
}
