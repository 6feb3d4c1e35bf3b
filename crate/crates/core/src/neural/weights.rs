use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Fully connected layer computing `y = xᵀW + b`; `weights` is `inputs × outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(inputs, outputs),
            bias: vec![T::zero(); outputs],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weights.as_mut_slice() {
            *w = T::lit(rng.random_range(-limit..=limit));
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (yj, &w) in y.iter_mut().zip(self.weights.row(i)) {
                *yj += xi * w;
            }
        }
        y
    }

    /// `W·g`: propagates an output gradient back to the layer input.
    pub(crate) fn backward_input(&self, grad_out: &[T]) -> Vec<T> {
        (0..self.inputs())
            .map(|i| {
                self.weights
                    .row(i)
                    .iter()
                    .zip(grad_out)
                    .map(|(&w, &g)| w * g)
                    .sum()
            })
            .collect()
    }

    /// Accumulates `x gᵀ` into the weight gradient and `g` into the bias gradient.
    pub(crate) fn accumulate(&mut self, x: &[T], grad_out: &[T]) {
        for (i, &xi) in x.iter().enumerate() {
            for (w, &g) in self.weights.row_mut(i).iter_mut().zip(grad_out) {
                *w += xi * g;
            }
        }
        for (b, &g) in self.bias.iter_mut().zip(grad_out) {
            *b += g;
        }
    }
}

/// Ordered dense layers: the unit exchanged between clients and the server.
///
/// The flat form lists layers in order; within a layer, the weight matrix row-major
/// followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetworkWeights<T> {
    pub layers: Vec<Dense<T>>,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"FMDW";
const SNAPSHOT_VERSION: u32 = 1;

impl<T: Scalar> NetworkWeights<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Self {
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    /// `(inputs, outputs)` of each layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs(), l.outputs())).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shapes() == other.shapes()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn from_flat(shapes: &[(usize, usize)], flat: &[T]) -> Result<Self> {
        let expected: usize = shapes.iter().map(|&(i, o)| i * o + o).sum();
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: flat.len(),
            });
        }
        let mut pos = 0;
        let layers = shapes
            .iter()
            .map(|&(i, o)| {
                let w = Matrix::from_vec(i, o, flat[pos..pos + i * o].to_vec()).expect("sized");
                pos += i * o;
                let b = flat[pos..pos + o].to_vec();
                pos += o;
                Dense { weights: w, bias: b }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    /// Elementwise combination of two equally shaped networks.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch);
        }
        let mut out = self.clone();
        for (a, &b) in out.params_mut().zip(other.params()) {
            *a = f(*a, b);
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: T) {
        self.params_mut().for_each(|p| *p *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// Sum of all parameters, as a cheap fingerprint for round logs.
    pub fn checksum(&self) -> f64 {
        self.params().map(|p| p.as_f64()).sum()
    }

    /// Binary snapshot: magic `FMDW`, version, layer count and shapes as little-endian
    /// `u32`, then every parameter in flat order as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for (i, o) in self.shapes() {
            w.write_all(&(i as u32).to_le_bytes())?;
            w.write_all(&(o as u32).to_le_bytes())?;
        }
        for p in self.params() {
            w.write_all(&p.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |what: &str| Error::Snapshot(what.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u32 = |r: &mut R| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            Ok(u32::from_le_bytes(b))
        };
        if read_u32(&mut r)? != SNAPSHOT_VERSION {
            return Err(bad("unsupported version"));
        }
        let n = read_u32(&mut r)? as usize;
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let i = read_u32(&mut r)? as usize;
            let o = read_u32(&mut r)? as usize;
            shapes.push((i, o));
        }
        let count: usize = shapes.iter().map(|&(i, o)| i * o + o).sum();
        let mut flat = Vec::with_capacity(count);
        let mut b = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut b).map_err(|_| bad("truncated parameters"))?;
            let v = f64::from_le_bytes(b);
            flat.push(T::from_f64(v).ok_or_else(|| bad("unrepresentable value"))?);
        }
        if r.read(&mut b).map_err(|_| bad("read error"))? != 0 {
            return Err(bad("trailing bytes"));
        }
        Self::from_flat(&shapes, &flat)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}
