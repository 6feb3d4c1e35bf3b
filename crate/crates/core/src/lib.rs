//! Unsupervised federated misbehavior detection for vehicular networks.
//!
//! Each vehicle clusters its benign traffic with a diagonal Gaussian mixture, turns
//! samples into cluster-membership histograms, and trains an RBM-initialised variational
//! autoencoder on them together with other vehicles that chose the same number of
//! clusters (Fed+ aggregation). At detection time the mixture likelihood gates obvious
//! cases and the autoencoder's reconstruction error decides the rest.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64` aliases
//! below name the instantiations the pipeline and CLI use.

pub mod dataio;
pub mod detection;
pub mod error;
pub mod features;
pub mod federation;
pub mod gmm;
pub mod matrix;
pub mod neural;
pub mod preprocess;
pub mod rng;
pub mod scenario;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type SampleF64 = dataio::Sample<f64>;
pub type ClientDatasetF64 = dataio::ClientDataset<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type GmmModelF64 = gmm::GmmModel<f64>;
pub type HistogramVectorF64 = features::HistogramVector<f64>;
pub type NetworkWeightsF64 = neural::NetworkWeights<f64>;
pub type AutoencoderF64 = neural::Autoencoder<f64>;
pub type RbmStackF64 = neural::RbmStack<f64>;
pub type FederationResultF64 = federation::FederationResult<f64>;
