//! Dense autoencoders (plain and variational) over histogram vectors, RMSprop
//! training with exact backpropagation, and RBM pretraining.

mod autoencoder;
mod optim;
mod rbm;
mod weights;

pub use autoencoder::{
    kl_to_standard_normal, rmse, vae_loss, Architecture, Autoencoder, ForwardOutput, ModelKind,
};
pub use optim::{train_epoch, Rmsprop};
pub use rbm::{init_from_rbms, initial_model, train_cd1, RbmConfig, RbmModel, RbmStack, RbmTraining};
pub use weights::{Dense, NetworkWeights};
