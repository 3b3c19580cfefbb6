pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gnn;
pub mod model;
pub mod mrf;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type DiscreteMrf = mrf::DiscreteMrf<f64>;
pub type Model = model::Model<f64>;
pub type EncoderParams = encoder::EncoderParams<f64>;
pub type GnnParams = gnn::GnnParams<f64>;
