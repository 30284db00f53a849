//! Function autoencoder: resolution-tolerant encoder, continuous coordinate
//! decoder, hard physics constraints, and the composite reconstruction +
//! PDE-residual training loss.

pub mod error;
pub mod io;
pub mod loss;
pub mod model;
pub mod patch;
pub mod physics;
pub mod sample;
pub mod train;

pub use error::{FaeError, Result};
pub use io::{load_dataset, save_dataset, Dataset};
pub use model::{
    decode_at, encode, encode_batch, init_fae_params, Constraint, CoordEmbedKind, DecoderConfig,
    EncoderConfig, FaeConfig, LatentCode,
};
pub use sample::{downsample, random_downsample, FunctionSample};
