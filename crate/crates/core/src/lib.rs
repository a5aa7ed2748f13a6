//! Multi-conditioned encoder-decoder GAN for garment transfer, built on a
//! small reverse-mode autodiff engine.

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod image_io;
pub mod losses;
pub mod metrics;
mod kernels;
pub mod net;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::{Scalar, Tensor};
