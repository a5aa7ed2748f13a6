//! Command-line driver for the garment-transfer GAN: synthetic datasets,
//! per-stage training, four-stage inference and SSIM evaluation.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;
