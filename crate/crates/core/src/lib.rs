//! Viewport prediction for point-cloud video.
//!
//! The crate is organised along the processing chain:
//!
//! - [`cloud`]: frames, PLY I/O, sequence-stable tiling, exact KNN
//! - [`sampling`]: uniform-random sampling (URS), baseline samplers, DaCVV/IFMI
//! - [`autodiff`]: tensors, a reverse-mode tape, gradient checking, Adam
//! - [`saliency`]: spatial (LDC) and temporal (TC) encoders plus the decoder
//! - [`trajectory`]: LSTM head-state prediction
//! - [`viewport`]: frusta, FoV labels and multi-user ground truth
//! - [`fusion`]: attention fusion, the classification head and training
//! - [`eval`]: OA / precision / recall / point- and tile-level MIoU

pub mod cloud;
pub mod sampling;
pub mod autodiff;
pub mod saliency;
pub mod trajectory;
pub mod viewport;
pub mod eval;
pub mod config;
pub mod fusion;
pub mod scene;
pub mod error;
pub mod kv;
pub mod memtrack;
pub mod seed;

pub use error::{Error, Result};
