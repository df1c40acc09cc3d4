//! Federated video super-resolution simulator.
//!
//! Clients train a small residual upscaler on synthetic video with a pixel
//! Charbonnier loss plus a 3D Haar high-frequency loss, and the server merges
//! their models with a loss-aware rule that falls back to plain averaging when
//! client losses agree. FedAvg, FedMedian and FedProx are available as
//! baselines.

pub mod aggregation;
pub mod config;
pub mod datasim;
pub mod dwt3d;
pub mod error;
pub mod federation;
pub mod losses;
pub mod media;
pub mod model;
pub mod reference;
pub mod rng;
pub mod runner;
pub mod verify;

pub use error::{FedVsrError, Result};
pub use media::{Dims, ParamVector, VideoTensor};
