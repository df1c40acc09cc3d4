//! Video tensors, parameter vectors, quality metrics and binary formats.

mod codec;
mod metrics;
mod params;
mod tensor;

pub use codec::{
    deserialize_params, deserialize_tensor, serialize_params, serialize_tensor, CHECKPOINT_HEADER_LEN,
    CHECKPOINT_MAGIC, FORMAT_VERSION, TENSOR_HEADER_LEN, TENSOR_MAGIC,
};
pub use metrics::{compute_psnr, compute_ssim, gaussian_taps, mse, SSIM_SIGMA, SSIM_WINDOW};
pub use params::ParamVector;
pub use tensor::{Dims, VideoTensor};
