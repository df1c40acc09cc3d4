use serde::{Deserialize, Serialize};

use crate::error::{FedVsrError, Result};

/// Dimensions of a video volume: frames × height × width × channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub const fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Dims {
            frames,
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat row-major offset of `(t, y, x, c)`.
    #[inline(always)]
    pub const fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels + c
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.frames, self.height, self.width, self.channels
        )
    }
}

/// A real-valued video volume stored row-major in `(t, y, x, c)` order.
///
/// Pixel data nominally lives in `[0, 1]`, but the type itself only enforces
/// finiteness so it can also carry residuals, gradients and wavelet bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTensor {
    dims: Dims,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.frames == 0 || dims.height == 0 || dims.width == 0 || dims.channels == 0 {
            return Err(FedVsrError::shape(format!(
                "all dimensions must be >= 1, got {dims}"
            )));
        }
        if data.len() != dims.len() {
            return Err(FedVsrError::shape(format!(
                "data length {} does not match dims {dims} ({} elements)",
                data.len(),
                dims.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FedVsrError::domain(format!(
                "non-finite value {} at element {pos}",
                data[pos]
            )));
        }
        Ok(VideoTensor { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        VideoTensor {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        VideoTensor {
            dims,
            data: vec![value; dims.len()],
        }
    }

    /// Build a tensor by evaluating `f(t, y, x, c)` at every element.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for t in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    for c in 0..dims.channels {
                        data.push(f(t, y, x, c));
                    }
                }
            }
        }
        VideoTensor { dims, data }
    }

    /// Internal constructor for buffers already known to be well formed.
    pub(crate) fn from_raw(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        VideoTensor { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims.frames
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn channels(&self) -> usize {
        self.dims.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.dims.index(t, y, x, c)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VideoTensor {
        VideoTensor::from_raw(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise `f(self, other)`; dimensions must agree.
    pub fn zip_map(&self, other: &VideoTensor, f: impl Fn(f64, f64) -> f64) -> Result<VideoTensor> {
        self.ensure_same_dims(other)?;
        Ok(VideoTensor::from_raw(
            self.dims,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn ensure_same_dims(&self, other: &VideoTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(FedVsrError::shape(format!(
                "dimension mismatch: {} vs {}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &VideoTensor) -> Result<f64> {
        self.ensure_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Copy of a single frame, kept as a one-frame volume.
    pub fn frame(&self, t: usize) -> VideoTensor {
        let per_frame = self.dims.height * self.dims.width * self.dims.channels;
        let dims = Dims {
            frames: 1,
            ..self.dims
        };
        VideoTensor::from_raw(dims, self.data[t * per_frame..(t + 1) * per_frame].to_vec())
    }
}
