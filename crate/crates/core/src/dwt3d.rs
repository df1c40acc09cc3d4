//! Single-level separable 3D Haar wavelet transform.
//!
//! Filters are applied along depth (frames), then height, then width, each
//! followed by stride-2 decimation. Taps pair elements `(2i, 2i + 1)`:
//!
//! ```text
//! low  = (x[2i] + x[2i+1]) / sqrt(2)
//! high = (x[2i] - x[2i+1]) / sqrt(2)
//! ```
//!
//! Band names list the filter per axis in depth, height, width order, so
//! `LHL` is low-pass in depth, high-pass in height, low-pass in width.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{FedVsrError, Result};
use crate::media::{Dims, VideoTensor};

/// Identifies one of the eight sub-bands. The discriminant encodes the filter
/// per axis as bits: depth = 4, height = 2, width = 1 (set = high-pass).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    Lll = 0,
    Llh = 1,
    Lhl = 2,
    Lhh = 3,
    Hll = 4,
    Hlh = 5,
    Hhl = 6,
    Hhh = 7,
}

impl Band {
    pub const ALL: [Band; 8] = [
        Band::Lll,
        Band::Llh,
        Band::Lhl,
        Band::Lhh,
        Band::Hll,
        Band::Hlh,
        Band::Hhl,
        Band::Hhh,
    ];

    /// High-frequency bands in stacking order.
    pub const HIGH: [Band; 7] = [
        Band::Llh,
        Band::Lhl,
        Band::Lhh,
        Band::Hll,
        Band::Hlh,
        Band::Hhl,
        Band::Hhh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Band::Lll => "LLL",
            Band::Llh => "LLH",
            Band::Lhl => "LHL",
            Band::Lhh => "LHH",
            Band::Hll => "HLL",
            Band::Hlh => "HLH",
            Band::Hhl => "HHL",
            Band::Hhh => "HHH",
        }
    }

    /// Whether the high-pass filter is used on (depth, height, width).
    pub fn highpass_axes(self) -> [bool; 3] {
        let bits = self as usize;
        [bits & 4 != 0, bits & 2 != 0, bits & 1 != 0]
    }
}

/// The eight coefficient volumes of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBands {
    bands: [VideoTensor; 8],
}

impl SubBands {
    pub fn new(bands: [VideoTensor; 8]) -> Result<Self> {
        let dims = bands[0].dims();
        for (band, tensor) in Band::ALL.iter().zip(&bands) {
            if tensor.dims() != dims {
                return Err(FedVsrError::shape(format!(
                    "band {} has dims {}, expected {dims}",
                    band.name(),
                    tensor.dims()
                )));
            }
        }
        Ok(SubBands { bands })
    }

    pub fn get(&self, band: Band) -> &VideoTensor {
        &self.bands[band as usize]
    }

    pub fn dims(&self) -> Dims {
        self.bands[0].dims()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Band, &VideoTensor)> {
        Band::ALL.iter().copied().zip(self.bands.iter())
    }

    pub fn into_array(self) -> [VideoTensor; 8] {
        self.bands
    }

    pub fn lll(&self) -> &VideoTensor {
        self.get(Band::Lll)
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().map(VideoTensor::sum_squares).sum()
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Depth,
    Height,
    Width,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Depth => "depth (frames)",
            Axis::Height => "height",
            Axis::Width => "width",
        }
    }

    fn extent(self, dims: Dims) -> usize {
        match self {
            Axis::Depth => dims.frames,
            Axis::Height => dims.height,
            Axis::Width => dims.width,
        }
    }

    fn halved(self, dims: Dims) -> Dims {
        let mut out = dims;
        match self {
            Axis::Depth => out.frames /= 2,
            Axis::Height => out.height /= 2,
            Axis::Width => out.width /= 2,
        }
        out
    }

    fn doubled(self, dims: Dims) -> Dims {
        let mut out = dims;
        match self {
            Axis::Depth => out.frames *= 2,
            Axis::Height => out.height *= 2,
            Axis::Width => out.width *= 2,
        }
        out
    }

    /// Row-major stride of this axis.
    fn stride(self, dims: Dims) -> usize {
        match self {
            Axis::Depth => dims.height * dims.width * dims.channels,
            Axis::Height => dims.width * dims.channels,
            Axis::Width => dims.channels,
        }
    }
}

/// Split `x` along `axis` into (low, high) halves.
fn analyze(x: &VideoTensor, axis: Axis) -> (VideoTensor, VideoTensor) {
    let dims = x.dims();
    let half = axis.halved(dims);
    let stride = axis.stride(dims);
    let half_stride = axis.stride(half);
    let extent = axis.extent(half);
    // Everything before `axis` is an outer index; everything after is inner.
    let inner = stride;
    let outer = dims.len() / (axis.extent(dims) * stride);

    let src = x.data();
    let mut low = vec![0.0; half.len()];
    let mut high = vec![0.0; half.len()];
    for o in 0..outer {
        let src_base = o * axis.extent(dims) * stride;
        let dst_base = o * extent * half_stride;
        for i in 0..extent {
            let a = src_base + (2 * i) * stride;
            let b = a + stride;
            let d = dst_base + i * half_stride;
            for k in 0..inner {
                let (va, vb) = (src[a + k], src[b + k]);
                low[d + k] = (va + vb) * FRAC_1_SQRT_2;
                high[d + k] = (va - vb) * FRAC_1_SQRT_2;
            }
        }
    }
    (
        VideoTensor::from_raw(half, low),
        VideoTensor::from_raw(half, high),
    )
}

/// Inverse of [`analyze`].
fn synthesize(low: &VideoTensor, high: &VideoTensor, axis: Axis) -> VideoTensor {
    let half = low.dims();
    let full = axis.doubled(half);
    let stride = axis.stride(full);
    let half_stride = axis.stride(half);
    let extent = axis.extent(half);
    let inner = stride;
    let outer = full.len() / (axis.extent(full) * stride);

    let (lo, hi) = (low.data(), high.data());
    let mut out = vec![0.0; full.len()];
    for o in 0..outer {
        let dst_base = o * axis.extent(full) * stride;
        let src_base = o * extent * half_stride;
        for i in 0..extent {
            let a = dst_base + (2 * i) * stride;
            let b = a + stride;
            let s = src_base + i * half_stride;
            for k in 0..inner {
                let (l, h) = (lo[s + k], hi[s + k]);
                out[a + k] = (l + h) * FRAC_1_SQRT_2;
                out[b + k] = (l - h) * FRAC_1_SQRT_2;
            }
        }
    }
    VideoTensor::from_raw(full, out)
}

fn ensure_even(dims: Dims) -> Result<()> {
    for axis in [Axis::Depth, Axis::Height, Axis::Width] {
        let n = axis.extent(dims);
        if n % 2 != 0 {
            return Err(FedVsrError::shape(format!(
                "{} axis has odd length {n}; the Haar transform needs even dims (got {dims})",
                axis.name()
            )));
        }
    }
    Ok(())
}

/// Forward single-level 3D Haar transform.
pub fn dwt3d_forward(x: &VideoTensor) -> Result<SubBands> {
    ensure_even(x.dims())?;
    let (l, h) = analyze(x, Axis::Depth);
    let (ll, lh) = analyze(&l, Axis::Height);
    let (hl, hh) = analyze(&h, Axis::Height);
    let (lll, llh) = analyze(&ll, Axis::Width);
    let (lhl, lhh) = analyze(&lh, Axis::Width);
    let (hll, hlh) = analyze(&hl, Axis::Width);
    let (hhl, hhh) = analyze(&hh, Axis::Width);
    Ok(SubBands {
        bands: [lll, llh, lhl, lhh, hll, hlh, hhl, hhh],
    })
}

/// Exact inverse of [`dwt3d_forward`]. Since the transform is orthonormal this
/// is also its adjoint.
pub fn dwt3d_inverse(b: &SubBands) -> Result<VideoTensor> {
    let dims = b.dims();
    if b.bands.iter().any(|t| t.dims() != dims) {
        return Err(FedVsrError::shape("sub-bands have mismatched dims"));
    }
    let [lll, llh, lhl, lhh, hll, hlh, hhl, hhh] = &b.bands;
    let ll = synthesize(lll, llh, Axis::Width);
    let lh = synthesize(lhl, lhh, Axis::Width);
    let hl = synthesize(hll, hlh, Axis::Width);
    let hh = synthesize(hhl, hhh, Axis::Width);
    let l = synthesize(&ll, &lh, Axis::Height);
    let h = synthesize(&hl, &hh, Axis::Height);
    Ok(synthesize(&l, &h, Axis::Depth))
}

/// Concatenate the seven high-frequency bands along the channel axis in
/// `LLH, LHL, LHH, HLL, HLH, HHL, HHH` order. Output channel `j * C + c`
/// holds channel `c` of the `j`-th band.
pub fn high_freq_stack(b: &SubBands) -> VideoTensor {
    let dims = b.dims();
    let c = dims.channels;
    let out_dims = Dims {
        channels: 7 * c,
        ..dims
    };
    let voxels = dims.frames * dims.height * dims.width;
    let mut out = vec![0.0; out_dims.len()];
    for (j, band) in Band::HIGH.iter().enumerate() {
        let src = b.get(*band).data();
        for v in 0..voxels {
            out[v * 7 * c + j * c..v * 7 * c + (j + 1) * c].copy_from_slice(&src[v * c..(v + 1) * c]);
        }
    }
    VideoTensor::from_raw(out_dims, out)
}

/// Adjoint of [`high_freq_stack`]: scatter a stacked gradient back into
/// sub-bands with a zero LLL band.
pub fn unstack_high_freq(stack: &VideoTensor) -> Result<SubBands> {
    let sd = stack.dims();
    if sd.channels % 7 != 0 {
        return Err(FedVsrError::shape(format!(
            "stacked channel count {} is not a multiple of 7",
            sd.channels
        )));
    }
    let c = sd.channels / 7;
    let dims = Dims { channels: c, ..sd };
    let voxels = dims.frames * dims.height * dims.width;
    let mut bands: [VideoTensor; 8] = std::array::from_fn(|_| VideoTensor::zeros(dims));
    for (j, band) in Band::HIGH.iter().enumerate() {
        let mut data = vec![0.0; dims.len()];
        for v in 0..voxels {
            data[v * c..(v + 1) * c]
                .copy_from_slice(&stack.data()[v * 7 * c + j * c..v * 7 * c + (j + 1) * c]);
        }
        bands[*band as usize] = VideoTensor::from_raw(dims, data);
    }
    Ok(SubBands { bands })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: Dims) -> VideoTensor {
        VideoTensor::from_fn(dims, |t, y, x, c| {
            ((t * 31 + y * 17 + x * 7 + c * 3) % 13) as f64 / 13.0
        })
    }

    #[test]
    fn constant_volume_lands_in_lll() {
        let c = 0.7;
        let x = VideoTensor::filled(Dims::new(2, 2, 2, 1), c);
        let b = dwt3d_forward(&x).unwrap();
        assert!((b.lll().data()[0] - c * 2f64.powf(1.5)).abs() < 1e-14);
        for band in Band::HIGH {
            assert!(b.get(band).data()[0].abs() < 1e-14);
        }
    }

    #[test]
    fn odd_axis_is_named_in_error() {
        let x = VideoTensor::zeros(Dims::new(2, 3, 2, 1));
        let err = dwt3d_forward(&x).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
        let x = VideoTensor::zeros(Dims::new(3, 2, 2, 1));
        let err = dwt3d_forward(&x).unwrap_err().to_string();
        assert!(err.contains("depth"), "{err}");
    }

    #[test]
    fn inverse_reconstructs() {
        let x = ramp(Dims::new(4, 8, 8, 1));
        let back = dwt3d_inverse(&dwt3d_forward(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn zero_bands_give_zero_volume() {
        let dims = Dims::new(1, 2, 3, 2);
        let b = SubBands::new(std::array::from_fn(|_| VideoTensor::zeros(dims))).unwrap();
        let x = dwt3d_inverse(&b).unwrap();
        assert_eq!(x.dims(), Dims::new(2, 4, 6, 2));
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lll_only_reconstructs_constant() {
        let x = VideoTensor::filled(Dims::new(2, 4, 4, 1), 0.25);
        let fwd = dwt3d_forward(&x).unwrap();
        let dims = fwd.dims();
        let mut bands: [VideoTensor; 8] = std::array::from_fn(|_| VideoTensor::zeros(dims));
        bands[0] = fwd.lll().clone();
        let back = dwt3d_inverse(&SubBands::new(bands).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-15);
    }

    #[test]
    fn mismatched_bands_rejected() {
        let mut bands: [VideoTensor; 8] =
            std::array::from_fn(|_| VideoTensor::zeros(Dims::new(1, 1, 1, 1)));
        bands[5] = VideoTensor::zeros(Dims::new(1, 2, 1, 1));
        assert!(matches!(SubBands::new(bands), Err(FedVsrError::Shape(_))));
    }

    #[test]
    fn stack_shape_and_unstack_adjoint() {
        let x = ramp(Dims::new(2, 2, 2, 1));
        let s = high_freq_stack(&dwt3d_forward(&x).unwrap());
        assert_eq!(s.dims(), Dims::new(1, 1, 1, 7));

        let x = ramp(Dims::new(4, 4, 6, 3));
        let b = dwt3d_forward(&x).unwrap();
        let s = high_freq_stack(&b);
        let back = unstack_high_freq(&s).unwrap();
        for band in Band::HIGH {
            assert_eq!(back.get(band), b.get(band));
        }
        assert!(back.lll().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_stack_is_zero() {
        let x = VideoTensor::filled(Dims::new(4, 4, 4, 3), 0.4);
        let s = high_freq_stack(&dwt3d_forward(&x).unwrap());
        assert!(s.data().iter().all(|v| v.abs() < 1e-14));
    }
}
