//! Reconstruction quality metrics.

use crate::error::{FedVsrError, Result};
use crate::media::VideoTensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_DYNAMIC_RANGE: f64 = 1.0;

pub fn mse(pred: &VideoTensor, gt: &VideoTensor) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// PSNR in dB. Identical inputs yield `f64::INFINITY`.
pub fn compute_psnr(pred: &VideoTensor, gt: &VideoTensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(FedVsrError::domain(format!("peak must be > 0, got {peak}")));
    }
    let err = mse(pred, gt)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Mean SSIM over valid 11×11 Gaussian windows, every channel and frame.
pub fn compute_ssim(pred: &VideoTensor, gt: &VideoTensor) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let dims = pred.dims();
    if dims.height < SSIM_WINDOW || dims.width < SSIM_WINDOW {
        return Err(FedVsrError::shape(format!(
            "frame {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            dims.height, dims.width
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE).powi(2);

    let (h, w) = (dims.height, dims.width);
    let out_h = h - SSIM_WINDOW + 1;
    let out_w = w - SSIM_WINDOW + 1;

    let mut total = 0.0;
    let mut count = 0usize;
    let mut plane_x = vec![0.0; h * w];
    let mut plane_y = vec![0.0; h * w];
    for t in 0..dims.frames {
        for c in 0..dims.channels {
            for y in 0..h {
                for x in 0..w {
                    plane_x[y * w + x] = pred.get(t, y, x, c);
                    plane_y[y * w + x] = gt.get(t, y, x, c);
                }
            }
            let xx: Vec<f64> = plane_x.iter().map(|v| v * v).collect();
            let yy: Vec<f64> = plane_y.iter().map(|v| v * v).collect();
            let xy: Vec<f64> = plane_x.iter().zip(&plane_y).map(|(a, b)| a * b).collect();

            let mu_x = filter_valid(&plane_x, h, w, &taps);
            let mu_y = filter_valid(&plane_y, h, w, &taps);
            let e_xx = filter_valid(&xx, h, w, &taps);
            let e_yy = filter_valid(&yy, h, w, &taps);
            let e_xy = filter_valid(&xy, h, w, &taps);

            for i in 0..out_h * out_w {
                let (mx, my) = (mu_x[i], mu_y[i]);
                let var_x = e_xx[i] - mx * mx;
                let var_y = e_yy[i] - my * my;
                let cov = e_xy[i] - mx * my;
                let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Separable valid-mode correlation of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let out_w = w - k + 1;
    let out_h = h - k + 1;
    let mut rows = vec![0.0; h * out_w];
    for y in 0..h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (j, tap) in taps.iter().enumerate() {
                acc += tap * plane[y * w + x + j];
            }
            rows[y * out_w + x] = acc;
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, tap) in taps.iter().enumerate() {
                acc += tap * rows[(y + i) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Dims;

    #[test]
    fn psnr_identical_is_infinite() {
        let a = VideoTensor::filled(Dims::new(1, 2, 2, 1), 0.3);
        assert_eq!(compute_psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_error_gives_twenty_db() {
        let a = VideoTensor::filled(Dims::new(2, 3, 3, 1), 0.5);
        let b = VideoTensor::filled(Dims::new(2, 3, 3, 1), 0.6);
        let psnr = compute_psnr(&a, &b, 1.0).unwrap();
        assert!((psnr - 20.0).abs() < 1e-9, "{psnr}");
    }

    #[test]
    fn psnr_rejects_shape_mismatch_and_bad_peak() {
        let a = VideoTensor::zeros(Dims::new(1, 2, 2, 1));
        let b = VideoTensor::zeros(Dims::new(1, 2, 4, 1));
        assert!(matches!(compute_psnr(&a, &b, 1.0), Err(FedVsrError::Shape(_))));
        assert!(compute_psnr(&a, &a, 0.0).is_err());
    }

    #[test]
    fn ssim_identity_and_window_guard() {
        let a = VideoTensor::from_fn(Dims::new(2, 12, 13, 1), |t, y, x, _| {
            ((t + y * 3 + x * 7) % 11) as f64 / 10.0
        });
        assert!((compute_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);

        let small = VideoTensor::zeros(Dims::new(1, 10, 16, 1));
        assert!(matches!(
            compute_ssim(&small, &small),
            Err(FedVsrError::Shape(_))
        ));
    }

    #[test]
    fn gaussian_taps_are_normalized_and_symmetric() {
        let taps = gaussian_taps(11, 1.5);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(taps[i], taps[10 - i]);
        }
    }
}
