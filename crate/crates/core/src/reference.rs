//! Slow, straight-from-the-formula reference implementations.
//!
//! These exist only to cross-check the optimized code in tests and in the
//! `verify` self-check. They deliberately share no code with the paths they
//! check: no separable passes, no cached traces, no shared index helpers.

use crate::media::{Dims, VideoTensor};
use crate::model::ModelSpec;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// All eight Haar bands by direct evaluation of the 8-tap separable kernel.
/// Returned in `LLL, LLH, ..., HHH` order, each `(T/2, H/2, W/2, C)`.
pub fn dwt3d_bands(x: &VideoTensor) -> Vec<VideoTensor> {
    let d = x.dims();
    let out = Dims::new(d.frames / 2, d.height / 2, d.width / 2, d.channels);
    // Haar taps before the 1/sqrt(2) factor: low = [1, 1], high = [1, -1].
    let tap = |high: bool, j: usize| -> f64 {
        if high && j == 1 {
            -1.0
        } else {
            1.0
        }
    };
    let norm = 2f64.powf(-1.5);
    (0..8)
        .map(|band| {
            let (hd, hh, hw) = (band & 4 != 0, band & 2 != 0, band & 1 != 0);
            VideoTensor::from_fn(out, |t, y, xx, c| {
                let mut terms = Vec::with_capacity(8);
                for a in 0..2 {
                    for b in 0..2 {
                        for e in 0..2 {
                            let s = tap(hd, a) * tap(hh, b) * tap(hw, e);
                            terms.push(s * x.get(2 * t + a, 2 * y + b, 2 * xx + e, c));
                        }
                    }
                }
                compensated_sum(terms) * norm
            })
        })
        .collect()
}

pub fn psnr(pred: &VideoTensor, gt: &VideoTensor, peak: f64) -> f64 {
    let n = pred.len() as f64;
    let sse = compensated_sum(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)));
    if sse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (peak * peak).log10() - 10.0 * (sse / n).log10()
}

/// SSIM with explicit 2D Gaussian windows and two-pass (centred) moments.
pub fn ssim(pred: &VideoTensor, gt: &VideoTensor) -> f64 {
    let d = pred.dims();
    let k = 11usize;
    let sigma = 1.5f64;
    let mut window = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            window[i * k + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let wsum: f64 = window.iter().sum();
    window.iter_mut().for_each(|w| *w /= wsum);
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;

    let mut vals = Vec::new();
    for t in 0..d.frames {
        for c in 0..d.channels {
            for y0 in 0..=d.height - k {
                for x0 in 0..=d.width - k {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    for i in 0..k {
                        for j in 0..k {
                            let w = window[i * k + j];
                            mx += w * pred.get(t, y0 + i, x0 + j, c);
                            my += w * gt.get(t, y0 + i, x0 + j, c);
                        }
                    }
                    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                    for i in 0..k {
                        for j in 0..k {
                            let w = window[i * k + j];
                            let a = pred.get(t, y0 + i, x0 + j, c) - mx;
                            let b = gt.get(t, y0 + i, x0 + j, c) - my;
                            vx += w * a * a;
                            vy += w * b * b;
                            cxy += w * a * b;
                        }
                    }
                    vals.push(
                        ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                            / ((mx * mx + my * my + c1) * (vx + vy + c2)),
                    );
                }
            }
        }
    }
    compensated_sum(vals.iter().copied()) / vals.len() as f64
}

pub fn charbonnier(a: &[f64], b: &[f64], eps: f64) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| ((x - y).powi(2) + eps.powi(2)).sqrt())) / a.len() as f64
}

/// High-frequency loss composed from the band oracle and the Charbonnier
/// oracle. Element order does not matter for a mean.
pub fn hifr_loss(pred: &VideoTensor, gt: &VideoTensor, eps: f64) -> f64 {
    let bp = dwt3d_bands(pred);
    let bg = dwt3d_bands(gt);
    let a: Vec<f64> = bp[1..].iter().flat_map(|t| t.data().to_vec()).collect();
    let b: Vec<f64> = bg[1..].iter().flat_map(|t| t.data().to_vec()).collect();
    charbonnier(&a, &b, eps)
}

/// Model forward with naive nested loops over signed offsets.
pub fn model_forward(spec: &ModelSpec, params: &[f64], lr: &VideoTensor) -> VideoTensor {
    let (s, k, hd, ch) = (spec.scale, spec.kernel, spec.hidden, spec.channels);
    let d = lr.dims();
    let (h, w) = (d.height * s, d.width * s);
    let w1 = &params[..k * k * ch * hd];
    let b1 = &params[k * k * ch * hd..k * k * ch * hd + hd];
    let w2 = &params[k * k * ch * hd + hd..k * k * ch * hd + hd + k * k * hd * ch];
    let b2 = &params[k * k * ch * hd + hd + k * k * hd * ch..];
    let r = (k / 2) as i64;
    let up = |t: usize, y: i64, x: i64, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            0.0
        } else {
            lr.get(t, y as usize / s, x as usize / s, c)
        }
    };
    let out_dims = Dims::new(d.frames, h, w, ch);
    let mut out = VideoTensor::zeros(out_dims).into_data();
    for t in 0..d.frames {
        let mut act = vec![vec![vec![0.0; hd]; w]; h];
        for (y, row) in act.iter_mut().enumerate() {
            for (x, cell) in row.iter_mut().enumerate() {
                for (o, slot) in cell.iter_mut().enumerate() {
                    let mut z = b1[o];
                    for i in 0..ch {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let widx = o * ch * k * k + i * k * k + ((dy + r) as usize) * k + (dx + r) as usize;
                                z += w1[widx] * up(t, y as i64 + dy, x as i64 + dx, i);
                            }
                        }
                    }
                    *slot = z.max(0.0);
                }
            }
        }
        for y in 0..h {
            for x in 0..w {
                for o in 0..ch {
                    let mut v = b2[o];
                    for i in 0..hd {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                                if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                                    continue;
                                }
                                let widx = o * hd * k * k + i * k * k + ((dy + r) as usize) * k + (dx + r) as usize;
                                v += w2[widx] * act[yy as usize][xx as usize][i];
                            }
                        }
                    }
                    out[((t * h + y) * w + x) * ch + o] = up(t, y as i64, x as i64, o) + v;
                }
            }
        }
    }
    VideoTensor::new(out_dims, out).expect("finite reference output")
}

pub fn box_pool(hr: &VideoTensor, s: usize) -> VideoTensor {
    let d = hr.dims();
    let out = Dims::new(d.frames, d.height / s, d.width / s, d.channels);
    VideoTensor::from_fn(out, |t, y, x, c| {
        let mut vals = Vec::new();
        for yy in y * s..(y + 1) * s {
            for xx in x * s..(x + 1) * s {
                vals.push(hr.get(t, yy, xx, c));
            }
        }
        compensated_sum(vals) / (s * s) as f64
    })
}

/// Median of one coordinate by full sort.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
