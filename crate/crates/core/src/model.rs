//! A small residual super-resolution network with a hand-written backward
//! pass.
//!
//! ```text
//! up  = nearest_upsample(lr, s)
//! z   = conv_kxk(up; C -> hidden) + b1
//! out = up + conv_kxk(relu(z); hidden -> C) + b2
//! ```
//!
//! Convolutions are per frame with zero padding `k / 2`. Weights are stored
//! `[out][in][ky][kx]` row-major; the flat parameter order is layer-1 weights,
//! layer-1 bias, layer-2 weights, layer-2 bias.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FedVsrError, Result};
use crate::losses::{total_loss, total_loss_grad, LossConfig};
use crate::media::{Dims, ParamVector, VideoTensor};
use crate::rng::{keyed_stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub scale: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub channels: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            scale: 2,
            kernel: 3,
            hidden: 8,
            channels: 1,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(FedVsrError::domain(format!("scale must be >= 2, got {}", self.scale)));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(FedVsrError::domain(format!(
                "kernel must be a positive odd integer, got {}",
                self.kernel
            )));
        }
        if self.hidden == 0 {
            return Err(FedVsrError::domain("hidden width must be >= 1"));
        }
        if self.channels == 0 {
            return Err(FedVsrError::domain("channels must be >= 1"));
        }
        Ok(())
    }

    fn w1_len(&self) -> usize {
        self.kernel * self.kernel * self.channels * self.hidden
    }

    fn w2_len(&self) -> usize {
        self.kernel * self.kernel * self.hidden * self.channels
    }

    pub fn param_count(&self) -> usize {
        self.w1_len() + self.hidden + self.w2_len() + self.channels
    }

    pub fn layout_id(&self) -> String {
        format!(
            "toyvsr/s{}-k{}-h{}-c{}",
            self.scale, self.kernel, self.hidden, self.channels
        )
    }

    /// Output dims for an LR input of dims `lr`.
    pub fn output_dims(&self, lr: Dims) -> Dims {
        Dims::new(lr.frames, lr.height * self.scale, lr.width * self.scale, lr.channels)
    }
}

/// Borrowed views of the four parameter blocks.
struct Blocks<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    spec: ModelSpec,
    params: ParamVector,
}

impl ModelState {
    pub fn new(spec: ModelSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(FedVsrError::shape(format!(
                "expected {} parameters for {}, got {}",
                spec.param_count(),
                spec.layout_id(),
                params.len()
            )));
        }
        if params.layout_id() != spec.layout_id() {
            return Err(FedVsrError::shape(format!(
                "parameter layout '{}' does not match model '{}'",
                params.layout_id(),
                spec.layout_id()
            )));
        }
        Ok(ModelState { spec, params })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ModelState {
            spec,
            params: ParamVector::zeros(spec.param_count(), spec.layout_id()),
        })
    }

    /// Weights uniform in `[-b, b]` with `b = sqrt(1 / (k * k * fan_in))`,
    /// biases zero.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = keyed_stream(seed, Purpose::ModelInit, 0, 0);
        let kk = (spec.kernel * spec.kernel) as f64;
        let b1 = (1.0 / (kk * spec.channels as f64)).sqrt();
        let b2 = (1.0 / (kk * spec.hidden as f64)).sqrt();
        let mut values = Vec::with_capacity(spec.param_count());
        values.extend((0..spec.w1_len()).map(|_| rng.gen_range(-b1..=b1)));
        values.extend(std::iter::repeat(0.0).take(spec.hidden));
        values.extend((0..spec.w2_len()).map(|_| rng.gen_range(-b2..=b2)));
        values.extend(std::iter::repeat(0.0).take(spec.channels));
        Ok(ModelState {
            spec,
            params: ParamVector::from_raw(values, spec.layout_id()),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    fn blocks(&self) -> Blocks<'_> {
        let v = self.params.values();
        let s = &self.spec;
        let (w1, rest) = v.split_at(s.w1_len());
        let (b1, rest) = rest.split_at(s.hidden);
        let (w2, b2) = rest.split_at(s.w2_len());
        Blocks { w1, b1, w2, b2 }
    }

    fn check_input(&self, lr: &VideoTensor) -> Result<()> {
        if lr.channels() != self.spec.channels {
            return Err(FedVsrError::shape(format!(
                "model expects {} channels, input has {}",
                self.spec.channels,
                lr.channels()
            )));
        }
        Ok(())
    }
}

pub fn nearest_upsample(lr: &VideoTensor, scale: usize) -> VideoTensor {
    let d = lr.dims();
    let out = Dims::new(d.frames, d.height * scale, d.width * scale, d.channels);
    VideoTensor::from_fn(out, |t, y, x, c| lr.get(t, y / scale, x / scale, c))
}

/// Zero-padded same-size correlation of one `h × w × cin` frame.
#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let pad = k / 2;
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for x in 0..w {
            let o_base = (y * w + x) * cout;
            out[o_base..o_base + cout].copy_from_slice(bias);
            for ky in 0..k {
                let yy = y + ky;
                if yy < pad || yy - pad >= h {
                    continue;
                }
                let yy = yy - pad;
                for kx in 0..k {
                    let xx = x + kx;
                    if xx < pad || xx - pad >= w {
                        continue;
                    }
                    let xx = xx - pad;
                    let i_base = (yy * w + xx) * cin;
                    for o in 0..cout {
                        let mut acc = 0.0;
                        for i in 0..cin {
                            acc += weights[((o * cin + i) * k + ky) * k + kx] * input[i_base + i];
                        }
                        out[o_base + o] += acc;
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients of [`conv_forward`] into `dw`/`db`, and
/// the input gradient into `dinput` when given.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    grad_out: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
    weights: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let pad = k / 2;
    for y in 0..h {
        for x in 0..w {
            let o_base = (y * w + x) * cout;
            for o in 0..cout {
                db[o] += grad_out[o_base + o];
            }
            for ky in 0..k {
                let yy = y + ky;
                if yy < pad || yy - pad >= h {
                    continue;
                }
                let yy = yy - pad;
                for kx in 0..k {
                    let xx = x + kx;
                    if xx < pad || xx - pad >= w {
                        continue;
                    }
                    let xx = xx - pad;
                    let i_base = (yy * w + xx) * cin;
                    for o in 0..cout {
                        let g = grad_out[o_base + o];
                        if g == 0.0 {
                            continue;
                        }
                        for i in 0..cin {
                            let widx = ((o * cin + i) * k + ky) * k + kx;
                            dw[widx] += g * input[i_base + i];
                            if let Some(di) = dinput.as_deref_mut() {
                                di[i_base + i] += g * weights[widx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    up: VideoTensor,
    /// Per-frame hidden pre-activations, `sh × sw × hidden` each.
    pre: Vec<Vec<f64>>,
    out: VideoTensor,
}

fn forward_trace(m: &ModelState, lr: &VideoTensor) -> Result<Trace> {
    m.check_input(lr)?;
    let spec = m.spec;
    let blocks = m.blocks();
    let up = nearest_upsample(lr, spec.scale);
    let d = up.dims();
    let frame_len = d.height * d.width * d.channels;
    let mut out = Vec::with_capacity(d.len());
    let mut pre = Vec::with_capacity(d.frames);
    for t in 0..d.frames {
        let frame = &up.data()[t * frame_len..(t + 1) * frame_len];
        let z = conv_forward(
            frame, d.height, d.width, spec.channels, spec.hidden, spec.kernel, blocks.w1, blocks.b1,
        );
        let act: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let residual = conv_forward(
            &act, d.height, d.width, spec.hidden, spec.channels, spec.kernel, blocks.w2, blocks.b2,
        );
        out.extend(frame.iter().zip(&residual).map(|(u, r)| u + r));
        pre.push(z);
    }
    Ok(Trace {
        out: VideoTensor::from_raw(d, out),
        up,
        pre,
    })
}

pub fn model_forward(m: &ModelState, lr: &VideoTensor) -> Result<VideoTensor> {
    Ok(forward_trace(m, lr)?.out)
}

/// Reverse-mode gradient of the forward map w.r.t. the parameters,
/// contracted with `grad_out`. ReLU'(0) is taken as 0.
pub fn model_backward(m: &ModelState, lr: &VideoTensor, grad_out: &VideoTensor) -> Result<ParamVector> {
    let trace = forward_trace(m, lr)?;
    backward_from_trace(m, &trace, grad_out)
}

fn backward_from_trace(m: &ModelState, trace: &Trace, grad_out: &VideoTensor) -> Result<ParamVector> {
    let d = trace.out.dims();
    if grad_out.dims() != d {
        return Err(FedVsrError::shape(format!(
            "grad_out dims {} do not match forward output {d}",
            grad_out.dims()
        )));
    }
    let spec = m.spec;
    let blocks = m.blocks();
    let (k, c, hd) = (spec.kernel, spec.channels, spec.hidden);
    let mut dw1 = vec![0.0; spec.w1_len()];
    let mut db1 = vec![0.0; hd];
    let mut dw2 = vec![0.0; spec.w2_len()];
    let mut db2 = vec![0.0; c];
    let frame_len = d.height * d.width * c;
    let hidden_len = d.height * d.width * hd;
    for t in 0..d.frames {
        let z = &trace.pre[t];
        let act: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let g = &grad_out.data()[t * frame_len..(t + 1) * frame_len];
        let mut dact = vec![0.0; hidden_len];
        conv_backward(
            &act, g, d.height, d.width, hd, c, k, blocks.w2, &mut dw2, &mut db2, Some(&mut dact),
        );
        for (dz, &zv) in dact.iter_mut().zip(z) {
            if zv <= 0.0 {
                *dz = 0.0;
            }
        }
        let up = &trace.up.data()[t * frame_len..(t + 1) * frame_len];
        conv_backward(up, &dact, d.height, d.width, c, hd, k, blocks.w1, &mut dw1, &mut db1, None);
    }
    let mut values = dw1;
    values.extend(db1);
    values.extend(dw2);
    values.extend(db2);
    Ok(ParamVector::from_raw(values, spec.layout_id()))
}

/// Loss and parameter gradient of the combined objective for a batch of
/// `(lr, hr)` clips; the loss is the batch mean.
pub fn loss_and_grad(
    m: &ModelState,
    batch: &[(&VideoTensor, &VideoTensor)],
    cfg: &LossConfig,
) -> Result<(crate::losses::LossBreakdown, ParamVector)> {
    if batch.is_empty() {
        return Err(FedVsrError::Data("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; m.spec.param_count()];
    let mut acc = crate::losses::LossBreakdown {
        total: 0.0,
        vsr: 0.0,
        hifr: 0.0,
    };
    for (lr, hr) in batch {
        let trace = forward_trace(m, lr)?;
        let l = total_loss(&trace.out, hr, cfg)?;
        acc.total += l.total / n;
        acc.vsr += l.vsr / n;
        acc.hifr += l.hifr / n;
        let g_out = total_loss_grad(&trace.out, hr, cfg)?;
        let g = backward_from_trace(m, &trace, &g_out)?;
        for (a, b) in grad.iter_mut().zip(g.values()) {
            *a += b / n;
        }
    }
    Ok((acc, ParamVector::from_raw(grad, m.spec.layout_id())))
}

/// `params - eta * grad`, leaving `m` untouched.
pub fn sgd_step(m: &ModelState, grad: &ParamVector, eta: f64) -> Result<ModelState> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(FedVsrError::domain(format!("learning rate must be >= 0, got {eta}")));
    }
    Ok(ModelState {
        spec: m.spec,
        params: m.params.axpy(-eta, grad)?,
    })
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_MIN_PARAMS: usize = 50;
/// Denominator floor for the relative error. Central differences at h = 1e-5 carry
/// ~1e-12 rounding noise, so gradients below this are compared in absolute terms.
const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of the combined objective against central
/// differences on a random subset of at least 50 parameters (all of them when
/// the model is smaller) and returns the largest relative error.
///
/// The numeric derivative is Richardson-extrapolated from central differences
/// at `h` and `h/2`. Charbonnier's curvature near zero residual (scale
/// `epsilon`) otherwise leaves an `h^2` truncation term of order 1e-5.
///
/// Parameters whose probes flip any ReLU on/off are skipped in favour of the
/// next candidate, so the comparison never straddles a kink.
pub fn finite_diff_check(m: &ModelState, lr: &VideoTensor, hr: &VideoTensor, cfg: &LossConfig) -> Result<f64> {
    let (_, analytic) = loss_and_grad(m, &[(lr, hr)], cfg)?;
    let base = forward_trace(m, lr)?;
    let base_mask: Vec<Vec<bool>> = base.pre.iter().map(|z| z.iter().map(|&v| v > 0.0).collect()).collect();

    let n = m.spec.param_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed_stream(n as u64, Purpose::GradCheck, 0, 0));

    let eval = |idx: usize, delta: f64| -> Result<(f64, bool)> {
        let mut v = m.params.values().to_vec();
        v[idx] += delta;
        let probe = ModelState {
            spec: m.spec,
            params: ParamVector::from_raw(v, m.spec.layout_id()),
        };
        let trace = forward_trace(&probe, lr)?;
        let same_mask = trace
            .pre
            .iter()
            .zip(&base_mask)
            .all(|(z, mask)| z.iter().zip(mask).all(|(&zv, &on)| (zv > 0.0) == on));
        Ok((total_loss(&trace.out, hr, cfg)?.total, same_mask))
    };

    let target = GRAD_CHECK_MIN_PARAMS.min(n);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for &idx in &order {
        if checked >= target {
            break;
        }
        let probes = [
            eval(idx, GRAD_CHECK_STEP)?,
            eval(idx, -GRAD_CHECK_STEP)?,
            eval(idx, 0.5 * GRAD_CHECK_STEP)?,
            eval(idx, -0.5 * GRAD_CHECK_STEP)?,
        ];
        if !probes.iter().all(|&(_, same_mask)| same_mask) {
            continue;
        }
        let wide = (probes[0].0 - probes[1].0) / (2.0 * GRAD_CHECK_STEP);
        let narrow = (probes[2].0 - probes[3].0) / GRAD_CHECK_STEP;
        let numeric = (4.0 * narrow - wide) / 3.0;
        let a = analytic.values()[idx];
        let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
        checked += 1;
    }
    Ok(worst)
}
