//! Charbonnier pixel loss, the wavelet high-frequency loss, their combination
//! and the FedProx proximal penalty. Every loss comes with its analytic
//! gradient with respect to the prediction.

use serde::{Deserialize, Serialize};

use crate::dwt3d::{dwt3d_forward, dwt3d_inverse, high_freq_stack, unstack_high_freq};
use crate::error::{FedVsrError, Result};
use crate::media::{ParamVector, VideoTensor};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_LAMBDA_VSR: f64 = 1.0;
pub const DEFAULT_LAMBDA_HIFR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Charbonnier constant.
    pub epsilon: f64,
    pub lambda_vsr: f64,
    pub lambda_hifr: f64,
    /// FedProx coefficient; 0 disables the proximal term.
    pub prox_mu: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: DEFAULT_EPSILON,
            lambda_vsr: DEFAULT_LAMBDA_VSR,
            lambda_hifr: DEFAULT_LAMBDA_HIFR,
            prox_mu: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        for (name, v) in [
            ("lambda_vsr", self.lambda_vsr),
            ("lambda_hifr", self.lambda_hifr),
            ("prox_mu", self.prox_mu),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FedVsrError::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(FedVsrError::domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

/// Mean of `sqrt((pred - gt)^2 + eps^2)` over all elements.
pub fn charbonnier(pred: &VideoTensor, gt: &VideoTensor, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    pred.ensure_same_dims(gt)?;
    let eps2 = epsilon * epsilon;
    let sum = neumaier_sum(
        pred.data()
            .iter()
            .zip(gt.data())
            .map(|(a, b)| ((a - b) * (a - b) + eps2).sqrt()),
    );
    Ok(sum / pred.len() as f64)
}

/// Compensated summation. Finite-difference gradient checks divide loss
/// differences by ~1e-5, so plain summation noise over thousands of pixels
/// would swamp small gradients.
fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
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

pub fn charbonnier_grad(pred: &VideoTensor, gt: &VideoTensor, epsilon: f64) -> Result<VideoTensor> {
    check_epsilon(epsilon)?;
    let n = pred.len() as f64;
    let eps2 = epsilon * epsilon;
    pred.zip_map(gt, |a, b| {
        let d = a - b;
        d / (n * (d * d + eps2).sqrt())
    })
}

/// Charbonnier penalty between the stacked high-frequency sub-bands of the
/// prediction and the target.
pub fn hifr_loss(pred: &VideoTensor, gt: &VideoTensor, epsilon: f64) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let hp = high_freq_stack(&dwt3d_forward(pred)?);
    let hg = high_freq_stack(&dwt3d_forward(gt)?);
    charbonnier(&hp, &hg, epsilon)
}

/// Gradient of [`hifr_loss`] with respect to `pred`: Charbonnier gradient on
/// the stacked coefficients, pulled back through the (orthonormal) transform.
pub fn hifr_loss_grad(pred: &VideoTensor, gt: &VideoTensor, epsilon: f64) -> Result<VideoTensor> {
    pred.ensure_same_dims(gt)?;
    let hp = high_freq_stack(&dwt3d_forward(pred)?);
    let hg = high_freq_stack(&dwt3d_forward(gt)?);
    let g_stack = charbonnier_grad(&hp, &hg, epsilon)?;
    dwt3d_inverse(&unstack_high_freq(&g_stack)?)
}

/// Component values of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub vsr: f64,
    pub hifr: f64,
}

pub fn total_loss(pred: &VideoTensor, gt: &VideoTensor, cfg: &LossConfig) -> Result<LossBreakdown> {
    let vsr = charbonnier(pred, gt, cfg.epsilon)?;
    let hifr = hifr_loss(pred, gt, cfg.epsilon)?;
    Ok(LossBreakdown {
        total: cfg.lambda_vsr * vsr + cfg.lambda_hifr * hifr,
        vsr,
        hifr,
    })
}

/// Gradient of the combined objective w.r.t. `pred`. The wavelet pass is
/// skipped entirely when `lambda_hifr` is zero.
pub fn total_loss_grad(pred: &VideoTensor, gt: &VideoTensor, cfg: &LossConfig) -> Result<VideoTensor> {
    let g_vsr = charbonnier_grad(pred, gt, cfg.epsilon)?;
    if cfg.lambda_hifr == 0.0 {
        return Ok(g_vsr.map(|v| cfg.lambda_vsr * v));
    }
    let g_hifr = hifr_loss_grad(pred, gt, cfg.epsilon)?;
    g_vsr.zip_map(&g_hifr, |a, b| cfg.lambda_vsr * a + cfg.lambda_hifr * b)
}

/// Loss averaged over a batch of clips, with the matching per-clip gradients
/// (each already scaled by `1 / batch`).
pub fn batch_total_loss(
    preds: &[VideoTensor],
    gts: &[VideoTensor],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<VideoTensor>)> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(FedVsrError::shape(format!(
            "batch needs matching non-empty lists, got {} predictions and {} targets",
            preds.len(),
            gts.len()
        )));
    }
    let n = preds.len() as f64;
    let mut acc = LossBreakdown {
        total: 0.0,
        vsr: 0.0,
        hifr: 0.0,
    };
    let mut grads = Vec::with_capacity(preds.len());
    for (p, g) in preds.iter().zip(gts) {
        let l = total_loss(p, g, cfg)?;
        acc.total += l.total / n;
        acc.vsr += l.vsr / n;
        acc.hifr += l.hifr / n;
        grads.push(total_loss_grad(p, g, cfg)?.map(|v| v / n));
    }
    Ok((acc, grads))
}

/// `(mu / 2) * ||w - w_global||^2` and its gradient `mu * (w - w_global)`.
pub fn prox_term(w: &ParamVector, w_global: &ParamVector, mu: f64) -> Result<(f64, ParamVector)> {
    w.ensure_compatible(w_global)?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(FedVsrError::domain(format!("prox mu must be >= 0, got {mu}")));
    }
    let diff = w.axpy(-1.0, w_global)?;
    let value = 0.5 * mu * diff.values().iter().map(|d| d * d).sum::<f64>();
    Ok((value, diff.scale(mu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Dims;

    fn pattern(dims: Dims, phase: usize) -> VideoTensor {
        VideoTensor::from_fn(dims, |t, y, x, c| {
            (((t + phase) * 7 + y * 5 + x * 3 + c) % 11) as f64 / 11.0
        })
    }

    #[test]
    fn charbonnier_basics() {
        let d = Dims::new(1, 1, 1, 1);
        let a = VideoTensor::filled(d, 3.0);
        let b = VideoTensor::zeros(d);
        assert_eq!(charbonnier(&a, &b, 4.0).unwrap(), 5.0);
        assert!((charbonnier(&a, &a, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
        assert!(charbonnier(&a, &b, 0.0).is_err());
    }

    #[test]
    fn hifr_is_epsilon_for_identical_or_offset() {
        let d = Dims::new(4, 4, 4, 1);
        let a = pattern(d, 0);
        assert!((hifr_loss(&a, &a, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
        let shifted = a.map(|v| v + 0.37);
        assert!((hifr_loss(&shifted, &a, 1e-3).unwrap() - 1e-3).abs() < 1e-12);
        let g = hifr_loss_grad(&shifted, &a, 1e-3).unwrap();
        assert!(g.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn hifr_grad_zero_at_minimum() {
        let a = pattern(Dims::new(2, 4, 4, 1), 3);
        let g = hifr_loss_grad(&a, &a, 1e-3).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn total_loss_weighting() {
        let d = Dims::new(2, 4, 4, 1);
        let (a, b) = (pattern(d, 0), pattern(d, 1));
        let cfg = LossConfig {
            lambda_hifr: 0.0,
            ..LossConfig::default()
        };
        let l = total_loss(&a, &b, &cfg).unwrap();
        assert_eq!(l.total, cfg.lambda_vsr * l.vsr);

        let cfg = LossConfig {
            lambda_vsr: 0.0,
            lambda_hifr: 1.0,
            ..LossConfig::default()
        };
        let l = total_loss(&a, &b, &cfg).unwrap();
        assert_eq!(l.total, l.hifr);
    }

    #[test]
    fn prox_examples() {
        let w = ParamVector::new(vec![3.0], "s").unwrap();
        let g = ParamVector::new(vec![1.0], "s").unwrap();
        let (v, grad) = prox_term(&w, &g, 2.0).unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(grad.values(), &[4.0]);

        let (v, grad) = prox_term(&w, &w, 5.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(grad.values().iter().all(|&x| x == 0.0));

        let other = ParamVector::new(vec![1.0], "other").unwrap();
        assert!(matches!(prox_term(&w, &other, 1.0), Err(FedVsrError::Shape(_))));
    }

    #[test]
    fn batch_loss_averages_clips() {
        let d = Dims::new(2, 4, 4, 1);
        let (a, b, c) = (pattern(d, 0), pattern(d, 1), pattern(d, 2));
        let cfg = LossConfig::default();
        let (l, grads) = batch_total_loss(&[a.clone(), c.clone()], &[b.clone(), b.clone()], &cfg).unwrap();
        let la = total_loss(&a, &b, &cfg).unwrap().total;
        let lc = total_loss(&c, &b, &cfg).unwrap().total;
        assert!((l.total - 0.5 * (la + lc)).abs() < 1e-15);
        assert_eq!(grads.len(), 2);
        assert!(batch_total_loss(&[], &[], &cfg).is_err());
    }
}
