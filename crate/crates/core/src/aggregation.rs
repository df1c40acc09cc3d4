//! Server-side weighting and parameter merging.
//!
//! The loss-aware rule blends uniform weights with normalized inverse-loss
//! weights. The blend factor is the Hellinger distance between the two
//! distributions, soft-thresholded by `tau`:
//!
//! ```text
//! l_i = (1 / L_i)^alpha / sum_j (1 / L_j)^alpha
//! H   = sqrt(0.5 * sum_i (sqrt(u_i) - sqrt(l_i))^2)
//! m   = 0 if H < tau else (H - tau) / (1 - tau)
//! w_i = (1 - m) u_i + m l_i
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FedVsrError, Result};
use crate::media::ParamVector;

/// Client losses below this are clamped before inversion.
pub const MIN_CLIENT_LOSS: f64 = 1e-8;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_TAU: f64 = 0.1;
const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    FedAvg,
    FedVsr,
    FedMedian,
    /// Loss-based weights only (`m = 1` every round).
    FedVsrGreedy,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::FedAvg,
        Strategy::FedVsr,
        Strategy::FedMedian,
        Strategy::FedVsrGreedy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedVsr => "fedvsr",
            Strategy::FedMedian => "fedmedian",
            Strategy::FedVsrGreedy => "fedvsr_greedy",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = FedVsrError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                FedVsrError::domain(format!(
                    "unknown strategy '{s}' (expected fedavg, fedvsr, fedmedian or fedvsr_greedy)"
                ))
            })
    }
}

/// How the adaptive step evolves across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlphaDecayMode {
    /// `alpha <- alpha^(1 - t/T)` applied to the current value each round.
    Cumulative,
    /// `alpha <- alpha_0^(1 - t/T)`.
    FromInitial,
}

impl AlphaDecayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlphaDecayMode::Cumulative => "cumulative",
            AlphaDecayMode::FromInitial => "from_initial",
        }
    }
}

impl FromStr for AlphaDecayMode {
    type Err = FedVsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(AlphaDecayMode::Cumulative),
            "from_initial" => Ok(AlphaDecayMode::FromInitial),
            other => Err(FedVsrError::domain(format!(
                "unknown alpha_decay_mode '{other}' (expected cumulative or from_initial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub alpha: f64,
    pub tau: f64,
    pub strategy: Strategy,
    pub alpha_decay_mode: AlphaDecayMode,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
            strategy: Strategy::FedVsr,
            alpha_decay_mode: AlphaDecayMode::Cumulative,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_tau(self.tau)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(FedVsrError::domain(format!("alpha must be finite and > 0, got {alpha}")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return Err(FedVsrError::domain(format!("tau must lie in [0, 1), got {tau}")));
    }
    Ok(())
}

/// A client's upload: trained parameters plus its mean local loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub mean_loss: f64,
}

pub fn uniform_weights(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(FedVsrError::EmptyCohort);
    }
    Ok(vec![1.0 / n as f64; n])
}

pub fn inverse_loss_weights(losses: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(FedVsrError::EmptyCohort);
    }
    check_alpha(alpha)?;
    if let Some(bad) = losses.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(FedVsrError::domain(format!("client loss must be finite and > 0, got {bad}")));
    }
    let raw: Vec<f64> = losses.iter().map(|l| (1.0 / l).powf(alpha)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

fn check_probability(v: &[f64], name: &str) -> Result<()> {
    if v.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(FedVsrError::domain(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(FedVsrError::domain(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

pub fn hellinger(u: &[f64], l: &[f64]) -> Result<f64> {
    if u.len() != l.len() {
        return Err(FedVsrError::shape(format!(
            "distribution lengths differ: {} vs {}",
            u.len(),
            l.len()
        )));
    }
    check_probability(u, "u")?;
    check_probability(l, "l")?;
    let s: f64 = u
        .iter()
        .zip(l)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    // Rounding can push the sum a hair past 2 for disjoint supports.
    Ok((0.5 * s).sqrt().min(1.0))
}

pub fn mixing_coefficient(h: f64, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(FedVsrError::domain(format!("hellinger distance must lie in [0, 1], got {h}")));
    }
    check_tau(tau)?;
    if h < tau {
        Ok(0.0)
    } else {
        Ok((h - tau) / (1.0 - tau))
    }
}

/// Final weights plus the diagnostics that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FedVsrWeights {
    pub weights: Vec<f64>,
    pub hellinger: f64,
    pub mixing: f64,
}

pub fn fedvsr_weights(losses: &[f64], alpha: f64, tau: f64) -> Result<FedVsrWeights> {
    let u = uniform_weights(losses.len())?;
    let l = inverse_loss_weights(losses, alpha)?;
    let h = hellinger(&u, &l)?;
    let m = mixing_coefficient(h, tau)?;
    Ok(FedVsrWeights {
        weights: blend(&u, &l, m),
        hellinger: h,
        mixing: m,
    })
}

/// The greedy ablation: loss-based weights alone.
pub fn greedy_weights(losses: &[f64], alpha: f64) -> Result<FedVsrWeights> {
    let u = uniform_weights(losses.len())?;
    let l = inverse_loss_weights(losses, alpha)?;
    let h = hellinger(&u, &l)?;
    Ok(FedVsrWeights {
        weights: l,
        hellinger: h,
        mixing: 1.0,
    })
}

fn blend(u: &[f64], l: &[f64], m: f64) -> Vec<f64> {
    if m == 0.0 {
        return u.to_vec();
    }
    u.iter().zip(l).map(|(a, b)| (1.0 - m) * a + m * b).collect()
}

/// Clamp reported losses to [`MIN_CLIENT_LOSS`].
pub fn guarded_losses(updates: &[ClientUpdate]) -> Vec<f64> {
    updates.iter().map(|u| u.mean_loss.max(MIN_CLIENT_LOSS)).collect()
}

fn check_layouts(updates: &[ClientUpdate]) -> Result<()> {
    let first = updates.first().ok_or(FedVsrError::EmptyCohort)?;
    for u in &updates[1..] {
        first.params.ensure_compatible(&u.params)?;
    }
    Ok(())
}

/// Convex combination of client parameters, accumulated in ascending client
/// order (the order of `updates`).
pub fn weighted_average_params(updates: &[ClientUpdate], weights: &[f64]) -> Result<ParamVector> {
    check_layouts(updates)?;
    if weights.len() != updates.len() {
        return Err(FedVsrError::shape(format!(
            "{} weights for {} updates",
            weights.len(),
            updates.len()
        )));
    }
    check_probability(weights, "aggregation weights")?;
    let first = &updates[0].params;
    let mut acc = vec![0.0; first.len()];
    for (u, &w) in updates.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(u.params.values()) {
            *a += w * v;
        }
    }
    Ok(ParamVector::from_raw(acc, first.layout_id()))
}

/// Per-coordinate median; even cohorts average the two middle values.
pub fn coordinate_median_params(updates: &[ClientUpdate]) -> Result<ParamVector> {
    check_layouts(updates)?;
    let n = updates.len();
    let first = &updates[0].params;
    let mut column = vec![0.0; n];
    let values = (0..first.len())
        .map(|j| {
            for (slot, u) in column.iter_mut().zip(updates) {
                *slot = u.params.values()[j];
            }
            column.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                column[n / 2]
            } else {
                0.5 * (column[n / 2 - 1] + column[n / 2])
            }
        })
        .collect();
    Ok(ParamVector::from_raw(values, first.layout_id()))
}

/// `alpha^(1 - t/T)` for round `t` of `T`.
pub fn decay_adaptive_step(alpha: f64, t: usize, total_rounds: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if t == 0 || t > total_rounds {
        return Err(FedVsrError::domain(format!(
            "round index {t} outside 1..={total_rounds}"
        )));
    }
    Ok(alpha.powf(1.0 - t as f64 / total_rounds as f64))
}
