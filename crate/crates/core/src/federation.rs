//! Round-based federated training loop.
//!
//! Each round: select a cohort, drop clients whose upload fails, train the
//! survivors locally from the current global model, aggregate, decay the
//! adaptive step, evaluate. The server carries only [`ServerState`] from one
//! round to the next.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    coordinate_median_params, decay_adaptive_step, fedvsr_weights, greedy_weights, guarded_losses,
    hellinger, inverse_loss_weights, uniform_weights, weighted_average_params, AggregationConfig,
    AlphaDecayMode, ClientUpdate, Strategy,
};
use crate::datasim::{ClientPartition, Clip};
use crate::error::{FedVsrError, Result};
use crate::losses::{prox_term, LossConfig};
use crate::media::{compute_psnr, compute_ssim, ParamVector};
use crate::model::{loss_and_grad, model_forward, sgd_step, ModelSpec, ModelState};
use crate::rng::{keyed_stream, Purpose};

/// Which local batches feed the uploaded mean loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossWindow {
    FinalEpoch,
    AllEpochs,
}

impl LossWindow {
    pub fn as_str(self) -> &'static str {
        match self {
            LossWindow::FinalEpoch => "final_epoch",
            LossWindow::AllEpochs => "all_epochs",
        }
    }
}

impl FromStr for LossWindow {
    type Err = FedVsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_epoch" => Ok(LossWindow::FinalEpoch),
            "all_epochs" => Ok(LossWindow::AllEpochs),
            other => Err(FedVsrError::domain(format!(
                "unknown loss_window '{other}' (expected final_epoch or all_epochs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub participation_rate: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub failure_rate: f64,
    pub seed: u64,
    /// Clips per local SGD step.
    pub batch_size: usize,
    pub loss_window: LossWindow,
    pub aggregation: AggregationConfig,
    pub loss: LossConfig,
    pub model: ModelSpec,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            num_clients: 8,
            participation_rate: 0.5,
            rounds: 30,
            local_epochs: 1,
            learning_rate: 0.05,
            failure_rate: 0.0,
            seed: 0,
            batch_size: 1,
            loss_window: LossWindow::FinalEpoch,
            aggregation: AggregationConfig::default(),
            loss: LossConfig::default(),
            model: ModelSpec::default(),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(FedVsrError::domain("num_clients must be >= 1"));
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return Err(FedVsrError::domain(format!(
                "participation_rate must lie in (0, 1], got {}",
                self.participation_rate
            )));
        }
        if self.rounds == 0 {
            return Err(FedVsrError::domain("rounds must be >= 1"));
        }
        if self.local_epochs == 0 {
            return Err(FedVsrError::domain("local_epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(FedVsrError::domain("batch_size must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FedVsrError::domain(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.failure_rate) {
            return Err(FedVsrError::domain(format!(
                "failure_rate must lie in [0, 1), got {}",
                self.failure_rate
            )));
        }
        self.aggregation.validate()?;
        self.loss.validate()?;
        self.model.validate()
    }

    /// `max(1, round(N * participation_rate))`.
    pub fn cohort_size(&self) -> usize {
        ((self.num_clients as f64 * self.participation_rate).round() as usize)
            .clamp(1, self.num_clients)
    }
}

/// Everything the server keeps between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub global: ParamVector,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub strategy: Strategy,
    pub selected: Vec<usize>,
    pub survived: Vec<usize>,
    pub weights: Vec<f64>,
    /// NaN when nobody survived.
    pub hellinger: f64,
    pub mixing: f64,
    pub alpha: f64,
    pub mean_client_loss: f64,
    pub eval_psnr: f64,
    pub eval_ssim: f64,
}

/// Uniform random subset of `cohort` client ids, returned in ascending order.
pub fn select_clients(n_total: usize, cohort: usize, seed: u64, round: usize) -> Result<Vec<usize>> {
    if cohort == 0 || cohort > n_total {
        return Err(FedVsrError::domain(format!(
            "cohort size {cohort} must lie in 1..={n_total}"
        )));
    }
    let mut rng = keyed_stream(seed, Purpose::Selection, round as u64, 0);
    let mut ids = index::sample(&mut rng, n_total, cohort).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Each client independently fails to upload with probability `failure_rate`.
pub fn apply_failure_mask(selected: &[usize], failure_rate: f64, seed: u64, round: usize) -> Vec<usize> {
    if failure_rate <= 0.0 {
        return selected.to_vec();
    }
    selected
        .iter()
        .copied()
        .filter(|&id| {
            let mut rng = keyed_stream(seed, Purpose::Failure, round as u64, id as u64);
            rng.gen::<f64>() >= failure_rate
        })
        .collect()
}

/// Train a copy of the global model on one client's shard.
pub fn local_training(
    global: &ParamVector,
    shard: &[Clip],
    cfg: &FederationConfig,
    round: usize,
    client_id: usize,
) -> Result<ClientUpdate> {
    if shard.is_empty() {
        return Err(FedVsrError::Data(format!("client {client_id} has an empty shard")));
    }
    let mut model = ModelState::new(cfg.model, global.clone())?;
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(&mut keyed_stream(
        cfg.seed,
        Purpose::BatchOrder,
        round as u64,
        client_id as u64,
    ));
    let batches: Vec<Vec<(&_, &_)>> = order
        .chunks(cfg.batch_size)
        .map(|chunk| chunk.iter().map(|&i| (&shard[i].lr, &shard[i].hr)).collect())
        .collect();

    let mut window_losses = Vec::new();
    for epoch in 0..cfg.local_epochs {
        let recording = match cfg.loss_window {
            LossWindow::AllEpochs => true,
            LossWindow::FinalEpoch => epoch + 1 == cfg.local_epochs,
        };
        for batch in &batches {
            let (loss, mut grad) = loss_and_grad(&model, batch, &cfg.loss)?;
            if cfg.loss.prox_mu > 0.0 {
                let (_, prox_grad) = prox_term(model.params(), global, cfg.loss.prox_mu)?;
                grad = grad.axpy(1.0, &prox_grad)?;
            }
            model = sgd_step(&model, &grad, cfg.learning_rate)?;
            if recording {
                window_losses.push(loss.total);
            }
        }
    }
    let mean_loss = window_losses.iter().sum::<f64>() / window_losses.len() as f64;
    Ok(ClientUpdate {
        client_id,
        params: model.into_params(),
        mean_loss,
    })
}

/// Mean PSNR (peak 1) and SSIM of the model over a clip set.
pub fn evaluate(params: &ParamVector, spec: ModelSpec, clips: &[Clip]) -> Result<(f64, f64)> {
    if clips.is_empty() {
        return Err(FedVsrError::Data("empty evaluation set".into()));
    }
    let model = ModelState::new(spec, params.clone())?;
    let mut psnr = 0.0;
    let mut ssim = 0.0;
    for clip in clips {
        let pred = model_forward(&model, &clip.lr)?;
        psnr += compute_psnr(&pred, &clip.hr, 1.0)?;
        ssim += compute_ssim(&pred, &clip.hr)?;
    }
    let n = clips.len() as f64;
    Ok((psnr / n, ssim / n))
}

/// Aggregation weights and merged parameters for one cohort of uploads.
pub struct Aggregate {
    pub params: ParamVector,
    pub weights: Vec<f64>,
    pub hellinger: f64,
    pub mixing: f64,
}

pub fn aggregate(updates: &[ClientUpdate], cfg: &AggregationConfig, alpha: f64) -> Result<Aggregate> {
    let losses = guarded_losses(updates);
    let u = uniform_weights(updates.len())?;
    match cfg.strategy {
        Strategy::FedAvg => Ok(Aggregate {
            params: weighted_average_params(updates, &u)?,
            hellinger: hellinger(&u, &inverse_loss_weights(&losses, alpha)?)?,
            mixing: 0.0,
            weights: u,
        }),
        Strategy::FedMedian => Ok(Aggregate {
            params: coordinate_median_params(updates)?,
            hellinger: hellinger(&u, &inverse_loss_weights(&losses, alpha)?)?,
            mixing: 0.0,
            weights: u,
        }),
        Strategy::FedVsr | Strategy::FedVsrGreedy => {
            let w = if cfg.strategy == Strategy::FedVsr {
                fedvsr_weights(&losses, alpha, cfg.tau)?
            } else {
                greedy_weights(&losses, alpha)?
            };
            Ok(Aggregate {
                params: weighted_average_params(updates, &w.weights)?,
                weights: w.weights,
                hellinger: w.hellinger,
                mixing: w.mixing,
            })
        }
    }
}

/// Adaptive step for the next round. Only the `fedvsr` strategy schedules it.
pub fn next_alpha(alpha: f64, round: usize, cfg: &FederationConfig) -> Result<f64> {
    if cfg.aggregation.strategy != Strategy::FedVsr {
        return Ok(alpha);
    }
    let base = match cfg.aggregation.alpha_decay_mode {
        AlphaDecayMode::Cumulative => alpha,
        AlphaDecayMode::FromInitial => cfg.aggregation.alpha,
    };
    decay_adaptive_step(base, round, cfg.rounds)
}

/// Read-only inputs of an experiment.
pub struct Federation<'a> {
    pub cfg: &'a FederationConfig,
    pub partition: &'a ClientPartition,
    pub eval_set: &'a [Clip],
}

impl<'a> Federation<'a> {
    pub fn new(cfg: &'a FederationConfig, partition: &'a ClientPartition, eval_set: &'a [Clip]) -> Result<Self> {
        cfg.validate()?;
        if partition.num_clients() != cfg.num_clients {
            return Err(FedVsrError::Data(format!(
                "partition has {} clients, config expects {}",
                partition.num_clients(),
                cfg.num_clients
            )));
        }
        Ok(Federation {
            cfg,
            partition,
            eval_set,
        })
    }

    pub fn initial_state(&self) -> Result<ServerState> {
        Ok(ServerState {
            global: ModelState::init(self.cfg.model, self.cfg.seed)?.into_params(),
            alpha: self.cfg.aggregation.alpha,
        })
    }

    /// One communication round `t` (1-based).
    pub fn run_round(&self, state: &ServerState, t: usize) -> Result<(ServerState, RoundRecord)> {
        let cfg = self.cfg;
        let selected = select_clients(cfg.num_clients, cfg.cohort_size(), cfg.seed, t)?;
        let survived = apply_failure_mask(&selected, cfg.failure_rate, cfg.seed, t);

        let updates: Vec<ClientUpdate> = survived
            .par_iter()
            .map(|&id| local_training(&state.global, &self.partition.shards[id], cfg, t, id))
            .collect::<Result<_>>()?;

        let (global, weights, h, m, mean_loss) = if updates.is_empty() {
            (state.global.clone(), Vec::new(), f64::NAN, f64::NAN, f64::NAN)
        } else {
            let agg = aggregate(&updates, &cfg.aggregation, state.alpha)?;
            let mean_loss = updates.iter().map(|u| u.mean_loss).sum::<f64>() / updates.len() as f64;
            (agg.params, agg.weights, agg.hellinger, agg.mixing, mean_loss)
        };
        let alpha = next_alpha(state.alpha, t, cfg)?;
        let (eval_psnr, eval_ssim) = evaluate(&global, cfg.model, self.eval_set)?;

        let record = RoundRecord {
            round: t,
            strategy: cfg.aggregation.strategy,
            selected,
            survived,
            weights,
            hellinger: h,
            mixing: m,
            alpha: state.alpha,
            mean_client_loss: mean_loss,
            eval_psnr,
            eval_ssim,
        };
        Ok((ServerState { global, alpha }, record))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub final_params: ParamVector,
}

impl ExperimentResult {
    pub fn final_record(&self) -> &RoundRecord {
        self.records.last().expect("at least one round")
    }
}

pub fn run_experiment(cfg: &FederationConfig, partition: &ClientPartition, eval_set: &[Clip]) -> Result<ExperimentResult> {
    let fed = Federation::new(cfg, partition, eval_set)?;
    let mut state = fed.initial_state()?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for t in 1..=cfg.rounds {
        let (next, record) = fed.run_round(&state, t)?;
        state = next;
        records.push(record);
    }
    Ok(ExperimentResult {
        records,
        final_params: state.global,
    })
}

pub const METRICS_HEADER: &str =
    "round,strategy,alpha,hellinger,mixing_m,mean_client_loss,n_selected,n_survived,eval_psnr,eval_ssim";

/// 17 significant digits; `inf` / `-inf` / `nan` for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn metrics_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.round,
            r.strategy,
            format_float(r.alpha),
            format_float(r.hellinger),
            format_float(r.mixing),
            format_float(r.mean_client_loss),
            r.selected.len(),
            r.survived.len(),
            format_float(r.eval_psnr),
            format_float(r.eval_ssim),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_size_rounding() {
        let mut cfg = FederationConfig {
            num_clients: 40,
            participation_rate: 0.1,
            ..FederationConfig::default()
        };
        assert_eq!(cfg.cohort_size(), 4);
        cfg.participation_rate = 0.01;
        assert_eq!(cfg.cohort_size(), 1);
        cfg.participation_rate = 1.0;
        assert_eq!(cfg.cohort_size(), 40);
    }

    #[test]
    fn selection_contract() {
        let a = select_clients(40, 4, 5, 3).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, select_clients(40, 4, 5, 3).unwrap());
        assert_eq!(select_clients(6, 6, 1, 1).unwrap(), (0..6).collect::<Vec<_>>());
        assert!(select_clients(3, 4, 1, 1).is_err());
    }

    #[test]
    fn zero_failure_keeps_everyone() {
        let sel = vec![1, 4, 7];
        assert_eq!(apply_failure_mask(&sel, 0.0, 3, 2), sel);
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(f64::NAN), "nan");
        let v = 0.1 + 0.2;
        assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn config_validation() {
        assert!(FederationConfig::default().validate().is_ok());
        let bad = FederationConfig {
            failure_rate: 1.0,
            ..FederationConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FederationConfig {
            participation_rate: 0.0,
            ..FederationConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
