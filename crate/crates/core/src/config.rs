//! Flat `key = value` experiment configuration.
//!
//! The same grammar is used for user config files and for the manifest a run
//! writes next to its outputs, so a manifest can be fed back in unchanged.
//! Blank lines and `#` comments are ignored; unknown keys are errors.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::aggregation::{AlphaDecayMode, Strategy};
use crate::datasim::{Geometry, PartitionMode};
use crate::error::{FedVsrError, Result};
use crate::federation::FederationConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub federation: FederationConfig,
    pub frames: usize,
    pub hr_height: usize,
    pub hr_width: usize,
    pub clips_per_client: usize,
    pub partition: PartitionMode,
    pub eval_clips: usize,
    pub eval_seed: u64,
    /// Pool every shard into a single client (federation disabled).
    pub centralized: bool,
    pub metrics_file: String,
    pub checkpoint_file: String,
    pub manifest_file: String,
    /// Write every training clip as an `FVSRTENS` file under `clips/`.
    pub dump_clips: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let geom = Geometry::default();
        ExperimentConfig {
            federation: FederationConfig::default(),
            frames: geom.frames,
            hr_height: geom.hr_height,
            hr_width: geom.hr_width,
            clips_per_client: 6,
            partition: PartitionMode::NonIid,
            eval_clips: 8,
            eval_seed: 7919,
            centralized: false,
            metrics_file: "metrics.csv".into(),
            checkpoint_file: "final.ckpt".into(),
            manifest_file: "manifest.txt".into(),
            dump_clips: false,
        }
    }
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "seed",
    "num_clients",
    "participation_rate",
    "rounds",
    "local_epochs",
    "learning_rate",
    "batch_size",
    "failure_rate",
    "loss_window",
    "strategy",
    "alpha",
    "tau",
    "alpha_decay_mode",
    "epsilon",
    "lambda_vsr",
    "lambda_hifr",
    "prox_mu",
    "scale",
    "kernel",
    "hidden",
    "channels",
    "frames",
    "hr_height",
    "hr_width",
    "clips_per_client",
    "partition",
    "eval_clips",
    "eval_seed",
    "degradation",
    "centralized",
    "metrics_file",
    "checkpoint_file",
    "manifest_file",
    "dump_clips",
];

const NUMERIC_KEYS: &[&str] = &[
    "seed",
    "num_clients",
    "participation_rate",
    "rounds",
    "local_epochs",
    "learning_rate",
    "batch_size",
    "failure_rate",
    "alpha",
    "tau",
    "epsilon",
    "lambda_vsr",
    "lambda_hifr",
    "prox_mu",
    "scale",
    "kernel",
    "hidden",
    "channels",
    "frames",
    "hr_height",
    "hr_width",
    "clips_per_client",
    "eval_clips",
    "eval_seed",
];

pub fn is_numeric_key(key: &str) -> bool {
    NUMERIC_KEYS.contains(&key)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("malformed value '{value}' for {key}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("malformed value '{value}' for {key} (expected true or false)")),
    }
}

fn real_in(key: &str, value: &str, ok: impl Fn(f64) -> bool, range: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse_num(key, value)?;
    if !v.is_finite() || !ok(v) {
        return Err(format!("{key} must lie in {range}, got {value}"));
    }
    Ok(v)
}

fn count_at_least(key: &str, value: &str, min: usize) -> std::result::Result<usize, String> {
    let v: usize = parse_num(key, value)?;
    if v < min {
        return Err(format!("{key} must be >= {min}, got {v}"));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry {
            frames: self.frames,
            hr_height: self.hr_height,
            hr_width: self.hr_width,
            channels: self.federation.model.channels,
            scale: self.federation.model.scale,
        }
    }

    /// Assign one key from its textual value, enforcing the per-key range.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let f = &mut self.federation;
        match key {
            "seed" => f.seed = parse_num(key, value)?,
            "num_clients" => f.num_clients = count_at_least(key, value, 1)?,
            "participation_rate" => {
                f.participation_rate = real_in(key, value, |v| v > 0.0 && v <= 1.0, "(0, 1]")?
            }
            "rounds" => f.rounds = count_at_least(key, value, 1)?,
            "local_epochs" => f.local_epochs = count_at_least(key, value, 1)?,
            "learning_rate" => f.learning_rate = real_in(key, value, |v| v > 0.0, "(0, inf)")?,
            "batch_size" => f.batch_size = count_at_least(key, value, 1)?,
            "failure_rate" => {
                f.failure_rate = real_in(key, value, |v| (0.0..1.0).contains(&v), "[0, 1)")?
            }
            "loss_window" => f.loss_window = value.parse().map_err(|e: FedVsrError| e.to_string())?,
            "strategy" => {
                f.aggregation.strategy = value.parse::<Strategy>().map_err(|e| e.to_string())?
            }
            "alpha" => f.aggregation.alpha = real_in(key, value, |v| v > 0.0, "(0, inf)")?,
            "tau" => f.aggregation.tau = real_in(key, value, |v| (0.0..1.0).contains(&v), "[0, 1)")?,
            "alpha_decay_mode" => {
                f.aggregation.alpha_decay_mode =
                    value.parse::<AlphaDecayMode>().map_err(|e| e.to_string())?
            }
            "epsilon" => f.loss.epsilon = real_in(key, value, |v| v > 0.0, "(0, inf)")?,
            "lambda_vsr" => f.loss.lambda_vsr = real_in(key, value, |v| v >= 0.0, "[0, inf)")?,
            "lambda_hifr" => f.loss.lambda_hifr = real_in(key, value, |v| v >= 0.0, "[0, inf)")?,
            "prox_mu" => f.loss.prox_mu = real_in(key, value, |v| v >= 0.0, "[0, inf)")?,
            "scale" => f.model.scale = count_at_least(key, value, 2)?,
            "kernel" => {
                let k = count_at_least(key, value, 1)?;
                if k % 2 == 0 {
                    return Err(format!("kernel must be odd, got {k}"));
                }
                f.model.kernel = k;
            }
            "hidden" => f.model.hidden = count_at_least(key, value, 1)?,
            "channels" => {
                let c: usize = parse_num(key, value)?;
                if c != 1 && c != 3 {
                    return Err(format!("channels must be 1 or 3, got {c}"));
                }
                f.model.channels = c;
            }
            "frames" => {
                let t = count_at_least(key, value, 2)?;
                if t % 2 != 0 {
                    return Err(format!("frames must be even, got {t}"));
                }
                self.frames = t;
            }
            "hr_height" => self.hr_height = count_at_least(key, value, 1)?,
            "hr_width" => self.hr_width = count_at_least(key, value, 1)?,
            "clips_per_client" => self.clips_per_client = count_at_least(key, value, 1)?,
            "partition" => self.partition = value.parse().map_err(|e: FedVsrError| e.to_string())?,
            "eval_clips" => self.eval_clips = count_at_least(key, value, 1)?,
            "eval_seed" => self.eval_seed = parse_num(key, value)?,
            "degradation" => {
                if value != "box" {
                    return Err(format!("degradation must be 'box', got '{value}'"));
                }
            }
            "centralized" => self.centralized = parse_bool(key, value)?,
            "metrics_file" => self.metrics_file = non_empty(key, value)?,
            "checkpoint_file" => self.checkpoint_file = non_empty(key, value)?,
            "manifest_file" => self.manifest_file = non_empty(key, value)?,
            "dump_clips" => self.dump_clips = parse_bool(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Textual value of `key` as it appears in the manifest.
    pub fn get(&self, key: &str) -> Option<String> {
        let f = &self.federation;
        Some(match key {
            "seed" => f.seed.to_string(),
            "num_clients" => f.num_clients.to_string(),
            "participation_rate" => f.participation_rate.to_string(),
            "rounds" => f.rounds.to_string(),
            "local_epochs" => f.local_epochs.to_string(),
            "learning_rate" => f.learning_rate.to_string(),
            "batch_size" => f.batch_size.to_string(),
            "failure_rate" => f.failure_rate.to_string(),
            "loss_window" => f.loss_window.as_str().to_string(),
            "strategy" => f.aggregation.strategy.to_string(),
            "alpha" => f.aggregation.alpha.to_string(),
            "tau" => f.aggregation.tau.to_string(),
            "alpha_decay_mode" => f.aggregation.alpha_decay_mode.as_str().to_string(),
            "epsilon" => f.loss.epsilon.to_string(),
            "lambda_vsr" => f.loss.lambda_vsr.to_string(),
            "lambda_hifr" => f.loss.lambda_hifr.to_string(),
            "prox_mu" => f.loss.prox_mu.to_string(),
            "scale" => f.model.scale.to_string(),
            "kernel" => f.model.kernel.to_string(),
            "hidden" => f.model.hidden.to_string(),
            "channels" => f.model.channels.to_string(),
            "frames" => self.frames.to_string(),
            "hr_height" => self.hr_height.to_string(),
            "hr_width" => self.hr_width.to_string(),
            "clips_per_client" => self.clips_per_client.to_string(),
            "partition" => self.partition.as_str().to_string(),
            "eval_clips" => self.eval_clips.to_string(),
            "eval_seed" => self.eval_seed.to_string(),
            "degradation" => "box".to_string(),
            "centralized" => self.centralized.to_string(),
            "metrics_file" => self.metrics_file.clone(),
            "checkpoint_file" => self.checkpoint_file.clone(),
            "manifest_file" => self.manifest_file.clone(),
            "dump_clips" => self.dump_clips.to_string(),
            _ => return None,
        })
    }

    /// Cross-field checks that no single key can catch.
    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        self.geometry().validate()
    }

    /// Resolved config as `key = value` lines, one per key in [`KEYS`] order.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("every key has a value"));
        }
        out
    }
}

fn non_empty(key: &str, value: &str) -> std::result::Result<String, String> {
    if value.is_empty() {
        return Err(format!("{key} must not be empty"));
    }
    Ok(value.to_string())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<(&str, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| FedVsrError::Config {
            line: line_no,
            reason: format!("expected 'key = value', got '{line}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some((_, first)) = seen.iter().find(|(k, _)| *k == key) {
            return Err(FedVsrError::Config {
                line: line_no,
                reason: format!("duplicate key '{key}' (first set on line {first})"),
            });
        }
        cfg.set(key, value)
            .map_err(|reason| FedVsrError::Config { line: line_no, reason })?;
        seen.push((key, line_no));
    }
    cfg.validate().map_err(|e| FedVsrError::Config {
        line: 0,
        reason: format!("resolved config is inconsistent: {e}"),
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn tau_out_of_range_names_key_and_range() {
        let err = parse_config("# comment\n\ntau = 1.5\n").unwrap_err();
        match err {
            FedVsrError::Config { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("tau") && reason.contains("[0, 1)"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(matches!(
            parse_config("rounds = 3\nroundz = 4"),
            Err(FedVsrError::Config { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("rounds = three"),
            Err(FedVsrError::Config { line: 1, .. })
        ));
        assert!(matches!(parse_config("rounds"), Err(FedVsrError::Config { line: 1, .. })));
        assert!(parse_config("rounds = 2\nrounds = 3").is_err());
    }

    #[test]
    fn cross_field_violation_is_reported() {
        // 30 is not a multiple of 2 * scale.
        assert!(matches!(parse_config("hr_height = 30"), Err(FedVsrError::Config { line: 0, .. })));
    }

    #[test]
    fn manifest_roundtrip_with_overrides() {
        let text = "strategy = fedmedian\nlearning_rate = 0.0123\ntau = 0.3\nprox_mu = 1e-2\npartition = iid\ncentralized = true # inline comment\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.federation.aggregation.strategy, Strategy::FedMedian);
        assert!(cfg.centralized);
        let manifest = cfg.to_manifest();
        assert_eq!(manifest.lines().count(), KEYS.len());
        let back = parse_config(&manifest).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_manifest(), manifest);
    }

    #[test]
    fn numeric_keys_are_known_keys() {
        for k in NUMERIC_KEYS {
            assert!(KEYS.contains(k));
        }
        assert!(is_numeric_key("failure_rate"));
        assert!(!is_numeric_key("strategy"));
    }
}
