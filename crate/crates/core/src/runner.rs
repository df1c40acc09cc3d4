//! Experiment entry points that touch the filesystem: `run` and `sweep`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{is_numeric_key, ExperimentConfig};
use crate::datasim::{generate_eval_set, partition_clients, ClientPartition, Clip};
use crate::error::{FedVsrError, Result};
use crate::federation::{format_float, metrics_csv, run_experiment, ExperimentResult, FederationConfig};
use crate::media::{serialize_params, serialize_tensor};

pub const SEED_ENV_VAR: &str = "FEDVSR_SEED";

/// Resolved inputs of one experiment.
pub struct Prepared {
    pub federation: FederationConfig,
    pub partition: ClientPartition,
    pub eval_set: Vec<Clip>,
}

/// Override the config seed from the value of `FEDVSR_SEED`, if set.
pub fn apply_seed_override(cfg: &mut ExperimentConfig, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        cfg.federation.seed = v.trim().parse().map_err(|_| FedVsrError::Config {
            line: 0,
            reason: format!("{SEED_ENV_VAR}='{v}' is not an unsigned 64-bit integer"),
        })?;
    }
    Ok(())
}

/// Build the client partition and the held-out set. In centralized mode all
/// shards are pooled into one client that trains every round.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let fed = &cfg.federation;
    let mut partition = partition_clients(fed.num_clients, cfg.clips_per_client, cfg.partition, &geom, fed.seed)?;
    let mut federation = fed.clone();
    if cfg.centralized {
        let pooled: Vec<Clip> = partition.shards.drain(..).flatten().collect();
        partition.shards = vec![pooled];
        federation.num_clients = 1;
        federation.participation_rate = 1.0;
    }
    let eval_set = generate_eval_set(cfg.eval_clips, &geom, cfg.eval_seed)?;
    Ok(Prepared {
        federation,
        partition,
        eval_set,
    })
}

/// Run without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let p = prepare(cfg)?;
    run_experiment(&p.federation, &p.partition, &p.eval_set)
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: ExperimentResult,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub manifest_path: PathBuf,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FedVsrError::io(path, e))
}

/// Run one experiment and write the metrics CSV, final checkpoint and manifest
/// into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    run_named(cfg, out_dir, "")
}

fn suffixed(name: &str, suffix: &str) -> String {
    if suffix.is_empty() {
        return name.to_string();
    }
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{name}_{suffix}"),
    }
}

fn run_named(cfg: &ExperimentConfig, out_dir: &Path, suffix: &str) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir).map_err(|e| FedVsrError::io(out_dir, e))?;
    let prepared = prepare(cfg)?;
    let manifest_path = out_dir.join(suffixed(&cfg.manifest_file, suffix));
    write(&manifest_path, cfg.to_manifest().as_bytes())?;

    if cfg.dump_clips {
        let dir = out_dir.join(suffixed("clips", suffix));
        fs::create_dir_all(&dir).map_err(|e| FedVsrError::io(&dir, e))?;
        for (k, shard) in prepared.partition.shards.iter().enumerate() {
            for (j, clip) in shard.iter().enumerate() {
                write(&dir.join(format!("client{k:03}_clip{j:03}_hr.tens")), &serialize_tensor(&clip.hr))?;
                write(&dir.join(format!("client{k:03}_clip{j:03}_lr.tens")), &serialize_tensor(&clip.lr))?;
            }
        }
    }

    let result = run_experiment(&prepared.federation, &prepared.partition, &prepared.eval_set)?;
    let metrics_path = out_dir.join(suffixed(&cfg.metrics_file, suffix));
    write(&metrics_path, metrics_csv(&result.records).as_bytes())?;
    let checkpoint_path = out_dir.join(suffixed(&cfg.checkpoint_file, suffix));
    write(&checkpoint_path, &serialize_params(&result.final_params))?;
    Ok(RunArtifacts {
        result,
        metrics_path,
        checkpoint_path,
        manifest_path,
    })
}

pub const SWEEP_HEADER: &str = "key,value,final_eval_psnr,final_eval_ssim,final_mean_client_loss,best_eval_psnr,metrics_file";

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<RunArtifacts>,
    pub summary_path: PathBuf,
}

/// One run per value of a numeric key, plus a `sweep_<key>.csv` summary.
pub fn sweep(cfg: &ExperimentConfig, key: &str, values: &[String], out_dir: &Path) -> Result<SweepOutput> {
    if !is_numeric_key(key) {
        return Err(FedVsrError::Config {
            line: 0,
            reason: format!("sweep key '{key}' is not a numeric config key"),
        });
    }
    if values.is_empty() {
        return Err(FedVsrError::Config {
            line: 0,
            reason: "sweep needs at least one value".into(),
        });
    }
    let mut runs = Vec::with_capacity(values.len());
    let mut summary = String::from(SWEEP_HEADER);
    summary.push('\n');
    for value in values {
        let mut c = cfg.clone();
        c.set(key, value)
            .map_err(|reason| FedVsrError::Config { line: 0, reason })?;
        c.validate().map_err(|e| FedVsrError::Config {
            line: 0,
            reason: format!("{key} = {value}: {e}"),
        })?;
        let art = run_named(&c, out_dir, &format!("{key}_{value}"))?;
        let last = art.result.final_record();
        let best = art
            .result
            .records
            .iter()
            .map(|r| r.eval_psnr)
            .fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            summary,
            "{key},{value},{},{},{},{},{}",
            format_float(last.eval_psnr),
            format_float(last.eval_ssim),
            format_float(last.mean_client_loss),
            format_float(best),
            art.metrics_path.file_name().and_then(|n| n.to_str()).unwrap_or_default(),
        );
        runs.push(art);
    }
    let summary_path = out_dir.join(format!("sweep_{key}.csv"));
    write(&summary_path, summary.as_bytes())?;
    Ok(SweepOutput { runs, summary_path })
}
