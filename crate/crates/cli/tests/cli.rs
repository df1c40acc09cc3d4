use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
num_clients = 4
participation_rate = 0.5
rounds = 2
frames = 2
hr_height = 16
hr_width = 16
clips_per_client = 1
eval_clips = 2
";

fn fedvsr(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedvsr"));
    cmd.args(args).env_remove("FEDVSR_SEED");
    if let Some(s) = seed {
        cmd.env("FEDVSR_SEED", s);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn verify_passes() {
    let out = fedvsr(&["verify"], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn bad_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tau = 1.5\n");
    let out = fedvsr(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn bad_seed_variable_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = fedvsr(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], Some("abc"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = fedvsr(
        &["run", "--config", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn run_writes_outputs_and_honours_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = fedvsr(&["run", "--config", &cfg, "--out", out_a.to_str().unwrap()], None);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    for f in ["metrics.csv", "final.ckpt", "manifest.txt"] {
        assert!(out_a.join(f).exists(), "{f}");
    }
    let b = fedvsr(&["run", "--config", &cfg, "--out", out_b.to_str().unwrap()], Some("17"));
    assert!(b.status.success());
    let manifest = fs::read_to_string(out_b.join("manifest.txt")).unwrap();
    assert!(manifest.lines().any(|l| l == "seed = 17"));
    assert_ne!(fs::read(out_a.join("final.ckpt")).unwrap(), fs::read(out_b.join("final.ckpt")).unwrap());
}

#[test]
fn sweep_over_failure_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let res = fedvsr(
        &[
            "sweep",
            "--config",
            &cfg,
            "--key",
            "failure_rate",
            "--values",
            "0,0.25,0.5,0.75",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name();
            let name = name.to_str().unwrap();
            name.starts_with("metrics_failure_rate_") && name.ends_with(".csv")
        })
        .count();
    assert_eq!(metrics, 4);
    assert!(out.join("sweep_failure_rate.csv").exists());
}
