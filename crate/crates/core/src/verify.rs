//! Built-in self-check: wavelet reconstruction, oracle agreement, gradient
//! checks and aggregation algebra, each reported as a named property.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::aggregation::{coordinate_median_params, fedvsr_weights, hellinger, ClientUpdate};
use crate::dwt3d::{dwt3d_forward, dwt3d_inverse};
use crate::error::Result;
use crate::losses::{hifr_loss, hifr_loss_grad, LossConfig};
use crate::media::{compute_psnr, compute_ssim, deserialize_params, serialize_params, Dims, ParamVector, VideoTensor};
use crate::model::{finite_diff_check, ModelSpec, ModelState};
use crate::reference;
use crate::rng::{keyed_stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, observed: f64, threshold: f64) {
        self.checks.push(PropertyCheck {
            name,
            passed: observed <= threshold,
            observed,
            threshold,
        });
    }
}

pub fn random_volume(rng: &mut ChaCha12Rng, dims: Dims) -> VideoTensor {
    VideoTensor::from_fn(dims, |_, _, _, _| rng.gen::<f64>())
}

fn random_even_dims(rng: &mut ChaCha12Rng, max: (usize, usize, usize)) -> Dims {
    Dims::new(
        2 * rng.gen_range(1..=max.0 / 2),
        2 * rng.gen_range(1..=max.1 / 2),
        2 * rng.gen_range(1..=max.2 / 2),
        if rng.gen_bool(0.5) { 1 } else { 3 },
    )
}

/// Max relative error of [`hifr_loss_grad`] against central differences at
/// `points` random elements.
pub fn hifr_grad_fd_error(pred: &VideoTensor, gt: &VideoTensor, eps: f64, points: usize, rng: &mut ChaCha12Rng) -> Result<f64> {
    let h = 1e-5;
    let analytic = hifr_loss_grad(pred, gt, eps)?;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let idx = rng.gen_range(0..pred.len());
        let probe = |delta: f64| -> Result<f64> {
            let mut v = pred.data().to_vec();
            v[idx] += delta;
            hifr_loss(&VideoTensor::new(pred.dims(), v)?, gt, eps)
        };
        let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
        let a = analytic.data()[idx];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
    }
    Ok(worst)
}

pub fn run_verify() -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let mut rng = keyed_stream(0xF5, Purpose::Verify, 0, 0);

    let (mut recon, mut energy) = (0.0f64, 0.0f64);
    for _ in 0..30 {
        let dims = random_even_dims(&mut rng, (8, 16, 16));
        let x = random_volume(&mut rng, dims);
        let bands = dwt3d_forward(&x)?;
        recon = recon.max(dwt3d_inverse(&bands)?.max_abs_diff(&x)?);
        energy = energy.max((bands.energy() - x.sum_squares()).abs() / x.sum_squares());
    }
    report.push("dwt_perfect_reconstruction", recon, 1e-10);
    report.push("dwt_energy_conservation", energy, 1e-9);

    let mut oracle = 0.0f64;
    for _ in 0..10 {
        let dims = random_even_dims(&mut rng, (6, 10, 10));
        let x = random_volume(&mut rng, dims);
        let fast = dwt3d_forward(&x)?;
        for ((_, band), slow) in fast.iter().zip(reference::dwt3d_bands(&x)) {
            oracle = oracle.max(band.max_abs_diff(&slow)?);
        }
    }
    report.push("dwt_matches_separable_oracle", oracle, 1e-12);

    let d = Dims::new(4, 4, 4, 1);
    let (p, g) = (random_volume(&mut rng, d), random_volume(&mut rng, d));
    report.push("hifr_grad_finite_difference", hifr_grad_fd_error(&p, &g, 1e-3, 20, &mut rng)?, 1e-6);

    let spec = ModelSpec::default();
    let mut grad_err = 0.0f64;
    for (seed, lambda_hifr) in [(1u64, 0.0), (2, 0.1), (3, 1.0)] {
        let m = ModelState::init(spec, seed)?;
        let lr = random_volume(&mut rng, Dims::new(4, 8, 8, 1));
        let hr = random_volume(&mut rng, Dims::new(4, 16, 16, 1));
        let cfg = LossConfig {
            lambda_hifr,
            ..LossConfig::default()
        };
        grad_err = grad_err.max(finite_diff_check(&m, &lr, &hr, &cfg)?);
    }
    report.push("model_grad_finite_difference", grad_err, 1e-5);

    // losses (1, 2), alpha 1, tau 0; values from a 30-digit evaluation
    let w = fedvsr_weights(&[1.0, 2.0], 1.0, 0.0)?;
    let worked = (w.weights[0] - 0.520_001_000_215_622)
        .abs()
        .max((w.weights[1] - 0.479_998_999_784_378).abs())
        .max((w.hellinger - 0.120_006_001_293_732).abs());
    report.push("fedvsr_two_client_example", worked, 1e-12);
    report.push(
        "hellinger_closed_form",
        (hellinger(&[0.5, 0.5], &[1.0, 0.0])? - 0.541196).abs(),
        1e-6,
    );

    let mut median_diff = 0.0f64;
    for n in 1..=9 {
        let updates: Vec<ClientUpdate> = (0..n)
            .map(|i| ClientUpdate {
                client_id: i,
                params: ParamVector::from_raw((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(), "v"),
                mean_loss: 1.0,
            })
            .collect();
        let m = coordinate_median_params(&updates)?;
        for j in 0..5 {
            let col: Vec<f64> = updates.iter().map(|u| u.params.values()[j]).collect();
            median_diff = median_diff.max((m.values()[j] - reference::median(&col)).abs());
        }
    }
    report.push("median_matches_sort_oracle", median_diff, 0.0);

    let d = Dims::new(2, 16, 16, 1);
    let (a, b) = (random_volume(&mut rng, d), random_volume(&mut rng, d));
    report.push(
        "psnr_matches_oracle",
        (compute_psnr(&a, &b, 1.0)? - reference::psnr(&a, &b, 1.0)).abs(),
        1e-10,
    );
    report.push("ssim_matches_oracle", (compute_ssim(&a, &b)? - reference::ssim(&a, &b)).abs(), 1e-8);

    let p = ParamVector::from_raw((0..100).map(|_| rng.gen_range(-10.0..10.0)).collect(), "v");
    let back = deserialize_params(&serialize_params(&p), "v")?;
    report.push("checkpoint_roundtrip", if back.bitwise_eq(&p) { 0.0 } else { 1.0 }, 0.0);

    Ok(report)
}
