//! Python bindings. Tensors and parameter vectors are wrapped as opaque
//! classes built from and read back as flat float lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use fedvsr_core::aggregation::{self, ClientUpdate};
use fedvsr_core::config::{self, ExperimentConfig};
use fedvsr_core::datasim::{self, Geometry};
use fedvsr_core::dwt3d::{self, Band, SubBands};
use fedvsr_core::federation::RoundRecord;
use fedvsr_core::losses::{self, LossConfig};
use fedvsr_core::media::{self, Dims};
use fedvsr_core::model::{self, ModelSpec, ModelState};
use fedvsr_core::{runner, verify, FedVsrError};

fn to_py(err: FedVsrError) -> PyErr {
    match err {
        FedVsrError::Io { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "VideoTensor", module = "fedvsr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyVideoTensor(fedvsr_core::VideoTensor);

#[pymethods]
impl PyVideoTensor {
    /// Build from dims `(frames, height, width, channels)` and row-major data.
    #[new]
    fn new(dims: (usize, usize, usize, usize), data: Vec<f64>) -> PyResult<Self> {
        let d = Dims::new(dims.0, dims.1, dims.2, dims.3);
        fedvsr_core::VideoTensor::new(d, data).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn zeros(dims: (usize, usize, usize, usize)) -> PyResult<Self> {
        Self::new(dims, vec![0.0; dims.0 * dims.1 * dims.2 * dims.3])
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.0.dims();
        (d.frames, d.height, d.width, d.channels)
    }

    fn tolist(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, t: usize, y: usize, x: usize, c: usize) -> PyResult<f64> {
        let (f, h, w, ch) = self.dims();
        if t >= f || y >= h || x >= w || c >= ch {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(t, y, x, c))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &media::serialize_tensor(&self.0))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        media::deserialize_tensor(data).map(Self).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("VideoTensor(dims={:?})", self.dims())
    }
}

#[pyclass(name = "ParamVector", module = "fedvsr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParamVector(fedvsr_core::ParamVector);

#[pymethods]
impl PyParamVector {
    #[new]
    fn new(values: Vec<f64>, layout_id: String) -> PyResult<Self> {
        fedvsr_core::ParamVector::new(values, layout_id).map(Self).map_err(to_py)
    }

    #[getter]
    fn layout_id(&self) -> String {
        self.0.layout_id().to_string()
    }

    fn tolist(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    /// Checkpoint bytes (`FVSRCKPT` format).
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &media::serialize_params(&self.0))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8], layout_id: &str) -> PyResult<Self> {
        media::deserialize_params(data, layout_id).map(Self).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("ParamVector(len={}, layout_id={:?})", self.0.len(), self.0.layout_id())
    }
}

#[pyfunction]
#[pyo3(signature = (pred, gt, peak = 1.0))]
fn psnr(pred: &PyVideoTensor, gt: &PyVideoTensor, peak: f64) -> PyResult<f64> {
    media::compute_psnr(&pred.0, &gt.0, peak).map_err(to_py)
}

#[pyfunction]
fn ssim(pred: &PyVideoTensor, gt: &PyVideoTensor) -> PyResult<f64> {
    media::compute_ssim(&pred.0, &gt.0).map_err(to_py)
}

/// Single-level 3D Haar transform; returns a dict keyed by band name
/// (`"LLL"`, `"LLH"`, ..., `"HHH"`).
#[pyfunction]
fn dwt3d_forward<'py>(py: Python<'py>, x: &PyVideoTensor) -> PyResult<Bound<'py, PyDict>> {
    let bands = dwt3d::dwt3d_forward(&x.0).map_err(to_py)?;
    let out = PyDict::new(py);
    for (band, t) in bands.iter() {
        out.set_item(band.name(), PyVideoTensor(t.clone()))?;
    }
    Ok(out)
}

#[pyfunction]
fn dwt3d_inverse(bands: &Bound<'_, PyDict>) -> PyResult<PyVideoTensor> {
    let mut parts = Vec::with_capacity(8);
    for band in Band::ALL {
        let item = bands
            .get_item(band.name())?
            .ok_or_else(|| PyValueError::new_err(format!("missing band {}", band.name())))?;
        parts.push(item.cast::<PyVideoTensor>()?.get().0.clone());
    }
    let arr: [fedvsr_core::VideoTensor; 8] = parts.try_into().expect("eight bands");
    let sb = SubBands::new(arr).map_err(to_py)?;
    dwt3d::dwt3d_inverse(&sb).map(PyVideoTensor).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, epsilon = losses::DEFAULT_EPSILON))]
fn charbonnier(pred: &PyVideoTensor, gt: &PyVideoTensor, epsilon: f64) -> PyResult<f64> {
    losses::charbonnier(&pred.0, &gt.0, epsilon).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, epsilon = losses::DEFAULT_EPSILON))]
fn hifr_loss(pred: &PyVideoTensor, gt: &PyVideoTensor, epsilon: f64) -> PyResult<f64> {
    losses::hifr_loss(&pred.0, &gt.0, epsilon).map_err(to_py)
}

/// Returns `(total, vsr, hifr)`.
#[pyfunction]
#[pyo3(signature = (
    pred,
    gt,
    epsilon = losses::DEFAULT_EPSILON,
    lambda_vsr = losses::DEFAULT_LAMBDA_VSR,
    lambda_hifr = losses::DEFAULT_LAMBDA_HIFR
))]
fn total_loss(pred: &PyVideoTensor, gt: &PyVideoTensor, epsilon: f64, lambda_vsr: f64, lambda_hifr: f64) -> PyResult<(f64, f64, f64)> {
    let cfg = LossConfig {
        epsilon,
        lambda_vsr,
        lambda_hifr,
        prox_mu: 0.0,
    };
    cfg.validate().map_err(to_py)?;
    let l = losses::total_loss(&pred.0, &gt.0, &cfg).map_err(to_py)?;
    Ok((l.total, l.vsr, l.hifr))
}

#[pyfunction]
fn inverse_loss_weights(losses: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    aggregation::inverse_loss_weights(&losses, alpha).map_err(to_py)
}

#[pyfunction]
fn hellinger(u: Vec<f64>, l: Vec<f64>) -> PyResult<f64> {
    aggregation::hellinger(&u, &l).map_err(to_py)
}

#[pyfunction]
fn mixing_coefficient(h: f64, tau: f64) -> PyResult<f64> {
    aggregation::mixing_coefficient(h, tau).map_err(to_py)
}

/// Returns `(weights, hellinger, mixing)`.
#[pyfunction]
#[pyo3(signature = (losses, alpha = aggregation::DEFAULT_ALPHA, tau = aggregation::DEFAULT_TAU))]
fn fedvsr_weights(losses: Vec<f64>, alpha: f64, tau: f64) -> PyResult<(Vec<f64>, f64, f64)> {
    let w = aggregation::fedvsr_weights(&losses, alpha, tau).map_err(to_py)?;
    Ok((w.weights, w.hellinger, w.mixing))
}

#[pyfunction]
fn decay_adaptive_step(alpha: f64, t: usize, total_rounds: usize) -> PyResult<f64> {
    aggregation::decay_adaptive_step(alpha, t, total_rounds).map_err(to_py)
}

fn as_updates(params: &[PyRef<'_, PyParamVector>]) -> Vec<ClientUpdate> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| ClientUpdate {
            client_id: i,
            params: p.0.clone(),
            mean_loss: 1.0,
        })
        .collect()
}

#[pyfunction]
fn weighted_average_params(params: Vec<PyRef<'_, PyParamVector>>, weights: Vec<f64>) -> PyResult<PyParamVector> {
    aggregation::weighted_average_params(&as_updates(&params), &weights)
        .map(PyParamVector)
        .map_err(to_py)
}

#[pyfunction]
fn coordinate_median_params(params: Vec<PyRef<'_, PyParamVector>>) -> PyResult<PyParamVector> {
    aggregation::coordinate_median_params(&as_updates(&params))
        .map(PyParamVector)
        .map_err(to_py)
}

fn model_spec(scale: usize, kernel: usize, hidden: usize, channels: usize) -> PyResult<ModelSpec> {
    let spec = ModelSpec {
        scale,
        kernel,
        hidden,
        channels,
    };
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

#[pyfunction]
#[pyo3(signature = (seed, scale = 2, kernel = 3, hidden = 8, channels = 1))]
fn init_params(seed: u64, scale: usize, kernel: usize, hidden: usize, channels: usize) -> PyResult<PyParamVector> {
    let spec = model_spec(scale, kernel, hidden, channels)?;
    Ok(PyParamVector(ModelState::init(spec, seed).map_err(to_py)?.into_params()))
}

#[pyfunction]
#[pyo3(signature = (params, lr, scale = 2, kernel = 3, hidden = 8, channels = 1))]
fn model_forward(
    params: &PyParamVector,
    lr: &PyVideoTensor,
    scale: usize,
    kernel: usize,
    hidden: usize,
    channels: usize,
) -> PyResult<PyVideoTensor> {
    let spec = model_spec(scale, kernel, hidden, channels)?;
    let m = ModelState::new(spec, params.0.clone()).map_err(to_py)?;
    model::model_forward(&m, &lr.0).map(PyVideoTensor).map_err(to_py)
}

/// Held-out `(lr, hr)` clip pairs at the default geometry.
#[pyfunction]
fn generate_eval_set(n_clips: usize, seed: u64) -> PyResult<Vec<(PyVideoTensor, PyVideoTensor)>> {
    let clips = datasim::generate_eval_set(n_clips, &Geometry::default(), seed).map_err(to_py)?;
    Ok(clips
        .into_iter()
        .map(|c| (PyVideoTensor(c.lr), PyVideoTensor(c.hr)))
        .collect())
}

/// Experiment configuration; same keys as the `key = value` config files.
#[pyclass(name = "ExperimentConfig", module = "fedvsr", skip_from_py_object)]
struct PyExperimentConfig(ExperimentConfig);

#[pymethods]
impl PyExperimentConfig {
    #[new]
    fn new() -> Self {
        Self(ExperimentConfig::default())
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        config::parse_config(text).map(Self).map_err(to_py)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.0
            .get(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key '{key}'")))
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).map_err(PyValueError::new_err)
    }

    fn manifest(&self) -> String {
        self.0.to_manifest()
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }
}

fn record_dict<'py>(py: Python<'py>, r: &RoundRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("round", r.round)?;
    d.set_item("strategy", r.strategy.as_str())?;
    d.set_item("selected", r.selected.clone())?;
    d.set_item("survived", r.survived.clone())?;
    d.set_item("weights", r.weights.clone())?;
    d.set_item("hellinger", r.hellinger)?;
    d.set_item("mixing", r.mixing)?;
    d.set_item("alpha", r.alpha)?;
    d.set_item("mean_client_loss", r.mean_client_loss)?;
    d.set_item("eval_psnr", r.eval_psnr)?;
    d.set_item("eval_ssim", r.eval_ssim)?;
    Ok(d)
}

/// Run an experiment in memory. Returns `(records, final_params)` where each
/// record is a dict of per-round telemetry.
#[pyfunction]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &PyExperimentConfig,
) -> PyResult<(Vec<Bound<'py, PyDict>>, PyParamVector)> {
    let cfg = config.0.clone();
    let result = py.detach(move || runner::execute(&cfg)).map_err(to_py)?;
    let records = result
        .records
        .iter()
        .map(|r| record_dict(py, r))
        .collect::<PyResult<_>>()?;
    Ok((records, PyParamVector(result.final_params)))
}

/// Run an experiment and write its manifest, metrics CSV and checkpoint
/// under `out_dir`; returns the metrics path.
#[pyfunction]
fn run(py: Python<'_>, config: &PyExperimentConfig, out_dir: PathBuf) -> PyResult<PathBuf> {
    let cfg = config.0.clone();
    let art = py.detach(move || runner::run(&cfg, &out_dir)).map_err(to_py)?;
    Ok(art.metrics_path)
}

/// Built-in property checks as `(name, passed, observed, threshold)` tuples.
#[pyfunction]
fn run_verify() -> PyResult<Vec<(String, bool, f64, f64)>> {
    let report = verify::run_verify().map_err(to_py)?;
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.observed, c.threshold))
        .collect())
}

#[pymodule]
fn fedvsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVideoTensor>()?;
    m.add_class::<PyParamVector>()?;
    m.add_class::<PyExperimentConfig>()?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(dwt3d_forward, m)?)?;
    m.add_function(wrap_pyfunction!(dwt3d_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(charbonnier, m)?)?;
    m.add_function(wrap_pyfunction!(hifr_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_loss_weights, m)?)?;
    m.add_function(wrap_pyfunction!(hellinger, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(fedvsr_weights, m)?)?;
    m.add_function(wrap_pyfunction!(decay_adaptive_step, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_average_params, m)?)?;
    m.add_function(wrap_pyfunction!(coordinate_median_params, m)?)?;
    m.add_function(wrap_pyfunction!(init_params, m)?)?;
    m.add_function(wrap_pyfunction!(model_forward, m)?)?;
    m.add_function(wrap_pyfunction!(generate_eval_set, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add("METRICS_HEADER", fedvsr_core::federation::METRICS_HEADER)?;
    Ok(())
}
