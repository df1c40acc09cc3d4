//! Synthetic video clips, box-filter degradation and client partitioning.
//!
//! Each clip starts from a periodic base pattern rendered on the HR grid.
//! Frame `t` samples that pattern at `(y - t*dy, x - t*dx)` with bilinear
//! interpolation and wrap-around, so motion is an exact translation whenever
//! the velocity is integral.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FedVsrError, Result};
use crate::media::{Dims, VideoTensor};
use crate::rng::{keyed_stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternClass {
    Sinusoid,
    Checkerboard,
    GradientNoise,
    BlobField,
}

impl PatternClass {
    pub const ALL: [PatternClass; 4] = [
        PatternClass::Sinusoid,
        PatternClass::Checkerboard,
        PatternClass::GradientNoise,
        PatternClass::BlobField,
    ];
}

/// A base pattern with its class-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pattern {
    /// `0.5 + 0.5 * contrast * sin(2*pi*(ky*y/H + kx*x/W) + phase)`, with the
    /// wave vector rounded to whole cycles per frame so it tiles.
    Sinusoid { cycles: f64, orientation: f64, phase: f64, contrast: f64 },
    Checkerboard { period: f64, contrast: f64 },
    /// Periodic value noise on a `lattice × lattice` grid with smoothstep
    /// interpolation.
    GradientNoise { lattice: usize, amplitude: f64 },
    /// Sum of periodic Gaussian bumps at random centres.
    BlobField { count: usize, radius: f64 },
}

impl Pattern {
    pub fn class(&self) -> PatternClass {
        match self {
            Pattern::Sinusoid { .. } => PatternClass::Sinusoid,
            Pattern::Checkerboard { .. } => PatternClass::Checkerboard,
            Pattern::GradientNoise { .. } => PatternClass::GradientNoise,
            Pattern::BlobField { .. } => PatternClass::BlobField,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub pattern: Pattern,
    /// Pixels per frame, `(dy, dx)`.
    pub velocity: (f64, f64),
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
}

/// Clip geometry shared by every client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub frames: usize,
    pub hr_height: usize,
    pub hr_width: usize,
    pub channels: usize,
    pub scale: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            frames: 8,
            hr_height: 32,
            hr_width: 32,
            channels: 1,
            scale: 2,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.frames % 2 != 0 {
            return Err(FedVsrError::domain(format!("frames must be even and >= 2, got {}", self.frames)));
        }
        if self.scale < 2 {
            return Err(FedVsrError::domain(format!("scale must be >= 2, got {}", self.scale)));
        }
        let m = 2 * self.scale;
        for (name, v) in [("hr_height", self.hr_height), ("hr_width", self.hr_width)] {
            if v == 0 || v % m != 0 {
                return Err(FedVsrError::domain(format!(
                    "{name} must be a positive multiple of 2*scale = {m}, got {v}"
                )));
            }
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(FedVsrError::domain(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        Ok(())
    }

    pub fn hr_dims(&self) -> Dims {
        Dims::new(self.frames, self.hr_height, self.hr_width, self.channels)
    }
}

fn render_base(spec: &SceneSpec) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let mut rng = keyed_stream(spec.seed, Purpose::ClientData, u64::MAX, 0);
    let mut base = vec![0.0; h * w];
    match spec.pattern {
        Pattern::Sinusoid { cycles, orientation, phase, contrast } => {
            let ky = (cycles * orientation.sin()).round();
            let kx = (cycles * orientation.cos()).round();
            let (ky, kx) = if ky == 0.0 && kx == 0.0 { (0.0, 1.0) } else { (ky, kx) };
            for y in 0..h {
                for x in 0..w {
                    let arg = TAU * (ky * y as f64 / h as f64 + kx * x as f64 / w as f64) + phase;
                    base[y * w + x] = 0.5 + 0.5 * contrast * arg.sin();
                }
            }
        }
        Pattern::Checkerboard { period, contrast } => {
            for y in 0..h {
                for x in 0..w {
                    let cell = ((y as f64 / period).floor() + (x as f64 / period).floor()) as i64;
                    let s = if cell.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    base[y * w + x] = 0.5 + 0.5 * contrast * s;
                }
            }
        }
        Pattern::GradientNoise { lattice, amplitude } => {
            let n = lattice.max(1);
            let grid: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
            for y in 0..h {
                for x in 0..w {
                    let gy = y as f64 * n as f64 / h as f64;
                    let gx = x as f64 * n as f64 / w as f64;
                    let (y0, x0) = (gy.floor() as usize % n, gx.floor() as usize % n);
                    let (y1, x1) = ((y0 + 1) % n, (x0 + 1) % n);
                    let (fy, fx) = (smooth(gy.fract()), smooth(gx.fract()));
                    let top = grid[y0 * n + x0] * (1.0 - fx) + grid[y0 * n + x1] * fx;
                    let bottom = grid[y1 * n + x0] * (1.0 - fx) + grid[y1 * n + x1] * fx;
                    base[y * w + x] = 0.5 + 0.5 * amplitude * (top * (1.0 - fy) + bottom * fy);
                }
            }
        }
        Pattern::BlobField { count, radius } => {
            let blobs: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.gen_range(0.0..h as f64),
                        rng.gen_range(0.0..w as f64),
                        rng.gen_range(0.4..1.0),
                    )
                })
                .collect();
            let wrap = |d: f64, n: f64| {
                let d = d.rem_euclid(n);
                d.min(n - d)
            };
            for y in 0..h {
                for x in 0..w {
                    let v: f64 = blobs
                        .iter()
                        .map(|&(cy, cx, amp)| {
                            let dy = wrap(y as f64 - cy, h as f64);
                            let dx = wrap(x as f64 - cx, w as f64);
                            amp * (-(dy * dy + dx * dx) / (2.0 * radius * radius)).exp()
                        })
                        .sum();
                    base[y * w + x] = 0.1 + v;
                }
            }
        }
    }
    base
}

/// Bilinear sample of a periodic `h × w` plane at real coordinates.
fn sample_periodic(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.rem_euclid(h as f64);
    let x = x.rem_euclid(w as f64);
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as usize % h, x0 as usize % w);
    let (y1, x1) = ((y0 + 1) % h, (x0 + 1) % w);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Render the HR clip described by `spec`, clipped to `[0, 1]`.
pub fn generate_sequence(spec: &SceneSpec) -> Result<VideoTensor> {
    let dims = Dims::new(spec.frames, spec.height, spec.width, spec.channels);
    if dims.is_empty() {
        return Err(FedVsrError::shape(format!("scene dims must be non-zero, got {dims}")));
    }
    let base = render_base(spec);
    let mut rng = keyed_stream(spec.seed, Purpose::ClientData, u64::MAX, 1);
    let tints: Vec<f64> = (0..spec.channels)
        .map(|c| if c == 0 { 1.0 } else { rng.gen_range(0.8..1.0) })
        .collect();
    let (dy, dx) = spec.velocity;
    Ok(VideoTensor::from_fn(dims, |t, y, x, c| {
        let v = sample_periodic(
            &base,
            spec.height,
            spec.width,
            y as f64 - t as f64 * dy,
            x as f64 - t as f64 * dx,
        );
        (v * tints[c]).clamp(0.0, 1.0)
    }))
}

/// `s × s` box-mean downsampling of every frame.
pub fn degrade_sequence(hr: &VideoTensor, scale: usize) -> Result<VideoTensor> {
    let d = hr.dims();
    if scale == 0 || d.height % scale != 0 || d.width % scale != 0 {
        return Err(FedVsrError::shape(format!(
            "frame {}x{} is not divisible by scale {scale}",
            d.height, d.width
        )));
    }
    let out = Dims::new(d.frames, d.height / scale, d.width / scale, d.channels);
    let norm = 1.0 / (scale * scale) as f64;
    Ok(VideoTensor::from_fn(out, |t, y, x, c| {
        let mut acc = 0.0;
        for yy in 0..scale {
            for xx in 0..scale {
                acc += hr.get(t, y * scale + yy, x * scale + xx, c);
            }
        }
        acc * norm
    }))
}

/// A paired training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub lr: VideoTensor,
    pub hr: VideoTensor,
    pub class: PatternClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionMode {
    Iid,
    NonIid,
}

impl PartitionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionMode::Iid => "iid",
            PartitionMode::NonIid => "noniid",
        }
    }
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartitionMode {
    type Err = FedVsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(PartitionMode::Iid),
            "noniid" => Ok(PartitionMode::NonIid),
            other => Err(FedVsrError::domain(format!(
                "unknown partition mode '{other}' (expected iid or noniid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    pub shards: Vec<Vec<Clip>>,
    pub mode: PartitionMode,
}

impl ClientPartition {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }
}

/// Draw a pattern of `class` with its parameters mapped from `band` ⊂ [0, 1).
/// Narrow bands give narrow parameter ranges.
fn draw_scene(
    rng: &mut ChaCha12Rng,
    class: PatternClass,
    band: (f64, f64),
    geom: &Geometry,
    seed: u64,
) -> SceneSpec {
    let mut u = || rng.gen_range(band.0..band.1);
    let pick = |u: f64, lo: f64, hi: f64| lo + u * (hi - lo);
    let pattern = match class {
        PatternClass::Sinusoid => Pattern::Sinusoid {
            orientation: pick(u(), 0.0, PI),
            cycles: pick(u(), 2.0, 6.0),
            phase: pick(u(), 0.0, TAU),
            contrast: pick(u(), 0.6, 1.0),
        },
        PatternClass::Checkerboard => Pattern::Checkerboard {
            period: pick(u(), 3.0, 10.0),
            contrast: pick(u(), 0.5, 0.9),
        },
        PatternClass::GradientNoise => Pattern::GradientNoise {
            lattice: pick(u(), 3.0, 11.0).floor() as usize,
            amplitude: pick(u(), 0.6, 1.0),
        },
        PatternClass::BlobField => Pattern::BlobField {
            count: pick(u(), 2.0, 14.0).floor() as usize,
            radius: pick(u(), 1.5, 4.0),
        },
    };
    let speed = pick(u(), 0.0, 1.5);
    let heading = pick(u(), 0.0, TAU);
    SceneSpec {
        pattern,
        velocity: (speed * heading.sin(), speed * heading.cos()),
        frames: geom.frames,
        height: geom.hr_height,
        width: geom.hr_width,
        channels: geom.channels,
        seed,
    }
}

fn make_clip(spec: &SceneSpec, scale: usize) -> Result<Clip> {
    let hr = generate_sequence(spec)?;
    let lr = degrade_sequence(&hr, scale)?;
    Ok(Clip {
        lr,
        hr,
        class: spec.pattern.class(),
    })
}

fn clip_seed(master: u64, purpose: Purpose, a: u64, b: u64) -> u64 {
    keyed_stream(master, purpose, a, b).gen()
}

/// Split synthetic clips across clients.
///
/// Non-IID: client `k` sees only class `k mod 4`, and clients sharing a class
/// get disjoint slices of that class's parameter range. IID: every clip draws
/// its class and parameters from the full mixture.
pub fn partition_clients(
    n_clients: usize,
    clips_per_client: usize,
    mode: PartitionMode,
    geom: &Geometry,
    seed: u64,
) -> Result<ClientPartition> {
    if n_clients == 0 || clips_per_client == 0 {
        return Err(FedVsrError::domain("need at least one client and one clip per client"));
    }
    geom.validate()?;
    let mut shards = Vec::with_capacity(n_clients);
    for k in 0..n_clients {
        let mut rng = keyed_stream(seed, Purpose::ClientData, k as u64, 0);
        let mut shard = Vec::with_capacity(clips_per_client);
        for j in 0..clips_per_client {
            let (class, band) = match mode {
                PartitionMode::NonIid => {
                    let class_idx = k % 4;
                    let peers = (n_clients - class_idx).div_ceil(4);
                    let slot = k / 4;
                    let width = 1.0 / peers as f64;
                    (PatternClass::ALL[class_idx], (slot as f64 * width, (slot + 1) as f64 * width))
                }
                PartitionMode::Iid => (PatternClass::ALL[rng.gen_range(0..4)], (0.0, 1.0)),
            };
            let spec = draw_scene(
                &mut rng,
                class,
                band,
                geom,
                clip_seed(seed, Purpose::ClientData, k as u64, j as u64 + 1),
            );
            shard.push(make_clip(&spec, geom.scale)?);
        }
        shards.push(shard);
    }
    Ok(ClientPartition { shards, mode })
}

/// Held-out clips drawn from the full mixture with their own stream.
pub fn generate_eval_set(n_clips: usize, geom: &Geometry, seed: u64) -> Result<Vec<Clip>> {
    geom.validate()?;
    let mut rng = keyed_stream(seed, Purpose::EvalData, 0, 0);
    (0..n_clips)
        .map(|j| {
            let class = PatternClass::ALL[j % 4];
            let spec = draw_scene(
                &mut rng,
                class,
                (0.0, 1.0),
                geom,
                clip_seed(seed, Purpose::EvalData, 1, j as u64),
            );
            make_clip(&spec, geom.scale)
        })
        .collect()
}

/// Per-clip features: mean, standard deviation, mean absolute temporal
/// difference.
pub fn clip_features(x: &VideoTensor) -> [f64; 3] {
    let n = x.len() as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let d = x.dims();
    let frame_len = d.height * d.width * d.channels;
    let mut tdiff = 0.0;
    if d.frames > 1 {
        for t in 1..d.frames {
            for i in 0..frame_len {
                tdiff += (x.data()[t * frame_len + i] - x.data()[(t - 1) * frame_len + i]).abs();
            }
        }
        tdiff /= ((d.frames - 1) * frame_len) as f64;
    }
    [mean, var.sqrt(), tdiff]
}

/// Mean pairwise Euclidean distance between per-client average feature
/// vectors. Larger means more heterogeneous silos.
pub fn heterogeneity_proxy(partition: &ClientPartition) -> f64 {
    let centroids: Vec<[f64; 3]> = partition
        .shards
        .iter()
        .map(|shard| {
            let mut acc = [0.0; 3];
            for clip in shard {
                let f = clip_features(&clip.hr);
                for i in 0..3 {
                    acc[i] += f[i] / shard.len() as f64;
                }
            }
            acc
        })
        .collect();
    let n = centroids.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..3).map(|k| (centroids[i][k] - centroids[j][k]).powi(2)).sum();
            total += d.sqrt();
            pairs += 1;
        }
    }
    total / pairs as f64
}
