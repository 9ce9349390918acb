//! Synthetic valley videos: a Gaussian dip of varying depth and radius moving
//! along a known trajectory on a constant background, optional Poisson noise,
//! and trajectory comparison.

use std::f64::consts::PI;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::videotensor::{TrajectoryRecord, VideoTensor};

pub const DEFAULT_BASELINE: f64 = 140.0;
pub const DEFAULT_DIMS: [usize; 3] = [41, 41, 100];

/// One piece of a piecewise amplitude profile on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Constant(f64),
    /// `offset + amplitude·cos(2πt / period)`.
    Cosine { offset: f64, amplitude: f64, period: f64 },
}

impl Piece {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            Piece::Constant(c) => c,
            Piece::Cosine {
                offset,
                amplitude,
                period,
            } => offset + amplitude * (2.0 * PI * t / period).cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub piece: Piece,
}

/// Depth profile `A(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Amplitude {
    Constant(f64),
    /// Contiguous segments; `t` outside their union is an error.
    Piecewise(Vec<Segment>),
}

impl Amplitude {
    /// 60, then a 10-frame cosine, a gap with no dip on `[55, 65)`, and the
    /// cosine again until 100.
    pub fn paper() -> Self {
        let wave = Piece::Cosine {
            offset: 30.0,
            amplitude: 30.0,
            period: 10.0,
        };
        Amplitude::Piecewise(vec![
            Segment {
                start: 0.0,
                end: 20.0,
                piece: Piece::Constant(60.0),
            },
            Segment {
                start: 20.0,
                end: 55.0,
                piece: wave,
            },
            Segment {
                start: 55.0,
                end: 65.0,
                piece: Piece::Constant(0.0),
            },
            Segment {
                start: 65.0,
                end: 100.0,
                piece: wave,
            },
        ])
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Amplitude::Constant(a) => Ok(*a),
            Amplitude::Piecewise(segs) => segs
                .iter()
                .find(|s| t >= s.start && t < s.end)
                .map(|s| s.piece.eval(t))
                .ok_or_else(|| Error::Config(format!("amplitude undefined at t = {t}"))),
        }
    }
}

/// Dip radius `R(τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Constant(f64),
    /// `base + amplitude·sin(τ)`, `τ` in radians.
    Sinusoid { base: f64, amplitude: f64 },
}

impl Default for Radius {
    fn default() -> Self {
        Radius::Sinusoid {
            base: 6.0,
            amplitude: 3.0,
        }
    }
}

impl Radius {
    pub fn eval(&self, tau: f64) -> f64 {
        match *self {
            Radius::Constant(r) => r,
            Radius::Sinusoid { base, amplitude } => base + amplitude * tau.sin(),
        }
    }
}

/// Ridge position `(u(t), w(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    /// γ₁: fixed at `(20, 20)`.
    Constant { u: f64, w: f64 },
    /// γ₂: `(18 + 4·𝟙(t ≥ 60), 17 + 6·𝟙(t ≥ 30))`.
    Discontinuous,
    /// γ₃: `(20 + 3 sin(2πt/50), 20 + 2 sin(2πt/40))`.
    Oscillating,
    /// `(u0 + du·t, w0 + dw·t)`.
    Linear { u0: f64, w0: f64, du: f64, dw: f64 },
}

impl Trajectory {
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            Trajectory::Constant { u, w } => (u, w),
            Trajectory::Discontinuous => (
                18.0 + if t >= 60.0 { 4.0 } else { 0.0 },
                17.0 + if t >= 30.0 { 6.0 } else { 0.0 },
            ),
            Trajectory::Oscillating => (
                20.0 + 3.0 * (2.0 * PI * t / 50.0).sin(),
                20.0 + 2.0 * (2.0 * PI * t / 40.0).sin(),
            ),
            Trajectory::Linear { u0, w0, du, dw } => (u0 + du * t, w0 + dw * t),
        }
    }

    /// `(u'(t), w'(t))`; zero across jumps.
    pub fn derivative(&self, t: f64) -> (f64, f64) {
        match *self {
            Trajectory::Constant { .. } | Trajectory::Discontinuous => (0.0, 0.0),
            Trajectory::Oscillating => (
                3.0 * 2.0 * PI / 50.0 * (2.0 * PI * t / 50.0).cos(),
                2.0 * 2.0 * PI / 40.0 * (2.0 * PI * t / 40.0).cos(),
            ),
            Trajectory::Linear { du, dw, .. } => (du, dw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    None,
    Poisson { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Gamma1,
    Gamma2,
    Gamma3,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma1" => Ok(Preset::Gamma1),
            "gamma2" => Ok(Preset::Gamma2),
            "gamma3" => Ok(Preset::Gamma3),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; valid presets: gamma1, gamma2, gamma3"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub dims: [usize; 3],
    pub baseline: f64,
    pub amplitude: Amplitude,
    pub radius: Radius,
    pub trajectory: Trajectory,
    pub noise: Noise,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec::preset(Preset::Gamma1)
    }
}

impl SimulationSpec {
    pub fn preset(p: Preset) -> Self {
        let trajectory = match p {
            Preset::Gamma1 => Trajectory::Constant { u: 20.0, w: 20.0 },
            Preset::Gamma2 => Trajectory::Discontinuous,
            Preset::Gamma3 => Trajectory::Oscillating,
        };
        SimulationSpec {
            dims: DEFAULT_DIMS,
            baseline: DEFAULT_BASELINE,
            amplitude: Amplitude::paper(),
            radius: Radius::default(),
            trajectory,
            noise: Noise::None,
        }
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    /// Checks amplitude, radius and trajectory at every frame.
    pub fn validate(&self) -> Result<()> {
        let [w, h, t] = self.dims;
        if w == 0 || h == 0 || t == 0 {
            return Err(Error::Config(format!("dimensions must be positive, got {w}x{h}x{t}")));
        }
        if !self.baseline.is_finite() {
            return Err(Error::Config("baseline must be finite".into()));
        }
        for tau in 0..t {
            let tf = tau as f64;
            let a = self.amplitude.eval(tf)?;
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("amplitude {a} at frame {tau} is negative")));
            }
            let r = self.radius.eval(tf);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("radius {r} at frame {tau} is not positive")));
            }
            let (u, v) = self.trajectory.eval(tf);
            if !(u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64) {
                return Err(Error::Config(format!(
                    "trajectory ({u}, {v}) at frame {tau} leaves the {w}x{h} frame"
                )));
            }
        }
        Ok(())
    }

    /// Ground truth at integer frames.
    pub fn truth(&self) -> Vec<TrajectoryRecord> {
        (0..self.dims[2])
            .map(|tau| {
                let t = tau as f64;
                let (u, w) = self.trajectory.eval(t);
                let (du, dw) = self.trajectory.derivative(t);
                TrajectoryRecord {
                    tau: tau as i64,
                    u,
                    w,
                    du,
                    dw,
                    s_uu: 0.0,
                    s_uw: 0.0,
                    s_ww: 0.0,
                    q_alpha: 0.0,
                }
            })
            .collect()
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys:
    /// `preset`, `width`, `height`, `frames`, `baseline`, `amplitude`
    /// (`paper` or a constant), `radius` (`paper` or a constant),
    /// `radius_base`, `radius_amplitude`, `trajectory` (`gamma1`, `gamma2`,
    /// `gamma3`, `constant:u,w`, `linear:u0,w0,du,dw`), `noise`
    /// (`none`/`poisson`) and `seed`.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut spec = SimulationSpec::default();
        let mut seed: Option<u64> = None;
        let mut poisson = false;
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            entries.push((lineno + 1, k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        // A preset resets the trajectory, so it is applied first.
        if let Some((_, _, v)) = entries.iter().find(|(_, k, _)| k == "preset") {
            spec = SimulationSpec::preset(v.parse()?);
        }
        let num = |line: usize, key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Config(format!("line {line}: {key} expects a number, got {v:?}")))
        };
        let count = |line: usize, key: &str, v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("line {line}: {key} expects an integer, got {v:?}")))
        };
        let mut radius_base = None;
        let mut radius_amp = None;
        for (line, key, v) in &entries {
            let line = *line;
            match key.as_str() {
                "preset" => {}
                "width" => spec.dims[0] = count(line, key, v)?,
                "height" => spec.dims[1] = count(line, key, v)?,
                "frames" => spec.dims[2] = count(line, key, v)?,
                "baseline" => spec.baseline = num(line, key, v)?,
                "amplitude" => {
                    spec.amplitude = if v.eq_ignore_ascii_case("paper") {
                        Amplitude::paper()
                    } else {
                        Amplitude::Constant(num(line, key, v)?)
                    }
                }
                "radius" => {
                    spec.radius = if v.eq_ignore_ascii_case("paper") {
                        Radius::default()
                    } else {
                        Radius::Constant(num(line, key, v)?)
                    }
                }
                "radius_base" => radius_base = Some(num(line, key, v)?),
                "radius_amplitude" => radius_amp = Some(num(line, key, v)?),
                "trajectory" => spec.trajectory = parse_trajectory(line, v)?,
                "noise" => {
                    poisson = match v.to_ascii_lowercase().as_str() {
                        "none" => false,
                        "poisson" => true,
                        _ => {
                            return Err(Error::Config(format!(
                                "line {line}: noise must be none or poisson, got {v:?}"
                            )))
                        }
                    }
                }
                "seed" => {
                    seed = Some(v.parse::<u64>().map_err(|_| {
                        Error::Config(format!("line {line}: seed expects an integer, got {v:?}"))
                    })?)
                }
                other => return Err(Error::Config(format!("line {line}: unknown key {other:?}"))),
            }
        }
        if radius_base.is_some() || radius_amp.is_some() {
            let (b0, a0) = match spec.radius {
                Radius::Sinusoid { base, amplitude } => (base, amplitude),
                Radius::Constant(r) => (r, 0.0),
            };
            spec.radius = Radius::Sinusoid {
                base: radius_base.unwrap_or(b0),
                amplitude: radius_amp.unwrap_or(a0),
            };
        }
        if poisson || seed.is_some() {
            spec.noise = Noise::Poisson {
                seed: seed.unwrap_or(0),
            };
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_trajectory(line: usize, v: &str) -> Result<Trajectory> {
    let lower = v.to_ascii_lowercase();
    match lower.as_str() {
        "gamma1" => return Ok(Trajectory::Constant { u: 20.0, w: 20.0 }),
        "gamma2" => return Ok(Trajectory::Discontinuous),
        "gamma3" => return Ok(Trajectory::Oscillating),
        _ => {}
    }
    let bad = || Error::Config(format!("line {line}: cannot parse trajectory {v:?}"));
    let (kind, args) = lower.split_once(':').ok_or_else(bad)?;
    let xs: Vec<f64> = args
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match (kind.trim(), xs.as_slice()) {
        ("constant", [u, w]) => Ok(Trajectory::Constant { u: *u, w: *w }),
        ("linear", [u0, w0, du, dw]) => Ok(Trajectory::Linear {
            u0: *u0,
            w0: *w0,
            du: *du,
            dw: *dw,
        }),
        _ => Err(bad()),
    }
}

/// `f(m, n; τ) = C − A(τ)·exp(−((m − u)² + (n − w)²) / (2R²))`.
pub fn render_clean(spec: &SimulationSpec) -> Result<VideoTensor> {
    spec.validate()?;
    let [width, height, frames] = spec.dims;
    let per_frame: Vec<(f64, f64, f64, f64)> = (0..frames)
        .map(|tau| {
            let t = tau as f64;
            let (u, w) = spec.trajectory.eval(t);
            Ok((spec.amplitude.eval(t)?, spec.radius.eval(t), u, w))
        })
        .collect::<Result<_>>()?;
    let fl = width * height;
    let data: Vec<f64> = (0..fl * frames)
        .into_par_iter()
        .map(|i| {
            let (a, r, u, w) = per_frame[i / fl];
            let (m, n) = ((i % fl % width) as f64, (i % fl / width) as f64);
            let d2 = (m - u) * (m - u) + (n - w) * (n - w);
            spec.baseline - a * (-d2 / (2.0 * r * r)).exp()
        })
        .collect();
    VideoTensor::new(width, height, frames, data)
}

/// Replaces every voxel by a Poisson draw with its intensity as the rate.
/// Each voxel uses its own generator stream, so the result does not depend on
/// evaluation order or thread count.
pub fn apply_poisson(v: &VideoTensor, seed: u64) -> VideoTensor {
    let negatives = v.data().iter().filter(|&&x| x < 0.0).count();
    if negatives > 0 {
        log::warn!("{negatives} negative intensities clamped to 0 before Poisson sampling");
    }
    let data: Vec<f64> = v
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &rate)| {
            let rate = rate.max(0.0);
            if rate == 0.0 {
                return 0.0;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Poisson::new(rate)
                .map(|d| d.sample(&mut rng))
                .unwrap_or(0.0)
        })
        .collect();
    VideoTensor::new(v.width(), v.height(), v.frames(), data)
        .expect("Poisson draws are finite and the shape is unchanged")
}

/// Clean render followed by the spec's noise, if any.
pub fn render(spec: &SimulationSpec) -> Result<VideoTensor> {
    let clean = render_clean(spec)?;
    Ok(match spec.noise {
        Noise::None => clean,
        Noise::Poisson { seed } => apply_poisson(&clean, seed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub frames: usize,
    pub mean: f64,
    pub rmse: f64,
    pub max: f64,
    pub fraction_below_one: f64,
}

impl Summary {
    fn of(devs: &[f64]) -> Option<Self> {
        if devs.is_empty() {
            return None;
        }
        let n = devs.len() as f64;
        Some(Summary {
            frames: devs.len(),
            mean: devs.iter().sum::<f64>() / n,
            rmse: (devs.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
            max: devs.iter().copied().fold(0.0, f64::max),
            fraction_below_one: devs.iter().filter(|&&d| d < 1.0).count() as f64 / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub taus: Vec<i64>,
    pub deviations: Vec<f64>,
    pub summary: Summary,
    pub mask: Option<(i64, i64)>,
    /// Statistics over frames outside the mask; `None` without a mask or
    /// when every frame is masked.
    pub masked: Option<Summary>,
}

/// Per-frame spatial distances between two trajectories on the same frames.
/// `mask` is a half-open frame range excluded from the masked statistics.
pub fn evaluate(
    a: &[TrajectoryRecord],
    b: &[TrajectoryRecord],
    mask: Option<Range<i64>>,
) -> Result<EvaluationReport> {
    if a.len() != b.len() {
        return Err(Error::FrameRangeMismatch(format!(
            "{} frames vs {} frames",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::FrameRangeMismatch("no frames to compare".into()));
    }
    if let Some((ra, rb)) = a.iter().zip(b).find(|(ra, rb)| ra.tau != rb.tau) {
        return Err(Error::FrameRangeMismatch(format!(
            "frame {} does not match frame {}",
            ra.tau, rb.tau
        )));
    }
    let taus: Vec<i64> = a.iter().map(|r| r.tau).collect();
    let deviations: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ra, rb)| (ra.u - rb.u).hypot(ra.w - rb.w))
        .collect();
    let summary = Summary::of(&deviations).expect("non-empty");
    let masked = mask.as_ref().and_then(|m| {
        let kept: Vec<f64> = taus
            .iter()
            .zip(&deviations)
            .filter(|(t, _)| !m.contains(t))
            .map(|(_, &d)| d)
            .collect();
        Summary::of(&kept)
    });
    Ok(EvaluationReport {
        taus,
        deviations,
        summary,
        mask: mask.map(|m| (m.start, m.end)),
        masked,
    })
}
