//! Inter-frame continuity and forward/backward score accumulation.
//!
//! Consecutive-frame pixel pairs are joined by the cubic Hermite interpolant
//! through both positions with the candidate tangents as endpoint slopes; the
//! transition weight is `ψ = exp(−½ ∫‖ζ''‖²)`. Accumulated scores are kept in
//! log space and renormalized per frame.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial extent of the transition sum, in the Chebyshev metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Radius(usize),
    /// Every pixel of the neighbouring frame.
    Full,
}

impl Default for Window {
    fn default() -> Self {
        Window::Radius(7)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Radius(r) => write!(f, "{r}"),
            Window::Full => f.write_str("full"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Window::Full);
        }
        match s.parse::<usize>() {
            Ok(r) if r >= 1 => Ok(Window::Radius(r)),
            _ => Err(Error::Config(format!(
                "window must be a positive integer or \"full\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionParams {
    pub window: Window,
}

impl TransitionParams {
    pub fn new(window: Window) -> Self {
        TransitionParams { window }
    }

    pub fn validate(&self) -> Result<()> {
        match self.window {
            Window::Radius(0) => Err(Error::Config("window radius must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// `∫₀¹ ‖ζ''‖² dt` for the cubic Hermite segment from spatial position `p` to
/// `p_star` one frame later, with spatial slopes `t0` at `p` and `t1` at
/// `p_star`. Per axis this is `3(m₀ + m₁ − 2Δ)² + (m₁ − m₀)²`.
#[inline]
pub fn hermite_roughness(p: [f64; 2], p_star: [f64; 2], t0: [f64; 2], t1: [f64; 2]) -> f64 {
    let mut total = 0.0;
    for k in 0..2 {
        let d = p_star[k] - p[k];
        let a = t0[k] + t1[k] - 2.0 * d;
        let b = t1[k] - t0[k];
        total += 3.0 * a * a + b * b;
    }
    total
}

/// `log ψ = −roughness / 2`.
#[inline]
pub fn transition_weight(roughness: f64) -> f64 {
    -0.5 * roughness
}

/// Per-voxel accumulated scores, stored in the tensor's voxel order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScoreField {
    dims: [usize; 3],
    log_forward: Vec<f64>,
    log_backward: Vec<f64>,
    psi: Vec<f64>,
}

impl FrameScoreField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims[2]
    }

    fn frame_range(&self, tau: usize) -> std::ops::Range<usize> {
        let fl = self.dims[0] * self.dims[1];
        tau * fl..(tau + 1) * fl
    }

    /// Per-frame normalized `log Ψ_f`.
    pub fn log_forward(&self, tau: usize) -> &[f64] {
        &self.log_forward[self.frame_range(tau)]
    }

    /// Per-frame normalized `log Ψ_b`.
    pub fn log_backward(&self, tau: usize) -> &[f64] {
        &self.log_backward[self.frame_range(tau)]
    }

    /// Final `Ψ` over `Ω(τ)`; sums to one.
    pub fn psi(&self, tau: usize) -> &[f64] {
        &self.psi[self.frame_range(tau)]
    }

    pub fn psi_all(&self) -> &[f64] {
        &self.psi
    }

    pub fn max_psi(&self, tau: usize) -> f64 {
        self.psi(tau).iter().copied().fold(0.0, f64::max)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Shifts a log-score frame so its exponentials sum to one.
fn normalize_log(frame: &mut [f64], tau: usize) -> Result<()> {
    let total = log_sum_exp(frame);
    if !total.is_finite() {
        return Err(Error::FrameScoreCollapse(tau));
    }
    frame.iter_mut().for_each(|x| *x -= total);
    Ok(())
}

fn window_bounds(centre: usize, radius: Option<usize>, len: usize) -> std::ops::Range<usize> {
    match radius {
        None => 0..len,
        Some(r) => centre.saturating_sub(r)..(centre + r + 1).min(len),
    }
}

/// One step of either recursion: for every pixel `p` of the target frame,
/// `log Φ(p) + log Σ_q exp(prev(q) + link(q, p))` over the window about `p`.
fn propagate<F>(
    width: usize,
    height: usize,
    radius: Option<usize>,
    log_phi: &[f64],
    prev: &[f64],
    link: F,
) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    (0..width * height)
        .into_par_iter()
        .map_init(Vec::new, |terms, p| {
            let (pm, pn) = (p % width, p / width);
            terms.clear();
            for qn in window_bounds(pn, radius, height) {
                for qm in window_bounds(pm, radius, width) {
                    let q = qn * width + qm;
                    terms.push(prev[q] + link(q, p));
                }
            }
            log_phi[p] + log_sum_exp(terms)
        })
        .collect()
}

/// General accumulation with an arbitrary transition log-weight.
///
/// `log_transition(τ, q, p)` is `log ψ` from in-frame index `q` of frame `τ`
/// to in-frame index `p` of frame `τ + 1`. `radius = None` sums over the whole
/// neighbouring frame.
pub fn accumulate_with<F>(
    dims: [usize; 3],
    log_weights: &[f64],
    radius: Option<usize>,
    log_transition: F,
) -> Result<FrameScoreField>
where
    F: Fn(usize, usize, usize) -> f64 + Sync,
{
    accumulate_impl(dims, log_weights, radius, log_transition, true)
}

fn accumulate_impl<F>(
    dims: [usize; 3],
    log_weights: &[f64],
    radius: Option<usize>,
    log_transition: F,
    renormalize: bool,
) -> Result<FrameScoreField>
where
    F: Fn(usize, usize, usize) -> f64 + Sync,
{
    let [width, height, frames] = dims;
    let fl = width * height;
    if fl == 0 || frames == 0 {
        return Err(Error::NonPositiveDimension(width, height, frames));
    }
    if log_weights.len() != fl * frames {
        return Err(Error::LengthMismatch {
            expected: fl * frames,
            got: log_weights.len(),
        });
    }
    if let Some(i) = log_weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let phi = |tau: usize| &log_weights[tau * fl..(tau + 1) * fl];

    let mut forward = vec![0.0; fl * frames];
    let mut backward = vec![0.0; fl * frames];
    let (f_slice, b_slice) = (&mut forward, &mut backward);
    let (fwd, bwd) = rayon::join(
        || -> Result<()> {
            f_slice[..fl].copy_from_slice(phi(0));
            if renormalize {
                normalize_log(&mut f_slice[..fl], 0)?;
            }
            for tau in 1..frames {
                let (done, rest) = f_slice.split_at_mut(tau * fl);
                let prev = &done[(tau - 1) * fl..];
                let next = propagate(width, height, radius, phi(tau), prev, |q, p| {
                    log_transition(tau - 1, q, p)
                });
                let target = &mut rest[..fl];
                target.copy_from_slice(&next);
                if renormalize {
                    normalize_log(target, tau)?;
                } else if !log_sum_exp(target).is_finite() {
                    return Err(Error::FrameScoreCollapse(tau));
                }
            }
            Ok(())
        },
        || -> Result<()> {
            let last = frames - 1;
            b_slice[last * fl..].copy_from_slice(phi(last));
            if renormalize {
                normalize_log(&mut b_slice[last * fl..], last)?;
            }
            for tau in (0..last).rev() {
                let (head, done) = b_slice.split_at_mut((tau + 1) * fl);
                let prev = &done[..fl];
                let next = propagate(width, height, radius, phi(tau), prev, |q, p| {
                    log_transition(tau, p, q)
                });
                let target = &mut head[tau * fl..];
                target.copy_from_slice(&next);
                if renormalize {
                    normalize_log(target, tau)?;
                } else if !log_sum_exp(target).is_finite() {
                    return Err(Error::FrameScoreCollapse(tau));
                }
            }
            Ok(())
        },
    );
    fwd?;
    bwd?;

    let mut psi = vec![0.0; fl * frames];
    for tau in 0..frames {
        let range = tau * fl..(tau + 1) * fl;
        let mut log_psi: Vec<f64> = forward[range.clone()]
            .iter()
            .zip(&backward[range.clone()])
            .map(|(f, b)| 0.5 * (f + b))
            .collect();
        normalize_log(&mut log_psi, tau)?;
        for (dst, l) in psi[range].iter_mut().zip(&log_psi) {
            *dst = l.exp();
        }
    }
    if !renormalize {
        for tau in 0..frames {
            let range = tau * fl..(tau + 1) * fl;
            normalize_log(&mut forward[range.clone()], tau)?;
            normalize_log(&mut backward[range], tau)?;
        }
    }
    Ok(FrameScoreField {
        dims,
        log_forward: forward,
        log_backward: backward,
        psi,
    })
}

/// Forward/backward accumulation with Hermite transition weights.
///
/// `log_weights` holds the merged `log Φ` per voxel and `tangents` the
/// spatial candidate tangents, both in voxel order.
pub fn accumulate_scores(
    dims: [usize; 3],
    log_weights: &[f64],
    tangents: &[[f64; 2]],
    params: &TransitionParams,
) -> Result<FrameScoreField> {
    params.validate()?;
    if tangents.len() != log_weights.len() {
        return Err(Error::LengthMismatch {
            expected: log_weights.len(),
            got: tangents.len(),
        });
    }
    let [width, height, _] = dims;
    let fl = width * height;
    let radius = match params.window {
        Window::Radius(r) if r < width.max(height) => Some(r),
        _ => None,
    };
    let pos = |i: usize| [(i % width) as f64, (i / width) as f64];
    accumulate_with(dims, log_weights, radius, |tau, q, p| {
        let tq = tangents[tau * fl + q];
        let tp = tangents[(tau + 1) * fl + p];
        transition_weight(hermite_roughness(pos(q), pos(p), tq, tp))
    })
}
