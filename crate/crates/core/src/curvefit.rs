//! Frame aggregates, kernel-smoothed ridge curve, and per-frame confidence
//! regions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Sym3, Vec3};
use crate::linking::FrameScoreField;

/// Kernel support is truncated at this many bandwidths.
pub const KERNEL_SUPPORT: f64 = 6.0;

/// Score-weighted summary of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameAggregate {
    pub tau: usize,
    /// `(ū, w̄, τ)`.
    pub mean: Vec3,
    /// `(u', w', 1)`.
    pub tangent: Vec3,
    /// Weighted spatial covariance; temporal row and column are zero.
    pub covariance: Sym3,
}

impl FrameAggregate {
    /// Local linear element `p̄ + v̄_γ (t − τ)`.
    pub fn element(&self, t: f64) -> Vec3 {
        let dt = t - self.tau as f64;
        [
            self.mean[0] + self.tangent[0] * dt,
            self.mean[1] + self.tangent[1] * dt,
            self.mean[2] + dt,
        ]
    }
}

/// Aggregates one frame. `psi` and `tangents` are indexed `n·width + m`.
pub fn frame_aggregate(tau: usize, width: usize, psi: &[f64], tangents: &[[f64; 2]]) -> FrameAggregate {
    debug_assert_eq!(psi.len(), tangents.len());
    let total: f64 = psi.iter().sum();
    let (mut su, mut sw, mut tu, mut tw) = (0.0, 0.0, 0.0, 0.0);
    for (i, (&p, t)) in psi.iter().zip(tangents).enumerate() {
        su += p * (i % width) as f64;
        sw += p * (i / width) as f64;
        tu += p * t[0];
        tw += p * t[1];
    }
    let (u, w) = (su / total, sw / total);
    let (mut cuu, mut cuw, mut cww) = (0.0, 0.0, 0.0);
    for (i, &p) in psi.iter().enumerate() {
        let du = (i % width) as f64 - u;
        let dw = (i / width) as f64 - w;
        cuu += p * du * du;
        cuw += p * du * dw;
        cww += p * dw * dw;
    }
    FrameAggregate {
        tau,
        mean: [u, w, tau as f64],
        tangent: [tu / total, tw / total, 1.0],
        covariance: Sym3::new(cuu / total, cww / total, 0.0, cuw / total, 0.0, 0.0),
    }
}

/// Aggregates every frame of a score field.
pub fn aggregate_frames(scores: &FrameScoreField, tangents: &[[f64; 2]]) -> Vec<FrameAggregate> {
    let [width, height, frames] = scores.dims();
    let fl = width * height;
    (0..frames)
        .into_par_iter()
        .map(|tau| frame_aggregate(tau, width, scores.psi(tau), &tangents[tau * fl..(tau + 1) * fl]))
        .collect()
}

#[inline]
fn gaussian_kernel(z: f64) -> f64 {
    (-0.5 * z * z).exp()
}

/// Continuous curve `γ̄(t)`: Gaussian-kernel average of the local linear
/// elements of all frames within the kernel support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeCurve {
    aggregates: Vec<FrameAggregate>,
    bandwidth: f64,
}

impl RidgeCurve {
    pub fn new(aggregates: Vec<FrameAggregate>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if aggregates.is_empty() {
            return Err(Error::Config("curve needs at least one frame".into()));
        }
        Ok(RidgeCurve { aggregates, bandwidth })
    }

    pub fn aggregates(&self) -> &[FrameAggregate] {
        &self.aggregates
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn frames(&self) -> usize {
        self.aggregates.len()
    }

    /// Normalized kernel weights `(τ, w)` at `t`.
    pub fn weights(&self, t: f64) -> Result<Vec<(usize, f64)>> {
        let last = (self.aggregates.len() - 1) as f64;
        if !(t >= 0.0 && t <= last) {
            return Err(Error::Config(format!("t = {t} outside [0, {last}]")));
        }
        let reach = KERNEL_SUPPORT * self.bandwidth;
        let lo = (t - reach).ceil().max(0.0) as usize;
        let hi = (t + reach).floor().min(last) as usize;
        let mut ws: Vec<(usize, f64)> = (lo..=hi)
            .map(|tau| (tau, gaussian_kernel((t - tau as f64) / self.bandwidth)))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let total: f64 = ws.iter().map(|&(_, w)| w).sum();
        if ws.is_empty() || !(total > 0.0) {
            return Err(Error::EmptyKernelSupport(t));
        }
        ws.iter_mut().for_each(|(_, w)| *w /= total);
        Ok(ws)
    }

    /// `γ̄(t)`.
    pub fn eval(&self, t: f64) -> Result<Vec3> {
        let mut out = [0.0; 3];
        for (tau, w) in self.weights(t)? {
            let e = self.aggregates[tau].element(t);
            for k in 0..3 {
                out[k] += w * e[k];
            }
        }
        Ok(out)
    }

    /// Kernel average of the element slopes at `t`, `(u', w', 1)`.
    pub fn tangent(&self, t: f64) -> Result<Vec3> {
        let mut out = [0.0, 0.0, 1.0];
        for (tau, w) in self.weights(t)? {
            let v = self.aggregates[tau].tangent;
            out[0] += w * v[0];
            out[1] += w * v[1];
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`RidgeCurve::eval`].
pub fn kernel_smooth(aggregates: &[FrameAggregate], bandwidth: f64, t: f64) -> Result<Vec3> {
    RidgeCurve::new(aggregates.to_vec(), bandwidth)?.eval(t)
}

/// `χ²₂` upper quantile, `−2 ln α`.
pub fn chi2_quantile_2dof(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(-2.0 * alpha.ln())
}

/// Elliptical region `{p : (p − p̄)ᵀ Σ̄⁺ (p − p̄) ≤ Q}` in the frame plane,
/// restricted to the column space of `Σ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceRegion {
    pub center: Vec3,
    pub covariance: Sym3,
    /// Spatial eigenvalues of `Σ̄`, descending.
    pub eigenvalues: [f64; 2],
    /// Matching unit eigenvectors in the `(u, w)` plane.
    pub axes: [[f64; 2]; 2],
    pub quantile: f64,
}

const RANK_RTOL: f64 = 1e-10;
const MEMBERSHIP_TOL: f64 = 1e-9;

fn spatial_eigen(c: &Sym3) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (c.xx, c.xy, c.yy);
    let half_tr = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (half_tr + r, half_tr - r);
    let v1 = if r == 0.0 {
        [1.0, 0.0]
    } else if a >= d {
        let (x, y) = (l1 - d, b);
        let n = x.hypot(y);
        [x / n, y / n]
    } else {
        let (x, y) = (b, l1 - a);
        let n = x.hypot(y);
        [x / n, y / n]
    };
    ([l1, l2], [v1, [-v1[1], v1[0]]])
}

impl ConfidenceRegion {
    /// Squared Mahalanobis distance under the pseudoinverse, or `None` when
    /// `p − p̄` leaves the column space of `Σ̄` or the frame plane.
    pub fn mahalanobis_sq(&self, p: Vec3) -> Option<f64> {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let scale = 1.0f64.max(d[0].hypot(d[1]));
        if d[2].abs() > MEMBERSHIP_TOL {
            return None;
        }
        let cutoff = RANK_RTOL * self.eigenvalues[0].abs();
        let mut total = 0.0;
        for (l, v) in self.eigenvalues.iter().zip(&self.axes) {
            let c = d[0] * v[0] + d[1] * v[1];
            if *l > cutoff && *l > 0.0 {
                total += c * c / l;
            } else if c.abs() > MEMBERSHIP_TOL * scale {
                return None;
            }
        }
        Some(total)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.mahalanobis_sq(p).is_some_and(|m| m <= self.quantile)
    }
}

pub fn confidence_region(agg: &FrameAggregate, alpha: f64) -> Result<ConfidenceRegion> {
    let quantile = chi2_quantile_2dof(alpha)?;
    let (eigenvalues, axes) = spatial_eigen(&agg.covariance);
    Ok(ConfidenceRegion {
        center: agg.mean,
        covariance: agg.covariance,
        eigenvalues,
        axes,
        quantile,
    })
}
