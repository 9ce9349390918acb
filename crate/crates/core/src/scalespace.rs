//! Scale-space derivatives of a video tensor.
//!
//! Gradients and Hessians are the analytic derivatives of the Gaussian-smoothed
//! field sampled on the lattice, computed with separable 1D taps (x, then y,
//! then t) under edge-clamp padding, and multiplied by the scale factors
//! `σ, σ, δ` (gradient) and `σ², σδ, δ²` (Hessian blocks).
//!
//! Taps are truncated at `ceil(truncate · scale)` and corrected so that the
//! smoothing tap sums to one, the first-derivative tap returns exactly 1 on a
//! unit ramp, and the second-derivative tap returns exactly 2 on `x²` while
//! annihilating constants and ramps. Derivative taps are applied in
//! paired form (`f[x-i] - f[x+i]`, `f[x-i] + f[x+i] - 2f[x]`) so a locally
//! constant input yields exact zeros.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Sym3, Vec3};
use crate::videotensor::VideoTensor;

/// Smallest admissible extent along every axis.
pub const MIN_EXTENT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    /// Spatial scale σ in pixels.
    pub sigma: f64,
    /// Temporal scale δ in frames.
    pub delta: f64,
    /// Kernel radius multiplier.
    pub truncate: f64,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams {
            sigma: 4.0,
            delta: 1.0,
            truncate: 4.0,
        }
    }
}

impl ScaleParams {
    pub fn new(sigma: f64, delta: f64) -> Self {
        ScaleParams {
            sigma,
            delta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.truncate.is_finite() && self.truncate >= 2.0) {
            return Err(Error::Config(format!(
                "truncation multiplier must be at least 2, got {}",
                self.truncate
            )));
        }
        Ok(())
    }
}

/// The 3D Gaussian `G(x, y, t; σ, δ)`.
pub fn gaussian_value(x: f64, y: f64, t: f64, params: &ScaleParams) -> f64 {
    let s2 = params.sigma * params.sigma;
    let d2 = params.delta * params.delta;
    let norm = 2.0 * std::f64::consts::PI * s2 * (2.0 * std::f64::consts::PI * d2).sqrt();
    (-(x * x + y * y) / (2.0 * s2) - t * t / (2.0 * d2)).exp() / norm
}

/// Corrected 1D Gaussian-derivative taps for one scale.
#[derive(Debug, Clone)]
pub struct Kernel1d {
    radius: usize,
    /// Smoothing taps `k0[0..=r]`, symmetric.
    smooth: Vec<f64>,
    /// First-derivative taps `k1[1..=r]` (index 0 unused), antisymmetric.
    first: Vec<f64>,
    /// Second-derivative taps `k2[1..=r]` (index 0 unused), symmetric.
    second: Vec<f64>,
}

impl Kernel1d {
    pub fn new(scale: f64, truncate: f64) -> Self {
        let radius = ((truncate * scale).ceil() as usize).max(1);
        let s2 = scale * scale;
        let g: Vec<f64> = (0..=radius)
            .map(|i| {
                let x = i as f64;
                (-x * x / (2.0 * s2)).exp()
            })
            .collect();

        let total: f64 = g[0] + 2.0 * g[1..].iter().sum::<f64>();
        let smooth: Vec<f64> = g.iter().map(|v| v / total).collect();

        // k1[i] ∝ -i·G(i); normalise so that -Σ_i i·k1[i] = 1 over both sides.
        let mut first: Vec<f64> = (0..=radius).map(|i| -(i as f64) * g[i]).collect();
        first[0] = 0.0;
        let moment1: f64 = 2.0 * (1..=radius).map(|i| i as f64 * first[i]).sum::<f64>();
        first.iter_mut().for_each(|v| *v /= -moment1);

        // k2[i] ∝ (i²/s² - 1)·G(i); centre tap implied by zero sum, normalise
        // so that Σ_i i²·k2[i] = 2.
        let mut second: Vec<f64> = (0..=radius)
            .map(|i| {
                let x = i as f64;
                (x * x / s2 - 1.0) * g[i]
            })
            .collect();
        second[0] = 0.0;
        let moment2: f64 = 2.0 * (1..=radius).map(|i| (i * i) as f64 * second[i]).sum::<f64>();
        second.iter_mut().for_each(|v| *v *= 2.0 / moment2);

        Kernel1d {
            radius,
            smooth,
            first,
            second,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Full tap vector `k[-r..=r]` for derivative `order` (0, 1 or 2), such that
    /// `out(x) = Σ_i k[i] f(x - i)`.
    pub fn full_taps(&self, order: usize) -> Vec<f64> {
        let r = self.radius;
        let mut k = vec![0.0; 2 * r + 1];
        match order {
            0 => {
                for i in 0..=r {
                    k[r + i] = self.smooth[i];
                    k[r - i] = self.smooth[i];
                }
            }
            1 => {
                for i in 1..=r {
                    k[r + i] = self.first[i];
                    k[r - i] = -self.first[i];
                }
            }
            2 => {
                let mut centre = 0.0;
                for i in 1..=r {
                    k[r + i] = self.second[i];
                    k[r - i] = self.second[i];
                    centre -= 2.0 * self.second[i];
                }
                k[r] = centre;
            }
            _ => panic!("derivative order {order} not supported"),
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    T,
}

/// One 1D pass of derivative `order` along `axis` with edge-clamp padding.
fn convolve_axis(src: &[f64], dims: [usize; 3], axis: Axis, kernel: &Kernel1d, order: usize) -> Vec<f64> {
    let [mw, nh, tf] = dims;
    let frame = mw * nh;
    let (stride, extent) = match axis {
        Axis::X => (1, mw),
        Axis::Y => (mw, nh),
        Axis::T => (frame, tf),
    };
    let r = kernel.radius;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(frame).enumerate().for_each(|(tau, chunk)| {
        for (local, o) in chunk.iter_mut().enumerate() {
            let idx = tau * frame + local;
            let pos = match axis {
                Axis::X => local % mw,
                Axis::Y => local / mw,
                Axis::T => tau,
            };
            let base = idx - pos * stride;
            let at = |p: isize| -> f64 {
                let c = p.clamp(0, extent as isize - 1) as usize;
                src[base + c * stride]
            };
            let p = pos as isize;
            *o = match order {
                0 => {
                    let mut acc = kernel.smooth[0] * src[idx];
                    for i in 1..=r {
                        acc += kernel.smooth[i] * (at(p - i as isize) + at(p + i as isize));
                    }
                    acc
                }
                1 => {
                    let mut acc = 0.0;
                    for i in 1..=r {
                        acc += kernel.first[i] * (at(p - i as isize) - at(p + i as isize));
                    }
                    acc
                }
                _ => {
                    let centre = 2.0 * src[idx];
                    let mut acc = 0.0;
                    for i in 1..=r {
                        acc += kernel.second[i] * (at(p - i as isize) + at(p + i as isize) - centre);
                    }
                    acc
                }
            };
        }
    });
    out
}

fn check_extent(v: &VideoTensor) -> Result<()> {
    if v.dims().iter().any(|&d| d < MIN_EXTENT) {
        return Err(Error::TensorTooSmall {
            dims: v.dims(),
            min: MIN_EXTENT,
        });
    }
    Ok(())
}

/// Separable derivative of orders `(ox, oy, ot)` of the smoothed field, unscaled.
pub fn smoothed_derivative(v: &VideoTensor, params: &ScaleParams, orders: [usize; 3]) -> Result<Vec<f64>> {
    params.validate()?;
    let kx = Kernel1d::new(params.sigma, params.truncate);
    let kt = Kernel1d::new(params.delta, params.truncate);
    let dims = v.dims();
    let a = convolve_axis(v.data(), dims, Axis::X, &kx, orders[0]);
    let b = convolve_axis(&a, dims, Axis::Y, &kx, orders[1]);
    Ok(convolve_axis(&b, dims, Axis::T, &kt, orders[2]))
}

/// Gaussian-smoothed field (no differentiation).
pub fn smooth(v: &VideoTensor, params: &ScaleParams) -> Result<Vec<f64>> {
    smoothed_derivative(v, params, [0, 0, 0])
}

/// Per-voxel scaled gradient and Hessian, optionally standardized.
#[derive(Debug, Clone)]
pub struct JetField {
    dims: [usize; 3],
    params: ScaleParams,
    gradients: Vec<Vec3>,
    hessians: Vec<Sym3>,
    mu: Option<f64>,
}

impl JetField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn params(&self) -> &ScaleParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn gradients(&self) -> &[Vec3] {
        &self.gradients
    }

    pub fn hessians(&self) -> &[Sym3] {
        &self.hessians
    }

    /// Median gradient norm once [`standardize`] has run.
    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    /// Raw partial derivatives `(∂x, ∂y, ∂t)` at voxel `i`, with scale
    /// factors removed.
    pub fn unscaled_gradient(&self, i: usize) -> Vec3 {
        let g = self.gradients[i];
        let s = self.params.sigma;
        let d = self.params.delta;
        [g[0] / s, g[1] / s, g[2] / d]
    }

    /// Raw second partial derivatives at voxel `i`, with scale factors and any
    /// standardization removed.
    pub fn unscaled_hessian(&self, i: usize) -> Sym3 {
        let h = self.hessians[i] * self.mu.unwrap_or(1.0);
        let s = self.params.sigma;
        let d = self.params.delta;
        Sym3::new(
            h.xx / (s * s),
            h.yy / (s * s),
            h.tt / (d * d),
            h.xy / (s * s),
            h.xt / (s * d),
            h.yt / (s * d),
        )
    }
}

/// Scale-space jets of `v`.
pub fn compute_jet(v: &VideoTensor, params: &ScaleParams) -> Result<JetField> {
    params.validate()?;
    check_extent(v)?;
    let dims = v.dims();
    let kx = Kernel1d::new(params.sigma, params.truncate);
    let kt = Kernel1d::new(params.delta, params.truncate);

    let x0 = convolve_axis(v.data(), dims, Axis::X, &kx, 0);
    let x1 = convolve_axis(v.data(), dims, Axis::X, &kx, 1);
    let x2 = convolve_axis(v.data(), dims, Axis::X, &kx, 2);

    let x0y0 = convolve_axis(&x0, dims, Axis::Y, &kx, 0);
    let x0y1 = convolve_axis(&x0, dims, Axis::Y, &kx, 1);
    let x0y2 = convolve_axis(&x0, dims, Axis::Y, &kx, 2);
    drop(x0);
    let x1y0 = convolve_axis(&x1, dims, Axis::Y, &kx, 0);
    let x1y1 = convolve_axis(&x1, dims, Axis::Y, &kx, 1);
    drop(x1);
    let x2y0 = convolve_axis(&x2, dims, Axis::Y, &kx, 0);
    drop(x2);

    let dt = convolve_axis(&x0y0, dims, Axis::T, &kt, 1);
    let dtt = convolve_axis(&x0y0, dims, Axis::T, &kt, 2);
    drop(x0y0);
    let dy = convolve_axis(&x0y1, dims, Axis::T, &kt, 0);
    let dyt = convolve_axis(&x0y1, dims, Axis::T, &kt, 1);
    let dyy = convolve_axis(&x0y2, dims, Axis::T, &kt, 0);
    let dx = convolve_axis(&x1y0, dims, Axis::T, &kt, 0);
    let dxt = convolve_axis(&x1y0, dims, Axis::T, &kt, 1);
    let dxy = convolve_axis(&x1y1, dims, Axis::T, &kt, 0);
    let dxx = convolve_axis(&x2y0, dims, Axis::T, &kt, 0);

    let s = params.sigma;
    let d = params.delta;
    let n = v.len();
    let gradients: Vec<Vec3> = (0..n).map(|i| [s * dx[i], s * dy[i], d * dt[i]]).collect();
    let hessians: Vec<Sym3> = (0..n)
        .map(|i| {
            Sym3::new(
                s * s * dxx[i],
                s * s * dyy[i],
                d * d * dtt[i],
                s * s * dxy[i],
                s * d * dxt[i],
                s * d * dyt[i],
            )
        })
        .collect();

    if let Some(i) = (0..n).find(|&i| !(gradients[i].iter().all(|c| c.is_finite()) && hessians[i].is_finite())) {
        return Err(Error::NonFiniteJet(i));
    }

    Ok(JetField {
        dims,
        params: *params,
        gradients,
        hessians,
        mu: None,
    })
}

/// Median of a non-empty sample (mean of the two central values for even sizes).
pub(crate) fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty sample");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}

/// Divides every Hessian by `μ`, the median gradient norm. Gradients are left
/// unchanged. Calling this on an already standardized field is a no-op.
pub fn standardize(mut jet: JetField) -> Result<JetField> {
    if jet.mu.is_some() {
        return Ok(jet);
    }
    let mut norms: Vec<f64> = jet.gradients.iter().map(|g| norm(*g)).collect();
    let mu = median(&mut norms);
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::DegenerateField);
    }
    jet.hessians.par_iter_mut().for_each(|h| *h = *h / mu);
    jet.mu = Some(mu);
    Ok(jet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> VideoTensor {
        VideoTensor::from_fn(21, 21, 21, |m, n, t| {
            let (m, n, t) = (m as f64, n as f64, t as f64);
            m * m + 2.0 * n * n + m * n + 3.0 * t
        })
        .unwrap()
    }

    #[test]
    fn gaussian_closed_form_values() {
        let unit = ScaleParams::new(1.0, 1.0);
        let at_origin = gaussian_value(0.0, 0.0, 0.0, &unit);
        assert!((at_origin - (2.0 * std::f64::consts::PI).powf(-1.5)).abs() < 1e-15);
        assert!((at_origin - 0.0634936359342).abs() < 1e-12);
        let wide = ScaleParams::new(2.0, 1.0);
        let expected = 1.0 / (8.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI).sqrt());
        assert!((gaussian_value(0.0, 0.0, 0.0, &wide) - expected).abs() < 1e-15);
        assert!((expected - 0.0158734).abs() < 1e-7);
        let p = ScaleParams::new(1.7, 0.6);
        assert_eq!(gaussian_value(1.3, -0.2, 2.0, &p), gaussian_value(-1.3, 0.2, -2.0, &p));
        assert!(gaussian_value(30.0, 30.0, 30.0, &p) >= 0.0);
    }

    #[test]
    fn tap_moments_are_exact() {
        for scale in [0.7, 1.0, 2.0, 4.0] {
            let k = Kernel1d::new(scale, 4.0);
            let r = k.radius() as isize;
            let moment = |order: usize, power: i32| -> f64 {
                k.full_taps(order)
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * ((j as isize - r) as f64).powi(power))
                    .sum()
            };
            assert!((moment(0, 0) - 1.0).abs() < 1e-14);
            assert!(moment(1, 0).abs() < 1e-14);
            assert!((moment(1, 1) + 1.0).abs() < 1e-14);
            assert!(moment(2, 0).abs() < 1e-14);
            assert!(moment(2, 1).abs() < 1e-14);
            assert!((moment(2, 2) - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_field_has_exactly_zero_jets() {
        let v = VideoTensor::constant(9, 8, 7, 140.0).unwrap();
        let jet = compute_jet(&v, &ScaleParams::new(1.5, 1.0)).unwrap();
        assert!(jet.gradients().iter().all(|g| *g == [0.0; 3]));
        assert!(jet.hessians().iter().all(|h| *h == Sym3::ZERO));
        assert!(matches!(standardize(jet), Err(Error::DegenerateField)));
    }

    #[test]
    fn quadratic_derivatives_match_analytic_values() {
        let v = quadratic();
        let jet = compute_jet(&v, &ScaleParams::new(1.0, 1.0)).unwrap();
        for t in 5..16 {
            for n in 5..16 {
                for m in 5..16 {
                    let i = v.index(m, n, t);
                    let h = jet.unscaled_hessian(i);
                    let g = jet.unscaled_gradient(i);
                    assert!((h.xx - 2.0).abs() < 1e-6);
                    assert!((h.yy - 4.0).abs() < 1e-6);
                    assert!((h.xy - 1.0).abs() < 1e-6);
                    assert!(h.tt.abs() < 1e-6 && h.xt.abs() < 1e-6 && h.yt.abs() < 1e-6);
                    assert!((g[2] - 3.0).abs() < 1e-6);
                    assert!((g[0] - (2.0 * m as f64 + n as f64)).abs() < 1e-6);
                    assert!((g[1] - (4.0 * n as f64 + m as f64)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn ramp_has_unit_slope_and_no_curvature() {
        let v = VideoTensor::from_fn(15, 15, 15, |m, _, _| m as f64).unwrap();
        let jet = compute_jet(&v, &ScaleParams::new(1.0, 1.0)).unwrap();
        for t in 5..10 {
            for n in 5..10 {
                for m in 5..10 {
                    let i = v.index(m, n, t);
                    let g = jet.unscaled_gradient(i);
                    assert!((g[0] - 1.0).abs() < 1e-8);
                    assert!(g[1].abs() < 1e-12 && g[2].abs() < 1e-12);
                    assert!(jet.unscaled_hessian(i).max_abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn scale_factors_follow_the_block_pattern() {
        let v = quadratic();
        let p = ScaleParams::new(1.5, 0.8);
        let jet = compute_jet(&v, &p).unwrap();
        let i = v.index(10, 10, 10);
        let g = jet.gradients()[i];
        let raw = jet.unscaled_gradient(i);
        assert_eq!(g[0], raw[0] * 1.5);
        assert!((g[2] - 0.8 * 3.0).abs() < 1e-9);
        let h = jet.hessians()[i];
        assert!((h.xx - 1.5 * 1.5 * 2.0).abs() < 1e-9);
        assert!((h.xy - 1.5 * 1.5 * 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_small_tensors_and_bad_params() {
        let v = VideoTensor::constant(2, 5, 5, 1.0).unwrap();
        assert!(matches!(
            compute_jet(&v, &ScaleParams::default()),
            Err(Error::TensorTooSmall { .. })
        ));
        let v = VideoTensor::constant(5, 5, 5, 1.0).unwrap();
        let bad = ScaleParams {
            truncate: 1.0,
            ..Default::default()
        };
        assert!(matches!(compute_jet(&v, &bad), Err(Error::Config(_))));
        assert!(ScaleParams::new(0.0, 1.0).validate().is_err());
        assert!(ScaleParams::new(1.0, -1.0).validate().is_err());
    }

    #[test]
    fn median_handles_both_parities() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [2.0; 6]), 2.0);
    }

    #[test]
    fn standardize_halves_hessians_when_every_norm_is_two() {
        let gradients = vec![[2.0, 0.0, 0.0], [0.0, -2.0, 0.0], [1.2, 1.6, 0.0], [0.0, 0.0, 2.0]];
        let hessians = vec![
            Sym3::new(1.0, -2.0, 3.0, 0.5, -0.25, 4.0),
            Sym3::identity(),
            Sym3::ZERO,
            Sym3::diag(-6.0, 8.0, 1.0),
        ];
        let jet = JetField {
            dims: [2, 2, 1],
            params: ScaleParams::default(),
            gradients,
            hessians: hessians.clone(),
            mu: None,
        };
        let std = standardize(jet).unwrap();
        assert_eq!(std.mu(), Some(2.0));
        for (a, b) in hessians.iter().zip(std.hessians()) {
            assert_eq!(*a * 0.5, *b);
        }
        assert_eq!(std.gradients()[2], [1.2, 1.6, 0.0]);
    }
}
