//! Per-voxel spectral analysis of standardized Hessians.
//!
//! The eigensolver is specialised to symmetric 3×3 input: roots of the
//! characteristic cubic in trigonometric form, a Newton polish of the
//! well-separated root, its eigenvector from the best-conditioned row cross
//! product, and an exact 2×2 rotation in the orthogonal complement for the
//! remaining pair. Eigenvalues are reported as Rayleigh quotients of the final
//! orthonormal basis.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cosine, cross, dot, norm, redirect, scale, Sym3, Vec3, E_T};

/// Relative cutoff below which singular values count as zero in
/// pseudoinversion.
pub const PINV_RTOL: f64 = 1e-10;

/// Default threshold on `‖∇̂‖ / reference_scale` for the gradient-yielded branch.
pub const HATTED_TOLERANCE: f64 = 1e-8;

/// Relative tolerance used to call two eigenvalue magnitudes tied.
const TIE_RTOL: f64 = 1e-12;

const AXES: [Vec3; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Eigenvalues ordered so that `λ₁` has the smallest magnitude and
/// `λ₂ ≥ λ₃`, with matching orthonormal eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenSystem {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl EigenSystem {
    /// `Σ λᵢ vᵢ vᵢᵀ`.
    pub fn reconstruct(&self) -> Sym3 {
        (0..3).fold(Sym3::ZERO, |acc, i| acc + Sym3::outer(self.vectors[i]) * self.values[i])
    }
}

fn char_poly(a: &Sym3, x: f64) -> (f64, f64) {
    // det(A - xI) and its derivative
    let b = a.shifted(x);
    let det = b.xx * (b.yy * b.tt - b.yt * b.yt) - b.xy * (b.xy * b.tt - b.yt * b.xt)
        + b.xt * (b.xy * b.yt - b.yy * b.xt);
    let minors = (b.yy * b.tt - b.yt * b.yt) + (b.xx * b.tt - b.xt * b.xt) + (b.xx * b.yy - b.xy * b.xy);
    (det, -minors)
}

fn newton_polish(a: &Sym3, x: f64) -> f64 {
    let (p, dp) = char_poly(a, x);
    if dp == 0.0 || p == 0.0 {
        return x;
    }
    let next = x - p / dp;
    if next.is_finite() && char_poly(a, next).0.abs() < p.abs() {
        next
    } else {
        x
    }
}

/// Unit vector orthogonal to `w`.
fn any_orthogonal(w: Vec3) -> Vec3 {
    let u = if w[0].abs() > w[1].abs() {
        [-w[2], 0.0, w[0]]
    } else {
        [0.0, w[2], -w[1]]
    };
    let n = norm(u);
    scale(u, 1.0 / n)
}

/// Eigenvector for a well-separated eigenvalue `x` of `a`.
fn separated_vector(a: &Sym3, x: f64) -> Vec3 {
    let r = a.shifted(x).to_rows();
    let c = [cross(r[0], r[1]), cross(r[0], r[2]), cross(r[1], r[2])];
    let best = (0..3)
        .max_by(|&i, &j| dot(c[i], c[i]).total_cmp(&dot(c[j], c[j])))
        .expect("three candidates");
    let n = norm(c[best]);
    if n > 0.0 {
        scale(c[best], 1.0 / n)
    } else {
        [1.0, 0.0, 0.0]
    }
}

/// Unordered orthonormal eigenbasis of a finite matrix with `max_abs == 1`.
fn eigenbasis_unit(a: &Sym3) -> [Vec3; 3] {
    let q = a.trace() / 3.0;
    let b = a.shifted(q);
    let p2 = b.frobenius_sq() / 6.0;
    if p2 == 0.0 {
        return AXES;
    }
    let p = p2.sqrt();
    let c = b / p;
    let half_det = (0.5
        * (c.xx * (c.yy * c.tt - c.yt * c.yt) - c.xy * (c.xy * c.tt - c.yt * c.xt)
            + c.xt * (c.xy * c.yt - c.yy * c.xt)))
        .clamp(-1.0, 1.0);
    let phi = half_det.acos() / 3.0;
    let third = 2.0 * std::f64::consts::PI / 3.0;
    // largest when half_det >= 0 is the isolated root, otherwise the smallest
    let isolated = if half_det >= 0.0 {
        q + 2.0 * p * phi.cos()
    } else {
        q + 2.0 * p * (phi + third).cos()
    };
    let isolated = newton_polish(a, isolated);
    let v0 = separated_vector(a, isolated);

    let u = any_orthogonal(v0);
    let w = cross(v0, u);
    let au = a.mul_vec(u);
    let aw = a.mul_vec(w);
    let (m00, m01, m11) = (dot(u, au), dot(u, aw), dot(w, aw));
    // Jacobi rotation diagonalising [[m00, m01], [m01, m11]]
    let (cs, sn) = if m01 == 0.0 {
        (1.0, 0.0)
    } else {
        let tau = (m11 - m00) / (2.0 * m01);
        let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
        let cs = 1.0 / (1.0 + t * t).sqrt();
        (cs, t * cs)
    };
    let v1 = [
        cs * u[0] - sn * w[0],
        cs * u[1] - sn * w[1],
        cs * u[2] - sn * w[2],
    ];
    let v2 = [
        sn * u[0] + cs * w[0],
        sn * u[1] + cs * w[1],
        sn * u[2] + cs * w[2],
    ];
    [v0, v1, v2]
}

/// Symmetric 3×3 eigendecomposition with the ridge ordering: `λ₁` has minimal
/// magnitude (ties go to the eigenvector most aligned with the time axis),
/// then `λ₂ ≥ λ₃`. Each eigenvector is redirected to a non-negative temporal
/// component (first nonzero coordinate positive when that component is zero).
pub fn eig3_symmetric(h: &Sym3) -> Result<EigenSystem> {
    if !h.is_finite() {
        return Err(Error::Config("non-finite matrix passed to eigensolver".into()));
    }
    let s = h.max_abs();
    let vectors = if s == 0.0 { AXES } else { eigenbasis_unit(&(*h / s)) };
    let values = vectors.map(|v| h.quad(v));

    let largest = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tie = TIE_RTOL * largest;
    let mut first = 0;
    for i in 1..3 {
        let (ai, af) = (values[i].abs(), values[first].abs());
        let better = if (ai - af).abs() <= tie {
            vectors[i][2].abs() > vectors[first][2].abs()
        } else {
            ai < af
        };
        if better {
            first = i;
        }
    }
    let mut rest: Vec<usize> = (0..3).filter(|&i| i != first).collect();
    if values[rest[0]] < values[rest[1]] {
        rest.swap(0, 1);
    }
    let order = [first, rest[0], rest[1]];
    Ok(EigenSystem {
        values: order.map(|i| values[i]),
        vectors: order.map(|i| redirect(vectors[i])),
    })
}

/// `H⁺ g` using an existing decomposition of `H`.
pub fn pseudo_inverse_apply(eig: &EigenSystem, g: Vec3) -> Vec3 {
    let largest = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if largest == 0.0 {
        return [0.0; 3];
    }
    let cutoff = PINV_RTOL * largest;
    let mut out = [0.0; 3];
    for (lam, v) in eig.values.iter().zip(&eig.vectors) {
        if lam.abs() > cutoff {
            let c = dot(*v, g) / lam;
            for k in 0..3 {
                out[k] += c * v[k];
            }
        }
    }
    out
}

/// Newton-normalized gradient `H⁺ g` (not redirected).
pub fn normalized_gradient(g: Vec3, h: &Sym3) -> Result<Vec3> {
    Ok(pseudo_inverse_apply(&eig3_symmetric(h)?, g))
}

/// Gradient-yielded approximations of the ridge quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HattedFeatures {
    pub direction: Vec3,
    pub lambda: f64,
    pub rho: f64,
    pub theta: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub eta: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoxelFeatures {
    /// Ridge direction `v = v₁` with `⟨v, e_t⟩ ≥ 0`.
    pub direction: Vec3,
    /// Curvature proxy `λ = λ₁`.
    pub lambda: f64,
    pub eigenvalues: [f64; 3],
    pub rho: f64,
    pub theta: f64,
    pub eta: f64,
    pub kappa: f64,
    /// Set when `λ₂² + λ₃² = 0`; `eta` is then 0.
    pub eta_degenerate: bool,
    /// `H⁺ g`, redirected to a non-negative temporal component.
    pub normalized_gradient: Vec3,
    /// `None` when the gradient-yielded branch is unavailable at this voxel.
    pub hatted: Option<HattedFeatures>,
}

impl VoxelFeatures {
    pub fn hatted_available(&self) -> bool {
        self.hatted.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureOptions {
    /// The hatted branch is dropped when `‖∇̂‖ < hatted_tolerance · reference_scale`.
    pub hatted_tolerance: f64,
    /// Intensity scale of the gradients (the standardization constant μ), so
    /// that the availability test does not depend on input units.
    pub reference_scale: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            hatted_tolerance: HATTED_TOLERANCE,
            reference_scale: 1.0,
        }
    }
}

/// `2λ₂λ₃ / (λ₂² + λ₃²)`, or `None` when both vanish.
pub fn eta(l2: f64, l3: f64) -> Option<f64> {
    let denom = l2 * l2 + l3 * l3;
    if denom < f64::MIN_POSITIVE {
        None
    } else {
        Some((2.0 * l2 * l3 / denom).clamp(-1.0, 1.0))
    }
}

fn hatted(h: &Sym3, g: Vec3, nabla_hat: Vec3, opts: &FeatureOptions) -> Option<HattedFeatures> {
    let n = norm(nabla_hat);
    if !(n >= opts.hatted_tolerance * opts.reference_scale) || n == 0.0 {
        return None;
    }
    let direction = scale(nabla_hat, 1.0 / n);
    let lambda = h.quad(direction);
    let frob2 = h.frobenius_sq();
    let xi1 = h.trace() - lambda;
    let xi2 = 0.5 * (xi1 * xi1 - (frob2 - lambda * lambda));
    let denom = xi1 * xi1 - 2.0 * xi2;
    if !(denom > 1e-12 * frob2) {
        return None;
    }
    Some(HattedFeatures {
        direction,
        lambda,
        rho: cosine(direction, E_T).abs(),
        theta: cosine(direction, g).abs(),
        xi1,
        xi2,
        eta: 2.0 * xi2 / denom,
        kappa: xi2 - lambda * lambda,
    })
}

/// Ridge quantities at one voxel from its scaled gradient `g` and
/// standardized Hessian `h`.
pub fn voxel_features(g: Vec3, h: &Sym3, opts: &FeatureOptions) -> Result<VoxelFeatures> {
    let eig = eig3_symmetric(h)?;
    let direction = eig.vectors[0];
    let [l1, l2, l3] = eig.values;
    let (eta, eta_degenerate) = match eta(l2, l3) {
        Some(e) => (e, false),
        None => (0.0, true),
    };
    let nabla_hat = redirect(pseudo_inverse_apply(&eig, g));
    Ok(VoxelFeatures {
        direction,
        lambda: l1,
        eigenvalues: eig.values,
        rho: direction[2].abs(),
        theta: cosine(direction, g).abs(),
        eta,
        kappa: l2 * l3 - l1 * l1,
        eta_degenerate,
        normalized_gradient: nabla_hat,
        hatted: hatted(h, g, nabla_hat, opts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sub;
    use rand::{Rng, SeedableRng};

    fn residual(h: &Sym3, e: &EigenSystem) -> f64 {
        (0..3)
            .map(|i| norm(sub(h.mul_vec(e.vectors[i]), scale(e.vectors[i], e.values[i]))))
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix_uses_coordinate_axes() {
        let e = eig3_symmetric(&Sym3::diag(-0.5, -2.0, -3.0)).unwrap();
        assert_eq!(e.values, [-0.5, -2.0, -3.0]);
        assert_eq!(e.vectors, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn identity_prefers_the_time_axis() {
        let e = eig3_symmetric(&Sym3::identity()).unwrap();
        assert_eq!(e.values, [1.0; 3]);
        assert_eq!(e.vectors[0], E_T);
        assert!((e.reconstruct() - Sym3::identity()).frobenius() < 1e-12);
        let z = eig3_symmetric(&Sym3::ZERO).unwrap();
        assert_eq!(z.values, [0.0; 3]);
        assert_eq!(z.vectors[0], E_T);
    }

    #[test]
    fn random_matrices_have_small_residuals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut r = || rng.random_range(-1.0..1.0);
            let h = Sym3::new(r(), r(), r(), r(), r(), r());
            let e = eig3_symmetric(&h).unwrap();
            assert!(residual(&h, &e) <= 1e-10);
            assert!((e.reconstruct() - h).frobenius() <= 1e-10);
            for i in 0..3 {
                assert!((norm(e.vectors[i]) - 1.0).abs() <= 1e-12);
                assert!(e.vectors[i][2] >= 0.0);
                for j in i + 1..3 {
                    assert!(dot(e.vectors[i], e.vectors[j]).abs() <= 1e-10);
                }
            }
            assert!(e.values[0].abs() <= e.values[1].abs() && e.values[0].abs() <= e.values[2].abs());
            assert!(e.values[1] >= e.values[2]);
        }
    }

    #[test]
    fn near_degenerate_spectra_stay_accurate() {
        let cases = [
            Sym3::new(1.0, 1.0, 1.0 + 1e-9, 1e-12, 0.0, 0.0),
            Sym3::new(2.0, 2.0, -1.0, 0.0, 0.0, 0.0),
            Sym3::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
            Sym3::new(1e-200, 2e-200, 0.0, 1e-200, 0.0, 0.0),
            Sym3::new(1e150, -1e150, 3e150, 0.0, 2e150, 0.0),
        ];
        for h in cases {
            let e = eig3_symmetric(&h).unwrap();
            let s = h.max_abs();
            assert!(residual(&h, &e) <= 1e-10 * s, "{h:?}");
            assert!((e.reconstruct() - h).frobenius() <= 1e-10 * s, "{h:?}");
        }
    }

    #[test]
    fn rejects_nonfinite_input() {
        assert!(eig3_symmetric(&Sym3::diag(f64::NAN, 1.0, 1.0)).is_err());
    }

    #[test]
    fn pseudo_inverse_examples() {
        let g = normalized_gradient([2.0, 4.0, 8.0], &Sym3::diag(2.0, 4.0, 8.0)).unwrap();
        for c in g {
            assert!((c - 1.0).abs() < 1e-14);
        }
        assert_eq!(normalized_gradient([1.0, -2.0, 3.0], &Sym3::ZERO).unwrap(), [0.0; 3]);

        // rank 2: H = a aᵀ + 2 b bᵀ
        let a = [0.6, 0.0, 0.8];
        let b = [0.0, 1.0, 0.0];
        let h = Sym3::outer(a) + Sym3::outer(b) * 2.0;
        let g = [1.5 * a[0] - 0.7 * b[0], 1.5 * a[1] - 0.7 * b[1], 1.5 * a[2] - 0.7 * b[2]];
        let x = normalized_gradient(g, &h).unwrap();
        assert!(norm(sub(h.mul_vec(x), g)) < 1e-10);
    }

    #[test]
    fn eta_and_kappa_by_hand() {
        let f = voxel_features([0.0, 0.0, 1.0], &Sym3::diag(-2.0, -2.0, -0.5), &FeatureOptions::default())
            .unwrap();
        assert_eq!(f.lambda, -0.5);
        assert_eq!(f.direction, E_T);
        assert_eq!(f.rho, 1.0);
        assert_eq!(f.eta, 1.0);
        assert!((f.kappa - 3.75).abs() < 1e-15);
        assert!(!f.eta_degenerate);
    }

    #[test]
    fn flat_hessian_is_eta_degenerate() {
        let f = voxel_features([0.0; 3], &Sym3::ZERO, &FeatureOptions::default()).unwrap();
        assert!(f.eta_degenerate);
        assert_eq!(f.eta, 0.0);
        assert_eq!(f.kappa, 0.0);
        assert_eq!(f.theta, 0.0);
        assert_eq!(f.rho, 1.0);
        assert!(!f.hatted_available());
    }

    #[test]
    fn rayleigh_quotient_at_an_eigenvector() {
        // g = H·e_x so ∇̂ is exactly e_x
        let h = Sym3::diag(-0.5, -2.0, -3.0);
        let f = voxel_features([-0.5, 0.0, 0.0], &h, &FeatureOptions::default()).unwrap();
        let hat = f.hatted.unwrap();
        assert_eq!(hat.direction, [1.0, 0.0, 0.0]);
        assert_eq!(hat.lambda, -0.5);
        assert!((hat.xi1 - (-5.0)).abs() < 1e-10);
        assert!((hat.xi2 - 6.0).abs() < 1e-10);
        assert!((hat.eta - f.eta).abs() < 1e-10);
        assert!((hat.kappa - f.kappa).abs() < 1e-10);
    }

    #[test]
    fn xi_identities_for_a_rotated_matrix() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut r = || rng.random_range(-1.0..1.0);
            let h = Sym3::new(r(), r(), r(), r(), r(), r());
            let e = eig3_symmetric(&h).unwrap();
            let g = h.mul_vec(e.vectors[0]);
            let f = voxel_features(g, &h, &FeatureOptions::default()).unwrap();
            if let Some(hat) = f.hatted {
                assert!((hat.xi1 - (e.values[1] + e.values[2])).abs() < 1e-10);
                assert!((hat.xi2 - e.values[1] * e.values[2]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn availability_threshold_is_relative_to_reference_scale() {
        let h = Sym3::diag(-1.0, -2.0, -3.0);
        let g = [1e-9, 0.0, 0.0];
        let strict = FeatureOptions::default();
        assert!(!voxel_features(g, &h, &strict).unwrap().hatted_available());
        let loose = FeatureOptions {
            reference_scale: 1e-3,
            ..strict
        };
        assert!(voxel_features(g, &h, &loose).unwrap().hatted_available());
    }
}
