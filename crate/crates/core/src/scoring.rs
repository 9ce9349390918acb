//! Intra-frame ridge weights and candidate tangents.
//!
//! Weights are carried as `log Φ`; the merged weight of the eigen-based and
//! gradient-yielded branches is a log-sum-exp.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenframe::{voxel_features, FeatureOptions, HattedFeatures, VoxelFeatures, HATTED_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{norm, scale, Vec3};
use crate::scalespace::JetField;

/// Default bound on the spatial speed of a candidate tangent, pixels/frame.
pub const DEFAULT_TANGENT_CAP: f64 = 3.0;

/// Spatial-stability, first-order-extremum and second-order-concavity metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntraMetrics {
    pub l_rho: f64,
    pub l_theta: f64,
    pub l_eta_kappa: f64,
}

impl IntraMetrics {
    pub fn from_quantities(rho: f64, theta: f64, eta: f64, kappa: f64) -> Self {
        IntraMetrics {
            l_rho: 2.0 * rho,
            l_theta: 2.0 * theta,
            l_eta_kappa: 2.0 * eta + 2.0 * eta * (1.0 + kappa.max(0.0)).ln(),
        }
    }

    /// `log Φ = L_ρ + L_θ + L_{η,κ}`.
    pub fn log_weight(&self) -> f64 {
        self.l_rho + self.l_theta + self.l_eta_kappa
    }
}

/// Metrics of the eigen-based quantities. Voxels flagged eta-degenerate
/// contribute `L_{η,κ} = 0`.
pub fn intra_metrics(feat: &VoxelFeatures) -> IntraMetrics {
    if feat.eta_degenerate {
        IntraMetrics {
            l_eta_kappa: 0.0,
            ..IntraMetrics::from_quantities(feat.rho, feat.theta, 0.0, 0.0)
        }
    } else {
        IntraMetrics::from_quantities(feat.rho, feat.theta, feat.eta, feat.kappa)
    }
}

/// Metrics of the gradient-yielded quantities.
pub fn hatted_metrics(hat: &HattedFeatures) -> IntraMetrics {
    IntraMetrics::from_quantities(hat.rho, hat.theta, hat.eta, hat.kappa)
}

/// `log Φ` for a set of metrics.
pub fn intra_weight(metrics: &IntraMetrics) -> f64 {
    metrics.log_weight()
}

/// `log(eᵃ + eᵇ)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Weighted merge of the eigen direction with the gradient-yielded one:
/// `v ↦ (Φv + Φ̂v̂)/(Φ + Φ̂)` renormalized, `Φ ↦ Φ + Φ̂`. Without a hatted
/// branch the inputs pass through.
pub fn merge_hatted(log_phi: f64, v: Vec3, hatted: Option<(f64, Vec3)>) -> Result<(f64, Vec3)> {
    let Some((log_phi_hat, v_hat)) = hatted else {
        return Ok((log_phi, v));
    };
    let merged = log_add_exp(log_phi, log_phi_hat);
    let a = (log_phi - merged).exp();
    let b = (log_phi_hat - merged).exp();
    let combined = [
        a * v[0] + b * v_hat[0],
        a * v[1] + b * v_hat[1],
        a * v[2] + b * v_hat[2],
    ];
    let n = norm(combined);
    if !(n >= 1e-12) {
        return Err(Error::MergeDegenerate);
    }
    Ok((merged, scale(combined, 1.0 / n)))
}

/// `v / ⟨v, e_t⟩` with its spatial part limited to `cap` pixels/frame.
/// Returns `(u', w', 1)`.
pub fn candidate_tangent(v: Vec3, cap: f64) -> Vec3 {
    let spatial = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let vt = v[2].max(0.0);
    if spatial == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    if spatial > cap * vt {
        let k = cap / spatial;
        [v[0] * k, v[1] * k, 1.0]
    } else {
        [v[0] / vt, v[1] / vt, 1.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub tangent_cap: f64,
    /// Merge the gradient-yielded branch into weights and directions.
    pub use_hatted: bool,
    pub hatted_tolerance: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            tangent_cap: DEFAULT_TANGENT_CAP,
            use_hatted: true,
            hatted_tolerance: HATTED_TOLERANCE,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tangent_cap.is_finite() && self.tangent_cap > 0.0) {
            return Err(Error::Config(format!(
                "tangent cap must be positive, got {}",
                self.tangent_cap
            )));
        }
        if !(self.hatted_tolerance.is_finite() && self.hatted_tolerance >= 0.0) {
            return Err(Error::Config("hatted tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything downstream stages need from one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoxelScore {
    /// Merged `log Φ`.
    pub log_weight: f64,
    /// Merged unit direction with `⟨·, e_t⟩ ≥ 0`.
    pub direction: Vec3,
    /// Spatial part `(u'_γ, w'_γ)` of the candidate tangent.
    pub tangent: [f64; 2],
    pub hatted_used: bool,
    pub eta_degenerate: bool,
}

/// Scores one voxel.
pub fn score_voxel(g: Vec3, h: &crate::linalg::Sym3, params: &ScoringParams, opts: &FeatureOptions) -> Result<VoxelScore> {
    let feat = voxel_features(g, h, opts)?;
    let log_phi = intra_weight(&intra_metrics(&feat));
    let hatted = if params.use_hatted {
        feat.hatted
            .map(|hat| (intra_weight(&hatted_metrics(&hat)), hat.direction))
    } else {
        None
    };
    let (log_weight, direction) = merge_hatted(log_phi, feat.direction, hatted)?;
    let t = candidate_tangent(direction, params.tangent_cap);
    Ok(VoxelScore {
        log_weight,
        direction,
        tangent: [t[0], t[1]],
        hatted_used: hatted.is_some(),
        eta_degenerate: feat.eta_degenerate,
    })
}

/// Scores every voxel of a standardized jet field, in storage order.
pub fn score_field(jet: &JetField, params: &ScoringParams) -> Result<Vec<VoxelScore>> {
    params.validate()?;
    let mu = jet
        .mu()
        .ok_or_else(|| Error::Config("jet field must be standardized before scoring".into()))?;
    let opts = FeatureOptions {
        hatted_tolerance: params.hatted_tolerance,
        reference_scale: mu,
    };
    jet.gradients()
        .par_iter()
        .zip(jet.hessians().par_iter())
        .map(|(g, h)| score_voxel(*g, h, params, &opts))
        .collect()
}
