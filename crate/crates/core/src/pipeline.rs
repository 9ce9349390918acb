//! End-to-end detection: optional negation, jets, standardization, voxel
//! scores, linking, aggregation and smoothing.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::curvefit::{aggregate_frames, chi2_quantile_2dof, confidence_region, ConfidenceRegion, RidgeCurve};
use crate::error::{Error, Result};
use crate::linking::{accumulate_scores, FrameScoreField, TransitionParams, Window};
use crate::scalespace::{compute_jet, standardize, ScaleParams};
use crate::scoring::{score_field, ScoringParams, DEFAULT_TANGENT_CAP};
use crate::videotensor::{TrajectoryRecord, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectConfig {
    pub scale: ScaleParams,
    /// Spatial speed bound of candidate tangents, pixels/frame.
    pub tangent_cap: f64,
    pub window: Window,
    /// Gaussian kernel bandwidth `h`, frames.
    pub bandwidth: f64,
    /// Confidence-region level.
    pub alpha: f64,
    /// Track a valley (`−f`) instead of a ridge.
    pub negate: bool,
    /// Merge the gradient-yielded branch into weights and directions.
    pub hatted: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            scale: ScaleParams::default(),
            tangent_cap: DEFAULT_TANGENT_CAP,
            window: Window::default(),
            bandwidth: 1.0,
            alpha: 0.05,
            negate: false,
            hatted: true,
        }
    }
}

impl DetectConfig {
    /// Defaults with negation, for dark features on a bright background.
    pub fn valley() -> Self {
        DetectConfig {
            negate: true,
            ..Default::default()
        }
    }

    pub fn scoring(&self) -> ScoringParams {
        ScoringParams {
            tangent_cap: self.tangent_cap,
            use_hatted: self.hatted,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        self.scoring().validate()?;
        TransitionParams::new(self.window).validate()?;
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::Config(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        chi2_quantile_2dof(self.alpha)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimes {
    pub jets: f64,
    pub standardize: f64,
    pub scoring: f64,
    pub linking: f64,
    pub curve: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.jets + self.standardize + self.scoring + self.linking + self.curve
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub config: DetectConfig,
    pub dims: [usize; 3],
    /// Median gradient norm used for standardization.
    pub mu: f64,
    pub max_psi: Vec<f64>,
    /// Share of voxels where the gradient-yielded branch was merged.
    pub hatted_fraction: f64,
    /// Share of voxels with a vanishing transverse Hessian block.
    pub eta_degenerate_fraction: f64,
    /// Wall-clock seconds per stage.
    pub seconds: StageTimes,
}

impl Diagnostics {
    pub fn mean_max_psi(&self) -> f64 {
        self.max_psi.iter().sum::<f64>() / self.max_psi.len() as f64
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "dims            {} x {} x {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(s, "sigma           {}", c.scale.sigma);
        let _ = writeln!(s, "delta           {}", c.scale.delta);
        let _ = writeln!(s, "truncate        {}", c.scale.truncate);
        let _ = writeln!(s, "tangent_cap     {}", c.tangent_cap);
        let _ = writeln!(s, "window          {}", c.window);
        let _ = writeln!(s, "bandwidth       {}", c.bandwidth);
        let _ = writeln!(s, "alpha           {}", c.alpha);
        let _ = writeln!(s, "negate          {}", c.negate);
        let _ = writeln!(s, "hatted          {}", c.hatted);
        let _ = writeln!(s, "mu              {:.6e}", self.mu);
        let _ = writeln!(s, "hatted_fraction {:.6}", self.hatted_fraction);
        let _ = writeln!(s, "eta_degenerate  {:.6}", self.eta_degenerate_fraction);
        let _ = writeln!(s, "mean_max_psi    {:.6}", self.mean_max_psi());
        let t = &self.seconds;
        let _ = writeln!(
            s,
            "seconds         jets {:.3} standardize {:.3} scoring {:.3} linking {:.3} curve {:.3}",
            t.jets, t.standardize, t.scoring, t.linking, t.curve
        );
        let _ = writeln!(s, "tau max_psi");
        for (tau, p) in self.max_psi.iter().enumerate() {
            let _ = writeln!(s, "{tau} {p:.6}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub curve: RidgeCurve,
    pub scores: FrameScoreField,
    /// Spatial candidate tangents per voxel.
    pub tangents: Vec<[f64; 2]>,
    pub diagnostics: Diagnostics,
}

impl Detection {
    pub fn regions(&self) -> Vec<ConfidenceRegion> {
        self.curve
            .aggregates()
            .iter()
            .map(|a| confidence_region(a, self.diagnostics.config.alpha).expect("alpha validated"))
            .collect()
    }

    /// One record per frame: `γ̄(τ)`, the kernel-averaged tangent, and the
    /// frame covariance with its region quantile.
    pub fn records(&self) -> Result<Vec<TrajectoryRecord>> {
        let q = chi2_quantile_2dof(self.diagnostics.config.alpha)?;
        self.curve
            .aggregates()
            .iter()
            .map(|a| {
                let t = a.tau as f64;
                let g = self.curve.eval(t)?;
                let v = self.curve.tangent(t)?;
                Ok(TrajectoryRecord {
                    tau: a.tau as i64,
                    u: g[0],
                    w: g[1],
                    du: v[0],
                    dw: v[1],
                    s_uu: a.covariance.xx,
                    s_uw: a.covariance.xy,
                    s_ww: a.covariance.yy,
                    q_alpha: q,
                })
            })
            .collect()
    }

    /// `γ̄` on a uniform grid with `k` samples per frame interval.
    pub fn dense(&self, k: usize) -> Result<Vec<[f64; 3]>> {
        if k == 0 {
            return Err(Error::Config("oversampling factor must be at least 1".into()));
        }
        let last = self.curve.frames() - 1;
        (0..=last * k)
            .map(|i| {
                let t = if i == last * k { last as f64 } else { i as f64 / k as f64 };
                self.curve.eval(t).map(|g| [t, g[0], g[1]])
            })
            .collect()
    }
}

fn seconds_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Runs the full chain on `v`.
pub fn detect(v: &VideoTensor, cfg: &DetectConfig) -> Result<Detection> {
    cfg.validate()?;
    let mut times = StageTimes::default();
    let [width, height, frames] = v.dims();

    let start = Instant::now();
    let jet = if cfg.negate {
        compute_jet(&v.negate(), &cfg.scale)?
    } else {
        compute_jet(v, &cfg.scale)?
    };
    times.jets = seconds_since(start);

    let start = Instant::now();
    let jet = standardize(jet)?;
    let mu = jet.mu().expect("standardized");
    times.standardize = seconds_since(start);

    let start = Instant::now();
    let voxels = score_field(&jet, &cfg.scoring())?;
    drop(jet);
    let log_weights: Vec<f64> = voxels.iter().map(|s| s.log_weight).collect();
    let tangents: Vec<[f64; 2]> = voxels.iter().map(|s| s.tangent).collect();
    let n = voxels.len() as f64;
    let hatted_fraction = voxels.iter().filter(|s| s.hatted_used).count() as f64 / n;
    let eta_degenerate_fraction = voxels.iter().filter(|s| s.eta_degenerate).count() as f64 / n;
    drop(voxels);
    times.scoring = seconds_since(start);

    let start = Instant::now();
    let scores = accumulate_scores(
        [width, height, frames],
        &log_weights,
        &tangents,
        &TransitionParams::new(cfg.window),
    )?;
    times.linking = seconds_since(start);

    let start = Instant::now();
    let curve = RidgeCurve::new(aggregate_frames(&scores, &tangents), cfg.bandwidth)?;
    times.curve = seconds_since(start);

    let max_psi = (0..frames).map(|tau| scores.max_psi(tau)).collect();
    log::info!(
        "detected {frames} frames in {:.3} s (mu = {mu:.6e})",
        times.total()
    );
    Ok(Detection {
        curve,
        scores,
        tangents,
        diagnostics: Diagnostics {
            config: *cfg,
            dims: [width, height, frames],
            mu,
            max_psi,
            hatted_fraction,
            eta_degenerate_fraction,
            seconds: times,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::{render_clean, Preset, SimulationSpec};

    fn small_blob() -> VideoTensor {
        VideoTensor::from_fn(21, 21, 12, |m, n, t| {
            let (u, w) = (10.0 + 0.2 * t as f64, 10.0);
            let d2 = (m as f64 - u).powi(2) + (n as f64 - w).powi(2);
            100.0 - 40.0 * (-d2 / 18.0).exp()
        })
        .unwrap()
    }

    #[test]
    fn constant_input_is_degenerate() {
        let v = VideoTensor::constant(9, 9, 9, 140.0).unwrap();
        assert!(matches!(
            detect(&v, &DetectConfig::default()),
            Err(Error::DegenerateField)
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let v = small_blob();
        for cfg in [
            DetectConfig {
                bandwidth: 0.0,
                ..DetectConfig::valley()
            },
            DetectConfig {
                alpha: 1.5,
                ..DetectConfig::valley()
            },
            DetectConfig {
                window: Window::Radius(0),
                ..DetectConfig::valley()
            },
            DetectConfig {
                tangent_cap: -1.0,
                ..DetectConfig::valley()
            },
        ] {
            assert!(matches!(detect(&v, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn tracks_a_moving_dip() {
        let cfg = DetectConfig {
            scale: ScaleParams::new(2.0, 1.0),
            ..DetectConfig::valley()
        };
        let d = detect(&small_blob(), &cfg).unwrap();
        let recs = d.records().unwrap();
        assert_eq!(recs.len(), 12);
        for r in &recs[2..10] {
            let u = 10.0 + 0.2 * r.tau as f64;
            assert!((r.u - u).abs() < 0.5 && (r.w - 10.0).abs() < 0.5, "{r:?}");
            assert!((r.q_alpha - 5.991464547107979).abs() < 1e-12);
        }
        for tau in 0..12 {
            let s: f64 = d.scores.psi(tau).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.diagnostics.max_psi.len(), 12);
        assert!(d.diagnostics.to_text().contains("window          7"));
        let dense = d.dense(4).unwrap();
        assert_eq!(dense.len(), 45);
        assert_eq!(dense.last().unwrap()[0], 11.0);
    }

    #[test]
    fn output_is_deterministic() {
        let mut spec = SimulationSpec::preset(Preset::Gamma3);
        spec.dims = [41, 41, 20];
        let v = render_clean(&spec).unwrap();
        let a = detect(&v, &DetectConfig::valley()).unwrap();
        let b = detect(&v, &DetectConfig::valley()).unwrap();
        assert_eq!(a.records().unwrap(), b.records().unwrap());
    }
}
