//! Per-frame trajectory records and their CSV encoding.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Sym3;

pub const TRAJECTORY_HEADER: &str = "tau,u,w,du,dw,s_uu,s_uw,s_ww,q_alpha";

/// One row of a trajectory file: position and tangent at an integer frame,
/// the in-frame covariance and the chi-squared region scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub tau: i64,
    pub u: f64,
    pub w: f64,
    pub du: f64,
    pub dw: f64,
    pub s_uu: f64,
    pub s_uw: f64,
    pub s_ww: f64,
    pub q_alpha: f64,
}

impl TrajectoryRecord {
    /// A record with zero covariance.
    pub fn point(tau: i64, u: f64, w: f64, du: f64, dw: f64) -> Self {
        TrajectoryRecord {
            tau,
            u,
            w,
            du,
            dw,
            s_uu: 0.0,
            s_uw: 0.0,
            s_ww: 0.0,
            q_alpha: 0.0,
        }
    }

    /// The full 3×3 covariance; the temporal row and column are zero.
    pub fn covariance(&self) -> Sym3 {
        Sym3::new(self.s_uu, self.s_ww, 0.0, self.s_uw, 0.0, 0.0)
    }

    fn values(&self) -> [f64; 8] {
        [
            self.u, self.w, self.du, self.dw, self.s_uu, self.s_uw, self.s_ww, self.q_alpha,
        ]
    }
}

/// Writes `records` as CSV. Positions must lie in `[0, width) × [0, height)`
/// and the covariance block must be finite and positive semi-definite.
pub fn write_trajectory_csv(
    path: impl AsRef<Path>,
    records: &[TrajectoryRecord],
    width: usize,
    height: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        if !r.values().iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("non-finite trajectory value at frame {}", r.tau)));
        }
        let inside = r.u >= 0.0 && r.u < width as f64 && r.w >= 0.0 && r.w < height as f64;
        if !inside {
            return Err(Error::OutOfBounds {
                tau: r.tau,
                u: r.u,
                w: r.w,
                width,
                height,
            });
        }
        let half_trace = 0.5 * (r.s_uu + r.s_ww);
        let min_eig = half_trace - (0.25 * (r.s_uu - r.s_ww).powi(2) + r.s_uw * r.s_uw).sqrt();
        if min_eig < -1e-12 * half_trace.abs().max(1.0) {
            return Err(Error::Config(format!(
                "covariance at frame {} is not positive semi-definite",
                r.tau
            )));
        }
        write!(out, "{}", r.tau).expect("string write");
        for v in r.values() {
            write!(out, ",{v:?}").expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == TRAJECTORY_HEADER => {}
        _ => return Err(Error::format(path, format!("expected header `{TRAJECTORY_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(Error::format(path, format!("row {}: expected 9 fields", i + 1)));
        }
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", i + 1));
        let tau = fields[0].parse::<i64>().map_err(|_| bad("tau"))?;
        let mut v = [0.0f64; 8];
        for (slot, (name, field)) in v.iter_mut().zip(TRAJECTORY_HEADER.split(',').skip(1).zip(&fields[1..])) {
            *slot = field.parse::<f64>().map_err(|_| bad(name))?;
        }
        records.push(TrajectoryRecord {
            tau,
            u: v[0],
            w: v[1],
            du: v[2],
            dw: v[3],
            s_uu: v[4],
            s_uw: v[5],
            s_ww: v[6],
            q_alpha: v[7],
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let recs = vec![
            TrajectoryRecord {
                tau: 0,
                u: 20.000000000000004,
                w: 19.1,
                du: -0.1,
                dw: 1.0 / 3.0,
                s_uu: 0.75,
                s_uw: 0.1,
                s_ww: 0.5,
                q_alpha: -2.0 * 0.05f64.ln(),
            },
            TrajectoryRecord::point(1, 0.0, 40.999, 0.0, 0.0),
        ];
        write_trajectory_csv(&p, &recs, 41, 41).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("tau,u,w,du,dw,s_uu,s_uw,s_ww,q_alpha\n"));
        assert_eq!(read_trajectory_csv(&p).unwrap(), recs);
    }

    #[test]
    fn rejects_out_of_bounds_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let recs = [TrajectoryRecord::point(3, 41.0, 2.0, 0.0, 0.0)];
        assert!(matches!(
            write_trajectory_csv(&p, &recs, 41, 41),
            Err(Error::OutOfBounds { tau: 3, .. })
        ));
        let recs = [TrajectoryRecord::point(3, 1.0, -0.5, 0.0, 0.0)];
        assert!(write_trajectory_csv(&p, &recs, 41, 41).is_err());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        let mut r = TrajectoryRecord::point(0, 1.0, 1.0, 0.0, 0.0);
        r.s_uu = 1.0;
        r.s_ww = 1.0;
        r.s_uw = 2.0;
        assert!(write_trajectory_csv(&p, &[r], 41, 41).is_err());
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        fs::write(&p, "t,x,y\n0,1,2\n").unwrap();
        assert!(matches!(read_trajectory_csv(&p), Err(Error::Format { .. })));
    }
}
