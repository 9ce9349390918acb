use std::path::Path;
use std::process::{Command, Output};

use ridgetrack::videotensor::{read_trajectory_csv, write_trajectory_csv, TrajectoryRecord};
use ridgetrack::{save_tensor, TensorFormat, VideoTensor};

fn ridgetrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridgetrack"))
        .args(args)
        .env_remove("RIDGETRACK_THREADS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_the_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgetrack(&["simulate", "--preset", "gamma1", "--seed", "7", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["clean.bin", "noisy.bin", "truth.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let truth = read_trajectory_csv(dir.path().join("truth.csv")).unwrap();
    assert_eq!(truth.len(), 100);
    assert!(truth.iter().all(|r| r.u == 20.0 && r.w == 20.0));
}

#[test]
fn simulate_without_noise_has_gamma2_jumps() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgetrack(&["simulate", "--preset", "gamma2", "--no-noise", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("clean.bin").is_file());
    assert!(!dir.path().join("noisy.bin").exists());
    let truth = read_trajectory_csv(dir.path().join("truth.csv")).unwrap();
    let jumps: Vec<i64> = truth
        .windows(2)
        .filter(|w| (w[1].u - w[0].u).hypot(w[1].w - w[0].w) > 1.0)
        .map(|w| w[1].tau)
        .collect();
    assert_eq!(jumps, vec![30, 60]);
}

#[test]
fn invalid_preset_lists_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgetrack(&["simulate", "--preset", "gamma9", "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("gamma1") && e.contains("gamma2") && e.contains("gamma3"), "{e}");
}

#[test]
fn simulate_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, "width = 24\nheight = 20\nframes = 12\ntrajectory = constant:10,9\nnoise = none\n").unwrap();
    let o = ridgetrack(&["simulate", "--config", p(&cfg), "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let truth = read_trajectory_csv(dir.path().join("truth.csv")).unwrap();
    assert_eq!(truth.len(), 12);

    std::fs::write(&cfg, "widht = 24\n").unwrap();
    let o = ridgetrack(&["simulate", "--config", p(&cfg), "-o", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

fn moving_dip(dir: &Path) -> std::path::PathBuf {
    let v = VideoTensor::from_fn(24, 24, 10, |m, n, t| {
        let (u, w) = (10.0 + 0.3 * t as f64, 12.0);
        100.0 - 50.0 * (-((m as f64 - u).powi(2) + (n as f64 - w).powi(2)) / 18.0).exp()
    })
    .unwrap();
    let path = dir.join("in.bin");
    save_tensor(&v, &path, TensorFormat::Binary).unwrap();
    path
}

#[test]
fn detect_writes_trajectory_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let input = moving_dip(dir.path());
    let out = dir.path().join("run.csv");
    let o = ridgetrack(&[
        "detect", p(&input), "-o", p(&out), "--sigma", "3", "--delta", "1", "--bandwidth", "1",
        "--negate", "--oversample", "4", "--threads", "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs = read_trajectory_csv(&out).unwrap();
    assert_eq!(recs.len(), 10);
    let text = std::fs::read_to_string(dir.path().join("run.diagnostics.txt")).unwrap();
    for key in ["sigma", "delta", "truncate", "tangent_cap", "window", "bandwidth", "alpha", "negate", "hatted"] {
        assert!(text.contains(key), "{key} not echoed");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.diagnostics.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["negate"], true);
    assert_eq!(json["config"]["scale"]["sigma"], 3.0);
    let dense = std::fs::read_to_string(dir.path().join("run.dense.csv")).unwrap();
    assert_eq!(dense.lines().count(), 1 + 9 * 4 + 1);
    let s = stdout(&o);
    assert!(s.starts_with("frames 10 runtime "), "{s}");
}

#[test]
fn detect_on_a_constant_tensor_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.bin");
    save_tensor(&VideoTensor::constant(12, 12, 6, 5.0).unwrap(), &path, TensorFormat::Binary).unwrap();
    let o = ridgetrack(&["detect", p(&path), "-o", p(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("degenerate field"), "{}", stderr(&o));
}

#[test]
fn detect_exit_codes_for_io_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = ridgetrack(&["detect", p(&dir.path().join("missing.bin"))]);
    assert_eq!(o.status.code(), Some(1));
    let input = moving_dip(dir.path());
    let o = ridgetrack(&["detect", p(&input), "--sigma", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ridgetrack(&["detect", p(&input), "--window", "zero"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ridgetrack(&["detect", p(&input), "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn detect_reads_pgm_directories() {
    let dir = tempfile::tempdir().unwrap();
    let v = VideoTensor::from_fn(20, 20, 8, |m, n, _| {
        (200.0 - 120.0 * (-((m as f64 - 9.0).powi(2) + (n as f64 - 10.0).powi(2)) / 12.0).exp()).round()
    })
    .unwrap();
    let frames = dir.path().join("frames");
    save_tensor(&v, &frames, TensorFormat::PgmSequence).unwrap();
    let out = dir.path().join("t.csv");
    let o = ridgetrack(&["detect", p(&frames), "-o", p(&out), "--sigma", "2", "--negate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs = read_trajectory_csv(&out).unwrap();
    assert_eq!(recs.len(), 8);
    assert!(recs.iter().all(|r| (r.u - 9.0).abs() < 0.5 && (r.w - 10.0).abs() < 0.5));
}

#[test]
fn detect_window_full_matches_a_wide_window() {
    let dir = tempfile::tempdir().unwrap();
    let input = moving_dip(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (w, out) in [("full", &a), ("20", &b)] {
        let o = ridgetrack(&["detect", p(&input), "-o", p(out), "--negate", "--sigma", "3", "--window", w]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (ra, rb) = (read_trajectory_csv(&a).unwrap(), read_trajectory_csv(&b).unwrap());
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x.u - y.u).abs() <= 1e-10 && (x.w - y.w).abs() <= 1e-10);
    }
}

fn write_track(path: &Path, offset: (f64, f64), frames: i64) {
    let recs: Vec<TrajectoryRecord> = (0..frames)
        .map(|t| TrajectoryRecord::point(t, 10.0 + offset.0, 10.0 + offset.1, 0.0, 0.0))
        .collect();
    write_trajectory_csv(path, &recs, 40, 40).unwrap();
}

#[test]
fn evaluate_reports_deviations() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    write_track(&a, (0.0, 0.0), 70);
    write_track(&b, (3.0, 4.0), 70);
    write_track(&c, (0.0, 0.0), 50);
    let report = dir.path().join("r.csv");

    let o = ridgetrack(&["evaluate", p(&a), p(&a), "-o", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean 0 "), "{}", stdout(&o));

    let o = ridgetrack(&["evaluate", p(&a), p(&b), "--mask", "55:65", "-o", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("all frames 70 mean 5.00000"), "{s}");
    assert!(s.contains("outside 55:65 frames 60 mean 5.00000"), "{s}");
    let body = std::fs::read_to_string(&report).unwrap();
    assert_eq!(body.lines().next(), Some("tau,deviation,masked"));
    assert_eq!(body.lines().count(), 71);
    assert!(body.lines().any(|l| l == "55,5,1"));

    let o = ridgetrack(&["evaluate", p(&a), p(&c), "-o", p(&report)]);
    assert_eq!(o.status.code(), Some(2));
    let o = ridgetrack(&["evaluate", p(&a), p(&b), "--mask", "65:55"]);
    assert_eq!(o.status.code(), Some(2));
}
