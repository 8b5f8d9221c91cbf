//! End-to-end runs of the `corridors` binary on small grids.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corridors"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!("output_dir = {:?}\n{body}", dir.join("out").to_string_lossy());
    fs::write(&path, text).unwrap();
    path
}

const SMALL_GRID: &str = "[grid]\nresolution = 32\n";

#[test]
fn rejects_large_delta_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[grid]\ndelta = 0.2\n");
    let out = run(&["build-field", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
}

#[test]
fn unknown_subcommand_and_missing_config_are_user_errors() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["walk", "--config", "/nonexistent/run.toml"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn integrate_needs_a_built_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_GRID);
    let out = run(&["integrate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corridors build-field"));
}

#[test]
fn build_field_manifest_and_byte_identical_rebuild() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_GRID);
    let c = cfg.to_str().unwrap();
    let m = stdout_json(&run(&["build-field", "--config", c]));
    assert!(m["nondegeneracy"].as_f64().unwrap() > 0.0);
    assert!(m["max_interp_error"].as_f64().unwrap().is_finite());
    let dir = tmp
        .path()
        .join("out")
        .join(format!("field-{}", m["field_hash"].as_str().unwrap()));
    let first: Vec<Vec<u8>> = ["Vr.dwgrid", "Vu.dwgrid", "manifest.json"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect();
    stdout_json(&run(&["build-field", "--config", c, "--force"]));
    for (f, bytes) in ["Vr.dwgrid", "Vu.dwgrid", "manifest.json"].iter().zip(&first) {
        assert_eq!(&fs::read(dir.join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn constant_right_keeps_height_in_the_strip() {
    let tmp = tempfile::tempdir().unwrap();
    // 0.58 lies in the strip [2/3 - 2δ, 2/3 - δ] for δ = 1/16; quadrature
    // mode, since grid interpolation near the strip edge is only ~1e-6
    let body = "[grid]\nexact = true\n[arrows]\nkind = \"constant\"\narrow = \"right\"\n\
                [integrate]\nstarts = [[0.5, 0.58]]\n[integrator]\nmax_time = 5.0\n";
    let cfg = write_config(tmp.path(), body);
    let c = cfg.to_str().unwrap();
    let s = stdout_json(&run(&["integrate", "--config", c]));
    let dir = PathBuf::from(s["run_dir"].as_str().unwrap());
    let csv = fs::read_to_string(dir.join("trajectory_0.csv")).unwrap();
    let ys: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(ys.iter().all(|y| (y - 0.58).abs() < 1e-9));
    let end_x = s["runs"][0]["end"][0].as_f64().unwrap();
    assert!((end_x - 10.5).abs() < 1e-6, "{end_x}");
    assert!(s["runs"][0]["slope"]["max"].is_number());
}

#[test]
fn integrate_is_deterministic_and_warp_adds_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{SMALL_GRID}[warp]\nenabled = true\n[integrator]\nmax_time = 5.0\n");
    let cfg = write_config(tmp.path(), &body);
    let c = cfg.to_str().unwrap();
    stdout_json(&run(&["build-field", "--config", c]));
    let a = stdout_json(&run(&["integrate", "--config", c]));
    let dir = PathBuf::from(a["run_dir"].as_str().unwrap());
    let traj = fs::read(dir.join("trajectory_0.csv")).unwrap();
    let warped = fs::read(dir.join("warped_0.csv")).unwrap();
    assert!(a["runs"][0]["conjugacy_residual"].as_f64().unwrap() < 1e-2);
    let b = stdout_json(&run(&["integrate", "--config", c]));
    assert_eq!(a, b);
    assert_eq!(fs::read(dir.join("trajectory_0.csv")).unwrap(), traj);
    assert_eq!(fs::read(dir.join("warped_0.csv")).unwrap(), warped);
}

#[test]
fn stats_estimators() {
    let tmp = tempfile::tempdir().unwrap();
    let birkhoff = write_config(
        tmp.path(),
        "[stats]\nestimator = \"birkhoff\"\nfield = \"arrow_indicators\"\nobservable = \"constant\"\nsamples = 200\n",
    );
    let s = stdout_json(&run(&["stats", "--config", birkhoff.to_str().unwrap()]));
    assert_eq!(s["record"]["result"]["estimate"].as_f64(), Some(1.0));

    let mixing = write_config(
        tmp.path(),
        "[arrows]\nkind = \"iid\"\np_right = 0.5\nseed = 11\n\
         [stats]\nestimator = \"mixing\"\nfield = \"arrow_indicators\"\nsecond_seed = 12\nsamples = 10000\nshifts = 8\nradius = 100.0\n\
         event_a = { event = \"first_above\", level = 0.5 }\nevent_b = { event = \"second_above\", level = 0.5 }\n",
    );
    let s = stdout_json(&run(&["stats", "--config", mixing.to_str().unwrap()]));
    let r = &s["record"]["result"];
    assert!(
        r["estimate"].as_f64().unwrap() <= 3.0 * r["se"].as_f64().unwrap(),
        "{r}"
    );
    let again = stdout_json(&run(&["stats", "--config", mixing.to_str().unwrap()]));
    assert_eq!(s, again);
}

#[test]
fn walk_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[walk]\nstart = [1, 1]\nsteps = 600\ncoalesce_with = [[1, 3], [0, 3]]\n",
    );
    let c = cfg.to_str().unwrap();
    let s = stdout_json(&run(&["walk", "--config", c]));
    assert_eq!(s["slope"]["max"], "261/17");
    assert_eq!(s["end"], serde_json::json!([341, 261]));
    // (1, 3) lies on the walk from (1, 1); (0, 3) runs parallel to it
    assert_eq!(s["coalescence"]["pairs"][0]["merged_at"], serde_json::json!([1, 3]));
    assert!(s["coalescence"]["pairs"][1]["merged_at"].is_null());
    let dir = PathBuf::from(s["run_dir"].as_str().unwrap());
    assert!(fs::read_to_string(dir.join("walk.csv")).unwrap().starts_with("n,i,j\n"));

    let e = stdout_json(&run(&["export", "--config", c, "--what", "tessellation"]));
    let text = fs::read_to_string(e["written"].as_str().unwrap()).unwrap();
    let tess: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(tess.is_object() || tess.is_array());
    let e = stdout_json(&run(&[
        "export",
        "--config",
        c,
        "--what",
        "points-x",
        "--set",
        "warp.seed_x=5",
    ]));
    let pts = fs::read_to_string(e["written"].as_str().unwrap()).unwrap();
    assert!(pts.starts_with("# intensity=1.0,seed=5\n"), "{pts}");
}
