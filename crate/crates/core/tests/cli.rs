use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minkflow"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_in(root: &Path, args: &[&str]) -> (i32, String) {
    let out = bin().args(args).env("MINKFLOW_OUTPUT_ROOT", root).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn flat_disk_exits_zero_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "flat.conf",
        "scenario = cylinder_disk\nnodes = 21\ninitial = constant(0)\nh_stop = 0\nmax_steps = 50\noutput_dir = flat\n",
    );
    let (code, stdout) = run_in(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let dir = tmp.path().join("flat");
    for f in ["timeseries.csv", "final_profile.csv", "monitor_summary.txt"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(dir.join("monitor_summary.txt")).unwrap();
    assert!(summary.contains("event = step_limit"));
    let ts = fs::read_to_string(dir.join("timeseries.csv")).unwrap();
    assert!(ts.starts_with("step,t,volume,int_h2,sup_h,sup_v,sup_v_hat,osc_u,max_slope2,boundary_0,"));
    assert_eq!(ts.lines().count(), 52);
    let prof = fs::read_to_string(dir.join("final_profile.csv")).unwrap();
    assert!(prof.starts_with("s,physical_coord,y,u,H,v,v_hat,normA2,dV"));
}

#[test]
fn translator_towards_zero_trips_guard() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gr.conf",
        "scenario = grim_reaper\nnodes = 41\nt0 = -1\nmonitor_evolution = false\noutput_dir = gr\n",
    );
    let (code, stdout) = run_in(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    let t: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("guard_trip_time = "))
        .expect("trip time reported")
        .parse()
        .unwrap();
    // discrete blow-up lands within a grid-dependent distance of t = 0
    assert!(t.abs() < 1e-2, "{t}");
}

#[test]
fn config_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.conf", "scenario = grim_reaper\nnodes = 101\ncfl = 0.9\n");
    assert_eq!(run_in(tmp.path(), &["run", cfg.to_str().unwrap()]).0, 3);
    let cfg = write_config(tmp.path(), "unknown.conf", "scenario = grim_reaper\nnodes = 101\nspeed = 3\n");
    assert_eq!(run_in(tmp.path(), &["run", cfg.to_str().unwrap()]).0, 3);
    assert_eq!(run_in(tmp.path(), &["frobnicate"]).0, 3);
}

#[test]
fn missing_file_is_io_failure() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["run", "/definitely/not/here.conf"]).0, 1);
}

#[test]
fn trumpet_with_required_conditions_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "tr.conf",
        "scenario = grim_reaper\nnodes = 41\nrequire_conditions = true\noutput_dir = tr\n",
    );
    assert_eq!(run_in(tmp.path(), &["run", cfg.to_str().unwrap()]).0, 4);
    assert_eq!(run_in(tmp.path(), &["check-boundary", cfg.to_str().unwrap()]).0, 4);
    let ok = write_config(tmp.path(), "sine.conf", "scenario = sine_tube\nnodes = 41\n");
    let (code, out) = run_in(tmp.path(), &["check-boundary", ok.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("curvature_condition = pass"));
}

#[test]
fn converge_prints_order_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "hp.conf", "scenario = hyperbolic_plane\nnodes = 21\ninitial = leaf(1)\n");
    let (code, out) = run_in(tmp.path(), &["converge", cfg.to_str().unwrap(), "--levels", "3"]);
    assert_eq!(code, 0);
    let orders: Vec<f64> = out.lines().skip(3).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(orders.len(), 2);
    for o in orders {
        assert!((o - 2.0).abs() < 0.2, "{out}");
    }
    let flat = write_config(tmp.path(), "rim.conf", "scenario = cylinder_disk\nnodes = 21\ninitial = bump(0,0.1)\n");
    assert_eq!(run_in(tmp.path(), &["converge", flat.to_str().unwrap()]).0, 3);
}

#[test]
fn batch_runs_every_config_and_outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cfgs");
    fs::create_dir(&dir).unwrap();
    let body = |out: &str| {
        format!("scenario = sine_tube\nnodes = 21\ninitial = leaf(1.62)\nt_end = 0.05\nprobe_every = 20\noutput_dir = {out}\n")
    };
    write_config(&dir, "a.conf", &body("a"));
    write_config(&dir, "b.conf", &body("b"));
    write_config(&dir, "c.conf", "scenario = grim_reaper\nnodes = 21\nmonitor_evolution = false\noutput_dir = c\n");
    fs::write(dir.join("notes.txt"), "ignored").unwrap();
    let (code, out) = run_in(tmp.path(), &["batch", dir.to_str().unwrap()]);
    assert_eq!(code, 2, "{out}");
    assert_eq!(out.lines().count(), 3);
    for f in ["timeseries.csv", "final_profile.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}
