use std::path::Path;
use std::process::{Command, Output};

fn lrfill(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrfill"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn lrfill")
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    stdout
}

const EVENTS: &str = r#"
rx = 4
ry = 3
sx = 4
sy = 3
spacing = 25.0
nt = 32
dt = 0.004
peak_freq = 20.0

[[events]]
apex = 0.03
slowness_x = 0.0004
slowness_y = 0.0002

[[events]]
apex = 0.07
slowness_x = 0.0002
amplitude = -0.5
"#;

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("events.toml"), EVENTS).unwrap();
    ok(lrfill(d, &["generate", "--kind", "events", "--spec", "events.toml", "--out", "truth.lrv"]));
    let sub = ok(lrfill(
        d,
        &["subsample", "--input", "truth.lrv", "--out", "obs.lrv", "--mask-out", "mask.lrm", "--keep", "0.5", "--seed", "3"],
    ));
    assert!(sub.contains("kept"));

    std::fs::write(
        d.join("run.cfg"),
        "# short run\ninput = obs.lrv\nmask = mask.lrm\ntruth = truth.lrv\noutput = out.lrv\nreport = a.csv\nrank = 3\nouter_iters = 4\ninner_iters = 100\n",
    )
    .unwrap();
    let run = ok(lrfill(d, &["interpolate", "--config", "run.cfg", "--f_max", "60"]));
    assert!(run.contains("overall SNR"), "{run}");
    let report = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert!(report.starts_with("freq_hz,rank,eta_target,rel_residual,outer_iters,inner_iters,wall_s,snr_db,status"));
    // flags override the file
    ok(lrfill(d, &["interpolate", "--config", "run.cfg", "--report", "b.csv", "--rank=2", "--f-max", "60"]));
    let b = std::fs::read_to_string(d.join("b.csv")).unwrap();
    assert!(b.lines().nth(1).unwrap().split(',').nth(1) == Some("2"), "{b}");

    let eval = ok(lrfill(d, &["evaluate", "--truth", "truth.lrv", "--estimate", "out.lrv"]));
    assert!(eval.starts_with("SNR "));

    let cmp = ok(lrfill(d, &["compare", "a.csv", "b.csv"]));
    assert!(cmp.starts_with("freq_hz,snr_a,snr_b,snr_delta,wall_a,wall_b,wall_delta"));
    assert_eq!(cmp.lines().count(), report.lines().count());

    ok(lrfill(d, &["svdscan", "--input", "truth.lrv", "--freq", "15", "--prefix", "scan"]));
    // 12x12 and 9x16 unfoldings
    for (name, n) in [("scan_srcpair.csv", 12), ("scan_recsrcx.csv", 9)] {
        let text = std::fs::read_to_string(d.join(name)).unwrap();
        assert_eq!(text.lines().count(), 1 + n);
    }
}

#[test]
fn plant_generation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("plant.toml"), "p = 8\nq = 6\nrank = 2\nprofile = { geometric = 0.5 }\nseed = 4\n").unwrap();
    let out = ok(lrfill(d, &["generate", "--kind", "plant", "--spec", "plant.toml", "--out", "x.lrv"]));
    assert!(out.contains("x.lrv"));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = lrfill(d, &["interpolate", "--bogus", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = lrfill(d, &["interpolate"]);
    assert!(!out.status.success());
}
