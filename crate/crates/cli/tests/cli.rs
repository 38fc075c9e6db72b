use std::path::Path;
use std::process::{Command, Output};

fn edgescan(args: &[&str], out: &Path) -> Output {
    edgescan_env(args, out, None)
}

fn edgescan_env(args: &[&str], out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_edgescan"));
    cmd.args(args).arg("--out").arg(out);
    match threads {
        Some(t) => cmd.env("EDGESCAN_THREADS", t),
        None => cmd.env_remove("EDGESCAN_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&read(p)).unwrap()
}

#[test]
fn gen_model_prints_perimeter_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let o = edgescan(&["gen-model", "--flat", "0.4", "0.3"], &a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("perimeter 1.400000"));
    edgescan(&["gen-model", "--flat", "0.4", "0.3"], &b);
    for f in ["model.json", "model_border.csv", "model_surface.ply"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
}

#[test]
fn gen_model_rejects_bad_dimensions() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&edgescan(&["gen-model", "--flat", "-0.4", "0.3"], d.path())), 2);
    assert_eq!(
        code(&edgescan(&["gen-model", "--side", "0.45", "0.32", "0.1"], d.path())),
        2
    );
}

#[test]
fn simulate_writes_one_profile_per_pose() {
    let d = tempfile::tempdir().unwrap();
    let o = edgescan(&["simulate", "--set", "plan.n_scan=4", "--noise", "0"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..4 {
        assert!(d.path().join(format!("profile_{i:03}.csv")).exists());
    }
    assert!(!d.path().join("profile_004.csv").exists());
    let bips = String::from_utf8(read(&d.path().join("bips.csv"))).unwrap();
    assert_eq!(bips.lines().count(), 5);
    assert!(bips.starts_with("x,y,z,profile_index,intensity\n"));
}

#[test]
fn simulate_reruns_are_byte_identical_and_thread_independent() {
    let d = tempfile::tempdir().unwrap();
    let runs = [("a", None), ("b", None), ("c", Some("0")), ("d", Some("3"))];
    for (name, threads) in runs {
        let o = edgescan_env(&["simulate", "--seed", "42"], &d.path().join(name), threads);
        assert_eq!(code(&o), 0);
    }
    for f in ["bips.csv", "profile_000.csv", "profile_011.csv"] {
        let first = read(&d.path().join("a").join(f));
        for (name, _) in &runs[1..] {
            assert_eq!(first, read(&d.path().join(name).join(f)), "{name}/{f}");
        }
    }
}

#[test]
fn simulate_with_nothing_visible_exits_3() {
    let d = tempfile::tempdir().unwrap();
    // Every return falls below the detection threshold.
    let o = edgescan(&["simulate", "--set", "scanner.min_intensity_threshold=0.99"], d.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn register_round_trip_recovers_the_pose() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&edgescan(&["simulate", "--noise", "0"], d.path())), 0);
    let bips = d.path().join("bips.csv");
    let o = edgescan(&["register", "--bips", bips.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("icp.json"));
    assert_eq!(r["converged"], true);
    // Default scene pose: yaw 0.1 rad about z, origin at (0.45, 0, 0.05).
    let t = &r["translation"];
    let got = [t[0].as_f64().unwrap(), t[1].as_f64().unwrap(), t[2].as_f64().unwrap()];
    for (g, w) in got.iter().zip([0.45, 0.0, 0.05]) {
        assert!((g - w).abs() < 5e-4, "{got:?}");
    }
    let r10 = r["rotation"][1][0].as_f64().unwrap();
    assert!((r10 - 0.1f64.sin()).abs() < 1e-3);
}

#[test]
fn register_with_model_file_and_init() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(
        code(&edgescan(
            &["gen-model", "--side", "0.45", "0.32", "0.8", "--thickness", "0.0045"],
            p
        )),
        0
    );
    assert_eq!(code(&edgescan(&["simulate", "--noise", "0"], p)), 0);
    let init = p.join("init.json");
    std::fs::write(
        &init,
        r#"{"rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0.45, 0.0, 0.05]}"#,
    )
    .unwrap();
    let args = [
        "register",
        "--bips",
        p.join("bips.csv").to_str().unwrap(),
        "--model",
        p.join("model.json").to_str().unwrap(),
        "--init",
        init.to_str().unwrap(),
    ]
    .map(str::to_string);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = edgescan(&args, p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn register_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let two = p.join("two.csv");
    std::fs::write(
        &two,
        "x,y,z,profile_index,intensity\n0.4,0,0.05,0,0.3\n0.5,0,0.05,1,0.3\n",
    )
    .unwrap();
    assert_eq!(code(&edgescan(&["register", "--bips", two.to_str().unwrap()], p)), 2);

    let garbage = p.join("garbage.csv");
    std::fs::write(&garbage, "a,b\n1,2\n").unwrap();
    assert_eq!(
        code(&edgescan(&["register", "--bips", garbage.to_str().unwrap()], p)),
        2
    );

    let line = p.join("line.csv");
    let mut text = String::from("x,y,z,profile_index,intensity\n");
    for i in 0..12 {
        text += &format!("{},0.1,0.05,{i},0.3\n", 0.3 + 0.01 * i as f64);
    }
    std::fs::write(&line, text).unwrap();
    assert_eq!(code(&edgescan(&["register", "--bips", line.to_str().unwrap()], p)), 4);
    assert_eq!(json(&p.join("icp.json"))["degenerate"], true);
}

#[test]
fn exp1_reports_glass_and_opaque() {
    let d = tempfile::tempdir().unwrap();
    let o = edgescan(&["exp1", "--trials", "2", "--seed", "5"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("exp1.json"));
    for block in ["glass", "opaque"] {
        for key in ["mean_mm", "std_mm", "max_mm"] {
            assert!(r[block][key].as_f64().unwrap() >= 0.0, "{block}.{key}");
        }
    }
    assert!(d.path().join("exp1_glass_points.csv").exists());
}

#[test]
fn exp2_reports_stats_and_four_stage_timings() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        let o = edgescan(&["exp2", "--trials", "1", "--seed", "9"], out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a.join("stats.json")), read(&b.join("stats.json")));
    assert_eq!(read(&a.join("exp2_points.csv")), read(&b.join("exp2_points.csv")));
    let s = json(&a.join("stats.json"));
    for key in ["mean_mm", "std_mm", "max_mm"] {
        assert!(s[key].as_f64().unwrap() >= 0.0);
    }
    let t = json(&a.join("timing.json"));
    for stage in ["scanning", "pose_estimation", "path_planning", "execution"] {
        assert!(t[stage].as_f64().unwrap() >= 0.0, "{stage}");
    }
}

#[test]
fn config_file_and_bad_overrides() {
    let d = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let cfg = cfg.to_str().unwrap();
    let o = edgescan(&["simulate", "--config", cfg, "--set", "plan.n_scan=3"], d.path());
    assert_eq!(code(&o), 0);
    assert!(!d.path().join("profile_003.csv").exists());
    assert_eq!(
        code(&edgescan(&["simulate", "--set", "scanner.no_such_field=1"], d.path())),
        2
    );
    assert_eq!(code(&edgescan(&["simulate", "--set", "plan.n_scan"], d.path())), 2);
    assert_eq!(
        code(&edgescan(&["simulate", "--config", "/nonexistent.json"], d.path())),
        2
    );
}
