//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;

use edgescan::bip::{extract_bip, scan_all};
use edgescan::config::ExperimentConfig;
use edgescan::geom::{best_fit_transform, brute_force, NnIndex};
use edgescan::icp::{icp_register, IcpParams};
use edgescan::model::{make_flat_panel, make_side_glass, GlassModel};
use edgescan::pipeline::{run_experiment_1, run_experiment_2, run_experiment_2_trials, scan_pose_at, Exp2Params};
use edgescan::scansim::{
    fresnel_reflectance, fresnel_transmittance, simulate_profile, true_edge_point, two_surface_reflectance,
    ScannerSpec, Scene,
};
use edgescan::seed;
use edgescan::{PointCloud, RigidTransform, Vec3};

type Criterion = (&'static str, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, title: &str, started: Instant, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    // Written straight to stdout so the report survives output capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{id} {verdict} {title}: {} ({:.2} s)",
        o.detail,
        started.elapsed().as_secs_f64()
    );
}

fn side_glass() -> GlassModel {
    make_side_glass(0.45, 0.32, 0.8, 0.0045, 0.0005).unwrap()
}

fn random_perturbation(rng: &mut impl Rng, max_t: f64, max_deg: f64) -> RigidTransform {
    let a = max_deg.to_radians();
    let mut dir = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    if dir.norm() < 1e-9 {
        dir = Vec3::x();
    }
    let t = dir.normalize() * rng.random_range(0.0..max_t);
    RigidTransform::from_euler(
        rng.random_range(-a..a),
        rng.random_range(-a..a),
        rng.random_range(-a..a),
        t,
    )
}

fn ac1() -> Outcome {
    let r0 = fresnel_reflectance(1.5, 0.0);
    let r2 = two_surface_reflectance(1.5);
    Outcome {
        pass: (r0 - 0.040).abs() <= 0.001 && (r2 - 0.078).abs() <= 0.002,
        detail: format!("R(0°) = {r0:.4}, two-surface = {r2:.4}"),
    }
}

fn ac2() -> Outcome {
    let glass = side_glass();
    let dense = glass.sample_border(0.001);
    let mut rng = seed::rng(2);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let truth = random_perturbation(&mut rng, 0.020, 5.0);
        let offset = rng.random_range(0.0..glass.perimeter() / 12.0);
        let scan = PointCloud::new(
            glass
                .uniform_arc_points(12, offset)
                .into_iter()
                .map(|(_, p)| truth.apply(&p))
                .collect(),
        );
        let err = match icp_register(&scan, &dense, &RigidTransform::identity(), &IcpParams::default()) {
            Ok(r) => glass
                .border()
                .iter()
                .map(|p| (r.model_to_base.apply(p) - truth.apply(p)).norm())
                .fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    let elapsed = t0.elapsed();
    Outcome {
        pass: worst < 1e-6 && elapsed < Duration::from_secs(5),
        detail: format!(
            "worst border error {worst:.3e} m over 100 cases in {:.2} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn ac3() -> Outcome {
    let cfg = ExperimentConfig::default();
    let scene = cfg.scene().unwrap();
    let harness = cfg.harness(&scene).unwrap();
    let coarse = cfg.coarse_pose(&scene);
    let plan = cfg.plan_at(&scene, &coarse);
    let t0 = Instant::now();
    let r = run_experiment_2_trials(
        &scene,
        &harness,
        &plan,
        &coarse,
        &cfg.scanner,
        &cfg.icp,
        &cfg.exp2,
        100,
        3,
    )
    .unwrap();
    let elapsed = t0.elapsed();
    Outcome {
        pass: r.stats.mean_mm <= 1.5 && r.stats.max_mm <= 3.3 && elapsed < Duration::from_secs(60),
        detail: format!(
            "mean {:.3} ± {:.3} mm, max {:.3} mm over {} points",
            r.stats.mean_mm, r.stats.std_mm, r.stats.max_mm, r.stats.n
        ),
    }
}

fn ac4() -> Outcome {
    let cfg = ExperimentConfig::default();
    let scene = cfg.scene().unwrap();
    let harness = cfg.harness(&scene).unwrap();
    let plan = cfg.plan_at(&scene, &scene.pose);
    let t0 = Instant::now();
    let r = run_experiment_1(&scene, &harness, &plan, &cfg.scanner, 100, 4).unwrap();
    let elapsed = t0.elapsed();
    let (g, o) = (r.glass.stats.mean_mm, r.opaque.stats.mean_mm);
    Outcome {
        pass: g <= 2.0 * o && elapsed < Duration::from_secs(60),
        detail: format!(
            "glass {g:.3} ± {:.3} mm, opaque {o:.3} ± {:.3} mm",
            r.glass.stats.std_mm, r.opaque.stats.std_mm
        ),
    }
}

/// Mean BIP-to-edge distance over 50 poses spread around a flat panel, the
/// optical axis raised `elevation_deg` above the glass plane.
fn bip_offset_at(scene: &Scene, spec: &ScannerSpec, elevation_deg: f64) -> f64 {
    let posed = scene.posed_glass();
    let mut rng = seed::rng(5);
    let incidence = (90.0 - elevation_deg).to_radians();
    let mut sum = 0.0;
    let mut n = 0;
    for k in 0..50 {
        let s = (k as f64 + 0.5) * posed.perimeter() / 50.0;
        let shift = rng.random_range(-0.001..0.001);
        let pose = scan_pose_at(&posed, s, incidence, spec.standoff, shift);
        let profile = simulate_profile(scene, &pose, spec, seed::derive(50, k));
        let (Ok(pe), Ok(bip)) = (
            true_edge_point(scene, &pose),
            extract_bip(&profile, k as usize, &scene.ground, spec),
        ) else {
            continue;
        };
        sum += (bip.point - pe).norm();
        n += 1;
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

fn ac5() -> Outcome {
    let glass = make_flat_panel(0.4, 0.3, 0.004, 0.0005).unwrap();
    let scene = Scene::new(
        glass,
        RigidTransform::from_translation(Vec3::new(0.45, 0.0, 0.05)),
        0.57,
        0.5,
    )
    .unwrap();
    let spec = ScannerSpec::default();
    let at40 = bip_offset_at(&scene, &spec, 40.0);
    let at10 = bip_offset_at(&scene, &spec, 10.0);
    Outcome {
        pass: at40 < at10,
        detail: format!(
            "mean |BIP - p_e| {:.3} mm at 40° vs {:.3} mm at 10°",
            at40 * 1e3,
            at10 * 1e3
        ),
    }
}

fn ac6() -> Outcome {
    let glass = side_glass();
    let model = glass.sample_border(glass.perimeter() / 10_000.0);
    let mut rng = seed::rng(6);
    let mut times = Vec::with_capacity(100);
    let mut converged = 0;
    for _ in 0..100 {
        let truth = random_perturbation(&mut rng, 0.005, 1.0);
        let scan = PointCloud::new(
            glass
                .uniform_arc_points(12, rng.random_range(0.0..0.1))
                .into_iter()
                .map(|(_, p)| {
                    truth.apply(&p) + Vec3::new(rng.random_range(-1e-4..1e-4), 0.0, rng.random_range(-1e-4..1e-4))
                })
                .collect(),
        );
        let t0 = Instant::now();
        let r = icp_register(&scan, &model, &RigidTransform::identity(), &IcpParams::default());
        times.push(t0.elapsed().as_secs_f64());
        converged += usize::from(r.is_ok_and(|r| r.converged));
    }
    times.sort_by(f64::total_cmp);
    let median = 0.5 * (times[49] + times[50]);
    Outcome {
        pass: median <= 0.023,
        detail: format!(
            "median {:.3} ms against {} model points, {converged}/100 converged",
            median * 1e3,
            model.len()
        ),
    }
}

fn ac7() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = seed::rng(7);

    for _ in 0..200 {
        let a = random_perturbation(&mut rng, 1.0, 180.0);
        let b = random_perturbation(&mut rng, 1.0, 180.0);
        let c = random_perturbation(&mut rng, 1.0, 180.0);
        let assoc = a.compose(&b).compose(&c).max_abs_diff(&a.compose(&b.compose(&c)));
        let inv = a.compose(&a.invert()).max_abs_diff(&RigidTransform::identity());
        if assoc > 1e-12 || inv > 1e-12 || !a.compose(&b).is_valid() {
            failures.push("group laws");
            break;
        }
    }

    let cloud: Vec<Vec3> = (0..500)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let index = NnIndex::from_points(cloud.clone());
    for _ in 0..200 {
        let q = Vec3::new(
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.2..1.2),
        );
        let got = index.nearest(&q).unwrap();
        let (bi, bd2) = brute_force(&cloud, &q);
        if got.index != bi || (got.distance - bd2.sqrt()).abs() > 1e-15 {
            failures.push("nn vs brute force");
            break;
        }
    }

    for _ in 0..100 {
        let t = random_perturbation(&mut rng, 1.0, 180.0);
        let src = &cloud[..20];
        let dst: Vec<Vec3> = src.iter().map(|p| t.apply(p)).collect();
        if best_fit_transform(src, &dst).map_or(true, |f| f.max_abs_diff(&t) > 1e-9) {
            failures.push("best-fit round trip");
            break;
        }
    }

    let glass = side_glass();
    let dense = glass.sample_border(0.001);
    for _ in 0..20 {
        let truth = random_perturbation(&mut rng, 0.02, 5.0);
        let pts: Vec<Vec3> = glass
            .uniform_arc_points(12, 0.01)
            .into_iter()
            .map(|(_, p)| truth.apply(&p))
            .collect();
        let r = icp_register(
            &PointCloud::new(pts.clone()),
            &dense,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        if r.rms_history.windows(2).any(|w| w[1] > w[0]) {
            failures.push("icp monotone residual");
            break;
        }
        let g = random_perturbation(&mut rng, 1.0, 90.0);
        let moved = PointCloud::new(pts.iter().map(|p| g.apply(p)).collect());
        let r2 = icp_register(&moved, &dense, &g, &IcpParams::default()).unwrap();
        if r2.model_to_base.max_abs_diff(&g.compose(&r.model_to_base)) > 1e-9 {
            failures.push("icp rigid invariance");
            break;
        }
    }

    let cfg = ExperimentConfig::load(
        None,
        &["scanner.range_noise_sigma=0".into(), "glass.bevel_radius=0".into()],
    )
    .unwrap();
    let scene = cfg.scene().unwrap();
    let plan = cfg.plan_at(&scene, &scene.pose);
    let profiles = scan_all(&scene, &plan.poses, &cfg.scanner, 11);
    for (k, p) in profiles.iter().enumerate() {
        let Ok(b) = extract_bip(p, k, &scene.ground, &cfg.scanner) else {
            continue;
        };
        let h = scene.ground.signed_distance(&b.point);
        let member = p.records.iter().any(|r| !r.saturated && p.base_point(r) == b.point);
        let highest = p
            .records
            .iter()
            .filter(|r| !r.saturated)
            .all(|r| scene.ground.signed_distance(&p.base_point(r)) <= h + 1e-9);
        if !member || !highest {
            failures.push("bip membership / max height");
            break;
        }
    }

    let harness = cfg.harness(&scene).unwrap();
    let exact = run_experiment_2(
        &scene,
        &harness,
        &plan,
        &scene.pose,
        &cfg.scanner,
        &cfg.icp,
        &Exp2Params::default(),
        1,
    )
    .unwrap();
    if exact.points.iter().any(|p| p.error_m > 1e-6) {
        failures.push("zero-noise epsilon");
    }
    let noisy = ExperimentConfig::default();
    let scene = noisy.scene().unwrap();
    let coarse = noisy.coarse_pose(&scene);
    let plan = noisy.plan_at(&scene, &coarse);
    let run = || {
        run_experiment_2_trials(
            &scene,
            &harness,
            &plan,
            &coarse,
            &noisy.scanner,
            &noisy.icp,
            &noisy.exp2,
            4,
            77,
        )
        .unwrap()
        .stats
    };
    if run() != run() {
        failures.push("pipeline determinism");
    }

    let n = 1.5;
    let mut last = 0.0;
    for k in 0..=900 {
        let th = FRAC_PI_2 * k as f64 / 901.0;
        let r = fresnel_reflectance(n, th);
        if r + 1e-15 < last || (r + fresnel_transmittance(n, th) - 1.0).abs() > 1e-12 {
            failures.push("fresnel monotone / energy");
            break;
        }
        last = r;
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "all property groups hold".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    }
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 7] = [
        ("AC-1", "Fresnel sanity", ac1),
        ("AC-2", "exact-recovery registration", ac2),
        ("AC-3", "pose estimation error regime", ac3),
        ("AC-4", "glass vs opaque point localisation", ac4),
        ("AC-5", "BIP offset vs viewing angle", ac5),
        ("AC-6", "registration time", ac6),
        ("AC-7", "property suites", ac7),
    ];
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        let t0 = Instant::now();
        let o = f();
        report(id, title, t0, &o);
        if !o.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
