use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use edgescan::bip::{bips_from_profiles, load_bips, scan_all};
use edgescan::config::ExperimentConfig;
use edgescan::icp::{icp_register, IcpError};
use edgescan::model::{load_glass_model, make_flat_panel, make_side_glass, save_glass_model};
use edgescan::pipeline::{
    run_experiment_1, run_experiment_2_trials, write_point_errors, ErrorStats, PipelineError, PointError,
};
use edgescan::{PointCloud, RigidTransform};

#[derive(Parser)]
#[command(name = "edgescan", version, about = "Glass pose estimation from laser edge scans")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration JSON; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Dotted-path override such as scanner.range_noise_sigma=0.0002.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a glass model (manifest, border CSV, surface PLY).
    GenModel {
        #[arg(long, num_args = 2, value_names = ["WIDTH", "HEIGHT"], allow_negative_numbers = true, conflicts_with = "side", required_unless_present = "side")]
        flat: Option<Vec<f64>>,
        #[arg(long, num_args = 3, value_names = ["CHORD", "HEIGHT", "RADIUS"], allow_negative_numbers = true)]
        side: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.004)]
        thickness: f64,
        #[arg(long, default_value_t = 0.0005)]
        bevel: f64,
        /// File stem for the written model.
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Scan along the plan and extract one border point per profile.
    Simulate {
        /// Range noise sigma in metres.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Register a border point file against a model.
    Register {
        #[arg(long)]
        bips: PathBuf,
        /// Model manifest; the configured glass is used when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON transform `{"rotation": [[..]], "translation": [..]}`; the
        /// configured coarse pose is used when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Point localisation on glass and opaque edges.
    Exp1 {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Pose estimation with touch validation along the border.
    Exp2 {
        #[arg(long)]
        trials: Option<usize>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Bip(_) => 3,
            PipelineError::Icp(IcpError::InsufficientPoints { .. }) => 3,
            PipelineError::Icp(_) => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenModel {
            flat,
            side,
            thickness,
            bevel,
            name,
        } => gen_model(&cli.common, flat.as_deref(), side.as_deref(), *thickness, *bevel, name),
        Command::Simulate { noise } => simulate(&cli.common, *noise),
        Command::Register { bips, model, init } => register(&cli.common, bips, model.as_deref(), init.as_deref()),
        Command::Exp1 { trials } => exp1(&cli.common, *trials),
        Command::Exp2 { trials } => exp2(&cli.common, *trials),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("edgescan: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common, extra: &[String]) -> Result<ExperimentConfig, Failure> {
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    ExperimentConfig::load(common.config.as_deref(), &overrides).map_err(Failure::input)
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&common.out).map_err(|e| Failure::input(format!("{}: {e}", common.out.display())))?;
    Ok(&common.out)
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_points(path: &Path, points: &[PointError]) -> CmdResult {
    let f = std::fs::File::create(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    write_point_errors(points, std::io::BufWriter::new(f)).map_err(Failure::input)
}

fn gen_model(
    common: &Common,
    flat: Option<&[f64]>,
    side: Option<&[f64]>,
    thickness: f64,
    bevel: f64,
    name: &str,
) -> CmdResult {
    let model = match (flat, side) {
        (Some(&[w, h]), _) => make_flat_panel(w, h, thickness, bevel),
        (_, Some(&[c, h, r])) => make_side_glass(c, h, r, thickness, bevel),
        _ => return Err(Failure::input("give --flat W H or --side CHORD HEIGHT RADIUS")),
    }
    .map_err(Failure::input)?;
    let manifest = save_glass_model(&model, out_dir(common)?, name).map_err(Failure::input)?;
    println!("perimeter {:.6}", model.perimeter());
    println!("wrote {}", manifest.display());
    Ok(())
}

fn simulate(common: &Common, noise: Option<f64>) -> CmdResult {
    let extra: Vec<String> = noise
        .map(|n| format!("scanner.range_noise_sigma={n}"))
        .into_iter()
        .collect();
    let cfg = load_config(common, &extra)?;
    let scene = cfg.scene()?;
    let plan = cfg.plan_at(&scene, &cfg.coarse_pose(&scene));
    let profiles = scan_all(&scene, &plan.poses, &cfg.scanner, cfg.seed);
    let out = out_dir(common)?;
    for (i, p) in profiles.iter().enumerate() {
        p.save(&out.join(format!("profile_{i:03}.csv")))
            .map_err(Failure::input)?;
    }
    let set = bips_from_profiles(&profiles, &scene.ground, &cfg.scanner);
    let f = std::fs::File::create(out.join("bips.csv")).map_err(Failure::input)?;
    set.write_csv(std::io::BufWriter::new(f)).map_err(Failure::input)?;
    for (i, e) in &set.skipped {
        eprintln!("pose {i}: {e}");
    }
    println!("{} profiles, {} border points", profiles.len(), set.bips.len());
    if set.bips.is_empty() {
        return Err(Failure {
            code: 3,
            message: "no pose produced a border point".into(),
        });
    }
    Ok(())
}

fn register(common: &Common, bips: &Path, model: Option<&Path>, init: Option<&Path>) -> CmdResult {
    let cfg = load_config(common, &[])?;
    let bips = load_bips(bips).map_err(Failure::input)?;
    let model = match model {
        Some(p) => load_glass_model(p).map_err(Failure::input)?,
        None => cfg.glass.build().map_err(Failure::input)?,
    };
    let init = match init {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<RigidTransform>(&text).map_err(Failure::input)?
        }
        None => cfg.coarse_pose(&cfg.scene()?),
    };
    let scan = PointCloud::new(bips.iter().map(|b| b.point).collect());
    let dense = model.sample_border(cfg.exp2.model_spacing);
    let path = out_dir(common)?.join("icp.json");
    match icp_register(&scan, &dense, &init, &cfg.icp) {
        Ok(r) => {
            write_json(&path, &r)?;
            println!("rms {:.6e} after {} iterations", r.rms, r.iterations);
            if r.converged {
                Ok(())
            } else {
                Err(Failure {
                    code: 4,
                    message: "registration did not converge".into(),
                })
            }
        }
        Err(IcpError::DegenerateGeometry { partial }) => {
            write_json(&path, &partial)?;
            Err(Failure {
                code: 4,
                message: "border points are collinear".into(),
            })
        }
        Err(e) => Err(Failure::input(e)),
    }
}

fn stats_json(stats: &ErrorStats, skipped: usize) -> serde_json::Value {
    json!({
        "mean_mm": stats.mean_mm,
        "std_mm": stats.std_mm,
        "max_mm": stats.max_mm,
        "n": stats.n,
        "skipped": skipped,
    })
}

fn exp1(common: &Common, trials: Option<usize>) -> CmdResult {
    let cfg = load_config(common, &[])?;
    let scene = cfg.scene()?;
    let harness = cfg.harness(&scene)?;
    let plan = cfg.plan_at(&scene, &scene.pose);
    let trials = trials.unwrap_or(cfg.trials);
    let report = run_experiment_1(&scene, &harness, &plan, &cfg.scanner, trials, cfg.seed)?;
    let out = out_dir(common)?;
    write_points(&out.join("exp1_glass_points.csv"), &report.glass.points)?;
    write_points(&out.join("exp1_opaque_points.csv"), &report.opaque.points)?;
    let doc = json!({
        "trials": trials,
        "seed": cfg.seed,
        "glass": stats_json(&report.glass.stats, report.glass.skipped),
        "opaque": stats_json(&report.opaque.stats, report.opaque.skipped),
    });
    write_json(&out.join("exp1.json"), &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializes"));
    Ok(())
}

fn exp2(common: &Common, trials: Option<usize>) -> CmdResult {
    let cfg = load_config(common, &[])?;
    let scene = cfg.scene()?;
    let harness = cfg.harness(&scene)?;
    let coarse = cfg.coarse_pose(&scene);
    let plan = cfg.plan_at(&scene, &coarse);
    let trials = trials.unwrap_or(cfg.trials);
    let report = run_experiment_2_trials(
        &scene,
        &harness,
        &plan,
        &coarse,
        &cfg.scanner,
        &cfg.icp,
        &cfg.exp2,
        trials,
        cfg.seed,
    )?;
    let out = out_dir(common)?;
    let points: Vec<PointError> = report.runs.iter().flat_map(|r| r.points.iter().copied()).collect();
    write_points(&out.join("exp2_points.csv"), &points)?;
    let skipped: usize = report.runs.iter().map(|r| r.skipped).sum();
    let mut stats = stats_json(&report.stats, skipped);
    stats["trials"] = json!(trials);
    stats["seed"] = json!(cfg.seed);
    stats["untrusted_trials"] = json!(report.runs.iter().filter(|r| !r.trusted).count());
    write_json(&out.join("stats.json"), &stats)?;
    write_json(&out.join("timing.json"), &report.timing)?;
    println!("{}", serde_json::to_string_pretty(&stats).expect("serializes"));
    println!("{}", serde_json::to_string_pretty(&report.timing).expect("serializes"));
    Ok(())
}
