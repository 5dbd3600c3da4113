//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data or
//! format error, 3 numeric failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::cloud::{read_scene, write_scene};
use crate::config::AsisConfig;
use crate::metrics::Evaluator;
use crate::selfcheck::{gradient_suite, selftest, GradFault, FD_STEP, GRADIENT_TOLERANCE};
use crate::synth::{generate_dataset, SceneSpec};
use crate::tensor::RELATIVE_ERROR_FLOOR;
use crate::train::{infer_scene, load_model, train_to_disk, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping inference threads.
pub const THREADS_ENV: &str = "ASIS_THREADS";
/// When set to a number, `gradcheck` corrupts analytic gradients by that
/// relative amount (harness sanity fixture).
pub const FAULT_ENV: &str = "ASIS_GRADCHECK_FAULT";

#[derive(Parser, Debug)]
#[command(name = "asis", version, about = "Joint instance and semantic segmentation of point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        scenes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Scene spec JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disable semantic-aware instance features.
        #[arg(long)]
        no_sa: bool,
        /// Disable instance-fused semantic features.
        #[arg(long)]
        no_if: bool,
    },
    /// Segment one scene with a trained model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the scores as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference check of all analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Gradient, loss-value and metric-oracle checks.
    Selftest,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_DATA, message: e.to_string() }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::NonFinite { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn print_config(title: &str, value: &serde_json::Value) {
    println!("{title}:\n{}", serde_json::to_string_pretty(value).expect("json"));
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen { scenes, seed, out, spec } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<SceneSpec>(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
                }
                None => SceneSpec::default(),
            };
            print_config("config", &json!({"scenes": scenes, "seed": seed, "out": out, "spec": spec}));
            let manifest = generate_dataset(scenes, &spec, seed, &out).map_err(Failure::data)?;
            let points: usize = manifest.scenes.iter().map(|s| s.points).sum();
            println!("wrote {} scenes ({points} points) to {}", manifest.scenes.len(), out.display());
            Ok(())
        }
        Command::Train { data, config, out, no_sa, no_if } => {
            let mut cfg = AsisConfig::load(&config).map_err(Failure::data)?;
            cfg.network.use_sa &= !no_sa;
            cfg.network.use_if &= !no_if;
            print_config("config", &serde_json::to_value(&cfg).expect("json"));
            let outcome = train_to_disk(&data, &cfg, &out)?;
            let last = outcome.log.last().map_or(f64::NAN, |r| r.total);
            println!("trained {} steps, final loss {last:.6}", outcome.steps);
            println!("checkpoint {}", out.display());
            Ok(())
        }
        Command::Infer { model, scene, out } => {
            let (params, meta) = load_model(&model, None)?;
            let threads = threads();
            print_config("config", &json!({"model": model, "threads": threads, "checkpoint": meta}));
            let cloud = read_scene(&scene).map_err(Failure::data)?;
            let seg = infer_scene(&params, &cloud, &meta.config, threads)?;
            write_scene(&seg.to_cloud(&cloud), &out).map_err(Failure::data)?;
            println!("{} points, {} instances -> {}", cloud.len(), seg.instances.instance_count(), out.display());
            Ok(())
        }
        Command::Eval { pred, gt, report } => eval(&pred, &gt, report.as_deref()),
        Command::Gradcheck { seed } => {
            let fault = std::env::var(FAULT_ENV).ok().and_then(|v| v.parse().ok()).map(|relative| GradFault { relative });
            print_config(
                "config",
                &json!({
                    "seed": seed,
                    "cases_per_target": 8,
                    "step": FD_STEP,
                    "tolerance": GRADIENT_TOLERANCE,
                    "relative_error_floor": RELATIVE_ERROR_FLOOR,
                    "fault": fault.map(|f| f.relative),
                }),
            );
            let suite = gradient_suite(seed, 8, fault);
            print!("{}", suite.summary());
            if suite.passed() {
                println!("gradcheck passed");
                Ok(())
            } else {
                Err(Failure { code: EXIT_NUMERIC, message: format!("gradcheck failed: max relative error {:.3e}", suite.max_rel_error()) })
            }
        }
        Command::Selftest => {
            print_config("config", &json!({"seed": 0, "gradient_cases_per_target": 8, "metric_pairs": 100}));
            let results = selftest(0);
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Failure { code: EXIT_NUMERIC, message: "selftest failed".into() })
            }
        }
    }
}

/// Pairs scene files: two files, or same-named files of two directories.
fn scene_pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>, Failure> {
    if !pred.is_dir() {
        return Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut pairs = Vec::new();
    let entries = std::fs::read_dir(pred).map_err(|e| Failure::data(format!("{}: {e}", pred.display())))?;
    for entry in entries {
        let path = entry.map_err(Failure::data)?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            let other = gt.join(path.file_name().expect("file"));
            if !other.exists() {
                return Err(Failure::data(format!("no ground truth {} for {}", other.display(), path.display())));
            }
            pairs.push((path, other));
        }
    }
    pairs.sort();
    if pairs.is_empty() {
        return Err(Failure::data(format!("no scene files in {}", pred.display())));
    }
    Ok(pairs)
}

fn eval(pred: &Path, gt: &Path, report: Option<&Path>) -> Result<(), Failure> {
    let cfg = AsisConfig::default();
    let pairs = scene_pairs(pred, gt)?;
    let mut loaded = Vec::with_capacity(pairs.len());
    for (p, g) in &pairs {
        let pc = read_scene(p).map_err(Failure::data)?;
        let gc = read_scene(g).map_err(Failure::data)?;
        if pc.len() != gc.len() {
            return Err(Failure::data(format!("{}: {} points, {}: {} points", p.display(), pc.len(), g.display(), gc.len())));
        }
        loaded.push((pc, gc));
    }
    let n_classes = loaded.iter().map(|(p, g)| p.n_classes.max(g.n_classes)).max().unwrap_or(0);
    print_config(
        "config",
        &json!({"pred": pred, "gt": gt, "scenes": pairs.len(), "n_classes": n_classes, "eval": cfg.eval}),
    );
    let mut ev = Evaluator::new(n_classes, cfg.eval.iou_threshold);
    for (p, g) in &loaded {
        ev.add_scene(&g.semantic_labels, &g.instance_ids, &p.semantic_labels, &p.instance_ids).map_err(Failure::data)?;
    }
    let metrics = ev.finish();
    print!("{}", metrics.table());
    if let Some(path) = report {
        let text = serde_json::to_string_pretty(&metrics).expect("json");
        std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["asis", "gen", "--scenes", "1", "--seed", "7"]), EXIT_USAGE);
        assert_eq!(run(["asis", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["asis", "selftest", "--bogus"]), EXIT_USAGE);
    }

    #[test]
    fn missing_config_exits_two() {
        let code = run(["asis", "train", "--data", "/nonexistent", "--config", "/nonexistent.json", "--out", "/tmp/x"]);
        assert_eq!(code, EXIT_DATA);
    }
}
