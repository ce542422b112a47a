//! Command-line front end: `run`, `search` and `report`.
//!
//! Every flag can also be set through an environment variable prefixed with
//! `QSNN_` (for example `QSNN_JOBS=8`). Output layout under `--out`:
//!
//! ```text
//! config.toml                 resolved configuration
//! summary.json                per-seed summaries and their means
//! seed_<s>/accuracy.csv       accuracy matrix (or single accuracy)
//! seed_<s>/summary.json
//! seed_<s>/checkpoint.json
//! seed_<s>/evaluated_points.csv   search only
//! seed_<s>/search.json            search only: chosen point
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::artifact::{write_atomic, write_json};
use crate::checkpoint::save_checkpoint;
use crate::config::{ExperimentConfig, ScalarKind};
use crate::error::{Error, Result};
use crate::experiment::{load_datasets, run_seed, search_seed, RunSummary, SearchSummary};
use crate::scalar::Scalar;

#[derive(Debug, Parser)]
#[command(name = "qsnn", version, about = "Quantized STDP spiking networks under class-incremental learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one model per seed.
    Run(RunArgs),
    /// Grid-search weight decay and threshold increment per seed.
    Search(RunArgs),
    /// Print a finished run's results.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long, env = "QSNN_CONFIG")]
    pub config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long, env = "QSNN_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "QSNN_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, env = "QSNN_OUT")]
    pub out: Option<PathBuf>,
    /// Training samples per class; overrides `data.samples_per_class`.
    #[arg(long, env = "QSNN_SAMPLES_PER_CLASS")]
    pub samples_per_class: Option<usize>,
    /// Config override `section.key=value`; repeatable. In the environment,
    /// separate several overrides with `;`.
    #[arg(long = "set", env = "QSNN_SET", value_delimiter = ';')]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `run` or `search`.
    #[arg(long, env = "QSNN_OUT")]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config, &self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(k) = self.samples_per_class {
            cfg.data.samples_per_class = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn main_with(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => with_pool(a.jobs, || run(&a.resolve()?)),
        Command::Search(a) => with_pool(a.jobs, || search(&a.resolve()?)),
        Command::Report(a) => {
            print!("{}", report(&a.out)?);
            Ok(())
        }
    }
}

fn with_pool<F: FnOnce() -> Result<()> + Send>(jobs: Option<usize>, f: F) -> Result<()> {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("seed_{seed}"))
}

fn write_config(cfg: &ExperimentConfig) -> Result<()> {
    write_atomic(&cfg.output_dir.join("config.toml"), cfg.to_toml_string().as_bytes())
}

#[derive(Serialize)]
struct Aggregate<S> {
    command: &'static str,
    seeds: Vec<u64>,
    mean: serde_json::Map<String, Value>,
    runs: Vec<S>,
}

fn mean_of(values: &[f64]) -> Value {
    if values.is_empty() {
        Value::Null
    } else {
        serde_json::json!(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.scalar {
        ScalarKind::F32 => run_typed::<f32>(cfg),
        ScalarKind::F64 => run_typed::<f64>(cfg),
    }
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_datasets(&cfg.data)?;
    write_config(cfg)?;
    let mut runs: Vec<RunSummary> = Vec::new();
    for &seed in &cfg.seeds {
        log::info!("run: seed {seed}");
        let out = run_seed::<T>(cfg, &data, seed).map_err(|e| e.context(format!("seed {seed}")))?;
        let dir = seed_dir(cfg, seed);
        let csv = match (&out.summary.dynamic, out.summary.nondynamic_accuracy) {
            (Some(d), _) => d.matrix.to_csv(d.matrix.phases()),
            (None, Some(a)) => format!("scenario,accuracy\nnondynamic,{a:.6}\n"),
            (None, None) => unreachable!("every run has a scenario result"),
        };
        write_atomic(&dir.join("accuracy.csv"), csv.as_bytes())?;
        write_json(&dir.join("summary.json"), &out.summary)?;
        save_checkpoint(&out.model, &dir.join("checkpoint.json"))?;
        runs.push(out.summary);
    }
    let mut mean = serde_json::Map::new();
    let overall: Vec<f64> = runs.iter().filter_map(|r| r.dynamic.as_ref().map(|d| d.overall_avg)).collect();
    let low: Vec<f64> = runs.iter().filter_map(|r| r.dynamic.as_ref().map(|d| d.low_tasks as f64)).collect();
    let nondyn: Vec<f64> = runs.iter().filter_map(|r| r.nondynamic_accuracy).collect();
    mean.insert("overall_avg".into(), mean_of(&overall));
    mean.insert("low_tasks".into(), mean_of(&low));
    mean.insert("nondynamic_accuracy".into(), mean_of(&nondyn));
    write_json(
        &cfg.output_dir.join("summary.json"),
        &Aggregate {
            command: "run",
            seeds: cfg.seeds.clone(),
            mean,
            runs,
        },
    )
}

pub fn search(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.scalar {
        ScalarKind::F32 => search_typed::<f32>(cfg),
        ScalarKind::F64 => search_typed::<f64>(cfg),
    }
}

fn search_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_datasets(&cfg.data)?;
    write_config(cfg)?;
    let mut runs: Vec<SearchSummary> = Vec::new();
    for &seed in &cfg.seeds {
        log::info!("search: seed {seed}");
        let out = search_seed::<T>(cfg, &data, seed).map_err(|e| e.context(format!("seed {seed}")))?;
        let dir = seed_dir(cfg, seed);
        write_atomic(&dir.join("evaluated_points.csv"), out.result.points_csv().as_bytes())?;
        write_json(
            &dir.join("search.json"),
            &serde_json::json!({
                "feasible": out.result.feasible,
                "chosen": out.result.evaluated_points[out.result.chosen_index],
                "baseline_avg": out.summary.baseline_avg,
            }),
        )?;
        write_atomic(&dir.join("accuracy.csv"), out.result.best_matrix.to_csv(out.result.best_matrix.phases()).as_bytes())?;
        write_json(&dir.join("summary.json"), &out.summary)?;
        save_checkpoint(&out.result.best_model, &dir.join("checkpoint.json"))?;
        if !out.result.feasible {
            log::warn!("seed {seed}: no grid point met both constraints; kept the baseline-parameter point");
        }
        runs.push(out.summary);
    }
    let mut mean = serde_json::Map::new();
    let avg: Vec<f64> = runs.iter().map(|r| r.chosen.overall_avg).collect();
    let low: Vec<f64> = runs.iter().map(|r| r.chosen.low_tasks as f64).collect();
    let feasible: Vec<f64> = runs.iter().map(|r| f64::from(u8::from(r.feasible))).collect();
    mean.insert("overall_avg".into(), mean_of(&avg));
    mean.insert("low_tasks".into(), mean_of(&low));
    mean.insert("feasible_fraction".into(), mean_of(&feasible));
    write_json(
        &cfg.output_dir.join("summary.json"),
        &Aggregate {
            command: "search",
            seeds: cfg.seeds.clone(),
            mean,
            runs,
        },
    )
}

fn num(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Human-readable digest of an output directory.
pub fn report(out: &Path) -> Result<String> {
    let path = out.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut s = String::new();
    let command = v["command"].as_str().unwrap_or("run");
    let _ = writeln!(s, "{command} results in {}", out.display());
    for r in v["runs"].as_array().into_iter().flatten() {
        let seed = &r["seed"];
        let dynamic = if command == "search" { &r["chosen"] } else { &r["dynamic"] };
        if command == "search" {
            let _ = writeln!(
                s,
                "seed {seed}: w_decay={} theta_inc={} feasible={} baseline_avg={}",
                num(&r["chosen_w_decay"]),
                num(&r["chosen_threshold_term"]),
                r["feasible"],
                num(&r["baseline_avg"]),
            );
        } else {
            let _ = writeln!(
                s,
                "seed {seed}: precision={} neurons={} memory_ratio={}",
                r["precision"].as_str().unwrap_or("?"),
                r["neurons"],
                num(&r["memory_ratio_vs_32bit"]),
            );
        }
        if !dynamic.is_null() {
            let row: Vec<String> = dynamic["final_row"].as_array().into_iter().flatten().map(num).collect();
            let _ = writeln!(
                s,
                "  overall_avg={} final_avg={} low_tasks={}\n  final row: {}",
                num(&dynamic["overall_avg"]),
                num(&dynamic["final_avg"]),
                dynamic["low_tasks"],
                row.join(" ")
            );
        }
        if let Some(a) = r["nondynamic_accuracy"].as_f64() {
            let _ = writeln!(s, "  nondynamic accuracy={a:.4}");
        }
    }
    if let Some(m) = v["mean"].as_object() {
        let parts: Vec<String> = m.iter().filter(|(_, x)| !x.is_null()).map(|(k, x)| format!("{k}={}", num(x))).collect();
        let _ = writeln!(s, "mean: {}", parts.join(" "));
    }
    Ok(s)
}
