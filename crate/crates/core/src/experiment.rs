//! End-to-end runs driven by an [`ExperimentConfig`]: data loading, one
//! scenario per seed, and the parameter search.

use serde::Serialize;

use crate::config::{DataSection, ExperimentConfig, ScenarioKind};
use crate::data::{load_mnist, Dataset};
use crate::error::{Error, Result};
use crate::network::{build_model, SnnModel};
use crate::quant::WeightPrecision;
use crate::scalar::Scalar;
use crate::scenario::{
    low_accuracy_tasks, memory_report, run_dynamic, run_nondynamic, AccuracyMatrix, LogObserver, MemoryReport,
    TaskSplit,
};
use crate::search::{refine_parameters, SearchResult};

/// Default low-accuracy borderline used in summaries.
pub const LOW_ACCURACY: f64 = 0.2;

pub struct Datasets {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_datasets(d: &DataSection) -> Result<Datasets> {
    Ok(Datasets {
        train: load_mnist(d.train_images(), d.train_labels())?,
        test: load_mnist(d.test_images(), d.test_labels())?,
    })
}

impl Datasets {
    pub fn split(&self, cfg: &ExperimentConfig, seed: u64) -> Result<TaskSplit<'_>> {
        TaskSplit::new(
            &self.train,
            &self.test,
            cfg.data.samples_per_class,
            cfg.data.test_samples_per_class,
            seed,
        )
    }
}

/// Aggregate numbers of one dynamic or non-dynamic run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub precision: String,
    pub neurons: usize,
    pub w_decay: f64,
    pub theta_inc: f64,
    pub memory: MemoryReport,
    pub memory_ratio_vs_32bit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<DynamicSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nondynamic_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicSummary {
    /// Mean over every filled cell of the matrix.
    pub overall_avg: f64,
    pub per_phase_avg: Vec<f64>,
    pub final_row: Vec<f64>,
    pub final_avg: f64,
    pub min_final: f64,
    /// Final-row tasks at or below [`LOW_ACCURACY`].
    pub low_tasks: usize,
    pub matrix: AccuracyMatrix,
}

impl DynamicSummary {
    pub fn new(m: &AccuracyMatrix) -> Self {
        let final_row = m.final_row().to_vec();
        let final_avg = final_row.iter().sum::<f64>() / final_row.len().max(1) as f64;
        Self {
            overall_avg: m.overall_avg(),
            per_phase_avg: m.per_phase_avg(),
            low_tasks: low_tasks(m, LOW_ACCURACY),
            final_avg,
            min_final: m.min_final(),
            final_row,
            matrix: m.clone(),
        }
    }
}

/// Final-row tasks with accuracy at or below `acc_low`.
pub fn low_tasks(m: &AccuracyMatrix, acc_low: f64) -> usize {
    let last = m.phases().saturating_sub(1);
    low_accuracy_tasks(m, acc_low).iter().filter(|&&(p, _)| p == last).count()
}

pub struct RunOutcome<T> {
    pub model: SnnModel<T>,
    pub summary: RunSummary,
}

fn summarize<T: Scalar>(model: &SnnModel<T>, seed: u64) -> RunSummary {
    let memory = memory_report(model);
    RunSummary {
        seed,
        precision: model.precision().to_string(),
        neurons: model.num_excitatory(),
        w_decay: model.synapses.w_decay().as_f64(),
        theta_inc: model.lif_params.theta_inc.as_f64(),
        memory_ratio_vs_32bit: memory.ratio_vs_32bit(),
        memory,
        dynamic: None,
        nondynamic_accuracy: None,
    }
}

/// Builds the untrained model for `seed`.
pub fn initial_model<T: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<SnnModel<T>> {
    build_model(&cfg.network_config::<T>()?, seed)
}

/// Trains and scores one seed in the configured scenario.
pub fn run_seed<T: Scalar>(cfg: &ExperimentConfig, data: &Datasets, seed: u64) -> Result<RunOutcome<T>> {
    cfg.validate()?;
    let split = data.split(cfg, seed)?;
    let sc = cfg.scenario.to_config(seed);
    let mut model = initial_model::<T>(cfg, seed)?;
    let mut summary = summarize(&model, seed);
    match cfg.scenario.kind {
        ScenarioKind::Dynamic => {
            let m = run_dynamic(&mut model, &split, &sc, &mut LogObserver { tag: format!("seed {seed}") })?;
            summary.dynamic = Some(DynamicSummary::new(&m));
        }
        ScenarioKind::Nondynamic => {
            summary.nondynamic_accuracy = Some(run_nondynamic(&mut model, &split, &sc)?);
        }
    }
    Ok(RunOutcome { model, summary })
}

/// The same configuration at full precision.
pub fn full_precision(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.network.precision = WeightPrecision::Full.to_string();
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    pub seed: u64,
    pub baseline_avg: f64,
    pub baseline_measured: bool,
    pub feasible: bool,
    pub chosen_w_decay: f64,
    pub chosen_threshold_term: f64,
    pub chosen_index: usize,
    pub points: usize,
    pub chosen: DynamicSummary,
}

pub struct SearchOutcome<T> {
    pub result: SearchResult<T>,
    pub summary: SearchSummary,
}

/// Runs the grid search for `seed`. The baseline average comes from the
/// config or, when absent, from a full-precision dynamic run.
pub fn search_seed<T: Scalar>(cfg: &ExperimentConfig, data: &Datasets, seed: u64) -> Result<SearchOutcome<T>> {
    cfg.validate()?;
    let section = cfg
        .search
        .as_ref()
        .ok_or_else(|| Error::Config("the search verb needs a [search] section".into()))?;
    let (baseline_avg, measured) = match section.baseline_avg {
        Some(v) => (v, false),
        None => {
            let mut base = full_precision(cfg);
            base.scenario.kind = ScenarioKind::Dynamic;
            let out = run_seed::<T>(&base, data, seed)?;
            let avg = out.summary.dynamic.expect("dynamic run").overall_avg;
            log::info!("seed {seed}: full-precision baseline overall average {avg:.4}");
            (avg, true)
        }
    };
    let sc = section.to_config(cfg.network.w_decay, cfg.neuron.theta_inc, baseline_avg);
    let split = data.split(cfg, seed)?;
    let model = initial_model::<T>(cfg, seed)?;
    let result = refine_parameters(&model, &split, &sc, &cfg.scenario.to_config(seed))?;
    let summary = SearchSummary {
        seed,
        baseline_avg,
        baseline_measured: measured,
        feasible: result.feasible,
        chosen_w_decay: result.chosen_w_decay,
        chosen_threshold_term: result.chosen_threshold_term,
        chosen_index: result.chosen_index,
        points: result.evaluated_points.len(),
        chosen: DynamicSummary::new(&result.best_matrix),
    };
    Ok(SearchOutcome { result, summary })
}
