//! Grid refinement of weight decay and the adaptive-threshold increment for
//! quantized models.
//!
//! Starting from the baseline values, `w_decay` is only ever increased and the
//! threshold increment `theta_inc` only ever decreased. Each grid point
//! retrains a fresh copy of the untrained model through the dynamic scenario.
//! A point is feasible when every final-row task accuracy is strictly above
//! `acc_low` and the overall average is at least `baseline_avg - acc_loss`;
//! the feasible point with the highest overall average wins.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure, ParamError, Result};
use crate::network::SnnModel;
use crate::scalar::Scalar;
use crate::scenario::{require_complete, run_dynamic, AccuracyMatrix, NoopObserver, ScenarioConfig, TaskSplit};

const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Increment applied to `w_decay` per outer step.
    pub step_w: f64,
    pub w_decay_upper: f64,
    /// Decrement applied to `theta_inc` per inner step.
    pub step_vth: f64,
    /// Smallest `theta_inc` explored.
    pub vth_lower: f64,
    /// Every final-row task must score strictly above this.
    pub acc_low: f64,
    /// Tolerated drop of the overall average below `baseline_avg`.
    pub acc_loss: f64,
    /// Overall average of the unquantized baseline in the same scenario.
    pub baseline_avg: f64,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        ensure(self.step_w > 0.0, "step_w", || format!("must be positive, got {}", self.step_w))?;
        ensure(self.step_vth > 0.0, "step_vth", || format!("must be positive, got {}", self.step_vth))?;
        ensure(self.acc_low > 0.0 && self.acc_low < 1.0, "acc_low", || {
            format!("must lie in (0, 1), got {}", self.acc_low)
        })?;
        ensure(self.acc_loss >= 0.0, "acc_loss", || format!("must be non-negative, got {}", self.acc_loss))?;
        ensure((0.0..=1.0).contains(&self.baseline_avg), "baseline_avg", || {
            format!("must lie in [0, 1], got {}", self.baseline_avg)
        })?;
        ensure(self.w_decay_upper < 1.0, "w_decay_upper", || {
            format!("must be below 1, got {}", self.w_decay_upper)
        })?;
        ensure(self.vth_lower >= 0.0, "vth_lower", || {
            format!("threshold increments cannot go negative, got {}", self.vth_lower)
        })?;
        Ok(())
    }
}

/// `true` iff every final-row task beats `acc_low` and the overall average is
/// within `acc_loss` of the baseline.
pub fn check_constraints(m: &AccuracyMatrix, sc: &SearchConfig, num_tasks: usize) -> Result<bool> {
    require_complete(m, num_tasks)?;
    let per_task = m.final_row().iter().all(|&a| a > sc.acc_low);
    let average = m.overall_avg() >= sc.baseline_avg - sc.acc_loss;
    Ok(per_task && average)
}

/// Values `start, start ± step, ...` up to and including `end`.
fn axis(start: f64, end: f64, step: f64, ascending: bool) -> Vec<f64> {
    let span = if ascending { end - start } else { start - end };
    let count = (span / step + GRID_TOLERANCE).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let delta = k as f64 * step;
            if ascending {
                start + delta
            } else {
                start - delta
            }
        })
        .collect()
}

/// The `(w_decay, theta_inc)` grid in exploration order (outer: decay).
pub fn grid(start_w: f64, start_theta: f64, sc: &SearchConfig) -> Result<Vec<(f64, f64)>, ParamError> {
    sc.validate()?;
    ensure(sc.w_decay_upper >= start_w - GRID_TOLERANCE, "w_decay_upper", || {
        format!("upper bound {} is below the baseline decay {start_w}", sc.w_decay_upper)
    })?;
    ensure(sc.vth_lower <= start_theta + GRID_TOLERANCE, "vth_lower", || {
        format!("lower bound {} is above the baseline threshold term {start_theta}", sc.vth_lower)
    })?;
    let ws = axis(start_w, sc.w_decay_upper, sc.step_w, true);
    let qs = axis(start_theta, sc.vth_lower, sc.step_vth, false);
    Ok(ws
        .iter()
        .flat_map(|&w| qs.iter().map(move |&q| (w, q.max(0.0))))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluatedPoint {
    pub w_decay: f64,
    pub threshold_term: f64,
    pub overall_avg: f64,
    pub min_task_acc: f64,
    pub low_tasks: usize,
    pub constraint_pass: bool,
    /// Grid steps away from the baseline `(decay steps + threshold steps)`.
    pub steps_from_baseline: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult<T> {
    pub best_model: SnnModel<T>,
    pub best_matrix: AccuracyMatrix,
    pub chosen_w_decay: f64,
    pub chosen_threshold_term: f64,
    /// Index of the chosen point in `evaluated_points`.
    pub chosen_index: usize,
    pub evaluated_points: Vec<EvaluatedPoint>,
    /// False when no point met the constraints; the baseline-parameter point
    /// is returned in that case.
    pub feasible: bool,
}

impl<T> SearchResult<T> {
    pub fn points_csv(&self) -> String {
        points_csv(&self.evaluated_points)
    }
}

pub fn points_csv(points: &[EvaluatedPoint]) -> String {
    let mut out = String::from("w_decay,threshold_term,overall_avg,min_task_acc,pass\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{}",
            p.w_decay, p.threshold_term, p.overall_avg, p.min_task_acc, p.constraint_pass
        );
    }
    out
}

/// Index of the winner among evaluated points: highest overall average among
/// feasible points, then fewest steps from baseline, then first in grid order.
pub fn select_best(points: &[EvaluatedPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if !p.constraint_pass {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let q = &points[b];
                p.overall_avg > q.overall_avg
                    || (p.overall_avg == q.overall_avg && p.steps_from_baseline < q.steps_from_baseline)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Trains a fresh copy of `model_in` with the given parameters through the
/// dynamic scenario.
pub fn evaluate_point<T: Scalar>(
    model_in: &SnnModel<T>,
    split: &TaskSplit<'_>,
    cfg: &ScenarioConfig,
    w_decay: f64,
    theta_inc: f64,
) -> Result<(SnnModel<T>, AccuracyMatrix)> {
    let mut model = model_in.clone();
    model.synapses.set_w_decay(T::from_f64_lossy(w_decay))?;
    model.lif_params.theta_inc = T::from_f64_lossy(theta_inc);
    model.lif_params.validate()?;
    let m = run_dynamic(&mut model, split, cfg, &mut NoopObserver)?;
    Ok((model, m))
}

/// Explores the grid and returns the selected model. Points are independent
/// and run in parallel; selection happens after all of them finish.
pub fn refine_parameters<T: Scalar>(
    model_in: &SnnModel<T>,
    split: &TaskSplit<'_>,
    sc: &SearchConfig,
    cfg: &ScenarioConfig,
) -> Result<SearchResult<T>> {
    let start_w = model_in.synapses.w_decay().as_f64();
    let start_q = model_in.lif_params.theta_inc.as_f64();
    let points = grid(start_w, start_q, sc)?;
    let per_axis = axis(start_q, sc.vth_lower, sc.step_vth, false).len();
    let num_tasks = split.num_tasks();
    log::info!("search: {} grid points", points.len());

    let mut runs = points
        .par_iter()
        .enumerate()
        .map(|(i, &(w, q))| {
            let (model, m) = evaluate_point(model_in, split, cfg, w, q)
                .map_err(|e| e.context(format!("grid point {i} (w_decay={w}, theta_inc={q})")))?;
            let pass = check_constraints(&m, sc, num_tasks)?;
            log::info!(
                "search point {i}: w_decay={w:.4} theta_inc={q:.4} avg={:.4} min={:.4} pass={pass}",
                m.overall_avg(),
                m.min_final()
            );
            let point = EvaluatedPoint {
                w_decay: w,
                threshold_term: q,
                overall_avg: m.overall_avg(),
                min_task_acc: m.min_final(),
                low_tasks: m.final_row().iter().filter(|&&a| a <= sc.acc_low).count(),
                constraint_pass: pass,
                steps_from_baseline: i / per_axis + i % per_axis,
            };
            Ok((point, Some((model, m))))
        })
        .collect::<Result<Vec<_>>>()?;

    let evaluated_points: Vec<EvaluatedPoint> = runs.iter().map(|r| r.0.clone()).collect();
    let (chosen_index, feasible) = match select_best(&evaluated_points) {
        Some(i) => (i, true),
        None => (0, false),
    };
    let (best_model, best_matrix) = runs[chosen_index].1.take().expect("each run holds its model");
    let chosen = &evaluated_points[chosen_index];
    Ok(SearchResult {
        best_model,
        best_matrix,
        chosen_w_decay: chosen.w_decay,
        chosen_threshold_term: chosen.threshold_term,
        chosen_index,
        feasible,
        evaluated_points,
    })
}
