use qsnn::data::Dataset;
use qsnn::network::{build_model, NetworkConfig, SnnModel};
use qsnn::scenario::{run_dynamic, AccuracyMatrix, NoopObserver, ScenarioConfig, TaskSplit};
use qsnn::search::{refine_parameters, SearchConfig};

pub const CLASSES: usize = 3;

pub fn split<'a>(train: &'a Dataset, test: &'a Dataset) -> TaskSplit<'a> {
    let by_class = |d: &Dataset| -> Vec<Vec<usize>> {
        (0..CLASSES)
            .map(|c| (0..d.len()).filter(|&i| d.label(i) as usize == c).collect())
            .collect()
    };
    TaskSplit {
        train_set: train,
        test_set: test,
        train: by_class(train),
        test: by_class(test),
    }
}

pub fn model(eta_post: f32) -> SnnModel<f32> {
    let mut cfg = NetworkConfig::<f32>::mnist(12, "fp32".parse().unwrap());
    cfg.num_inputs = 64;
    cfg.num_classes = CLASSES;
    cfg.inhibition_strength = 20.0;
    cfg.stdp.eta_post = eta_post;
    cfg.lif.theta_inc = 2.0;
    build_model(&cfg, 11).unwrap()
}

pub fn scenario() -> ScenarioConfig {
    ScenarioConfig {
        duration_steps: 60,
        max_rate_hz: 200.0,
        label_samples_per_class: 4,
        seed: 5,
        ..ScenarioConfig::default()
    }
}

pub fn search_config(baseline_avg: f64, acc_low: f64) -> SearchConfig {
    SearchConfig {
        step_w: 0.02,
        w_decay_upper: 0.04,
        step_vth: 0.25,
        vth_lower: 1.5,
        acc_low,
        acc_loss: 0.05,
        baseline_avg,
    }
}

struct Oracle {
    w_decay: f64,
    theta_inc: f64,
    steps: usize,
    matrix: AccuracyMatrix,
    pass: bool,
}

fn brute_force(base: &SnnModel<f32>, s: &TaskSplit<'_>, sc: &SearchConfig) -> Vec<Oracle> {
    let mut out = Vec::new();
    let w0 = base.synapses.w_decay() as f64;
    let q0 = base.lif_params.theta_inc as f64;
    let mut i = 0;
    while w0 + i as f64 * sc.step_w <= sc.w_decay_upper + 1e-9 {
        let mut j = 0;
        while q0 - j as f64 * sc.step_vth >= sc.vth_lower - 1e-9 {
            let (w, q) = (w0 + i as f64 * sc.step_w, q0 - j as f64 * sc.step_vth);
            let mut m = base.clone();
            m.synapses.set_w_decay(w as f32).unwrap();
            m.lif_params.theta_inc = q as f32;
            let matrix = run_dynamic(&mut m, s, &scenario(), &mut NoopObserver).unwrap();
            let last = matrix.rows().last().unwrap();
            let avg = last.iter().sum::<f64>() / last.len() as f64;
            let pass = last.iter().all(|&a| a > sc.acc_low) && avg >= sc.baseline_avg - sc.acc_loss;
            out.push(Oracle { w_decay: w, theta_inc: q, steps: i + j, matrix, pass });
            j += 1;
        }
        i += 1;
    }
    out
}

fn oracle_choice(points: &[Oracle]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, p) in points.iter().enumerate().filter(|(_, p)| p.pass) {
        let better = match best {
            None => true,
            Some(b) => {
                let (a, ab) = (p.matrix.overall_avg(), points[b].matrix.overall_avg());
                a > ab || (a == ab && p.steps < points[b].steps)
            }
        };
        if better {
            best = Some(k);
        }
    }
    best
}

/// Runs the grid search on a toy split and compares it with exhaustive
/// re-evaluation of every point, for a feasible and an infeasible setting.
pub fn check_against_brute_force() {
    let train = super::row_patterns(8, CLASSES, 12, 1);
    let test = super::row_patterns(8, CLASSES, 6, 2);
    let s = split(&train, &test);
    // A learning model against a lenient baseline, and a frozen one against a
    // baseline no point reaches.
    for (eta, baseline, acc_low) in [(0.05, 0.0, 0.2), (0.0, 1.0, 0.99)] {
        let base = model(eta);
        let sc = search_config(baseline, acc_low);
        let oracle = brute_force(&base, &s, &sc);
        assert_eq!(oracle.len(), 9);
        let feasible = oracle.iter().filter(|o| o.pass).count();
        if acc_low < 0.5 {
            assert!(feasible > 0 && feasible < oracle.len(), "{feasible} feasible");
        } else {
            assert_eq!(feasible, 0);
        }
        let got = refine_parameters(&base, &s, &sc, &scenario()).unwrap();
        assert_eq!(got.evaluated_points.len(), oracle.len());
        for (p, o) in got.evaluated_points.iter().zip(&oracle) {
            assert!((p.w_decay - o.w_decay).abs() < 1e-12);
            assert!((p.threshold_term - o.theta_inc).abs() < 1e-12);
            assert_eq!(p.overall_avg, o.matrix.overall_avg());
            assert_eq!(p.constraint_pass, o.pass);
            assert_eq!(p.steps_from_baseline, o.steps);
        }
        match oracle_choice(&oracle) {
            Some(k) => {
                assert!(got.feasible);
                assert_eq!(got.chosen_index, k);
                assert_eq!(got.best_matrix, oracle[k].matrix);
            }
            None => {
                assert!(!got.feasible);
                assert_eq!(got.chosen_index, 0);
                assert_eq!(got.best_matrix, oracle[0].matrix);
            }
        }
    }
}

