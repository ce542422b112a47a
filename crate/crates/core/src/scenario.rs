//! Class-sequential ("dynamic") and shuffled ("non-dynamic") training
//! harnesses, the per-task accuracy matrix and weight-memory accounting.
//!
//! In the dynamic scenario the model sees every training sample of class 0,
//! then of class 1, and so on, never revisiting a finished class. After each
//! phase the neurons are relabeled from the classes seen so far and every seen
//! class is tested, filling one row of a lower-triangular matrix.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{encode_rate, subset_by_class, Dataset, SpikeTrain};
use crate::error::{ensure, Error, ParamError, Result};
use crate::network::{SnnModel, SpikeCountVector};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, Stream};

/// Presentation and evaluation settings shared by both scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration_steps: usize,
    pub max_rate_hz: f64,
    pub dt_ms: f64,
    /// Training samples per class used for the labeling pass.
    pub label_samples_per_class: usize,
    /// Seed for input encoding and the non-dynamic shuffle.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_steps: 100,
            max_rate_hz: 63.75,
            dt_ms: 1.0,
            label_samples_per_class: 100,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        ensure(self.duration_steps > 0, "duration_steps", || "must be positive".into())?;
        ensure(self.dt_ms > 0.0, "dt_ms", || format!("must be positive, got {}", self.dt_ms))?;
        ensure(
            self.max_rate_hz >= 0.0 && self.max_rate_hz * self.dt_ms <= 1000.0,
            "max_rate_hz",
            || {
                format!(
                    "per-step spike probability {} must lie in [0, 1]",
                    self.max_rate_hz * self.dt_ms / 1000.0
                )
            },
        )?;
        ensure(self.label_samples_per_class > 0, "label_samples_per_class", || {
            "must be positive".into()
        })?;
        Ok(())
    }

    pub fn encode(&self, image: &[u8], stream: Stream, sample: usize) -> Result<SpikeTrain> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, stream, sample as u64));
        Ok(encode_rate(image, self.duration_steps, self.max_rate_hz, self.dt_ms, &mut rng)?)
    }
}

/// Per-class sample indices for training, labeling and testing.
#[derive(Debug, Clone)]
pub struct TaskSplit<'a> {
    pub train_set: &'a Dataset,
    pub test_set: &'a Dataset,
    /// `train[c]`: indices into `train_set` presented while learning class `c`.
    pub train: Vec<Vec<usize>>,
    /// `test[c]`: indices into `test_set` used to score class `c`.
    pub test: Vec<Vec<usize>>,
}

impl<'a> TaskSplit<'a> {
    /// Seeded per-class selection: `samples_per_class` training samples per
    /// class (error if any class is short) and up to `test_cap` test samples.
    pub fn new(
        train_set: &'a Dataset,
        test_set: &'a Dataset,
        samples_per_class: usize,
        test_cap: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Split, 0));
        let train = crate::data::split_by_class(train_set, samples_per_class, &mut rng)?;
        let test = subset_by_class(test_set, test_cap, &mut rng);
        Ok(Self {
            train_set,
            test_set,
            train,
            test,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.train.len()
    }

    fn label_indices(&self, upto: usize, per_class: usize) -> Vec<(usize, u8)> {
        self.train[..=upto]
            .iter()
            .enumerate()
            .flat_map(|(c, idx)| idx.iter().take(per_class).map(move |&s| (s, c as u8)))
            .collect()
    }
}

/// `acc[i][k]`: accuracy on task `k` after training phase `i`, for `k <= i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    /// Builds a matrix from explicit rows; row `i` must have `i + 1` entries in `[0, 1]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ParamError> {
        for (i, row) in rows.iter().enumerate() {
            ensure(row.len() == i + 1, "accuracy_matrix", || {
                format!("row {i} has {} entries, expected {}", row.len(), i + 1)
            })?;
            ensure(row.iter().all(|a| (0.0..=1.0).contains(a)), "accuracy_matrix", || {
                format!("row {i} has entries outside [0, 1]")
            })?;
        }
        Ok(Self { rows })
    }

    pub fn phases(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, phase: usize, task: usize) -> Option<f64> {
        self.rows.get(phase).and_then(|r| r.get(task)).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub(crate) fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.rows.len() + 1);
        self.rows.push(row);
    }

    pub fn final_row(&self) -> &[f64] {
        self.rows.last().map_or(&[], |r| r.as_slice())
    }

    /// Mean over the tasks seen by each phase.
    pub fn per_phase_avg(&self) -> Vec<f64> {
        self.rows.iter().map(|r| mean(r)).collect()
    }

    /// Mean of the final row: average accuracy over all evaluated tasks.
    pub fn overall_avg(&self) -> f64 {
        mean(self.final_row())
    }

    pub fn min_final(&self) -> f64 {
        self.final_row().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with one row per phase and one column per task; cells above the
    /// diagonal are empty.
    pub fn to_csv(&self, num_tasks: usize) -> String {
        let mut out = String::from("phase");
        for k in 0..num_tasks {
            let _ = write!(out, ",task_{k}");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{i}");
            for k in 0..num_tasks {
                match row.get(k) {
                    Some(a) => {
                        let _ = write!(out, ",{a:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

impl Default for AccuracyMatrix {
    fn default() -> Self {
        Self::new()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Hooks into the dynamic scenario loop, for progress reporting and tests.
pub trait ScenarioObserver {
    fn on_train_sample(&mut self, _phase: usize, _class: usize, _sample: usize) {}
    fn on_evaluate(&mut self, _phase: usize, _task: usize, _accuracy: f64) {}
}

pub struct NoopObserver;

impl ScenarioObserver for NoopObserver {}

/// Logs one line per phase.
pub struct LogObserver {
    pub tag: String,
}

impl ScenarioObserver for LogObserver {
    fn on_evaluate(&mut self, phase: usize, task: usize, accuracy: f64) {
        log::debug!("{} phase {phase} task {task}: {accuracy:.4}", self.tag);
    }
}

fn responses<T: Scalar>(
    model: &SnnModel<T>,
    cfg: &ScenarioConfig,
    ds: &Dataset,
    samples: &[(usize, u8)],
    stream: Stream,
) -> Result<Vec<(SpikeCountVector, u8)>> {
    samples
        .par_iter()
        .map(|&(s, class)| {
            let train = cfg.encode(ds.image(s), stream, s)?;
            Ok((model.infer(&train)?, class))
        })
        .collect()
}

fn relabel<T: Scalar>(model: &mut SnnModel<T>, split: &TaskSplit<'_>, cfg: &ScenarioConfig, upto: usize) -> Result<()> {
    let samples = split.label_indices(upto, cfg.label_samples_per_class);
    let resp = responses(model, cfg, split.train_set, &samples, Stream::Label)?;
    model.assign_labels_from_responses(&resp)
}

/// Fraction of `samples` the model classifies correctly.
pub fn accuracy<T: Scalar>(model: &SnnModel<T>, cfg: &ScenarioConfig, ds: &Dataset, samples: &[usize]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let correct: Result<usize> = samples
        .par_iter()
        .map(|&s| {
            let train = cfg.encode(ds.image(s), Stream::Test, s)?;
            let pred = model.classify(&train)?;
            Ok(usize::from(pred == ds.label(s)))
        })
        .sum();
    Ok(correct? as f64 / samples.len() as f64)
}

fn train_on<T: Scalar>(model: &mut SnnModel<T>, cfg: &ScenarioConfig, ds: &Dataset, s: usize) -> Result<()> {
    let train = cfg.encode(ds.image(s), Stream::Train, s)?;
    model.present_sample(&train, true)?;
    Ok(())
}

/// Class-sequential training and testing: phase `i` trains on class `i` only,
/// relabels from classes `0..=i`, then scores each of those classes.
pub fn run_dynamic<T: Scalar>(
    model: &mut SnnModel<T>,
    split: &TaskSplit<'_>,
    cfg: &ScenarioConfig,
    observer: &mut dyn ScenarioObserver,
) -> Result<AccuracyMatrix> {
    cfg.validate()?;
    let mut matrix = AccuracyMatrix::new();
    for phase in 0..split.num_tasks() {
        for &s in &split.train[phase] {
            train_on(model, cfg, split.train_set, s).map_err(|e| e.context(format!("phase {phase}")))?;
            observer.on_train_sample(phase, phase, s);
        }
        relabel(model, split, cfg, phase)?;
        let mut row = Vec::with_capacity(phase + 1);
        for task in 0..=phase {
            let acc = accuracy(model, cfg, split.test_set, &split.test[task])?;
            observer.on_evaluate(phase, task, acc);
            row.push(acc);
        }
        log::info!(
            "phase {phase}: mean {:.4} over {} tasks",
            mean(&row),
            row.len()
        );
        matrix.push_row(row);
    }
    Ok(matrix)
}

/// Conventional training: one pass over all classes' training samples in a
/// seeded random order, then a single accuracy over the whole test split.
pub fn run_nondynamic<T: Scalar>(model: &mut SnnModel<T>, split: &TaskSplit<'_>, cfg: &ScenarioConfig) -> Result<f64> {
    cfg.validate()?;
    let mut order: Vec<usize> = split.train.iter().flatten().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, Stream::Shuffle, 0));
    order.shuffle(&mut rng);
    for &s in &order {
        train_on(model, cfg, split.train_set, s)?;
    }
    relabel(model, split, cfg, split.num_tasks() - 1)?;
    let all: Vec<usize> = split.test.iter().flatten().copied().collect();
    accuracy(model, cfg, split.test_set, &all)
}

/// Storage cost of the learned weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryReport {
    pub synapse_count: u64,
    pub bits_per_weight: u32,
    pub total_bits: u64,
    /// `bits_per_weight / 32` as an exact fraction.
    pub ratio_numerator: u32,
    pub ratio_denominator: u32,
}

impl MemoryReport {
    pub fn ratio_vs_32bit(&self) -> f64 {
        self.ratio_numerator as f64 / self.ratio_denominator as f64
    }

    /// The "N×" saving relative to 32-bit weights.
    pub fn saving_factor(&self) -> f64 {
        self.ratio_denominator as f64 / self.ratio_numerator as f64
    }
}

pub fn memory_report<T: Scalar>(model: &SnnModel<T>) -> MemoryReport {
    memory_report_for(model.synapses.len() as u64, model.precision().bits_per_weight())
}

pub fn memory_report_for(synapse_count: u64, bits_per_weight: u32) -> MemoryReport {
    let g = gcd(bits_per_weight, 32);
    MemoryReport {
        synapse_count,
        bits_per_weight,
        total_bits: synapse_count * bits_per_weight as u64,
        ratio_numerator: bits_per_weight / g,
        ratio_denominator: 32 / g,
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Final-row `(phase, task)` entries at or below `acc_low`.
pub fn low_accuracy_tasks(m: &AccuracyMatrix, acc_low: f64) -> Vec<(usize, usize)> {
    let Some(phase) = m.phases().checked_sub(1) else {
        return Vec::new();
    };
    m.final_row()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a <= acc_low)
        .map(|(k, _)| (phase, k))
        .collect()
}

pub(crate) fn require_complete(m: &AccuracyMatrix, expected: usize) -> Result<()> {
    if m.phases() != expected {
        return Err(Error::IncompleteMatrix {
            phases: m.phases(),
            expected,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_model, NetworkConfig};
    use crate::plasticity::StdpParams;
    use crate::quant::{make_format, WeightPrecision};

    #[test]
    fn memory_ratios() {
        let fp = WeightPrecision::Full;
        let q4 = WeightPrecision::truncating(make_format(0, 3).unwrap());
        let q8 = WeightPrecision::truncating(make_format(0, 7).unwrap());
        let r4 = memory_report_for(313_600, q4.bits_per_weight());
        assert_eq!((r4.ratio_numerator, r4.ratio_denominator), (1, 8));
        assert_eq!(r4.total_bits, 313_600 * 4);
        assert_eq!(r4.saving_factor(), 8.0);
        let r8 = memory_report_for(313_600, q8.bits_per_weight());
        assert_eq!(r8.ratio_vs_32bit(), 0.25);
        let r32 = memory_report_for(313_600, fp.bits_per_weight());
        assert_eq!(r32.ratio_vs_32bit(), 1.0);
        let r6 = memory_report_for(10, 6);
        assert_eq!((r6.ratio_numerator, r6.ratio_denominator), (3, 16));
    }

    #[test]
    fn low_accuracy_scan() {
        let ones = AccuracyMatrix::from_rows((0..10).map(|i| vec![1.0; i + 1]).collect()).unwrap();
        assert!(low_accuracy_tasks(&ones, 0.2).is_empty());
        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| vec![0.9; i + 1]).collect();
        rows[9][7] = 0.1;
        let m = AccuracyMatrix::from_rows(rows).unwrap();
        assert_eq!(low_accuracy_tasks(&m, 0.2), vec![(9, 7)]);
        assert!(low_accuracy_tasks(&AccuracyMatrix::new(), 0.2).is_empty());
    }

    #[test]
    fn matrix_shape_is_checked() {
        assert!(AccuracyMatrix::from_rows(vec![vec![0.5, 0.5]]).is_err());
        assert!(AccuracyMatrix::from_rows(vec![vec![1.5]]).is_err());
        let m = AccuracyMatrix::from_rows(vec![vec![1.0], vec![0.5, 0.25]]).unwrap();
        assert_eq!(m.per_phase_avg(), vec![1.0, 0.375]);
        assert_eq!(m.overall_avg(), 0.375);
        assert_eq!(m.to_csv(3), "phase,task_0,task_1,task_2\n0,1.000000,,\n1,0.500000,0.250000,\n");
    }

    /// Images whose pixels carry no class information.
    fn noise_dataset(per_class: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_class * 10;
        let pixels = (0..n * 16).map(|_| rng.gen_range(0..=255u8)).collect();
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::new(4, 4, pixels, labels).unwrap()
    }

    fn tiny_model(neurons: usize) -> SnnModel<f64> {
        let mut cfg = NetworkConfig::<f64>::mnist(neurons, WeightPrecision::Full);
        cfg.num_inputs = 16;
        cfg.init_weight_max = 1.0;
        build_model(&cfg, 3).unwrap()
    }

    struct Recorder {
        trained: Vec<(usize, usize, usize)>,
        evaluated: Vec<(usize, usize)>,
    }

    impl ScenarioObserver for Recorder {
        fn on_train_sample(&mut self, phase: usize, class: usize, sample: usize) {
            self.trained.push((phase, class, sample));
        }
        fn on_evaluate(&mut self, phase: usize, task: usize, _: f64) {
            self.evaluated.push((phase, task));
        }
    }

    #[test]
    fn dynamic_loop_structure() {
        let train = noise_dataset(6, 1);
        let test = noise_dataset(4, 2);
        let split = TaskSplit::new(&train, &test, 5, None, 0).unwrap();
        let cfg = ScenarioConfig {
            duration_steps: 20,
            max_rate_hz: 300.0,
            label_samples_per_class: 3,
            ..Default::default()
        };
        let mut model = tiny_model(6);
        let mut rec = Recorder {
            trained: Vec::new(),
            evaluated: Vec::new(),
        };
        let m = run_dynamic(&mut model, &split, &cfg, &mut rec).unwrap();
        assert_eq!(m.phases(), 10);
        for (i, row) in m.rows().iter().enumerate() {
            assert_eq!(row.len(), i + 1);
        }
        let phases: Vec<usize> = rec.trained.iter().map(|t| t.0).collect();
        assert!(phases.windows(2).all(|w| w[0] <= w[1]));
        assert!(rec.trained.iter().all(|&(p, c, s)| p == c && train.label(s) as usize == c));
        assert_eq!(rec.trained.len(), 50);
        let expected: Vec<(usize, usize)> = (0..10).flat_map(|i| (0..=i).map(move |k| (i, k))).collect();
        assert_eq!(rec.evaluated, expected);
    }

    #[test]
    fn frozen_model_on_uninformative_inputs_scores_chance() {
        // A classifier that ignores the input and only predicts seen classes
        // has E[mean of row i] = 1 / (i + 1).
        let train = noise_dataset(40, 5);
        let test = noise_dataset(60, 6);
        let split = TaskSplit::new(&train, &test, 40, None, 9).unwrap();
        let cfg = ScenarioConfig {
            duration_steps: 30,
            max_rate_hz: 300.0,
            label_samples_per_class: 40,
            seed: 4,
            ..Default::default()
        };
        let mut model = tiny_model(20);
        model.stdp_params = StdpParams::frozen();
        model.synapses.set_w_decay(0.0).unwrap();
        let m = run_dynamic(&mut model, &split, &cfg, &mut NoopObserver).unwrap();
        for (i, avg) in m.per_phase_avg().iter().enumerate() {
            let chance = 1.0 / (i + 1) as f64;
            assert!((avg - chance).abs() < 0.12, "phase {i}: {avg} vs {chance}");
        }
    }

    #[test]
    fn untrained_model_on_uninformative_inputs_is_chance() {
        let train = noise_dataset(10, 5);
        let test = noise_dataset(50, 6);
        let split = TaskSplit::new(&train, &test, 10, None, 9).unwrap();
        let cfg = ScenarioConfig {
            duration_steps: 30,
            max_rate_hz: 300.0,
            label_samples_per_class: 10,
            ..Default::default()
        };
        let mut model = tiny_model(20);
        let before = model.synapses.clone();
        relabel(&mut model, &split, &cfg, 9).unwrap();
        let all: Vec<usize> = split.test.iter().flatten().copied().collect();
        let acc = accuracy(&model, &cfg, &test, &all).unwrap();
        assert!((acc - 0.1).abs() < 0.06, "{acc}");
        assert_eq!(model.synapses, before);
    }
}
