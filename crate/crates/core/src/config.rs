//! TOML experiment configuration.
//!
//! Every section is optional; omitted keys take the defaults below. Unknown
//! keys are rejected so typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParamError};
use crate::network::NetworkConfig;
use crate::neuron::LifParams;
use crate::plasticity::StdpParams;
use crate::quant::{RoundingMode, WeightPrecision};
use crate::scalar::Scalar;
use crate::scenario::ScenarioConfig;
use crate::search::SearchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    #[default]
    Dynamic,
    Nondynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding the four IDX files under their usual MNIST names.
    pub dir: PathBuf,
    pub samples_per_class: usize,
    /// Test samples scored per class; `None` uses all of them.
    pub test_samples_per_class: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mnist"),
            samples_per_class: 500,
            test_samples_per_class: Some(100),
        }
    }
}

impl DataSection {
    pub fn train_images(&self) -> PathBuf {
        self.dir.join("train-images-idx3-ubyte")
    }

    pub fn train_labels(&self) -> PathBuf {
        self.dir.join("train-labels-idx1-ubyte")
    }

    pub fn test_images(&self) -> PathBuf {
        self.dir.join("t10k-images-idx3-ubyte")
    }

    pub fn test_labels(&self) -> PathBuf {
        self.dir.join("t10k-labels-idx1-ubyte")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub neurons: usize,
    /// `"fp32"` or a fixed-point format such as `"Q0.3"`.
    pub precision: String,
    pub rounding: RoundingMode,
    pub inhibition: f64,
    pub w_decay: f64,
    pub w_max: f64,
    pub init_weight_max: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let d = NetworkConfig::<f64>::mnist(400, WeightPrecision::Full);
        Self {
            neurons: d.num_excitatory,
            precision: "fp32".into(),
            rounding: RoundingMode::Truncate,
            inhibition: d.inhibition_strength,
            w_decay: d.w_decay,
            w_max: d.w_max,
            init_weight_max: d.init_weight_max,
        }
    }
}

impl NetworkSection {
    pub fn precision(&self) -> Result<WeightPrecision, ParamError> {
        let p: WeightPrecision = self
            .precision
            .parse()
            .map_err(|e| ParamError::new("precision", format!("{e}")))?;
        Ok(match p {
            WeightPrecision::Fixed { format, .. } => WeightPrecision::Fixed {
                format,
                rounding: self.rounding,
            },
            full => full,
        })
    }
}

/// LIF parameters; per-step factors for both decays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronSection {
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_th_base: f64,
    pub v_decay: f64,
    pub theta_inc: f64,
    pub theta_decay: f64,
    pub t_ref: u32,
    pub dt: f64,
}

impl Default for NeuronSection {
    fn default() -> Self {
        Self::from_params(&LifParams::<f64>::default())
    }
}

impl NeuronSection {
    pub fn from_params<T: Scalar>(p: &LifParams<T>) -> Self {
        Self {
            v_rest: p.v_rest.as_f64(),
            v_reset: p.v_reset.as_f64(),
            v_th_base: p.v_th_base.as_f64(),
            v_decay: p.v_decay.as_f64(),
            theta_inc: p.theta_inc.as_f64(),
            theta_decay: p.theta_decay.as_f64(),
            t_ref: p.t_ref,
            dt: p.dt.as_f64(),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> LifParams<T> {
        LifParams {
            v_rest: T::from_f64_lossy(self.v_rest),
            v_reset: T::from_f64_lossy(self.v_reset),
            v_th_base: T::from_f64_lossy(self.v_th_base),
            v_decay: T::from_f64_lossy(self.v_decay),
            theta_inc: T::from_f64_lossy(self.theta_inc),
            theta_decay: T::from_f64_lossy(self.theta_decay),
            t_ref: self.t_ref,
            dt: T::from_f64_lossy(self.dt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdpSection {
    pub eta_post: f64,
    pub eta_pre: f64,
    pub trace_decay_pre: f64,
    pub trace_decay_post: f64,
    pub trace_inc: f64,
}

impl Default for StdpSection {
    fn default() -> Self {
        Self::from_params(&StdpParams::<f64>::default())
    }
}

impl StdpSection {
    pub fn from_params<T: Scalar>(p: &StdpParams<T>) -> Self {
        Self {
            eta_post: p.eta_post.as_f64(),
            eta_pre: p.eta_pre.as_f64(),
            trace_decay_pre: p.trace_decay_pre.as_f64(),
            trace_decay_post: p.trace_decay_post.as_f64(),
            trace_inc: p.trace_inc.as_f64(),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> StdpParams<T> {
        StdpParams {
            eta_post: T::from_f64_lossy(self.eta_post),
            eta_pre: T::from_f64_lossy(self.eta_pre),
            trace_decay_pre: T::from_f64_lossy(self.trace_decay_pre),
            trace_decay_post: T::from_f64_lossy(self.trace_decay_post),
            trace_inc: T::from_f64_lossy(self.trace_inc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub duration_steps: usize,
    pub max_rate_hz: f64,
    pub dt_ms: f64,
    pub label_samples_per_class: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            kind: ScenarioKind::Dynamic,
            duration_steps: d.duration_steps,
            max_rate_hz: d.max_rate_hz,
            dt_ms: d.dt_ms,
            label_samples_per_class: d.label_samples_per_class,
        }
    }
}

impl ScenarioSection {
    pub fn to_config(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            duration_steps: self.duration_steps,
            max_rate_hz: self.max_rate_hz,
            dt_ms: self.dt_ms,
            label_samples_per_class: self.label_samples_per_class,
            seed,
        }
    }
}

/// Grid bounds are given relative to the network's baseline values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub step_w: f64,
    /// Largest explored `w_decay` minus the baseline `w_decay`.
    pub w_decay_span: f64,
    pub step_vth: f64,
    /// Largest explored reduction of `theta_inc`.
    pub theta_span: f64,
    pub acc_low: f64,
    pub acc_loss: f64,
    /// Overall average of the unquantized baseline; measured when absent.
    pub baseline_avg: Option<f64>,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            step_w: 0.03,
            w_decay_span: 0.09,
            step_vth: 0.1,
            theta_span: 0.2,
            acc_low: 0.2,
            acc_loss: 0.0,
            baseline_avg: None,
        }
    }
}

impl SearchSection {
    pub fn to_config(&self, base_w_decay: f64, base_theta_inc: f64, baseline_avg: f64) -> SearchConfig {
        SearchConfig {
            step_w: self.step_w,
            w_decay_upper: base_w_decay + self.w_decay_span,
            step_vth: self.step_vth,
            vth_lower: (base_theta_inc - self.theta_span).max(0.0),
            acc_low: self.acc_low,
            acc_loss: self.acc_loss,
            baseline_avg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scalar: ScalarKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub network: NetworkSection,
    pub neuron: NeuronSection,
    pub stdp: StdpSection,
    pub scenario: ScenarioSection,
    pub search: Option<SearchSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scalar: ScalarKind::F32,
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            network: NetworkSection::default(),
            neuron: NeuronSection::default(),
            stdp: StdpSection::default(),
            scenario: ScenarioSection::default(),
            search: None,
        }
    }
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ParamError>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} configuration error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, Error> {
        Self::from_toml_with_overrides(s, &[])
    }

    /// Parses `s` after applying `key.path=value` overrides; values are read
    /// as TOML and fall back to plain strings.
    pub fn from_toml_with_overrides(s: &str, overrides: &[String]) -> Result<Self, Error> {
        let mut table: toml::Table = s.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table.try_into().map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_toml_with_overrides(&text, overrides).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn network_config<T: Scalar>(&self) -> Result<NetworkConfig<T>, ParamError> {
        let n = &self.network;
        Ok(NetworkConfig {
            num_inputs: 784,
            num_excitatory: n.neurons,
            num_classes: 10,
            lif: self.neuron.to_params(),
            stdp: self.stdp.to_params(),
            inhibition_strength: T::from_f64_lossy(n.inhibition),
            w_decay: T::from_f64_lossy(n.w_decay),
            w_max: T::from_f64_lossy(n.w_max),
            init_weight_max: T::from_f64_lossy(n.init_weight_max),
            precision: n.precision()?,
        })
    }

    /// Checks every section and returns every violation found.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errors = Vec::new();
        let mut push = |r: Result<(), ParamError>| {
            if let Err(e) = r {
                errors.push(e);
            }
        };
        push(if self.seeds.is_empty() {
            Err(ParamError::new("seeds", "at least one seed is required"))
        } else {
            Ok(())
        });
        push(if self.data.samples_per_class == 0 {
            Err(ParamError::new("samples_per_class", "must be positive"))
        } else {
            Ok(())
        });
        push(if self.data.test_samples_per_class == Some(0) {
            Err(ParamError::new("test_samples_per_class", "must be positive"))
        } else {
            Ok(())
        });
        push(self.neuron.to_params::<f64>().validate());
        push(self.stdp.to_params::<f64>().validate());
        push(self.scenario.to_config(0).validate());
        match self.network.precision() {
            Err(e) => push(Err(e)),
            Ok(_) => {
                // Neuron and STDP problems are already reported above.
                let mut net = self.network_config::<f64>().expect("precision parsed");
                net.lif = LifParams::default();
                net.stdp = StdpParams::default();
                push(net.validate());
                if self.scalar == ScalarKind::F32 {
                    push(crate::plasticity::check_precision_fits::<f32>(net.precision));
                }
            }
        }
        if let Some(s) = &self.search {
            let base_w = self.network.w_decay;
            let base_q = self.neuron.theta_inc;
            push(s.to_config(base_w, base_q, s.baseline_avg.unwrap_or(0.0)).validate());
            push(if s.w_decay_span < 0.0 || s.theta_span < 0.0 {
                Err(ParamError::new("search", "spans must be non-negative"))
            } else {
                Ok(())
            });
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Error> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one element");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{assignment}`: `{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.network.precision = "Q0.3".into();
        c.search = Some(SearchSection::default());
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[network]\nneurns = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("sedes = [1]\n").is_err());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let o = vec![
            "network.precision=Q0.5".to_string(),
            "network.neurons=25".to_string(),
            "seeds=[4, 5]".to_string(),
        ];
        let c = ExperimentConfig::from_toml_with_overrides("", &o).unwrap();
        assert_eq!(c.network.precision, "Q0.5");
        assert_eq!(c.network.neurons, 25);
        assert_eq!(c.seeds, vec![4, 5]);
        assert!(ExperimentConfig::from_toml_with_overrides("", &["nokey".into()]).is_err());
    }

    #[test]
    fn every_violation_is_reported() {
        let mut c = ExperimentConfig::default();
        c.seeds.clear();
        c.network.precision = "Q9".into();
        c.neuron.v_decay = 2.0;
        c.stdp.trace_decay_pre = 1.5;
        c.scenario.duration_steps = 0;
        let errs = c.validate().unwrap_err().0;
        let names: Vec<_> = errs.iter().map(|e| e.name).collect();
        for n in ["seeds", "precision", "v_decay", "trace_decay_pre", "duration_steps"] {
            assert!(names.contains(&n), "missing {n} in {names:?}");
        }
    }

    #[test]
    fn wide_formats_need_f64() {
        let mut c = ExperimentConfig::default();
        c.network.precision = "Q0.30".into();
        assert!(c.validate().is_err());
        c.scalar = ScalarKind::F64;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn precision_carries_rounding() {
        let mut n = NetworkSection {
            precision: "Q0.3".into(),
            ..NetworkSection::default()
        };
        n.rounding = RoundingMode::Nearest;
        match n.precision().unwrap() {
            WeightPrecision::Fixed { rounding, format } => {
                assert_eq!(rounding, RoundingMode::Nearest);
                assert_eq!(format.fractional_bits(), 3);
            }
            WeightPrecision::Full => panic!("expected fixed point"),
        }
    }
}
