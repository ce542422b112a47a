//! JSON model checkpoints.
//!
//! Fixed-point weights are stored as their scaled integers (`weights_raw`,
//! value = raw · 2^-f); full-precision weights as reals (`weights`). Both are
//! row-major `[input][neuron]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::write_atomic;
use crate::config::{NeuronSection, StdpSection};
use crate::error::{Error, Result};
use crate::network::SnnModel;
use crate::neuron::LifNeuronState;
use crate::plasticity::SynapseMatrix;
use crate::quant::{RoundingMode, WeightPrecision};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub precision: String,
    pub rounding: RoundingMode,
    pub num_inputs: usize,
    pub num_excitatory: usize,
    pub num_classes: usize,
    pub neuron: NeuronSection,
    pub stdp: StdpSection,
    pub inhibition_strength: f64,
    pub w_decay: f64,
    pub w_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_raw: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub theta: Vec<f64>,
    pub labels: Option<Vec<Option<u8>>>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &SnnModel<T>) -> Self {
        let precision = model.precision();
        let syn = &model.synapses;
        let (weights_raw, weights) = match precision {
            WeightPrecision::Full => (None, Some(syn.weights().iter().map(|w| w.as_f64()).collect())),
            WeightPrecision::Fixed { .. } => (
                Some(
                    syn.weights()
                        .iter()
                        .map(|&w| precision.raw_of(w).expect("fixed precision"))
                        .collect(),
                ),
                None,
            ),
        };
        let rounding = match precision {
            WeightPrecision::Fixed { rounding, .. } => rounding,
            WeightPrecision::Full => RoundingMode::Truncate,
        };
        Self {
            format_version: FORMAT_VERSION,
            precision: precision.to_string(),
            rounding,
            num_inputs: syn.num_inputs(),
            num_excitatory: syn.num_excitatory(),
            num_classes: model.num_classes,
            neuron: NeuronSection::from_params(&model.lif_params),
            stdp: StdpSection::from_params(&model.stdp_params),
            inhibition_strength: model.inhibition_strength.as_f64(),
            w_decay: syn.w_decay().as_f64(),
            w_max: syn.w_max().as_f64(),
            weights_raw,
            weights,
            theta: model.thetas().iter().map(|t| t.as_f64()).collect(),
            labels: model.neuron_labels.clone(),
        }
    }

    pub fn into_model<T: Scalar>(self) -> Result<SnnModel<T>> {
        let bad = |m: String| Error::Checkpoint(m);
        if self.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format_version {}", self.format_version)));
        }
        let precision = match self.precision.parse::<WeightPrecision>()? {
            WeightPrecision::Fixed { format, .. } => WeightPrecision::Fixed {
                format,
                rounding: self.rounding,
            },
            WeightPrecision::Full => WeightPrecision::Full,
        };
        crate::plasticity::check_precision_fits::<T>(precision)?;
        let n = self.num_excitatory;
        let count = self.num_inputs * n;
        let values: Vec<T> = match (precision.format(), self.weights_raw, self.weights) {
            (Some(f), Some(raw), None) => raw.iter().map(|&r| T::from_f64_lossy(r as f64 * f.epsilon())).collect(),
            (None, None, Some(w)) => w.iter().map(|&w| T::from_f64_lossy(w)).collect(),
            _ => return Err(bad("weights must be `weights_raw` for fixed point or `weights` for fp32".into())),
        };
        if values.len() != count {
            return Err(bad(format!("expected {count} weights, found {}", values.len())));
        }
        if self.theta.len() != n {
            return Err(bad(format!("expected {n} theta values, found {}", self.theta.len())));
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(bad(format!("expected {n} labels, found {}", l.len())));
            }
        }
        let lif = self.neuron.to_params::<T>();
        lif.validate()?;
        let stdp = self.stdp.to_params::<T>();
        stdp.validate()?;
        let mut synapses = SynapseMatrix::zeros(
            self.num_inputs,
            n,
            T::from_f64_lossy(self.w_decay),
            T::from_f64_lossy(self.w_max),
            precision,
        )?;
        synapses.set_weights(&values)?;
        let neuron_states = self
            .theta
            .iter()
            .map(|&t| LifNeuronState {
                theta: T::from_f64_lossy(t),
                ..LifNeuronState::at_rest(&lif)
            })
            .collect();
        Ok(SnnModel {
            lif_params: lif,
            stdp_params: stdp,
            synapses,
            neuron_states,
            inhibition_strength: T::from_f64_lossy(self.inhibition_strength),
            neuron_labels: self.labels,
            num_classes: self.num_classes,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(model: &SnnModel<T>, path: &Path) -> Result<()> {
    let json = serde_json::to_vec(&Checkpoint::from_model(model)).expect("checkpoint serializes");
    write_atomic(path, &json)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<SnnModel<T>> {
    let text = std::fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let ckpt: Checkpoint = serde_json::from_slice(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    ckpt.into_model()
}
