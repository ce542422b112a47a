//! Single-layer excitatory network with lateral inhibition.
//!
//! Every input channel projects to every excitatory neuron through the
//! learned [`SynapseMatrix`]. Neurons inhibit each other with a uniform current
//! proportional to how many *other* neurons fired on the previous step, which
//! gives a soft winner-take-all without a separate inhibitory population.
//! After training, neurons are labeled with the class they respond to most and
//! a sample is classified by the label group with the highest mean response.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SpikeTrain;
use crate::error::{ensure, Error, ParamError, Result};
use crate::neuron::{LifNeuronState, LifParams};
use crate::plasticity::{StdpParams, SynapseMatrix};
use crate::quant::WeightPrecision;
use crate::scalar::{lit, Scalar};
use crate::seed::{derive_seed, Stream};

/// Everything needed to build an untrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig<T> {
    pub num_inputs: usize,
    pub num_excitatory: usize,
    pub num_classes: usize,
    pub lif: LifParams<T>,
    pub stdp: StdpParams<T>,
    pub inhibition_strength: T,
    pub w_decay: T,
    pub w_max: T,
    /// Initial weights are drawn uniformly from `[0, init_weight_max]`.
    pub init_weight_max: T,
    pub precision: WeightPrecision,
}

impl<T: Scalar> NetworkConfig<T> {
    pub fn mnist(num_excitatory: usize, precision: WeightPrecision) -> Self {
        Self {
            num_inputs: 784,
            num_excitatory,
            num_classes: 10,
            lif: LifParams::default(),
            stdp: StdpParams::default(),
            inhibition_strength: lit(80.0),
            w_decay: T::zero(),
            w_max: T::one(),
            init_weight_max: lit(0.3),
            precision,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        ensure(self.num_inputs > 0, "num_inputs", || "must be positive".into())?;
        ensure(self.num_excitatory > 0, "num_excitatory", || "must be positive".into())?;
        ensure((1..=256).contains(&self.num_classes), "num_classes", || {
            format!("must lie in 1..=256, got {}", self.num_classes)
        })?;
        self.lif.validate()?;
        self.stdp.validate()?;
        ensure(self.inhibition_strength >= T::zero(), "inhibition_strength", || {
            format!("must be non-negative, got {}", self.inhibition_strength)
        })?;
        ensure(self.init_weight_max >= T::zero(), "init_weight_max", || {
            format!("must be non-negative, got {}", self.init_weight_max)
        })?;
        crate::plasticity::check_w_decay(self.w_decay)?;
        ensure(self.w_max > T::zero(), "w_max", || format!("must be positive, got {}", self.w_max))?;
        crate::plasticity::check_precision_fits::<T>(self.precision)?;
        Ok(())
    }
}

/// Excitatory spikes per neuron during one presentation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpikeCountVector {
    pub counts: Vec<u32>,
}

impl SpikeCountVector {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn is_silent(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel<T> {
    pub lif_params: LifParams<T>,
    pub stdp_params: StdpParams<T>,
    pub synapses: SynapseMatrix<T>,
    pub neuron_states: Vec<LifNeuronState<T>>,
    pub inhibition_strength: T,
    /// Per-neuron class, `None` for neurons that never responded.
    pub neuron_labels: Option<Vec<Option<u8>>>,
    pub num_classes: usize,
}

/// Builds a model with seeded random weights, snapped to the storage grid.
pub fn build_model<T: Scalar>(cfg: &NetworkConfig<T>, seed: u64) -> Result<SnnModel<T>> {
    cfg.validate()?;
    let mut synapses = SynapseMatrix::zeros(cfg.num_inputs, cfg.num_excitatory, cfg.w_decay, cfg.w_max, cfg.precision)?;
    synapses.randomize(
        cfg.init_weight_max,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Weights, 0)),
    );
    Ok(SnnModel {
        lif_params: cfg.lif,
        stdp_params: cfg.stdp,
        synapses,
        neuron_states: vec![LifNeuronState::at_rest(&cfg.lif); cfg.num_excitatory],
        inhibition_strength: cfg.inhibition_strength,
        neuron_labels: None,
        num_classes: cfg.num_classes,
    })
}

/// Drive for every neuron at one step: feed-forward input minus the
/// inhibition from other neurons' previous-step spikes.
#[inline]
fn fill_currents<T: Scalar>(
    currents: &mut [T],
    synapses: &SynapseMatrix<T>,
    active: &[u32],
    prev_spiked: &[bool],
    prev_total: usize,
    inhibition: T,
) {
    if prev_total == 0 || inhibition == T::zero() {
        currents.iter_mut().for_each(|c| *c = T::zero());
    } else {
        let total = T::from_usize(prev_total).expect("spike count fits scalar");
        for (c, &own) in currents.iter_mut().zip(prev_spiked) {
            let others = if own { total - T::one() } else { total };
            *c = -inhibition * others;
        }
    }
    for &j in active {
        for (c, &w) in currents.iter_mut().zip(synapses.row(j as usize)) {
            *c += w;
        }
    }
}

impl<T: Scalar> SnnModel<T> {
    pub fn num_inputs(&self) -> usize {
        self.synapses.num_inputs()
    }

    pub fn num_excitatory(&self) -> usize {
        self.synapses.num_excitatory()
    }

    pub fn precision(&self) -> WeightPrecision {
        self.synapses.precision()
    }

    pub fn thetas(&self) -> Vec<T> {
        self.neuron_states.iter().map(|s| s.theta).collect()
    }

    fn check_input(&self, spikes: &SpikeTrain) -> Result<()> {
        if spikes.num_inputs() != self.num_inputs() {
            return Err(Error::InputMismatch {
                expected: self.num_inputs(),
                got: spikes.num_inputs(),
            });
        }
        Ok(())
    }

    fn reset_transients(&mut self) {
        let v_rest = self.lif_params.v_rest;
        for s in &mut self.neuron_states {
            s.v_mem = v_rest;
            s.refractory_remaining = 0;
        }
        self.synapses.clear_traces();
    }

    /// Runs one presentation. With `learn` set, STDP fires during the run and
    /// non-spiking neurons' weights decay at its end; otherwise the model is
    /// left exactly as it was.
    pub fn present_sample(&mut self, spikes: &SpikeTrain, learn: bool) -> Result<SpikeCountVector> {
        self.check_input(spikes)?;
        if !learn {
            return Ok(self.respond(spikes));
        }
        self.reset_transients();
        let n = self.num_excitatory();
        let mut counts = vec![0u32; n];
        let mut currents = vec![T::zero(); n];
        let mut prev_spiked = vec![false; n];
        let mut fired: Vec<u32> = Vec::with_capacity(n);
        for t in 0..spikes.duration_steps() {
            self.synapses.decay_traces(&self.stdp_params);
            let active = spikes.active(t);
            fill_currents(
                &mut currents,
                &self.synapses,
                active,
                &prev_spiked,
                fired.len(),
                self.inhibition_strength,
            );
            fired.clear();
            for (k, (state, &i)) in self.neuron_states.iter_mut().zip(&currents).enumerate() {
                let spiked = state.step(&self.lif_params, i);
                prev_spiked[k] = spiked;
                if spiked {
                    fired.push(k as u32);
                    counts[k] += 1;
                }
            }
            self.synapses.on_pre_spike_indices(&self.stdp_params, active);
            if !fired.is_empty() {
                self.synapses.on_post_spike_indices(&self.stdp_params, &fired);
            }
        }
        let learned: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
        self.synapses.decay_weights(&learned);
        self.reset_transients();
        Ok(SpikeCountVector { counts })
    }

    /// Inference-only presentation on a scratch copy of the neuron state.
    pub fn infer(&self, spikes: &SpikeTrain) -> Result<SpikeCountVector> {
        self.check_input(spikes)?;
        Ok(self.respond(spikes))
    }

    fn respond(&self, spikes: &SpikeTrain) -> SpikeCountVector {
        let n = self.num_excitatory();
        let v_rest = self.lif_params.v_rest;
        let mut states: Vec<LifNeuronState<T>> = self
            .neuron_states
            .iter()
            .map(|s| LifNeuronState {
                v_mem: v_rest,
                theta: s.theta,
                refractory_remaining: 0,
            })
            .collect();
        let mut counts = vec![0u32; n];
        let mut currents = vec![T::zero(); n];
        let mut prev_spiked = vec![false; n];
        let mut prev_total = 0usize;
        for t in 0..spikes.duration_steps() {
            fill_currents(
                &mut currents,
                &self.synapses,
                spikes.active(t),
                &prev_spiked,
                prev_total,
                self.inhibition_strength,
            );
            prev_total = 0;
            for (k, (state, &i)) in states.iter_mut().zip(&currents).enumerate() {
                let spiked = state.step(&self.lif_params, i);
                prev_spiked[k] = spiked;
                if spiked {
                    counts[k] += 1;
                    prev_total += 1;
                }
            }
        }
        SpikeCountVector { counts }
    }

    /// Labels every neuron from inference responses to labeled samples.
    pub fn assign_labels(&mut self, labeled_samples: &[(SpikeTrain, u8)]) -> Result<()> {
        let responses = labeled_samples
            .iter()
            .map(|(train, class)| Ok((self.infer(train)?, *class)))
            .collect::<Result<Vec<_>>>()?;
        self.assign_labels_from_responses(&responses)
    }

    /// Labels from precomputed `(response, class)` pairs; see [`labels_from_responses`].
    pub fn assign_labels_from_responses(&mut self, responses: &[(SpikeCountVector, u8)]) -> Result<()> {
        self.neuron_labels = Some(labels_from_responses(responses, self.num_excitatory(), self.num_classes)?);
        Ok(())
    }

    pub fn classify(&self, spikes: &SpikeTrain) -> Result<u8> {
        let response = self.infer(spikes)?;
        self.classify_response(&response)
    }

    pub fn classify_response(&self, response: &SpikeCountVector) -> Result<u8> {
        let labels = self.neuron_labels.as_ref().ok_or(Error::Unlabeled)?;
        Ok(classify_counts(&response.counts, labels, self.num_classes))
    }
}

/// Each neuron takes the class with the highest mean spike count over that
/// class's samples; lower class ids win ties and neurons that never fired stay
/// unassigned. Classes absent from `responses` are never chosen.
pub fn labels_from_responses(
    responses: &[(SpikeCountVector, u8)],
    num_neurons: usize,
    num_classes: usize,
) -> Result<Vec<Option<u8>>> {
    if responses.is_empty() {
        return Err(Error::NoLabelSamples);
    }
    let mut sums = vec![0.0f64; num_classes * num_neurons];
    let mut seen = vec![0usize; num_classes];
    for (resp, class) in responses {
        let c = *class as usize;
        if c >= num_classes {
            return Err(ParamError::new("class", format!("{c} is outside 0..{num_classes}")).into());
        }
        if resp.counts.len() != num_neurons {
            return Err(Error::InputMismatch {
                expected: num_neurons,
                got: resp.counts.len(),
            });
        }
        seen[c] += 1;
        for (s, &k) in sums[c * num_neurons..(c + 1) * num_neurons].iter_mut().zip(&resp.counts) {
            *s += k as f64;
        }
    }
    Ok((0..num_neurons)
        .map(|n| {
            let mut best: Option<(u8, f64)> = None;
            for c in 0..num_classes {
                if seen[c] == 0 {
                    continue;
                }
                let mean = sums[c * num_neurons + n] / seen[c] as f64;
                if mean > 0.0 && best.is_none_or(|(_, b)| mean > b) {
                    best = Some((c as u8, mean));
                }
            }
            best.map(|(c, _)| c)
        })
        .collect())
}

/// Readout: the class whose labeled neurons have the highest mean count.
/// A silent response falls back to the most common label (class 0 when no
/// neuron is labeled). Ties go to the lower class id.
pub fn classify_counts(counts: &[u32], labels: &[Option<u8>], num_classes: usize) -> u8 {
    let mut sums = vec![0u64; num_classes];
    let mut members = vec![0u64; num_classes];
    for (&k, label) in counts.iter().zip(labels) {
        if let Some(c) = *label {
            sums[c as usize] += k as u64;
            members[c as usize] += 1;
        }
    }
    if counts.iter().all(|&k| k == 0) {
        return most_common_label(&members);
    }
    let mut best: Option<(usize, f64)> = None;
    for c in 0..num_classes {
        if members[c] == 0 {
            continue;
        }
        let mean = sums[c] as f64 / members[c] as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((c, mean));
        }
    }
    best.map_or_else(|| most_common_label(&members), |(c, _)| c as u8)
}

fn most_common_label(members: &[u64]) -> u8 {
    let mut best = 0usize;
    for (c, &m) in members.iter().enumerate() {
        if m > members[best] {
            best = c;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::encode_rate;
    use crate::quant::make_format;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_cfg(inputs: usize, neurons: usize) -> NetworkConfig<f64> {
        NetworkConfig {
            num_inputs: inputs,
            num_excitatory: neurons,
            num_classes: 3,
            ..NetworkConfig::mnist(neurons, WeightPrecision::Full)
        }
    }

    #[test]
    fn synapse_counts_for_mnist_sizes() {
        let m = build_model(&NetworkConfig::<f32>::mnist(400, WeightPrecision::Full), 1).unwrap();
        assert_eq!(m.synapses.len(), 313_600);
        let m = build_model(&NetworkConfig::<f32>::mnist(200, WeightPrecision::Full), 1).unwrap();
        assert_eq!(m.synapses.len(), 156_800);
        assert!(m.neuron_labels.is_none());
        assert!(m.neuron_states.iter().all(|s| s.v_mem == -65.0 && s.theta == 0.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let cfg = NetworkConfig::<f32>::mnist(20, WeightPrecision::truncating(make_format(0, 3).unwrap()));
        let a = build_model(&cfg, 42).unwrap();
        let b = build_model(&cfg, 42).unwrap();
        let c = build_model(&cfg, 43).unwrap();
        assert_eq!(a.synapses.weights(), b.synapses.weights());
        assert_ne!(a.synapses.weights(), c.synapses.weights());
        assert!(a.synapses.weights().iter().all(|&w| (w * 8.0).fract() == 0.0 && w <= 0.3));
    }

    #[test]
    fn invalid_sizes_rejected() {
        let mut cfg = small_cfg(4, 2);
        cfg.num_excitatory = 0;
        assert!(build_model(&cfg, 0).is_err());
    }

    #[test]
    fn silent_input_is_silent() {
        let mut cfg = small_cfg(16, 4);
        cfg.w_decay = 1e-4;
        let mut m = build_model(&cfg, 5).unwrap();
        let before = m.synapses.clone();
        let counts = m.present_sample(&SpikeTrain::silent(16, 100, 1.0), true).unwrap();
        assert_eq!(counts.total(), 0);
        // no spikes means every neuron decays
        for (a, b) in before.weights().iter().zip(m.synapses.weights()) {
            assert!((b - a * (1.0 - 1e-4)).abs() < 1e-15);
        }
    }

    #[test]
    fn inference_leaves_model_untouched() {
        let mut m = build_model(&small_cfg(16, 4), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = encode_rate(&[255u8; 16], 100, 500.0, 1.0, &mut rng).unwrap();
        m.present_sample(&train, true).unwrap();
        let snapshot = m.clone();
        let counts = m.present_sample(&train, false).unwrap();
        assert!(counts.total() > 0);
        assert_eq!(m, snapshot);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut m = build_model(&small_cfg(16, 4), 5).unwrap();
        let err = m.present_sample(&SpikeTrain::silent(15, 10, 1.0), true).unwrap_err();
        assert!(matches!(err, Error::InputMismatch { expected: 16, got: 15 }));
    }

    #[test]
    fn lateral_inhibition_picks_a_single_winner() {
        // Two neurons share one always-on input. Neuron 0 has the larger weight
        // and crosses threshold a couple of steps before neuron 1; each of its
        // spikes then knocks neuron 1 down by 20, more than neuron 1 can
        // recover before neuron 0 fires again.
        let mut cfg = small_cfg(1, 2);
        cfg.inhibition_strength = 20.0;
        cfg.lif.theta_inc = 0.0;
        cfg.w_decay = 0.0;
        cfg.stdp = StdpParams::frozen();
        let mut m = build_model(&cfg, 0).unwrap();
        m.synapses.set_weights(&[1.0, 0.9]).unwrap();
        let drive = SpikeTrain::from_dense(&vec![vec![true]; 100], 1, 1.0);
        for _ in 0..5 {
            let counts = m.present_sample(&drive, true).unwrap();
            assert!(counts.counts[0] > 0);
            assert_eq!(counts.counts[1], 0, "{counts:?}");
        }
    }

    #[test]
    fn labeling_examples() {
        let resp = |c: &[u32]| SpikeCountVector { counts: c.to_vec() };
        // neuron 0 fires only for class 2, neuron 1 silent, neuron 2 ties classes 0 and 1
        let samples = vec![
            (resp(&[0, 0, 3]), 0),
            (resp(&[0, 0, 3]), 1),
            (resp(&[4, 0, 0]), 2),
            (resp(&[2, 0, 0]), 2),
        ];
        let labels = labels_from_responses(&samples, 3, 3).unwrap();
        assert_eq!(labels, vec![Some(2), None, Some(0)]);
        assert!(matches!(labels_from_responses(&[], 3, 3), Err(Error::NoLabelSamples)));
    }

    #[test]
    fn readout_examples() {
        let labels = vec![Some(0), Some(0), Some(1), Some(2), Some(2), None];
        assert_eq!(classify_counts(&[3, 1, 0, 0, 0, 9], &labels, 3), 0);
        // silent: most common label, ties to the lower class
        assert_eq!(classify_counts(&[0; 6], &labels, 3), 0);
        let labels2 = vec![Some(1), Some(2), Some(2)];
        assert_eq!(classify_counts(&[0; 3], &labels2, 3), 2);
        // class means: 0 -> (4+0)/2 = 2, 1 -> 3, 2 -> (1+4)/2 = 2.5
        assert_eq!(classify_counts(&[4, 0, 3, 1, 4, 0], &labels, 3), 1);
    }

    fn spike_count_cv(theta_inc: f64, seed: u64) -> f64 {
        let mut cfg = small_cfg(30, 10);
        cfg.lif.theta_inc = theta_inc;
        cfg.lif.theta_decay = 1.0;
        cfg.inhibition_strength = 20.0;
        cfg.stdp.eta_post = 0.0;
        cfg.w_decay = 0.0;
        let mut m = build_model(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut totals = [0f64; 10];
        for _ in 0..300 {
            let image: Vec<u8> = (0..30).map(|_| if rng.gen_bool(0.4) { 255 } else { 0 }).collect();
            let train = encode_rate(&image, 50, 200.0, 1.0, &mut rng).unwrap();
            for (t, c) in totals.iter_mut().zip(m.present_sample(&train, true).unwrap().counts) {
                *t += c as f64;
            }
        }
        let mean = totals.iter().sum::<f64>() / 10.0;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 10.0;
        var.sqrt() / mean
    }

    #[test]
    fn trained_weights_are_reproducible() {
        let train = |seed: u64| {
            let cfg = NetworkConfig {
                precision: WeightPrecision::truncating(make_format(0, 5).unwrap()),
                ..small_cfg(20, 6)
            };
            let mut m = build_model(&cfg, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..40u8 {
                let image: Vec<u8> = (0..20).map(|j| if (j + k as usize).is_multiple_of(3) { 255 } else { 30 }).collect();
                m.present_sample(&encode_rate(&image, 40, 300.0, 1.0, &mut rng).unwrap(), true).unwrap();
            }
            m
        };
        assert_eq!(train(9), train(9));
        assert_ne!(train(9).synapses.weights(), train(10).synapses.weights());
    }

    #[test]
    fn adaptive_threshold_evens_out_activity() {
        for seed in 0..3 {
            let adaptive = spike_count_cv(0.5, seed);
            let fixed = spike_count_cv(0.0, seed);
            assert!(adaptive < fixed, "seed {seed}: cv {adaptive} vs control {fixed}");
        }
    }

    #[test]
    fn unlabeled_model_cannot_classify() {
        let m = build_model(&small_cfg(4, 2), 0).unwrap();
        assert!(matches!(m.classify(&SpikeTrain::silent(4, 5, 1.0)), Err(Error::Unlabeled)));
    }

    proptest! {
        #[test]
        fn readout_matches_brute_force(
            counts in proptest::collection::vec(0u32..6, 6),
            labels in proptest::collection::vec(proptest::option::of(0u8..3), 6),
        ) {
            let got = classify_counts(&counts, &labels, 3);
            // brute force: evaluate every class with members, compare means by cross-multiplication
            let stats: Vec<(u64, u64)> = (0..3u8).map(|c| {
                labels.iter().zip(&counts).filter(|(l, _)| **l == Some(c))
                    .fold((0, 0), |(s, m), (_, &k)| (s + k as u64, m + 1))
            }).collect();
            let silent = counts.iter().all(|&k| k == 0);
            let expected = if silent || stats.iter().all(|s| s.1 == 0) {
                (0..3u8).max_by_key(|&c| (stats[c as usize].1, std::cmp::Reverse(c))).unwrap()
            } else {
                (0..3u8).filter(|&c| stats[c as usize].1 > 0)
                    .max_by(|&a, &b| {
                        let (sa, ma) = stats[a as usize];
                        let (sb, mb) = stats[b as usize];
                        (sa * mb).cmp(&(sb * ma)).then(b.cmp(&a))
                    }).unwrap()
            };
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn reported_counts_are_conserved(seed in any::<u64>(), level in 50u8..255) {
            let mut m = build_model(&small_cfg(12, 5), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train = encode_rate(&[level; 12], 60, 400.0, 1.0, &mut rng).unwrap();
            let counts = m.present_sample(&train, true).unwrap();
            prop_assert_eq!(counts.total(), counts.counts.iter().map(|&c| c as u64).sum::<u64>());
            let thetas = m.thetas();
            for (c, th) in counts.counts.iter().zip(thetas) {
                if *c == 0 { prop_assert_eq!(th, 0.0); }
            }
        }
    }
}
