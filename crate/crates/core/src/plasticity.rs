//! Trace-based pair STDP on the input→excitatory weight matrix.
//!
//! Potentiation fires on postsynaptic spikes and adds `eta_post * pre_trace`
//! to each incoming weight. Depression has two sources: an optional
//! pre-spike term (`eta_pre * post_trace`, zero by default) and a
//! per-presentation multiplicative decay applied to every neuron that did not
//! fire. Every update is computed at full precision and the result is snapped
//! back onto the storage grid, so with a coarse format an increment smaller
//! than one grid step can vanish entirely.

use rand::Rng;

use crate::error::{ensure, ParamError};
use crate::quant::WeightPrecision;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpParams<T> {
    /// Potentiation rate applied on postsynaptic spikes.
    pub eta_post: T,
    /// Depression rate applied on presynaptic spikes.
    pub eta_pre: T,
    pub trace_decay_pre: T,
    pub trace_decay_post: T,
    pub trace_inc: T,
}

impl<T: Scalar> Default for StdpParams<T> {
    fn default() -> Self {
        Self {
            eta_post: lit(0.01),
            eta_pre: T::zero(),
            trace_decay_pre: lit((-1.0f64 / 20.0).exp()),
            trace_decay_post: lit((-1.0f64 / 20.0).exp()),
            trace_inc: T::one(),
        }
    }
}

impl<T: Scalar> StdpParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        let open_unit = |x: T| x > T::zero() && x < T::one();
        ensure(self.eta_post >= T::zero(), "eta_post", || {
            format!("must be non-negative, got {}", self.eta_post)
        })?;
        ensure(self.eta_pre >= T::zero(), "eta_pre", || {
            format!("must be non-negative, got {}", self.eta_pre)
        })?;
        ensure(open_unit(self.trace_decay_pre), "trace_decay_pre", || {
            format!("must lie in (0, 1), got {}", self.trace_decay_pre)
        })?;
        ensure(open_unit(self.trace_decay_post), "trace_decay_post", || {
            format!("must lie in (0, 1), got {}", self.trace_decay_post)
        })?;
        ensure(self.trace_inc >= T::zero(), "trace_inc", || {
            format!("must be non-negative, got {}", self.trace_inc)
        })?;
        Ok(())
    }

    /// Parameters that leave weights untouched.
    pub fn frozen() -> Self {
        Self {
            eta_post: T::zero(),
            eta_pre: T::zero(),
            ..Self::default()
        }
    }
}

/// Input→excitatory weights with their STDP traces.
///
/// Weights are stored row-major by input: the weights leaving input `j` are
/// contiguous, which is the access pattern of spike propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseMatrix<T> {
    num_inputs: usize,
    num_excitatory: usize,
    weights: Vec<T>,
    pre_traces: Vec<T>,
    post_traces: Vec<T>,
    w_decay: T,
    w_max: T,
    precision: WeightPrecision,
    ceiling: T,
}

pub(crate) fn check_w_decay<T: Scalar>(w_decay: T) -> Result<(), ParamError> {
    ensure(w_decay >= T::zero() && w_decay < T::one(), "w_decay", || {
        format!("must lie in [0, 1), got {w_decay}")
    })
}

pub(crate) fn check_precision_fits<T: Scalar>(precision: WeightPrecision) -> Result<(), ParamError> {
    if let Some(f) = precision.format() {
        ensure(f.magnitude_bits() <= T::MANTISSA_DIGITS, "weight_format", || {
            format!(
                "{f} needs {} significant bits; the scalar type holds {}",
                f.magnitude_bits(),
                T::MANTISSA_DIGITS
            )
        })?;
    }
    Ok(())
}

impl<T: Scalar> SynapseMatrix<T> {
    /// All-zero weights and traces.
    pub fn zeros(
        num_inputs: usize,
        num_excitatory: usize,
        w_decay: T,
        w_max: T,
        precision: WeightPrecision,
    ) -> Result<Self, ParamError> {
        ensure(num_inputs > 0, "num_inputs", || "must be positive".into())?;
        ensure(num_excitatory > 0, "num_excitatory", || "must be positive".into())?;
        check_w_decay(w_decay)?;
        ensure(w_max > T::zero(), "w_max", || format!("must be positive, got {w_max}"))?;
        check_precision_fits::<T>(precision)?;
        Ok(Self {
            num_inputs,
            num_excitatory,
            weights: vec![T::zero(); num_inputs * num_excitatory],
            pre_traces: vec![T::zero(); num_inputs],
            post_traces: vec![T::zero(); num_excitatory],
            w_decay,
            w_max,
            precision,
            ceiling: precision.ceiling(w_max),
        })
    }

    /// Uniform random weights in `[0, init_max]`, snapped to the grid.
    pub fn randomize<R: Rng + ?Sized>(&mut self, init_max: T, rng: &mut R) {
        let hi = init_max.as_f64();
        for w in &mut self.weights {
            let x = T::from_f64_lossy(rng.gen::<f64>() * hi);
            *w = self.precision.snap(x).min(self.ceiling);
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_excitatory(&self) -> usize {
        self.num_excitatory
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weight(&self, input: usize, neuron: usize) -> T {
        self.weights[input * self.num_excitatory + neuron]
    }

    /// Weights leaving one input, indexed by neuron.
    #[inline]
    pub fn row(&self, input: usize) -> &[T] {
        let n = self.num_excitatory;
        &self.weights[input * n..(input + 1) * n]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    /// Overwrites all weights, snapping and clamping each one.
    pub fn set_weights(&mut self, weights: &[T]) -> Result<(), ParamError> {
        ensure(weights.len() == self.weights.len(), "weights", || {
            format!("expected {} values, got {}", self.weights.len(), weights.len())
        })?;
        for (dst, &src) in self.weights.iter_mut().zip(weights) {
            *dst = self.precision.snap(src.max(T::zero()).min(self.ceiling));
        }
        Ok(())
    }

    pub fn pre_traces(&self) -> &[T] {
        &self.pre_traces
    }

    pub fn post_traces(&self) -> &[T] {
        &self.post_traces
    }

    pub fn pre_traces_mut(&mut self) -> &mut [T] {
        &mut self.pre_traces
    }

    pub fn post_traces_mut(&mut self) -> &mut [T] {
        &mut self.post_traces
    }

    pub fn w_decay(&self) -> T {
        self.w_decay
    }

    pub fn set_w_decay(&mut self, w_decay: T) -> Result<(), ParamError> {
        check_w_decay(w_decay)?;
        self.w_decay = w_decay;
        Ok(())
    }

    pub fn w_max(&self) -> T {
        self.w_max
    }

    /// Largest value a weight can hold: `w_max` or the format's top, whichever is lower.
    pub fn ceiling(&self) -> T {
        self.ceiling
    }

    pub fn precision(&self) -> WeightPrecision {
        self.precision
    }

    pub(crate) fn set_precision_unchecked(&mut self, precision: WeightPrecision) {
        self.precision = precision;
        self.ceiling = precision.ceiling(self.w_max);
    }

    #[inline]
    fn store(&self, candidate: T) -> T {
        self.precision.snap(candidate.max(T::zero()).min(self.ceiling))
    }

    /// Presynaptic spikes given as a boolean mask over inputs.
    pub fn on_pre_spikes(&mut self, p: &StdpParams<T>, pre_spiked: &[bool]) {
        assert_eq!(pre_spiked.len(), self.num_inputs, "pre-spike mask length");
        let idx: Vec<u32> = (0..self.num_inputs as u32).filter(|&j| pre_spiked[j as usize]).collect();
        self.on_pre_spike_indices(p, &idx);
    }

    /// Presynaptic spikes given as input indices.
    pub fn on_pre_spike_indices(&mut self, p: &StdpParams<T>, inputs: &[u32]) {
        let n = self.num_excitatory;
        for &j in inputs {
            let j = j as usize;
            self.pre_traces[j] += p.trace_inc;
            if p.eta_pre > T::zero() {
                for k in 0..n {
                    let t = self.post_traces[k];
                    if t > T::zero() {
                        let idx = j * n + k;
                        self.weights[idx] = self.store(self.weights[idx] - p.eta_pre * t);
                    }
                }
            }
        }
    }

    /// Postsynaptic spikes given as a boolean mask over neurons.
    pub fn on_post_spikes(&mut self, p: &StdpParams<T>, post_spiked: &[bool]) {
        assert_eq!(post_spiked.len(), self.num_excitatory, "post-spike mask length");
        let idx: Vec<u32> = (0..self.num_excitatory as u32)
            .filter(|&k| post_spiked[k as usize])
            .collect();
        self.on_post_spike_indices(p, &idx);
    }

    /// Postsynaptic spikes given as neuron indices.
    pub fn on_post_spike_indices(&mut self, p: &StdpParams<T>, neurons: &[u32]) {
        let n = self.num_excitatory;
        for &k in neurons {
            let k = k as usize;
            if p.eta_post > T::zero() {
                for j in 0..self.num_inputs {
                    let t = self.pre_traces[j];
                    if t > T::zero() {
                        let idx = j * n + k;
                        self.weights[idx] = self.store(self.weights[idx] + p.eta_post * t);
                    }
                }
            }
            self.post_traces[k] += p.trace_inc;
        }
    }

    /// End-of-presentation depression: every neuron whose mask entry is false
    /// has its incoming weights scaled by `1 - w_decay` and re-quantized.
    pub fn decay_weights(&mut self, learning_mask: &[bool]) {
        assert_eq!(learning_mask.len(), self.num_excitatory, "learning mask length");
        if self.w_decay == T::zero() || learning_mask.iter().all(|&m| m) {
            return;
        }
        let keep = T::one() - self.w_decay;
        let n = self.num_excitatory;
        let precision = self.precision;
        for row in self.weights.chunks_exact_mut(n) {
            for (w, &learned) in row.iter_mut().zip(learning_mask) {
                if !learned && *w > T::zero() {
                    *w = precision.snap(*w * keep);
                }
            }
        }
    }

    /// One timestep of trace decay.
    pub fn decay_traces(&mut self, p: &StdpParams<T>) {
        for t in &mut self.pre_traces {
            *t *= p.trace_decay_pre;
        }
        for t in &mut self.post_traces {
            *t *= p.trace_decay_post;
        }
    }

    pub fn clear_traces(&mut self) {
        self.pre_traces.iter_mut().for_each(|t| *t = T::zero());
        self.post_traces.iter_mut().for_each(|t| *t = T::zero());
    }
}
