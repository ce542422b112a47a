//! Leaky integrate-and-fire neuron with an adaptive threshold.
//!
//! Each timestep the membrane potential relaxes toward `v_rest` by a
//! multiplicative factor and integrates the step's input. Crossing
//! `v_th_base + theta` emits a spike, resets the membrane to `v_reset`, raises
//! the adaptation term `theta` by `theta_inc` and starts a refractory window of
//! `t_ref` steps. `theta` decays every step, so a neuron that fires a lot gets
//! harder to excite and a silent one drifts back toward the base threshold.

use crate::error::{ensure, ParamError};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams<T> {
    pub v_rest: T,
    pub v_reset: T,
    pub v_th_base: T,
    /// Per-step factor pulling `v_mem` toward `v_rest`.
    pub v_decay: T,
    /// Threshold increment per spike.
    pub theta_inc: T,
    /// Per-step factor applied to `theta`.
    pub theta_decay: T,
    /// Refractory steps after a spike.
    pub t_ref: u32,
    /// Step length in ms.
    pub dt: T,
}

impl<T: Scalar> Default for LifParams<T> {
    fn default() -> Self {
        Self {
            v_rest: lit(-65.0),
            v_reset: lit(-60.0),
            v_th_base: lit(-52.0),
            v_decay: lit((-1.0f64 / 100.0).exp()),
            theta_inc: lit(0.5),
            theta_decay: lit(0.9999995),
            t_ref: 5,
            dt: lit(1.0),
        }
    }
}

impl<T: Scalar> LifParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        let unit = |x: T| x > T::zero() && x <= T::one();
        ensure(self.v_reset < self.v_th_base, "v_reset", || {
            format!("must be below v_th_base ({} >= {})", self.v_reset, self.v_th_base)
        })?;
        ensure(self.v_rest <= self.v_reset, "v_rest", || {
            format!("must not exceed v_reset ({} > {})", self.v_rest, self.v_reset)
        })?;
        ensure(unit(self.v_decay), "v_decay", || format!("must lie in (0, 1], got {}", self.v_decay))?;
        ensure(unit(self.theta_decay), "theta_decay", || {
            format!("must lie in (0, 1], got {}", self.theta_decay)
        })?;
        ensure(self.theta_inc >= T::zero(), "theta_inc", || {
            format!("must be non-negative, got {}", self.theta_inc)
        })?;
        ensure(self.dt > T::zero(), "dt", || format!("must be positive, got {}", self.dt))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifNeuronState<T> {
    pub v_mem: T,
    /// Adaptation term added to the base threshold; never negative.
    pub theta: T,
    pub refractory_remaining: u32,
}

impl<T: Scalar> LifNeuronState<T> {
    pub fn at_rest(params: &LifParams<T>) -> Self {
        Self {
            v_mem: params.v_rest,
            theta: T::zero(),
            refractory_remaining: 0,
        }
    }

    pub fn threshold(&self, params: &LifParams<T>) -> T {
        params.v_th_base + self.theta
    }

    /// Advances one timestep and reports whether the neuron fired.
    #[inline]
    pub fn step(&mut self, params: &LifParams<T>, input_current: T) -> bool {
        let leaked = params.v_rest + (self.v_mem - params.v_rest) * params.v_decay;
        self.theta *= params.theta_decay;
        if self.refractory_remaining > 0 {
            self.refractory_remaining -= 1;
            self.v_mem = leaked;
            return false;
        }
        self.v_mem = leaked + input_current;
        if self.v_mem >= params.v_th_base + self.theta {
            self.v_mem = params.v_reset;
            self.theta += params.theta_inc;
            self.refractory_remaining = params.t_ref;
            true
        } else {
            false
        }
    }
}

/// Value-semantics form of [`LifNeuronState::step`].
pub fn step_neuron<T: Scalar>(
    state: LifNeuronState<T>,
    params: &LifParams<T>,
    input_current: T,
) -> (LifNeuronState<T>, bool) {
    let mut next = state;
    let spiked = next.step(params, input_current);
    (next, spiked)
}
