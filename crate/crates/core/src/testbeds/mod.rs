//! Built-in stochastic simulators with analytic references, and an adapter
//! that serves responses from a stored dataset.

mod dataset;
mod rs;
mod sir;
mod toy;

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

pub use dataset::{default_radius, moving_window_stats, DatasetSimulator, WindowStats};
pub use rs::{
    rs_analytic_pf, rs_conditional_s, rs_input_model, rs_latent_params, rs_limit_state, rs_limit_state_with_latent,
    RsSimulator,
};
pub use sir::{sir_input_model, sir_limit_state, sir_simulate, SirSimulator, SIR_I_LIM, SIR_POPULATION};
pub use toy::{toy_conditional_s, toy_input_model, toy_limit_state, ToySimulator, TOY_NOISE_STD};

/// A limit-state function with internal randomness: each call at the same
/// `x` with an independent `rng` is a fresh draw of `Y_x`.
pub trait StochasticSimulator {
    fn input_dim(&self) -> usize;

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64, SimError>;

    /// Input actually used and the response. Simulators that may substitute
    /// a nearby input (such as stored datasets) override this.
    fn evaluate_realized(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<(Vec<f64>, f64), SimError> {
        let y = self.evaluate(x, rng)?;
        Ok((x.to_vec(), y))
    }
}

impl<S: StochasticSimulator + ?Sized> StochasticSimulator for &mut S {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64, SimError> {
        (**self).evaluate(x, rng)
    }

    fn evaluate_realized(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<(Vec<f64>, f64), SimError> {
        (**self).evaluate_realized(x, rng)
    }
}

/// Simulator backed by a closure.
pub struct FnSimulator<F> {
    dim: usize,
    f: F,
}

impl<F> FnSimulator<F>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<f64, SimError>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> StochasticSimulator for FnSimulator<F>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<f64, SimError>,
{
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64, SimError> {
        check_dim(self.dim, x)?;
        (self.f)(x, rng)
    }
}

/// Replays the same latent stream on every call, turning the simulator into
/// the deterministic map `x ↦ g(x, z₀)`.
pub struct FixedSeed<S> {
    pub inner: S,
    pub seed: u64,
}

impl<S: StochasticSimulator> StochasticSimulator for FixedSeed<S> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn evaluate(&mut self, x: &[f64], _rng: &mut dyn RngCore) -> Result<f64, SimError> {
        let mut fixed = ChaCha8Rng::seed_from_u64(self.seed);
        self.inner.evaluate(x, &mut fixed)
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<(), SimError> {
    if x.len() != expected {
        return Err(SimError::BadInput { expected, got: x.len() });
    }
    Ok(())
}
