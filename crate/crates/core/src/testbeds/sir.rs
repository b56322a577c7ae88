//! Stochastic SIR epidemic simulated with Gillespie's algorithm. The output
//! of interest is the number of new infections over the whole outbreak.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};

use super::{check_dim, StochasticSimulator};
use crate::distributions::{InputModel, Marginal};
use crate::error::SimError;

pub const SIR_POPULATION: u32 = 2000;

/// Infection threshold. A pilot of 10⁶ runs gives `P(SIR ≥ 999) ≈ 7.4e-4`
/// under [`sir_input_model`]; the half-integer keeps the emulator's
/// continuous threshold between two attainable counts.
pub const SIR_I_LIM: f64 = 998.5;

pub fn sir_input_model() -> InputModel {
    let u = |a, b| Marginal::uniform(a, b).expect("valid bounds");
    InputModel::new(alloc::vec![u(1200.0, 1800.0), u(20.0, 200.0), u(0.5, 0.75), u(0.5, 0.75)])
        .expect("valid input model")
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Runs one outbreak with competing exponential clocks for infection
/// (`β·S·I/P`) and recovery (`γ·I`). Returns the new infections and the
/// outbreak duration.
fn outbreak<R: Rng + ?Sized>(s0: u32, i0: u32, beta: f64, gamma: f64, population: u32, rng: &mut R) -> (u32, f64) {
    let p = population as f64;
    let (mut s, mut i) = (s0, i0);
    let mut t = 0.0;
    while i > 0 {
        let rate_inf = beta * s as f64 * i as f64 / p;
        let rate_rec = gamma * i as f64;
        let t_inf = if rate_inf > 0.0 { exp1(rng) / rate_inf } else { f64::INFINITY };
        let t_rec = exp1(rng) / rate_rec;
        if t_inf < t_rec {
            t += t_inf;
            s -= 1;
            i += 1;
        } else {
            t += t_rec;
            i -= 1;
        }
    }
    (s0 - s, t)
}

/// New infections of one outbreak, in `[0, s0]`.
pub fn sir_simulate<R: Rng + ?Sized>(s0: u32, i0: u32, beta: f64, gamma: f64, population: u32, rng: &mut R) -> u32 {
    debug_assert!(s0 as u64 + i0 as u64 <= population as u64);
    outbreak(s0, i0, beta, gamma, population, rng).0
}

/// `I_lim − SIR(x)` with `x = (S₀, I₀, β, γ)`; the initial states are
/// rounded to the nearest integer.
pub fn sir_limit_state<R: Rng + ?Sized>(x: &[f64], i_lim: f64, rng: &mut R) -> f64 {
    let s0 = (x[0].round().max(0.0) as u32).min(SIR_POPULATION);
    let i0 = (x[1].round().max(0.0) as u32).min(SIR_POPULATION - s0);
    i_lim - sir_simulate(s0, i0, x[2], x[3], SIR_POPULATION, rng) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct SirSimulator {
    pub i_lim: f64,
}

impl Default for SirSimulator {
    fn default() -> Self {
        Self { i_lim: SIR_I_LIM }
    }
}

impl StochasticSimulator for SirSimulator {
    fn input_dim(&self) -> usize {
        4
    }

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64, SimError> {
        check_dim(4, x)?;
        if !(x[2] > 0.0 && x[3] > 0.0) || x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Other(alloc::format!("invalid SIR input {x:?}")));
        }
        Ok(sir_limit_state(x, self.i_lim, rng))
    }
}
