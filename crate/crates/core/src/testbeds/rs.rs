//! Stochastic resistance-load problem `g = R/Z₁ − S·Z₂` with lognormal
//! inputs and latent variables. All four lognormals are built from their
//! means and standard deviations.

use rand::RngCore;

use super::{check_dim, StochasticSimulator};
use crate::distributions::{InputModel, Marginal};
use crate::error::SimError;
use crate::special::norm_cdf;

const R_MOMENTS: (f64, f64) = (5.0, 0.8);
const S_MOMENTS: (f64, f64) = (2.0, 0.6);
const Z1_MOMENTS: (f64, f64) = (1.0, 0.028);
const Z2_MOMENTS: (f64, f64) = (1.0, 0.096);

fn lognormal(moments: (f64, f64)) -> Marginal {
    Marginal::lognormal_from_moments(moments.0, moments.1).expect("valid moments")
}

fn params(m: &Marginal) -> (f64, f64) {
    match *m {
        Marginal::Lognormal { lambda, zeta } => (lambda, zeta),
        _ => unreachable!("lognormal marginal"),
    }
}

pub fn rs_input_model() -> InputModel {
    InputModel::new(alloc::vec![lognormal(R_MOMENTS), lognormal(S_MOMENTS)]).expect("valid input model")
}

/// `(λ, ζ)` of `Z₁` and `Z₂`.
pub fn rs_latent_params() -> [(f64, f64); 2] {
    [params(&lognormal(Z1_MOMENTS)), params(&lognormal(Z2_MOMENTS))]
}

pub fn rs_limit_state_with_latent(r: f64, s: f64, z1: f64, z2: f64) -> f64 {
    r / z1 - s * z2
}

pub fn rs_limit_state<R: rand::Rng + ?Sized>(r: f64, s: f64, rng: &mut R) -> f64 {
    let z1 = lognormal(Z1_MOMENTS).sample(rng);
    let z2 = lognormal(Z2_MOMENTS).sample(rng);
    rs_limit_state_with_latent(r, s, z1, z2)
}

/// `P(g ≤ 0 | R = r, S = s)`: failure means `ln Z₁ + ln Z₂ ≥ ln r − ln s`.
pub fn rs_conditional_s(r: f64, s: f64) -> f64 {
    let [(l1, z1), (l2, z2)] = rs_latent_params();
    norm_cdf(-(r.ln() - s.ln() - l1 - l2) / (z1 * z1 + z2 * z2).sqrt())
}

/// Exact failure probability of the joint problem.
pub fn rs_analytic_pf() -> f64 {
    let (lr, zr) = params(&lognormal(R_MOMENTS));
    let (ls, zs) = params(&lognormal(S_MOMENTS));
    let [(l1, z1), (l2, z2)] = rs_latent_params();
    let mean = lr - ls - l1 - l2;
    let std = (zr * zr + zs * zs + z1 * z1 + z2 * z2).sqrt();
    norm_cdf(-mean / std)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RsSimulator;

impl StochasticSimulator for RsSimulator {
    fn input_dim(&self) -> usize {
        2
    }

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64, SimError> {
        check_dim(2, x)?;
        if !(x[0] > 0.0 && x[1] > 0.0) {
            return Err(SimError::Other(alloc::format!("R and S must be positive, got {x:?}")));
        }
        Ok(rs_limit_state(x[0], x[1], rng))
    }
}
