//! One-dimensional toy problem `h(x, Z) = x·sin x + Z`, `Z ~ N(0, 0.5²)`,
//! `X ~ U(0, 2π)`.

use core::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Distribution, Normal};

use super::{check_dim, StochasticSimulator};
use crate::distributions::{InputModel, Marginal};
use crate::error::SimError;
use crate::special::norm_cdf;

pub const TOY_NOISE_STD: f64 = 0.5;

pub fn toy_input_model() -> InputModel {
    InputModel::new(alloc::vec![Marginal::uniform(0.0, 2.0 * PI).expect("valid bounds")]).expect("valid input model")
}

pub fn toy_limit_state<R: rand::Rng + ?Sized>(x: f64, rng: &mut R) -> f64 {
    x * x.sin() + Normal::new(0.0, TOY_NOISE_STD).expect("valid normal").sample(rng)
}

pub fn toy_conditional_s(x: f64) -> f64 {
    norm_cdf(-x * x.sin() / TOY_NOISE_STD)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ToySimulator;

impl StochasticSimulator for ToySimulator {
    fn input_dim(&self) -> usize {
        1
    }

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64, SimError> {
        check_dim(1, x)?;
        Ok(toy_limit_state(x[0], rng))
    }
}
