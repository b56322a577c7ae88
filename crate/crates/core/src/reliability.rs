//! Reference failure-probability estimators.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::InputModel;
use crate::error::{Error, Result};
use crate::special::norm_inv_cdf;
use crate::testbeds::StochasticSimulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// mean of the failure indicator over simulator runs
    Indicator,
    /// mean of the conditional failure probability over input samples
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfEstimate {
    pub pf: f64,
    /// coefficient of variation of the estimator; `None` when `pf = 0`
    pub cov: Option<f64>,
    pub n_samples: usize,
    pub estimator: Estimator,
}

impl PfEstimate {
    pub fn zero_failures(&self) -> bool {
        self.pf == 0.0
    }

    /// Reliability index `β = −Φ⁻¹(P_f)`.
    pub fn beta(&self) -> f64 {
        reliability_index(self.pf)
    }

    /// Standard error `cov · pf` (zero when undefined).
    pub fn std_error(&self) -> f64 {
        self.cov.map_or(0.0, |c| c * self.pf)
    }

    /// Conditional estimate from precomputed `s` values.
    pub fn from_s_values(s: &[f64]) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conditional failure probabilities"));
        }
        let n = s.len() as f64;
        let pf = s.iter().sum::<f64>() / n;
        let var = if s.len() > 1 { s.iter().map(|v| (v - pf) * (v - pf)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let cov = if pf > 0.0 { Some(var.sqrt() / (pf * n.sqrt())) } else { None };
        Ok(Self { pf, cov, n_samples: s.len(), estimator: Estimator::Conditional })
    }

    /// Indicator estimate from a failure count.
    pub fn from_failures(failures: usize, n: usize) -> Result<Self> {
        if n == 0 || failures > n {
            return Err(Error::InvalidParameter("need 0 <= failures <= n and n >= 1".into()));
        }
        let pf = failures as f64 / n as f64;
        let cov = if pf > 0.0 { Some(((1.0 - pf) / (pf * n as f64)).sqrt()) } else { None };
        Ok(Self { pf, cov, n_samples: n, estimator: Estimator::Indicator })
    }
}

/// `−Φ⁻¹(p)`; infinite at `p = 0`.
pub fn reliability_index(pf: f64) -> f64 {
    if pf <= 0.0 {
        f64::INFINITY
    } else if pf >= 1.0 {
        f64::NEG_INFINITY
    } else {
        -norm_inv_cdf(pf)
    }
}

/// Crude Monte Carlo: `n` input draws, one simulator run each.
pub fn mcs_indicator<S, R>(simulator: &mut S, input_model: &InputModel, n: usize, rng: &mut R) -> Result<PfEstimate>
where
    S: StochasticSimulator + ?Sized,
    R: Rng,
{
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if simulator.input_dim() != input_model.dim() {
        return Err(Error::DimensionMismatch { expected: simulator.input_dim(), got: input_model.dim() });
    }
    let mut x = alloc::vec![0.0; input_model.dim()];
    let mut failures = 0usize;
    for _ in 0..n {
        for (xj, m) in x.iter_mut().zip(input_model.marginals()) {
            *xj = m.sample(rng);
        }
        if simulator.evaluate(&x, rng)? <= 0.0 {
            failures += 1;
        }
    }
    PfEstimate::from_failures(failures, n)
}

/// Conditional estimator `mean_i s(x_i)` over the rows of `sample`.
pub fn pf_from_s<F>(mut s: F, sample: &DMatrix<f64>) -> Result<PfEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut x = alloc::vec![0.0; sample.ncols()];
    let mut values = Vec::with_capacity(sample.nrows());
    for i in 0..sample.nrows() {
        for j in 0..sample.ncols() {
            x[j] = sample[(i, j)];
        }
        values.push(s(&x)?);
    }
    PfEstimate::from_s_values(&values)
}
