//! Marginal distributions, independent joint input models and the
//! isoprobabilistic maps into the reference space of each polynomial family.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::basis::PolyFamily;
use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_inv_cdf, norm_ln_pdf, LN_SQRT_2PI};

/// One-dimensional input distribution. Parameters are validated at
/// construction; use the checked constructors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginalRepr", into = "MarginalRepr")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    Gaussian { mean: f64, std: f64 },
    /// `ln X ~ N(lambda, zeta²)`
    Lognormal { lambda: f64, zeta: f64 },
    Exponential { rate: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginalRepr {
    family: String,
    params: Vec<f64>,
}

impl TryFrom<MarginalRepr> for Marginal {
    type Error = Error;

    fn try_from(r: MarginalRepr) -> Result<Self> {
        let want = match r.family.as_str() {
            "uniform" | "gaussian" | "lognormal" => 2,
            "exponential" => 1,
            other => return Err(Error::InvalidParameter(format!("unknown marginal family `{other}`"))),
        };
        if r.params.len() != want {
            return Err(Error::InvalidParameter(format!(
                "{} expects {want} parameters, got {}",
                r.family,
                r.params.len()
            )));
        }
        let p = &r.params;
        match r.family.as_str() {
            "uniform" => Marginal::uniform(p[0], p[1]),
            "gaussian" => Marginal::gaussian(p[0], p[1]),
            "lognormal" => Marginal::lognormal(p[0], p[1]),
            _ => Marginal::exponential(p[0]),
        }
    }
}

impl From<Marginal> for MarginalRepr {
    fn from(m: Marginal) -> Self {
        let params = match m {
            Marginal::Uniform { lower, upper } => alloc::vec![lower, upper],
            Marginal::Gaussian { mean, std } => alloc::vec![mean, std],
            Marginal::Lognormal { lambda, zeta } => alloc::vec![lambda, zeta],
            Marginal::Exponential { rate } => alloc::vec![rate],
        };
        MarginalRepr { family: m.family_name().to_string(), params }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(what.to_string()))
    }
}

impl Marginal {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        check(lower.is_finite() && upper.is_finite() && upper > lower, "uniform requires finite lower < upper")?;
        Ok(Marginal::Uniform { lower, upper })
    }

    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        check(mean.is_finite() && std.is_finite() && std > 0.0, "gaussian requires std > 0")?;
        Ok(Marginal::Gaussian { mean, std })
    }

    pub fn lognormal(lambda: f64, zeta: f64) -> Result<Self> {
        check(lambda.is_finite() && zeta.is_finite() && zeta > 0.0, "lognormal requires zeta > 0")?;
        Ok(Marginal::Lognormal { lambda, zeta })
    }

    /// Lognormal with the given mean and standard deviation of `X` itself.
    pub fn lognormal_from_moments(mean: f64, std: f64) -> Result<Self> {
        check(mean > 0.0 && std > 0.0, "lognormal moments require mean > 0 and std > 0")?;
        let zeta2 = (1.0 + (std / mean).powi(2)).ln();
        Marginal::lognormal(mean.ln() - 0.5 * zeta2, zeta2.sqrt())
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        check(rate.is_finite() && rate > 0.0, "exponential requires rate > 0")?;
        Ok(Marginal::Exponential { rate })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Marginal::Uniform { .. } => "uniform",
            Marginal::Gaussian { .. } => "gaussian",
            Marginal::Lognormal { .. } => "lognormal",
            Marginal::Exponential { .. } => "exponential",
        }
    }

    /// Polynomial family orthonormal w.r.t. the reference measure of
    /// [`to_standard`](Self::to_standard).
    pub fn poly_family(&self) -> PolyFamily {
        match self {
            Marginal::Uniform { .. } => PolyFamily::Legendre,
            _ => PolyFamily::Hermite,
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            Marginal::Uniform { lower, upper } => x >= lower && x <= upper,
            Marginal::Gaussian { .. } => x.is_finite(),
            Marginal::Lognormal { .. } => x > 0.0 && x.is_finite(),
            Marginal::Exponential { .. } => x >= 0.0 && x.is_finite(),
        }
    }

    /// Density; zero outside the support.
    pub fn pdf(&self, x: f64) -> f64 {
        let lp = self.ln_pdf(x);
        if lp == f64::NEG_INFINITY {
            0.0
        } else {
            lp.exp()
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Marginal::Uniform { lower, upper } => -(upper - lower).ln(),
            Marginal::Gaussian { mean, std } => norm_ln_pdf((x - mean) / std) - std.ln(),
            Marginal::Lognormal { lambda, zeta } => {
                let lx = x.ln();
                -0.5 * ((lx - lambda) / zeta).powi(2) - LN_SQRT_2PI - zeta.ln() - lx
            }
            Marginal::Exponential { rate } => rate.ln() - rate * x,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Marginal::Gaussian { mean, std } => norm_cdf((x - mean) / std),
            Marginal::Lognormal { lambda, zeta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_cdf((x.ln() - lambda) / zeta)
                }
            }
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn inv_cdf(&self, p: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => lower + p * (upper - lower),
            Marginal::Gaussian { mean, std } => mean + std * norm_inv_cdf(p),
            Marginal::Lognormal { lambda, zeta } => (lambda + zeta * norm_inv_cdf(p)).exp(),
            Marginal::Exponential { rate } => -(-p).ln_1p() / rate,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper),
            Marginal::Gaussian { mean, .. } => mean,
            Marginal::Lognormal { lambda, zeta } => (lambda + 0.5 * zeta * zeta).exp(),
            Marginal::Exponential { rate } => 1.0 / rate,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // parameters were validated on construction, so the unwraps cannot fire
        match *self {
            Marginal::Uniform { lower, upper } => Uniform::new_inclusive(lower, upper).unwrap().sample(rng),
            Marginal::Gaussian { mean, std } => Normal::new(mean, std).unwrap().sample(rng),
            Marginal::Lognormal { lambda, zeta } => LogNormal::new(lambda, zeta).unwrap().sample(rng),
            Marginal::Exponential { rate } => Exp::new(rate).unwrap().sample(rng),
        }
    }

    /// Map into the reference space: `U(-1, 1)` for uniform marginals, the
    /// standard Gaussian for everything else.
    pub fn to_standard(&self, x: f64) -> Result<f64> {
        if !self.in_support(x) {
            return Err(Error::OutsideSupport { family: self.family_name(), value: x });
        }
        Ok(match *self {
            Marginal::Uniform { lower, upper } => (2.0 * x - lower - upper) / (upper - lower),
            Marginal::Gaussian { mean, std } => (x - mean) / std,
            Marginal::Lognormal { lambda, zeta } => (x.ln() - lambda) / zeta,
            // through the survival function to keep precision in the upper tail
            Marginal::Exponential { rate } => -norm_inv_cdf((-rate * x).exp()),
        })
    }

    pub fn from_standard(&self, xi: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper) + 0.5 * xi * (upper - lower),
            Marginal::Gaussian { mean, std } => mean + std * xi,
            Marginal::Lognormal { lambda, zeta } => (lambda + zeta * xi).exp(),
            Marginal::Exponential { rate } => -norm_cdf(-xi).ln() / rate,
        }
    }
}

/// Joint distribution of independent marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputModel {
    marginals: Vec<Marginal>,
}

impl InputModel {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter("input model needs at least one marginal".into()));
        }
        Ok(Self { marginals })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    pub fn joint_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.marginals.iter().zip(x).map(|(m, &v)| m.pdf(v)).product())
    }

    pub fn joint_ln_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.marginals.iter().zip(x).map(|(m, &v)| m.ln_pdf(v)).sum())
    }

    /// `n` i.i.d. rows.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, self.dim());
        for i in 0..n {
            for (j, m) in self.marginals.iter().enumerate() {
                out[(i, j)] = m.sample(rng);
            }
        }
        out
    }

    pub fn to_standard(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        self.marginals.iter().zip(x).map(|(m, &v)| m.to_standard(v)).collect()
    }

    pub fn from_standard(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(xi.len())?;
        Ok(self.marginals.iter().zip(xi).map(|(m, &v)| m.from_standard(v)).collect())
    }

    /// Row-wise [`to_standard`](Self::to_standard).
    pub fn to_standard_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x.ncols())?;
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            for (j, m) in self.marginals.iter().enumerate() {
                out[(i, j)] = m.to_standard(x[(i, j)])?;
            }
        }
        Ok(out)
    }

    pub fn poly_families(&self) -> Vec<PolyFamily> {
        self.marginals.iter().map(Marginal::poly_family).collect()
    }
}
