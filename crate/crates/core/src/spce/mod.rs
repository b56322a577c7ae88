//! Stochastic polynomial chaos expansion: a PCE in the augmented space of
//! the inputs and one artificial latent variable, plus additive Gaussian
//! noise. The conditional response law at fixed `x` is a Gaussian mixture
//! over the latent quadrature nodes.

mod fit;
mod likelihood;
mod optim;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, LatentFamily, MultiIndexSet};
use crate::distributions::InputModel;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_rule, QuadratureRule};
use crate::special::{norm_cdf, norm_pdf};

pub use fit::{
    fit_mle, fit_mle_with_sigma_grid, fit_with_basis, select_sigma, FitDiagnostics, Fitted, SigmaSelection, TrainConfig,
};
pub use likelihood::{log_likelihood, LikelihoodCache};
pub use optim::{bfgs, OptimOptions, OptimResult};

/// Trained emulator. Coefficients are stored in the physical units of the
/// response; inputs are standardized through the input model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpceModelRepr", into = "SpceModelRepr")]
pub struct SpceModel {
    input_model: InputModel,
    basis: Basis,
    coeffs: Vec<f64>,
    sigma_eps: f64,
    latent: LatentFamily,
    quad: QuadratureRule,
    /// latent degree of every term
    lat_deg: Vec<usize>,
    /// latent polynomial values at the nodes, `n_nodes × n_lat`
    node_poly: Vec<f64>,
    n_lat: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpceModelRepr {
    input_model: InputModel,
    index_set: MultiIndexSet,
    coeffs: Vec<f64>,
    sigma_eps: f64,
    latent_family: LatentFamily,
    n_quad: usize,
}

impl TryFrom<SpceModelRepr> for SpceModel {
    type Error = Error;
    fn try_from(r: SpceModelRepr) -> Result<Self> {
        SpceModel::new(r.input_model, r.index_set, r.coeffs, r.sigma_eps, r.latent_family, r.n_quad)
    }
}

impl From<SpceModel> for SpceModelRepr {
    fn from(m: SpceModel) -> Self {
        SpceModelRepr {
            n_quad: m.quad.len(),
            input_model: m.input_model,
            index_set: m.basis.index_set,
            coeffs: m.coeffs,
            sigma_eps: m.sigma_eps,
            latent_family: m.latent,
        }
    }
}

impl PartialEq for SpceModel {
    fn eq(&self, other: &Self) -> bool {
        self.input_model == other.input_model
            && self.basis.index_set.indices() == other.basis.index_set.indices()
            && self.coeffs == other.coeffs
            && self.sigma_eps == other.sigma_eps
            && self.latent == other.latent
            && self.quad.len() == other.quad.len()
    }
}

/// Basis evaluations of a batch of inputs, reusable across coefficient
/// vectors of the same model (ensembles, fixed Monte Carlo samples).
#[derive(Debug, Clone)]
pub struct Features {
    n: usize,
    n_terms: usize,
    values: Vec<f64>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_terms..(i + 1) * self.n_terms]
    }
}

impl SpceModel {
    pub fn new(
        input_model: InputModel,
        index_set: MultiIndexSet,
        coeffs: Vec<f64>,
        sigma_eps: f64,
        latent: LatentFamily,
        n_quad: usize,
    ) -> Result<Self> {
        if !(sigma_eps > 0.0 && sigma_eps.is_finite()) {
            return Err(Error::InvalidParameter("sigma_eps must be positive and finite".into()));
        }
        if coeffs.len() != index_set.len() {
            return Err(Error::DimensionMismatch { expected: index_set.len(), got: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        let quad = gauss_rule(latent.poly_family(), n_quad)?;
        let basis = Basis::new(index_set, &input_model.poly_families(), latent)?;
        let m = basis.input_dim();
        let lat_deg: Vec<usize> = basis.index_set.indices().iter().map(|a| a[m] as usize).collect();
        let n_lat = basis.index_set.max_latent_degree() as usize + 1;
        let mut node_poly = vec![0.0; quad.len() * n_lat];
        let fam = latent.poly_family();
        for (j, &u) in quad.nodes.iter().enumerate() {
            fam.eval_all(n_lat - 1, u, &mut node_poly[j * n_lat..(j + 1) * n_lat]);
        }
        Ok(Self { input_model, basis, coeffs, sigma_eps, latent, quad, lat_deg, node_poly, n_lat })
    }

    /// Same model with a different coefficient vector.
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != self.coeffs.len() {
            return Err(Error::DimensionMismatch { expected: self.coeffs.len(), got: coeffs.len() });
        }
        let mut out = self.clone();
        out.coeffs = coeffs;
        Ok(out)
    }

    pub fn with_n_quad(&self, n_quad: usize) -> Result<Self> {
        SpceModel::new(
            self.input_model.clone(),
            self.basis.index_set.clone(),
            self.coeffs.clone(),
            self.sigma_eps,
            self.latent,
            n_quad,
        )
    }

    pub fn input_model(&self) -> &InputModel {
        &self.input_model
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.basis.index_set
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn latent_family(&self) -> LatentFamily {
        self.latent
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Basis evaluations for each row of `x` (physical units).
    pub fn features(&self, x: &DMatrix<f64>) -> Result<Features> {
        let m = self.input_model.dim();
        if x.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, got: x.ncols() });
        }
        let n_terms = self.n_terms();
        let mut values = vec![0.0; x.nrows() * n_terms];
        let mut scratch = vec![0.0; self.basis.scratch_len()];
        let mut xi = vec![0.0; m];
        for i in 0..x.nrows() {
            for (j, marginal) in self.input_model.marginals().iter().enumerate() {
                xi[j] = marginal.to_standard(x[(i, j)])?;
            }
            self.basis.eval_input_part(&xi, &mut scratch, &mut values[i * n_terms..(i + 1) * n_terms]);
        }
        Ok(Features { n: x.nrows(), n_terms, values })
    }

    fn point_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xi = self.input_model.to_standard(x)?;
        let mut scratch = vec![0.0; self.basis.scratch_len()];
        let mut out = vec![0.0; self.n_terms()];
        self.basis.eval_input_part(&xi, &mut scratch, &mut out);
        Ok(out)
    }

    /// Collapse the input part into per-latent-degree weights
    /// `B_d = Σ_{α: α_U = d} c_α ψ_α(x)`.
    fn latent_weights(&self, coeffs: &[f64], feats: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for ((&c, &f), &d) in coeffs.iter().zip(feats).zip(&self.lat_deg) {
            out[d] += c * f;
        }
    }

    #[inline]
    fn node_mean(&self, b: &[f64], j: usize) -> f64 {
        let row = &self.node_poly[j * self.n_lat..(j + 1) * self.n_lat];
        b.iter().zip(row).map(|(x, y)| x * y).sum()
    }

    /// Mixture component means `μ(x, u_j)` at every latent node.
    pub fn node_means(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.point_features(x)?;
        let mut b = vec![0.0; self.n_lat];
        self.latent_weights(&self.coeffs, &f, &mut b);
        Ok((0..self.quad.len()).map(|j| self.node_mean(&b, j)).collect())
    }

    /// Conditional mean `E[Ŷ_x]`: the latent-degree-0 part of the expansion.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        let f = self.point_features(x)?;
        let mut b = vec![0.0; self.n_lat];
        self.latent_weights(&self.coeffs, &f, &mut b);
        Ok(b[0])
    }

    pub fn conditional_pdf(&self, x: &[f64], y: f64) -> Result<f64> {
        let mu = self.node_means(x)?;
        let s = self.sigma_eps;
        Ok(mu.iter().zip(&self.quad.weights).map(|(&m, &w)| w * norm_pdf((y - m) / s) / s).sum())
    }

    pub fn conditional_cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        let mu = self.node_means(x)?;
        let s = self.sigma_eps;
        let v: f64 = mu.iter().zip(&self.quad.weights).map(|(&m, &w)| w * norm_cdf((y - m) / s)).sum();
        Ok(v.clamp(0.0, 1.0))
    }

    /// Conditional failure probability `ŝ(x) = P(Ŷ_x <= 0)`.
    pub fn conditional_failure_prob(&self, x: &[f64]) -> Result<f64> {
        self.conditional_cdf(x, 0.0)
    }

    /// [`conditional_failure_prob`](Self::conditional_failure_prob) for every row.
    pub fn conditional_failure_prob_batch(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let feats = self.features(x)?;
        Ok(self.failure_probs_with(&feats, &self.coeffs))
    }

    /// `ŝ` for precomputed features under an arbitrary coefficient vector
    /// (same basis, same `σ_ε`).
    pub fn failure_probs_with(&self, feats: &Features, coeffs: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_lat];
        let inv_s = 1.0 / self.sigma_eps;
        // tail nodes carrying under 1e-16 of the mass cannot move s visibly
        let nodes = self.quad.significant_range(1e-16);
        (0..feats.len())
            .map(|i| {
                self.latent_weights(coeffs, feats.row(i), &mut b);
                let mut acc = 0.0;
                for j in nodes.clone() {
                    let w = self.quad.weights[j];
                    // Φ(±10) is within 1e-23 of 0 and 1
                    let z = -self.node_mean(&b, j) * inv_s;
                    if z > 10.0 {
                        acc += w;
                    } else if z > -10.0 {
                        acc += w * norm_cdf(z);
                    }
                }
                acc.clamp(0.0, 1.0)
            })
            .collect()
    }

    /// Draws from the emulator's conditional law: `U ~ f_U`, `ε ~ N(0, σ²)`.
    pub fn sample_response<R: Rng + ?Sized>(&self, x: &[f64], n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let f = self.point_features(x)?;
        let mut b = vec![0.0; self.n_lat];
        self.latent_weights(&self.coeffs, &f, &mut b);
        let fam = self.latent.poly_family();
        let mut lat = vec![0.0; self.n_lat];
        Ok((0..n)
            .map(|_| {
                let u: f64 = match self.latent {
                    LatentFamily::Gaussian => StandardNormal.sample(rng),
                    LatentFamily::Uniform => rng.random_range(-1.0..1.0),
                };
                fam.eval_all(self.n_lat - 1, u, &mut lat);
                let eps: f64 = StandardNormal.sample(rng);
                b.iter().zip(&lat).map(|(x, y)| x * y).sum::<f64>() + self.sigma_eps * eps
            })
            .collect())
    }

    /// Quadrature log-likelihood of physical data under this model.
    pub fn log_likelihood(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
        let cache = LikelihoodCache::from_model(self, x, y)?;
        Ok(cache.log_likelihood(&self.coeffs, self.sigma_eps))
    }
}
