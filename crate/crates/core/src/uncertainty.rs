//! Asymptotic uncertainty of the fitted coefficients: observed Fisher
//! information, Gaussian coefficient ensembles and the induced spread of the
//! conditional failure probability.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spce::{Features, LikelihoodCache, SpceModel};

/// Observed Fisher information `−∇²ℓ(ĉ)` of the coefficients at the
/// model's `σ_ε`, on the given training data.
pub fn fisher_information(model: &SpceModel, x: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>> {
    let cache = LikelihoodCache::from_model(model, x, y)?;
    let info = -cache.hessian(model.coeffs(), model.sigma_eps());
    if info.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Fisher information"));
    }
    Ok(info)
}

/// Draws `c^(k) ~ N(ĉ, I⁻¹)` sharing the basis and `σ_ε` of the base model.
#[derive(Debug, Clone)]
pub struct CoefficientEnsemble {
    base: SpceModel,
    /// one draw per row
    draws: DMatrix<f64>,
    /// inverse of the regularized information
    covariance: DMatrix<f64>,
    /// diagonal shift added to the information before factorization
    pub jitter: f64,
}

impl CoefficientEnsemble {
    pub fn base(&self) -> &SpceModel {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn draw(&self, k: usize) -> Vec<f64> {
        self.draws.row(k).iter().copied().collect()
    }

    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `ŝ` for every member (rows) and candidate (columns).
    pub fn failure_probs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let feats = self.base.features(x)?;
        Ok(self.failure_probs_from(&feats))
    }

    fn failure_probs_from(&self, feats: &Features) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.len(), feats.len());
        for k in 0..self.len() {
            let s = self.base.failure_probs_with(feats, &self.draw(k));
            for (i, v) in s.into_iter().enumerate() {
                out[(k, i)] = v;
            }
        }
        out
    }
}

/// Samples `m` coefficient vectors from the asymptotic law of the MLE. An
/// information matrix that is not safely positive definite gets a
/// diagonal shift up to `1e-8·tr(I)/|A|` above its smallest eigenvalue,
/// growing tenfold until the Cholesky factorization succeeds.
pub fn sample_coefficients<R: Rng + ?Sized>(
    model: &SpceModel,
    info: &DMatrix<f64>,
    m: usize,
    rng: &mut R,
) -> Result<CoefficientEnsemble> {
    let p = model.n_terms();
    if info.nrows() != p || info.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: info.nrows() });
    }
    if info.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Fisher information"));
    }
    let sym = (info + info.transpose()) * 0.5;
    let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
    let floor = 1e-8 * sym.trace().abs().max(f64::MIN_POSITIVE) / p as f64;
    let mut jitter = if min_eig < floor { floor - min_eig } else { 0.0 };
    let mut chol = None;
    for _ in 0..20 {
        let shifted = &sym + DMatrix::identity(p, p) * jitter;
        if let Some(c) = shifted.cholesky() {
            chol = Some(c);
            break;
        }
        jitter = if jitter == 0.0 { floor } else { jitter * 10.0 };
    }
    let chol = chol.ok_or(Error::Factorization { min_eigenvalue: min_eig, jitter })?;
    // c = ĉ + L⁻ᵀ z has covariance (L Lᵀ)⁻¹
    let lt = chol.l().transpose();
    let mut draws = DMatrix::zeros(m, p);
    for k in 0..m {
        let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(rng)));
        let v = lt.solve_upper_triangular(&z).ok_or(Error::Factorization { min_eigenvalue: min_eig, jitter })?;
        for j in 0..p {
            draws[(k, j)] = model.coeffs()[j] + v[j];
        }
    }
    let covariance = chol.inverse();
    let covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(CoefficientEnsemble { base: model.clone(), draws, covariance, jitter })
}

/// Unbiased sample variance of `ŝ` across the ensemble members, per row of
/// `x`. The MLE itself is not a member.
pub fn variance_of_s(ensemble: &CoefficientEnsemble, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidParameter("variance needs at least two ensemble members".into()));
    }
    let s = ensemble.failure_probs(x)?;
    Ok(column_variances(&s))
}

pub(crate) fn column_variances(s: &DMatrix<f64>) -> Vec<f64> {
    let m = s.nrows() as f64;
    (0..s.ncols())
        .map(|i| {
            let col = s.column(i);
            let mean = col.sum() / m;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
        })
        .collect()
}

/// Per-candidate variance computed from precomputed features.
pub(crate) fn variance_from_features(ensemble: &CoefficientEnsemble, feats: &Features) -> Vec<f64> {
    if ensemble.len() < 2 {
        return vec![0.0; feats.len()];
    }
    column_variances(&ensemble.failure_probs_from(feats))
}
