//! Maximum-likelihood training with cross-validated choice of the noise
//! level and of the truncation `(p, q)`.
//!
//! The response is standardized internally; reported coefficients and
//! `σ_ε` are in the original units.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::likelihood::LikelihoodCache;
use super::optim::{bfgs, OptimOptions};
use super::SpceModel;
use crate::basis::{Basis, LatentFamily, MultiIndexSet};
use crate::distributions::InputModel;
use crate::error::{Error, Result};
use crate::quadrature::gauss_rule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub degree_min: u32,
    pub degree_max: u32,
    pub q_norms: Vec<f64>,
    /// number of automatic `σ_ε` candidates
    pub sigma_grid_size: usize,
    pub cv_folds: usize,
    /// perturbed restarts of the final full-data fit
    pub restarts: usize,
    pub n_quad: usize,
    pub latent: LatentFamily,
    pub max_iter: usize,
    /// stop raising the degree after this many non-improving degrees
    pub degree_patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            degree_min: 1,
            degree_max: 4,
            q_norms: vec![0.7, 0.8, 0.9, 1.0],
            sigma_grid_size: 10,
            cv_folds: 5,
            restarts: 2,
            n_quad: 100,
            latent: LatentFamily::Gaussian,
            max_iter: 400,
            degree_patience: Some(2),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.degree_min > self.degree_max {
            return bad("degree_min exceeds degree_max");
        }
        if self.q_norms.is_empty() || self.q_norms.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
            return bad("q_norms must be non-empty values in (0, 1]");
        }
        if self.sigma_grid_size == 0 {
            return bad("sigma_grid_size must be positive");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if self.n_quad == 0 {
            return bad("n_quad must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub degree: u32,
    pub q_norm: f64,
    pub n_terms: usize,
    /// summed held-out log-likelihood of the selected configuration
    pub cv_score: f64,
    /// candidate noise levels in original units, as evaluated
    pub sigma_grid: Vec<f64>,
    pub sigma_index: usize,
    pub log_likelihood: f64,
    /// largest gradient component of the per-sample objective
    pub grad_norm: f64,
    pub converged: bool,
    /// more basis terms than the cross-validation folds could support
    pub underdetermined: bool,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: SpceModel,
    pub diagnostics: FitDiagnostics,
}

/// Noise level chosen by cross-validation for a fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSelection {
    pub sigma: f64,
    pub index: usize,
    pub scores: Vec<f64>,
}

struct Standardized {
    xi: DMatrix<f64>,
    y: Vec<f64>,
    mean: f64,
    scale: f64,
}

fn standardize(input_model: &InputModel, x: &DMatrix<f64>, y: &[f64]) -> Result<Standardized> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.ncols() != input_model.dim() {
        return Err(Error::DimensionMismatch { expected: input_model.dim(), got: x.ncols() });
    }
    if y.len() < 2 {
        return Err(Error::InvalidParameter("need at least two observations".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    Ok(Standardized {
        xi: input_model.to_standard_rows(x)?,
        y: y.iter().map(|v| (v - mean) / scale).collect(),
        mean,
        scale,
    })
}

fn fold_split(n: usize, k: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let k = k.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..k)
        .map(|f| {
            let mut train = Vec::with_capacity(n);
            let mut test = Vec::with_capacity(n / k + 1);
            for (pos, &i) in perm.iter().enumerate() {
                if pos % k == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            (train, test)
        })
        .collect()
}

/// Least squares on the terms without latent dependence. Returns the
/// coefficient vector (other terms zero) and the residual variance.
fn ols_start(cache: &LikelihoodCache) -> (Vec<f64>, f64) {
    let det: Vec<usize> = (0..cache.n_terms()).filter(|&k| cache.latent_degrees()[k] == 0).collect();
    let n = cache.len();
    let a = DMatrix::from_fn(n, det.len(), |i, j| cache.features(i)[det[j]]);
    let b = DMatrix::from_column_slice(n, 1, cache.y());
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).unwrap_or_else(|_| DMatrix::zeros(det.len(), 1));
    let mut c = vec![0.0; cache.n_terms()];
    for (j, &k) in det.iter().enumerate() {
        c[k] = sol[(j, 0)];
    }
    let resid = &b - &a * &sol;
    let var = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
    (c, var)
}

/// Sets the pure first-order latent coefficient so that the latent spread
/// roughly accounts for the residual variance not covered by `σ`. Starting
/// at zero would sit on a symmetric stationary point.
fn seed_latent(c: &mut [f64], pos: Option<usize>, resid_var: f64, sigma: f64) {
    if let Some(k) = pos {
        let target = (resid_var - sigma * sigma).max(0.0).sqrt().max(0.1 * resid_var.sqrt()).max(1e-3);
        let sign = if c[k] < 0.0 { -1.0 } else { 1.0 };
        c[k] = sign * c[k].abs().max(target);
    }
}

fn latent_position(set: &MultiIndexSet) -> Option<usize> {
    let mut idx = vec![0u32; set.dim()];
    *idx.last_mut()? = 1;
    set.position(&idx)
}

struct Solve {
    c: Vec<f64>,
    ll: f64,
    grad_inf: f64,
    converged: bool,
}

fn maximize(cache: &LikelihoodCache, c0: &[f64], sigma: f64, opts: OptimOptions) -> Solve {
    let n = cache.len() as f64;
    let p = c0.len();
    let h = cache.hessian(c0, sigma) / (-n);
    let h0 = h.cholesky().map(|ch| ch.inverse());
    let r = bfgs(
        |c, g| {
            let v = cache.value_and_grad(c, sigma, g);
            g.iter_mut().for_each(|x| *x /= -n);
            -v / n
        },
        c0,
        h0,
        opts,
    );
    debug_assert_eq!(r.x.len(), p);
    Solve { ll: -r.f * n, c: r.x, grad_inf: r.grad_inf, converged: r.converged }
}

/// A few damped Newton steps from a point near the optimum.
fn polish(cache: &LikelihoodCache, s: Solve, sigma: f64, steps: usize) -> Solve {
    let n = cache.len() as f64;
    let p = s.c.len();
    let mut c = s.c.clone();
    let mut g = vec![0.0; p];
    let mut ll = cache.value_and_grad(&c, sigma, &mut g);
    let norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / n;
    for _ in 0..steps {
        if norm(&g) < 1e-12 {
            break;
        }
        let neg_h = -cache.hessian(&c, sigma);
        let Some(ch) = neg_h.cholesky() else { break };
        let step = ch.solve(&DMatrix::from_column_slice(p, 1, &g));
        let mut t = 1.0;
        let mut improved = false;
        let mut trial = vec![0.0; p];
        let mut g_trial = vec![0.0; p];
        for _ in 0..30 {
            for k in 0..p {
                trial[k] = c[k] + t * step[(k, 0)];
            }
            let v = cache.value_and_grad(&trial, sigma, &mut g_trial);
            if v.is_finite() && v >= ll - 1e-12 * ll.abs() && norm(&g_trial) <= norm(&g) {
                improved = true;
                c.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                ll = v;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let gi = norm(&g);
    if ll >= s.ll - 1e-12 * s.ll.abs() {
        Solve { converged: s.converged || gi < 1e-7, c, ll, grad_inf: gi }
    } else {
        s
    }
}

fn cv_options(config: &TrainConfig) -> OptimOptions {
    OptimOptions { max_iter: config.max_iter, gtol: 1e-6, ftol: 1e-12 }
}

fn final_options(config: &TrainConfig) -> OptimOptions {
    OptimOptions { max_iter: 2 * config.max_iter, gtol: 1e-9, ftol: 1e-15 }
}

struct CvOutcome {
    /// summed held-out log-likelihood per grid index
    scores: Vec<f64>,
    /// first fold's solution per grid index, reused as a start
    fold0: Vec<Vec<f64>>,
}

/// Held-out log-likelihood along the `σ` grid (standardized units), walking
/// from the largest to the smallest value with warm starts.
fn cv_sigma_path(
    full: &LikelihoodCache,
    folds: &[(Vec<usize>, Vec<usize>)],
    grid: &[f64],
    latent_pos: Option<usize>,
    opts: OptimOptions,
) -> CvOutcome {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut scores = vec![0.0; grid.len()];
    let mut fold0 = vec![Vec::new(); grid.len()];
    for (f, (train, test)) in folds.iter().enumerate() {
        let tr = full.subset(train);
        let te = full.subset(test);
        let (ols, resid_var) = ols_start(&tr);
        let mut prev: Option<Vec<f64>> = None;
        for &gi in &order {
            let sigma = grid[gi];
            let mut c0 = prev.clone().unwrap_or_else(|| ols.clone());
            seed_latent(&mut c0, latent_pos, resid_var, sigma);
            let s = maximize(&tr, &c0, sigma, opts);
            let held = te.log_likelihood(&s.c, sigma);
            scores[gi] += if held.is_nan() { f64::NEG_INFINITY } else { held };
            if f == 0 {
                fold0[gi] = s.c.clone();
            }
            prev = Some(s.c);
        }
    }
    CvOutcome { scores, fold0 }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Automatic grid in standardized units, from a fraction of the
/// least-squares residual spread up to the response spread.
fn auto_grid(resid_var: f64, size: usize) -> Vec<f64> {
    let lo = (0.05 * resid_var.sqrt()).max(1e-3);
    log_space(lo, 1.0, size)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter("sigma grid must hold positive finite values".into()));
    }
    Ok(())
}

struct Candidate {
    degree: u32,
    q: f64,
    set: MultiIndexSet,
}

fn candidates(dim: usize, config: &TrainConfig) -> Result<Vec<Candidate>> {
    let mut out: Vec<Candidate> = Vec::new();
    for p in config.degree_min..=config.degree_max {
        for &q in &config.q_norms {
            let set = MultiIndexSet::hyperbolic(dim, p, q)?;
            if out.iter().any(|c| c.set.indices() == set.indices()) {
                continue;
            }
            out.push(Candidate { degree: p, q, set });
        }
    }
    Ok(out)
}

/// Full-data fit at a fixed `σ` from several starts; the best likelihood
/// wins, preferring converged runs.
fn final_fit(
    cache: &LikelihoodCache,
    sigma: f64,
    starts: Vec<Vec<f64>>,
    config: &TrainConfig,
) -> Solve {
    let mut best: Option<Solve> = None;
    for c0 in starts {
        let s = maximize(cache, &c0, sigma, final_options(config));
        let s = polish(cache, s, sigma, 8);
        let better = match &best {
            None => true,
            Some(b) => (s.converged && !b.converged) || (s.converged == b.converged && s.ll > b.ll),
        };
        if better {
            best = Some(s);
        }
    }
    best.expect("at least one start")
}

fn perturbed_starts(base: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    (0..count)
        .map(|_| base.iter().enumerate().map(|(k, &c)| if k == 0 { c } else { c + noise.sample(&mut rng) }).collect())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    input_model: &InputModel,
    set: MultiIndexSet,
    st: &Standardized,
    solve: Solve,
    sigma_std: f64,
    config: &TrainConfig,
    mut diagnostics: FitDiagnostics,
) -> Result<Fitted> {
    let zero = vec![0u32; set.dim()];
    let intercept = set.position(&zero);
    let coeffs: Vec<f64> = solve
        .c
        .iter()
        .enumerate()
        .map(|(k, &c)| if Some(k) == intercept { st.mean + st.scale * c } else { st.scale * c })
        .collect();
    let model = SpceModel::new(input_model.clone(), set, coeffs, sigma_std * st.scale, config.latent, config.n_quad)?;
    // log-likelihood in original units differs by the Jacobian of the scaling
    diagnostics.log_likelihood = solve.ll - st.y.len() as f64 * st.scale.ln();
    diagnostics.grad_norm = solve.grad_inf;
    diagnostics.converged = solve.converged;
    if !solve.converged {
        return Err(Error::NotConverged { best: alloc::boxed::Box::new(model), grad_norm: solve.grad_inf });
    }
    Ok(Fitted { model, diagnostics })
}

/// Trains an emulator with the automatic `σ_ε` grid.
pub fn fit_mle(input_model: &InputModel, x: &DMatrix<f64>, y: &[f64], config: &TrainConfig) -> Result<Fitted> {
    fit_mle_with_sigma_grid(input_model, x, y, config, None)
}

/// Trains an emulator; `sigma_grid` (original units) replaces the automatic
/// grid when given.
pub fn fit_mle_with_sigma_grid(
    input_model: &InputModel,
    x: &DMatrix<f64>,
    y: &[f64],
    config: &TrainConfig,
    sigma_grid: Option<&[f64]>,
) -> Result<Fitted> {
    config.validate()?;
    if let Some(g) = sigma_grid {
        check_grid(g)?;
    }
    let st = standardize(input_model, x, y)?;
    let n = st.y.len();
    let quad = gauss_rule(config.latent.poly_family(), config.n_quad)?;
    let families = input_model.poly_families();
    let folds = fold_split(n, config.cv_folds, config.seed);
    let min_train = folds.iter().map(|f| f.0.len()).min().unwrap_or(0);
    let opts = cv_options(config);

    let all = candidates(input_model.dim() + 1, config)?;
    let mut feasible: Vec<&Candidate> = all.iter().filter(|c| c.set.len() <= min_train).collect();
    let underdetermined = feasible.is_empty();
    if underdetermined {
        feasible.push(all.iter().min_by_key(|c| c.set.len()).expect("non-empty candidate list"));
    }

    struct Best {
        cand: usize,
        score: f64,
        sigma_index: usize,
        grid: Vec<f64>,
        fold0: Vec<f64>,
        cache: LikelihoodCache,
    }
    let mut best: Option<Best> = None;
    // (degree in progress, its best score), best over finished degrees
    let mut current = (feasible[0].degree, f64::NEG_INFINITY);
    let mut record = f64::NEG_INFINITY;
    let mut stale = 0usize;

    for (ci, cand) in feasible.iter().enumerate() {
        if cand.degree != current.0 {
            // a degree is complete: update the early-stop counter
            if current.1 > record {
                record = current.1;
                stale = 0;
            } else {
                stale += 1;
            }
            if config.degree_patience.is_some_and(|pat| stale >= pat) {
                break;
            }
            current = (cand.degree, f64::NEG_INFINITY);
        }
        let basis = Basis::new(cand.set.clone(), &families, config.latent)?;
        let cache = LikelihoodCache::new(&basis, &st.xi, &st.y, &quad)?;
        let grid: Vec<f64> = match sigma_grid {
            Some(g) => g.iter().map(|s| s / st.scale).collect(),
            None => auto_grid(ols_start(&cache).1, config.sigma_grid_size),
        };
        let cv = cv_sigma_path(&cache, &folds, &grid, latent_position(&cand.set), opts);
        let k = argmax_first(&cv.scores);
        let score = cv.scores[k];
        current.1 = current.1.max(score);
        let take = match &best {
            None => true,
            Some(b) => score > b.score || (score == b.score && cand.set.len() < feasible[b.cand].set.len()),
        };
        if take {
            best = Some(Best { cand: ci, score, sigma_index: k, fold0: cv.fold0[k].clone(), grid, cache });
        }
    }
    let b = best.expect("at least one candidate evaluated");
    let cand = feasible[b.cand];
    let sigma = b.grid[b.sigma_index];
    let (mut start, resid_var) = ols_start(&b.cache);
    seed_latent(&mut start, latent_position(&cand.set), resid_var, sigma);
    let mut starts = vec![start.clone(), b.fold0.clone()];
    starts.extend(perturbed_starts(&start, config.restarts, config.seed));
    let solve = final_fit(&b.cache, sigma, starts, config);
    let diagnostics = FitDiagnostics {
        degree: cand.degree,
        q_norm: cand.q,
        n_terms: cand.set.len(),
        cv_score: b.score,
        sigma_grid: b.grid.iter().map(|s| s * st.scale).collect(),
        sigma_index: b.sigma_index,
        log_likelihood: 0.0,
        grad_norm: 0.0,
        converged: false,
        underdetermined: underdetermined || cand.set.len() > n,
    };
    assemble(input_model, cand.set.clone(), &st, solve, sigma, config, diagnostics)
}

/// Trains the coefficients of a given basis. A single-value grid fixes
/// `σ_ε`; a longer grid is resolved by cross-validation.
pub fn fit_with_basis(
    input_model: &InputModel,
    x: &DMatrix<f64>,
    y: &[f64],
    index_set: &MultiIndexSet,
    sigma_grid: &[f64],
    config: &TrainConfig,
) -> Result<Fitted> {
    config.validate()?;
    check_grid(sigma_grid)?;
    let st = standardize(input_model, x, y)?;
    let quad = gauss_rule(config.latent.poly_family(), config.n_quad)?;
    let basis = Basis::new(index_set.clone(), &input_model.poly_families(), config.latent)?;
    let cache = LikelihoodCache::new(&basis, &st.xi, &st.y, &quad)?;
    let grid: Vec<f64> = sigma_grid.iter().map(|s| s / st.scale).collect();
    let pos = latent_position(index_set);
    let (score, k, extra) = if grid.len() == 1 {
        (f64::NAN, 0, Vec::new())
    } else {
        let folds = fold_split(st.y.len(), config.cv_folds, config.seed);
        let cv = cv_sigma_path(&cache, &folds, &grid, pos, cv_options(config));
        let k = argmax_first(&cv.scores);
        (cv.scores[k], k, vec![cv.fold0[k].clone()])
    };
    let sigma = grid[k];
    let (mut start, resid_var) = ols_start(&cache);
    seed_latent(&mut start, pos, resid_var, sigma);
    let mut starts = vec![start.clone()];
    starts.extend(extra);
    starts.extend(perturbed_starts(&start, config.restarts, config.seed));
    let solve = final_fit(&cache, sigma, starts, config);
    let max_degree = index_set.indices().iter().map(|a| a.iter().sum::<u32>()).max().unwrap_or(0);
    let diagnostics = FitDiagnostics {
        degree: max_degree,
        q_norm: index_set.truncation().map(|t| t.q_norm).unwrap_or(1.0),
        n_terms: index_set.len(),
        cv_score: score,
        sigma_grid: sigma_grid.to_vec(),
        sigma_index: k,
        log_likelihood: 0.0,
        grad_norm: 0.0,
        converged: false,
        underdetermined: index_set.len() > st.y.len(),
    };
    assemble(input_model, index_set.clone(), &st, solve, sigma, config, diagnostics)
}

/// Cross-validated noise level for a fixed basis. Ties go to the lowest
/// grid index.
pub fn select_sigma(
    input_model: &InputModel,
    x: &DMatrix<f64>,
    y: &[f64],
    index_set: &MultiIndexSet,
    sigma_grid: &[f64],
    config: &TrainConfig,
) -> Result<SigmaSelection> {
    config.validate()?;
    check_grid(sigma_grid)?;
    let st = standardize(input_model, x, y)?;
    let quad = gauss_rule(config.latent.poly_family(), config.n_quad)?;
    let basis = Basis::new(index_set.clone(), &input_model.poly_families(), config.latent)?;
    let cache = LikelihoodCache::new(&basis, &st.xi, &st.y, &quad)?;
    let grid: Vec<f64> = sigma_grid.iter().map(|s| s / st.scale).collect();
    let folds = fold_split(st.y.len(), config.cv_folds, config.seed);
    let cv = cv_sigma_path(&cache, &folds, &grid, latent_position(index_set), cv_options(config));
    let k = argmax_first(&cv.scores);
    Ok(SigmaSelection { sigma: sigma_grid[k], index: k, scores: cv.scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Marginal;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn linear_data(n: usize, seed: u64) -> (InputModel, DMatrix<f64>, Vec<f64>) {
        let im = InputModel::new(vec![Marginal::uniform(0.0, 1.0).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y = (0..n)
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                2.0 + 3.0 * x[(i, 0)] + 0.5 * z
            })
            .collect();
        (im, x, y)
    }

    #[test]
    fn folds_partition_the_data() {
        let folds = fold_split(23, 5, 1);
        let mut seen = vec![0; 23];
        for (train, test) in &folds {
            assert_eq!(train.len() + test.len(), 23);
            for &i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(fold_split(3, 5, 0).len(), 3);
    }

    #[test]
    fn log_grid_endpoints_are_exact() {
        let g = log_space(0.95, 1.05, 5);
        assert_eq!(g[0], 0.95);
        assert_eq!(g[4], 1.05);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn homoskedastic_linear_recovers_mean_trend() {
        let (im, x, y) = linear_data(200, 11);
        let cfg = TrainConfig { degree_max: 2, q_norms: vec![1.0], ..TrainConfig::default() };
        let fit = fit_mle(&im, &x, &y, &cfg).unwrap();
        assert!(fit.diagnostics.converged);
        for &t in &[0.1, 0.5, 0.9] {
            let m = fit.model.mean(&[t]).unwrap();
            assert!((m - (2.0 + 3.0 * t)).abs() < 0.25, "mean at {t} = {m}");
        }
        // total conditional spread should be near 0.5
        let s = fit.model.conditional_cdf(&[0.5], 3.5 + 0.5).unwrap() - fit.model.conditional_cdf(&[0.5], 3.5 - 0.5).unwrap();
        assert!((s - 0.6827).abs() < 0.08, "mass within one sd: {s}");
    }

    #[test]
    fn explicit_single_sigma_is_kept() {
        let (im, x, y) = linear_data(60, 2);
        let cfg = TrainConfig { degree_max: 1, q_norms: vec![1.0], ..TrainConfig::default() };
        let fit = fit_mle_with_sigma_grid(&im, &x, &y, &cfg, Some(&[0.3])).unwrap();
        assert!((fit.model.sigma_eps() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn tiny_data_is_flagged_underdetermined() {
        let (im, x, y) = linear_data(4, 3);
        let cfg = TrainConfig { degree_min: 3, degree_max: 3, q_norms: vec![1.0], ..TrainConfig::default() };
        match fit_mle(&im, &x, &y, &cfg) {
            Ok(f) => assert!(f.diagnostics.underdetermined),
            Err(Error::NotConverged { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn constant_response_does_not_crash() {
        let im = InputModel::new(vec![Marginal::uniform(0.0, 1.0).unwrap()]).unwrap();
        let x = DMatrix::from_fn(30, 1, |i, _| i as f64 / 30.0);
        let y = vec![1.25; 30];
        let cfg = TrainConfig { degree_max: 1, q_norms: vec![1.0], ..TrainConfig::default() };
        let model = match fit_mle(&im, &x, &y, &cfg) {
            Ok(f) => f.model,
            Err(Error::NotConverged { best, .. }) => *best,
            Err(e) => panic!("unexpected error {e}"),
        };
        assert!((model.mean(&[0.3]).unwrap() - 1.25).abs() < 1e-3);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (im, x, mut y) = linear_data(20, 4);
        let cfg = TrainConfig::default();
        assert!(fit_mle(&im, &x, &y[..19], &cfg).is_err());
        assert!(fit_mle_with_sigma_grid(&im, &x, &y, &cfg, Some(&[])).is_err());
        assert!(fit_mle_with_sigma_grid(&im, &x, &y, &cfg, Some(&[-1.0])).is_err());
        y[0] = f64::NAN;
        assert!(matches!(fit_mle(&im, &x, &y, &cfg), Err(Error::NonFinite(_))));
        let bad = TrainConfig { degree_min: 3, degree_max: 1, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn select_sigma_prefers_first_on_ties() {
        let (im, x, y) = linear_data(40, 5);
        let set = MultiIndexSet::hyperbolic(2, 1, 1.0).unwrap();
        let cfg = TrainConfig::default();
        let sel = select_sigma(&im, &x, &y, &set, &[0.5, 0.5], &cfg).unwrap();
        assert_eq!(sel.index, 0);
    }
}
