//! Active learning loop: fit, quantify coefficient uncertainty, score a
//! fresh candidate set, pick a spread-out batch, run the simulator, repeat.
//!
//! Random streams are derived from the configured seed with a fixed stream
//! id per purpose, so a run is a deterministic function of its seed.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::lhs;
use crate::distributions::InputModel;
use crate::error::{Error, Result, SimError};
use crate::kmedoids::select_batch;
use crate::reliability::reliability_index;
use crate::spce::{fit_mle_with_sigma_grid, SpceModel, TrainConfig};
use crate::testbeds::StochasticSimulator;
use crate::uncertainty::{fisher_information, sample_coefficients, variance_from_features, CoefficientEnsemble};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlConfig {
    pub n_init: usize,
    pub batch_size: usize,
    pub n_max: usize,
    pub n_candidates: usize,
    pub n_mcs: usize,
    /// coefficient draws per iteration
    pub n_ensemble: usize,
    /// size of the damped noise grid after the first fit
    pub damped_grid_size: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for AlConfig {
    fn default() -> Self {
        Self {
            n_init: 20,
            batch_size: 5,
            n_max: 100,
            n_candidates: 10_000,
            n_mcs: 100_000,
            n_ensemble: 100,
            damped_grid_size: 5,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &'static str| Err(Error::InvalidParameter(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.n_init < self.batch_size {
            return bad("n_init must be at least batch_size");
        }
        if self.n_max < self.n_init {
            return bad("n_max must be at least n_init");
        }
        if self.n_candidates < self.batch_size {
            return bad("n_candidates must be at least batch_size");
        }
        if self.n_mcs == 0 {
            return bad("n_mcs must be positive");
        }
        if self.n_ensemble < 2 {
            return bad("n_ensemble must be at least 2");
        }
        if self.damped_grid_size < 2 {
            return bad("damped_grid_size must be at least 2");
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// experimental design size used for this fit
    pub n: usize,
    pub sigma_eps: f64,
    pub pf_raw: f64,
    pub pf_smoothed: f64,
    pub degree: u32,
    pub q_norm: f64,
    pub n_terms: usize,
    pub converged: bool,
    /// inputs added after this fit (empty on the last iteration)
    pub batch: Vec<Vec<f64>>,
    /// fingerprint of the Monte Carlo sample used for `pf_raw`
    pub mc_checksum: u64,
}

impl IterationRecord {
    pub fn beta_smoothed(&self) -> f64 {
        reliability_index(self.pf_smoothed)
    }
}

#[derive(Debug, Clone)]
pub struct AlState {
    pub ed_x: DMatrix<f64>,
    pub ed_y: Vec<f64>,
    /// iteration that added each design point (0 for the initial design)
    pub ed_iteration: Vec<usize>,
    pub mc_sample: DMatrix<f64>,
    pub history: Vec<IterationRecord>,
    pub model: Option<SpceModel>,
}

impl AlState {
    pub fn final_pf(&self) -> Option<f64> {
        self.history.last().map(|r| r.pf_smoothed)
    }

    pub fn mc_checksum(&self) -> u64 {
        checksum(&self.mc_sample)
    }
}

/// Abort of the loop, carrying everything computed so far.
#[derive(Debug, thiserror::Error)]
#[error("active learning aborted after {} iteration(s): {source}", state.history.len())]
pub struct AlError {
    pub state: Box<AlState>,
    #[source]
    pub source: Error,
}

/// FNV-1a over the bit patterns of the entries.
fn checksum(m: &DMatrix<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

const STREAM_DESIGN: u64 = 1;
const STREAM_MC: u64 = 2;
const STREAM_SIM: u64 = 1 << 32;
const STREAM_ITER: u64 = 1 << 40;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// `score(x) = f_X(x)·Var[ŝ(x)]` over the ensemble members.
pub fn learning_scores(ensemble: &CoefficientEnsemble, input_model: &InputModel, candidates: &DMatrix<f64>) -> Result<Vec<f64>> {
    let feats = ensemble.base().features(candidates)?;
    let var = variance_from_features(ensemble, &feats);
    let mut x = vec![0.0; candidates.ncols()];
    (0..candidates.nrows())
        .map(|i| {
            for j in 0..x.len() {
                x[j] = candidates[(i, j)];
            }
            Ok(input_model.joint_pdf(&x)? * var[i])
        })
        .collect()
}

/// Log-spaced grid from `0.95·σ` to `1.05·σ` with exact endpoints.
pub fn damped_sigma_grid(sigma_prev: f64, n_grid: usize) -> Result<Vec<f64>> {
    if !(sigma_prev > 0.0 && sigma_prev.is_finite()) || n_grid < 2 {
        return Err(Error::InvalidParameter("need sigma_prev > 0 and n_grid >= 2".into()));
    }
    let (lo, hi) = (0.95 * sigma_prev, 1.05 * sigma_prev);
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n_grid)
        .map(|k| match k {
            0 => lo,
            k if k == n_grid - 1 => hi,
            k => (a + (b - a) * k as f64 / (n_grid - 1) as f64).exp(),
        })
        .collect())
}

/// Mean of the last `min(3, len)` raw estimates.
pub fn smooth_pf(raw: &[f64]) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("empty history".into()));
    }
    let tail = &raw[raw.len().saturating_sub(3)..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Mean `ŝ` over the rows of `sample`, evaluated in chunks to bound memory.
pub fn pf_on_sample(model: &SpceModel, sample: &DMatrix<f64>) -> Result<f64> {
    const CHUNK: usize = 8192;
    let n = sample.nrows();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let block = sample.rows(start, len).into_owned();
        total += model.conditional_failure_prob_batch(&block)?.iter().sum::<f64>();
        start += len;
    }
    Ok(total / n as f64)
}

fn evaluate_with_retry<S: StochasticSimulator + ?Sized>(
    sim: &mut S,
    x: &[f64],
    seed: u64,
    point: usize,
) -> core::result::Result<(Vec<f64>, f64), SimError> {
    let id = STREAM_SIM + 2 * point as u64;
    match sim.evaluate_realized(x, &mut stream(seed, id)) {
        Ok(v) => Ok(v),
        Err(_) => sim.evaluate_realized(x, &mut stream(seed, id + 1)),
    }
}

fn append(state: &mut AlState, x: &[f64], y: f64, iteration: usize) {
    let n = state.ed_x.nrows();
    let m = state.ed_x.ncols();
    let mut grown = state.ed_x.clone().resize_vertically(n + 1, 0.0);
    for j in 0..m {
        grown[(n, j)] = x[j];
    }
    state.ed_x = grown;
    state.ed_y.push(y);
    state.ed_iteration.push(iteration);
}

/// Runs the loop until the design holds `n_max` points.
pub fn run<S: StochasticSimulator + ?Sized>(
    config: &AlConfig,
    input_model: &InputModel,
    simulator: &mut S,
) -> core::result::Result<AlState, AlError> {
    let m = input_model.dim();
    let mut state = AlState {
        ed_x: DMatrix::zeros(0, m),
        ed_y: Vec::new(),
        ed_iteration: Vec::new(),
        mc_sample: DMatrix::zeros(0, m),
        history: Vec::new(),
        model: None,
    };
    macro_rules! abort {
        ($e:expr) => {
            return Err(AlError { state: Box::new(state), source: $e.into() })
        };
    }
    if let Err(e) = config.validate() {
        abort!(e);
    }
    if simulator.input_dim() != m {
        abort!(Error::DimensionMismatch { expected: m, got: simulator.input_dim() });
    }
    let seed = config.seed;
    let design = lhs(input_model, config.n_init, &mut stream(seed, STREAM_DESIGN));
    state.mc_sample = input_model.sample(config.n_mcs, &mut stream(seed, STREAM_MC));
    let mut point = 0usize;
    for i in 0..design.nrows() {
        let x: Vec<f64> = design.row(i).iter().copied().collect();
        match evaluate_with_retry(simulator, &x, seed, point) {
            Ok((xr, y)) => append(&mut state, &xr, y, 0),
            Err(e) => abort!(e),
        }
        point += 1;
    }

    let mut raw: Vec<f64> = Vec::new();
    let mut sigma_prev: Option<f64> = None;
    let mut iteration = 0usize;
    loop {
        let grid = match sigma_prev.map(|s| damped_sigma_grid(s, config.damped_grid_size)).transpose() {
            Ok(g) => g,
            Err(e) => abort!(e),
        };
        let mut train = config.train.clone();
        train.seed = config.train.seed ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(iteration as u64);
        let (model, converged) = match fit_mle_with_sigma_grid(input_model, &state.ed_x, &state.ed_y, &train, grid.as_deref())
        {
            Ok(f) => (f.model, true),
            Err(Error::NotConverged { best, .. }) => (*best, false),
            Err(e) => abort!(e),
        };
        let pf = match pf_on_sample(&model, &state.mc_sample) {
            Ok(v) => v,
            Err(e) => abort!(e),
        };
        raw.push(pf);
        let set = model.index_set();
        state.history.push(IterationRecord {
            n: state.ed_y.len(),
            sigma_eps: model.sigma_eps(),
            pf_raw: pf,
            pf_smoothed: smooth_pf(&raw).expect("non-empty"),
            degree: set.indices().iter().map(|a| a.iter().sum::<u32>()).max().unwrap_or(0),
            q_norm: set.truncation().map_or(1.0, |t| t.q_norm),
            n_terms: set.len(),
            converged,
            batch: Vec::new(),
            mc_checksum: checksum(&state.mc_sample),
        });
        sigma_prev = Some(model.sigma_eps());
        state.model = Some(model);
        let n = state.ed_y.len();
        if n >= config.n_max {
            break;
        }
        iteration += 1;
        let model = state.model.as_ref().expect("just stored");
        let base = STREAM_ITER * iteration as u64;
        let ensemble = match fisher_information(model, &state.ed_x, &state.ed_y)
            .and_then(|info| sample_coefficients(model, &info, config.n_ensemble, &mut stream(seed, base)))
        {
            Ok(e) => e,
            Err(e) => abort!(e),
        };
        let candidates = input_model.sample(config.n_candidates, &mut stream(seed, base + 1));
        let batch = match learning_scores(&ensemble, input_model, &candidates).and_then(|scores| {
            let std = input_model.to_standard_rows(&candidates)?;
            let k = config.batch_size.min(config.n_max - n);
            select_batch(&std, &scores, k, &mut stream(seed, base + 2))
        }) {
            Ok(b) => b,
            Err(e) => abort!(e),
        };
        let mut added = Vec::with_capacity(batch.len());
        for &c in &batch {
            let x: Vec<f64> = candidates.row(c).iter().copied().collect();
            match evaluate_with_retry(simulator, &x, seed, point) {
                Ok((xr, y)) => {
                    append(&mut state, &xr, y, iteration);
                    added.push(xr);
                }
                Err(e) => abort!(e),
            }
            point += 1;
        }
        state.history.last_mut().expect("record pushed").batch = added;
    }
    Ok(state)
}

/// Static baseline: one Latin hypercube design of size `n`, one fit.
pub fn static_design<S: StochasticSimulator + ?Sized, R: Rng>(
    input_model: &InputModel,
    simulator: &mut S,
    n: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let design = lhs(input_model, n, rng);
    let mut x = DMatrix::zeros(n, input_model.dim());
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = design.row(i).iter().copied().collect();
        let (xr, v) = simulator.evaluate_realized(&row, rng)?;
        for j in 0..xr.len() {
            x[(i, j)] = xr[j];
        }
        y.push(v);
    }
    Ok((x, y))
}
