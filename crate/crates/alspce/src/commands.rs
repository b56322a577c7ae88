//! Command implementations. Every output is a deterministic function of
//! the configuration and seed, whatever the number of worker threads.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use alspce_core::active::{run, static_design, AlState};
use alspce_core::reliability::{mcs_indicator, reliability_index, PfEstimate};
use alspce_core::spce::{fit_mle, FitDiagnostics};
use alspce_core::testbeds::{default_radius, moving_window_stats, DatasetSimulator, StochasticSimulator};
use alspce_core::{InputModel, SpceModel};
use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{self, ConvergenceRow};
use crate::summary::{summarize, Summary};

pub fn convergence_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("convergence_{rep:03}.csv"))
}

pub fn design_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("design_{rep:03}.csv"))
}

pub fn model_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("model_{rep:03}.json"))
}

/// Seed of replication `rep`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

struct Source {
    input_model: InputModel,
    dataset: Option<(DMatrix<f64>, Vec<f64>)>,
}

impl Source {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let input_model = cfg.input_model()?;
        let dataset = match &cfg.dataset {
            Some(p) => {
                let t = io::read_table(p)?;
                let y = t.y.with_context(|| format!("{}: dataset needs a y column", p.display()))?;
                if t.x.ncols() != input_model.dim() {
                    bail!("dataset has {} inputs, input_model has {}", t.x.ncols(), input_model.dim());
                }
                Some((t.x, y))
            }
            None => None,
        };
        Ok(Self { input_model, dataset })
    }

    /// A fresh simulator; dataset points are consumed per replication.
    fn simulator(&self, cfg: &RunConfig, seed: u64) -> Result<Box<dyn StochasticSimulator + Send>> {
        match (&self.dataset, cfg.testbed) {
            (Some((x, y)), _) => {
                let radius = match cfg.radius {
                    Some(r) => r,
                    None => default_radius(x, &mut ChaCha8Rng::seed_from_u64(seed))?,
                };
                Ok(Box::new(DatasetSimulator::new(x, y, radius)?))
            }
            (None, Some(t)) => Ok(t.simulator(cfg.i_lim)),
            (None, None) => bail!("a testbed or a dataset is required"),
        }
    }
}

fn write_state(dir: &Path, rep: usize, state: &AlState) -> Result<Vec<ConvergenceRow>> {
    io::write_convergence(&convergence_path(dir, rep), &state.history)?;
    io::write_design(&design_path(dir, rep), state)?;
    if let Some(m) = &state.model {
        io::write_model(&model_path(dir, rep), m)?;
    }
    Ok(state.history.iter().map(ConvergenceRow::from).collect())
}

/// Runs every replication, writing its convergence history, design and
/// final model, then the campaign summary.
pub fn al_run(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate("al-run")?;
    let dir = &cfg.output_dir;
    io::ensure_dir(dir)?;
    let source = Source::load(cfg)?;
    let base = cfg.al_config()?;
    let seed = cfg.seed()?;
    let one = |rep: usize| -> Result<Vec<ConvergenceRow>> {
        let mut al = base.clone();
        al.seed = replication_seed(seed, rep);
        let mut sim = source.simulator(cfg, al.seed)?;
        match run(&al, &source.input_model, &mut *sim) {
            Ok(state) => {
                log::info!("replication {rep}: final pf {:e}", state.final_pf().unwrap_or(f64::NAN));
                write_state(dir, rep, &state)
            }
            Err(e) => {
                write_state(dir, rep, &e.state)?;
                Err(anyhow!(e).context(format!("replication {rep}")))
            }
        }
    };
    let results = in_parallel(cfg.replications, cfg.jobs, one);
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    let summary = summarize(&runs, &cfg.checkpoints)?;
    io::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates `f(0..n)` on up to `jobs` threads, results in index order.
pub fn in_parallel<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(v);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|v| v.expect("every index ran")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub pf: f64,
    pub cov: Option<f64>,
    pub beta: f64,
    pub n_samples: usize,
    pub estimator: String,
    pub zero_failures: bool,
}

impl From<PfEstimate> for EstimateReport {
    fn from(e: PfEstimate) -> Self {
        let estimator = serde_json::to_value(e.estimator).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        Self { pf: e.pf, cov: e.cov, beta: e.beta(), n_samples: e.n_samples, estimator, zero_failures: e.zero_failures() }
    }
}

/// Crude Monte Carlo of the testbed's indicator.
pub fn mcs(cfg: &RunConfig) -> Result<EstimateReport> {
    cfg.validate("mcs")?;
    io::ensure_dir(&cfg.output_dir)?;
    let t = cfg.testbed.context("mcs needs a testbed")?;
    let n = cfg.n_samples.unwrap_or(1_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed()?);
    let est = mcs_indicator(&mut *t.simulator(cfg.i_lim), &cfg.input_model()?, n, &mut rng)?;
    let report = EstimateReport::from(est);
    io::write_json(&cfg.output_dir.join("mcs.json"), &report)?;
    Ok(report)
}

/// Conditional estimate of `mean ŝ` over `sample`, in chunks.
pub fn conditional_estimate(model: &SpceModel, sample: &DMatrix<f64>) -> Result<PfEstimate> {
    const CHUNK: usize = 8192;
    let mut s = Vec::with_capacity(sample.nrows());
    let mut start = 0;
    while start < sample.nrows() {
        let len = CHUNK.min(sample.nrows() - start);
        s.extend(model.conditional_failure_prob_batch(&sample.rows(start, len).into_owned())?);
        start += len;
    }
    Ok(PfEstimate::from_s_values(&s)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFitReport {
    pub n: usize,
    pub estimate: EstimateReport,
    pub diagnostics: FitDiagnostics,
}

/// One Latin hypercube design, one fit, one conditional estimate.
pub fn static_fit(cfg: &RunConfig) -> Result<StaticFitReport> {
    cfg.validate("static-fit")?;
    let dir = &cfg.output_dir;
    io::ensure_dir(dir)?;
    let al = cfg.al_config()?;
    let t = cfg.testbed.context("static-fit needs a testbed")?;
    let im = cfg.input_model()?;
    let n = cfg.n_samples.unwrap_or(al.n_max);
    let mut rng = ChaCha8Rng::seed_from_u64(al.seed);
    let (x, y) = static_design(&im, &mut *t.simulator(cfg.i_lim), n, &mut rng)?;
    let mut train = al.train.clone();
    train.seed ^= al.seed;
    let fitted = fit_mle(&im, &x, &y, &train)?;
    let sample = im.sample(al.n_mcs, &mut rng);
    let est = conditional_estimate(&fitted.model, &sample)?;
    io::write_table(&dir.join("design.csv"), &x, Some(&y))?;
    io::write_model(&dir.join("model.json"), &fitted.model)?;
    let report = StaticFitReport { n, estimate: est.into(), diagnostics: fitted.diagnostics };
    io::write_json(&dir.join("static_fit.json"), &report)?;
    Ok(report)
}

/// Fits an emulator to a dataset file.
pub fn fit(cfg: &RunConfig) -> Result<FitDiagnostics> {
    cfg.validate("fit")?;
    let dir = &cfg.output_dir;
    io::ensure_dir(dir)?;
    let source = Source::load(cfg)?;
    let (x, y) = source.dataset.as_ref().context("fit needs a dataset")?;
    let al = cfg.al_config()?;
    let mut train = al.train.clone();
    train.seed ^= al.seed;
    let fitted = fit_mle(&source.input_model, x, y, &train)?;
    io::write_model(&dir.join("model.json"), &fitted.model)?;
    io::write_json(&dir.join("fit.json"), &fitted.diagnostics)?;
    Ok(fitted.diagnostics)
}

/// Writes `x_1..x_M, s, beta` for every input row of `points`.
pub fn eval_s(model: &Path, points: &Path, output: &Path) -> Result<Vec<f64>> {
    let model = io::read_model(model)?;
    let t = io::read_table(points)?;
    if t.x.ncols() != model.input_model().dim() {
        bail!("points have {} inputs, model expects {}", t.x.ncols(), model.input_model().dim());
    }
    let s = model.conditional_failure_prob_batch(&t.x)?;
    let mut w = csv::Writer::from_path(output).with_context(|| format!("creating {}", output.display()))?;
    let mut header: Vec<String> = (1..=t.x.ncols()).map(|j| format!("x_{j}")).collect();
    header.extend(["s".to_string(), "beta".to_string()]);
    w.write_record(&header)?;
    for (i, &si) in s.iter().enumerate() {
        let mut rec: Vec<String> = t.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(si.to_string());
        rec.push(reliability_index(si).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRequest {
    pub dataset: PathBuf,
    /// 1-based input column used as the window abscissa
    pub column: usize,
    pub delta: f64,
    pub alphas: Vec<f64>,
    pub queries: Vec<f64>,
    pub output: PathBuf,
}

/// Moving-window mean, variance and quantiles of `y` along one input.
pub fn dataset_stats(req: &StatsRequest) -> Result<()> {
    let t = io::read_table(&req.dataset)?;
    let y = t.y.with_context(|| format!("{}: dataset needs a y column", req.dataset.display()))?;
    if req.column == 0 || req.column > t.x.ncols() {
        bail!("column must lie in 1..={}", t.x.ncols());
    }
    let u: Vec<f64> = t.x.column(req.column - 1).iter().copied().collect();
    let mut w = csv::Writer::from_path(&req.output).with_context(|| format!("creating {}", req.output.display()))?;
    let mut header = vec!["u".to_string(), "n".into(), "mean".into(), "variance".into()];
    header.extend(req.alphas.iter().map(|a| format!("q_{a}")));
    w.write_record(&header)?;
    for &q in &req.queries {
        let st = moving_window_stats(&u, &y, q, req.delta, &req.alphas)?;
        let mut rec = vec![q.to_string(), st.n.to_string(), st.mean.to_string(), st.variance.to_string()];
        rec.extend(st.quantiles.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
