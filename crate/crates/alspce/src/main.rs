use std::path::PathBuf;
use std::process::ExitCode;

use alspce::commands::{self, StatsRequest};
use alspce::{RunConfig, Testbed};
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alspce", version, about = "Active-learning reliability analysis with stochastic polynomial chaos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Active-learning campaign over one or more replications
    AlRun(RunArgs),
    /// Crude Monte Carlo estimate of a testbed's failure probability
    Mcs(RunArgs),
    /// Emulator on a single Latin hypercube design
    StaticFit(RunArgs),
    /// Fit an emulator to a dataset
    Fit(RunArgs),
    /// Conditional failure probability of a saved emulator
    EvalS(EvalArgs),
    /// Moving-window statistics of a dataset
    DatasetStats(StatsArgs),
}

/// Flags override values read from `--config`.
#[derive(Args)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    testbed: Option<Testbed>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    /// worker threads for replications
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
    /// Monte Carlo size (mcs) or design size (static-fit)
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_candidates: Option<usize>,
    #[arg(long)]
    n_mcs: Option<usize>,
    #[arg(long)]
    n_ensemble: Option<usize>,
    #[arg(long)]
    degree_max: Option<u32>,
    #[arg(long)]
    i_lim: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        c.seed = Some(self.seed);
        if self.testbed.is_some() {
            c.testbed = self.testbed;
            c.dataset = None;
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset;
            c.testbed = None;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(output_dir, replications, jobs, checkpoints);
        c.n_samples = self.n_samples.or(c.n_samples);
        c.i_lim = self.i_lim.or(c.i_lim);
        c.radius = self.radius.or(c.radius);
        let mut al = c.al_config()?;
        macro_rules! set_al {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { al.$f = v; })* };
        }
        set_al!(n_init, n_max, batch_size, n_candidates, n_mcs, n_ensemble);
        if let Some(d) = self.degree_max {
            al.train.degree_max = d;
        }
        c.al = Some(al);
        Ok(c)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// model JSON written by al-run, static-fit or fit
    #[arg(long)]
    model: PathBuf,
    /// CSV with columns x_1..x_M
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// input column (1-based) used as window abscissa
    #[arg(long, default_value_t = 1)]
    column: usize,
    /// window half-width
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.5,0.95")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    queries: Vec<f64>,
    #[arg(long)]
    output: PathBuf,
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::AlRun(a) => {
            let s = commands::al_run(&a.into_config()?)?;
            for ((n, pf), cov) in s.checkpoints.iter().zip(&s.median_pf).zip(&s.cov) {
                println!("n={n} median_pf={pf:e} cov={cov:.3}");
            }
        }
        Command::Mcs(a) => {
            let r = commands::mcs(&a.into_config()?)?;
            println!("pf={:e} beta={:.4} n={}", r.pf, r.beta, r.n_samples);
        }
        Command::StaticFit(a) => {
            let r = commands::static_fit(&a.into_config()?)?;
            println!("pf={:e} beta={:.4} n={}", r.estimate.pf, r.estimate.beta, r.n);
        }
        Command::Fit(a) => {
            let d = commands::fit(&a.into_config()?)?;
            println!("degree={} q={} terms={} converged={}", d.degree, d.q_norm, d.n_terms, d.converged);
        }
        Command::EvalS(a) => {
            commands::eval_s(&a.model, &a.points, &a.output)?;
        }
        Command::DatasetStats(a) => commands::dataset_stats(&StatsRequest {
            dataset: a.dataset,
            column: a.column,
            delta: a.delta,
            alphas: a.alphas,
            queries: a.queries,
            output: a.output,
        })?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
