//! Campaign summary across replications at fixed design sizes.

use alspce_core::reliability::reliability_index;
use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::io::ConvergenceRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub checkpoints: Vec<usize>,
    pub median_pf: Vec<f64>,
    /// sample standard deviation over mean, across replications
    pub cov: Vec<f64>,
    pub median_beta: Vec<f64>,
    pub estimator: String,
    pub replications: usize,
    /// set when `cov` is zero only because there is a single replication
    pub single_replication: bool,
}

/// Smoothed estimate at design size `n`: the last record with at most `n`
/// points.
pub fn pf_at(rows: &[ConvergenceRow], n: usize) -> Option<f64> {
    rows.iter().take_while(|r| r.n <= n).last().map(|r| r.pf_smoothed)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Sample coefficient of variation; zero for a single value.
pub fn cov(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean.abs()
}

/// Checkpoints above every run's final design size are dropped.
pub fn summarize(runs: &[Vec<ConvergenceRow>], checkpoints: &[usize]) -> Result<Summary> {
    if runs.is_empty() || runs.iter().any(|r| r.is_empty()) {
        bail!("every replication needs at least one record");
    }
    let reach = runs.iter().map(|r| r.last().map_or(0, |x| x.n)).min().unwrap_or(0);
    let first = runs.iter().map(|r| r[0].n).max().unwrap_or(0);
    let mut out = Summary {
        checkpoints: Vec::new(),
        median_pf: Vec::new(),
        cov: Vec::new(),
        median_beta: Vec::new(),
        estimator: "conditional".into(),
        replications: runs.len(),
        single_replication: runs.len() == 1,
    };
    for &c in checkpoints.iter().filter(|&&c| c >= first && c <= reach) {
        let pf: Vec<f64> = runs.iter().map(|r| pf_at(r, c).expect("checkpoint within range")).collect();
        let med = median(&pf);
        out.checkpoints.push(c);
        out.median_pf.push(med);
        out.cov.push(cov(&pf));
        out.median_beta.push(reliability_index(med));
    }
    Ok(out)
}
