//! Serving simulator responses from a stored dataset, plus the windowed
//! statistics used to summarize such data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use super::StochasticSimulator;
use crate::error::{Error, Result, SimError};

/// Each query consumes the nearest unused stored point within `radius`.
#[derive(Debug, Clone)]
pub struct DatasetSimulator {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    used: Vec<bool>,
    radius: f64,
}

impl DatasetSimulator {
    pub fn new(x: &DMatrix<f64>, y: &[f64], radius: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter("radius must be non-negative".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        let dim = x.ncols();
        let mut flat = Vec::with_capacity(x.len());
        for i in 0..x.nrows() {
            flat.extend(x.row(i).iter());
        }
        Ok(Self { dim, x: flat, y: y.to_vec(), used: vec![false; y.len()], radius })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.used.iter().filter(|u| !**u).count()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

impl StochasticSimulator for DatasetSimulator {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&mut self, x: &[f64], rng: &mut dyn RngCore) -> core::result::Result<f64, SimError> {
        self.evaluate_realized(x, rng).map(|(_, y)| y)
    }

    fn evaluate_realized(&mut self, x: &[f64], rng: &mut dyn RngCore) -> core::result::Result<(Vec<f64>, f64), SimError> {
        super::check_dim(self.dim, x)?;
        let mut best = f64::INFINITY;
        let mut ties: Vec<usize> = Vec::new();
        for i in 0..self.y.len() {
            if self.used[i] {
                continue;
            }
            let d = self.point(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < best {
                best = d;
                ties.clear();
                ties.push(i);
            } else if d == best {
                ties.push(i);
            }
        }
        if ties.is_empty() || best > self.radius {
            return Err(SimError::NoPointInRadius { query: x.to_vec(), radius: self.radius });
        }
        let pick = if ties.len() == 1 { ties[0] } else { ties[rng.random_range(0..ties.len())] };
        self.used[pick] = true;
        Ok((self.point(pick).to_vec(), self.y[pick]))
    }
}

/// The 0.1% quantile of pairwise Euclidean distances. Exact up to two
/// million pairs, estimated from a million random pairs beyond that.
pub fn default_radius<R: Rng + ?Sized>(x: &DMatrix<f64>, rng: &mut R) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two points".into()));
    }
    let dist = |a: usize, b: usize| (x.row(a) - x.row(b)).norm();
    let pairs = n * (n - 1) / 2;
    let mut d: Vec<f64> = if pairs <= 2_000_000 {
        let mut v = Vec::with_capacity(pairs);
        for a in 0..n {
            for b in a + 1..n {
                v.push(dist(a, b));
            }
        }
        v
    } else {
        (0..1_000_000)
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                dist(a, b)
            })
            .collect()
    };
    let k = ((0.001 * d.len() as f64).floor() as usize).min(d.len() - 1);
    let (_, v, _) = d.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    Ok(*v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub n: usize,
    pub mean: f64,
    /// unbiased (denominator `n − 1`)
    pub variance: f64,
    pub quantiles: Vec<f64>,
}

/// Statistics of the responses whose abscissa lies in `[u₀ − Δ, u₀ + Δ]`.
/// The `α` quantile is the `⌊α·N_w⌋`-th order statistic (1-based, clamped
/// to `[1, N_w]`).
pub fn moving_window_stats(u: &[f64], y: &[f64], u_query: f64, delta: f64, alphas: &[f64]) -> Result<WindowStats> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: y.len() });
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter("window half-width must be non-negative".into()));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidParameter("quantile levels must lie in (0, 1]".into()));
    }
    let mut w: Vec<f64> = u.iter().zip(y).filter(|(ui, _)| (**ui - u_query).abs() <= delta).map(|(_, yi)| *yi).collect();
    let n = w.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("window around {u_query} holds {n} point(s), need at least 2")));
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    let variance = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    w.sort_by(|a, b| a.total_cmp(b));
    let quantiles = alphas
        .iter()
        .map(|a| {
            let idx = ((a * n as f64).floor() as usize).clamp(1, n);
            w[idx - 1]
        })
        .collect();
    Ok(WindowStats { n, mean, variance, quantiles })
}
