//! Quasi-Newton minimizer with a backtracking Armijo line search.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// stop once the largest gradient component drops below this
    pub gtol: f64,
    /// stop after five successive steps with relative decrease below this
    pub ftol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iter: 500, gtol: 1e-8, ftol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the objective and writes its gradient.
/// `h0_inv` is an optional initial inverse-Hessian approximation; without
/// one the identity is rescaled after the first step.
pub fn bfgs<F>(mut f: F, x0: &[f64], h0_inv: Option<DMatrix<f64>>, opts: OptimOptions) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let identity = |n: usize| -> Vec<f64> {
        let mut h = vec![0.0; n * n];
        for k in 0..n {
            h[k * n + k] = 1.0;
        }
        h
    };
    let has_h0 = h0_inv.is_some();
    let mut h: Vec<f64> = match h0_inv {
        Some(m) if m.nrows() == n && m.ncols() == n => (0..n * n).map(|k| m[(k / n, k % n)]).collect(),
        _ => identity(n),
    };
    let mut scaled = has_h0;
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut flat = 0usize;
    let mut iterations = 0;

    if !fx.is_finite() {
        return OptimResult { grad_inf: inf_norm(&g), x, f: fx, iterations, converged: false };
    }

    while iterations < opts.max_iter {
        let gi = inf_norm(&g);
        if gi < opts.gtol {
            return OptimResult { x, f: fx, grad_inf: gi, iterations, converged: true };
        }
        iterations += 1;
        for r in 0..n {
            d[r] = -dot(&h[r * n..(r + 1) * n], &g);
        }
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // lost positive definiteness: restart from steepest descent
            h = identity(n);
            scaled = false;
            for r in 0..n {
                d[r] = -g[r];
            }
            slope = -dot(&g, &g);
        }
        let mut t = 1.0;
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..n {
                x_new[k] = x[k] + t * d[k];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            let gi = inf_norm(&g);
            // no decrease representable: treat as stationary if nearly so
            return OptimResult { x, f: fx, grad_inf: gi, iterations, converged: gi < 1e3 * opts.gtol };
        }
        let s: Vec<f64> = (0..n).map(|k| x_new[k] - x[k]).collect();
        let yv: Vec<f64> = (0..n).map(|k| g_new[k] - g[k]).collect();
        let sy = dot(&s, &yv);
        if !scaled && sy > 0.0 {
            let yy = dot(&yv, &yv);
            let gamma = sy / yy;
            h.iter_mut().for_each(|v| *v *= gamma);
            scaled = true;
        }
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            let rho = 1.0 / sy;
            for r in 0..n {
                hy[r] = dot(&h[r * n..(r + 1) * n], &yv);
            }
            let yhy = dot(&yv, &hy);
            let coef = rho * rho * yhy + rho;
            for r in 0..n {
                for c in 0..n {
                    h[r * n + c] += coef * s[r] * s[c] - rho * (hy[r] * s[c] + s[r] * hy[c]);
                }
            }
        }
        let rel = (fx - f_new).abs() / (1.0 + fx.abs());
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if rel < opts.ftol {
            flat += 1;
            if flat >= 5 {
                let gi = inf_norm(&g);
                return OptimResult { x, f: fx, grad_inf: gi, iterations, converged: gi < 1e3 * opts.gtol };
            }
        } else {
            flat = 0;
        }
    }
    let gi = inf_norm(&g);
    OptimResult { x, f: fx, grad_inf: gi, iterations, converged: gi < opts.gtol }
}
