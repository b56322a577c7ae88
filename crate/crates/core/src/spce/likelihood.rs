//! Quadrature log-likelihood with analytic gradient and Hessian.
//!
//! For a point `i` the component means are `μ_ij = Σ_d B_id L_jd`, where
//! `B_id` sums the coefficient-weighted input polynomials of latent degree
//! `d` and `L_jd` is the degree-`d` latent polynomial at node `j`. All three
//! quantities only need the per-point `B` and the node table, so one pass
//! costs `O(n·N_Q·n_lat)` on top of the `O(n·|A|)` collapse.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::SpceModel;
use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::special::LN_SQRT_2PI;

/// Data-dependent tables for repeated likelihood evaluation on one dataset
/// with one basis.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    n: usize,
    n_terms: usize,
    n_lat: usize,
    n_nodes: usize,
    /// input part of each basis term, `n × n_terms`
    px: Vec<f64>,
    lat_deg: Vec<usize>,
    /// latent polynomials at the nodes, `n_nodes × n_lat`
    lu: Vec<f64>,
    ln_w: Vec<f64>,
    y: Vec<f64>,
}

struct Scratch {
    b: Vec<f64>,
    a: Vec<f64>,
    e: Vec<f64>,
    g: Vec<f64>,
}

impl LikelihoodCache {
    /// `xi` holds standardized inputs, one row per observation.
    pub fn new(basis: &Basis, xi: &DMatrix<f64>, y: &[f64], quad: &QuadratureRule) -> Result<Self> {
        let m = basis.input_dim();
        if xi.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, got: xi.ncols() });
        }
        let n = xi.nrows();
        let mut px = vec![0.0; n * basis.len()];
        let mut scratch = vec![0.0; basis.scratch_len()];
        let mut row = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                row[j] = xi[(i, j)];
            }
            basis.eval_input_part(&row, &mut scratch, &mut px[i * basis.len()..(i + 1) * basis.len()]);
        }
        Self::from_parts(basis, px, y, quad)
    }

    /// Cache for physical data under the basis and quadrature of `model`.
    pub fn from_model(model: &SpceModel, x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let feats = model.features(x)?;
        Self::from_parts(&model.basis, feats.values, y, &model.quad)
    }

    fn from_parts(basis: &Basis, px: Vec<f64>, y: &[f64], quad: &QuadratureRule) -> Result<Self> {
        let n_terms = basis.len();
        let n = px.len() / n_terms.max(1);
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response data"));
        }
        if px.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis evaluations"));
        }
        let m = basis.input_dim();
        let lat_deg: Vec<usize> = basis.index_set.indices().iter().map(|a| a[m] as usize).collect();
        let n_lat = basis.index_set.max_latent_degree() as usize + 1;
        let fam = basis.families[m];
        // drop nodes whose weight underflowed; they carry no mass
        let mut lu = Vec::new();
        let mut ln_w = Vec::new();
        let mut buf = vec![0.0; n_lat];
        for (&u, &w) in quad.nodes.iter().zip(&quad.weights) {
            if w > 0.0 {
                fam.eval_all(n_lat - 1, u, &mut buf);
                lu.extend_from_slice(&buf);
                ln_w.push(w.ln());
            }
        }
        Ok(Self { n, n_terms, n_lat, n_nodes: ln_w.len(), px, lat_deg, lu, ln_w, y: y.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row `i` of the input-part table.
    pub fn features(&self, i: usize) -> &[f64] {
        &self.px[i * self.n_terms..(i + 1) * self.n_terms]
    }

    /// Latent degree of every basis term.
    pub fn latent_degrees(&self) -> &[usize] {
        &self.lat_deg
    }

    /// Cache restricted to the given observations.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut px = Vec::with_capacity(rows.len() * self.n_terms);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            px.extend_from_slice(self.features(i));
            y.push(self.y[i]);
        }
        Self { n: rows.len(), px, y, ..self.clone_tables() }
    }

    /// Same tables with a transformed response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: y.len() });
        }
        Ok(Self { y, px: self.px.clone(), ..self.clone_tables() })
    }

    fn clone_tables(&self) -> Self {
        Self {
            n: self.n,
            n_terms: self.n_terms,
            n_lat: self.n_lat,
            n_nodes: self.n_nodes,
            px: Vec::new(),
            lat_deg: self.lat_deg.clone(),
            lu: self.lu.clone(),
            ln_w: self.ln_w.clone(),
            y: Vec::new(),
        }
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            b: vec![0.0; self.n_lat],
            a: vec![0.0; self.n_nodes],
            e: vec![0.0; self.n_nodes],
            g: vec![0.0; self.n_lat],
        }
    }

    /// Fills `e_j = y_i − μ_ij` and the posterior node weights `r_j` (in
    /// `s.a`); returns `ln Σ_j w_j exp(−½ e_j²/σ²)`. Terms more than 40 nats
    /// below the largest are dropped; their share is below 1e-17.
    fn point_terms(&self, i: usize, c: &[f64], sigma: f64, s: &mut Scratch) -> f64 {
        s.b.iter_mut().for_each(|v| *v = 0.0);
        for ((&ck, &f), &d) in c.iter().zip(self.features(i)).zip(&self.lat_deg) {
            s.b[d] += ck * f;
        }
        let yi = self.y[i];
        let inv2 = 0.5 / (sigma * sigma);
        let mut amax = f64::NEG_INFINITY;
        for j in 0..self.n_nodes {
            let row = &self.lu[j * self.n_lat..(j + 1) * self.n_lat];
            let mu: f64 = s.b.iter().zip(row).map(|(x, y)| x * y).sum();
            let e = yi - mu;
            let a = self.ln_w[j] - inv2 * e * e;
            s.e[j] = e;
            s.a[j] = a;
            if a > amax {
                amax = a;
            }
        }
        if !amax.is_finite() {
            return amax;
        }
        let mut sum = 0.0;
        for a in s.a.iter_mut() {
            let d = *a - amax;
            *a = if d > -40.0 { d.exp() } else { 0.0 };
            sum += *a;
        }
        let inv = 1.0 / sum;
        s.a.iter_mut().for_each(|r| *r *= inv);
        amax + sum.ln()
    }

    pub fn log_likelihood(&self, c: &[f64], sigma: f64) -> f64 {
        let mut s = self.scratch();
        let base = -(sigma.ln() + LN_SQRT_2PI);
        (0..self.n).map(|i| self.point_terms(i, c, sigma, &mut s) + base).sum()
    }

    /// Per-observation log-likelihood contributions.
    pub fn pointwise(&self, c: &[f64], sigma: f64) -> Vec<f64> {
        let mut s = self.scratch();
        let base = -(sigma.ln() + LN_SQRT_2PI);
        (0..self.n).map(|i| self.point_terms(i, c, sigma, &mut s) + base).collect()
    }

    /// Log-likelihood and its gradient with respect to the coefficients.
    pub fn value_and_grad(&self, c: &[f64], sigma: f64, grad: &mut [f64]) -> f64 {
        let mut s = self.scratch();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let base = -(sigma.ln() + LN_SQRT_2PI);
        let inv_s2 = 1.0 / (sigma * sigma);
        let mut total = 0.0;
        for i in 0..self.n {
            let lse = self.point_terms(i, c, sigma, &mut s);
            total += lse + base;
            self.responsibility_moments(inv_s2, &mut s);
            for ((gk, &f), &d) in grad.iter_mut().zip(self.features(i)).zip(&self.lat_deg) {
                *gk += s.g[d] * f;
            }
        }
        total
    }

    /// `G_d = Σ_j r_j e_j L_jd / σ²`, with `r_j` the posterior node weights.
    fn responsibility_moments(&self, inv_s2: f64, s: &mut Scratch) {
        s.g.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n_nodes {
            let r = s.a[j];
            if r == 0.0 {
                continue;
            }
            let re = r * s.e[j] * inv_s2;
            let row = &self.lu[j * self.n_lat..(j + 1) * self.n_lat];
            for (g, &l) in s.g.iter_mut().zip(row) {
                *g += re * l;
            }
        }
    }

    /// Hessian of the log-likelihood with respect to the coefficients.
    pub fn hessian(&self, c: &[f64], sigma: f64) -> DMatrix<f64> {
        let p = self.n_terms;
        let nl = self.n_lat;
        let mut s = self.scratch();
        let inv_s2 = 1.0 / (sigma * sigma);
        let mut h = vec![0.0; p * p];
        let mut dmat = vec![0.0; nl * nl];
        for i in 0..self.n {
            self.point_terms(i, c, sigma, &mut s);
            self.responsibility_moments(inv_s2, &mut s);
            dmat.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..self.n_nodes {
                let r = s.a[j];
                if r == 0.0 {
                    continue;
                }
                let e = s.e[j];
                let k = r * (e * e * inv_s2 - 1.0) * inv_s2;
                let row = &self.lu[j * nl..(j + 1) * nl];
                for d in 0..nl {
                    let kd = k * row[d];
                    for d2 in d..nl {
                        dmat[d * nl + d2] += kd * row[d2];
                    }
                }
            }
            for d in 0..nl {
                for d2 in d..nl {
                    let v = dmat[d * nl + d2] - s.g[d] * s.g[d2];
                    dmat[d * nl + d2] = v;
                    dmat[d2 * nl + d] = v;
                }
            }
            let f = self.features(i);
            for a in 0..p {
                let fa = f[a];
                if fa == 0.0 {
                    continue;
                }
                let drow = &dmat[self.lat_deg[a] * nl..(self.lat_deg[a] + 1) * nl];
                let hrow = &mut h[a * p..(a + 1) * p];
                for b in a..p {
                    hrow[b] += fa * f[b] * drow[self.lat_deg[b]];
                }
            }
        }
        let mut out = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                out[(a, b)] = h[a * p + b];
                out[(b, a)] = h[a * p + b];
            }
        }
        out
    }
}

/// Quadrature log-likelihood of standardized data `xi`, `y` under
/// coefficients `c` and noise level `sigma`.
pub fn log_likelihood(
    basis: &Basis,
    quad: &QuadratureRule,
    xi: &DMatrix<f64>,
    y: &[f64],
    c: &[f64],
    sigma: f64,
) -> Result<f64> {
    if c.len() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), got: c.len() });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    Ok(LikelihoodCache::new(basis, xi, y, quad)?.log_likelihood(c, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_index_set, LatentFamily, PolyFamily};
    use crate::quadrature::gauss_rule;
    use crate::special::norm_ln_pdf;

    fn setup(p: u32) -> (Basis, QuadratureRule, DMatrix<f64>, Vec<f64>) {
        let set = build_index_set(3, p, 1.0).unwrap();
        let basis = Basis::new(set, &[PolyFamily::Legendre, PolyFamily::Hermite], LatentFamily::Gaussian).unwrap();
        let quad = gauss_rule(PolyFamily::Hermite, 40).unwrap();
        let n = 12;
        let xi = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.5 - 1.0);
        let y: Vec<f64> = (0..n).map(|i| ((i * 5) % 7) as f64 * 0.3 - 0.8).collect();
        (basis, quad, xi, y)
    }

    fn coeffs(n: usize) -> Vec<f64> {
        (0..n).map(|k| 0.4 * ((k as f64) * 1.3).sin()).collect()
    }

    #[test]
    fn no_latent_terms_reduce_to_gaussian_likelihood() {
        let set = crate::basis::MultiIndexSet::from_indices(alloc::vec![alloc::vec![0, 0], alloc::vec![1, 0]]).unwrap();
        let basis = Basis::new(set, &[PolyFamily::Hermite], LatentFamily::Gaussian).unwrap();
        let quad = gauss_rule(PolyFamily::Hermite, 20).unwrap();
        let xi = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 2.0]);
        let y = [0.1, 0.5, 2.2];
        let c = [0.3, 0.9];
        let ll = log_likelihood(&basis, &quad, &xi, &y, &c, 0.4).unwrap();
        let exact: f64 = (0..3).map(|i| norm_ln_pdf((y[i] - 0.3 - 0.9 * xi[(i, 0)]) / 0.4) - 0.4f64.ln()).sum();
        assert!((ll - exact).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (basis, quad, xi, y) = setup(3);
        let cache = LikelihoodCache::new(&basis, &xi, &y, &quad).unwrap();
        let c = coeffs(basis.len());
        let mut g = vec![0.0; c.len()];
        cache.value_and_grad(&c, 0.3, &mut g);
        for k in 0..c.len() {
            let h = 1e-6;
            let mut cp = c.clone();
            cp[k] += h;
            let fp = cache.log_likelihood(&cp, 0.3);
            cp[k] -= 2.0 * h;
            let fm = cache.log_likelihood(&cp, 0.3);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (basis, quad, xi, y) = setup(2);
        let cache = LikelihoodCache::new(&basis, &xi, &y, &quad).unwrap();
        let c = coeffs(basis.len());
        let h = cache.hessian(&c, 0.5);
        let mut gp = vec![0.0; c.len()];
        let mut gm = vec![0.0; c.len()];
        for k in 0..c.len() {
            let d = 1e-5;
            let mut cp = c.clone();
            cp[k] += d;
            cache.value_and_grad(&cp, 0.5, &mut gp);
            cp[k] -= 2.0 * d;
            cache.value_and_grad(&cp, 0.5, &mut gm);
            for l in 0..c.len() {
                let fd = (gp[l] - gm[l]) / (2.0 * d);
                assert!((fd - h[(l, k)]).abs() < 1e-4 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn subset_matches_direct_construction() {
        let (basis, quad, xi, y) = setup(2);
        let cache = LikelihoodCache::new(&basis, &xi, &y, &quad).unwrap();
        let rows = [1usize, 4, 7];
        let sub = cache.subset(&rows);
        let xs = DMatrix::from_fn(3, 2, |i, j| xi[(rows[i], j)]);
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let direct = LikelihoodCache::new(&basis, &xs, &ys, &quad).unwrap();
        let c = coeffs(basis.len());
        assert_eq!(sub.log_likelihood(&c, 0.2), direct.log_likelihood(&c, 0.2));
        let parts: f64 = cache.pointwise(&c, 0.2).iter().sum();
        assert!((parts - cache.log_likelihood(&c, 0.2)).abs() < 1e-10);
    }

    #[test]
    fn rejects_nan_response() {
        let (basis, quad, xi, mut y) = setup(1);
        y[3] = f64::NAN;
        assert!(LikelihoodCache::new(&basis, &xi, &y, &quad).is_err());
    }
}
