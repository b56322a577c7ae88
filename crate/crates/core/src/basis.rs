//! Orthonormal polynomial families, hyperbolic multi-index truncation and
//! design-matrix evaluation in the augmented `(X, U)` space.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyFamily {
    /// Orthonormal w.r.t. the standard Gaussian.
    Hermite,
    /// Orthonormal w.r.t. `U(-1, 1)`.
    Legendre,
}

impl PolyFamily {
    /// Off-diagonal entry `b_n` (n >= 1) of the Jacobi matrix:
    /// `t·ψ_n = b_{n+1}·ψ_{n+1} + b_n·ψ_{n-1}`. Diagonal entries vanish for
    /// both symmetric families.
    #[inline]
    pub fn recurrence_coeff(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            PolyFamily::Hermite => n.sqrt(),
            PolyFamily::Legendre => n / ((2.0 * n - 1.0) * (2.0 * n + 1.0)).sqrt(),
        }
    }

    /// Values of ψ_0..=ψ_{max_degree} at `t`, written into `out`.
    pub fn eval_all(self, max_degree: usize, t: f64, out: &mut [f64]) {
        debug_assert!(out.len() > max_degree);
        out[0] = 1.0;
        if max_degree == 0 {
            return;
        }
        out[1] = t / self.recurrence_coeff(1);
        for n in 1..max_degree {
            out[n + 1] = (t * out[n] - self.recurrence_coeff(n) * out[n - 1]) / self.recurrence_coeff(n + 1);
        }
    }
}

/// Orthonormal polynomial of the given family and degree at `t`.
pub fn univariate_poly(family: PolyFamily, degree: usize, t: f64) -> f64 {
    let mut buf = vec![0.0; degree + 1];
    family.eval_all(degree, t, &mut buf);
    buf[degree]
}

/// Distribution of the artificial latent variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentFamily {
    #[default]
    Gaussian,
    /// Uniform on `(-1, 1)`.
    Uniform,
}

impl LatentFamily {
    pub fn poly_family(self) -> PolyFamily {
        match self {
            LatentFamily::Gaussian => PolyFamily::Hermite,
            LatentFamily::Uniform => PolyFamily::Legendre,
        }
    }
}

/// Truncation parameters a set was built with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub max_degree: u32,
    pub q_norm: f64,
}

/// Graded-lexicographic multi-index set. The last coordinate of every index
/// is the latent-variable degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u32>>", into = "Vec<Vec<u32>>")]
pub struct MultiIndexSet {
    indices: Vec<Vec<u32>>,
    truncation: Option<Truncation>,
}

fn total(a: &[u32]) -> u32 {
    a.iter().sum()
}

fn graded_lex(a: &[u32], b: &[u32]) -> Ordering {
    total(a).cmp(&total(b)).then_with(|| b.cmp(a))
}

fn q_norm(a: &[u32], q: f64) -> f64 {
    if q == 1.0 {
        return total(a) as f64;
    }
    let s: f64 = a.iter().filter(|&&v| v > 0).map(|&v| (v as f64).powf(q)).sum();
    s.powf(1.0 / q)
}

fn enumerate(dim: usize, budget: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() == dim {
        out.push(prefix.clone());
        return;
    }
    for d in 0..=budget {
        prefix.push(d);
        enumerate(dim, budget - d, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexSet {
    /// Indices of dimension `dim` with q-norm at most `p`.
    pub fn hyperbolic(dim: usize, p: u32, q: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("index dimension must be >= 1".into()));
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidParameter("q-norm must lie in (0, 1]".into()));
        }
        let mut all = Vec::new();
        enumerate(dim, p, &mut Vec::with_capacity(dim), &mut all);
        let tol = 1e-10 * (1.0 + p as f64);
        let mut indices: Vec<Vec<u32>> = all.into_iter().filter(|a| q_norm(a, q) <= p as f64 + tol).collect();
        indices.sort_by(|a, b| graded_lex(a, b));
        Ok(Self { indices, truncation: Some(Truncation { max_degree: p, q_norm: q }) })
    }

    pub fn from_indices(mut indices: Vec<Vec<u32>>) -> Result<Self> {
        let dim = indices.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || indices.iter().any(|a| a.len() != dim) {
            return Err(Error::InvalidParameter("multi-indices must share a nonzero length".into()));
        }
        indices.sort_by(|a, b| graded_lex(a, b));
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate multi-index".into()));
        }
        if indices[0].iter().any(|&v| v != 0) {
            return Err(Error::InvalidParameter("index set must contain the zero index".into()));
        }
        Ok(Self { indices, truncation: None })
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Length of each index (input dimension + 1).
    pub fn dim(&self) -> usize {
        self.indices[0].len()
    }

    pub fn truncation(&self) -> Option<Truncation> {
        self.truncation
    }

    /// Largest degree along any single coordinate.
    pub fn max_coordinate_degree(&self) -> u32 {
        self.indices.iter().flat_map(|a| a.iter().copied()).max().unwrap_or(0)
    }

    pub fn max_latent_degree(&self) -> u32 {
        let last = self.dim() - 1;
        self.indices.iter().map(|a| a[last]).max().unwrap_or(0)
    }

    pub fn contains(&self, idx: &[u32]) -> bool {
        self.indices.binary_search_by(|a| graded_lex(a, idx)).is_ok()
    }

    /// Position of `idx` in the graded-lex layout.
    pub fn position(&self, idx: &[u32]) -> Option<usize> {
        self.indices.binary_search_by(|a| graded_lex(a, idx)).ok()
    }
}

impl TryFrom<Vec<Vec<u32>>> for MultiIndexSet {
    type Error = Error;
    fn try_from(v: Vec<Vec<u32>>) -> Result<Self> {
        Self::from_indices(v)
    }
}

impl From<MultiIndexSet> for Vec<Vec<u32>> {
    fn from(s: MultiIndexSet) -> Self {
        s.indices
    }
}

/// Hyperbolic index set in `m` dimensions; see [`MultiIndexSet::hyperbolic`].
pub fn build_index_set(m: usize, p: u32, q: f64) -> Result<MultiIndexSet> {
    MultiIndexSet::hyperbolic(m, p, q)
}

/// Index set paired with the polynomial family of each coordinate
/// (input families followed by the latent family).
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub index_set: MultiIndexSet,
    pub families: Vec<PolyFamily>,
}

impl Basis {
    pub fn new(index_set: MultiIndexSet, input_families: &[PolyFamily], latent: LatentFamily) -> Result<Self> {
        if index_set.dim() != input_families.len() + 1 {
            return Err(Error::DimensionMismatch { expected: input_families.len() + 1, got: index_set.dim() });
        }
        let mut families = input_families.to_vec();
        families.push(latent.poly_family());
        Ok(Self { index_set, families })
    }

    pub fn input_dim(&self) -> usize {
        self.families.len() - 1
    }

    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// Input-only part `Π_{j<M} ψ_{α_j}(ξ_j)` of every basis term, written to
    /// `out` (length `len()`), using `scratch` of length `M·(pmax+1)`.
    pub fn eval_input_part(&self, xi: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let m = self.input_dim();
        let stride = self.index_set.max_coordinate_degree() as usize + 1;
        for j in 0..m {
            self.families[j].eval_all(stride - 1, xi[j], &mut scratch[j * stride..(j + 1) * stride]);
        }
        for (k, a) in self.index_set.indices().iter().enumerate() {
            let mut v = 1.0;
            for j in 0..m {
                if a[j] > 0 {
                    v *= scratch[j * stride + a[j] as usize];
                }
            }
            out[k] = v;
        }
    }

    pub fn scratch_len(&self) -> usize {
        self.input_dim() * (self.index_set.max_coordinate_degree() as usize + 1)
    }
}

/// Matrix with entries `Ψ_{α_k}(ξ_i, u_i)`.
pub fn eval_design_matrix(basis: &Basis, xi: &DMatrix<f64>, u: &[f64]) -> Result<DMatrix<f64>> {
    let m = basis.input_dim();
    if xi.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: xi.ncols() });
    }
    if u.len() != xi.nrows() {
        return Err(Error::DimensionMismatch { expected: xi.nrows(), got: u.len() });
    }
    let n_terms = basis.len();
    let pmax = basis.index_set.max_coordinate_degree() as usize;
    let latent = basis.families[m];
    let mut out = DMatrix::zeros(xi.nrows(), n_terms);
    let mut scratch = vec![0.0; basis.scratch_len()];
    let mut row = vec![0.0; n_terms];
    let mut lat = vec![0.0; pmax + 1];
    let mut x = vec![0.0; m];
    for i in 0..xi.nrows() {
        for j in 0..m {
            x[j] = xi[(i, j)];
        }
        basis.eval_input_part(&x, &mut scratch, &mut row);
        latent.eval_all(pmax, u[i], &mut lat);
        for (k, a) in basis.index_set.indices().iter().enumerate() {
            out[(i, k)] = row[k] * lat[a[m] as usize];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_values() {
        assert_eq!(univariate_poly(PolyFamily::Hermite, 0, 3.7), 1.0);
        assert!(univariate_poly(PolyFamily::Hermite, 2, 1.0).abs() < 1e-15);
        let h2 = |t: f64| (t * t - 1.0) / 2f64.sqrt();
        assert!((univariate_poly(PolyFamily::Hermite, 2, 0.3) - h2(0.3)).abs() < 1e-15);
        assert!((univariate_poly(PolyFamily::Legendre, 1, 1.0) - 3f64.sqrt()).abs() < 1e-15);
        // P2 = (3t²-1)/2 scaled by √5
        let p2 = |t: f64| 5f64.sqrt() * (3.0 * t * t - 1.0) / 2.0;
        assert!((univariate_poly(PolyFamily::Legendre, 2, -0.4) - p2(-0.4)).abs() < 1e-14);
    }

    #[test]
    fn high_degree_legendre_stays_bounded() {
        // |ψ_n| <= √(2n+1) on [-1, 1]
        for k in 0..=200 {
            let t = -1.0 + k as f64 / 100.0;
            let v = univariate_poly(PolyFamily::Legendre, 25, t);
            assert!(v.abs() <= 51f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn index_set_sizes() {
        assert_eq!(build_index_set(2, 2, 1.0).unwrap().len(), 6);
        let s = build_index_set(1, 0, 1.0).unwrap();
        assert_eq!(s.indices(), &[vec![0]]);
        assert_eq!(build_index_set(4, 3, 1.0).unwrap().len(), 35);
    }

    #[test]
    fn hyperbolic_is_filtered_total_degree() {
        let full = build_index_set(3, 3, 1.0).unwrap();
        let hyp = build_index_set(3, 3, 0.7).unwrap();
        let expected: Vec<Vec<u32>> = full
            .indices()
            .iter()
            .filter(|a| {
                let s: f64 = a.iter().map(|&v| (v as f64).powf(0.7)).sum();
                s.powf(1.0 / 0.7) <= 3.0 + 1e-9
            })
            .cloned()
            .collect();
        assert_eq!(hyp.indices(), expected.as_slice());
        assert!(hyp.len() < full.len());
    }

    #[test]
    fn ordering_is_graded_lex() {
        let s = build_index_set(3, 1, 1.0).unwrap();
        assert_eq!(s.indices(), &[vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(s.position(&[0, 1, 0]), Some(2));
    }

    #[test]
    fn from_indices_validates() {
        assert!(MultiIndexSet::from_indices(vec![vec![1, 0]]).is_err());
        assert!(MultiIndexSet::from_indices(vec![vec![0, 0], vec![1, 0], vec![1, 0]]).is_err());
        let s = MultiIndexSet::from_indices(vec![vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(s.indices()[0], vec![0, 0]);
    }

    #[test]
    fn design_matrix_columns() {
        let set = build_index_set(3, 2, 1.0).unwrap();
        let basis = Basis::new(set, &[PolyFamily::Legendre, PolyFamily::Hermite], LatentFamily::Gaussian).unwrap();
        let xi = DMatrix::from_row_slice(3, 2, &[0.1, -0.5, 0.9, 1.2, -0.3, 0.0]);
        let u = [0.4, -1.0, 2.0];
        let psi = eval_design_matrix(&basis, &xi, &u).unwrap();
        for i in 0..3 {
            assert_eq!(psi[(i, 0)], 1.0);
            assert!((psi[(i, 1)] - univariate_poly(PolyFamily::Legendre, 1, xi[(i, 0)])).abs() < 1e-15);
            assert!((psi[(i, 3)] - u[i]).abs() < 1e-15);
        }
        assert!(eval_design_matrix(&basis, &xi, &u[..2]).is_err());
    }

    #[test]
    fn json_is_plain_array() {
        let s = build_index_set(2, 1, 1.0).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        assert_eq!(js, "[[0,0],[1,0],[0,1]]");
        let back: MultiIndexSet = serde_json::from_str(&js).unwrap();
        assert_eq!(back.indices(), s.indices());
    }
}
