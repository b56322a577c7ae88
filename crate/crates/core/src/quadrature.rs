//! Gauss quadrature rules for the latent variable (Golub-Welsch).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::basis::PolyFamily;
use crate::error::{Error, Result};

/// Nodes and probability weights (summing to one) for integrals against the
/// reference density of a polynomial family.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub family: PolyFamily,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Contiguous node range whose two dropped tails each carry at most
    /// `tol` of the total weight.
    pub fn significant_range(&self, tol: f64) -> core::ops::Range<usize> {
        let mut lo = 0;
        let mut mass = 0.0;
        while lo < self.len() && mass + self.weights[lo] <= tol {
            mass += self.weights[lo];
            lo += 1;
        }
        let mut hi = self.len();
        mass = 0.0;
        while hi > lo && mass + self.weights[hi - 1] <= tol {
            mass += self.weights[hi - 1];
            hi -= 1;
        }
        lo..hi
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }
}

/// `n`-point Gauss rule. Nodes are the eigenvalues of the symmetric Jacobi
/// matrix. Weights are the squared first eigenvector components; they are
/// evaluated through the equivalent Christoffel identity
/// `w_j = 1 / Σ_k ψ_k(u_j)²`, which keeps full relative precision for the
/// tiny tail weights.
pub fn gauss_rule(family: PolyFamily, n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature needs at least one node".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = family.recurrence_coeff(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    // symmetric families: enforce exact symmetry and a zero middle node
    for k in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - k] - nodes[k]);
        nodes[k] = -m;
        nodes[n - 1 - k] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut buf = vec![0.0; n];
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&u| {
            family.eval_all(n - 1, u, &mut buf);
            1.0 / buf.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(QuadratureRule { family, nodes, weights })
}

/// First-eigenvector-component weights, kept for cross-checking.
pub fn eigenvector_weights(family: PolyFamily, n: usize) -> Vec<(f64, f64)> {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = family.recurrence_coeff(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut out: Vec<(f64, f64)> =
        (0..n).map(|j| (eig.eigenvalues[j], eig.eigenvectors[(0, j)].powi(2))).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
