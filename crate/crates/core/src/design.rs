//! Latin hypercube designs mapped through the marginal inverse CDFs.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::distributions::InputModel;

/// Points in the unit hypercube, one per stratum along every axis.
pub fn lhs_unit<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, dim);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..dim {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let jitter: f64 = rng.random();
            out[(i, j)] = (stratum as f64 + jitter) / n as f64;
        }
    }
    out
}

pub fn lhs<R: Rng + ?Sized>(model: &InputModel, n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut unit = lhs_unit(n, model.dim(), rng);
    for (j, m) in model.marginals().iter().enumerate() {
        for i in 0..n {
            // keep away from 0 and 1 so unbounded marginals stay finite
            let p = unit[(i, j)].clamp(1e-12, 1.0 - 1e-12);
            unit[(i, j)] = m.inv_cdf(p);
        }
    }
    unit
}
