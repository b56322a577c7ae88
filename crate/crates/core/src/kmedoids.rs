//! Weighted k-medoids (eager FasterPAM swaps) used to spread enrichment
//! batches over the regions with high learning score.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoids {
    /// point indices of the medoids
    pub medoids: Vec<usize>,
    /// medoid slot (index into `medoids`) of every point
    pub assignment: Vec<usize>,
    /// `Σ_i w_i d(x_i, nearest medoid)`
    pub cost: f64,
    pub passes: usize,
}

/// Column-major coordinates, so distances from one point to all others
/// run as contiguous loops.
struct Points {
    cols: Vec<Vec<f64>>,
    n: usize,
}

impl Points {
    fn new(x: &DMatrix<f64>) -> Self {
        let cols = (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect();
        Self { cols, n: x.nrows() }
    }

    #[cfg(test)]
    fn dist(&self, a: usize, b: usize) -> f64 {
        self.cols.iter().map(|c| (c[a] - c[b]) * (c[a] - c[b])).sum::<f64>().sqrt()
    }

    /// Squared distances from point `c` to every point.
    fn dist2_from(&self, c: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for col in &self.cols {
            let x = col[c];
            for (o, v) in out.iter_mut().zip(col) {
                let d = v - x;
                *o += d * d;
            }
        }
    }
}

/// Picks `k` distinct seeds, each with probability proportional to
/// `w_i·D(x_i)²` (D: distance to the nearest seed so far). Zero total mass
/// falls back to the farthest unselected point.
fn seed<R: Rng + ?Sized>(pts: &Points, w: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let n = w.len();
    let mut chosen = vec![false; n];
    let mut medoids = Vec::with_capacity(k);
    let mut near = vec![f64::INFINITY; n];
    let mut buf = vec![0.0; n];
    let pick = |mass: &dyn Fn(usize) -> f64, chosen: &[bool], rng: &mut R| -> Option<usize> {
        let total: f64 = (0..n).filter(|&i| !chosen[i]).map(mass).sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        let mut t = rng.random::<f64>() * total;
        let mut last = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let v = mass(i);
            if v > 0.0 {
                last = Some(i);
                if t < v {
                    return Some(i);
                }
                t -= v;
            }
        }
        last
    };
    while medoids.len() < k {
        let next = if medoids.is_empty() {
            pick(&|i| w[i], &chosen, rng).unwrap_or_else(|| rng.random_range(0..n))
        } else {
            pick(&|i| w[i] * near[i] * near[i], &chosen, rng).unwrap_or_else(|| {
                (0..n).filter(|&i| !chosen[i]).fold(usize::MAX, |b, i| if b == usize::MAX || near[i] > near[b] { i } else { b })
            })
        };
        chosen[next] = true;
        medoids.push(next);
        pts.dist2_from(next, &mut buf);
        for (v, d2) in near.iter_mut().zip(&buf) {
            *v = v.min(d2.sqrt());
        }
    }
    medoids
}

struct Nearest {
    slot: Vec<usize>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn nearest_two(pts: &Points, medoids: &[usize]) -> Nearest {
    let n = pts.n;
    let mut slot = vec![0; n];
    let mut d1 = vec![f64::INFINITY; n];
    let mut d2 = vec![f64::INFINITY; n];
    let mut buf = vec![0.0; n];
    for (s, &m) in medoids.iter().enumerate() {
        pts.dist2_from(m, &mut buf);
        for i in 0..n {
            let d = buf[i].sqrt();
            if d < d1[i] {
                d2[i] = d1[i];
                d1[i] = d;
                slot[i] = s;
            } else if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    Nearest { slot, d1, d2 }
}

/// Weighted k-medoids on the rows of `x` with Euclidean distance.
pub fn weighted_kmedoids<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    weights: &[f64],
    k: usize,
    max_passes: usize,
    rng: &mut R,
) -> Result<KMedoids> {
    let n = x.nrows();
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewCandidates { needed: k, available: n });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let pts = Points::new(x);
    let mut medoids = seed(&pts, weights, k, rng);
    let mut is_medoid = vec![false; n];
    medoids.iter().for_each(|&m| is_medoid[m] = true);
    let mut nr = nearest_two(&pts, &medoids);
    let mut removal = vec![0.0; k];
    let recompute_removal = |nr: &Nearest, removal: &mut [f64]| {
        removal.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            if nr.d2[i].is_finite() {
                removal[nr.slot[i]] += weights[i] * (nr.d2[i] - nr.d1[i]);
            }
        }
    };
    recompute_removal(&nr, &mut removal);
    let group = |nr: &Nearest| {
        let mut g = vec![Vec::new(); k];
        nr.slot.iter().enumerate().for_each(|(i, &s)| g[s].push(i));
        g
    };
    let mut groups = group(&nr);
    let mut delta = vec![0.0; k];
    let mut buf = vec![0.0; n];
    // eager swapping over the candidates in cyclic order; stop once a full
    // cycle since the last swap brings no improvement
    let mut passes = 0;
    let mut since_swap = 0usize;
    let mut c = 0usize;
    while passes < max_passes && since_swap < n {
        if c == 0 {
            passes += 1;
        }
        since_swap += 1;
        if !is_medoid[c] {
            pts.dist2_from(c, &mut buf);
            let (best_slot, gain) = if k == 1 {
                // no second medoid: every point moves to the candidate
                (0, (0..n).map(|o| weights[o] * (buf[o].sqrt() - nr.d1[o])).sum::<f64>())
            } else {
                delta.copy_from_slice(&removal);
                buf.iter_mut().for_each(|v| *v = v.sqrt());
                let mut shared = 0.0;
                // walk cluster by cluster so each slot accumulates in a register
                for (slot, members) in groups.iter().enumerate() {
                    let mut acc = 0.0;
                    for &o in members {
                        let (w, d, d1, d2) = (weights[o], buf[o], nr.d1[o], nr.d2[o]);
                        // o moves to c if closer; losing its medoid then costs at most d2 - d1
                        shared += w * (d - d1).min(0.0);
                        acc += w * (d.max(d1).min(d2) - d2);
                    }
                    delta[slot] += acc;
                }
                let (slot, best) =
                    delta.iter().enumerate().fold((0, f64::INFINITY), |acc, (s, &v)| if v < acc.1 { (s, v) } else { acc });
                (slot, shared + best)
            };
            if gain < -1e-12 * (1.0 + gain.abs()) {
                is_medoid[medoids[best_slot]] = false;
                is_medoid[c] = true;
                medoids[best_slot] = c;
                nr = nearest_two(&pts, &medoids);
                recompute_removal(&nr, &mut removal);
                groups = group(&nr);
                since_swap = 0;
            }
        }
        c = (c + 1) % n;
    }
    let cost = (0..n).map(|i| weights[i] * nr.d1[i]).sum();
    Ok(KMedoids { medoids, assignment: nr.slot, cost, passes })
}

/// Scores at or below this fraction of the maximum count as zero.
pub const ZERO_SCORE_FRACTION: f64 = 1e-12;

/// Selects `k` distinct candidates: clusters by weighted k-medoids with the
/// scores as weights and returns the highest-scoring member of each cluster
/// (ties: lowest index). Zero-score candidates only take part when fewer
/// than `k` candidates have positive score, in which case clustering is
/// unweighted over all candidates.
pub fn select_batch<R: Rng + ?Sized>(
    candidates: &DMatrix<f64>,
    scores: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = candidates.nrows();
    if scores.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: scores.len() });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewCandidates { needed: k, available: n });
    }
    if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidParameter("scores must be finite and non-negative".into()));
    }
    let max = scores.iter().copied().fold(0.0, f64::max);
    let active: Vec<usize> = (0..n).filter(|&i| scores[i] > max * ZERO_SCORE_FRACTION && scores[i] > 0.0).collect();
    let (pool, weights): (Vec<usize>, Vec<f64>) = if active.len() >= k {
        let w = active.iter().map(|&i| scores[i] / max).collect();
        (active, w)
    } else {
        ((0..n).collect(), vec![1.0; n])
    };
    let sub = DMatrix::from_fn(pool.len(), candidates.ncols(), |i, j| candidates[(pool[i], j)]);
    let km = weighted_kmedoids(&sub, &weights, k, 100, rng)?;
    let mut best: Vec<Option<usize>> = vec![None; k];
    for (local, &slot) in km.assignment.iter().enumerate() {
        let i = pool[local];
        let better = match best[slot] {
            None => true,
            Some(b) => scores[i] > scores[b] || (scores[i] == scores[b] && i < b),
        };
        if better {
            best[slot] = Some(i);
        }
    }
    // every medoid belongs to its own cluster, so no slot is empty
    Ok(best.into_iter().map(|b| b.expect("non-empty cluster")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_cost(x: &DMatrix<f64>, w: &[f64], k: usize) -> f64 {
        let pts = Points::new(x);
        let n = x.nrows();
        let mut best = f64::INFINITY;
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            let cost: f64 = (0..n).map(|i| w[i] * combo.iter().map(|&m| pts.dist(i, m)).fold(f64::INFINITY, f64::min)).sum();
            best = best.min(cost);
            let mut j = k;
            loop {
                if j == 0 {
                    return best;
                }
                j -= 1;
                if combo[j] < n - k + j {
                    combo[j] += 1;
                    for l in j + 1..k {
                        combo[l] = combo[l - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn reaches_optimum_on_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let x = DMatrix::from_fn(30, 2, |i, j| {
            let c = centers[i % 3];
            (if j == 0 { c.0 } else { c.1 }) + rng.random::<f64>()
        });
        let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 4) as f64).collect();
        let km = weighted_kmedoids(&x, &w, 3, 100, &mut rng).unwrap();
        assert!((km.cost - brute_force_cost(&x, &w, 3)).abs() < 1e-9);
        for i in 0..30 {
            assert_eq!(km.assignment[i], km.assignment[i % 3]);
        }
    }

    #[test]
    fn heavy_weight_attracts_a_medoid() {
        let x = DMatrix::from_fn(11, 1, |i, _| i as f64);
        let mut w = vec![1e-3; 11];
        w[9] = 100.0;
        let km = weighted_kmedoids(&x, &w, 1, 100, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(km.medoids, vec![9]);
    }

    #[test]
    fn batch_members_are_distinct_and_prefer_high_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(200, 2, |_, _| rng.random::<f64>());
        let scores: Vec<f64> = (0..200).map(|i| x[(i, 0)] * x[(i, 1)]).collect();
        let b = select_batch(&x, &scores, 5, &mut rng).unwrap();
        let mut sorted = b.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        let argmax = (0..200).fold(0, |m, i| if scores[i] > scores[m] { i } else { m });
        assert!(b.contains(&argmax));
    }

    #[test]
    fn single_member_batch_is_the_argmax() {
        let x = DMatrix::from_fn(6, 1, |i, _| i as f64);
        let scores = [0.1, 0.4, 0.9, 0.9, 0.2, 0.0];
        let b = select_batch(&x, &scores, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(b, vec![2]);
    }

    #[test]
    fn mostly_zero_scores_fall_back_to_spread() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let mut scores = vec![0.0; 10];
        scores[4] = 1.0;
        let b = select_batch(&x, &scores, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.contains(&4));
        let equal = vec![0.5; 10];
        let b = select_batch(&x, &equal, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut s = b.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn too_few_candidates() {
        let x = DMatrix::from_fn(3, 1, |i, _| i as f64);
        assert!(matches!(
            select_batch(&x, &[1.0, 2.0, 3.0], 5, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::TooFewCandidates { needed: 5, available: 3 })
        ));
    }
}
