use std::f64::consts::PI;

use alspce_core::quadrature::gauss_rule;
use alspce_core::spce::{fit_with_basis, log_likelihood, select_sigma, LikelihoodCache};
use alspce_core::special::norm_cdf;
use alspce_core::testbeds::{toy_input_model, toy_limit_state};
use alspce_core::{
    build_index_set, fit_mle, Basis, InputModel, LatentFamily, Marginal, MultiIndexSet, SpceModel, TrainConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn unit() -> InputModel {
    InputModel::new(vec![Marginal::uniform(0.0, 1.0).unwrap()]).unwrap()
}

/// `Y = c₀ + c₁·U + ε` with no dependence on the input.
fn linear_in_u(c0: f64, c1: f64, sigma: f64) -> SpceModel {
    let set = MultiIndexSet::from_indices(vec![vec![0, 0], vec![0, 1]]).unwrap();
    SpceModel::new(unit(), set, vec![c0, c1], sigma, LatentFamily::Gaussian, 100).unwrap()
}

fn gaussian_pdf(y: f64, mean: f64, var: f64) -> f64 {
    (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn rich_model() -> SpceModel {
    let set = build_index_set(2, 2, 1.0).unwrap();
    SpceModel::new(unit(), set, vec![0.2, 0.8, -0.3, 0.1, 0.25, 0.05], 0.3, LatentFamily::Gaussian, 100).unwrap()
}

#[test]
fn intercept_only_single_point() {
    let set = MultiIndexSet::from_indices(vec![vec![0, 0]]).unwrap();
    let m = SpceModel::new(unit(), set, vec![0.0], 1.0, LatentFamily::Gaussian, 100).unwrap();
    let ll = m.log_likelihood(&DMatrix::from_element(1, 1, 0.5), &[0.0]).unwrap();
    assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
}

#[test]
fn linear_in_u_matches_gaussian_convolution() {
    let (c0, c1, s) = (1.0, 0.5, 0.25);
    let m = linear_in_u(c0, c1, s);
    let var = c1 * c1 + s * s;
    for y in [-0.5, 0.3, 1.0, 1.7, 2.9] {
        let x = DMatrix::from_element(1, 1, 0.4);
        let ll = m.log_likelihood(&x, &[y]).unwrap();
        assert!((ll.exp() - gaussian_pdf(y, c0, var)).abs() < 1e-6);
        assert!((m.conditional_cdf(&[0.4], y).unwrap() - norm_cdf((y - c0) / var.sqrt())).abs() < 1e-6);
    }
    assert!((m.conditional_failure_prob(&[0.1]).unwrap() - norm_cdf(-c0 / var.sqrt())).abs() < 1e-6);
}

#[test]
fn likelihood_is_additive_and_order_free() {
    let m = rich_model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(30, 1, |_, _| rng.random::<f64>());
    let y: Vec<f64> = (0..30).map(|i| m.sample_response(&[x[(i, 0)]], 1, &mut rng).unwrap()[0]).collect();
    let ll = m.log_likelihood(&x, &y).unwrap();
    let x2 = DMatrix::from_fn(60, 1, |i, _| x[(i % 30, 0)]);
    let y2: Vec<f64> = (0..60).map(|i| y[i % 30]).collect();
    assert!((m.log_likelihood(&x2, &y2).unwrap() - 2.0 * ll).abs() < 1e-10 * ll.abs());
    let perm: Vec<usize> = (0..30).map(|i| (i * 7) % 30).collect();
    let xp = DMatrix::from_fn(30, 1, |i, _| x[(perm[i], 0)]);
    let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    assert!((m.log_likelihood(&xp, &yp).unwrap() - ll).abs() < 1e-10 * ll.abs());
}

#[test]
fn free_function_agrees_with_model() {
    let m = rich_model();
    let x = DMatrix::from_fn(5, 1, |i, _| 0.1 + 0.2 * i as f64);
    let y = [0.1, 0.5, -0.2, 0.9, 1.3];
    let xi = unit().to_standard_rows(&x).unwrap();
    let quad = gauss_rule(alspce_core::PolyFamily::Hermite, 100).unwrap();
    let v = log_likelihood(m.basis(), &quad, &xi, &y, m.coeffs(), m.sigma_eps()).unwrap();
    assert!((v - m.log_likelihood(&x, &y).unwrap()).abs() < 1e-12);
    let mut bad = y;
    bad[2] = f64::NAN;
    assert!(m.log_likelihood(&x, &bad).is_err());
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rich_model();
        let x = DMatrix::from_fn(40, 1, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..2.0)).collect();
        let cache = LikelihoodCache::from_model(&m, &x, &y).unwrap();
        let c: Vec<f64> = (0..m.n_terms()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut g = vec![0.0; c.len()];
        cache.value_and_grad(&c, 0.4, &mut g);
        let h = 1e-6;
        for k in 0..c.len() {
            let (mut cp, mut cm) = (c.clone(), c.clone());
            cp[k] += h;
            cm[k] -= h;
            let fd = (cache.log_likelihood(&cp, 0.4) - cache.log_likelihood(&cm, 0.4)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * g[k].abs().max(1.0), "seed {seed} k {k}: {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn intercept_gradient_at_zero_is_scaled_residual_sum() {
    let m = rich_model();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = DMatrix::from_fn(25, 1, |_, _| rng.random::<f64>());
    // symmetric responses
    let y: Vec<f64> = (0..25).map(|i| if i % 2 == 0 { 0.3 } else { -0.7 } * (1.0 + i as f64 / 25.0)).collect();
    let cache = LikelihoodCache::from_model(&m, &x, &y).unwrap();
    let sigma = 0.6;
    let mut g = vec![0.0; m.n_terms()];
    cache.value_and_grad(&vec![0.0; m.n_terms()], sigma, &mut g);
    // all mixture means vanish, so each point pulls the intercept by y/σ²
    let oracle: f64 = y.iter().map(|v| v / (sigma * sigma)).sum();
    assert!((g[0] - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
}

#[test]
fn fitted_model_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(200, 1, |_, _| rng.random::<f64>());
    let y: Vec<f64> = (0..200).map(|i| 1.0 + 2.0 * x[(i, 0)] + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let set = build_index_set(2, 2, 1.0).unwrap();
    let f = fit_with_basis(&unit(), &x, &y, &set, &[0.25], &TrainConfig::default()).unwrap();
    let cache = LikelihoodCache::from_model(&f.model, &x, &y).unwrap();
    let mut g = vec![0.0; f.model.n_terms()];
    cache.value_and_grad(f.model.coeffs(), f.model.sigma_eps(), &mut g);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-4 * f.model.n_terms() as f64, "{norm}");
}

#[test]
fn recovers_identifiable_parameters_of_linear_in_u_data() {
    let (c0, c1, s) = (1.0, 0.5, 0.1);
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
    let y: Vec<f64> = (0..n)
        .map(|_| c0 + c1 * rng.sample::<f64, _>(StandardNormal) + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let cfg = TrainConfig { degree_max: 2, ..TrainConfig::default() };
    let f = fit_mle(&unit(), &x, &y, &cfg).unwrap();
    // only the total spread c₁² + σ² is identified with a Gaussian latent
    let var = c1 * c1 + s * s;
    let m = &f.model;
    let mean = m.mean(&[0.5]).unwrap();
    let spread: f64 = m.coeffs()[1..].iter().map(|v| v * v).sum::<f64>() + m.sigma_eps().powi(2);
    assert!((mean - c0).abs() < 3.0 * (var / n as f64).sqrt(), "mean {mean}");
    assert!((spread - var).abs() < 3.0 * var * (2.0 / n as f64).sqrt(), "spread {spread}");
}

#[test]
fn noiseless_data_drives_sigma_to_grid_floor() {
    let n = 100;
    let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 + 0.5) / n as f64);
    let y: Vec<f64> = x.iter().copied().collect();
    let cfg = TrainConfig { degree_max: 2, ..TrainConfig::default() };
    let f = fit_mle(&unit(), &x, &y, &cfg).unwrap();
    assert_eq!(f.diagnostics.sigma_index, 0);
    let rms = ((0..n).map(|i| (f.model.mean(&[x[(i, 0)]]).unwrap() - y[i]).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(rms < 1e-3, "{rms}");
}

#[test]
fn too_many_terms_are_flagged() {
    let x = DMatrix::from_fn(5, 1, |i, _| i as f64 / 5.0);
    let y = [0.1, 0.4, 0.2, 0.8, 0.5];
    let set = build_index_set(2, 4, 1.0).unwrap();
    let f = fit_with_basis(&unit(), &x, &y, &set, &[0.1], &TrainConfig::default()).unwrap();
    assert!(f.diagnostics.underdetermined);
    let f = fit_with_basis(&unit(), &x, &y, &build_index_set(2, 1, 1.0).unwrap(), &[0.1], &TrainConfig::default()).unwrap();
    assert!(!f.diagnostics.underdetermined);
}

fn homoskedastic(n: usize, sigma: f64, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
    let y = (0..n).map(|i| 1.0 + 2.0 * x[(i, 0)] + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    (x, y)
}

#[test]
fn sigma_selection() {
    let (x, y) = homoskedastic(400, 0.2, 6);
    // mean terms only: the noise level is then identified
    let set = MultiIndexSet::from_indices(vec![vec![0, 0], vec![1, 0]]).unwrap();
    let cfg = TrainConfig::default();
    let one = select_sigma(&unit(), &x, &y, &set, &[0.7], &cfg).unwrap();
    assert_eq!((one.sigma, one.index), (0.7, 0));
    let grid: Vec<f64> = (0..31).map(|k| 0.1 * 4f64.powf(k as f64 / 30.0)).collect();
    let sel = select_sigma(&unit(), &x, &y, &set, &grid, &cfg).unwrap();
    let step = 4f64.powf(1.0 / 30.0);
    assert!(sel.sigma / 0.2 < step * step && 0.2 / sel.sigma < step * step, "{}", sel.sigma);
    let k = sel.index;
    let dup = [grid[k], grid[k], 5.0];
    assert_eq!(select_sigma(&unit(), &x, &y, &set, &dup, &cfg).unwrap().index, 0);
}

#[test]
fn intercept_only_density_is_gaussian() {
    let set = MultiIndexSet::from_indices(vec![vec![0, 0]]).unwrap();
    let m = SpceModel::new(unit(), set, vec![0.7], 0.4, LatentFamily::Gaussian, 100).unwrap();
    for y in [-1.0, 0.0, 0.7, 2.0] {
        assert!((m.conditional_pdf(&[0.3], y).unwrap() - gaussian_pdf(y, 0.7, 0.16)).abs() < 1e-14);
    }
    let zero = SpceModel::new(unit(), MultiIndexSet::from_indices(vec![vec![0, 0]]).unwrap(), vec![0.0], 0.4, LatentFamily::Gaussian, 100).unwrap();
    for x in [0.0, 0.5, 1.0] {
        assert!((zero.conditional_failure_prob(&[x]).unwrap() - 0.5).abs() < 1e-15);
    }
}

#[test]
fn density_normalizes_and_cdf_is_its_antiderivative() {
    let m = rich_model();
    for x in [0.05, 0.5, 0.95] {
        let (a, b, k) = (-8.0, 8.0, 16_000);
        let h = (b - a) / k as f64;
        let mut total = 0.0;
        let mut prev = m.conditional_cdf(&[x], a).unwrap();
        for i in 0..k {
            let lo = a + i as f64 * h;
            let mid = m.conditional_pdf(&[x], lo + 0.5 * h).unwrap();
            let (pl, pr) = (m.conditional_pdf(&[x], lo).unwrap(), m.conditional_pdf(&[x], lo + h).unwrap());
            let piece = h * (pl + 4.0 * mid + pr) / 6.0;
            total += piece;
            let next = m.conditional_cdf(&[x], lo + h).unwrap();
            assert!(next >= prev);
            assert!((next - prev - piece).abs() < 1e-9);
            prev = next;
        }
        assert!((total - 1.0).abs() < 1e-6);
        assert!(m.conditional_cdf(&[x], -50.0).unwrap() < 1e-12);
        assert!(m.conditional_cdf(&[x], 50.0).unwrap() > 1.0 - 1e-12);
    }
}

/// Largest gap between an empirical CDF and a reference CDF.
fn ks_distance(mut v: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = cdf(y);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn response_samples_follow_the_emulator_law() {
    let m = rich_model();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let draws = m.sample_response(&[0.3], 10_000, &mut rng).unwrap();
    assert!(ks_distance(draws, |y| m.conditional_cdf(&[0.3], y).unwrap()) < 0.02);
    let again = m.sample_response(&[0.3], 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(again, m.sample_response(&[0.3], 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap());

    let set = MultiIndexSet::from_indices(vec![vec![0, 0]]).unwrap();
    let flat = SpceModel::new(unit(), set, vec![1.5], 0.2, LatentFamily::Gaussian, 100).unwrap();
    let d = flat.sample_response(&[0.5], 10_000, &mut rng).unwrap();
    let mean = d.iter().sum::<f64>() / 1e4;
    assert!((mean - 1.5).abs() < 3.0 * 0.2 / 100.0);
}

#[test]
fn failure_probability_matches_sampled_fraction() {
    let m = rich_model();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 20_000;
    for _ in 0..20 {
        let x = rng.random::<f64>();
        let s = m.conditional_failure_prob(&[x]).unwrap();
        assert!((0.0..=1.0).contains(&s));
        let frac = m.sample_response(&[x], n, &mut rng).unwrap().iter().filter(|&&v| v <= 0.0).count() as f64 / n as f64;
        // 4σ over 20 points
        assert!((frac - s).abs() < 4.0 * (s * (1.0 - s) / n as f64).sqrt() + 1e-12, "x {x}: {frac} vs {s}");
    }
}

fn toy_data(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = alspce_core::design::lhs(&toy_input_model(), n, &mut rng);
    let y = (0..n).map(|i| toy_limit_state(x[(i, 0)], &mut rng)).collect();
    (x, y)
}

#[test]
fn quadrature_size_barely_moves_trained_s() {
    let (x, y) = toy_data(300, 3);
    let f = fit_mle(&toy_input_model(), &x, &y, &TrainConfig::default()).unwrap();
    let coarse = f.model.with_n_quad(50).unwrap();
    for k in 0..=50 {
        let x = 2.0 * PI * k as f64 / 50.0;
        let d = (f.model.conditional_failure_prob(&[x]).unwrap() - coarse.conditional_failure_prob(&[x]).unwrap()).abs();
        assert!(d < 1e-4, "x {x}: {d}");
    }
}

#[test]
fn model_json_round_trip_is_exact() {
    let m = rich_model();
    let text = serde_json::to_string(&m).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    assert_eq!(keys, ["coeffs", "index_set", "input_model", "latent_family", "n_quad", "sigma_eps"]);
    let back: SpceModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.coeffs().iter().map(|c| c.to_bits()).collect::<Vec<_>>(), m.coeffs().iter().map(|c| c.to_bits()).collect::<Vec<_>>());
    let mut bad = v.clone();
    bad["extra"] = serde_json::json!(1);
    assert!(serde_json::from_value::<SpceModel>(bad).is_err());
}

#[test]
fn basis_families_follow_the_inputs() {
    let set = build_index_set(3, 1, 1.0).unwrap();
    let b = Basis::new(set, &[alspce_core::PolyFamily::Legendre, alspce_core::PolyFamily::Hermite], LatentFamily::Uniform).unwrap();
    assert_eq!(b.input_dim(), 2);
    assert_eq!(b.len(), 4);
}
