use alspce_core::active::{learning_scores, run, static_design, AlConfig};
use alspce_core::design::lhs;
use alspce_core::kmedoids::select_batch;
use alspce_core::testbeds::{
    rs_conditional_s, rs_input_model, toy_conditional_s, toy_input_model, RsSimulator, ToySimulator,
};
use alspce_core::uncertainty::{fisher_information, sample_coefficients};
use alspce_core::{fit_mle, InputModel, Marginal, SpceModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_rs(seed: u64, n_max: usize) -> AlConfig {
    AlConfig { n_init: 20, n_max, n_candidates: 2000, n_mcs: 20_000, n_ensemble: 50, seed, ..AlConfig::default() }
}

#[test]
fn rs_scores_peak_where_failure_mass_concentrates() {
    let im = rs_input_model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = lhs(&im, 20, &mut rng);
    let y: Vec<f64> =
        (0..20).map(|i| alspce_core::testbeds::rs_limit_state(x[(i, 0)], x[(i, 1)], &mut rng)).collect();
    let fit = fit_mle(&im, &x, &y, &Default::default()).unwrap();
    let info = fisher_information(&fit.model, &x, &y).unwrap();
    let e = sample_coefficients(&fit.model, &info, 100, &mut rng).unwrap();
    let cands = im.sample(10_000, &mut rng);
    let scores = learning_scores(&e, &im, &cands).unwrap();
    let best = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    // analytic product s·f_X ranks the candidates independently of the emulator
    let product = |i: usize| {
        let xi = [cands[(i, 0)], cands[(i, 1)]];
        rs_conditional_s(xi[0], xi[1]) * im.joint_pdf(&xi).unwrap()
    };
    let pb = product(best);
    let rank = (0..cands.nrows()).filter(|&i| product(i) > pb).count();
    assert!(rank < cands.nrows() / 20, "argmax ranks {rank} on the analytic product");
    let ratio = cands[(best, 0)] / cands[(best, 1)];
    assert!(ratio > 0.5 && ratio < 2.0, "r/s = {ratio}");
}

#[test]
fn two_blobs_give_one_point_each() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 200;
    let x = DMatrix::from_fn(n, 2, |i, _| if i < n / 2 { 0.0 } else { 10.0 } + rng.random_range(-0.5..0.5));
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
    let batch = select_batch(&x, &scores, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let blobs: Vec<bool> = batch.iter().map(|&i| i < n / 2).collect();
    assert_ne!(blobs[0], blobs[1]);
    // each pick is the best score of its blob, which is what exhaustive
    // assignment to the two blob centres would give
    for &i in &batch {
        let range = if i < n / 2 { 0..n / 2 } else { n / 2..n };
        let top = range.max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        assert_eq!(i, top);
    }
}

#[test]
fn equal_scores_give_distinct_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(300, 2, |_, _| rng.random::<f64>());
    let batch = select_batch(&x, &vec![1.0; 300], 5, &mut rng).unwrap();
    let mut sorted = batch.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 5);
}

#[test]
fn scaling_scores_leaves_the_batch_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(500, 2, |_, _| rng.random::<f64>());
    let scores: Vec<f64> = (0..500).map(|_| rng.random::<f64>().powi(3)).collect();
    let scaled: Vec<f64> = scores.iter().map(|s| s * 2.0 * std::f64::consts::PI).collect();
    let a = select_batch(&x, &scores, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = select_batch(&x, &scaled, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uniform_density_keeps_variance_ranking() {
    let im = InputModel::new(vec![Marginal::uniform(0.0, 2.0).unwrap()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = lhs(&im, 60, &mut rng);
    let y: Vec<f64> = x.iter().map(|&v| v - 1.0 + 0.3 * rng.random_range(-1.0..1.0)).collect();
    let fit = fit_mle(&im, &x, &y, &Default::default()).unwrap();
    let info = fisher_information(&fit.model, &x, &y).unwrap();
    let e = sample_coefficients(&fit.model, &info, 50, &mut rng).unwrap();
    let cands = im.sample(400, &mut rng);
    let scores = learning_scores(&e, &im, &cands).unwrap();
    let var = alspce_core::uncertainty::variance_of_s(&e, &cands).unwrap();
    for (s, v) in scores.iter().zip(&var) {
        assert!((s - 0.5 * v).abs() <= 1e-15 * v.max(1e-300) + 1e-300, "{s} vs {v}");
    }
}

#[test]
fn rs_loop_invariants() {
    let cfg = small_rs(7, 45);
    let st = run(&cfg, &rs_input_model(), &mut RsSimulator).unwrap();
    let iterations = st.history.len() - 1;
    assert_eq!(iterations, 5);
    assert_eq!(st.ed_y.len(), cfg.n_init + cfg.batch_size * iterations);
    let first = st.history[0].mc_checksum;
    assert!(st.history.iter().all(|r| r.mc_checksum == first));
    assert_eq!(st.mc_checksum(), first);
    for w in st.history.windows(2) {
        let ratio = w[1].sigma_eps / w[0].sigma_eps;
        assert!((0.95 * (1.0 - 1e-12)..=1.05 * (1.0 + 1e-12)).contains(&ratio), "ratio {ratio}");
        assert_eq!(w[1].n, w[0].n + cfg.batch_size);
    }
    for r in &st.history[..iterations] {
        assert_eq!(r.batch.len(), cfg.batch_size);
        for a in 0..r.batch.len() {
            for b in a + 1..r.batch.len() {
                assert_ne!(r.batch[a], r.batch[b]);
            }
        }
    }
    let again = run(&cfg, &rs_input_model(), &mut RsSimulator).unwrap();
    assert_eq!(again.history, st.history);
    assert_eq!(again.ed_y, st.ed_y);
}

fn toy_sup(m: &SpceModel) -> f64 {
    (0..200)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / 199.0;
            (m.conditional_failure_prob(&[x]).unwrap() - toy_conditional_s(x)).abs()
        })
        .fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2])
}

#[test]
fn toy_active_design_beats_a_static_design_of_equal_size() {
    let im = toy_input_model();
    let (mut al, mut fixed) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let mut cfg = AlConfig { n_init: 20, n_max: 200, n_candidates: 1000, seed, ..AlConfig::default() };
        cfg.train.degree_max = 10;
        let st = run(&cfg, &im, &mut ToySimulator).unwrap();
        al.push(toy_sup(st.model.as_ref().unwrap()));
        let (x, y) = static_design(&im, &mut ToySimulator, 200, &mut ChaCha8Rng::seed_from_u64(seed + 1000)).unwrap();
        fixed.push(toy_sup(&fit_mle(&im, &x, &y, &cfg.train).unwrap().model));
    }
    assert!(median(al.clone()) < median(fixed.clone()), "active {al:?}, static {fixed:?}");
}
