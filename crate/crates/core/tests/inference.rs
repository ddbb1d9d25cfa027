mod common;

use boxcox_core::inference::*;
use boxcox_core::model::{dichotomize, CoefVector, CompositeDesign, Dataset};
use boxcox_core::probit::{normal_cdf, normal_pdf, sigma_weight};
use boxcox_core::solver::*;
use common::random_instance;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const CHI2_1_95: f64 = 3.841_458_820_694_124;
const CHI2_3_95: f64 = 7.814_727_903_251_179;
const TWO_CHI2_1_95: f64 = 7.682_917_641_388_248;

fn fast_config(seed: u64) -> TestConfig {
    TestConfig {
        mc_draws: 5_000,
        seed,
        thresholds: 9,
        tuning: boxcox_core::tuning::TuningConfig {
            path_len: 20,
            ..Default::default()
        },
        ..TestConfig::default()
    }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

#[test]
fn sensitivity_single_column_of_ones() {
    let x = dmatrix![1.0; 1.0];
    let design = dichotomize(&[0.0, 1.0], &[0.5], &[1.0]).unwrap();
    let coef = CoefVector::zeros(1, 1);
    let order = BlockOrder::new(&[], &[0], 1).unwrap();
    let k = sensitivity_matrix(&design, &x, &coef, &order).unwrap();
    let c = 2.0 / std::f64::consts::PI;
    let expected = dmatrix![c, -c; -c, c];
    assert!((k - expected).amax() < 1e-15);
}

#[test]
fn block_order_layout() {
    let order = BlockOrder::new(&[4, 1], &[9, 2], 3).unwrap();
    assert_eq!(order.columns, vec![4, 1, 2, 9]);
    assert_eq!(order.dim(), 7);
    assert!(BlockOrder::new(&[1], &[1], 2).is_err());
}

#[test]
fn permuting_m_permutes_sensitivity() {
    let (x, _, design) = random_instance(1, 40, 5, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let coef = CoefVector {
        beta: (0..5).map(|_| rng.random_range(-0.5..0.5)).collect(),
        intercepts: vec![-0.4, 0.0, 0.4],
    };
    let a = sensitivity_matrix(&design, &x, &coef, &BlockOrder::new(&[0, 3], &[2], 3).unwrap()).unwrap();
    let b = sensitivity_matrix(&design, &x, &coef, &BlockOrder::new(&[3, 0], &[2], 3).unwrap()).unwrap();
    let perm = [1, 0, 2, 3, 4, 5];
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(a[(perm[i], perm[j])], b[(i, j)]);
        }
    }
}

/// Expected negative composite log-likelihood with label probabilities
/// frozen at `theta0`; its Hessian at `theta0` is the sensitivity matrix.
fn expected_gradient(z: &DMatrix<f64>, w: &[f64], theta0: &[f64], theta: &[f64]) -> Vec<f64> {
    let (n, q) = (z.nrows(), z.ncols());
    let k = w.len();
    let eta = |t: &[f64], i: usize, l: usize| (0..q).map(|c| z[(i, c)] * t[c]).sum::<f64>() - t[q + l];
    let mut g = vec![0.0; q + k];
    for i in 0..n {
        for l in 0..k {
            let p = normal_cdf(eta(theta0, i, l));
            let e = eta(theta, i, l);
            // d/dη of −p log Φ(η) − (1−p) log Φ(−η)
            let d = w[l] * normal_pdf(e) * (-p / normal_cdf(e) + (1.0 - p) / normal_cdf(-e)) / n as f64;
            for c in 0..q {
                g[c] += d * z[(i, c)];
            }
            g[q + l] -= d;
        }
    }
    g
}

#[test]
fn sensitivity_is_hessian_of_expected_objective() {
    let (x, _, design) = random_instance(2, 30, 4, 3);
    let coef = CoefVector {
        beta: vec![0.6, -0.4, 0.2, 0.0],
        intercepts: vec![-0.5, 0.1, 0.7],
    };
    let order = BlockOrder::new(&[1, 0], &[2], 3).unwrap();
    let k_hat = sensitivity_matrix(&design, &x, &coef, &order).unwrap();
    let z = DMatrix::from_fn(30, 3, |i, c| x[(i, order.columns[c])]);
    let theta0: Vec<f64> = order
        .columns
        .iter()
        .map(|&j| coef.beta[j])
        .chain(coef.intercepts.iter().copied())
        .collect();
    let d = theta0.len();
    let h = 1e-5;
    let mut fd = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut up = theta0.clone();
        let mut dn = theta0.clone();
        up[c] += h;
        dn[c] -= h;
        let gu = expected_gradient(&z, design.weights(), &theta0, &up);
        let gd = expected_gradient(&z, design.weights(), &theta0, &dn);
        for r in 0..d {
            fd[(r, c)] = (gu[r] - gd[r]) / (2.0 * h);
        }
    }
    assert!(rel(&k_hat, &fd) < 1e-4, "{}", rel(&k_hat, &fd));
}

#[test]
fn single_layer_variability_equals_sensitivity() {
    let (x, _, design) = random_instance(3, 50, 4, 1);
    let coef = CoefVector {
        beta: vec![0.8, -0.3, 0.0, 0.1],
        intercepts: vec![0.2],
    };
    let order = BlockOrder::new(&[0], &[1, 3], 1).unwrap();
    let k = sensitivity_matrix(&design, &x, &coef, &order).unwrap();
    let v = variability_matrix(&design, &x, &coef, &order).unwrap();
    assert!(rel(&v, &k) < 1e-12);
}

#[test]
fn diagonal_terms_reproduce_sigma_weight() {
    for &t in &[-30.0, -5.0, -1.0, 0.0, 0.5, 3.0, 12.0] {
        let x = dmatrix![0.0; 0.0];
        let design = dichotomize(&[0.0, 1.0], &[0.5], &[1.0]).unwrap();
        let coef = CoefVector {
            beta: vec![0.0],
            intercepts: vec![-t],
        };
        let order = BlockOrder::new(&[], &[], 1).unwrap();
        let v = variability_matrix(&design, &x, &coef, &order).unwrap();
        let s = sigma_weight(t);
        assert!((v[(0, 0)] - s).abs() <= 1e-12 * s, "t = {t}");
    }
}

/// Cov of the composite score of one observation by enumerating the joint
/// label distribution: `ỹ_k = 1{Z ≤ η_k}` for a single `Z ~ N(0, 1)`.
fn brute_force_variability(z: &DMatrix<f64>, w: &[f64], beta: &[f64], b: &[f64]) -> DMatrix<f64> {
    let (n, q) = (z.nrows(), z.ncols());
    let k = b.len();
    assert_eq!(k, 2);
    let d = q + k;
    let mut v: DMatrix<f64> = DMatrix::zeros(d, d);
    for i in 0..n {
        let xb: f64 = (0..q).map(|c| z[(i, c)] * beta[c]).sum();
        let eta = [xb - b[0], xb - b[1]];
        let (p1, p2) = (normal_cdf(eta[0]), normal_cdf(eta[1]));
        let both = normal_cdf(eta[0].min(eta[1]));
        let outcomes = [
            ([1.0, 1.0], both),
            ([1.0, 0.0], p1 - both),
            ([0.0, 1.0], p2 - both),
            ([0.0, 0.0], 1.0 - p1 - p2 + both),
        ];
        for (labels, prob) in outcomes {
            let mut s: DVector<f64> = DVector::zeros(d);
            for l in 0..k {
                let mu = normal_cdf(eta[l]);
                let f = w[l] * normal_pdf(eta[l]) * (labels[l] - mu) / (mu * (1.0 - mu));
                for c in 0..q {
                    s[c] += f * z[(i, c)];
                }
                s[q + l] -= f;
            }
            v += &s * s.transpose() * prob;
        }
    }
    v / n as f64
}

#[test]
fn variability_matches_enumeration() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    for trial in 0..20 {
        let n = 2 + trial % 2;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.5..1.5));
        let y: Vec<f64> = if n == 2 { vec![0.0, 2.0] } else { vec![0.0, 1.0, 2.0] };
        let w0 = rng.random_range(0.2..0.8);
        let design = dichotomize(&y, &[0.5, 1.5], &[w0, 1.0 - w0]).unwrap();
        let lo = rng.random_range(-1.0..0.5);
        let coef = CoefVector {
            beta: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            intercepts: vec![lo, lo + rng.random_range(0.1..1.5)],
        };
        let order = BlockOrder::new(&[1], &[0], 2).unwrap();
        let v = variability_matrix(&design, &x, &coef, &order).unwrap();
        let z = DMatrix::from_fn(n, 2, |i, c| x[(i, order.columns[c])]);
        let beta_z = [coef.beta[1], coef.beta[0]];
        let brute = brute_force_variability(&z, design.weights(), &beta_z, &coef.intercepts);
        assert!((&v - &brute).amax() < 1e-8, "trial {trial}: {}", (&v - &brute).amax());
    }
}

#[test]
fn variability_toy_cross_term() {
    // n = 1 is not a valid design, so duplicate the observation
    let x = dmatrix![1.0; 1.0];
    let design = dichotomize(&[0.0, 2.0], &[0.5, 1.5], &[0.5, 0.5]).unwrap();
    let coef = CoefVector {
        beta: vec![0.0],
        intercepts: vec![-1.0, 1.0],
    };
    let order = BlockOrder::new(&[], &[], 2).unwrap();
    let v = variability_matrix(&design, &x, &coef, &order).unwrap();
    // η = (1, −1): φ(1)φ(−1)/(Φ(1)Φ(−(−1))) with weights 1/2 each
    let cross = 0.25 * normal_pdf(1.0) * normal_pdf(-1.0) / (normal_cdf(1.0) * normal_cdf(1.0));
    assert!((v[(0, 1)] - cross).abs() < 1e-15);
    let z = dmatrix![0.0; 0.0];
    let brute = brute_force_variability(&z, &[0.5, 0.5], &[0.0], &[-1.0, 1.0]);
    assert!((v[(0, 1)] - brute[(1, 2)]).abs() < 1e-12);
}

fn fitted(seed: u64, n: usize, p: usize, k: usize, hyp: &LinearHypothesis) -> (DMatrix<f64>, CompositeDesign, FitResult) {
    let (x, _, design) = random_instance(seed, n, p, k);
    let problem = Problem::new(&x, &design, hyp.indices()).unwrap();
    let fit = fit_unconstrained(&problem, 0.08, &SolverConfig::default(), None).unwrap();
    (x, design, fit)
}

#[test]
fn wald_statistic_properties() {
    let hyp = LinearHypothesis::from_one_based(&[1, 2, 3], dmatrix![1.0, 1.0, 0.0; 0.0, 1.0, -1.0], dvector![0.1, 0.0], 15)
        .unwrap();
    let (x, design, fit) = fitted(5, 120, 15, 5, &hyp);
    let n = 120;
    let plugins = PluginMatrices::at(&design, &x, &fit.coef, &fit.active_set, &hyp).unwrap();
    let tw = wald_statistic(&fit, &hyp, &plugins, n).unwrap();
    assert!(tw > 0.0);

    // Ψ̂ solves are accurate
    let chol = plugins.psi_hat.clone().cholesky().unwrap();
    let v = dvector![0.3, -1.2];
    assert!((&plugins.psi_hat * chol.solve(&v) - &v).amax() <= 1e-8 * v.amax());

    // invariance under (C, t) → (GC, Gt)
    let g = dmatrix![2.0, -1.0; 0.5, 3.0];
    let hyp_g = LinearHypothesis::new(hyp.indices().to_vec(), &g * hyp.c(), &g * hyp.t(), 15).unwrap();
    let plugins_g = PluginMatrices::at(&design, &x, &fit.coef, &fit.active_set, &hyp_g).unwrap();
    let tw_g = wald_statistic(&fit, &hyp_g, &plugins_g, n).unwrap();
    assert!((tw - tw_g).abs() <= 1e-8 * tw, "{tw} vs {tw_g}");

    // t = Cβ̂ gives zero
    let bm = DVector::from_iterator(3, hyp.indices().iter().map(|&j| fit.coef.beta[j]));
    let exact = LinearHypothesis::new(hyp.indices().to_vec(), hyp.c().clone(), hyp.c() * bm, 15).unwrap();
    let plugins_e = PluginMatrices::at(&design, &x, &fit.coef, &fit.active_set, &exact).unwrap();
    assert!(wald_statistic(&fit, &exact, &plugins_e, n).unwrap() < 1e-20);
    assert!(godambe_wald(&fit, &exact, &plugins_e, n).unwrap() < 1e-20);
}

#[test]
fn scalar_wald_reduction() {
    let hyp = LinearHypothesis::from_one_based(&[2], dmatrix![1.0], dvector![-0.5], 10).unwrap();
    let (x, design, fit) = fitted(6, 100, 10, 5, &hyp);
    let plugins = PluginMatrices::at(&design, &x, &fit.coef, &fit.active_set, &hyp).unwrap();
    let psi = plugins.psi_hat[(0, 0)];
    let expected = 100.0 * (fit.coef.beta[1] + 0.5).powi(2) / psi;
    let tw = wald_statistic(&fit, &hyp, &plugins, 100).unwrap();
    assert!((tw - expected).abs() <= 1e-10 * expected);
    let omega = plugins.omega_mm().unwrap();
    assert!((omega[(0, 0)] - psi).abs() <= 1e-12 * psi);
}

#[test]
fn score_vanishes_when_constraint_is_inactive() {
    let probe = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![0.0], 10).unwrap();
    let (x, design, fit_a) = fitted(7, 150, 10, 5, &probe);
    let t = fit_a.coef.beta[0] + fit_a.coef.beta[1];
    let hyp = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![t], 10).unwrap();
    let problem = Problem::new(&x, &design, hyp.indices()).unwrap();
    let config = SolverConfig {
        tol_cmd: 1e-10,
        tol_lla: 1e-9,
        tol_alm: 1e-9,
        ..SolverConfig::default()
    };
    let fit_a = fit_unconstrained(&problem, 0.08, &config, None).unwrap();
    let fit_0 = fit_constrained(&problem, &hyp, 0.08, &config, Some(AlmStart { coef: &fit_a.coef, dual: None })).unwrap();
    assert_eq!(fit_0.active_set, fit_a.active_set);
    let ts = score_statistic(&fit_0, &design, &x, &hyp).unwrap();
    assert!(ts <= 1e-6 * 150.0, "{ts}");
    assert_eq!(lr_statistic(&fit_a, &fit_a, 150), 0.0);
    assert!(lr_statistic(&fit_a, &fit_0, 150) < 1e-6);
}

#[test]
fn statistics_are_nonnegative_and_ordered_fits() {
    let hyp = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![0.5], 12).unwrap();
    let (x, _, design) = random_instance(8, 150, 12, 5);
    let problem = Problem::new(&x, &design, hyp.indices()).unwrap();
    let config = SolverConfig::default();
    let fit_a = fit_unconstrained(&problem, 0.08, &config, None).unwrap();
    let fit_0 = fit_constrained(&problem, &hyp, 0.08, &config, None).unwrap();
    // the constraint can only lower the likelihood
    assert!(fit_a.likelihood >= fit_0.likelihood - 1e-8);
    assert!(lr_statistic(&fit_a, &fit_0, 150) > 0.0);
    assert!(score_statistic(&fit_0, &design, &x, &hyp).unwrap() > 0.0);
    assert!(godambe_score(&fit_0, &design, &x, &hyp).unwrap() > 0.0);
}

#[test]
fn single_layer_collapses_sandwich() {
    let hyp = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0; 1.0, -1.0], dvector![0.0, 2.0], 8).unwrap();
    let (x, design, fit) = fitted(9, 120, 8, 1, &hyp);
    assert_eq!(design.k(), 1);
    let plugins = PluginMatrices::at(&design, &x, &fit.coef, &fit.active_set, &hyp).unwrap();
    assert!((&plugins.psi_hat - &plugins.tau_hat).amax() <= 1e-8 * plugins.psi_hat.amax());
    let tw = wald_statistic(&fit, &hyp, &plugins, 120).unwrap();
    let gw = godambe_wald(&fit, &hyp, &plugins, 120).unwrap();
    assert!((tw - gw).abs() <= 1e-7 * tw);
}

fn quantile_of(a: DMatrix<f64>, draws: usize, seed: u64) -> f64 {
    GenChiSq::sample(&a, draws, seed).unwrap().quantile(0.05).unwrap()
}

#[test]
fn chi_squared_quantiles() {
    let q1 = quantile_of(DMatrix::identity(1, 1), 200_000, 1);
    assert!((q1 / CHI2_1_95 - 1.0).abs() < 0.01, "{q1}");
    let q3 = quantile_of(DMatrix::identity(3, 3), 200_000, 2);
    assert!((q3 / CHI2_3_95 - 1.0).abs() < 0.01, "{q3}");
    let q2 = quantile_of(dmatrix![2.0], 200_000, 3);
    assert!((q2 / TWO_CHI2_1_95 - 1.0).abs() < 0.01, "{q2}");
}

#[test]
fn shape_matrix_from_plugins() {
    let psi = dmatrix![2.0, 0.3; 0.3, 1.0];
    let a = shape_matrix(&psi, &psi).unwrap();
    assert!((a - DMatrix::identity(2, 2)).amax() < 1e-12);
    let tau = dmatrix![4.0, 0.0; 0.0, 0.0];
    let psi = dmatrix![2.0, 0.0; 0.0, 1.0];
    let a = shape_matrix(&psi, &tau).unwrap();
    assert!((a - dmatrix![2.0, 0.0; 0.0, 0.0]).amax() < 1e-12);
    // eigenvalues below the slack are rejected
    assert!(shape_matrix(&psi, &dmatrix![1.0, 0.0; 0.0, -0.5]).is_err());
    // within the slack they are clamped
    assert!(shape_matrix(&psi, &dmatrix![1.0, 0.0; 0.0, -1e-12]).is_ok());
    assert!(shape_matrix(&dmatrix![1.0, 2.0; 2.0, 1.0], &psi).is_err());
}

#[test]
fn sampler_contract() {
    let s = GenChiSq::sample(&DMatrix::identity(2, 2), 4_000, 7).unwrap();
    assert_eq!(s.len(), 4_000);
    assert!(s.draws().windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(s.p_value(f64::INFINITY), 1.0 / 4_001.0);
    assert_eq!(s.p_value(-1.0), 1.0);
    assert!(s.p_value(1.0) > s.p_value(5.0));
    let q = s.quantile(0.05).unwrap();
    assert_eq!(q, s.draws()[3_799]);
    assert!(s.quantile(0.0).is_err());
    assert!(GenChiSq::sample(&DMatrix::identity(2, 2), 999, 7).is_err());
}

#[test]
fn draws_do_not_depend_on_thread_count() {
    let a = dmatrix![1.5, 0.2; 0.2, 0.7];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| GenChiSq::sample(&a, 20_000, 99).unwrap())
    };
    assert_eq!(run(1), run(4));
    assert_ne!(run(1), GenChiSq::sample(&a, 20_000, 100).unwrap());
}

#[test]
fn full_test_is_deterministic_and_consistent() {
    let (x, y, _) = random_instance(21, 100, 20, 5);
    let data = Dataset::new(x, DVector::from_vec(y)).unwrap();
    let hyp = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![0.0], 20).unwrap();
    let config = TestConfig {
        godambe: true,
        ..fast_config(5)
    };
    let a = run_linear_test(&data, &hyp, &config).unwrap();
    let b = run_linear_test(&data, &hyp, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for (t, d, p) in [
        (a.t_l, a.decisions.t_l, a.p_values.t_l),
        (a.t_w, a.decisions.t_w, a.p_values.t_w),
        (a.t_s, a.decisions.t_s, a.p_values.t_s),
    ] {
        assert!(t >= 0.0);
        assert_eq!(d, t > a.quantile);
        assert!(p > 0.0 && p <= 1.0);
        // rejection and a small p-value go together
        if d {
            assert!(p <= a.alpha + 1e-3);
        }
    }
    assert_eq!(a.df, 1);
    assert_eq!(a.mc_draws, 5_000);
    assert!(a.godambe.is_some());
    let c = run_linear_test(&data, &hyp, &fast_config(6)).unwrap();
    assert_eq!(c.t_w, a.t_w);
    assert_ne!(c.quantile, a.quantile);
}

#[test]
fn report_is_invariant_under_monotone_transforms() {
    let (x, y, _) = random_instance(22, 100, 20, 5);
    let hyp = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![0.0], 20).unwrap();
    let config = fast_config(3);
    let run = |y: Vec<f64>| {
        let data = Dataset::new(x.clone(), DVector::from_vec(y)).unwrap();
        run_linear_test(&data, &hyp, &config).unwrap()
    };
    let base = run(y.clone());
    assert_eq!(base, run(y.iter().map(|v| v.exp()).collect()));
    assert_eq!(base, run(y.iter().map(|v| v * v * v).collect()));
}

#[test]
fn json_field_names() {
    let (x, y, _) = random_instance(23, 80, 10, 5);
    let data = Dataset::new(x, DVector::from_vec(y)).unwrap();
    let hyp = LinearHypothesis::from_one_based(&[1], dmatrix![1.0], dvector![1.0], 10).unwrap();
    let report = run_linear_test(&data, &hyp, &fast_config(1)).unwrap();
    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    for key in ["T_L", "T_W", "T_S", "quantile", "p_values", "decisions", "alpha", "mc_draws", "active_sets", "seeds"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert!(json["p_values"].get("T_W").is_some());
    let back: TestReport = serde_json::from_value(json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn fixed_lambda_is_used_for_both_fits() {
    let (x, y, _) = random_instance(24, 80, 10, 5);
    let data = Dataset::new(x, DVector::from_vec(y)).unwrap();
    let hyp = LinearHypothesis::from_one_based(&[1, 2], dmatrix![1.0, 1.0], dvector![0.0], 10).unwrap();
    let config = TestConfig {
        lambda: LambdaChoice::Fixed(0.1),
        ..fast_config(1)
    };
    let report = run_linear_test(&data, &hyp, &config).unwrap();
    assert_eq!(report.lambda.unconstrained, 0.1);
    assert_eq!(report.lambda.constrained, 0.1);
}

#[test]
fn invalid_inputs_are_rejected() {
    let (x, y, _) = random_instance(25, 60, 10, 5);
    let data = Dataset::new(x, DVector::from_vec(y)).unwrap();
    let hyp = LinearHypothesis::from_one_based(&[1], dmatrix![1.0], dvector![0.0], 10).unwrap();
    let bad_alpha = TestConfig {
        alpha: 1.5,
        ..fast_config(1)
    };
    assert!(run_linear_test(&data, &hyp, &bad_alpha).is_err());
    let too_wide = LinearHypothesis::from_one_based(&[11], dmatrix![1.0], dvector![0.0], 11).unwrap();
    assert!(run_linear_test(&data, &too_wide, &fast_config(1)).is_err());
    let few_draws = TestConfig {
        mc_draws: 10,
        ..fast_config(1)
    };
    assert!(run_linear_test(&data, &hyp, &few_draws).is_err());
}
