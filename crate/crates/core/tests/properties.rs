//! Property tests for the structural invariants of every module.

mod common;

use common::*;
use dualrej::ambiguity::{calibrate_ambiguity, fit_error_model, CalibrationTarget, ErrorModelConfig};
use dualrej::forecaster::{collect_residuals, fit_mlp, fit_ridge, ErrorMetric, Forecaster, MlpConfig, ResidualRecord};
use dualrej::linalg::Cholesky;
use dualrej::novelty::{calibrate_novelty, fit_latent_summary};
use dualrej::pipeline::{
    bound_ideal, bound_random, decide_scores, evaluate_scored, RejectionMode, ScoredWindow, Thresholds,
};
use dualrej::stats::{
    calibrate_rate, fit_gaussian_summary, mahalanobis, t_quantile, variance_threshold, ConfidenceSpec,
    GaussianSummary,
};
use dualrej::threshold::Threshold;
use dualrej::tsio::{self, fit_normalization, make_windows, prepare_split, split_dataset, RawSeries, WindowSpec};
use dualrej::vae::{kl_divergence, VaeParams};
use dualrej::{Matrix, NoveltyRejector};
use proptest::prelude::*;

fn series_from(rows: usize, cols: usize, data: Vec<f64>) -> RawSeries<f64> {
    RawSeries::new(
        (0..rows).map(|i| i.to_string()).collect(),
        Matrix::from_vec(rows, cols, data),
        (0..cols).map(|i| format!("v{i}")).collect(),
    )
    .unwrap()
}

prop_compose! {
    fn arb_series(min_rows: usize, max_rows: usize)(rows in min_rows..max_rows, cols in 1usize..4)
        (data in prop::collection::vec(-1e3f64..1e3, rows * cols), rows in Just(rows), cols in Just(cols))
        -> RawSeries<f64> {
        series_from(rows, cols, data)
    }
}

fn arb_losses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, 1..60)
}

fn arb_scored() -> impl Strategy<Value = Vec<ScoredWindow<f64>>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..5.0, 0.0f64..3.0), 1..80).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (nov, var, loss))| ScoredWindow {
                origin_index: i,
                novelty_score: nov,
                variance_score: var,
                loss,
                mae: loss,
                mse: loss * loss,
            })
            .collect()
    })
}

fn threshold(v: Option<f64>) -> Threshold<f64> {
    v.map_or(Threshold::Disabled, Threshold::Value)
}

fn orthonormal(seed: u64, d: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v = normals(&mut r, d);
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn random_summary_inputs(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let means = (0..n).map(|_| normals(&mut r, d)).collect();
    let vars = (0..n)
        .map(|_| normals(&mut r, d).into_iter().map(|v| 0.01 + v * v).collect())
        .collect();
    (means, vars)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ---- tsio ----

    #[test]
    fn normalize_round_trip(s in arb_series(3, 40)) {
        let stats = fit_normalization(&s, 0..s.len()).unwrap();
        let back = stats.denormalize(&stats.normalize(&s).unwrap()).unwrap();
        for (a, b) in s.values.as_slice().iter().zip(back.values.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        prop_assert!(stats.std.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn constant_columns_get_unit_std(rows in 2usize..30, c in -5.0f64..5.0) {
        let s = series_from(rows, 1, vec![c; rows]);
        let stats = fit_normalization(&s, 0..rows).unwrap();
        prop_assert_eq!(stats.std[0], 1.0);
        prop_assert!(stats.normalize(&s).unwrap().values.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn statistics_depend_only_on_their_span(s in arb_series(20, 60), cut in 0.3f64..0.7) {
        let k = ((s.len() as f64) * cut) as usize;
        let train = fit_normalization(&s, 0..k).unwrap();
        let rest = fit_normalization(&s, k..s.len()).unwrap();
        // continuous random data: the spans differ, so must the statistics
        prop_assert_ne!(&train.mean, &rest.mean);
        let mut altered = s.clone();
        for r in k..s.len() {
            for v in altered.values.row_mut(r) {
                *v += 100.0;
            }
        }
        prop_assert_eq!(fit_normalization(&altered, 0..k).unwrap(), train);
    }

    #[test]
    fn prepared_split_normalizes_from_train_rows_only(s in arb_series(60, 120)) {
        let spec = WindowSpec::new(4, 2, 1);
        let ratios = [0.6, 0.2, 0.2];
        let (split, layout) = prepare_split(&s, spec, ratios).unwrap();
        prop_assert_eq!(&split.norm_stats, &fit_normalization(&s, layout.train_rows.clone()).unwrap());
        let mut altered = s.clone();
        for r in layout.train_rows.end..s.len() {
            for v in altered.values.row_mut(r) {
                *v *= -3.0;
            }
        }
        let (again, _) = prepare_split(&altered, spec, ratios).unwrap();
        prop_assert_eq!(again.norm_stats, split.norm_stats);
    }

    #[test]
    fn windows_reassemble_the_series(s in arb_series(10, 50), l in 1usize..5, h in 1usize..4, stride in 1usize..3) {
        let windows = make_windows(&s, l, h, stride).unwrap();
        for w in &windows {
            prop_assert_eq!(w.input.shape(), (l, s.n_vars()));
            prop_assert_eq!(w.target.shape(), (h, s.n_vars()));
            let mut joined = w.input.as_slice().to_vec();
            joined.extend_from_slice(w.target.as_slice());
            let slice = s.values.slice_rows(w.origin_index, w.origin_index + l + h);
            prop_assert_eq!(joined.as_slice(), slice.as_slice());
        }
    }

    #[test]
    fn splits_are_disjoint_and_chronological(s in arb_series(30, 90), v in 0.1f64..0.3, t in 0.1f64..0.3) {
        let windows = make_windows(&s, 3, 2, 1).unwrap();
        let total = windows.len();
        let stats = fit_normalization(&s, 0..s.len()).unwrap();
        let split = split_dataset(windows, [1.0 - v - t, v, t], stats).unwrap();
        prop_assert_eq!(split.train.len() + split.validation.len() + split.test.len(), total);
        let last = |w: &[dualrej::WindowPair<f64>]| w.last().unwrap().origin_index;
        let first = |w: &[dualrej::WindowPair<f64>]| w[0].origin_index;
        prop_assert!(last(&split.train) < first(&split.validation));
        prop_assert!(last(&split.validation) < first(&split.test));
    }

    #[test]
    fn ingestion_rejects_non_finite(rows in 2usize..8, bad_row in 0usize..8, token in prop::sample::select(vec!["NaN", "inf", "-inf", ""])) {
        let bad_row = bad_row % rows;
        let mut text = String::from("t,a\n");
        for r in 0..rows {
            let v = if r == bad_row { token.to_string() } else { r.to_string() };
            text += &format!("{r},{v}\n");
        }
        prop_assert!(tsio::read_csv::<f64, _>(text.as_bytes(), true).is_err());
    }

    #[test]
    fn ingestion_rejects_unordered_timestamps(rows in 3usize..10, swap in 0usize..8) {
        let swap = swap % (rows - 1);
        let mut labels: Vec<usize> = (0..rows).collect();
        labels.swap(swap, swap + 1);
        let mut text = String::from("t,a\n");
        for (r, l) in labels.iter().enumerate() {
            text += &format!("{l},{r}\n");
        }
        prop_assert!(tsio::read_csv::<f64, _>(text.as_bytes(), true).is_err());
    }

    // ---- stats ----

    #[test]
    fn t_quantile_decreases_in_alpha_and_dof(a1 in 0.001f64..0.49, da in 0.001f64..0.4, dof in 1u64..200, dd in 1u64..1000) {
        let a2 = (a1 + da).min(0.499);
        prop_assume!(a2 > a1);
        let t = |a, d| t_quantile::<f64>(ConfidenceSpec::new(a, d).unwrap());
        prop_assert!(t(a1, dof) > t(a2, dof));
        prop_assert!(t(a1, dof) > t(a1, dof + dd));
    }

    #[test]
    fn variance_threshold_increases_in_width_and_alpha(w in 0.01f64..10.0, dw in 0.01f64..5.0, a in 0.01f64..0.5, da in 0.01f64..0.4, dof in 1u64..100) {
        let spec = ConfidenceSpec::new(a, dof).unwrap();
        prop_assert!(variance_threshold(w + dw, spec).unwrap() > variance_threshold(w, spec).unwrap());
        let a2 = (a + da).min(0.99);
        let spec2 = ConfidenceSpec::new(a2, dof).unwrap();
        prop_assert!(variance_threshold(w, spec2).unwrap() > variance_threshold(w, spec).unwrap());
    }

    #[test]
    fn confidence_spec_rejects_invalid(alpha in prop_oneof![-1.0f64..=0.0, 1.0f64..2.0]) {
        prop_assert!(ConfidenceSpec::new(alpha, 5).is_err());
        prop_assert!(ConfidenceSpec::new(0.05, 0).is_err());
    }

    #[test]
    fn mahalanobis_is_rotation_invariant(seed in 0u64..10_000, d in 1usize..9) {
        let mut r = rng(seed);
        let cov = random_spd(&mut r, d);
        let mu = normals(&mut r, d);
        let z = normals(&mut r, d);
        let q = orthonormal(seed + 1, d);
        let rotated_cov: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += q[i][a] * cov[a][b] * q[j][b];
                    }
                }
                s
            }).collect())
            .collect();
        let base = GaussianSummary::from_parts(mu.clone(), to_matrix(&cov)).unwrap();
        let rot = GaussianSummary::from_parts(mat_vec(&q, &mu), to_matrix(&rotated_cov)).unwrap();
        let d0 = mahalanobis(&z, &base).unwrap();
        let d1 = mahalanobis(&mat_vec(&q, &z), &rot).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-8 * d0.max(1.0));
    }

    #[test]
    fn summary_is_permutation_invariant(seed in 0u64..10_000, n in 3usize..40, d in 1usize..6) {
        let (means, vars) = random_summary_inputs(seed, n, d);
        let a = fit_gaussian_summary(&means, &vars).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(seed as usize % n);
        let pm: Vec<_> = order.iter().map(|&i| means[i].clone()).collect();
        let pv: Vec<_> = order.iter().map(|&i| vars[i].clone()).collect();
        let b = fit_gaussian_summary(&pm, &pv).unwrap();
        for (x, y) in a.mean.iter().zip(&b.mean) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.covariance.as_slice().iter().zip(b.covariance.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_covariance_is_symmetric_psd_and_inverted(seed in 0u64..10_000, n in 2usize..30, d in 1usize..8) {
        let (means, vars) = random_summary_inputs(seed, n, d);
        let s = fit_gaussian_summary(&means, &vars).unwrap();
        prop_assert!(s.covariance.max_asymmetry() <= 1e-10);
        let mut shifted = s.covariance.clone();
        for i in 0..d {
            shifted[(i, i)] += 1e-8;
        }
        prop_assert!(Cholesky::new(&shifted).is_ok());
        let mut loaded = s.covariance.clone();
        for i in 0..d {
            loaded[(i, i)] += s.regularization;
        }
        let prod = s.precision.matmul(&loaded).unwrap();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((prod[(i, j)] - want).abs() < 1e-8);
            }
        }
        let z = normals(&mut rng(seed ^ 7), d);
        let m = mahalanobis(&z, &s).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m, mahalanobis(&z, &s).unwrap());
    }

    // ---- ambiguity ----

    #[test]
    fn rejected_count_falls_as_threshold_rises(scores in prop::collection::vec(0.0f64..5.0, 1..100), t1 in 0.0f64..5.0, dt in 0.0f64..2.0) {
        let count = |t: f64| scores.iter().filter(|&&s| Threshold::Value(t).exceeded_by(s).unwrap()).count();
        prop_assert!(count(t1 + dt) <= count(t1));
    }

    #[test]
    fn interval_threshold_matches_width_identity(scores in prop::collection::vec(0.0f64..1.0, 2..60), w in 0.05f64..3.0, alpha in 0.01f64..0.3) {
        let cal = calibrate_ambiguity(&scores, CalibrationTarget::Interval { alpha, width: w }, alpha).unwrap();
        let spec = ConfidenceSpec::for_samples(alpha, scores.len()).unwrap();
        prop_assert_eq!(cal.var_threshold, variance_threshold(w, spec).unwrap());
        let t: f64 = t_quantile(spec);
        let th = (w / (2.0 * t)).powi(2);
        for &s in &scores {
            let rejected = Threshold::Value(cal.var_threshold).exceeded_by(s).unwrap();
            // away from the boundary the closed form decides identically
            if (s - th).abs() > 1e-12 {
                prop_assert_eq!(rejected, s > th);
            }
        }
    }

    #[test]
    fn rate_calibration_lands_within_one_sample(seed in 0u64..10_000, n in 5usize..400, rate in 0.0f64..0.5) {
        let mut r = rng(seed);
        let scores: Vec<f64> = normals(&mut r, n).into_iter().map(f64::exp).collect();
        let amb = calibrate_ambiguity(&scores, CalibrationTarget::Rate { target_rate: rate }, 0.05).unwrap();
        prop_assert!((amb.realized_rate - rate).abs() <= 1.0 / n as f64);
        let nov = calibrate_novelty(&scores, rate).unwrap();
        let above = scores.iter().filter(|&&s| s > nov.threshold).count() as f64 / n as f64;
        prop_assert!((above - rate).abs() <= 1.0 / n as f64);
    }

    #[test]
    fn error_estimates_are_nonnegative(seed in 0u64..1000, probe in prop::collection::vec(-1e3f64..1e3, 3)) {
        let mut r = rng(seed);
        let records: Vec<ResidualRecord<f64>> = (0..40)
            .map(|i| ResidualRecord {
                origin_index: i,
                error: normals(&mut r, 1)[0].powi(2),
                features: normals(&mut r, 3),
            })
            .collect();
        let est = fit_error_model(&records, ErrorModelConfig::default()).unwrap();
        prop_assert!(est.estimate(&probe).unwrap() >= 0.0);
    }

    // ---- forecaster ----

    #[test]
    fn ridge_shape_determinism_and_nonnegative_errors(seed in 0u64..1000, l in 1usize..5, h in 1usize..4, n in 1usize..3, scale in prop_oneof![Just(1.0f64), Just(1e6)]) {
        let mut r = rng(seed);
        let train = random_windows(&mut r, 30, l, h, n);
        let a = fit_ridge(&train, 1e-3).unwrap();
        let b = fit_ridge(&train, 1e-3).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.weights.as_slice().iter().all(|w| w.is_finite()));
        let probe = Matrix::from_vec(l, n, normals(&mut r, l * n).into_iter().map(|v| v * scale).collect());
        let p = a.predict(&probe).unwrap();
        prop_assert_eq!(p.shape(), (h, n));
        prop_assert_eq!(p, b.predict(&probe).unwrap());
        for metric in [ErrorMetric::Squared, ErrorMetric::Absolute] {
            prop_assert!(collect_residuals(&a, &train, metric).unwrap().iter().all(|rec| rec.error >= 0.0));
        }
        prop_assert!(fit_ridge(&train, -1.0).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mlp_parameters_fixed_and_finite(seed in 0u64..1000, l in 1usize..4, h in 1usize..3) {
        let mut r = rng(seed);
        let train = random_windows(&mut r, 40, l, h, 2);
        let cfg = MlpConfig { hidden: 6, epochs: 3, ..Default::default() };
        let m = fit_mlp(&train, cfg, seed).unwrap();
        prop_assert_eq!(m.params().len(), m.param_count());
        prop_assert!(m.params().iter().all(|p| p.is_finite()));
        let probe = Matrix::from_vec(l, 2, normals(&mut r, l * 2));
        prop_assert_eq!(m.predict(&probe).unwrap().shape(), (h, 2));
        prop_assert_eq!(m, fit_mlp(&train, cfg, seed).unwrap());
    }

    // ---- vae / novelty ----

    #[test]
    fn encoder_shapes_and_positive_variance(seed in 0u64..1000, dim in 1usize..12, hidden in 1usize..10, latent in 1usize..5, x in prop::collection::vec(-50.0f64..50.0, 12)) {
        let p = VaeParams::<f64>::init(dim, hidden, latent, seed);
        let enc = p.encode(&x[..dim]).unwrap();
        prop_assert_eq!(enc.mu.len(), latent);
        prop_assert_eq!(enc.var.len(), latent);
        prop_assert!(enc.var.iter().all(|&v| v > 0.0));
        prop_assert!(p.params().iter().all(|v| v.is_finite()));
        prop_assert_eq!(p.params().len(), p.param_count());
    }

    #[test]
    fn zero_noise_follows_deterministic_path(seed in 0u64..1000, x in prop::collection::vec(-3.0f64..3.0, 6)) {
        let p = VaeParams::<f64>::init(6, 5, 3, seed);
        let terms = p.elbo_loss(&x, &[0.0; 3]).unwrap();
        let recon = p.reconstruct(&x).unwrap();
        let want = 0.5 * recon.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        prop_assert_eq!(terms.recon, want);
    }

    #[test]
    fn novelty_scores_nonnegative_deterministic_monotone(seed in 0u64..1000, t1 in 0.0f64..5.0, dt in 0.0f64..3.0) {
        let mut r = rng(seed);
        let vae = VaeParams::<f64>::init(5, 6, 3, seed);
        let train: Vec<Vec<f64>> = (0..30).map(|_| normals(&mut r, 5)).collect();
        let summary = fit_latent_summary(&vae, &train).unwrap();
        prop_assert_eq!(summary.dim(), vae.latent_dim);
        let rej = NoveltyRejector::new(vae, summary).unwrap();
        let probes: Vec<Vec<f64>> = (0..30).map(|_| normals(&mut r, 5).into_iter().map(|v| 4.0 * v).collect()).collect();
        let scores: Vec<f64> = probes.iter().map(|p| rej.score(p).unwrap()).collect();
        prop_assert!(scores.iter().all(|&s| s >= 0.0));
        for (p, &s) in probes.iter().zip(&scores) {
            prop_assert_eq!(rej.score(p).unwrap(), s);
        }
        let count = |t: f64| scores.iter().filter(|&&s| s > t).count();
        prop_assert!(count(t1 + dt) <= count(t1));
        let cal = calibrate_rate(&scores, 0.1).unwrap();
        prop_assert!(cal.threshold >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-20.0f64..20.0, 1..10), seed in 0u64..u64::MAX) {
        let mut r = rng(seed);
        let log_var: Vec<f64> = normals(&mut r, mu.len()).into_iter().map(|v| 3.0 * v).collect();
        prop_assert!(kl_divergence(&mu, &log_var) >= 0.0);
    }

    // ---- pipeline ----

    #[test]
    fn risk_identity_and_rate_bounds(scored in arb_scored(), nt in prop::option::of(0.0f64..10.0), vt in prop::option::of(0.0f64..5.0), lambda in 0.0f64..2.0, mode_ix in 0usize..4) {
        let mode = RejectionMode::ABLATION[mode_ix];
        let th = Thresholds { novelty: threshold(nt), variance: threshold(vt) };
        let rep = evaluate_scored(&scored, &th, mode, lambda, ErrorMetric::Absolute).unwrap();
        prop_assert!((0.0..=1.0).contains(&rep.epsilon));
        prop_assert_eq!(rep.l_accepted.is_none(), rep.epsilon == 1.0);
        let recomputed = match rep.l_accepted {
            Some(la) => (1.0 - rep.epsilon) * la + lambda * rep.epsilon,
            None => lambda,
        };
        prop_assert!((rep.risk - recomputed).abs() <= 1e-12);
        prop_assert!(rep.bound_ideal <= rep.bound_random + 1e-12);
        if mode == RejectionMode::None {
            prop_assert_eq!(rep.n_rejected, 0);
        }
    }

    #[test]
    fn ideal_bound_below_random(losses in arb_losses(), eps in 0.0f64..0.99, lambda in prop::sample::select(vec![0.0, 0.1, 1.0])) {
        prop_assert!(bound_ideal(&losses, eps, lambda).unwrap() <= bound_random(&losses, eps, lambda).unwrap() + 1e-12);
    }

    #[test]
    fn ideal_bound_non_increasing_in_epsilon(losses in arb_losses(), e1 in 0.0f64..0.9, de in 0.0f64..0.09) {
        prop_assert!(bound_ideal(&losses, e1 + de, 0.0).unwrap() <= bound_ideal(&losses, e1, 0.0).unwrap() + 1e-12);
    }

    #[test]
    fn dual_rejects_superset_of_single_modes(nov in 0.0f64..10.0, var in 0.0f64..5.0, nt in prop::option::of(0.0f64..10.0), vt in prop::option::of(0.0f64..5.0)) {
        let th = Thresholds { novelty: threshold(nt), variance: threshold(vt) };
        let decide = |mode| decide_scores(&th, mode, nov, || Ok(var)).unwrap().rejected;
        let dual = decide(RejectionMode::Dual);
        prop_assert_eq!(dual, decide(RejectionMode::NoveltyOnly) || decide(RejectionMode::AmbiguityOnly));
        prop_assert!(!decide(RejectionMode::None));
    }
}
