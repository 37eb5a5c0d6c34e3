mod common;

use cep_lab::dynamics::{fit_alpha, log_checkpoints, simulate_decay, FitOptions};
use cep_lab::env::{EnvKind, EnvSpec};
use cep_lab::hierarchy::LayerStack;
use cep_lab::ib::{default_betas, encoder_information, epsilon_ib, log_spaced, sweep_frontier, SweepOptions};
use cep_lab::info::{conditional_entropy, entropy, estimate_mi_from_samples, joint_entropy, mutual_information, Axis, EstimatorId};
use cep_lab::{seed, Channel, Execution, JointTable};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn joint(s: u64, nx: usize, ny: usize) -> (Vec<Vec<f64>>, JointTable) {
    let rows = random_joint(&mut seed::rng(s), nx, ny);
    let j = JointTable::from_weights(rows.clone()).unwrap();
    (rows, j)
}

fn channel(s: u64, n_in: usize, n_out: usize) -> (Vec<Vec<f64>>, Channel) {
    let rows = random_channel(&mut seed::rng(s), n_in, n_out);
    let c = Channel::from_weights(rows.clone()).unwrap();
    (rows, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mutual_information_is_nonnegative_and_matches_oracle(s in any::<u64>(), nx in 1usize..9, ny in 1usize..9) {
        let (rows, j) = joint(s, nx, ny);
        let mi = mutual_information(&j);
        prop_assert!(mi >= 0.0);
        prop_assert!((mi - mi_bits(&rows)).abs() < 1e-9);
    }

    #[test]
    fn entropy_chain_rule(s in any::<u64>(), nx in 1usize..9, ny in 1usize..9) {
        let (_, j) = joint(s, nx, ny);
        let hxy = joint_entropy(&j);
        let hx = entropy(&j.px()).unwrap();
        let hy = entropy(&j.py()).unwrap();
        prop_assert!((hxy - hx - conditional_entropy(&j, Axis::X)).abs() < 1e-9);
        prop_assert!((hxy - hy - conditional_entropy(&j, Axis::Y)).abs() < 1e-9);
        prop_assert!((mutual_information(&j) - (hx + hy - hxy)).abs() < 1e-9);
    }

    #[test]
    fn data_processing_inequality(s in any::<u64>(), nx in 1usize..9, ny in 1usize..5, nz in 1usize..5) {
        let (rows, j) = joint(s, nx, ny);
        let (q, enc) = channel(s ^ 0x5eed, nx, nz);
        let (rate, rel) = encoder_information(&enc, &j).unwrap();
        let (orate, orel) = encoder_rate_relevance(&rows, &q);
        prop_assert!((rate - orate).abs() < 1e-9 && (rel - orel).abs() < 1e-9);
        prop_assert!(rel <= rate + 1e-9);
        prop_assert!(rel <= mutual_information(&j) + 1e-9);
        let eps = epsilon_ib(&enc, &j).unwrap();
        prop_assert!((0.0..=1.0).contains(&eps));
    }

    #[test]
    fn recurrence_is_exact_and_below_closed_form(s in any::<u64>(), eta in 0.001f64..0.1, n0 in 0.0f64..1e6, len in 1usize..2000) {
        let mut rng = seed::rng(s);
        let c: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let tr = simulate_decay(n0, eta, &c).unwrap();
        let mut n = n0;
        for (i, ci) in c.iter().enumerate() {
            n *= 1.0 - eta * ci;
            prop_assert_eq!(tr.n[i + 1], n);
        }
        prop_assert_eq!(tr.recurrence_residual(), 0.0);
        let cf = tr.closed_form.as_ref().unwrap();
        for (a, b) in cf.iter().zip(&tr.n) {
            prop_assert!(*b <= *a * (1.0 + 1e-12) + 1e-300);
        }
        prop_assert!(tr.closed_form_gap().unwrap() <= 0.05);
    }

    #[test]
    fn hierarchy_obeys_data_processing(s in any::<u64>(), nx in 2usize..9, ny in 2usize..5, depth in 1usize..5) {
        let (_, j) = joint(s, nx, ny);
        let mut encoders = Vec::new();
        let mut n = nx;
        for l in 0..depth {
            let out = 1 + (seed::derive(s, &[l as u64]) % 4) as usize;
            encoders.push(channel(seed::derive(s, &[l as u64, 1]), n, out).1);
            n = out;
        }
        let stack = LayerStack::new(encoders, j.clone()).unwrap();
        let layers = stack.layers().unwrap();
        let mut prev = mutual_information(&j);
        for l in &layers {
            prop_assert!(l.relevance_bits <= prev + 1e-9);
            prop_assert!(l.relevance_bits <= l.rate_bits + 1e-9);
            prop_assert!((0.0..=1.0).contains(&l.epsilon_ib));
            prev = l.relevance_bits;
        }
    }

    #[test]
    fn environments_are_seed_deterministic(s in any::<u64>(), k in 0usize..4) {
        let kind = [EnvKind::RuleException, EnvKind::MarkovPlain, EnvKind::MarkovConfounded, EnvKind::Hierarchical][k];
        let spec = EnvSpec::default_for(kind, s).with_length(500);
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frontier_is_monotone_and_bounded(s in any::<u64>(), nx in 2usize..7, ny in 2usize..5, nz in 2usize..4) {
        let (_, j) = joint(s, nx, ny);
        let curve = sweep_frontier(&j, nz, &default_betas(), s, SweepOptions::default()).unwrap();
        prop_assert!(curve.rate_monotone_in_beta());
        prop_assert!(curve.relevance_monotone_in_rate());
        let hx = entropy(&j.px()).unwrap();
        for p in curve.converged_points() {
            prop_assert!(p.relevance <= curve.source_ixy + 1e-9);
            prop_assert!(p.rate <= hx + 1e-9);
            prop_assert!(p.relevance <= p.rate + 1e-9);
        }
    }

    #[test]
    fn frontier_dominates_random_encoders(s in any::<u64>(), nx in 2usize..7, ny in 2usize..5, nz in 2usize..4) {
        let (rows, j) = joint(s, nx, ny);
        let curve = sweep_frontier(&j, nz, &default_betas(), s, SweepOptions::default()).unwrap();
        let front = curve.converged_points();
        let mut rng = seed::rng(s ^ 1);
        for _ in 0..50 {
            let q = random_channel(&mut rng, nx, nz);
            let (r, u) = encoder_rate_relevance(&rows, &q);
            for p in &front {
                if r <= p.rate {
                    prop_assert!(u <= p.relevance + 1e-6, "encoder ({r}, {u}) beats frontier point ({}, {})", p.rate, p.relevance);
                }
            }
        }
    }

    #[test]
    fn sweep_is_stable_across_restart_seeds(s in any::<u64>(), nx in 2usize..5, ny in 2usize..5, nz in 2usize..5) {
        let (_, j) = joint(s, nx, ny);
        let betas = log_spaced(0.5, 50.0, 12);
        let curves: Vec<_> = (0..10).map(|r| sweep_frontier(&j, nz, &betas, seed::derive(s, &[r]), SweepOptions::default()).unwrap()).collect();
        for (i, beta) in betas.iter().enumerate() {
            let obj: Vec<f64> = curves.iter().map(|c| c.points[i]).filter(|p| p.converged).map(|p| p.objective()).collect();
            let hi = obj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = obj.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(obj.is_empty() || hi - lo < 1e-4, "beta {beta}: spread {}", hi - lo);
        }
    }

    #[test]
    fn execution_strategy_does_not_change_results(s in any::<u64>(), nx in 2usize..6, ny in 2usize..4) {
        let (rows, j) = joint(s, nx, ny);
        let betas = log_spaced(0.5, 50.0, 8);
        let seq = SweepOptions { execution: Execution::Sequential, ..SweepOptions::default() };
        let par = SweepOptions { execution: Execution::Parallel, ..SweepOptions::default() };
        let a = sweep_frontier(&j, 3, &betas, s, seq).unwrap();
        let b = sweep_frontier(&j, 3, &betas, s, par).unwrap();
        let c = sweep_frontier(&j, 3, &betas, s, seq).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
        let pairs = sample_pairs(&mut seed::rng(s), &rows, 500);
        let ea = estimate_mi_from_samples(&pairs, EstimatorId::MillerMadow, 200, s, Execution::Sequential).unwrap();
        let eb = estimate_mi_from_samples(&pairs, EstimatorId::MillerMadow, 200, s, Execution::Parallel).unwrap();
        prop_assert_eq!(ea, eb);
    }

    #[test]
    fn alpha_fit_is_insensitive_to_endpoints(s in any::<u64>(), alpha in 0.0f64..1.5, scale in 0.01f64..100.0) {
        let t: Vec<f64> = log_checkpoints(100, 100_000, 61).iter().map(|&v| v as f64).collect();
        let n: Vec<f64> = t.iter().map(|v| scale * v.powf(alpha)).collect();
        let opts = |window| FitOptions { window, bootstrap_reps: 50, seed: s, ..FitOptions::default() };
        let full = fit_alpha(&t, &n, opts((1.0, f64::INFINITY))).unwrap();
        let no_first = fit_alpha(&t, &n, opts((1000.0, f64::INFINITY))).unwrap().alpha;
        let no_last = fit_alpha(&t, &n, opts((1.0, 10_000.0))).unwrap().alpha;
        prop_assert!((full.alpha - alpha).abs() < 1e-9);
        prop_assert!(full.ci_low <= full.alpha && full.alpha <= full.ci_high);
        prop_assert!((full.alpha - no_first).abs() < 0.1, "{} vs {no_first}", full.alpha);
        prop_assert!((full.alpha - no_last).abs() < 0.1, "{} vs {no_last}", full.alpha);
    }
}
