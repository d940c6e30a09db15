mod common;

use common::*;
use ksttm::kernel::{build_gram, tt_kernel, tt_kernel_naive, tt_kernel_prod_fast, tt_kernel_sum_fast, BaseKernel, Combine, KernelSpec};
use ksttm::solver::{brute_force_dual, decision_values, kkt_report, solve_dual, DualProblem, SolverParams};
use ksttm::synth::{random_tensor, random_tt};
use ksttm::tt::{reconstruct, stack_and_decompose, tt_inner_product, tt_svd, tt_svd_with_report, TtSvdConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fast_evaluators_match_oracle(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = random_pair(&mut rng, d, 5, 3);
        for combine in [Combine::Prod, Combine::Sum] {
            let spec = random_spec(&mut rng, d, combine);
            let (want, scale) = oracle_kernel(&a, &b, &spec);
            let fast = match combine {
                Combine::Prod => tt_kernel_prod_fast(&a, &b, &spec).unwrap(),
                Combine::Sum => tt_kernel_sum_fast(&a, &b, &spec).unwrap(),
            };
            let naive = tt_kernel_naive(&a, &b, &spec).unwrap();
            prop_assert!(rel_diff(fast, want, scale) <= 1e-10, "{combine} fast {fast} oracle {want}");
            prop_assert!(rel_diff(naive, want, scale) <= 1e-10, "{combine} naive {naive} oracle {want}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kernel_is_symmetric_in_its_arguments(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = random_pair(&mut rng, d, 5, 3);
        for combine in [Combine::Prod, Combine::Sum] {
            let spec = random_spec(&mut rng, d, combine);
            let ab = tt_kernel(&a, &b, &spec).unwrap();
            let ba = tt_kernel(&b, &a, &spec).unwrap();
            prop_assert!(rel_diff(ab, ba, ab.abs().max(1.0)) <= 1e-12);
        }
    }

    #[test]
    fn linear_prod_is_the_tt_inner_product(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = random_pair(&mut rng, d, 5, 3);
        let spec = KernelSpec::uniform(BaseKernel::Linear, d, Combine::Prod).unwrap();
        let k = tt_kernel_prod_fast(&a, &b, &spec).unwrap();
        let ip = tt_inner_product(&a, &b).unwrap();
        let dense = reconstruct(&a).dot(&reconstruct(&b)).unwrap();
        let scale = reconstruct(&a).frobenius_norm() * reconstruct(&b).frobenius_norm();
        prop_assert!(rel_diff(k, ip, scale) <= 1e-10);
        prop_assert!(rel_diff(k, dense, scale) <= 1e-10);
    }

    #[test]
    fn wide_rbf_tends_to_path_count(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = random_pair(&mut rng, d, 5, 3);
        let paths: f64 = (1..d).map(|j| (a.ranks()[j] * b.ranks()[j]) as f64).product();
        let spec = KernelSpec::uniform(BaseKernel::rbf(1e6), d, Combine::Prod).unwrap();
        prop_assert!(rel_diff(tt_kernel_prod_fast(&a, &b, &spec).unwrap(), paths, paths) <= 1e-3);
        let spec = spec.with_combine(Combine::Sum);
        let want = d as f64 * paths;
        prop_assert!(rel_diff(tt_kernel_sum_fast(&a, &b, &spec).unwrap(), want, want) <= 1e-3);
    }

    #[test]
    fn rbf_approaches_its_limit_monotonically(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = random_pair(&mut rng, 3, 4, 3);
        let paths: f64 = (1..3).map(|j| (a.ranks()[j] * b.ranks()[j]) as f64).product();
        let gaps: Vec<f64> = [1.0, 10.0, 100.0, 1e3, 1e4]
            .iter()
            .map(|&s| {
                let spec = KernelSpec::uniform(BaseKernel::rbf(s), 3, Combine::Sum).unwrap();
                (tt_kernel_sum_fast(&a, &b, &spec).unwrap() - 3.0 * paths).abs()
            })
            .collect();
        prop_assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
    }

    #[test]
    fn tt_self_inner_product_is_squared_norm(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = random_dims(&mut rng, d, 5);
        let ranks = random_ranks(&mut rng, d, 4);
        let a = random_tt(&mut rng, &dims, &ranks);
        let ip = tt_inner_product(&a, &a).unwrap();
        let n2 = reconstruct(&a).frobenius_norm().powi(2);
        prop_assert!(ip >= 0.0);
        prop_assert!(rel_diff(ip, n2, n2) <= 1e-10);
    }

    #[test]
    fn tt_svd_recovers_a_train_at_its_ranks(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = random_dims(&mut rng, d, 4);
        let ranks = random_ranks(&mut rng, d, 3);
        let x = reconstruct(&random_tt(&mut rng, &dims, &ranks));
        let tt = tt_svd(&x, &TtSvdConfig::fixed_ranks(ranks.clone())).unwrap();
        prop_assert!(rel_err(&x, &reconstruct(&tt)) <= 1e-8);
        prop_assert_eq!(tt.ranks()[0], 1);
        prop_assert_eq!(*tt.ranks().last().unwrap(), 1);
    }

    #[test]
    fn tt_svd_meets_tolerance_and_rank_bounds(seed in any::<u64>(), d in 1usize..=4, eps_exp in 1i32..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = random_dims(&mut rng, d, 5);
        let x = random_tensor(&mut rng, &dims);
        let eps = 10f64.powi(-eps_exp);
        let (tt, report) = tt_svd_with_report(&x, &TtSvdConfig::rel_tolerance(eps)).unwrap();
        let err = rel_err(&x, &reconstruct(&tt));
        prop_assert!(err <= eps * (1.0 + 1e-9) + 1e-14, "err {err} eps {eps}");
        prop_assert!(report.discarded_norm <= eps * x.frobenius_norm() * (1.0 + 1e-9) + 1e-14);
        let ranks = tt.ranks();
        for k in 1..d {
            let left: usize = dims[..k].iter().product();
            let right: usize = dims[k..].iter().product();
            prop_assert!(ranks[k] <= left.min(right));
            prop_assert_eq!(tt.core(k - 1).dims()[2], tt.core(k).dims()[0]);
        }
    }

    #[test]
    fn stacked_trains_share_one_rank_chain(seed in any::<u64>(), d in 2usize..=4, m in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = random_dims(&mut rng, d, 4);
        let xs = random_samples(&mut rng, &dims, m);
        let cfg = if rng.random_bool(0.5) {
            TtSvdConfig::fixed_ranks(random_ranks(&mut rng, d, 3))
        } else {
            TtSvdConfig::rel_tolerance(1e-2)
        };
        let tts = stack_and_decompose(&xs, &cfg).unwrap();
        prop_assert_eq!(tts.len(), m);
        for t in &tts {
            prop_assert_eq!(t.ranks(), tts[0].ranks());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn gram_is_symmetric_and_psd_for_mixed_kernels(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = random_dims(&mut rng, d, 4);
        let xs = random_samples(&mut rng, &dims, 12);
        let tts = stack_and_decompose(&xs, &TtSvdConfig::fixed_ranks(random_ranks(&mut rng, d, 3))).unwrap();
        for combine in [Combine::Prod, Combine::Sum] {
            let spec = random_spec(&mut rng, d, combine);
            let g = build_gram(&tts, &spec).unwrap();
            prop_assert_eq!(&g.values, &g.values.transpose());
            let (lo, hi) = g.eigen_extremes();
            prop_assert!(lo >= -1e-8 * hi.abs().max(f64::MIN_POSITIVE), "{combine}: {lo} vs {hi}");
        }
    }

    #[test]
    fn solver_is_feasible_and_matches_oracle(seed in any::<u64>(), m in 2usize..=10, ci in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = [0.1, 1.0, 10.0][ci];
        let gram = random_gram(&mut rng, m, 3);
        let y = random_labels(&mut rng, m);
        let p = DualProblem::new(&gram, &y, c).unwrap();
        let s = solve_dual(&p, &SolverParams::with_tol(1e-8));
        prop_assert!(s.converged);
        prop_assert!(s.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        let eq: f64 = s.alphas.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(eq.abs() <= 1e-10 * c.max(1.0));
        prop_assert!(kkt_report(&p, &s, 1e-8).max_violation <= 1e-8);
        let oracle = brute_force_dual(&p).unwrap();
        prop_assert!((s.objective - oracle.objective).abs() <= 1e-5 * s.objective.abs().max(1.0));
    }

    #[test]
    fn scaling_gram_and_c_together_rescales_alphas(seed in any::<u64>(), m in 4usize..=12, g_exp in -2i32..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = 10f64.powi(g_exp);
        let c = 1.0;
        let gram = random_gram(&mut rng, m, 2);
        let y = random_labels(&mut rng, m);
        let scaled = &gram * gamma;
        let params = SolverParams::with_tol(1e-10);
        let p = DualProblem::new(&gram, &y, c).unwrap();
        let q = DualProblem::new(&scaled, &y, c / gamma).unwrap();
        let s = solve_dual(&p, &params);
        let t = solve_dual(&q, &params);
        prop_assert!((t.objective * gamma - s.objective).abs() <= 1e-6 * s.objective.abs().max(1.0));
        let coef = |sol: &ksttm::DualSolution| sol.alphas.iter().zip(&y).map(|(a, y)| a * y).collect::<Vec<_>>();
        let f = decision_values(&coef(&s), s.bias, &gram).unwrap();
        let g = decision_values(&coef(&t), t.bias, &scaled).unwrap();
        for (a, b) in f.iter().zip(&g) {
            if a.abs() > 1e-4 {
                prop_assert_eq!(a.signum(), b.signum(), "{} vs {}", a, b);
            }
        }
    }
}
