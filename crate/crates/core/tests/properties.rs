use banditfh::beta::{beta_params_from_moments, expected_max, moments_from_beta, BetaCounts};
use banditfh::eval::{backward_mean_of, forward_eval_of};
use banditfh::lattice::layer_states;
use banditfh::{
    dp, forward_eval, terminal_distribution, ActionProb, DesignSpec, LayerIndexer, PhysicalState, Policy, PriorSpec,
    Scenario,
};
use proptest::prelude::*;

fn design() -> impl Strategy<Value = DesignSpec> {
    let roster = DesignSpec::standard_roster();
    (0..roster.len()).prop_map(move |i| roster[i].clone())
}

fn prior() -> impl Strategy<Value = PriorSpec> {
    (0.2f64..5.0, 0.2f64..5.0, 0.2f64..5.0, 0.2f64..5.0).prop_map(|(a, b, c, d)| PriorSpec::new(a, b, c, d).unwrap())
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (prior(), proptest::option::of((0.0f64..=1.0, 0.0f64..=1.0))).prop_map(|(p, theta)| match theta {
        Some((c, d)) => Scenario::frequentist(c, d, p).unwrap(),
        None => Scenario::bayesian(p),
    })
}

/// A fixed pseudo-random rule keyed by `seed`.
fn hashed_rule(seed: u64) -> impl Fn(&PhysicalState, u32) -> ActionProb + Sync {
    move |x, t| {
        let mut h = seed ^ (u64::from(x.s_c) << 48 | u64::from(x.f_c) << 32 | u64::from(x.s_d) << 16 | u64::from(t));
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
        ActionProb::from_code((h % 3) as u8 + 1).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_unrank_bijection(t in 0u32..150, pick in any::<u64>()) {
        let idx = LayerIndexer::new(150).unwrap();
        let size = idx.layer_size(t).unwrap();
        let r = pick % size;
        let x = idx.unrank(t, r).unwrap();
        prop_assert_eq!(x.epoch(), t);
        prop_assert_eq!(idx.rank(&x).unwrap(), r);
    }

    #[test]
    fn predictive_complements(s in 0.0f64..50.0, f in 0.0f64..50.0) {
        prop_assume!(s + f > 0.0);
        let b = BetaCounts::new(s, f);
        let sum = b.predictive_success().unwrap() + b.predictive_failure().unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn expected_max_dominates_means(a in 0.1f64..30.0, b in 0.1f64..30.0, c in 0.1f64..30.0, d in 0.1f64..30.0) {
        let m = expected_max(BetaCounts::new(a, b), BetaCounts::new(c, d)).unwrap();
        prop_assert!(m >= (a / (a + b)).max(c / (c + d)) - 1e-12);
        prop_assert!(m <= 1.0);
    }

    #[test]
    fn moments_round_trip(a in 0.05f64..20.0, b in 0.05f64..20.0) {
        let (mu, var) = moments_from_beta(a, b).unwrap();
        let (a2, b2) = beta_params_from_moments(mu, var).unwrap();
        prop_assert!((a2 - a).abs() <= 1e-9 * a.max(1.0));
        prop_assert!((b2 - b).abs() <= 1e-9 * b.max(1.0));
    }

    #[test]
    fn arm_swap_symmetry(d in design(), s in scenario(), t in 1u32..25) {
        // FM and UCB open with C then D; only both openings together are symmetric
        prop_assume!(t >= 2 || !matches!(d, DesignSpec::Fm | DesignSpec::Ucb(_)));
        let a = forward_eval(&d, &s, t, None).unwrap();
        let b = forward_eval(&d, &s.mirror(), t, None).unwrap();
        prop_assert!((a.mean_successes - b.mean_successes).abs() < 1e-10, "{} vs {}", a.mean_successes, b.mean_successes);
        prop_assert!((a.sd_successes - b.sd_successes).abs() < 1e-8);
    }

    #[test]
    fn mass_is_conserved(d in design(), s in scenario(), t in 1u32..20) {
        let dist = terminal_distribution(&d, &s, t, None).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(dist.iter().all(|(x, p)| p >= 0.0 && x.epoch() == t));
    }

    #[test]
    fn forward_and_backward_agree(seed in any::<u64>(), s in scenario(), t in 1u32..40) {
        let rule = hashed_rule(seed);
        let fwd = forward_eval_of(&rule, &s, t).unwrap().mean_successes;
        let per_step = backward_mean_of(&rule, &s, t, false).unwrap();
        let terminal = backward_mean_of(&rule, &s, t, true).unwrap();
        prop_assert!((fwd - per_step).abs() < 1e-9);
        prop_assert!((per_step - terminal).abs() < 1e-9);
    }

    #[test]
    fn dp_mirror_equivariance(p in prior(), t in 1u32..18) {
        let table = dp::solve(&p, t, true).unwrap().table.unwrap();
        let mirrored = dp::solve(&p.mirror(), t, true).unwrap().table.unwrap();
        for layer in 0..t {
            for x in layer_states(layer) {
                let a = table.action(&x).unwrap();
                let b = mirrored.action(&x.mirror()).unwrap();
                prop_assert_eq!(a, b.mirror(), "state {}", x);
            }
        }
    }

    #[test]
    fn policy_actions_are_distributions(d in design(), p in prior(), t in 1u32..12) {
        let table = d.needs_table().then(|| dp::solve(&p, t, true).unwrap().table.unwrap());
        let pol = Policy::new(&d, &p, t, table.as_ref()).unwrap();
        for layer in 0..t {
            for x in layer_states(layer) {
                let a = pol.decide(&x, layer);
                prop_assert!(a == ActionProb::PURE_C || a == ActionProb::PURE_D || a == ActionProb::MIXED);
            }
        }
    }
}
