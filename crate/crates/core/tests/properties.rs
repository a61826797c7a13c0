use proptest::prelude::*;
use rand::SeedableRng;

use qedsim::arrivals::{make_source, ArrivalFamily};
use qedsim::config::ExperimentConfig;
use qedsim::exec::Execution;
use qedsim::finite_sim::event::run_event_sim;
use qedsim::finite_sim::{sample_multinomial, EmbeddedChain};
use qedsim::limit_chain::checks::{gamma_sandwich_check, y_bounds_check, y_identity_residual};
use qedsim::limit_chain::{record, LimitChain};
use qedsim::model::{qed_scaling, ServiceDistribution};
use qedsim::rng::{Purpose, SeedStream, SimRng};
use qedsim::stats::ks_two_sample;

/// Aperiodic law on `{1..K}`: mass at 1 keeps the gcd at one.
fn arb_law() -> impl Strategy<Value = ServiceDistribution> {
    prop::collection::vec(0.0f64..1.0, 0..5).prop_map(|tail| {
        let mut pairs = vec![(1u32, 0.2)];
        pairs.extend(tail.iter().enumerate().map(|(i, &m)| (i as u32 + 2, m)));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let pairs: Vec<(u32, f64)> = pairs.into_iter().map(|(k, m)| (k, m / total)).collect();
        ServiceDistribution::from_pairs(&pairs).unwrap()
    })
}

fn arb_family() -> impl Strategy<Value = ArrivalFamily> {
    prop_oneof![
        Just(ArrivalFamily::Deterministic),
        Just(ArrivalFamily::Exponential),
        (1u32..6).prop_map(|shape| ArrivalFamily::Erlang { shape }),
        (1.1f64..3.0).prop_map(|c_a| ArrivalFamily::Hyperexponential { c_a }),
        Just(ArrivalFamily::Uniform),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn limit_chain_pathwise_checks(d in arb_law(), beta in 0.1f64..3.0, c_a in 0.0f64..2.0, seed in any::<u64>()) {
        let mut chain = LimitChain::new(&d, beta, c_a, SimRng::seed_from_u64(seed));
        let tr = record(&mut chain, 3_000).unwrap();
        prop_assert!(y_identity_residual(&tr, &d, beta).unwrap().holds());
        prop_assert_eq!(y_bounds_check(&tr, &d, beta, 3).unwrap().violations(), 0);
        prop_assert_eq!(gamma_sandwich_check(&tr, &d, beta, 5).unwrap().violations, 0);
        prop_assert!(tr.q.iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn embedded_chain_conserves(d in arb_law(), n in 4u64..300, frac in 0.05f64..0.9, fam in arb_family(), seed in any::<u64>()) {
        // β√n < n
        let beta = frac * (n as f64).sqrt();
        let sc = qed_scaling(n, beta, &d).unwrap();
        let seeds = SeedStream::new(seed);
        let src = make_source(fam, sc.lambda_n, seeds.seed(0, Purpose::Arrivals)).unwrap();
        let mut chain = EmbeddedChain::new(sc, d.clone(), src, seeds.rng(0, Purpose::Service));
        for _ in 0..1_500 {
            let q = chain.state.q;
            prop_assert!(chain.step().is_ok());
            let s = &chain.state;
            prop_assert_eq!(s.q + chain.last.j_norm, q + chain.last.arrivals);
            prop_assert!(s.busy() <= n);
            prop_assert!(s.q == 0 || s.busy() == n);
            prop_assert!(chain.view().identity_error(sc.beta_n) < 1e-9);
        }
    }

    #[test]
    fn multinomial_keeps_total_and_support(m in 0u64..10_000, d in arb_law(), seed in any::<u64>()) {
        let mut out = vec![0u64; d.k()];
        sample_multinomial(m, d.p(), &mut SimRng::seed_from_u64(seed), &mut out);
        prop_assert_eq!(out.iter().sum::<u64>(), m);
        for (o, p) in out.iter().zip(d.p()) {
            prop_assert!(*p > 0.0 || *o == 0);
        }
    }

    #[test]
    fn event_sim_is_fcfs_and_work_conserving(d in arb_law(), n in 2u64..60, frac in 0.1f64..0.9, fam in arb_family(), seed in any::<u64>()) {
        let beta = frac * (n as f64).sqrt();
        let sc = qed_scaling(n, beta, &d).unwrap();
        let mut src = make_source(fam, sc.lambda_n, seed).unwrap();
        let s = run_event_sim(n, &d, &mut src, 300, &mut SimRng::seed_from_u64(seed ^ 1), &mut ());
        prop_assert_eq!(s.order_violations, 0);
        prop_assert_eq!(s.idle_with_queue, 0);
        prop_assert_eq!(s.epochs, 300);
    }

    #[test]
    fn ks_is_a_bounded_symmetric_distance(a in prop::collection::vec(-5.0f64..5.0, 1..100), b in prop::collection::vec(-5.0f64..5.0, 1..100)) {
        let d = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_two_sample(&b, &a));
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn replication_order_is_schedule_free(reps in 1usize..6, seed in any::<u64>()) {
        let d = ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let run = |exec: Execution| exec.map(reps, |r| {
            LimitChain::new(&d, 1.0, 1.0, SeedStream::new(seed).rng(r as u64, Purpose::LimitChain)).sample_q_hat(50, 2)
        });
        prop_assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
    }

    #[test]
    fn service_law_json_round_trip(d in arb_law()) {
        let text = serde_json::to_string(&d).unwrap();
        let back: ServiceDistribution = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.p().len(), d.p().len());
        for (a, b) in back.p().iter().zip(d.p()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn config_resolves_to_a_fixed_point(beta in 0.01f64..5.0, seed in any::<u64>(), ns in prop::collection::btree_set(1u64..10_000, 1..5)) {
        let ns: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
        let text = format!(
            "[model]\nservice = {{ 1 = 0.25, 3 = 0.75 }}\nbeta = {beta:?}\n[arrivals]\nfamily = \"uniform\"\n[run]\nmode = \"compare\"\nn = [{}]\nseed = {seed}\n[output]\ndirectory = \"x\"\n",
            ns.join(", ")
        );
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        prop_assert_eq!(&c, &again);
        prop_assert_eq!(c.to_toml_string(), again.to_toml_string());
    }
}
