use proptest::prelude::*;
use rand::Rng;

use fblcrd::bounds::{converse_lower, second_order_rate, FblQuery, SumOptions};
use fblcrd::crd::{solve_crd, SolverOptions};
use fblcrd::gaussian::{ln_cap_fraction, CapFormula, GaussianModel};
use fblcrd::lattice::LatticePmf;
use fblcrd::markov::{markov_tilted_quantities, random_chain, v_inf_spectral, MarkovModel};
use fblcrd::math::entropy;
use fblcrd::mc::map_trials;
use fblcrd::source::{random_instance, validate, Instance};
use fblcrd::tilted::{tilted_density, check_tilted_identities};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn at(inst: &Instance, frac: f64) -> f64 {
    inst.d_floor + frac * (inst.d_zero_rate - inst.d_floor)
}

fn conditional_entropy(inst: &Instance) -> f64 {
    let ps = inst.source.p_s();
    (0..inst.s_size()).filter(|&s| ps[s] > 0.0).map(|s| ps[s] * entropy(&inst.source.conditional(s).unwrap())).sum()
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn rate_is_nonincreasing_and_convex(seed in 0u64..100_000, a in 0.05f64..0.45, b in 0.55f64..0.95) {
        let inst = random_instance(seed, 4);
        prop_assume!(inst.d_zero_rate - inst.d_floor > 1e-3);
        let opts = SolverOptions::default();
        let (da, db) = (at(&inst, a), at(&inst, b));
        let ra = solve_crd(&inst, da, &opts).unwrap().rate.0;
        let rb = solve_crd(&inst, db, &opts).unwrap().rate.0;
        let rm = solve_crd(&inst, 0.5 * (da + db), &opts).unwrap().rate.0;
        prop_assert!(rb <= ra + 1e-9);
        prop_assert!(rm <= 0.5 * (ra + rb) + 1e-8);
        prop_assert!(rb >= -1e-12);
        prop_assert!(ra <= conditional_entropy(&inst) + 1e-9);
    }

    #[test]
    fn side_information_never_hurts(seed in 0u64..100_000, frac in 0.1f64..0.9) {
        let inst = random_instance(seed, 4);
        let blind = validate(inst.source.without_side_information(), inst.dist.clone()).unwrap();
        let d = at(&blind, frac).max(inst.d_floor);
        prop_assume!(d > blind.d_floor && d > inst.d_floor);
        let opts = SolverOptions::default();
        let with = solve_crd(&inst, d, &opts).unwrap().rate.0;
        let without = solve_crd(&blind, d, &opts).unwrap().rate.0;
        prop_assert!(with <= without + 1e-9);
    }

    #[test]
    fn tilted_density_properties(seed in 0u64..100_000, frac in 0.1f64..0.9) {
        let inst = random_instance(seed, 5);
        prop_assume!(inst.d_zero_rate - inst.d_floor > 1e-6);
        let sol = solve_crd(&inst, at(&inst, frac), &SolverOptions::default()).unwrap();
        let field = tilted_density(&sol, &inst).unwrap();
        prop_assert!((field.mean.0 - sol.rate.0).abs() < 1e-8);
        prop_assert!(field.variance >= 0.0);
        let report = check_tilted_identities(&field, &sol, &inst, 20, seed);
        prop_assert!(report.passed(), "{:?}", report);
    }

    #[test]
    fn converse_is_a_probability_and_monotone(seed in 0u64..100_000, frac in 0.2f64..0.8, n in 10usize..80) {
        let inst = random_instance(seed, 3);
        prop_assume!(inst.d_zero_rate - inst.d_floor > 1e-3);
        let d = at(&inst, frac);
        let sol = solve_crd(&inst, d, &SolverOptions::default()).unwrap();
        let field = tilted_density(&sol, &inst).unwrap();
        let opts = SumOptions { atom_cap: 100_000, mc_trials: 20_000, ..SumOptions::default() };
        let lo = FblQuery::new(n, d, 0.1, 0.5 * n as f64 * sol.rate.0).unwrap();
        let hi = lo.with_ln_m(1.5 * n as f64 * sol.rate.0);
        let a = converse_lower(&lo, &field, &inst, &opts).unwrap().value;
        let b = converse_lower(&hi, &field, &inst, &opts).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a + 1e-12);
    }
}

proptest! {
    #![proptest_config(cfg(256))]

    #[test]
    fn second_order_rate_orders(rate in 0.0f64..2.0, v in 0.0f64..3.0, e1 in 0.01f64..0.49, e2 in 0.51f64..0.99, n in 1usize..100_000) {
        let a = second_order_rate(n, e1, rate, v).unwrap();
        let b = second_order_rate(n, e2, rate, v).unwrap();
        prop_assert!(a >= rate && b <= rate && b <= a);
        let far = second_order_rate(100 * n, e1, rate, v).unwrap();
        prop_assert!(far <= a + 1e-15);
    }

    #[test]
    fn sakrison_never_exceeds_exact_cap(n in 3usize..2000, c1 in -0.99f64..0.99, c2 in -0.99f64..0.99) {
        let (lo, hi) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
        let exact_lo = ln_cap_fraction(n, lo, CapFormula::Exact);
        let exact_hi = ln_cap_fraction(n, hi, CapFormula::Exact);
        prop_assert!(exact_hi <= exact_lo + 1e-12);
        prop_assert!(exact_lo <= 1e-15);
        if hi > 0.0 {
            prop_assert!(ln_cap_fraction(n, hi, CapFormula::Sakrison) <= exact_hi + 1e-9);
        }
    }

    #[test]
    fn cap_angle_closes_at_the_outer_radius(vx in 0.2f64..5.0, vz in 0.2f64..5.0, frac in 0.05f64..0.95, n in 2usize..500, rho in 0.0f64..0.5) {
        let var = vx * vz / (vx + vz);
        let m = GaussianModel::new(vx, vz, frac * var).unwrap();
        let p = m.cap_params(n, rho * n as f64);
        prop_assert!((p.cos_theta(&m, p.r2) - 1.0).abs() < 1e-9);
        if p.r1 > 0.0 {
            prop_assert!((p.cos_theta(&m, p.r1) - 1.0).abs() < 1e-9);
        } else {
            prop_assert!((p.cos_theta(&m, -p.r1) + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lattice_powers_keep_mass_and_mean(p in 0.01f64..0.99, k in 1u64..60) {
        let pmf = LatticePmf::from_values(&[(0.0, 1.0 - p), (0.5, p)], 0.5).unwrap();
        let pw = pmf.power(k, 1 << 20).unwrap();
        prop_assert!((pw.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((pw.expect(|v| v) - 0.5 * k as f64 * p).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn spectral_and_ladder_agree(seed in 0u64..100_000) {
        let m = random_chain(seed, 6);
        let inst = m.marginal_instance().unwrap();
        prop_assume!(inst.d_zero_rate - inst.d_floor > 0.05);
        let t = markov_tilted_quantities(&m, at(&inst, 0.5), &SolverOptions::default()).unwrap();
        let s = v_inf_spectral(&m, &t.j, &t.ladder);
        prop_assert!((s.v_inf - t.ladder.v_inf).abs() <= 1e-8 * t.ladder.lag0.max(1.0));
        prop_assert!(t.ladder.v_inf >= -1e-12);
    }

    #[test]
    fn memoryless_kernel_has_no_lag_terms(seed in 0u64..100_000) {
        let inst = random_instance(seed, 3);
        prop_assume!(inst.d_zero_rate - inst.d_floor > 1e-3);
        let m = MarkovModel::iid(&inst).unwrap();
        let t = markov_tilted_quantities(&m, at(&inst, 0.5), &SolverOptions::default()).unwrap();
        prop_assert!(t.ladder.covs.iter().all(|c| c.abs() < 1e-13));
        prop_assert!((t.ladder.v_inf - t.field.variance).abs() < 1e-9);
    }

    #[test]
    fn trials_do_not_depend_on_thread_count(seed in any::<u64>(), trials in 1usize..3000, chunk in 1usize..700) {
        let draw = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
                .install(|| map_trials(seed, trials, chunk, |rng| rng.random::<u64>()))
        };
        prop_assert_eq!(draw(1), draw(3));
    }
}
