use fklab::discretize::{
    assemble_generator, local_sp_explicit_check, random_piecewise_linear, Grid,
};
use fklab::model::{KernelSpec, PotentialShape, PotentialSpec, RadiusLaw, ValleyGeometry};
use fklab::montecarlo::{simulate_paths, ChainPlan, SimScheme};
use fklab::rates::{ComparisonFunction, RateBundle, RateConstants};
use fklab::spectral::{heat_kernel, solve_spectrum};
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    (0usize..4, 0.3f64..1.8, 0.5f64..1.0, 1.2f64..3.0).prop_map(|(family, alpha, kappa, gamma)| {
        match family {
            0 => KernelSpec::truncated(alpha, kappa).unwrap(),
            1 => KernelSpec::stable_like(alpha, kappa).unwrap(),
            2 => KernelSpec::tempered(alpha, kappa, gamma).unwrap(),
            _ => KernelSpec::variable_order(alpha, (alpha + 0.1).min(1.9), kappa).unwrap(),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_sandwiched(k in kernel_strategy(), x in -5.0f64..5.0, frac in 0.01f64..1.0, sign in prop::bool::ANY) {
        let z = if sign { frac * k.kappa } else { -frac * k.kappa };
        let y = x + z;
        let j = k.density(x, y);
        prop_assert!((j - k.density(y, x)).abs() <= 1e-12 * j);
        let r = z.abs();
        prop_assert!(k.c1 * r.powf(-1.0 - k.alpha1) <= j * (1.0 + 1e-12));
        prop_assert!(j <= k.c2 * r.powf(-1.0 - k.alpha2) * (1.0 + 1e-12));
    }

    #[test]
    fn truncated_kernel_vanishes_beyond_cutoff(alpha in 0.3f64..1.8, kappa in 0.2f64..3.0, x in -5.0f64..5.0, extra in 1e-6f64..10.0) {
        let k = KernelSpec::truncated(alpha, kappa).unwrap();
        prop_assert_eq!(k.density(x, x + kappa + extra), 0.0);
        prop_assert_eq!(k.density(x, x - kappa - extra), 0.0);
    }

    #[test]
    fn potentials_are_nonnegative(theta in 0.1f64..4.0, t2 in -0.99f64..3.0, x in -50.0f64..50.0) {
        prop_assert!(PotentialSpec::power(theta).unwrap().eval(x) >= 0.0);
        prop_assert!(PotentialSpec::power_log(1.0, theta, t2 * theta).unwrap().eval(x) >= 0.0);
    }

    #[test]
    fn valley_potential_is_one_on_balls(n in 1u64..40, frac in -0.999f64..0.999, k0 in 1.05f64..4.0) {
        let g = ValleyGeometry {
            k0,
            radius_law: RadiusLaw::Power { alpha: 0.5 },
            count: None,
            off_valley: Box::new(PotentialShape::Power { c: 1.0, theta: 2.0 }),
        };
        // balls narrower than the float spacing at their center are not resolvable
        prop_assume!(g.radius(n) > 1e-12 * g.center(n));
        let x = g.center(n) + frac * g.radius(n);
        let v = PotentialSpec::valley(g).unwrap();
        prop_assert_eq!(v.eval(x), 1.0);
    }

    #[test]
    fn comparison_function_is_radially_nonincreasing(theta in 0.2f64..3.0, eps in 0.001f64..0.09, a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let phi = ComparisonFunction::new(1.0, eps, PotentialSpec::power(theta).unwrap()).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (phi.eval(lo), phi.eval(-hi));
        prop_assert!(p_lo > 0.0 || lo > 0.0);
        prop_assert!(p_lo <= 1.0 && p_hi <= 1.0);
        prop_assert!(p_hi <= p_lo);
    }

    #[test]
    fn chain_geometry_holds_above_threshold(eps in 0.005f64..0.09, kappa in 0.5f64..2.0, scale in 1.0f64..20.0) {
        let k = KernelSpec::truncated(1.0, kappa).unwrap();
        let probe = ChainPlan::new(1.0, &k, eps).unwrap();
        let x = probe.validity_threshold() * scale;
        let plan = ChainPlan::new(x, &k, eps).unwrap();
        prop_assert!(plan.check_geometry().is_ok(), "{:?}", plan.check_geometry());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rate_functions_are_monotone(theta in 0.5f64..3.0, alpha in 0.4f64..1.6, e in -5.0f64..1.0, step in 0.05f64..2.0) {
        let k = KernelSpec::truncated(alpha, 1.0).unwrap();
        let b = RateBundle::new(&k, PotentialSpec::power(theta).unwrap(), 1.0 / 22.0, RateConstants::default()).unwrap();
        let (s, t) = (10f64.powf(e), 10f64.powf(e + step));
        prop_assert!(b.ln_beta(t).unwrap() <= b.ln_beta(s).unwrap() + 1e-9);
        prop_assert!(b.ln_gamma(t).unwrap() >= b.ln_gamma(s).unwrap() - 1e-9);
        if alpha < 1.0 {
            let (r1, r2) = (1.0 + 10f64.powf(e + 4.0), 1.0 + 10f64.powf(e + 4.0 + step));
            prop_assert!(b.psi(r2).unwrap() <= b.psi(r1).unwrap() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn discrete_operator_invariants(k in kernel_strategy(), theta in 0.5f64..3.0, r in 1.5f64..3.0, half in 30usize..45) {
        let grid = Grid::new(r, 2 * half + 1).unwrap();
        let asm = assemble_generator(&k, &PotentialSpec::power(theta).unwrap(), grid).unwrap();
        let a = &asm.a;
        prop_assert!((a - a.transpose()).abs().max() == 0.0);
        let bound = if k.is_translation_invariant() { 1e-6 } else { 10.0 * grid.h * grid.h };
        prop_assert!(asm.asymmetry_defect <= bound);

        let spec = solve_spectrum(&asm, grid.n).unwrap();
        let norm = asm.norm();
        prop_assert!(spec.eigenvalues[0] >= -1e-12 * norm);
        prop_assert!(spec.lambda1() > 0.0 && spec.gap() > 0.0);
        prop_assert!(spec.max_residual <= 1e-8 * norm);
        prop_assert!(spec.orthonormality_defect <= 1e-8);
        prop_assert!(spec.ground_state.iter().all(|&p| p > 0.0));
        let l1 = spec.lambda1();
        let var_bound = if k.is_translation_invariant() { 1e-6 } else { 10.0 * grid.h * grid.h };
        prop_assert!((asm.form(&spec.ground_state) - l1).abs() <= var_bound * l1);
    }

    #[test]
    fn heat_kernel_composes(theta in 0.5f64..3.0, t in 0.05f64..2.0) {
        let k = KernelSpec::truncated(1.0, 1.0).unwrap();
        let grid = Grid::new(4.0, 81).unwrap();
        let asm = assemble_generator(&k, &PotentialSpec::power(theta).unwrap(), grid).unwrap();
        let spec = solve_spectrum(&asm, grid.n).unwrap();
        let p1 = heat_kernel(&spec, t);
        let p2 = heat_kernel(&spec, 2.0 * t);
        let composed = &p1.values * &p1.values * grid.h;
        let scale = p2.values.abs().max();
        prop_assert!((&p2.values - composed).abs().max() <= 1e-8 * scale);
        prop_assert!((&p1.values - p1.values.transpose()).abs().max() <= 1e-12 * p1.max_entry());
        prop_assert!(p1.values.min() >= -1e-12 * p1.max_entry());
    }

    #[test]
    fn mollifier_inequality_has_no_violations(alpha in 0.3f64..1.8, seed in any::<u64>(), pair in 0usize..9) {
        let k = KernelSpec::truncated(alpha, 1.0).unwrap();
        let grid = Grid::new(8.0, 321).unwrap();
        let (r, s) = ([1.0, 2.0, 4.0][pair / 3], [0.25, 0.5, 1.0][pair % 3]);
        for f in random_piecewise_linear(&grid, 6.0, 0.5, 5, seed) {
            let (lhs, rhs) = local_sp_explicit_check(&grid, &k, &f, r, s).unwrap();
            prop_assert!(lhs <= rhs, "lhs {} > rhs {}", lhs, rhs);
        }
    }

    #[test]
    fn paths_do_not_depend_on_worker_count(seed in any::<u64>(), workers in 2usize..5) {
        let k = KernelSpec::truncated(1.0, 1.0).unwrap();
        let v = PotentialSpec::power(2.0).unwrap();
        let one = SimScheme::new(&k, 0.05, 0.01, seed, 1).unwrap();
        let many = SimScheme::new(&k, 0.05, 0.01, seed, workers).unwrap();
        let a = simulate_paths(&k, Some(&v), &one, 0.3, 0.5, 40, &[], true).unwrap();
        let b = simulate_paths(&k, Some(&v), &many, 0.3, 0.5, 40, &[], true).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!(p.terminal.to_bits(), q.terminal.to_bits());
            prop_assert_eq!(p.integrated_v.to_bits(), q.integrated_v.to_bits());
            prop_assert_eq!(&p.jump_sizes, &q.jump_sizes);
        }
    }
}
