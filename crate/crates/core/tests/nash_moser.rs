use std::collections::BTreeMap;

use nmcore::lattice::{BasisDescriptor, EigenIndex, SpectralField};
use nmcore::nash_moser::{
    convergence_order, equation_residual, full_residual, recompute_residual, run, run_from, step, uniqueness_probe,
    IterationParams,
};
use nmcore::nonlinearity::NonlinearitySpec;
use nmcore::problem::ProblemSpec;
use nmcore::small_divisors::divisor;
use nmcore::Complex64;

const PHI: f64 = 1.618_033_988_749_895;

fn t1() -> BasisDescriptor {
    BasisDescriptor::torus(1).unwrap()
}

fn cos_x() -> SpectralField {
    SpectralField::torus_modes(t1(), &[(&[1], Complex64::new(0.5, 0.0)), (&[-1], Complex64::new(0.5, 0.0))], true).unwrap()
}

fn constant(c: f64) -> SpectralField {
    SpectralField::torus_modes(t1(), &[(&[0], Complex64::new(c, 0.0))], true).unwrap()
}

fn power_plus_cos(q: u32, eps: f64) -> ProblemSpec {
    let f = NonlinearitySpec::new(t1(), vec![(q as f64, constant(1.0)), (0.0, cos_x())]).unwrap();
    ProblemSpec::new(t1(), 2, PHI, eps, f).unwrap()
}

/// Coefficients of `u^2` on T^1 by direct convolution.
fn square_by_convolution(u: &SpectralField) -> BTreeMap<i64, Complex64> {
    let mut out = BTreeMap::new();
    for (j, a) in u.iter() {
        for (k, b) in u.iter() {
            *out.entry(j.components()[0] + k.components()[0]).or_insert(Complex64::new(0.0, 0.0)) += a[0] * b[0];
        }
    }
    out
}

#[test]
fn pure_forcing_has_zero_remainder() {
    let f = NonlinearitySpec::new(t1(), vec![(0.0, cos_x())]).unwrap();
    let p = ProblemSpec::new(t1(), 1, 1.0, 0.1, f).unwrap();
    let params = IterationParams::default();
    let zero = SpectralField::zero(t1(), true);
    let out = step(&p, &zero, 1, &params).unwrap();
    assert_eq!(out.residual.max_abs(), 0.0);
    let r = run(&p, &params).unwrap();
    assert!(r.converged);
    assert_eq!(r.steps.len(), 2);
    assert_eq!(r.steps[1].res_norm, 0.0);
}

#[test]
fn quadratic_remainder_is_eps_u1_squared() {
    let eps = 0.05;
    let p = power_plus_cos(2, eps);
    let params = IterationParams::default();
    let zero = SpectralField::zero(t1(), true);
    let out = step(&p, &zero, 1, &params).unwrap();
    // Linearized at zero the operator is diagonal: u_1 = eps Pi cos x / D.
    let d1 = divisor(1, PHI, eps, 2);
    for k in [-1i32, 1] {
        assert!((out.correction.coeff(&[k]) - Complex64::new(0.5 * eps / d1, 0.0)).norm() < 1e-15);
    }
    let n1 = params.cutoff(1) as i64;
    let sq = square_by_convolution(&out.correction);
    for (k, c) in sq.iter().filter(|(k, _)| k.abs() <= n1) {
        let got = out.residual.coeff(&[*k as i32]);
        assert!((got + c * eps).norm() < 1e-18, "mode {k}: {got} vs {}", -c * eps);
    }
    assert_eq!(out.residual.bandwidth() as i64, n1.min(2));
}

#[test]
fn zero_forcing_stays_at_zero() {
    let f = NonlinearitySpec::new(t1(), vec![(2.0, constant(1.0)), (3.0, cos_x())]).unwrap();
    let p = ProblemSpec::new(t1(), 2, PHI, 0.01, f).unwrap();
    let r = run(&p, &IterationParams::default()).unwrap();
    assert!(r.converged);
    assert!(r.corrections.iter().all(|c| c.max_abs() == 0.0));
    assert_eq!(r.solution.max_abs(), 0.0);
}

#[test]
fn eps_zero_converges_at_step_zero() {
    let r = run(&power_plus_cos(2, 0.0), &IterationParams::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.steps.len(), 1);
    assert_eq!(r.solution.max_abs(), 0.0);
}

#[test]
fn quadratic_run_converges_with_amplitude_of_order_eps() {
    let mut ratios = Vec::new();
    for eps in [1e-4, 3e-4, 1e-3] {
        let p = power_plus_cos(2, eps);
        let r = run(&p, &IterationParams::default()).unwrap();
        assert!(r.converged, "{:?}", r.failure);
        assert!(r.full_residual <= 10.0 * r.params.stop_tol);
        ratios.push(r.solution_l2 / eps);
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0f64), |(l, h), &x| (l.min(x), h.max(x)));
    assert!(hi / lo < 1.25, "{ratios:?}");
}

#[test]
fn residual_history_is_recomputable_bit_for_bit() {
    for (q, eps) in [(2, 1e-3), (3, 0.1), (2, 0.1)] {
        let p = power_plus_cos(q, eps);
        let r = run(&p, &IterationParams::default()).unwrap();
        for s in &r.steps {
            assert_eq!(recompute_residual(&p, &r, s.i).unwrap().to_bits(), s.res_norm.to_bits());
        }
    }
}

#[test]
fn remainder_matches_the_residual_of_the_accumulated_iterate() {
    let p = power_plus_cos(2, 0.1);
    let r = run(&p, &IterationParams::default()).unwrap();
    for s in &r.steps[1..] {
        assert!(s.identity_gap.unwrap() <= 1e-12 * r.steps[0].res_l2, "step {}: {:?}", s.i, s.identity_gap);
    }
}

#[test]
fn corrections_live_on_their_cutoffs() {
    let p = power_plus_cos(3, 0.1);
    let params = IterationParams::default();
    let r = run(&p, &params).unwrap();
    for (k, c) in r.corrections.iter().enumerate() {
        let n = params.cutoff(k + 1) as f64;
        assert!(c.iter().all(|(j, _)| j.within(n)));
    }
    assert!(r.solution.iter().all(|(j, _)| j.within(params.n_cap as f64)));
}

#[test]
fn full_residual_examples() {
    // u = 0 with forcing: eps ||f(x, 0)||_0.
    let p = power_plus_cos(2, 0.3);
    let zero = SpectralField::zero(t1(), true);
    let r = full_residual(&p, &zero, 8.0).unwrap();
    assert!((r - 0.3 * cos_x().l2_norm()).abs() < 1e-15);

    // Diagonal case solved exactly.
    let f = NonlinearitySpec::new(t1(), vec![(0.0, cos_x())]).unwrap();
    let p = ProblemSpec::new(t1(), 1, 1.0, 0.1, f).unwrap();
    let d = divisor(1, 1.0, 0.1, 1);
    let u = cos_x().scale(0.1 / d);
    assert!(full_residual(&p, &u, 4.0).unwrap() <= 1e-12);
}

#[test]
fn large_eps_reports_honestly() {
    let p = power_plus_cos(2, 0.5);
    let r = run(&p, &IterationParams::default()).unwrap();
    assert_eq!(r.converged, r.failure.is_none());
    if r.converged {
        assert!(r.full_residual <= 10.0 * r.params.stop_tol);
    }
    assert!(!r.steps.is_empty());
}

#[test]
fn order_examples() {
    let synthetic: Vec<f64> = (0..4).map(|i| 10f64.powf(-(2f64.powi(i)))).collect();
    assert!((convergence_order(&synthetic).order.unwrap() - 2.0).abs() < 1e-12);
    // Residuals above one are normalized before taking logarithms.
    let big = convergence_order(&[4.0, 2.0, 0.5]);
    assert!(big.order.is_some());
    assert!(convergence_order(&[1e-3, 1e-15, 1e-16]).order.is_none());
}

#[test]
fn superlinear_rate_at_moderate_eps() {
    // Large enough eps that three residuals stay above the noise floor.
    for (q, min_order) in [(2u32, 1.7), (3, 2.3)] {
        let r = run(&power_plus_cos(q, 0.1), &IterationParams::default()).unwrap();
        assert!(r.converged);
        let o = r.order.order.expect("three usable residuals");
        assert!(o >= min_order, "q={q}: order {o}");
    }
}

#[test]
fn rerun_from_own_solution_is_immediately_converged() {
    let p = power_plus_cos(2, 1e-3);
    let params = IterationParams::default();
    let r = run(&p, &params).unwrap();
    let again = run_from(&p, &params, &r.solution).unwrap();
    assert!(again.converged);
    assert!(again.steps.len() <= 2);
}

#[test]
fn initial_guess_outside_cap_is_rejected() {
    let p = power_plus_cos(2, 1e-3);
    let params = IterationParams { n_cap: 8, ..Default::default() };
    let u0 = SpectralField::torus_modes(t1(), &[(&[9], Complex64::new(1e-3, 0.0)), (&[-9], Complex64::new(1e-3, 0.0))], true).unwrap();
    assert!(run_from(&p, &params, &u0).is_err());
}

#[test]
fn uniqueness_examples() {
    let p = power_plus_cos(2, 1e-3);
    let params = IterationParams::default();
    let none = uniqueness_probe(&p, &params, 3, 0.0, 1).unwrap();
    assert_eq!(none.max_pairwise_distance, 0.0);
    let one = uniqueness_probe(&p, &params, 1, 1e-3, 2).unwrap();
    assert!(one.all_converged);
    assert_eq!(one.max_pairwise_distance, one.perturbations[0].distance_to_base.unwrap());
    let five = uniqueness_probe(&p, &params, 5, 1e-3, 3).unwrap();
    assert!(five.all_converged, "{:?}", five.perturbations);
    assert!(five.max_pairwise_distance <= 1e-8, "{}", five.max_pairwise_distance);
}

#[test]
fn equation_residual_of_zero_is_minus_eps_forcing() {
    let p = power_plus_cos(2, 0.2);
    let zero = SpectralField::zero(t1(), true);
    let e = equation_residual(&p, &zero, 4.0).unwrap();
    assert!((e.coeff(&[1]) + Complex64::new(0.1, 0.0)).norm() < 1e-16);
    assert!(e.get(&EigenIndex::torus(&[0])).map_or(true, |b| b[0].norm() < 1e-16));
}

#[test]
fn sphere_run_converges() {
    let s2 = BasisDescriptor::sphere();
    let mut block = vec![Complex64::new(0.0, 0.0); 5];
    block[2] = Complex64::new(1.0, 0.0);
    let forcing = SpectralField::from_blocks(s2, [(EigenIndex::sphere(2), block)], true).unwrap();
    let one = SpectralField::from_blocks(s2, [(EigenIndex::sphere(0), vec![Complex64::new(1.0, 0.0)])], true).unwrap();
    let f = NonlinearitySpec::new(s2, vec![(2.0, one), (0.0, forcing)]).unwrap();
    let p = ProblemSpec::new(s2, 1, 0.3, 0.02, f).unwrap();
    let params = IterationParams { n_cap: 8, ..Default::default() };
    let r = run(&p, &params).unwrap();
    assert!(r.converged, "{:?}", r.failure);
    assert!(r.full_residual <= 10.0 * params.stop_tol);
    assert!(r.solution.conjugation_defect() <= 1e-14);
    for s in &r.steps {
        assert_eq!(recompute_residual(&p, &r, s.i).unwrap().to_bits(), s.res_norm.to_bits());
    }
}
