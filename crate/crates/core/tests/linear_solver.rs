use nmcore::block::{CMatrix, CVector};
use nmcore::lattice::{build_index_set, sobolev_norm, BasisDescriptor, SpectralField};
use nmcore::linear_solver::{
    assemble_linearized, dense_solve, neumann_solve, prepare_partition, schur_complement, solve_linearized, to_field,
    SolverOptions,
};
use nmcore::sampling::{random_linear_instance, LinearInstance};
use nmcore::small_divisors::verify_clusters;
use nmcore::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `D + eps T` built straight from the multiplier's Fourier coefficients:
/// `T_j^{j'} = -b_{j - j'}`.
fn torus_matrix_from_coefficients(inst: &LinearInstance) -> CMatrix {
    let p = &inst.problem;
    let set = build_index_set(p.basis, inst.cutoff).unwrap();
    let n = set.len();
    let mut m = CMatrix::zeros(n, n);
    for r in 0..n {
        let j = set.get(r).components();
        m[(r, r)] += Complex64::new(p.divisor(&set.get(r)), 0.0);
        for c in 0..n {
            let k: Vec<i32> = j.iter().zip(set.get(c).components()).map(|(a, b)| (a - b) as i32).collect();
            m[(r, c)] -= inst.b.coeff(&k) * p.epsilon;
        }
    }
    m
}

fn instance(seed: u64) -> LinearInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 1 + (seed % 2) as usize;
    let cutoff = if dim == 1 { rng.gen_range(4..=32) } else { rng.gen_range(3..=8) } as f64;
    let rho = 1 + (seed % 3 == 0) as u32;
    let resonant = seed % 4 != 1;
    random_linear_instance(
        BasisDescriptor::torus(dim).unwrap(),
        cutoff,
        rho,
        0.05,
        resonant,
        SolverOptions::default().threshold,
        &mut rng,
    )
}

#[test]
fn resolvent_solve_matches_independent_dense_matrix() {
    let opts = SolverOptions { dense_fallback: false, ..Default::default() };
    let mut singular_cases = 0;
    for seed in 0..60 {
        let inst = instance(seed);
        let zero = SpectralField::zero(inst.problem.basis, true);
        let op = assemble_linearized(&inst.problem, &zero, inst.cutoff).unwrap();
        let rhs = inst.rhs.to_vector(op.index());
        let (x, report, partition) = solve_linearized(&op, &rhs, &opts).unwrap();
        verify_clusters(&partition).unwrap();
        singular_cases += (report.schur_dim > 0) as usize;
        let oracle = torus_matrix_from_coefficients(&inst);
        let y = oracle.clone().lu().solve(&rhs).unwrap();
        assert!((&x - &y).norm() <= 1e-8 * y.norm(), "seed {seed}: {}", (&x - &y).norm() / y.norm());
        assert!((&op.to_dense() - &oracle).norm() <= 1e-14 * oracle.norm());
    }
    assert!(singular_cases >= 20, "only {singular_cases} instances exercised the Schur path");
}

#[test]
fn dense_fallback_agrees_with_resolvent() {
    for seed in 100..110 {
        let inst = instance(seed);
        let zero = SpectralField::zero(inst.problem.basis, true);
        let op = assemble_linearized(&inst.problem, &zero, inst.cutoff).unwrap();
        let rhs = inst.rhs.to_vector(op.index());
        let (x, _, _) = solve_linearized(&op, &rhs, &SolverOptions::default()).unwrap();
        let y = dense_solve(&op, &rhs, 4096).unwrap().solution;
        assert!((&x - &y).norm() <= 1e-8 * y.norm());
    }
}

#[test]
fn neumann_series_solves_the_preconditioned_system() {
    let mut checked = 0;
    for seed in 200..220 {
        let inst = instance(seed);
        let zero = SpectralField::zero(inst.problem.basis, true);
        let op = assemble_linearized(&inst.problem, &zero, inst.cutoff).unwrap();
        let p = prepare_partition(&op, &SolverOptions::default()).unwrap();
        if !p.singular.is_empty() {
            continue;
        }
        let rhs = inst.rhs.to_vector(op.index());
        let tol = 1e-12;
        let n = neumann_solve(op.diag(), op.t(), op.epsilon(), &rhs, tol, 200).unwrap();
        // (I + eps D^{-1} T) y - D^{-1} rhs
        let ty = op.t().matvec(&n.solution) * Complex64::new(op.epsilon(), 0.0);
        let d = op.diag();
        let lhs = CVector::from_iterator(rhs.len(), (0..rhs.len()).map(|k| n.solution[k] + ty[k] / d[k] - rhs[k] / d[k]));
        let scale = CVector::from_iterator(rhs.len(), (0..rhs.len()).map(|k| rhs[k] / d[k])).norm();
        assert!(lhs.norm() <= tol * scale.max(1.0) * 10.0, "seed {seed}: {}", lhs.norm());
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn schur_complement_is_self_adjoint_for_real_multipliers() {
    for seed in 300..320 {
        let inst = instance(seed);
        let zero = SpectralField::zero(inst.problem.basis, true);
        let op = assemble_linearized(&inst.problem, &zero, inst.cutoff).unwrap();
        assert!(op.t().is_self_adjoint());
        assert!(op.t().adjoint_defect() <= 1e-14);
        let p = prepare_partition(&op, &SolverOptions::default()).unwrap();
        if p.singular.is_empty() {
            continue;
        }
        let s = schur_complement(&op, &p, &SolverOptions::default()).unwrap();
        let m = s.matrix.to_dense();
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        assert!((&m - m.adjoint()).norm() <= 1e-10 * scale);
    }
}

#[test]
fn tame_bound_constant_stays_bounded_in_n() {
    // ||L^{-1} h||_{s1} <= C N^{tau + kappa0} ||h||_{s2}, s1 < s2.
    let (tau, kappa0) = (2.0, 2.0 + 0.0 + 1.0 + 1.0);
    let (s1, s2) = (0.05, 0.1);
    let basis = BasisDescriptor::torus(1).unwrap();
    let opts = SolverOptions::default();
    let mut constants = Vec::new();
    for n in [8.0, 16.0, 32.0] {
        let mut worst: f64 = 0.0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_linear_instance(basis, n, 2, 0.05, seed % 2 == 0, opts.threshold, &mut rng);
            let zero = SpectralField::zero(basis, true);
            let op = assemble_linearized(&inst.problem, &zero, n).unwrap();
            let rhs = inst.rhs.to_vector(op.index());
            let (x, _, _) = solve_linearized(&op, &rhs, &opts).unwrap();
            let u = to_field(&op, &x, false);
            let h = SpectralField::from_vector(op.index(), &rhs, false);
            let c = sobolev_norm(&u, s1).unwrap() / (n.powf(tau + kappa0) * sobolev_norm(&h, s2).unwrap());
            worst = worst.max(c);
        }
        eprintln!("tame bound: N = {n}, C = {worst:.3e}");
        constants.push(worst);
    }
    let max = constants.iter().copied().fold(0.0, f64::max);
    assert!(max.is_finite());
    assert!(constants[2] <= 2.0 * constants[0].max(constants[1]), "{constants:?}");
}
