//! Seeded random fields for perturbations, benchmarks and property tests.

use num_complex::Complex64;
use rand::Rng;

use crate::lattice::{build_index_set, BasisDescriptor, SpectralField};
use crate::nonlinearity::NonlinearitySpec;
use crate::problem::ProblemSpec;

/// Random real field on `|j + rho| <= max_mode` with coefficients uniform in
/// the unit square scaled by `e^{-decay |j + rho|}`.
pub fn random_real_field<R: Rng + ?Sized>(basis: BasisDescriptor, max_mode: f64, decay: f64, rng: &mut R) -> SpectralField {
    let set = build_index_set(basis, max_mode.max(1.0)).expect("valid cutoff");
    let blocks = set.indices().iter().map(|j| {
        let w = (-decay * j.shift_norm()).exp();
        let block = (0..j.block_dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w)
            .collect();
        (*j, block)
    });
    SpectralField::from_blocks(basis, blocks, false)
        .expect("blocks sized by the index set")
        .enforce_real()
}

/// Random complex field (no reality constraint) on `|j + rho| <= max_mode`.
pub fn random_complex_field<R: Rng + ?Sized>(basis: BasisDescriptor, max_mode: f64, decay: f64, rng: &mut R) -> SpectralField {
    let set = build_index_set(basis, max_mode.max(1.0)).expect("valid cutoff");
    let blocks = set.indices().iter().map(|j| {
        let w = (-decay * j.shift_norm()).exp();
        let block = (0..j.block_dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w)
            .collect();
        (*j, block)
    });
    SpectralField::from_blocks(basis, blocks, false).expect("blocks sized by the index set")
}

/// Linear test problem `f(x, u) = b(x) u` for benchmarks and oracle checks.
#[derive(Debug, Clone)]
pub struct LinearInstance {
    pub problem: ProblemSpec,
    /// Multiplier `b = d_u f`.
    pub b: SpectralField,
    pub rhs: SpectralField,
    pub cutoff: f64,
}

/// Random real `b` on `|k| <= 4` with `|b_k| <= e^{-|k|/2}`, random complex
/// `rhs` on the cutoff and `eps` uniform in `(0, eps_max]`. With `resonant`
/// the coefficient `a` is tuned so that one divisor falls in
/// `0 < |D_j| < threshold / 2`, otherwise `a` is uniform in `[0.5, 2]`.
pub fn random_linear_instance<R: Rng + ?Sized>(
    basis: BasisDescriptor,
    cutoff: f64,
    rho: u32,
    eps_max: f64,
    resonant: bool,
    threshold: f64,
    rng: &mut R,
) -> LinearInstance {
    let b = random_real_field(basis, 4.0, 0.5, rng);
    let rhs = random_complex_field(basis, cutoff, 0.0, rng);
    let eps = eps_max * rng.gen_range(0.1..=1.0);
    let a = if resonant {
        let set = build_index_set(basis, cutoff).expect("valid cutoff");
        let candidates: Vec<i64> = set.indices().iter().map(|j| j.eigenvalue()).filter(|&l| l > 0).collect();
        let lambda = candidates[rng.gen_range(0..candidates.len())] as f64;
        let delta = threshold * rng.gen_range(0.02..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        (lambda + 1.0 + delta) / (eps * lambda.powi(rho as i32))
    } else {
        rng.gen_range(0.5..2.0)
    };
    let f = NonlinearitySpec::new(basis, vec![(1.0, b.clone())]).expect("degree one is supported");
    let problem = ProblemSpec::new(basis, rho, a, eps, f).expect("valid problem");
    LinearInstance { problem, b, rhs, cutoff }
}
