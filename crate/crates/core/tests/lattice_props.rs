use nmcore::lattice::{sobolev_norm, sobolev_norm_with, smoothing_gain, BasisDescriptor, SpectralField, WeightMode};
use nmcore::sampling::random_real_field;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SLACK: f64 = 1.0 + 1e-12;

fn basis(kind: u8, mode: WeightMode) -> BasisDescriptor {
    match kind {
        0 => BasisDescriptor::sphere(),
        d => BasisDescriptor::torus(d as usize).unwrap(),
    }
    .with_weight_mode(mode)
}

fn field(kind: u8, mode: WeightMode, seed: u64, max_mode: f64, decay: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_real_field(basis(kind, mode), max_mode, decay, &mut rng)
}

fn mode_strategy() -> impl Strategy<Value = WeightMode> {
    prop_oneof![Just(WeightMode::Exponential), Just(WeightMode::Polynomial)]
}

proptest! {
    #[test]
    fn parseval(kind in 0u8..=3, mode in mode_strategy(), seed: u64, max_mode in 1.0f64..8.0) {
        let u = field(kind, mode, seed, max_mode, 0.3);
        let direct: f64 = u.iter().flat_map(|(_, b)| b.iter()).map(|c| c.re * c.re + c.im * c.im).sum();
        let n = sobolev_norm(&u, 0.0).unwrap();
        prop_assert!((n * n - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn smoothing_pair(
        kind in 0u8..=3,
        mode in mode_strategy(),
        seed: u64,
        cutoff in 1.0f64..8.0,
        s in 0.0f64..0.5,
        d in 0.0f64..0.5,
    ) {
        let u = field(kind, mode, seed, 10.0, 0.2);
        let low = u.project(cutoff);
        let high = u.project_complement(cutoff);
        let lhs = sobolev_norm(&low, s + d).unwrap();
        let rhs = smoothing_gain(mode, cutoff, d) * sobolev_norm(&u, s).unwrap();
        prop_assert!(lhs <= rhs * SLACK, "{lhs} > {rhs}");
        if mode == WeightMode::Polynomial {
            prop_assert!(lhs <= cutoff.powf(d) * sobolev_norm(&u, s).unwrap() * SLACK);
        }
        let lhs = sobolev_norm(&high, s).unwrap();
        let rhs = cutoff.powf(-d) * sobolev_norm(&u, s + d).unwrap();
        prop_assert!(lhs <= rhs * SLACK, "{lhs} > {rhs}");
    }

    #[test]
    fn monotone_in_s(kind in 0u8..=3, mode in mode_strategy(), seed: u64, s in 0.0f64..1.0, ds in 0.0f64..1.0) {
        let u = field(kind, mode, seed, 6.0, 0.0);
        prop_assert!(sobolev_norm(&u, s).unwrap() <= sobolev_norm(&u, s + ds).unwrap() * SLACK);
    }

    #[test]
    fn projectors(kind in 0u8..=3, seed: u64, cutoff in 0.0f64..9.0) {
        let u = field(kind, WeightMode::Exponential, seed, 8.0, 0.0);
        let p = u.project(cutoff);
        prop_assert_eq!(p.project(cutoff), p.clone());
        prop_assert_eq!(u.project_complement(cutoff).project(cutoff).len(), 0);
        prop_assert_eq!(p.add(&u.project_complement(cutoff)), u);
    }

    #[test]
    fn real_fields_survive_enforcement(kind in 0u8..=3, seed: u64) {
        let u = field(kind, WeightMode::Exponential, seed, 6.0, 0.1);
        prop_assert!(u.conjugation_defect() <= 1e-15);
        prop_assert_eq!(u.enforce_real(), u);
    }
}

#[test]
fn weight_mode_override_matches_descriptor() {
    let u = field(1, WeightMode::Exponential, 7, 5.0, 0.0);
    let poly = u.clone().with_basis(basis(1, WeightMode::Polynomial));
    assert_eq!(
        sobolev_norm_with(&u, 0.4, WeightMode::Polynomial).unwrap(),
        sobolev_norm(&poly, 0.4).unwrap()
    );
}
