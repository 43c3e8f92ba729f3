use nmcore::lattice::{build_index_set, BasisDescriptor};
use nmcore::small_divisors::{
    cluster_singular, diophantine_constant, divisors, linear_fit, measure_scan, melnikov_weight, partition_sites,
    verify_clusters, MeasureScanConfig,
};
use proptest::prelude::*;

fn scan_config(cutoff: f64, seed: u64) -> MeasureScanConfig {
    MeasureScanConfig {
        basis: BasisDescriptor::torus(1).unwrap(),
        a_min: 1.0,
        a_max: 2.0,
        grid_count: 2000,
        epsilon: 1e-2,
        rho: 2,
        cutoff,
        gammas: vec![0.05, 0.1, 0.2, 0.4, 0.8],
        tau: 1.0,
        seed,
    }
}

/// Exact measure of `{a in [a_min, a_max] : min_j |D_j(a)| w_j < gamma}`:
/// each nonzero eigenvalue excludes an interval around its resonance.
fn exact_rejected_fraction(cfg: &MeasureScanConfig, gamma: f64) -> (f64, usize) {
    let set = build_index_set(cfg.basis, cfg.cutoff).unwrap();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for j in set.indices() {
        let lam = j.eigenvalue() as f64;
        if lam == 0.0 {
            assert!(1.0 >= gamma, "the zero mode is never excluded here");
            continue;
        }
        let slope = cfg.epsilon * lam.powi(cfg.rho as i32);
        let center = (lam + 1.0) / slope;
        let half = gamma / (melnikov_weight(j.shift_norm(), cfg.tau) * slope);
        let (lo, hi) = ((center - half).max(cfg.a_min), (center + half).min(cfg.a_max));
        if lo < hi {
            intervals.push((lo, hi));
        }
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut total, mut cur): (f64, Option<(f64, f64)>) = (0.0, None);
    for (lo, hi) in intervals.iter().copied() {
        cur = match cur {
            Some((a, b)) if lo <= b => Some((a, b.max(hi))),
            Some((a, b)) => {
                total += b - a;
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    (total / (cfg.a_max - cfg.a_min), intervals.len())
}

#[test]
fn sampled_fraction_matches_exact_intervals() {
    for cutoff in [20.0, 50.0] {
        let cfg = scan_config(cutoff, 0);
        let scan = measure_scan(&cfg).unwrap();
        for row in &scan.rows {
            let (exact, count) = exact_rejected_fraction(&cfg, row.gamma);
            // Jittered sampling misjudges at most one cell per interval endpoint.
            let bound = 2.0 * count as f64 / cfg.grid_count as f64;
            assert!((row.rejected_fraction - exact).abs() <= bound, "gamma {}: {} vs {exact}", row.gamma, row.rejected_fraction);
        }
        let g: Vec<f64> = cfg.gammas.clone();
        let exact: Vec<f64> = g.iter().map(|&x| exact_rejected_fraction(&cfg, x).0).collect();
        assert!(linear_fit(&g, &exact).r_squared > 0.999);
    }
}

#[test]
fn excluded_set_grows_with_gamma_and_cutoff() {
    let small = measure_scan(&scan_config(10.0, 3)).unwrap();
    let large = measure_scan(&scan_config(50.0, 3)).unwrap();
    assert_eq!(small.grid, large.grid);
    for (rs, rl) in small.ratios.iter().zip(&large.ratios) {
        assert!(rl <= rs);
    }
    for scan in [&small, &large] {
        assert!(scan.rows.windows(2).all(|w| w[0].rejected_fraction <= w[1].rejected_fraction));
        assert!(scan.rows.iter().all(|r| (0.0..=1.0).contains(&r.rejected_fraction)));
    }
    for (a, b) in small.rows.iter().zip(&large.rows) {
        assert!(a.rejected_fraction <= b.rejected_fraction);
    }
}

#[test]
fn scan_is_reproducible_and_csv_has_one_row_per_gamma() {
    let a = measure_scan(&scan_config(30.0, 11)).unwrap();
    let b = measure_scan(&scan_config(30.0, 11)).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let csv = a.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma,rejected_fraction,N,epsilon,rho");
    assert_eq!(lines.len(), 6);
}

#[test]
fn partition_recombines_to_the_index_set() {
    // Resonances placed on the shells |j|^2 = 9, 25, 9.
    for (dim, lam) in [(1usize, 9.0), (2, 25.0), (3, 9.0)] {
        let basis = BasisDescriptor::torus(dim).unwrap();
        let cutoff = if dim == 3 { 5.0 } else { 12.0 };
        let eps = 0.05;
        let a = (lam + 1.1) / (eps * lam * lam);
        let d = divisors(basis, cutoff, a, eps, 2).unwrap();
        let p = partition_sites(&d, 0.5);
        assert!(!p.singular.is_empty());
        let mut all = p.regular.clone();
        all.extend(&p.singular);
        all.sort();
        let set = build_index_set(basis, cutoff).unwrap();
        assert_eq!(all, set.indices().to_vec());
        assert_eq!(partition_sites(&d, 0.5), p);
        let clustered = cluster_singular(&p, 1.0, 0.5).unwrap();
        verify_clusters(&clustered).unwrap();
        let members: usize = clustered.clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(members, p.singular.len());
    }
}

#[test]
fn impossible_clustering_is_reported_not_hidden() {
    // With a threshold above D_0 = 1 the zero mode and the first shell are both
    // singular; no clustering of them is both dyadic and separated.
    let basis = BasisDescriptor::torus(2).unwrap();
    let d = divisors(basis, 4.0, 1.0, 0.05, 2).unwrap();
    let p = partition_sites(&d, 3.0);
    assert!(cluster_singular(&p, 1.0, 0.5).is_err());
}

proptest! {
    #[test]
    fn diophantine_constant_is_non_increasing(a in 0.0f64..10.0, n in 1u64..500, extra in 0u64..500, tau0 in 0.5f64..2.0) {
        prop_assert!(diophantine_constant(a, n + extra, tau0) <= diophantine_constant(a, n, tau0));
    }
}
