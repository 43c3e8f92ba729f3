//! Small divisors: diophantine constants, the Melnikov condition, the
//! regular/singular split of the truncated spectrum, dyadic clustering of the
//! singular sites, and parameter-exclusion scans.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ClusterError, ClusterProperty, LatticeError, ScanError};
use crate::lattice::{build_index_set, BasisDescriptor, BasisKind, EigenIndex};

/// Constants of the nonresonance conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiophantineParams {
    /// `|m - a n| >= gamma0 / |n|^tau0`
    pub gamma0: f64,
    pub tau0: f64,
    /// `|D_j| >= gamma / |j + rho|^tau`
    pub gamma: f64,
    pub tau: f64,
    pub gamma1: f64,
    pub kappa: f64,
}

impl Default for DiophantineParams {
    fn default() -> Self {
        Self {
            gamma0: 0.1,
            tau0: 1.5,
            gamma: 0.25,
            tau: 2.0,
            gamma1: 0.1,
            kappa: 0.0,
        }
    }
}

impl DiophantineParams {
    /// Checks the sign constraints, and `kappa` against [`kappa_bound`] when
    /// `enforce_kappa` is set.
    pub fn validate(&self, basis: &BasisDescriptor, rho: u32, enforce_kappa: bool) -> Result<(), String> {
        if !(self.gamma0 > 0.0) {
            return Err(format!("gamma0 > 0 violated (gamma0 = {})", self.gamma0));
        }
        if !(self.tau0 > 1.0) {
            return Err(format!("tau0 > 1 violated (tau0 = {})", self.tau0));
        }
        if !(self.gamma > 0.0) {
            return Err(format!("gamma > 0 violated (gamma = {})", self.gamma));
        }
        if !(self.tau > 0.0) {
            return Err(format!("tau > 0 violated (tau = {})", self.tau));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return Err(format!("0 < gamma1 < 1 violated (gamma1 = {})", self.gamma1));
        }
        if enforce_kappa {
            let bound = kappa_bound(basis, self.tau, rho);
            if self.kappa < bound {
                return Err(format!("kappa >= {bound} violated (kappa = {})", self.kappa));
            }
        }
        Ok(())
    }
}

/// `max{tau, 2 + d + n + (2 rho - 2)/(2 rho - 1) (tau + 2 rho)}` with `d` the
/// dimension of the group factor and `n` the torus dimension: `(0, n)` on
/// `T^n` and `(3, 0)` on `S^2 = SU(2)/U(1)`.
pub fn kappa_bound(basis: &BasisDescriptor, tau: f64, rho: u32) -> f64 {
    let (d, n) = match basis.kind {
        BasisKind::Torus { dim } => (0.0, dim as f64),
        BasisKind::Sphere => (3.0, 0.0),
    };
    let r = rho as f64;
    tau.max(2.0 + d + n + (2.0 * r - 2.0) / (2.0 * r - 1.0) * (tau + 2.0 * r))
}

/// `min_{1 <= n <= n_max} n^tau0 dist(a n, Z)` by exhaustive scan.
pub fn diophantine_constant(a: f64, n_max: u64, tau0: f64) -> f64 {
    (1..=n_max.max(1))
        .map(|n| {
            let x = a * n as f64;
            (n as f64).powf(tau0) * (x - x.round()).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `D_j = lambda + 1 - eps a lambda^rho` for the Laplace eigenvalue `lambda = -|j+rho|^2 + |rho|^2`.
pub fn divisor(eigenvalue: i64, a: f64, epsilon: f64, rho: u32) -> f64 {
    let lam = eigenvalue as f64;
    lam + 1.0 - epsilon * a * lam.powi(rho as i32)
}

/// Weight of the Melnikov bound at shifted norm `shift`; clamped at 1 so the
/// zero mode is well defined.
pub fn melnikov_weight(shift: f64, tau: f64) -> f64 {
    shift.max(1.0).powf(tau)
}

/// `(label, D_j)` over `J_N^+`, in canonical order.
pub fn divisors(
    basis: BasisDescriptor,
    cutoff: f64,
    a: f64,
    epsilon: f64,
    rho: u32,
) -> Result<Vec<(EigenIndex, f64)>, LatticeError> {
    let set = build_index_set(basis, cutoff)?;
    Ok(set
        .indices()
        .iter()
        .map(|j| (*j, divisor(j.eigenvalue(), a, epsilon, rho)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MelnikovOutcome {
    pub passed: bool,
    /// Label minimizing `|D_j| max(1, |j + rho|)^tau`.
    pub worst: EigenIndex,
    pub worst_divisor: f64,
    /// `min_j |D_j| max(1, |j + rho|)^tau / gamma`; the check passes iff `>= 1`.
    pub margin: f64,
}

/// Checks `|D_j| >= gamma / max(1, |j + rho|)^tau` for every `j` in `J_N^+`.
pub fn melnikov_check(
    basis: BasisDescriptor,
    a: f64,
    epsilon: f64,
    rho: u32,
    cutoff: f64,
    gamma: f64,
    tau: f64,
) -> Result<MelnikovOutcome, LatticeError> {
    let mut best: Option<(EigenIndex, f64, f64)> = None;
    for (j, d) in divisors(basis, cutoff, a, epsilon, rho)? {
        let r = d.abs() * melnikov_weight(j.shift_norm(), tau);
        if best.is_none_or(|(_, _, br)| r < br) {
            best = Some((j, d, r));
        }
    }
    let (worst, worst_divisor, r) = best.expect("index sets are never empty");
    let margin = r / gamma;
    Ok(MelnikovOutcome {
        passed: margin >= 1.0,
        worst,
        worst_divisor,
        margin,
    })
}

/// One dyadic cluster of singular sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub members: Vec<EigenIndex>,
    /// `M_alpha`, largest shifted norm.
    pub max_shift: f64,
    /// `m_alpha`, smallest shifted norm.
    pub min_shift: f64,
}

impl Cluster {
    fn new(mut members: Vec<EigenIndex>) -> Self {
        members.sort();
        let max_shift = members.iter().map(EigenIndex::shift_norm).fold(0.0, f64::max);
        let min_shift = members.iter().map(EigenIndex::shift_norm).fold(f64::INFINITY, f64::min);
        Self {
            members,
            max_shift,
            min_shift,
        }
    }

    fn is_dyadic(&self) -> bool {
        self.max_shift <= 2.0 * self.min_shift + 1e-12
    }
}

/// Smallest lattice distance between members of two clusters.
pub fn cluster_distance(a: &Cluster, b: &Cluster) -> f64 {
    let mut d = f64::INFINITY;
    for x in &a.members {
        for y in &b.members {
            d = d.min(x.distance(y));
        }
    }
    d
}

/// Split of `J_N^+` into regular sites `|D_j| >= threshold` and singular
/// sites, with the singular sites grouped into clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SitePartition {
    pub threshold: f64,
    pub regular: Vec<EigenIndex>,
    pub singular: Vec<EigenIndex>,
    pub clusters: Vec<Cluster>,
    /// Separation constant `c` in `d(Omega_a, Omega_b) >= c (M_a + M_b)^lambda`.
    pub separation_c: f64,
    pub separation_lambda: f64,
}

pub const DEFAULT_SEPARATION_C: f64 = 1.0;
pub const DEFAULT_SEPARATION_LAMBDA: f64 = 0.5;

/// Threshold split of the divisors; labels keep the input order.
pub fn partition_sites(divisors: &[(EigenIndex, f64)], threshold: f64) -> SitePartition {
    assert!(threshold > 0.0, "threshold must be positive");
    let (regular, singular): (Vec<_>, Vec<_>) = divisors.iter().copied().partition(|(_, d)| d.abs() >= threshold);
    SitePartition {
        threshold,
        regular: regular.into_iter().map(|(j, _)| j).collect(),
        singular: singular.into_iter().map(|(j, _)| j).collect(),
        clusters: Vec::new(),
        separation_c: DEFAULT_SEPARATION_C,
        separation_lambda: DEFAULT_SEPARATION_LAMBDA,
    }
}

fn by_shift(a: &EigenIndex, b: &EigenIndex) -> Ordering {
    a.shift_norm().total_cmp(&b.shift_norm()).then(a.cmp(b))
}

/// Groups the singular sites into clusters that are dyadic
/// (`M_alpha <= 2 m_alpha`) and pairwise separated
/// (`d(Omega_a, Omega_b) >= c (M_a + M_b)^lambda`).
///
/// Clusters closer than the separation rule allows are merged until none
/// remain; clusters that are then too wide are split at their largest gap in
/// shifted norm. The result is verified, and a violated property is returned
/// as a [`ClusterError`] with the offending clusters.
pub fn cluster_singular(partition: &SitePartition, c: f64, lambda: f64) -> Result<SitePartition, ClusterError> {
    let mut sites = partition.singular.clone();
    sites.sort_by(by_shift);
    let mut clusters: Vec<Cluster> = sites.into_iter().map(|j| Cluster::new(vec![j])).collect();

    'merge: loop {
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let need = c * (clusters[a].max_shift + clusters[b].max_shift).powf(lambda);
                if cluster_distance(&clusters[a], &clusters[b]) < need {
                    let absorbed = clusters.remove(b);
                    let mut members = std::mem::take(&mut clusters[a].members);
                    members.extend(absorbed.members);
                    clusters[a] = Cluster::new(members);
                    continue 'merge;
                }
            }
        }
        break;
    }

    let mut pending = clusters;
    let mut done = Vec::new();
    while let Some(cl) = pending.pop() {
        if cl.is_dyadic() || cl.members.len() < 2 {
            done.push(cl);
            continue;
        }
        let mut sorted = cl.members.clone();
        sorted.sort_by(by_shift);
        let cut = (1..sorted.len())
            .max_by(|&x, &y| {
                let gx = sorted[x].shift_norm() - sorted[x - 1].shift_norm();
                let gy = sorted[y].shift_norm() - sorted[y - 1].shift_norm();
                // earliest cut wins ties
                gx.total_cmp(&gy).then(y.cmp(&x))
            })
            .expect("cluster has at least two members");
        let high = sorted.split_off(cut);
        pending.push(Cluster::new(sorted));
        pending.push(Cluster::new(high));
    }
    done.sort_by(|x, y| by_shift(&x.members[0], &y.members[0]));

    let out = SitePartition {
        clusters: done,
        separation_c: c,
        separation_lambda: lambda,
        ..partition.clone()
    };
    verify_clusters(&out)?;
    Ok(out)
}

/// Checks both cluster properties for the reported `(c, lambda)`.
pub fn verify_clusters(p: &SitePartition) -> Result<(), ClusterError> {
    let covered: usize = p.clusters.iter().map(|c| c.members.len()).sum();
    assert_eq!(covered, p.singular.len(), "clusters must cover the singular sites exactly");
    for (k, cl) in p.clusters.iter().enumerate() {
        if !cl.is_dyadic() {
            return Err(ClusterError {
                property: ClusterProperty::Dyadic,
                detail: format!(
                    "cluster {k} {:?}: M = {} > 2 m = {}",
                    cl.members,
                    cl.max_shift,
                    2.0 * cl.min_shift
                ),
            });
        }
    }
    for a in 0..p.clusters.len() {
        for b in (a + 1)..p.clusters.len() {
            let (x, y) = (&p.clusters[a], &p.clusters[b]);
            let d = cluster_distance(x, y);
            let need = p.separation_c * (x.max_shift + y.max_shift).powf(p.separation_lambda);
            if d < need {
                return Err(ClusterError {
                    property: ClusterProperty::Separation,
                    detail: format!(
                        "clusters {a} {:?} and {b} {:?}: distance {d} < {need}",
                        x.members, y.members
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Inputs of a parameter-exclusion scan over `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureScanConfig {
    pub basis: BasisDescriptor,
    pub a_min: f64,
    pub a_max: f64,
    pub grid_count: usize,
    pub epsilon: f64,
    pub rho: u32,
    pub cutoff: f64,
    pub gammas: Vec<f64>,
    pub tau: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureRow {
    pub gamma: f64,
    pub rejected_fraction: f64,
    #[serde(rename = "N")]
    pub cutoff: f64,
    pub epsilon: f64,
    pub rho: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureScan {
    pub rows: Vec<MeasureRow>,
    /// Jittered sample points `a_k`.
    pub grid: Vec<f64>,
    /// `min_j |D_j(a_k)| max(1, |j + rho|)^tau`; `a_k` is rejected for `gamma` iff this is `< gamma`.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ~ slope x + intercept`. `r_squared` is NaN
/// when `y` is constant.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    LinearFit {
        slope,
        intercept,
        r_squared: 1.0 - ss_res / syy,
    }
}

impl MeasureScan {
    pub fn fit(&self) -> LinearFit {
        let g: Vec<f64> = self.rows.iter().map(|r| r.gamma).collect();
        let f: Vec<f64> = self.rows.iter().map(|r| r.rejected_fraction).collect();
        linear_fit(&g, &f)
    }

    /// CSV with header `gamma,rejected_fraction,N,epsilon,rho`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,rejected_fraction,N,epsilon,rho\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.gamma, r.rejected_fraction, r.cutoff, r.epsilon, r.rho));
        }
        out
    }
}

/// Distinct `(eigenvalue, shifted norm)` pairs of `J_N^+`; the divisor and the
/// Melnikov weight depend on `j` only through them.
fn spectrum_classes(basis: BasisDescriptor, cutoff: f64) -> Result<Vec<(i64, f64)>, LatticeError> {
    let set = build_index_set(basis, cutoff)?;
    let mut classes: Vec<(i64, f64)> = set.indices().iter().map(|j| (j.eigenvalue(), j.shift_norm())).collect();
    classes.sort_by(|x, y| x.0.cmp(&y.0));
    classes.dedup_by_key(|c| c.0);
    Ok(classes)
}

/// Fraction of jittered sample points `a_k = a_min + (k + U_k) h` failing the
/// Melnikov check, for each `gamma`. `U_k` are uniform on `[0, 1)` from a
/// ChaCha stream seeded by `seed`.
pub fn measure_scan(cfg: &MeasureScanConfig) -> Result<MeasureScan, ScanError> {
    if cfg.grid_count < 100 {
        return Err(ScanError::Invalid(format!("grid_count >= 100 required, got {}", cfg.grid_count)));
    }
    if !(cfg.a_max > cfg.a_min) {
        return Err(ScanError::Invalid(format!("empty interval [{}, {}]", cfg.a_min, cfg.a_max)));
    }
    if cfg.gammas.is_empty() || cfg.gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(ScanError::Invalid("gamma list must be non-empty and positive".into()));
    }
    if !(cfg.epsilon >= 0.0) {
        return Err(ScanError::Invalid(format!("epsilon >= 0 required, got {}", cfg.epsilon)));
    }
    let classes = spectrum_classes(cfg.basis, cfg.cutoff)?;
    let weights: Vec<(i64, f64)> = classes.iter().map(|&(lam, s)| (lam, melnikov_weight(s, cfg.tau))).collect();
    let h = (cfg.a_max - cfg.a_min) / cfg.grid_count as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grid: Vec<f64> = (0..cfg.grid_count)
        .map(|k| cfg.a_min + (k as f64 + rng.gen::<f64>()) * h)
        .collect();
    let ratios: Vec<f64> = grid
        .par_iter()
        .map(|&a| {
            weights
                .iter()
                .map(|&(lam, w)| divisor(lam, a, cfg.epsilon, cfg.rho).abs() * w)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let rows = cfg
        .gammas
        .iter()
        .map(|&gamma| MeasureRow {
            gamma,
            rejected_fraction: ratios.iter().filter(|&&r| r < gamma).count() as f64 / cfg.grid_count as f64,
            cutoff: cfg.cutoff,
            epsilon: cfg.epsilon,
            rho: cfg.rho,
        })
        .collect();
    Ok(MeasureScan { rows, grid, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1() -> BasisDescriptor {
        BasisDescriptor::torus(1).unwrap()
    }

    #[test]
    fn diophantine_examples() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        // the exhaustive minimum is attained at n = 1: dist(phi, 2) = 2 - phi
        assert!((diophantine_constant(phi, 1000, 1.0) - (2.0 - phi)).abs() < 1e-12);
        assert_eq!(diophantine_constant(0.5, 2, 1.0), 0.0);
        assert!(diophantine_constant(2f64.sqrt(), 100, 1.0) >= 0.2);
        // past the first few denominators the scan approaches 1/sqrt(5)
        let tail = (100..=1000u64)
            .map(|n| n as f64 * ((phi * n as f64) - (phi * n as f64).round()).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((tail - 1.0 / 5f64.sqrt()).abs() < 1e-3);
        let mut prev = f64::INFINITY;
        for n_max in [1, 5, 50, 500] {
            let g = diophantine_constant(phi, n_max, 1.0);
            assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn resonant_divisor_fails_melnikov() {
        let eps = 1e-2;
        let a = 26.0 / 625.0 / eps;
        assert!(divisor(25, a, eps, 2).abs() < 1e-12);
        let out = melnikov_check(t1(), a, eps, 2, 10.0, 0.25, 2.0).unwrap();
        assert!(!out.passed);
        assert_eq!(out.worst.components()[0].abs(), 5);

        let p = partition_sites(&divisors(t1(), 10.0, a, eps, 2).unwrap(), 0.5);
        assert_eq!(p.singular, vec![EigenIndex::torus(&[-5]), EigenIndex::torus(&[5])]);
        assert_eq!(p.regular.len() + p.singular.len(), 21);
        let clustered = cluster_singular(&p, 1.0, 0.5).unwrap();
        assert_eq!(clustered.clusters.len(), 2);
    }

    #[test]
    fn unperturbed_operator_passes() {
        let out = melnikov_check(t1(), 3.0, 0.0, 2, 20.0, 1.0, 2.0).unwrap();
        assert!(out.passed);
        let p = partition_sites(&divisors(t1(), 20.0, 3.0, 0.0, 2).unwrap(), 0.5);
        assert!(p.singular.is_empty());
        let p = partition_sites(&divisors(t1(), 20.0, 3.0, 0.0, 2).unwrap(), 1e6);
        assert!(p.regular.is_empty());
    }

    #[test]
    fn neighbouring_sites_form_one_cluster() {
        let mut p = partition_sites(&[], 0.5);
        p.singular = vec![EigenIndex::torus(&[3]), EigenIndex::torus(&[4])];
        let c = cluster_singular(&p, 1.0, 0.5).unwrap();
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].max_shift, 4.0);
        assert_eq!(c.clusters[0].min_shift, 3.0);
        p.singular.clear();
        assert!(cluster_singular(&p, 1.0, 0.5).unwrap().clusters.is_empty());
    }

    #[test]
    fn adversarial_sites_report_failure() {
        let mut p = partition_sites(&[], 0.5);
        p.singular = (1..=5).map(|k| EigenIndex::torus(&[k])).collect();
        let err = cluster_singular(&p, 1.0, 0.5).unwrap_err();
        assert_eq!(err.property, ClusterProperty::Separation);
    }

    #[test]
    fn kappa_bounds() {
        assert_eq!(kappa_bound(&t1(), 2.0, 1), 3.0);
        // rho = 2: 2 + 1 + (2/3)(2 + 4) = 7
        assert!((kappa_bound(&t1(), 2.0, 2) - 7.0).abs() < 1e-12);
        assert!((kappa_bound(&BasisDescriptor::sphere(), 2.0, 1) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn scan_is_seeded_and_monotone() {
        let cfg = MeasureScanConfig {
            basis: t1(),
            a_min: 1.0,
            a_max: 2.0,
            grid_count: 500,
            epsilon: 1e-2,
            rho: 2,
            cutoff: 50.0,
            gammas: vec![1e-9, 0.1, 1.0, 10.0],
            tau: 2.0,
            seed: 3,
        };
        let s = measure_scan(&cfg).unwrap();
        assert_eq!(s, measure_scan(&cfg).unwrap());
        let f: Vec<f64> = s.rows.iter().map(|r| r.rejected_fraction).collect();
        assert!(f.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(f[0], 0.0);
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("gamma,rejected_fraction,N,epsilon,rho\n0.000000001,0,50,0.01,2\n"));
        assert!(measure_scan(&MeasureScanConfig { grid_count: 99, ..cfg }).is_err());
    }

    #[test]
    fn fit_of_exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!((f.r_squared - 1.0).abs() < 1e-15);
    }
}
