//! Acceptance checks. Each check returns a [`Verdict`]; the `acceptance` test
//! target runs them in order and prints one line per check.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use nm_cli::config::Resolved;
use nm_cli::{load_config, run_experiment};
use nmcore::block::CMatrix;
use nmcore::error::ClusterError;
use nmcore::lattice::{
    build_index_set, smoothing_gain, sobolev_norm, BasisDescriptor, EigenIndex, SpectralField, WeightMode,
};
use nmcore::linear_solver::{assemble_linearized, solve_linearized, SolverOptions};
use nmcore::nash_moser::{full_residual, run, uniqueness_probe, IterationParams, IterationReport};
use nmcore::nonlinearity::NonlinearitySpec;
use nmcore::problem::ProblemSpec;
use nmcore::sampling::{random_linear_instance, random_real_field, LinearInstance};
use nmcore::small_divisors::{cluster_singular, divisors, measure_scan, partition_sites, verify_clusters, SitePartition};
use nmcore::sphere::{sphere_analysis, sphere_laplacian, sphere_multiplication_matrix, sphere_synthesis, SphereQuadrature};
use nmcore::torus::multiplication_matrix;
use nmcore::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Partitions seen by the checks, for the clustering audit.
#[derive(Debug, Default)]
pub struct PartitionLog {
    pub partitions: Vec<(String, SitePartition)>,
    /// Clusterings that failed outright.
    pub refused: Vec<(String, ClusterError)>,
}

impl PartitionLog {
    fn push(&mut self, source: &str, p: SitePartition) {
        self.partitions.push((source.to_string(), p));
    }

    fn extend_from(&mut self, source: &str, report: &IterationReport) {
        for s in &report.steps {
            if let Some(p) = &s.partition {
                self.push(source, p.clone());
            }
        }
    }
}

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn resolved(name: &str) -> Result<Resolved> {
    let cfg = load_config(&configs_dir().join(name))?;
    Ok(cfg.resolve()?)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let clock = Instant::now();
    let out = f();
    (out, clock.elapsed().as_secs_f64())
}

fn verdict(passed: bool, detail: String, seconds: f64) -> Verdict {
    Verdict { passed, detail, seconds }
}

/// Linear forcing `cos x` on T^1 with rho = 1 and eps a = 0.1: the solution
/// is `eps cos x / D_1`.
pub fn linear_exactness() -> Result<Verdict> {
    let t1 = BasisDescriptor::torus(1)?;
    let half = Complex64::new(0.5, 0.0);
    let cos = SpectralField::torus_modes(t1, &[(&[1], half), (&[-1], half)], true)?;
    let f = NonlinearitySpec::new(t1, vec![(0.0, cos)])?;
    let (eps, a) = (0.1, 1.0);
    let problem = ProblemSpec::new(t1, 1, a, eps, f)?;
    let (report, seconds) = timed(|| run(&problem, &IterationParams::default()));
    let report = report?;
    let d1 = 1.0 + 1.0 - eps * a;
    let expected = half * eps / d1;
    let mut err: f64 = 0.0;
    for (j, block) in report.solution.iter() {
        let k = j.components()[0];
        let target = if k.abs() == 1 { expected } else { Complex64::new(0.0, 0.0) };
        err = err.max((block[0] - target).norm());
    }
    for k in [1, -1] {
        err = err.max((report.solution.coeff(&[k]) - expected).norm());
    }
    let rel = err / expected.norm();
    let iterations = report.steps.len() - 1;
    let passed = report.converged && rel <= 1e-12 && iterations == 1 && seconds < 1.0;
    Ok(verdict(
        passed,
        format!("relative error {rel:.2e}, {iterations} iteration(s), converged = {}", report.converged),
        seconds,
    ))
}

/// `D + eps T` assembled from the Fourier coefficients of `b`: `T_j^{j'} = -b_{j - j'}`.
fn matrix_from_coefficients(inst: &LinearInstance) -> Result<CMatrix> {
    let p = &inst.problem;
    let set = build_index_set(p.basis, inst.cutoff)?;
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
    Ok(m)
}

/// 100 random linear problems on T^1 and T^2: resolvent solve against LU of
/// an independently assembled matrix.
pub fn resolvent_oracle(log: &mut PartitionLog) -> Result<Verdict> {
    let opts = SolverOptions::default();
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut schur = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let dim = 1 + (seed % 2) as usize;
        let cutoff = if dim == 1 { rng.gen_range(4..=32) } else { rng.gen_range(3..=10) } as f64;
        let rho = 1 + (seed % 3 == 0) as u32;
        let basis = BasisDescriptor::torus(dim)?;
        let inst = random_linear_instance(basis, cutoff, rho, 0.05, seed % 4 != 1, opts.threshold, &mut rng);
        let zero = SpectralField::zero(basis, true);
        let op = assemble_linearized(&inst.problem, &zero, cutoff)?;
        let rhs = inst.rhs.to_vector(op.index());
        match solve_linearized(&op, &rhs, &opts) {
            Ok((x, report, partition)) => {
                schur += (report.schur_dim > 0) as usize;
                log.push("linear oracle", partition);
                let y = matrix_from_coefficients(&inst)?.lu().solve(&rhs).context("oracle matrix is singular")?;
                let rel = (&x - &y).norm() / y.norm();
                worst = worst.max(rel);
                if !(rel <= 1e-8) {
                    failures.push(format!("instance {seed}: {rel:.2e}"));
                }
            }
            Err(e) => failures.push(format!("instance {seed}: {e}")),
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    let passed = failures.is_empty() && seconds < 60.0;
    Ok(verdict(
        passed,
        format!(
            "worst relative L2 error {worst:.2e} over 100 instances ({schur} with singular sites){}",
            failure_suffix(&failures)
        ),
        seconds,
    ))
}

fn failure_suffix(failures: &[String]) -> String {
    if failures.is_empty() {
        String::new()
    } else {
        format!("; failures: {}", failures.join(", "))
    }
}

fn order_line(name: &str, report: &IterationReport, residual: f64, need: f64) -> (bool, String) {
    let o = report.order;
    let ok = report.converged && o.order.is_some_and(|v| v >= need) && o.usable >= 3 && residual <= 1e-9;
    let order = o.order.map_or("undefined".to_string(), |v| format!("{v:.2}"));
    let history: Vec<String> = report.residual_history().iter().map(|r| format!("{r:.2e}")).collect();
    (
        ok,
        format!(
            "{name}: order {order} (need >= {need}) from {} usable residuals [{}], full residual {residual:.2e}",
            o.usable,
            history.join(", ")
        ),
    )
}

fn solve_config(name: &str, log: &mut PartitionLog) -> Result<(IterationReport, f64, f64)> {
    let r = resolved(name)?;
    let (report, seconds) = timed(|| run(&r.problem, &r.params));
    let report = report?;
    log.extend_from(name, &report);
    let check = 2.0 * report.final_cutoff as f64;
    let residual = full_residual(&r.problem, &report.solution, check)?;
    Ok((report, residual, seconds))
}

/// Golden-ratio runs with `u^2 + cos x` and `u^3 + cos x` at eps = 1e-3.
pub fn superlinear_convergence(log: &mut PartitionLog) -> Result<Verdict> {
    let (quad, res_q, sec_q) = solve_config("solve_quadratic.toml", log)?;
    let (cubic, res_c, sec_c) = solve_config("solve_cubic.toml", log)?;
    let (ok_q, line_q) = order_line("quadratic", &quad, res_q, 1.7);
    let (ok_c, line_c) = order_line("cubic", &cubic, res_c, 2.3);
    let seconds = sec_q + sec_c;
    Ok(verdict(ok_q && ok_c && sec_q < 30.0 && sec_c < 30.0, format!("{line_q}; {line_c}"), seconds))
}

/// `||u||_0 / eps` across eps in {1e-4, 3e-4, 1e-3}.
pub fn amplitude_scaling(log: &mut PartitionLog) -> Result<Verdict> {
    let r = resolved("solve_quadratic.toml")?;
    let clock = Instant::now();
    let mut ratios = Vec::new();
    let mut converged = true;
    for eps in [1e-4, 3e-4, 1e-3] {
        let problem = ProblemSpec::new(r.problem.basis, r.problem.rho, r.problem.a, eps, r.problem.nonlinearity.clone())?;
        let report = run(&problem, &r.params)?;
        log.extend_from("amplitude", &report);
        converged &= report.converged;
        ratios.push(report.solution_l2 / eps);
    }
    let max = ratios.iter().copied().fold(f64::MIN, f64::max);
    let min = ratios.iter().copied().fold(f64::MAX, f64::min);
    let spread = max / min - 1.0;
    let shown: Vec<String> = ratios.iter().map(|v| format!("{v:.4}")).collect();
    Ok(verdict(
        converged && spread <= 0.25,
        format!("||u||/eps = [{}], spread {:.2}%", shown.join(", "), 100.0 * spread),
        clock.elapsed().as_secs_f64(),
    ))
}

/// Five starts of sigma_bar-norm 1e-3 around the quadratic problem.
pub fn uniqueness(log: &mut PartitionLog) -> Result<Verdict> {
    let r = resolved("solve_quadratic.toml")?;
    let (report, seconds) = timed(|| uniqueness_probe(&r.problem, &r.params, 5, 1e-3, 0));
    let report = report?;
    for p in &report.perturbations {
        for part in &p.partitions {
            log.push("uniqueness", part.clone());
        }
    }
    let d = report.max_pairwise_distance;
    let passed = report.all_converged && d <= 1e-8 && seconds < 180.0;
    Ok(verdict(
        passed,
        format!("max pairwise distance {d:.2e}, all converged = {}", report.all_converged),
        seconds,
    ))
}

/// Exclusion scan on a in [1, 2]; also clusters the singular sites at every sample.
pub fn measure_estimate(log: &mut PartitionLog) -> Result<Verdict> {
    let r = resolved("measure_scan.toml")?;
    let cfg = r.scan.context("measure_scan.toml has no scan")?;
    let (scan, seconds) = timed(|| measure_scan(&cfg));
    let scan = scan?;
    let fractions: Vec<f64> = scan.rows.iter().map(|row| row.rejected_fraction).collect();
    let monotone = fractions.windows(2).all(|w| w[1] >= w[0]);
    let fit = scan.fit();
    let opts = SolverOptions::default();
    for &a in &scan.grid {
        let ds = divisors(cfg.basis, cfg.cutoff, a, cfg.epsilon, cfg.rho)?;
        let p = partition_sites(&ds, opts.threshold);
        if !p.singular.is_empty() {
            match cluster_singular(&p, opts.separation_c, opts.separation_lambda) {
                Ok(c) => log.push("measure scan", c),
                Err(e) => log.refused.push((format!("measure scan, a = {a}"), e)),
            }
        }
    }
    let shown: Vec<String> = fractions.iter().map(|f| format!("{f}")).collect();
    Ok(verdict(
        monotone && fit.r_squared >= 0.9 && seconds < 120.0,
        format!("rejected fractions [{}], R^2 = {:.4}, non-decreasing = {monotone}", shown.join(", "), fit.r_squared),
        seconds,
    ))
}

/// 200 random fields: smoothing inequalities, Parseval, monotonicity in s, projectors.
pub fn norm_properties() -> Result<Verdict> {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let slack = 1.0 + 1e-12;
    for k in 0..200usize {
        let mode = if k % 2 == 0 { WeightMode::Exponential } else { WeightMode::Polynomial };
        let basis = match k % 4 {
            0 => BasisDescriptor::sphere(),
            d => BasisDescriptor::torus(d)?,
        }
        .with_weight_mode(mode);
        let max_mode = rng.gen_range(2.0..10.0);
        let u = random_real_field(basis, max_mode, rng.gen_range(0.0..0.5), &mut rng);
        let cutoff = rng.gen_range(1.0..8.0);
        let s = rng.gen_range(0.0..0.5);
        let d = rng.gen_range(0.0..0.5);
        let norm = |w: &SpectralField, s: f64| sobolev_norm(w, s);
        let low = u.project(cutoff);
        let high = u.project_complement(cutoff);

        // Parseval: the s = 0 norm is the coefficient l2 norm.
        let direct: f64 = u.iter().flat_map(|(_, b)| b.iter()).map(|c| c.norm_sqr()).sum();
        let n0 = norm(&u, 0.0)?;
        if (n0 * n0 - direct).abs() > 1e-14 * direct {
            failures.push(format!("field {k}: Parseval"));
        }
        // ||Pi^N u||_{s+d} <= N^d ||u||_s (polynomial), e^{Nd} for exponential weights.
        let gain = smoothing_gain(mode, cutoff, d);
        if norm(&low, s + d)? > gain * norm(&u, s)? * slack {
            failures.push(format!("field {k}: first smoothing inequality"));
        }
        // ||(I - Pi^N) u||_s <= N^{-d} ||u||_{s+d}.
        if norm(&high, s)? > cutoff.powf(-d) * norm(&u, s + d)? * slack {
            failures.push(format!("field {k}: second smoothing inequality"));
        }
        if norm(&u, s)? > norm(&u, s + d)? * slack {
            failures.push(format!("field {k}: monotonicity in s"));
        }
        if low.project(cutoff) != low || !high.project(cutoff).is_empty() || low.add(&high) != u {
            failures.push(format!("field {k}: projectors"));
        }
    }
    Ok(verdict(
        failures.is_empty(),
        format!("{} failures over 200 fields{}", failures.len(), failure_suffix(&failures)),
        clock.elapsed().as_secs_f64(),
    ))
}

fn unit_harmonic(l: u32, m: i32) -> Result<SpectralField> {
    let mut block = vec![Complex64::new(0.0, 0.0); 2 * l as usize + 1];
    block[(m + l as i32) as usize] = Complex64::new(1.0, 0.0);
    Ok(SpectralField::from_blocks(BasisDescriptor::sphere(), [(EigenIndex::sphere(l), block)], false)?)
}

/// Multiplication matrices on T^1 and S^2 and the sphere eigenrelation.
pub fn block_structure() -> Result<Verdict> {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    let mut worst_adjoint: f64 = 0.0;

    let t1 = BasisDescriptor::torus(1)?;
    for k in 0..50 {
        let theta = rng.gen_range(0.2..1.5);
        let b = random_real_field(t1, rng.gen_range(1.0..8.0), theta, &mut rng);
        let t = multiplication_matrix(&b, 16.0)?;
        let scale = t.to_dense().iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        worst_adjoint = worst_adjoint.max(t.adjoint_defect() / scale);
        if t.adjoint_defect() > 1e-12 * scale {
            failures.push(format!("torus b {k}: adjoint defect {:.2e}", t.adjoint_defect()));
        }
        // |b_k| <= sqrt(2) e^{-theta |k|} for these fields.
        let idx = t.rows().clone();
        for r in 0..idx.len() {
            for c in 0..idx.len() {
                let bound = std::f64::consts::SQRT_2 * (-theta * idx.get(r).distance(&idx.get(c))).exp();
                if t.block_norm(r, c) > bound * (1.0 + 1e-12) {
                    failures.push(format!("torus b {k}: decay at ({r}, {c})"));
                }
            }
        }
    }

    let s2 = BasisDescriptor::sphere();
    for k in 0..20 {
        let deg = 1 + k % 4;
        let b = random_real_field(s2, deg as f64 + 0.5, 0.0, &mut rng);
        let t = sphere_multiplication_matrix(&b, 8)?;
        let scale = t.to_dense().iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        worst_adjoint = worst_adjoint.max(t.adjoint_defect() / scale);
        if t.adjoint_defect() > 1e-12 * scale {
            failures.push(format!("sphere b {k}: adjoint defect {:.2e}", t.adjoint_defect()));
        }
        let idx = t.rows().clone();
        for r in 0..idx.len() {
            for c in 0..idx.len() {
                let (l, lp) = (idx.get(r).components()[0], idx.get(c).components()[0]);
                if (l - lp).unsigned_abs() > deg as u64 && t.block_norm(r, c) > 1e-12 {
                    failures.push(format!("sphere b {k}: selection rule at l = {l}, l' = {lp}"));
                }
            }
        }
    }

    let quad = Arc::new(SphereQuadrature::for_degree(32));
    let mut worst_eigen: f64 = 0.0;
    for l in 0..=16u32 {
        for m in -(l as i32)..=l as i32 {
            let y = unit_harmonic(l, m)?;
            let lap = sphere_analysis(&sphere_laplacian(&sphere_synthesis(&y, &quad)?), 16)?;
            let err = lap.sub(&y.scale(-((l * (l + 1)) as f64))).max_abs() / (1.0 + (l * (l + 1)) as f64);
            worst_eigen = worst_eigen.max(err);
        }
    }
    if worst_eigen > 1e-10 {
        failures.push(format!("eigenrelation error {worst_eigen:.2e}"));
    }
    Ok(verdict(
        failures.is_empty(),
        format!(
            "worst relative adjoint defect {worst_adjoint:.2e}, worst eigenrelation error {worst_eigen:.2e} (relative to 1 + l(l+1)){}",
            failure_suffix(&failures)
        ),
        clock.elapsed().as_secs_f64(),
    ))
}

/// Every logged partition must be dyadic and separated.
pub fn clustering_soundness(log: &PartitionLog) -> Verdict {
    let clock = Instant::now();
    let mut failures = Vec::new();
    let mut clusters = 0;
    for (source, e) in &log.refused {
        failures.push(format!("{source}: {e}"));
    }
    for (source, p) in &log.partitions {
        clusters += p.clusters.len();
        if let Err(e) = verify_clusters(p) {
            failures.push(format!("{source}: {e}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} partitions, {clusters} clusters, {} violations{}",
            log.partitions.len() + log.refused.len(),
            failures.len(),
            failure_suffix(&failures)
        ),
        clock.elapsed().as_secs_f64(),
    )
}

/// Runs the quadratic config twice through the experiment runner and compares `history.csv`.
pub fn determinism(scratch: &Path) -> Result<Verdict> {
    let clock = Instant::now();
    let mut histories = Vec::new();
    for k in 0..2 {
        let mut cfg = load_config(&configs_dir().join("solve_quadratic.toml"))?;
        cfg.output_dir = Some(scratch.join(format!("run{k}")));
        let out = run_experiment(&cfg)?;
        histories.push(std::fs::read(out.output_dir.join("history.csv"))?);
    }
    let same = histories[0] == histories[1];
    Ok(verdict(
        same,
        format!("history.csv identical = {same} ({} bytes)", histories[0].len()),
        clock.elapsed().as_secs_f64(),
    ))
}
