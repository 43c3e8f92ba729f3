//! The outer Nash-Moser iteration.
//!
//! Step `i` works at cutoff `N_i = min(N0^i, N_cap)` and regularity
//! `sigma_i = sigma_bar + (sigma - sigma_bar) / 2^i`. With `u` the sum of the
//! corrections so far, it solves `L^(N_i)(u) u_i = -J_{N_i}(u)` where
//! `J_N(u) = Pi^(N)(L_a u - eps f(x, u))`, and records the new residual
//! `E_i = -eps Pi^(N_i)(f(u + u_i) - f(u) - d_u f(u) u_i)` evaluated directly.
//! Up to the linear solve error `E_i = J_{N_i}(u + u_i)`; the gap is logged.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, NashMoserError};
use crate::lattice::{sobolev_norm, BasisKind, SpectralField};
use crate::linear_solver::{
    assemble_linearized, inverse_norm_witness, solve_linearized, to_field, InverseNormWitness, SolvePath,
    SolverOptions, SolverReport,
};
use crate::nonlinearity::{apply_nonlinearity, taylor_remainder};
use crate::problem::{ProblemSpec, ProblemSummary};
use crate::sampling::random_real_field;
use crate::small_divisors::{kappa_bound, melnikov_check, MelnikovOutcome, SitePartition};

/// Residuals at or below this level carry no information about the rate.
pub const NOISE_FLOOR: f64 = 1e-14;

/// Largest operator dimension for which the inverse norm is measured each step.
const INVERSE_NORM_MAX_DOFS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationParams {
    #[serde(rename = "N0")]
    pub n0: u32,
    #[serde(rename = "N_cap")]
    pub n_cap: u32,
    pub max_steps: usize,
    pub sigma_bar: f64,
    pub sigma: f64,
    pub stop_tol: f64,
    /// Melnikov exponent.
    pub tau: f64,
    pub gamma: f64,
    pub gamma1: f64,
    /// Loss exponent in the tame inverse estimate; defaults to `tau + r + n + 1`.
    pub kappa0: Option<f64>,
    /// Exponent of the assumed inverse bound `4 r^kappa / gamma1`; defaults to its lower bound.
    pub kappa: Option<f64>,
    /// Declared leading degree of the nonlinearity.
    pub p: Option<u32>,
    /// Regular/singular threshold on `|D_j|`.
    pub threshold: f64,
    pub linear_tol: f64,
    pub separation_c: f64,
    pub separation_lambda: f64,
    pub max_neumann_terms: usize,
    pub dense_cap: usize,
    pub dense_fallback: bool,
    /// Measure `||(L^(N_i))^{-1}||_0` at every step.
    pub measure_inverse_norm: bool,
    /// Reject `kappa` below [`kappa_bound`].
    pub enforce_kappa: bool,
}

impl Default for IterationParams {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            n0: 2,
            n_cap: 64,
            max_steps: 8,
            sigma_bar: 0.05,
            sigma: 0.1,
            stop_tol: 1e-10,
            tau: 2.0,
            gamma: 0.25,
            gamma1: 0.1,
            kappa0: None,
            kappa: None,
            p: None,
            threshold: s.threshold,
            linear_tol: s.tol,
            separation_c: s.separation_c,
            separation_lambda: s.separation_lambda,
            max_neumann_terms: s.max_neumann_terms,
            dense_cap: s.dense_cap,
            dense_fallback: s.dense_fallback,
            measure_inverse_norm: true,
            enforce_kappa: false,
        }
    }
}

impl IterationParams {
    pub fn validate(&self) -> Result<(), NashMoserError> {
        let bad = |m: String| Err(NashMoserError::InvalidParams(m));
        if self.n0 < 2 {
            return bad(format!("N0 >= 2 violated (N0 = {})", self.n0));
        }
        if self.n_cap < self.n0 {
            return bad(format!("N_cap >= N0 violated (N_cap = {}, N0 = {})", self.n_cap, self.n0));
        }
        if !(self.sigma_bar > 0.0) {
            return bad(format!("sigma_bar > 0 violated (sigma_bar = {})", self.sigma_bar));
        }
        if !(self.sigma_bar < self.sigma) {
            return bad(format!(
                "sigma_bar < sigma violated (sigma_bar = {}, sigma = {})",
                self.sigma_bar, self.sigma
            ));
        }
        if !(self.stop_tol > 0.0) {
            return bad(format!("stop_tol > 0 violated (stop_tol = {})", self.stop_tol));
        }
        if !(self.threshold > 0.0) {
            return bad(format!("threshold > 0 violated (threshold = {})", self.threshold));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return bad(format!("0 < linear_tol < 1 violated (linear_tol = {})", self.linear_tol));
        }
        if !(self.gamma > 0.0) || !(self.tau > 0.0) {
            return bad(format!("gamma > 0 and tau > 0 required (gamma = {}, tau = {})", self.gamma, self.tau));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return bad(format!("0 < gamma1 < 1 violated (gamma1 = {})", self.gamma1));
        }
        if let Some(p) = self.p {
            if p < 2 {
                return bad(format!("p >= 2 violated (p = {p})"));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the checks that depend on the problem.
    pub fn validate_for(&self, problem: &ProblemSpec) -> Result<(), NashMoserError> {
        self.validate()?;
        let bound = kappa_bound(&problem.basis, self.tau, problem.rho);
        if self.enforce_kappa {
            if let Some(k) = self.kappa {
                if k < bound {
                    return Err(NashMoserError::InvalidParams(format!("kappa >= {bound} violated (kappa = {k})")));
                }
            }
        }
        Ok(())
    }

    /// `kappa`, defaulting to its lower bound.
    pub fn kappa_for(&self, problem: &ProblemSpec) -> f64 {
        self.kappa.unwrap_or_else(|| kappa_bound(&problem.basis, self.tau, problem.rho))
    }

    /// `N_i = min(N0^i, N_cap)` for `i >= 1`; step 0 uses `N_1`.
    pub fn cutoff(&self, i: usize) -> u32 {
        let mut n: u64 = 1;
        for _ in 0..i.max(1) {
            n = n.saturating_mul(self.n0 as u64);
            if n >= self.n_cap as u64 {
                return self.n_cap;
            }
        }
        n as u32
    }

    /// `sigma_i = sigma_bar + (sigma - sigma_bar) / 2^i`.
    pub fn sigma_at(&self, i: usize) -> f64 {
        self.sigma_bar + (self.sigma - self.sigma_bar) / 2f64.powi(i as i32)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.linear_tol,
            threshold: self.threshold,
            separation_c: self.separation_c,
            separation_lambda: self.separation_lambda,
            max_neumann_terms: self.max_neumann_terms,
            dense_cap: self.dense_cap,
            dense_fallback: self.dense_fallback,
        }
    }

    /// `kappa0`, defaulting to `tau + r + n + 1` with `r` the rank of the
    /// group factor and `n` the torus dimension.
    pub fn kappa0_for(&self, kind: BasisKind) -> f64 {
        self.kappa0.unwrap_or_else(|| {
            let (r, n) = match kind {
                BasisKind::Torus { dim } => (0.0, dim as f64),
                BasisKind::Sphere => (1.0, 0.0),
            };
            self.tau + r + n + 1.0
        })
    }
}

/// One row of the iteration history. Row 0 describes the initial guess.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub i: usize,
    #[serde(rename = "N_i")]
    pub n_i: u32,
    pub sigma_i: f64,
    /// `||u_i||_{sigma_i}` (row 0: the initial guess).
    pub sol_norm: f64,
    /// `||E_i||_{sigma_i}`.
    pub res_norm: f64,
    pub res_l2: f64,
    /// `||E_i - J_{N_i}(u_0 + .. + u_i)||_0`.
    pub identity_gap: Option<f64>,
    /// `||L_a u - eps f(u)||_0` on the check cutoff after this step.
    pub full_residual: f64,
    pub check_cutoff: f64,
    pub path: Option<SolvePath>,
    pub solver: Option<SolverReport>,
    pub partition: Option<SitePartition>,
    pub inverse_norm: Option<InverseNormWitness>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderEstimate {
    /// Mean of `log E_{i+1} / log E_i` over usable pairs; `None` with fewer
    /// than three usable residuals.
    pub order: Option<f64>,
    pub usable: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub problem: ProblemSummary,
    pub params: IterationParams,
    pub steps: Vec<StepRecord>,
    #[serde(skip)]
    pub initial: SpectralField,
    /// `u_1, u_2, ..` in order.
    #[serde(skip)]
    pub corrections: Vec<SpectralField>,
    pub solution: SpectralField,
    pub solution_l2: f64,
    pub converged: bool,
    pub failure: Option<String>,
    pub order: OrderEstimate,
    pub final_cutoff: u32,
    pub full_residual: f64,
    pub check_cutoff: f64,
    pub kappa0: f64,
    pub kappa: f64,
    /// Melnikov check at `N_cap` for the problem's `a` (logged, not enforced).
    pub melnikov: Option<MelnikovOutcome>,
    /// Whether the declared `p` equals the leading degree of `f`.
    pub p_consistent: Option<bool>,
}

impl IterationReport {
    pub fn residual_history(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.res_norm).collect()
    }
}

/// `J_N(u) = Pi^(N)(L_a u - eps f(x, u))`.
pub fn equation_residual(problem: &ProblemSpec, u: &SpectralField, cutoff: f64) -> Result<SpectralField, NashMoserError> {
    let fu = apply_nonlinearity(&problem.nonlinearity, u, cutoff)?;
    Ok(problem.apply_operator(u).project(cutoff).axpy(-problem.epsilon, &fu))
}

/// `||Pi^(N_check)(L_a u - eps f(x, u))||_0`; the cutoff is raised to
/// `2 bandwidth(u)` when given below it.
pub fn full_residual(problem: &ProblemSpec, u: &SpectralField, n_check: f64) -> Result<f64, NashMoserError> {
    let n = n_check.max(2.0 * u.bandwidth() as f64).max(1.0);
    Ok(equation_residual(problem, u, n)?.l2_norm())
}

fn check_cutoff(n_i: u32, u: &SpectralField) -> f64 {
    2.0 * n_i.max(u.bandwidth()) as f64
}

/// New residual after adding `correction` to `u` at cutoff `n`:
/// `-eps Pi^(N)(f(u + v) - f(u) - d_u f(u) v)`.
pub fn step_residual(problem: &ProblemSpec, u: &SpectralField, correction: &SpectralField, n: f64) -> Result<SpectralField, NashMoserError> {
    Ok(taylor_remainder(&problem.nonlinearity, u, correction, n)?.scale(-problem.epsilon))
}

/// Result of one Nash-Moser step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub correction: SpectralField,
    pub residual: SpectralField,
    pub solver: SolverReport,
    pub partition: SitePartition,
    pub inverse_norm: Option<InverseNormWitness>,
}

/// Step `i >= 1` from the accumulated iterate `u`.
pub fn step(problem: &ProblemSpec, u: &SpectralField, i: usize, params: &IterationParams) -> Result<StepOutcome, NashMoserError> {
    let n = params.cutoff(i) as f64;
    let linear = |e| NashMoserError::Linear { step: i, source: e };
    let rhs = equation_residual(problem, u, n)?;
    let op = assemble_linearized(problem, u, n).map_err(linear)?;
    let rhs_vec = rhs.to_vector(op.index());
    let (x, solver, partition) = solve_linearized(&op, &rhs_vec, &params.solver_options()).map_err(linear)?;
    let real = u.declared_real() && problem.nonlinearity.is_real();
    let correction = to_field(&op, &(-x), real).with_basis(problem.basis);
    let residual = step_residual(problem, u, &correction, n)?;
    let inverse_norm = (params.measure_inverse_norm && op.dofs() <= INVERSE_NORM_MAX_DOFS).then(|| {
        inverse_norm_witness(&op, n, params.kappa_for(problem), params.gamma1)
    });
    Ok(StepOutcome {
        correction,
        residual,
        solver,
        partition,
        inverse_norm,
    })
}

/// Runs the iteration from `u_0 = 0`.
pub fn run(problem: &ProblemSpec, params: &IterationParams) -> Result<IterationReport, NashMoserError> {
    let zero = SpectralField::zero(problem.basis, problem.nonlinearity.is_real());
    run_from(problem, params, &zero)
}

/// Runs the iteration from the initial guess `u0`, which must be supported in `J_{N_cap}`.
pub fn run_from(problem: &ProblemSpec, params: &IterationParams, u0: &SpectralField) -> Result<IterationReport, NashMoserError> {
    params.validate_for(problem)?;
    if u0.basis().kind != problem.basis.kind {
        return Err(NashMoserError::InvalidParams("initial guess lives on a different manifold".into()));
    }
    if u0.project_complement(params.n_cap as f64).max_abs() > 0.0 {
        return Err(NashMoserError::InvalidParams("initial guess must be supported in |j + rho| <= N_cap".into()));
    }
    let stop = params.stop_tol;
    let mut u = u0.clone().with_basis(problem.basis);
    let mut steps = Vec::new();
    let mut corrections = Vec::new();
    let mut converged = false;
    let mut failure = None;

    let clock = Instant::now();
    let n1 = params.cutoff(1);
    let e0 = equation_residual(problem, &u, n1 as f64)?;
    let res0 = sobolev_norm(&e0, params.sigma_at(0))?;
    let check0 = check_cutoff(n1, &u);
    let full0 = full_residual(problem, &u, check0)?;
    steps.push(StepRecord {
        i: 0,
        n_i: n1,
        sigma_i: params.sigma_at(0),
        sol_norm: sobolev_norm(&u, params.sigma_at(0))?,
        res_norm: res0,
        res_l2: e0.l2_norm(),
        identity_gap: None,
        full_residual: full0,
        check_cutoff: check0,
        path: None,
        solver: None,
        partition: None,
        inverse_norm: None,
        seconds: clock.elapsed().as_secs_f64(),
    });
    if res0 < stop && full0 <= 10.0 * stop {
        converged = true;
    }

    let mut i = 1;
    while !converged && i <= params.max_steps {
        let clock = Instant::now();
        let outcome = match step(problem, &u, i, params) {
            Ok(o) => o,
            Err(e @ NashMoserError::Linear { .. }) => {
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let n_i = params.cutoff(i);
        let sigma_i = params.sigma_at(i);
        let next = u.add(&outcome.correction);
        let gap = outcome.residual.sub(&equation_residual(problem, &next, n_i as f64)?).l2_norm();
        let res = match sobolev_norm(&outcome.residual, sigma_i) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(format!("residual norm at step {i}: {e}"));
                break;
            }
        };
        let check = check_cutoff(n_i, &next);
        let full = full_residual(problem, &next, check)?;
        steps.push(StepRecord {
            i,
            n_i,
            sigma_i,
            sol_norm: sobolev_norm(&outcome.correction, sigma_i)?,
            res_norm: res,
            res_l2: outcome.residual.l2_norm(),
            identity_gap: Some(gap),
            full_residual: full,
            check_cutoff: check,
            path: Some(outcome.solver.path),
            solver: Some(outcome.solver),
            partition: Some(outcome.partition),
            inverse_norm: outcome.inverse_norm,
            seconds: clock.elapsed().as_secs_f64(),
        });
        corrections.push(outcome.correction);
        u = next;
        if !res.is_finite() || !full.is_finite() {
            failure = Some(format!("non-finite residual at step {i}"));
            break;
        }
        if res < stop && full <= 10.0 * stop {
            converged = true;
        }
        i += 1;
    }
    if !converged && failure.is_none() {
        failure = Some(format!("no convergence within {} steps", params.max_steps));
    }

    let last = steps.last().expect("step 0 is always recorded");
    let history: Vec<f64> = steps.iter().map(|s| s.res_norm).collect();
    let melnikov = melnikov_check(
        problem.basis,
        problem.a,
        problem.epsilon,
        problem.rho,
        params.n_cap as f64,
        params.gamma,
        params.tau,
    )
    .ok();
    Ok(IterationReport {
        problem: problem.summary(),
        params: params.clone(),
        final_cutoff: last.n_i,
        full_residual: last.full_residual,
        check_cutoff: last.check_cutoff,
        steps,
        initial: u0.clone(),
        corrections,
        solution_l2: u.l2_norm(),
        solution: u,
        converged,
        failure,
        order: convergence_order(&history),
        kappa0: params.kappa0_for(problem.basis.kind),
        kappa: params.kappa_for(problem),
        melnikov,
        p_consistent: params.p.map(|p| Some(p) == problem.nonlinearity.leading_degree()),
    })
}

/// Recomputes `||E_i||_{sigma_i}` of a report from its stored corrections.
pub fn recompute_residual(problem: &ProblemSpec, report: &IterationReport, i: usize) -> Result<f64, NashMoserError> {
    let params = &report.params;
    let mut u = report.initial.clone().with_basis(problem.basis);
    if i == 0 {
        let e0 = equation_residual(problem, &u, params.cutoff(1) as f64)?;
        return Ok(sobolev_norm(&e0, params.sigma_at(0))?);
    }
    for c in &report.corrections[..i - 1] {
        u = u.add(c);
    }
    let e = step_residual(problem, &u, &report.corrections[i - 1], params.cutoff(i) as f64)?;
    Ok(sobolev_norm(&e, params.sigma_at(i))?)
}

/// Estimated order `p` from a residual history: residuals are normalized by
/// `2 max` when the largest is `>= 1`, values at or below [`NOISE_FLOOR`]
/// are discarded, and `log E_{i+1} / log E_i` is averaged over consecutive
/// usable pairs.
pub fn convergence_order(history: &[f64]) -> OrderEstimate {
    let max = history.iter().copied().fold(0.0, f64::max);
    let scale = if max >= 1.0 { 2.0 * max } else { 1.0 };
    let usable: Vec<bool> = history.iter().map(|&e| e > NOISE_FLOOR && e.is_finite()).collect();
    let count = usable.iter().filter(|&&u| u).count();
    let ratios: Vec<f64> = (1..history.len())
        .filter(|&k| usable[k - 1] && usable[k])
        .map(|k| (history[k] / scale).ln() / (history[k - 1] / scale).ln())
        .collect();
    let order = (count >= 3 && !ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    OrderEstimate {
        order,
        usable: count,
        pairs: ratios.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationOutcome {
    /// `||u_0||_{sigma_bar}` of the perturbed start.
    pub initial_norm: f64,
    pub converged: bool,
    pub steps: usize,
    pub distance_to_base: Option<f64>,
    pub failure: Option<String>,
    /// Site partitions of the run's linear solves.
    #[serde(skip)]
    pub partitions: Vec<SitePartition>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub base_converged: bool,
    pub magnitude: f64,
    pub perturbations: Vec<PerturbationOutcome>,
    /// Largest `||u^(a) - u^(b)||_{sigma_bar}` over all converged runs, base included.
    pub max_pairwise_distance: f64,
    pub all_converged: bool,
}

/// Reruns the iteration from `k` random real initial guesses of
/// `sigma_bar`-norm `magnitude` and compares the limits.
pub fn uniqueness_probe(
    problem: &ProblemSpec,
    params: &IterationParams,
    k: usize,
    magnitude: f64,
    seed: u64,
) -> Result<UniquenessReport, NashMoserError> {
    if !(magnitude >= 0.0) {
        return Err(NashMoserError::InvalidParams(format!("magnitude >= 0 required, got {magnitude}")));
    }
    let base = run(problem, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_mode = params.n_cap.min(8) as f64;
    let starts: Vec<SpectralField> = (0..k)
        .map(|_| {
            let f = random_real_field(problem.basis, max_mode, 0.0, &mut rng);
            let norm = sobolev_norm(&f, params.sigma_bar)?;
            Ok(if magnitude == 0.0 || norm == 0.0 { f.scale(0.0) } else { f.scale(magnitude / norm) })
        })
        .collect::<Result<_, LatticeError>>()?;
    let runs: Vec<Result<IterationReport, NashMoserError>> =
        starts.par_iter().map(|u0| run_from(problem, params, u0)).collect();

    let mut solutions = Vec::new();
    if base.converged {
        solutions.push(base.solution.clone());
    }
    let mut perturbations = Vec::new();
    for (u0, r) in starts.iter().zip(runs) {
        let initial_norm = sobolev_norm(u0, params.sigma_bar)?;
        match r {
            Ok(rep) => {
                let distance_to_base = if rep.converged && base.converged {
                    Some(sobolev_norm(&rep.solution.sub(&base.solution), params.sigma_bar)?)
                } else {
                    None
                };
                if rep.converged {
                    solutions.push(rep.solution.clone());
                }
                perturbations.push(PerturbationOutcome {
                    initial_norm,
                    converged: rep.converged,
                    steps: rep.steps.len() - 1,
                    distance_to_base,
                    partitions: rep.steps.iter().filter_map(|s| s.partition.clone()).collect(),
                    failure: rep.failure,
                });
            }
            Err(e) => perturbations.push(PerturbationOutcome {
                initial_norm,
                converged: false,
                steps: 0,
                distance_to_base: None,
                failure: Some(e.to_string()),
                partitions: Vec::new(),
            }),
        }
    }
    let mut max_pairwise_distance: f64 = 0.0;
    for a in 0..solutions.len() {
        for b in (a + 1)..solutions.len() {
            max_pairwise_distance = max_pairwise_distance.max(sobolev_norm(&solutions[a].sub(&solutions[b]), params.sigma_bar)?);
        }
    }
    Ok(UniquenessReport {
        base_converged: base.converged,
        magnitude,
        all_converged: base.converged && perturbations.iter().all(|p| p.converged),
        perturbations,
        max_pairwise_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let p = IterationParams::default();
        let n: Vec<u32> = (1..=8).map(|i| p.cutoff(i)).collect();
        assert_eq!(n, vec![2, 4, 8, 16, 32, 64, 64, 64]);
        assert_eq!(p.cutoff(0), 2);
        let s: Vec<f64> = (0..6).map(|i| p.sigma_at(i)).collect();
        assert!(s.windows(2).all(|w| w[1] < w[0] && w[1] > p.sigma_bar));
        assert_eq!(s[0], p.sigma);
    }

    #[test]
    fn validation_names_the_inequality() {
        let p = IterationParams {
            sigma_bar: 0.2,
            ..Default::default()
        };
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("sigma_bar < sigma"), "{msg}");
    }

    #[test]
    fn kappa_enforcement() {
        use crate::lattice::BasisDescriptor;
        use crate::nonlinearity::NonlinearitySpec;
        let b = BasisDescriptor::torus(1).unwrap();
        let f = NonlinearitySpec::new(b, vec![]).unwrap();
        let problem = ProblemSpec::new(b, 2, 1.0, 0.1, f).unwrap();
        let low = IterationParams { kappa: Some(1.0), enforce_kappa: true, ..Default::default() };
        let msg = low.validate_for(&problem).unwrap_err().to_string();
        assert!(msg.contains("kappa >= "), "{msg}");
        let off = IterationParams { enforce_kappa: false, ..low };
        assert!(off.validate_for(&problem).is_ok());
    }

    #[test]
    fn synthetic_order() {
        let h: Vec<f64> = (0..5).map(|i| 10f64.powf(-(2f64.powi(i)))).collect();
        let o = convergence_order(&h);
        assert_eq!(o.usable, 4);
        assert!((o.order.unwrap() - 2.0).abs() < 1e-12);
        let short = convergence_order(&[1e-3, 1e-7, 1e-20]);
        assert_eq!(short.order, None);
        assert_eq!(short.usable, 2);
    }
}
