//! Experiment drivers. Each returns the files it wrote and an exit code:
//! 0 on success, 2 when a run ended without converging.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nmcore::lattice::{SpectralField, WeightMode};
use nmcore::linear_solver::{assemble_linearized, dense_solve, solve_linearized, SolverOptions};
use nmcore::nash_moser::{run, uniqueness_probe, IterationParams, IterationReport, OrderEstimate};
use nmcore::problem::{ProblemSpec, ProblemSummary};
use nmcore::sampling::random_linear_instance;
use nmcore::small_divisors::{measure_scan, verify_clusters, LinearFit, MeasureRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::artifacts::{envelope, history_csv, to_json, write_atomic};
use crate::config::{BenchConfig, Experiment, ExperimentConfig, OrderStudyConfig, Resolved, WeightName};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 1;

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub weight_mode: Option<WeightName>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = &self.output_dir {
            cfg.output_dir = Some(d.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.weight_mode {
            cfg.problem.weight_mode = w;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Resolved inputs echoed into every report.
#[derive(Debug, Serialize)]
pub struct ResolvedEcho {
    pub problem: ProblemSummary,
    pub params: IterationParams,
    pub kappa: f64,
    pub kappa0: f64,
    pub delta_consistent: Option<bool>,
    pub seed: u64,
}

pub fn resolved_echo(cfg: &ExperimentConfig, r: &Resolved) -> ResolvedEcho {
    ResolvedEcho {
        problem: r.problem.summary(),
        params: r.params.clone(),
        kappa: r.params.kappa_for(&r.problem),
        kappa0: r.params.kappa0_for(r.problem.basis.kind),
        delta_consistent: r.delta_consistent,
        seed: cfg.seed,
    }
}

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.as_str()))
}

/// Runs the experiment named in `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let resolved = cfg.resolve()?;
    let dir = output_dir(cfg);
    match cfg.experiment {
        Experiment::Solve => solve(cfg, &resolved, &dir),
        Experiment::MeasureScan => scan(cfg, &resolved, &dir),
        Experiment::Uniqueness => uniqueness(cfg, &resolved, &dir),
        Experiment::SolverBench => bench(cfg, &resolved, &dir),
        Experiment::OrderStudy => order_study(cfg, &resolved, &dir),
    }
}

fn describe(report: &IterationReport) -> String {
    let order = report.order.order.map_or("undefined".to_string(), |o| format!("{o:.3}"));
    format!(
        "converged: {}, steps: {}, final residual: {:e}, full residual: {:e}, order: {order} ({} usable residuals)",
        report.converged,
        report.steps.len() - 1,
        report.steps.last().map_or(f64::NAN, |s| s.res_norm),
        report.full_residual,
        report.order.usable
    )
}

fn solve(cfg: &ExperimentConfig, r: &Resolved, dir: &Path) -> Result<Outcome> {
    let report = run(&r.problem, &r.params)?;
    let echo = resolved_echo(cfg, r);
    let files = vec![
        write_atomic(dir, "report.json", &to_json(&envelope("solve", cfg, &echo, &report))?)?,
        write_atomic(dir, "history.csv", history_csv(&report, cfg.timing_in_history).as_bytes())?,
    ];
    Ok(Outcome {
        exit_code: if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
        output_dir: dir.to_path_buf(),
        files,
        summary: describe(&report),
    })
}

#[derive(Serialize)]
struct ScanResult<'a> {
    rows: &'a [MeasureRow],
    fit: LinearFit,
    non_decreasing_in_gamma: bool,
    grid: &'a [f64],
    ratios: &'a [f64],
}

fn scan(cfg: &ExperimentConfig, r: &Resolved, dir: &Path) -> Result<Outcome> {
    let Some(sc) = &r.scan else {
        bail!("experiment `{}` is not a measure scan", cfg.experiment.as_str());
    };
    let s = measure_scan(sc)?;
    let result = ScanResult {
        rows: &s.rows,
        fit: s.fit(),
        non_decreasing_in_gamma: s.rows.windows(2).all(|w| w[0].gamma > w[1].gamma || w[0].rejected_fraction <= w[1].rejected_fraction),
        grid: &s.grid,
        ratios: &s.ratios,
    };
    let echo = resolved_echo(cfg, r);
    let files = vec![
        write_atomic(dir, "report.json", &to_json(&envelope("measure_scan", cfg, &echo, &result))?)?,
        write_atomic(dir, "measure.csv", s.to_csv().as_bytes())?,
    ];
    Ok(Outcome {
        exit_code: EXIT_OK,
        output_dir: dir.to_path_buf(),
        files,
        summary: format!("{} rows, linear fit R^2 = {:.4}", s.rows.len(), result.fit.r_squared),
    })
}

fn uniqueness(cfg: &ExperimentConfig, r: &Resolved, dir: &Path) -> Result<Outcome> {
    let u = cfg.uniqueness.as_ref().context("missing [uniqueness] table")?;
    let base = run(&r.problem, &r.params)?;
    let probe = uniqueness_probe(&r.problem, &r.params, u.perturbations, u.magnitude, cfg.seed)?;
    #[derive(Serialize)]
    struct Result<'a> {
        base: &'a IterationReport,
        probe: &'a nmcore::nash_moser::UniquenessReport,
    }
    let echo = resolved_echo(cfg, r);
    let files = vec![
        write_atomic(
            dir,
            "report.json",
            &to_json(&envelope("uniqueness", cfg, &echo, &Result { base: &base, probe: &probe }))?,
        )?,
        write_atomic(dir, "history.csv", history_csv(&base, cfg.timing_in_history).as_bytes())?,
    ];
    Ok(Outcome {
        exit_code: if probe.all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
        output_dir: dir.to_path_buf(),
        files,
        summary: format!(
            "{} perturbations of size {:e}, all converged: {}, max pairwise distance: {:e}",
            u.perturbations, u.magnitude, probe.all_converged, probe.max_pairwise_distance
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    #[serde(rename = "N")]
    pub cutoff: f64,
    pub instance: usize,
    pub dofs: usize,
    pub epsilon: f64,
    pub a: f64,
    pub schur_dim: usize,
    pub clusters: usize,
    pub path: &'static str,
    pub neumann_terms: usize,
    pub residual: f64,
    /// `||u_resolvent - u_dense||_0 / ||u_dense||_0`.
    pub rel_diff: Option<f64>,
    pub resolvent_seconds: f64,
    pub dense_seconds: Option<f64>,
    pub failure: Option<String>,
}

/// Times the resolvent solve on random linear problems, optionally against dense LU.
pub fn solver_bench(
    basis: nmcore::lattice::BasisDescriptor,
    rho: u32,
    bench: &BenchConfig,
    opts: &SolverOptions,
    seed: u64,
) -> Vec<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &n in &bench.cutoffs {
        for k in 0..bench.instances {
            let resonant = rng.gen_bool(bench.resonant_fraction);
            let inst = random_linear_instance(basis, n, rho, bench.eps_max, resonant, opts.threshold, &mut rng);
            let zero = SpectralField::zero(basis, true);
            let mut row = BenchRow {
                cutoff: n,
                instance: k,
                dofs: 0,
                epsilon: inst.problem.epsilon,
                a: inst.problem.a,
                schur_dim: 0,
                clusters: 0,
                path: "failed",
                neumann_terms: 0,
                residual: f64::NAN,
                rel_diff: None,
                resolvent_seconds: 0.0,
                dense_seconds: None,
                failure: None,
            };
            let op = match assemble_linearized(&inst.problem, &zero, n) {
                Ok(op) => op,
                Err(e) => {
                    row.failure = Some(e.to_string());
                    rows.push(row);
                    continue;
                }
            };
            row.dofs = op.dofs();
            let rhs = inst.rhs.to_vector(op.index());
            let clock = Instant::now();
            let solved = solve_linearized(&op, &rhs, opts);
            row.resolvent_seconds = clock.elapsed().as_secs_f64();
            let x = match solved {
                Ok((x, rep, part)) => {
                    if let Err(e) = verify_clusters(&part) {
                        row.failure = Some(e.to_string());
                    }
                    row.schur_dim = rep.schur_dim;
                    row.clusters = rep.clusters;
                    row.path = rep.path.as_str();
                    row.neumann_terms = rep.neumann_terms_used;
                    row.residual = rep.residual_norm;
                    Some(x)
                }
                Err(e) => {
                    row.failure = Some(e.to_string());
                    None
                }
            };
            if bench.compare_dense {
                let clock = Instant::now();
                let dense = dense_solve(&op, &rhs, opts.dense_cap);
                row.dense_seconds = Some(clock.elapsed().as_secs_f64());
                match (dense, &x) {
                    (Ok(d), Some(x)) => row.rel_diff = Some((x - &d.solution).norm() / d.solution.norm()),
                    (Err(e), _) if row.failure.is_none() => row.failure = Some(format!("dense: {e}")),
                    _ => {}
                }
            }
            rows.push(row);
        }
    }
    rows
}

fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("N,instance,dofs,schur_dim,clusters,path,neumann_terms,rel_diff,resolvent_seconds,dense_seconds\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:e},{}\n",
            r.cutoff,
            r.instance,
            r.dofs,
            r.schur_dim,
            r.clusters,
            r.path,
            r.neumann_terms,
            opt(r.rel_diff),
            r.resolvent_seconds,
            opt(r.dense_seconds)
        ));
    }
    out
}

fn bench(cfg: &ExperimentConfig, r: &Resolved, dir: &Path) -> Result<Outcome> {
    let b = cfg.bench.as_ref().context("missing [bench] table")?;
    let rows = solver_bench(r.problem.basis, r.problem.rho, b, &r.params.solver_options(), cfg.seed);
    let worst = rows.iter().filter_map(|r| r.rel_diff).fold(0.0, f64::max);
    let failures = rows.iter().filter(|r| r.failure.is_some()).count();
    let echo = resolved_echo(cfg, r);
    let files = vec![
        write_atomic(dir, "report.json", &to_json(&envelope("solver_bench", cfg, &echo, &rows))?)?,
        write_atomic(dir, "bench.csv", bench_csv(&rows).as_bytes())?,
    ];
    Ok(Outcome {
        exit_code: EXIT_OK,
        output_dir: dir.to_path_buf(),
        files,
        summary: format!("{} instances, {failures} failures, worst relative difference to dense LU: {worst:e}", rows.len()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderRow {
    pub epsilon: f64,
    pub converged: bool,
    pub steps: usize,
    pub order: OrderEstimate,
    pub solution_l2: f64,
    /// `||u||_0 / epsilon`.
    pub amplitude_ratio: f64,
    pub full_residual: f64,
    pub history: Vec<f64>,
}

/// Runs the problem at each `epsilon` and collects order and amplitude.
pub fn order_rows(problem: &ProblemSpec, params: &IterationParams, study: &OrderStudyConfig) -> Result<Vec<OrderRow>> {
    study
        .epsilons
        .iter()
        .map(|&eps| {
            let p = ProblemSpec { epsilon: eps, ..problem.clone() };
            let rep = run(&p, params)?;
            Ok(OrderRow {
                epsilon: eps,
                converged: rep.converged,
                steps: rep.steps.len() - 1,
                order: rep.order,
                solution_l2: rep.solution_l2,
                amplitude_ratio: rep.solution_l2 / eps,
                full_residual: rep.full_residual,
                history: rep.residual_history(),
            })
        })
        .collect()
}

fn order_study(cfg: &ExperimentConfig, r: &Resolved, dir: &Path) -> Result<Outcome> {
    let study = cfg.order_study.as_ref().context("missing [order_study] table")?;
    let rows = order_rows(&r.problem, &r.params, study)?;
    let ratios: Vec<f64> = rows.iter().filter(|x| x.epsilon > 0.0).map(|x| x.amplitude_ratio).collect();
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let mut csv = String::from("epsilon,converged,steps,usable,order,solution_l2,amplitude_ratio\n");
    for x in &rows {
        csv.push_str(&format!(
            "{:e},{},{},{},{},{:e},{:e}\n",
            x.epsilon,
            x.converged,
            x.steps,
            x.order.usable,
            x.order.order.map_or(String::new(), |o| format!("{o:e}")),
            x.solution_l2,
            x.amplitude_ratio
        ));
    }
    #[derive(Serialize)]
    struct Result<'a> {
        rows: &'a [OrderRow],
        amplitude_spread: f64,
    }
    let echo = resolved_echo(cfg, r);
    let files = vec![
        write_atomic(
            dir,
            "report.json",
            &to_json(&envelope("order_study", cfg, &echo, &Result { rows: &rows, amplitude_spread: spread }))?,
        )?,
        write_atomic(dir, "order.csv", csv.as_bytes())?,
    ];
    let all = rows.iter().all(|x| x.converged);
    Ok(Outcome {
        exit_code: if all { EXIT_OK } else { EXIT_NOT_CONVERGED },
        output_dir: dir.to_path_buf(),
        files,
        summary: format!("{} runs, all converged: {all}, max/min of ||u||/eps: {spread:.4}", rows.len()),
    })
}

/// Text printed by `validate`: `OK` and the resolved configuration.
pub fn validate_text(cfg: &ExperimentConfig) -> Result<String> {
    let r = cfg.resolve()?;
    let echo = resolved_echo(cfg, &r);
    #[derive(Serialize)]
    struct Validated<'a> {
        config: &'a ExperimentConfig,
        resolved: &'a ResolvedEcho,
        weight_mode: WeightMode,
        kappa_bound: f64,
    }
    let v = Validated {
        config: cfg,
        resolved: &echo,
        weight_mode: r.problem.basis.weight_mode,
        kappa_bound: nmcore::small_divisors::kappa_bound(&r.problem.basis, r.params.tau, r.problem.rho),
    };
    let mut out = String::from("OK\n");
    out.push_str(&serde_json::to_string_pretty(&v)?);
    if r.delta_consistent == Some(false) {
        out.push_str("\nwarning: epsilon differs from delta^(p - 1)");
    }
    out.push('\n');
    Ok(out)
}
