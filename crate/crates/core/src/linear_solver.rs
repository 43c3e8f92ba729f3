//! Inversion of the truncated linearized operator `L^(N) = D + eps T`.
//!
//! `D` is diagonal over labels with entries `D_j`; `T = -M_b` is minus the
//! multiplication operator by `b = d_u f(x, u)`, so `L^(N) v = Pi^(N)(L_a v - eps b v)`.
//! The spectrum is split into regular sites (`|D_j| >= threshold`), inverted by a
//! Neumann series around `D_R`, and singular sites, reduced to the Schur
//! complement `L_S - L_S^R L_R^{-1} L_R^S` which is inverted cluster by cluster.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{BlockMatrix, CMatrix, CVector};
use crate::error::{ClusterError, SolverError};
use crate::lattice::{build_index_set, EigenIndex, IndexSet, SpectralField};
use crate::nonlinearity::linearized_coeff;
use crate::problem::ProblemSpec;
use crate::small_divisors::{cluster_singular, partition_sites, Cluster, SitePartition};
use crate::sphere::sphere_multiplication_matrix;
use crate::torus::multiplication_matrix;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_DENSE_CAP: usize = 4096;
pub const DEFAULT_MAX_NEUMANN_TERMS: usize = 500;
/// Condition estimate beyond which a dense factorization counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    /// Regular/singular threshold on `|D_j|`.
    pub threshold: f64,
    pub separation_c: f64,
    pub separation_lambda: f64,
    pub max_neumann_terms: usize,
    pub dense_cap: usize,
    /// Solve densely when the regular Neumann series diverges.
    pub dense_fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            threshold: DEFAULT_THRESHOLD,
            separation_c: crate::small_divisors::DEFAULT_SEPARATION_C,
            separation_lambda: crate::small_divisors::DEFAULT_SEPARATION_LAMBDA,
            max_neumann_terms: DEFAULT_MAX_NEUMANN_TERMS,
            dense_cap: DEFAULT_DENSE_CAP,
            dense_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    Resolvent,
    DenseFallback,
}

impl SolvePath {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolvePath::Resolvent => "resolvent",
            SolvePath::DenseFallback => "dense_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    /// Largest number of Neumann terms used by any solve with `L_R`.
    pub neumann_terms_used: usize,
    /// Corrections applied by the off-cluster Neumann series for the Schur complement.
    pub schur_neumann_terms: usize,
    /// Largest observed ratio of consecutive Neumann increments.
    pub contraction_estimate: f64,
    /// Number of singular degrees of freedom.
    pub schur_dim: usize,
    pub clusters: usize,
    /// `||L u - rhs||_0`, recomputed after the solve.
    pub residual_norm: f64,
    pub path: SolvePath,
    /// The Schur complement was factored as a whole because its off-cluster series diverged.
    pub schur_dense: bool,
    /// Condition estimate of the dense factorizations that ran, if any.
    pub condition_estimate: Option<f64>,
}

/// `L^(N) = D + eps T` on the labels of `index`.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    index: Arc<IndexSet>,
    diag: Vec<f64>,
    t: BlockMatrix,
    epsilon: f64,
}

impl LinearizedOperator {
    /// `diag` holds `D_j` per label of `index`; `t` must act on `index`.
    pub fn new(index: Arc<IndexSet>, diag: Vec<f64>, t: BlockMatrix, epsilon: f64) -> Self {
        assert_eq!(diag.len(), index.len(), "one divisor per label");
        assert_eq!(t.rows().indices(), index.indices(), "T rows must match the index set");
        assert_eq!(t.cols().indices(), index.indices(), "T columns must match the index set");
        Self {
            index,
            diag,
            t,
            epsilon,
        }
    }

    pub fn index(&self) -> &Arc<IndexSet> {
        &self.index
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn t(&self) -> &BlockMatrix {
        &self.t
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dofs(&self) -> usize {
        self.index.dofs()
    }

    pub fn divisors(&self) -> Vec<(EigenIndex, f64)> {
        self.index.indices().iter().copied().zip(self.diag.iter().copied()).collect()
    }

    fn diag_of(&self, set: &IndexSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(set.dofs());
        for j in set.indices() {
            let d = self.diag[self.index.position(j).expect("label in operator")];
            out.extend(std::iter::repeat_n(d, j.block_dim()));
        }
        out
    }

    /// `(D + eps T) x`.
    pub fn apply(&self, x: &CVector) -> CVector {
        let mut y = self.t.matvec(x) * Complex64::new(self.epsilon, 0.0);
        for (yk, (xk, d)) in y.iter_mut().zip(x.iter().zip(self.diag_of(&self.index))) {
            *yk += xk * d;
        }
        y
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = self.t.to_dense() * Complex64::new(self.epsilon, 0.0);
        for (k, d) in self.diag_of(&self.index).into_iter().enumerate() {
            m[(k, k)] += d;
        }
        m
    }

    /// The operator on the labels with `|j + rho| <= cutoff`.
    pub fn truncate(&self, cutoff: f64) -> Self {
        let labels: Vec<EigenIndex> = self.index.indices().iter().copied().filter(|j| j.within(cutoff)).collect();
        let set = Arc::new(IndexSet::from_indices(*self.index.basis(), labels));
        let diag = set
            .indices()
            .iter()
            .map(|j| self.diag[self.index.position(j).unwrap()])
            .collect();
        let t = self.t.restrict(set.clone(), set.clone());
        Self::new(set, diag, t, self.epsilon)
    }
}

/// Assembles `L^(N)` linearized at `u`: `D_j` from the problem and
/// `T = -M_b` with `b = d_u f(x, u)`.
pub fn assemble_linearized(problem: &ProblemSpec, u: &SpectralField, cutoff: f64) -> Result<LinearizedOperator, SolverError> {
    let index = build_index_set(problem.basis, cutoff)?;
    let t = if problem.basis.is_sphere() {
        let l_max = index.max_component();
        let b = linearized_coeff(&problem.nonlinearity, u, 2.0 * l_max as f64 + 1.0)?;
        sphere_multiplication_matrix(&b, l_max)?
    } else {
        // T_j^{j'} = b_{j - j'} with |j - j'| <= 2N
        let b = linearized_coeff(&problem.nonlinearity, u, 2.0 * cutoff)?;
        multiplication_matrix(&b, cutoff)?
    };
    let t = t.scale(-1.0);
    let index = t.rows().clone();
    let diag = index.indices().iter().map(|j| problem.divisor(j)).collect();
    Ok(LinearizedOperator::new(index, diag, t, problem.epsilon))
}

/// Outcome of a Neumann solve.
#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub solution: CVector,
    /// Series terms summed, counting the leading `D^{-1} rhs`.
    pub terms: usize,
    pub contraction: f64,
}

/// Sums `sum_m (-eps D^{-1} T)^m D^{-1} rhs` until the residual
/// `||eps T y_m||` of the partial sum is below `tol ||rhs||` and the next
/// increment is below `tol ||D^{-1} rhs||`.
///
/// Divergence is declared when the increment norm grows three times in a row
/// or the term count reaches `max_terms`.
pub fn neumann_solve(
    d: &[f64],
    t: &BlockMatrix,
    epsilon: f64,
    rhs: &CVector,
    tol: f64,
    max_terms: usize,
) -> Result<NeumannSolution, SolverError> {
    assert_eq!(d.len(), rhs.len());
    let mut y = CVector::from_iterator(rhs.len(), rhs.iter().zip(d).map(|(r, dk)| r / *dk));
    let rhs_norm = rhs.norm();
    let y0_norm = y.norm();
    let mut sum = y.clone();
    let mut prev_norm = y0_norm;
    let mut growth = 0;
    let mut contraction: f64 = 0.0;
    let eps = Complex64::new(epsilon, 0.0);
    for m in 0.. {
        let ty = if epsilon == 0.0 { CVector::zeros(rhs.len()) } else { t.matvec(&y) * eps };
        let next = CVector::from_iterator(rhs.len(), ty.iter().zip(d).map(|(v, dk)| -v / *dk));
        let next_norm = next.norm();
        if ty.norm() <= tol * rhs_norm && next_norm <= tol * y0_norm {
            return Ok(NeumannSolution {
                solution: sum,
                terms: m + 1,
                contraction,
            });
        }
        if prev_norm > 0.0 {
            contraction = contraction.max(next_norm / prev_norm);
        }
        growth = if next_norm > prev_norm { growth + 1 } else { 0 };
        if growth >= 3 || m + 1 >= max_terms {
            return Err(SolverError::NeumannDiverged {
                terms: m + 1,
                contraction: if prev_norm > 0.0 { next_norm / prev_norm } else { f64::INFINITY },
            });
        }
        sum += &next;
        prev_norm = next_norm;
        y = next;
    }
    unreachable!()
}

fn empty_report(path: SolvePath) -> SolverReport {
    SolverReport {
        neumann_terms_used: 0,
        schur_neumann_terms: 0,
        contraction_estimate: 0.0,
        schur_dim: 0,
        clusters: 0,
        residual_norm: 0.0,
        path,
        schur_dense: false,
        condition_estimate: None,
    }
}

/// Solves `(D_R + eps T_R) u = rhs` by the Neumann series.
pub fn invert_regular(
    d_r: &[f64],
    t_r: &BlockMatrix,
    epsilon: f64,
    rhs: &CVector,
    tol: f64,
) -> Result<(CVector, SolverReport), SolverError> {
    let n = neumann_solve(d_r, t_r, epsilon, rhs, tol, DEFAULT_MAX_NEUMANN_TERMS)?;
    let mut residual = t_r.matvec(&n.solution) * Complex64::new(epsilon, 0.0) - rhs;
    for (r, (x, d)) in residual.iter_mut().zip(n.solution.iter().zip(d_r)) {
        *r += x * *d;
    }
    let mut report = empty_report(SolvePath::Resolvent);
    report.neumann_terms_used = n.terms;
    report.contraction_estimate = n.contraction;
    report.residual_norm = residual.norm();
    Ok((n.solution, report))
}

/// Regular/singular split of an operator's labels with the singular sites clustered.
pub fn prepare_partition(op: &LinearizedOperator, opts: &SolverOptions) -> Result<SitePartition, ClusterError> {
    let p = partition_sites(&op.divisors(), opts.threshold);
    cluster_singular(&p, opts.separation_c, opts.separation_lambda)
}

/// The operator cut along a site partition.
struct Split {
    s_set: Arc<IndexSet>,
    r_dofs: Vec<usize>,
    s_dofs: Vec<usize>,
    d_r: Vec<f64>,
    d_s: Vec<f64>,
    t_rr: BlockMatrix,
    t_rs: BlockMatrix,
    t_sr: BlockMatrix,
    t_ss: BlockMatrix,
}

fn dof_map(full: &IndexSet, sub: &IndexSet) -> Vec<usize> {
    sub.indices()
        .iter()
        .flat_map(|j| full.range(full.position(j).expect("label in operator")))
        .collect()
}

impl Split {
    fn new(op: &LinearizedOperator, partition: &SitePartition) -> Result<Self, SolverError> {
        let basis = *op.index.basis();
        if partition.regular.len() + partition.singular.len() != op.index.len()
            || partition
                .regular
                .iter()
                .chain(&partition.singular)
                .any(|j| !op.index.contains(j))
        {
            return Err(SolverError::InvalidPartition(
                "regular and singular sites must split the operator's labels".into(),
            ));
        }
        let r_set = Arc::new(IndexSet::from_indices(basis, partition.regular.clone()));
        let s_set = Arc::new(IndexSet::from_indices(basis, partition.singular.clone()));
        Ok(Self {
            r_dofs: dof_map(&op.index, &r_set),
            s_dofs: dof_map(&op.index, &s_set),
            d_r: op.diag_of(&r_set),
            d_s: op.diag_of(&s_set),
            t_rr: op.t.restrict(r_set.clone(), r_set.clone()),
            t_rs: op.t.restrict(r_set.clone(), s_set.clone()),
            t_sr: op.t.restrict(s_set.clone(), r_set.clone()),
            t_ss: op.t.restrict(s_set.clone(), s_set.clone()),
            s_set,
        })
    }
}

fn gather(x: &CVector, dofs: &[usize]) -> CVector {
    CVector::from_iterator(dofs.len(), dofs.iter().map(|&k| x[k]))
}

/// Schur complement on the singular sites together with solver statistics.
#[derive(Debug, Clone)]
pub struct SchurComplement {
    pub matrix: BlockMatrix,
    pub neumann_terms: usize,
    pub contraction: f64,
}

fn schur_dense(op: &LinearizedOperator, split: &Split, opts: &SolverOptions) -> Result<(CMatrix, usize, f64), SolverError> {
    let ns = split.s_dofs.len();
    let eps = Complex64::new(op.epsilon, 0.0);
    let t_rs = split.t_rs.to_dense();
    let columns: Vec<Result<(CVector, usize, f64), SolverError>> = (0..ns)
        .into_par_iter()
        .map(|k| {
            let col = t_rs.column(k).into_owned() * eps;
            let y = neumann_solve(&split.d_r, &split.t_rr, op.epsilon, &col, opts.tol, opts.max_neumann_terms)?;
            let mut e = CVector::zeros(ns);
            e[k] = Complex64::new(1.0, 0.0);
            let mut out = split.t_ss.matvec(&e) * eps - split.t_sr.matvec(&y.solution) * eps;
            out[k] += split.d_s[k];
            Ok((out, y.terms, y.contraction))
        })
        .collect();
    let mut m = CMatrix::zeros(ns, ns);
    let (mut terms, mut contraction) = (0, 0.0f64);
    for (k, c) in columns.into_iter().enumerate() {
        let (col, t, q) = c?;
        m.set_column(k, &col);
        terms = terms.max(t);
        contraction = contraction.max(q);
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let defect = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if op.t.is_self_adjoint() && defect > 1e-10 * scale {
        return Err(SolverError::NotSelfAdjoint { defect });
    }
    Ok((m, terms, contraction))
}

/// `L_S - L_S^R L_R^{-1} L_R^S`, one column per singular degree of freedom.
pub fn schur_complement(
    op: &LinearizedOperator,
    partition: &SitePartition,
    opts: &SolverOptions,
) -> Result<SchurComplement, SolverError> {
    let split = Split::new(op, partition)?;
    let (m, neumann_terms, contraction) = schur_dense(op, &split, opts)?;
    Ok(SchurComplement {
        matrix: BlockMatrix::from_dense(split.s_set.clone(), split.s_set.clone(), &m, op.t.is_self_adjoint()),
        neumann_terms,
        contraction,
    })
}

/// LU factors of one cluster block.
struct ClusterFactor {
    dofs: Vec<usize>,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

fn cluster_dofs(s_set: &IndexSet, cluster: &Cluster) -> Vec<usize> {
    cluster
        .members
        .iter()
        .flat_map(|j| s_set.range(s_set.position(j).expect("cluster member is singular")))
        .collect()
}

/// Statistics of [`invert_schur`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurSolveStats {
    pub corrections: usize,
    pub max_condition: f64,
}

/// Solves `Lc x = z` for the Schur complement `Lc` on `s_set`: each cluster
/// block of `Lc` is factored densely and the remaining off-cluster coupling
/// is resolved by the series `x_{m+1} = x_m + Dc^{-1}(z - Lc x_m)`.
pub fn invert_schur(
    schur: &CMatrix,
    s_set: &IndexSet,
    clusters: &[Cluster],
    rhs: &CVector,
    tol: f64,
    max_terms: usize,
) -> Result<(CVector, SchurSolveStats), SolverError> {
    let n = rhs.len();
    assert_eq!(schur.nrows(), n);
    let mut factors = Vec::with_capacity(clusters.len());
    let mut max_condition: f64 = 0.0;
    for (alpha, cl) in clusters.iter().enumerate() {
        let dofs = cluster_dofs(s_set, cl);
        let block = CMatrix::from_fn(dofs.len(), dofs.len(), |i, k| schur[(dofs[i], dofs[k])]);
        let lu = block.clone().lu();
        let condition = condition_estimate(&block, &lu).unwrap_or(f64::INFINITY);
        if !(condition <= 1.0 / tol) {
            return Err(SolverError::SingularCluster { cluster: alpha, condition });
        }
        max_condition = max_condition.max(condition);
        factors.push(ClusterFactor { dofs, lu });
    }
    let covered: usize = factors.iter().map(|f| f.dofs.len()).sum();
    assert_eq!(covered, n, "clusters must cover the singular sites");
    let apply_dinv = |r: &CVector| -> CVector {
        let mut out = CVector::zeros(n);
        for f in &factors {
            let local = gather(r, &f.dofs);
            let x = f.lu.solve(&local).expect("factor checked for invertibility");
            for (k, &dof) in f.dofs.iter().enumerate() {
                out[dof] = x[k];
            }
        }
        out
    };
    let z_norm = rhs.norm();
    let mut x = apply_dinv(rhs);
    let mut prev = f64::INFINITY;
    let mut growth = 0;
    for m in 0.. {
        let r = rhs - schur * &x;
        if r.norm() <= tol * z_norm {
            return Ok((x, SchurSolveStats { corrections: m, max_condition }));
        }
        let delta = apply_dinv(&r);
        let dn = delta.norm();
        // corrections at rounding level cannot improve the iterate further
        if dn <= tol * x.norm() * 1e-2 {
            return Ok((x, SchurSolveStats { corrections: m, max_condition }));
        }
        growth = if dn > prev { growth + 1 } else { 0 };
        if growth >= 3 || m + 1 >= max_terms {
            return Err(SolverError::NeumannDiverged {
                terms: m + 1,
                contraction: dn / prev,
            });
        }
        x += delta;
        prev = dn;
    }
    unreachable!()
}

/// Solves `L^(N) u = rhs` through the resolvent identity
/// `y_R = L_R^{-1} r_R`, `u_S = Lc^{-1}(r_S - L_S^R y_R)`, `u_R = y_R - L_R^{-1} L_R^S u_S`,
/// then checks `||L u - rhs|| <= 10 tol ||rhs||`.
pub fn solve(
    op: &LinearizedOperator,
    partition: &SitePartition,
    rhs: &CVector,
    opts: &SolverOptions,
) -> Result<(CVector, SolverReport), SolverError> {
    assert_eq!(rhs.len(), op.dofs(), "right-hand side dimension");
    match solve_resolvent(op, partition, rhs, opts) {
        Err(SolverError::NeumannDiverged { .. }) if opts.dense_fallback => {
            let dense = dense_solve(op, rhs, opts.dense_cap)?;
            let mut report = empty_report(SolvePath::DenseFallback);
            report.schur_dim = partition.singular.iter().map(EigenIndex::block_dim).sum();
            report.clusters = partition.clusters.len();
            report.condition_estimate = Some(dense.condition_estimate);
            finish(op, rhs, dense.solution, report, opts)
        }
        other => other,
    }
}

fn finish(
    op: &LinearizedOperator,
    rhs: &CVector,
    u: CVector,
    mut report: SolverReport,
    opts: &SolverOptions,
) -> Result<(CVector, SolverReport), SolverError> {
    let residual = (op.apply(&u) - rhs).norm();
    report.residual_norm = residual;
    let bound = 10.0 * opts.tol * rhs.norm();
    if residual > bound {
        return Err(SolverError::Residual { residual, bound });
    }
    Ok((u, report))
}

fn solve_resolvent(
    op: &LinearizedOperator,
    partition: &SitePartition,
    rhs: &CVector,
    opts: &SolverOptions,
) -> Result<(CVector, SolverReport), SolverError> {
    let split = Split::new(op, partition)?;
    let eps = Complex64::new(op.epsilon, 0.0);
    let mut report = empty_report(SolvePath::Resolvent);
    report.schur_dim = split.s_dofs.len();
    report.clusters = partition.clusters.len();

    let r_r = gather(rhs, &split.r_dofs);
    let r_s = gather(rhs, &split.s_dofs);
    let y = neumann_solve(&split.d_r, &split.t_rr, op.epsilon, &r_r, opts.tol, opts.max_neumann_terms)?;
    report.neumann_terms_used = y.terms;
    report.contraction_estimate = y.contraction;

    let mut u = CVector::zeros(op.dofs());
    if split.s_dofs.is_empty() {
        for (k, &dof) in split.r_dofs.iter().enumerate() {
            u[dof] = y.solution[k];
        }
        return finish(op, rhs, u, report, opts);
    }

    let (schur, terms, contraction) = schur_dense(op, &split, opts)?;
    report.neumann_terms_used = report.neumann_terms_used.max(terms);
    report.contraction_estimate = report.contraction_estimate.max(contraction);
    let z = &r_s - split.t_sr.matvec(&y.solution) * eps;
    let u_s = match invert_schur(&schur, &split.s_set, &partition.clusters, &z, opts.tol, opts.max_neumann_terms) {
        Ok((x, stats)) => {
            report.schur_neumann_terms = stats.corrections;
            report.condition_estimate = Some(stats.max_condition);
            x
        }
        Err(SolverError::NeumannDiverged { .. }) => {
            let dense = dense_solve_matrix(&schur, &z, opts.dense_cap)?;
            report.schur_dense = true;
            report.condition_estimate = Some(dense.condition_estimate);
            dense.solution
        }
        Err(e) => return Err(e),
    };
    let coupling = split.t_rs.matvec(&u_s) * eps;
    let w = neumann_solve(&split.d_r, &split.t_rr, op.epsilon, &coupling, opts.tol, opts.max_neumann_terms)?;
    report.neumann_terms_used = report.neumann_terms_used.max(w.terms);
    report.contraction_estimate = report.contraction_estimate.max(w.contraction);
    let u_r = &y.solution - &w.solution;
    for (k, &dof) in split.r_dofs.iter().enumerate() {
        u[dof] = u_r[k];
    }
    for (k, &dof) in split.s_dofs.iter().enumerate() {
        u[dof] = u_s[k];
    }
    finish(op, rhs, u, report, opts)
}

/// Partitions, clusters and solves in one call.
pub fn solve_linearized(
    op: &LinearizedOperator,
    rhs: &CVector,
    opts: &SolverOptions,
) -> Result<(CVector, SolverReport, SitePartition), SolverError> {
    let partition = prepare_partition(op, opts)?;
    let (u, report) = solve(op, &partition, rhs, opts)?;
    Ok((u, report, partition))
}

#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub solution: CVector,
    pub condition_estimate: f64,
}

/// Solves with the materialized matrix of `op` by partial-pivot LU.
pub fn dense_solve(op: &LinearizedOperator, rhs: &CVector, cap: usize) -> Result<DenseSolution, SolverError> {
    if op.dofs() > cap {
        return Err(SolverError::TooLarge { dim: op.dofs(), cap });
    }
    dense_solve_matrix(&op.to_dense(), rhs, cap)
}

pub fn dense_solve_matrix(a: &CMatrix, rhs: &CVector, cap: usize) -> Result<DenseSolution, SolverError> {
    let n = a.nrows();
    if n > cap {
        return Err(SolverError::TooLarge { dim: n, cap });
    }
    if n == 0 {
        return Ok(DenseSolution {
            solution: CVector::zeros(0),
            condition_estimate: 1.0,
        });
    }
    let lu = a.clone().lu();
    let condition = condition_estimate(a, &lu).unwrap_or(f64::INFINITY);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(SolverError::Singular { condition });
    }
    let solution = lu.solve(rhs).ok_or(SolverError::Singular { condition })?;
    Ok(DenseSolution {
        solution,
        condition_estimate: condition,
    })
}

fn norm1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|k| a.column(k).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition estimate `||A||_1 est(||A^{-1}||_1)` with Hager's method.
/// `None` when the factorization is exactly singular.
pub fn condition_estimate(a: &CMatrix, lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) -> Option<f64> {
    let n = a.nrows();
    if n == 0 {
        return Some(1.0);
    }
    let hermitian = (a - a.adjoint()).iter().all(|z| z.norm() == 0.0);
    let adj_lu = if hermitian { None } else { Some(a.adjoint().lu()) };
    let solve_adj = |v: &CVector| match &adj_lu {
        Some(f) => f.solve(v),
        None => lu.solve(v),
    };
    let mut x = CVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x)?;
        estimate = y.iter().map(|z| z.norm()).sum::<f64>();
        let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) });
        let zv = solve_adj(&xi)?;
        let (jmax, zmax) = zv
            .iter()
            .enumerate()
            .map(|(k, z)| (k, z.norm()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if zmax <= zv.dotc(&x).re {
            break;
        }
        x = CVector::zeros(n);
        x[jmax] = Complex64::new(1.0, 0.0);
    }
    let e = estimate * norm1(a);
    if e.is_finite() {
        Some(e)
    } else {
        None
    }
}

/// Measured `||(L^(r))^{-1}||_0` against the assumed bound `4 r^kappa / gamma1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseNormWitness {
    pub scale: f64,
    pub inverse_norm: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Computes `1 / sigma_min` of `op` truncated to `|j + rho| <= r`.
pub fn inverse_norm_witness(op: &LinearizedOperator, r: f64, kappa: f64, gamma1: f64) -> InverseNormWitness {
    let sub = op.truncate(r);
    let sigma_min = sub
        .to_dense()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let inverse_norm = 1.0 / sigma_min;
    let bound = 4.0 * r.powf(kappa) / gamma1;
    InverseNormWitness {
        scale: r,
        inverse_norm,
        bound,
        holds: inverse_norm <= bound,
    }
}

/// Converts a solution vector on `op`'s index set back into a field.
pub fn to_field(op: &LinearizedOperator, x: &CVector, declared_real: bool) -> SpectralField {
    let f = SpectralField::from_vector(&op.index, &DVector::from_iterator(x.len(), x.iter().copied()), declared_real);
    if declared_real {
        f.enforce_real()
    } else {
        f
    }
}
