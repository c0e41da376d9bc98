//! Dense primal-dual interior-point solver for small semidefinite programs
//! over complex Hermitian blocks.
//!
//! Standard form:
//!
//! ```text
//!   minimize    Σ_b tr(C_b X_b)
//!   subject to  Σ_b tr(A_kb X_b) = r_k     for every constraint k
//!               X_b ⪰ 0
//! ```
//!
//! with dual `maximize Σ_k r_k y_k  s.t.  C_b − Σ_k y_k A_kb ⪰ 0`.
//!
//! Complex blocks are embedded as real symmetric blocks of twice the size,
//! `h ↦ [[Re h, −Im h], [Im h, Re h]]`. Under the embedding every trace
//! inner product doubles, so right-hand sides are doubled going in and the
//! objectives halved coming out; the dual multipliers are unchanged.
//!
//! The iteration is an infeasible-start path-following method using the
//! HKM search direction with a Mehrotra predictor-corrector step. The
//! constraint matrices are kept sparse, which is what makes the Schur
//! complement cheap for partial-trace constraints.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{QotError, Result};
use crate::linalg::{ComplexSquareMatrix, HERMITIAN_TOL, C64};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: String,
    pub dim: usize,
}

/// `Σ_b tr(A_kb X_b) = rhs`. Blocks that do not appear have zero coefficient.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(usize, ComplexSquareMatrix)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    blocks: Vec<BlockSpec>,
    objective: Vec<ComplexSquareMatrix>,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a PSD variable block with zero cost and returns its index.
    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> usize {
        self.blocks.push(BlockSpec {
            name: name.into(),
            dim,
        });
        self.objective.push(ComplexSquareMatrix::zeros(dim));
        self.blocks.len() - 1
    }

    pub fn set_objective(&mut self, block: usize, cost: ComplexSquareMatrix) {
        self.objective[block] = cost;
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, ComplexSquareMatrix)>, rhs: f64) {
        self.constraints.push(Constraint { terms, rhs });
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn objective(&self) -> &[ComplexSquareMatrix] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QotError::InvalidProblem(msg));
        if self.blocks.is_empty() {
            return bad("no variable blocks".into());
        }
        if self.constraints.is_empty() {
            return bad("constraint list is empty".into());
        }
        for (b, (spec, c)) in self.blocks.iter().zip(&self.objective).enumerate() {
            if spec.dim == 0 {
                return bad(format!("block {b} ({}) has dimension 0", spec.name));
            }
            if c.dim() != spec.dim {
                return bad(format!("objective for block {} has dim {}, expected {}", spec.name, c.dim(), spec.dim));
            }
            if c.max_asymmetry() > HERMITIAN_TOL {
                return bad(format!("objective for block {} is not Hermitian", spec.name));
            }
        }
        for (k, con) in self.constraints.iter().enumerate() {
            if !con.rhs.is_finite() {
                return bad(format!("constraint {k} has non-finite right-hand side"));
            }
            for (b, a) in &con.terms {
                let Some(spec) = self.blocks.get(*b) else {
                    return bad(format!("constraint {k} references missing block {b}"));
                };
                if a.dim() != spec.dim {
                    return bad(format!("constraint {k}: coefficient for block {} has dim {}, expected {}", spec.name, a.dim(), spec.dim));
                }
                if a.max_asymmetry() > HERMITIAN_TOL {
                    return bad(format!("constraint {k}: coefficient for block {} is not Hermitian", spec.name));
                }
            }
        }
        Ok(())
    }

    /// `Σ_b tr(C_b X_b)`.
    pub fn objective_value(&self, values: &[ComplexSquareMatrix]) -> f64 {
        self.objective
            .iter()
            .zip(values)
            .map(|(c, x)| c.trace_product(x).re)
            .sum()
    }

    /// `Σ_b tr(A_kb X_b) − r_k` for every constraint.
    pub fn constraint_residuals(&self, values: &[ComplexSquareMatrix]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|con| {
                con.terms
                    .iter()
                    .map(|(b, a)| a.trace_product(&values[*b]).re)
                    .sum::<f64>()
                    - con.rhs
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iterations: usize,
    /// Multiplier on the automatically chosen starting point `X = ξI, Z = ηI`.
    pub initial_scaling: f64,
    /// Reserved for randomized perturbations; the current iteration is fully
    /// deterministic and does not draw from it.
    pub seed: u64,
    /// Dual objective beyond which a primal-infeasible run is declared infeasible.
    pub infeasibility_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iterations: 200,
            initial_scaling: 1.0,
            seed: 0,
            infeasibility_bound: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gap_tol", self.gap_tol),
            ("feas_tol", self.feas_tol),
            ("initial_scaling", self.initial_scaling),
            ("infeasibility_bound", self.infeasibility_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QotError::OutOfRange {
                    name,
                    value: v,
                    expected: "a finite positive number",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolverStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `|⟨Rd, X⟩| + |yᵀ rp|`: how much infeasibility can offset weak duality.
    pub infeasibility_slack: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub block_values: Vec<ComplexSquareMatrix>,
    pub dual_values: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `primal_objective − dual_objective`.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub min_eigenvalue: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }

    /// Per-iteration `iteration,gap,primal_res,dual_res` lines.
    pub fn iteration_csv(&self) -> String {
        let mut out = String::from("iteration,gap,primal_res,dual_res\n");
        for r in &self.history {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", r.iteration, r.gap, r.primal_residual, r.dual_residual));
        }
        out
    }

    /// Turns any non-optimal status into an error.
    pub fn require_optimal(self) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(QotError::Solver {
                status: self.status,
                gap: self.gap,
                primal_residual: self.primal_residual,
            })
        }
    }
}

/// Real symmetric embedding `[[Re h, −Im h], [Im h, Re h]]`.
pub fn embed_complex(h: &ComplexSquareMatrix) -> DMatrix<f64> {
    let n = h.dim();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`embed_complex`], averaging the redundant copies.
pub fn extract_complex(z: &DMatrix<f64>) -> ComplexSquareMatrix {
    let n = z.nrows() / 2;
    ComplexSquareMatrix::from_fn(n, |i, j| {
        let re = 0.5 * (z[(i, j)] + z[(i + n, j + n)]);
        let im = 0.5 * (z[(i + n, j)] - z[(i, j + n)]);
        C64::new(re, im)
    })
}

/// Symmetric sparse matrix stored with both triangles.
#[derive(Debug, Clone)]
struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    fn embed(h: &ComplexSquareMatrix) -> Self {
        let n = h.dim();
        let mut entries = Vec::new();
        for p in 0..n {
            for q in 0..n {
                let z = h[(p, q)];
                if z.re != 0.0 {
                    entries.push((p, q, z.re));
                    entries.push((p + n, q + n, z.re));
                }
                if z.im != 0.0 {
                    entries.push((p, q + n, -z.im));
                    entries.push((p + n, q, z.im));
                }
            }
        }
        Self { entries }
    }

    /// `tr(A W)` for a dense, not necessarily symmetric, `W`.
    fn trace_with(&self, w: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(p, q, a)| a * w[(q, p)]).sum()
    }

    fn add_scaled_to(&self, s: f64, out: &mut DMatrix<f64>) {
        for &(p, q, a) in &self.entries {
            out[(p, q)] += s * a;
        }
    }

    fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }
}

/// The embedded real problem.
struct RealProblem {
    dims: Vec<usize>,
    cost: Vec<DMatrix<f64>>,
    /// Per constraint, per block (only nonzero blocks).
    rows: Vec<Vec<(usize, SparseSym)>>,
    rhs: DVector<f64>,
}

impl RealProblem {
    fn from_problem(problem: &SdpProblem) -> Self {
        let dims = problem.blocks.iter().map(|b| 2 * b.dim).collect();
        let cost = problem.objective.iter().map(embed_complex).collect();
        let rows = problem
            .constraints
            .iter()
            .map(|con| {
                con.terms
                    .iter()
                    .map(|(b, a)| (*b, SparseSym::embed(a)))
                    .filter(|(_, s)| !s.entries.is_empty())
                    .collect()
            })
            .collect();
        let rhs = DVector::from_iterator(problem.constraints.len(), problem.constraints.iter().map(|c| 2.0 * c.rhs));
        Self { dims, cost, rows, rhs }
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    /// `A(W)_k = Σ_b tr(A_kb W_b)`.
    fn apply(&self, w: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|(b, a)| a.trace_with(&w[*b])).sum::<f64>()),
        )
    }

    /// `Aᵀ(y)_b = Σ_k y_k A_kb`.
    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (k, row) in self.rows.iter().enumerate() {
            for (b, a) in row {
                a.add_scaled_to(y[k], &mut out[*b]);
            }
        }
        out
    }

    /// Schur complement `M_ij = Σ_b tr(A_ib X_b A_jb Z_b⁻¹)`.
    fn schur(&self, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                for (bi, ai) in &self.rows[i] {
                    for (bj, aj) in &self.rows[j] {
                        if bi != bj {
                            continue;
                        }
                        let (xb, zb) = (&x[*bi], &zinv[*bi]);
                        for &(p, q, a) in &ai.entries {
                            for &(r, s, c) in &aj.entries {
                                acc += a * c * xb[(q, r)] * zb[(s, p)];
                            }
                        }
                    }
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn max_abs_blocks(a: &[DMatrix<f64>]) -> f64 {
    a.iter().flat_map(|m| m.iter()).fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `α` with `X + αΔX ⪰ 0` (infinite when ΔX keeps X in the cone).
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(half) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(full) = l.solve_lower_triangular(&half.transpose()) else {
        return 0.0;
    };
    let min_eig = sym(&full).symmetric_eigenvalues().min();
    if min_eig >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min_eig
    }
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
}

struct Snapshot {
    iterate: Iterate,
    merit: f64,
    record: IterationRecord,
}

impl Iterate {
    fn clone_all(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            z: self.z.clone(),
        }
    }
}

fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    for reg in [1e-14, 1e-12, 1e-10] {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += reg * scale;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
    }
    None
}

/// Solves `problem` to the tolerances in `config`.
///
/// Only malformed problems produce `Err`; convergence failures are reported
/// through [`SdpSolution::status`] together with the best iterate found.
pub fn solve(problem: &SdpProblem, config: &SolverConfig) -> Result<SdpSolution> {
    problem.validate()?;
    config.validate()?;
    let rp = RealProblem::from_problem(problem);
    Ok(run(&rp, problem, config))
}

fn run(rp: &RealProblem, problem: &SdpProblem, config: &SolverConfig) -> SdpSolution {
    let nblocks = rp.dims.len();
    let total_dim: usize = rp.dims.iter().sum();

    let mut it = {
        let mut x = Vec::with_capacity(nblocks);
        let mut z = Vec::with_capacity(nblocks);
        for (b, &n) in rp.dims.iter().enumerate() {
            let nf = n as f64;
            let mut xi: f64 = 10.0_f64.max(nf.sqrt());
            let mut eta: f64 = 10.0_f64.max(nf.sqrt()).max(rp.cost[b].norm());
            for (k, row) in rp.rows.iter().enumerate() {
                for (bb, a) in row {
                    if *bb == b {
                        let fa = a.frobenius();
                        xi = xi.max(nf * (1.0 + rp.rhs[k].abs()) / (1.0 + fa));
                        eta = eta.max(fa);
                    }
                }
            }
            x.push(DMatrix::identity(n, n) * (xi * config.initial_scaling));
            z.push(DMatrix::identity(n, n) * (eta * config.initial_scaling));
        }
        Iterate {
            x,
            y: DVector::zeros(rp.m()),
            z,
        }
    };

    let mut history = Vec::new();
    let mut best: Option<Snapshot> = None;
    let mut status = SolverStatus::MaxIterations;
    let mut stalled = 0usize;

    for iteration in 0..=config.max_iterations {
        let ax = rp.apply(&it.x);
        let rprimal = &rp.rhs - &ax;
        let aty = rp.adjoint(&it.y);
        let rdual: Vec<DMatrix<f64>> = (0..nblocks).map(|b| &rp.cost[b] - &aty[b] - &it.z[b]).collect();

        let pobj = 0.5 * inner(&rp.cost, &it.x);
        let dobj = 0.5 * rp.rhs.dot(&it.y);
        let pres = 0.5 * rprimal.amax();
        let dres = max_abs_blocks(&rdual);
        let slack = 0.5 * (inner(&rdual, &it.x).abs() + it.y.dot(&rprimal).abs());
        let record = IterationRecord {
            iteration,
            primal_objective: pobj,
            dual_objective: dobj,
            gap: pobj - dobj,
            primal_residual: pres,
            dual_residual: dres,
            infeasibility_slack: slack,
        };
        log::debug!(target: "qot::sdp", "{},{:e},{:e},{:e}", iteration, record.gap, pres, dres);
        history.push(record);

        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let merit = (rel_gap / config.gap_tol).max(pres / config.feas_tol).max(dres / config.feas_tol);
        if best.as_ref().is_none_or(|s| merit < s.merit) {
            best = Some(Snapshot {
                iterate: it.clone_all(),
                merit,
                record,
            });
        }
        if rel_gap <= config.gap_tol && pres <= config.feas_tol && dres <= config.feas_tol {
            status = SolverStatus::Optimal;
            break;
        }
        if dobj > config.infeasibility_bound && pres > config.feas_tol {
            status = SolverStatus::Infeasible;
            break;
        }
        if iteration == config.max_iterations {
            break;
        }

        let mu = inner(&it.x, &it.z) / total_dim as f64;
        let (mut zchol, mut xchol) = (Vec::with_capacity(nblocks), Vec::with_capacity(nblocks));
        let mut failed = false;
        for b in 0..nblocks {
            match (Cholesky::new(it.z[b].clone()), Cholesky::new(it.x[b].clone())) {
                (Some(zc), Some(xc)) => {
                    zchol.push(zc);
                    xchol.push(xc);
                }
                _ => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            status = SolverStatus::NumericalFailure;
            break;
        }
        let zinv: Vec<DMatrix<f64>> = zchol.iter().map(|c| c.inverse()).collect();
        let schur = rp.schur(&it.x, &zinv);
        let Some(schur_chol) = factor_schur(&schur) else {
            status = SolverStatus::NumericalFailure;
            break;
        };

        let x_rd_zinv: Vec<DMatrix<f64>> = (0..nblocks).map(|b| &it.x[b] * &rdual[b] * &zinv[b]).collect();
        let a_zinv = rp.apply(&zinv);
        let a_x_rd_zinv = rp.apply(&x_rd_zinv);

        // HKM direction for centering `sigma` and optional second-order term.
        let direction = |sigma: f64, corr: Option<&[DMatrix<f64>]>| {
            let mut rhs = &rp.rhs - &a_zinv * (sigma * mu) + &a_x_rd_zinv;
            if let Some(c) = corr {
                rhs += rp.apply(c);
            }
            let dy = schur_chol.solve(&rhs);
            let atdy = rp.adjoint(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nblocks).map(|b| &rdual[b] - &atdy[b]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nblocks)
                .map(|b| {
                    let mut d = &zinv[b] * (sigma * mu) - &it.x[b] - sym(&(&it.x[b] * &dz[b] * &zinv[b]));
                    if let Some(c) = corr {
                        d -= sym(&c[b]);
                    }
                    d
                })
                .collect();
            (dx, dy, dz)
        };
        let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| {
            let ap = (0..nblocks).map(|b| max_step(&xchol[b], &dx[b])).fold(f64::INFINITY, f64::min);
            let ad = (0..nblocks).map(|b| max_step(&zchol[b], &dz[b])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        let (dx_p, _, dz_p) = direction(0.0, None);
        let (ap, ad) = steps(&dx_p, &dz_p);
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let predicted: f64 = (0..nblocks)
            .map(|b| (&it.x[b] + &dx_p[b] * ap1).dot(&(&it.z[b] + &dz_p[b] * ad1)))
            .sum();
        let ratio = (predicted / (mu * total_dim as f64)).clamp(0.0, 1.0);
        let expon = if mu > 1e-6 { 1.0_f64.max(3.0 * ap1.min(ad1).powi(2)) } else { 3.0 };
        let sigma = ratio.powf(expon).min(1.0);

        let corr: Vec<DMatrix<f64>> = (0..nblocks).map(|b| &dx_p[b] * &dz_p[b] * &zinv[b]).collect();
        let (dx, dy, dz) = direction(sigma, Some(&corr));
        let (ap, ad) = steps(&dx, &dz);
        let gamma = 0.9 + 0.09 * ap1.min(ad1);
        let alpha_p = (gamma * ap).min(1.0);
        let alpha_d = (gamma * ad).min(1.0);

        if alpha_p < 1e-10 && alpha_d < 1e-10 {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }

        for b in 0..nblocks {
            it.x[b] += &dx[b] * alpha_p;
            it.z[b] += &dz[b] * alpha_d;
            symmetrize(&mut it.x[b]);
            symmetrize(&mut it.z[b]);
        }
        it.y += dy * alpha_d;
    }

    let final_iterate;
    let record;
    if status == SolverStatus::Optimal {
        final_iterate = it;
        record = *history.last().expect("at least one iteration");
    } else {
        let snap = best.expect("at least one iteration");
        final_iterate = snap.iterate;
        record = snap.record;
    }

    let block_values: Vec<ComplexSquareMatrix> = final_iterate.x.iter().map(extract_complex).collect();
    let min_eigenvalue = block_values
        .iter()
        .map(|m| crate::linalg::eig_hermitian_unchecked(m).min_value())
        .fold(f64::INFINITY, f64::min);
    let primal_residual = problem
        .constraint_residuals(&block_values)
        .iter()
        .fold(0.0_f64, |a, r| a.max(r.abs()));
    if status == SolverStatus::Optimal && (min_eigenvalue < -config.feas_tol || primal_residual > config.feas_tol) {
        status = SolverStatus::NumericalFailure;
    }

    SdpSolution {
        primal_objective: problem.objective_value(&block_values),
        dual_objective: record.dual_objective,
        gap: problem.objective_value(&block_values) - record.dual_objective,
        primal_residual,
        dual_residual: record.dual_residual,
        min_eigenvalue,
        status,
        iterations: record.iteration,
        dual_values: final_iterate.y.iter().copied().collect(),
        block_values,
        history,
    }
}
