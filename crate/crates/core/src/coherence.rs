//! Coherence quantifiers built on the revised transport cost.
//!
//! `T̃(ρ) = min_δ T_s(ρ, δ)` over diagonal `δ` is a single program: the second
//! marginal of `X + Y` is left free except that its off-diagonal entries
//! vanish. On pure states it has the closed form `(1 − maxᵢ|λᵢ|²)/2`, and
//! the convex roof of that closed form gives the mixed-state measure `T(ρ)`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::coupling::{add_marginal_constraints, assemble_dual, BipartiteFrame, Component, LocalFrame};
use crate::error::{QotError, Result};
use crate::linalg::{
    asym_projector, eig_hermitian_unchecked, numerical_rank, sym_projector, BipartiteOperator, ComplexSquareMatrix,
    DensityMatrix, PureState, Subsystem, C64, RANK_TOL,
};
use crate::sdp::{self, SdpProblem, SolverConfig};
use crate::transport::{revised_objective, CouplingWitness};

/// The computational basis of `C^d`; its diagonal states are the free states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IncoherentBasis {
    pub dim: usize,
}

impl IncoherentBasis {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn contains(&self, rho: &DensityMatrix, tol: f64) -> bool {
        rho.dim() == self.dim && rho.is_diagonal(tol)
    }

    /// Diagonal part of `ρ`.
    pub fn dephase(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::from_trusted(ComplexSquareMatrix::from_real_diagonal(&rho.populations()))
    }
}

#[derive(Debug, Clone)]
pub struct CoherenceResult {
    pub value: f64,
    pub optimal_delta: DensityMatrix,
    pub witness: CouplingWitness,
}

impl Serialize for CoherenceResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            value: f64,
            delta: Vec<f64>,
            witness: &'a CouplingWitness,
        }
        Out {
            value: self.value,
            delta: self.optimal_delta.populations(),
            witness: &self.witness,
        }
        .serialize(s)
    }
}

/// `T̃(ρ)` with the optimal incoherent state and the optimal pair `(X, Y)`.
pub fn tilde_t(rho: &DensityMatrix, config: &SolverConfig) -> Result<CoherenceResult> {
    let d = rho.dim();
    let frame = BipartiteFrame {
        a: LocalFrame::support_of(rho.matrix()),
        b: LocalFrame::full(d),
    };
    let dims = frame.reduced_dims();
    let comps_a = Component::all(dims.0);
    let comps_b = Component::off_diagonal(d);
    let rho_r = frame.a.compress(rho.matrix());

    let ps = sym_projector(d).into_matrix();
    let pa = asym_projector(d).into_matrix();
    let mut problem = SdpProblem::new();
    let x = problem.add_block("x_ab", dims.0 * dims.1);
    let y = problem.add_block("y_ab", dims.0 * dims.1);
    problem.set_objective(x, frame.compress(&ps));
    problem.set_objective(y, frame.compress(&pa));
    add_marginal_constraints(&mut problem, &[x, y], dims, Subsystem::A, &comps_a, |c| c.read(&rho_r));
    add_marginal_constraints(&mut problem, &[x, y], dims, Subsystem::B, &comps_b, |_| 0.0);
    let sol = sdp::solve(&problem, config)?.require_optimal()?;

    let x_ab = BipartiteOperator::new(d, frame.expand(&sol.block_values[0]))?;
    let y_ab = BipartiteOperator::new(d, frame.expand(&sol.block_values[1]))?;
    let n = comps_a.len();
    let h1 = assemble_dual(dims.0, &comps_a, &sol.dual_values[..n]);
    let h2 = assemble_dual(d, &comps_b, &sol.dual_values[n..]);
    let (dual_h1, dual_h2) = frame.lift_dual(&h1, &h2, &[&ps, &pa]);

    let marginal = x_ab.add(&y_ab).partial_trace(Subsystem::A);
    let optimal_delta = diagonal_state(&marginal.real_diagonal());
    let value = revised_objective(&x_ab, &y_ab);
    Ok(CoherenceResult {
        value,
        optimal_delta,
        witness: CouplingWitness {
            value,
            gap: sol.gap,
            x_ab,
            y_ab,
            dual_h1,
            dual_h2,
        },
    })
}

/// Clips round-off negatives and renormalizes; off-diagonals are exactly zero.
fn diagonal_state(pops: &[f64]) -> DensityMatrix {
    let clipped: Vec<f64> = pops.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let normalized: Vec<f64> = clipped.iter().map(|p| p / total).collect();
    DensityMatrix::from_trusted(ComplexSquareMatrix::from_real_diagonal(&normalized))
}

/// `(1 − maxᵢ|λᵢ|²)/2`.
pub fn tilde_t_pure(phi: &PureState) -> f64 {
    (1.0 - phi.max_population().1) / 2.0
}

/// Geometric coherence of a pure state, `1 − maxᵢ|λᵢ|²`.
pub fn geometric_coherence_pure(phi: &PureState) -> f64 {
    1.0 - phi.max_population().1
}

/// Kraus representation `ρ ↦ Σ Kᵢ ρ Kᵢ†` of a channel that maps diagonal
/// states to diagonal states.
#[derive(Debug, Clone)]
pub struct IncoherentChannel {
    kraus: Vec<ComplexSquareMatrix>,
}

impl IncoherentChannel {
    /// Validates completeness and incoherence at `tol`.
    pub fn new(kraus: Vec<ComplexSquareMatrix>, tol: f64) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(QotError::InvalidChannel("no Kraus operators".into()));
        };
        let d = first.dim();
        if let Some(k) = kraus.iter().find(|k| k.dim() != d) {
            return Err(QotError::DimensionMismatch {
                expected: d,
                actual: k.dim(),
            });
        }
        let channel = Self { kraus };
        let residual = channel.completeness_residual();
        if residual > tol {
            return Err(QotError::InvalidChannel(format!(
                "Σ K†K deviates from the identity by {residual:.3e}"
            )));
        }
        if let Some(i) = (0..channel.kraus.len()).find(|&i| !channel.kraus_is_incoherent(i, tol)) {
            return Err(QotError::InvalidChannel(format!(
                "Kraus operator {i} maps a basis state outside the incoherent set"
            )));
        }
        Ok(channel)
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    pub fn kraus_operators(&self) -> &[ComplexSquareMatrix] {
        &self.kraus
    }

    /// `‖Σ K†K − I‖_max`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.dim();
        let mut acc = ComplexSquareMatrix::zeros(d);
        for k in &self.kraus {
            acc = &acc + &(&k.adjoint() * k);
        }
        acc.max_abs_diff(&ComplexSquareMatrix::identity(d))
    }

    fn kraus_is_incoherent(&self, i: usize, tol: f64) -> bool {
        let k = &self.kraus[i];
        (0..k.dim()).all(|b| PureState::basis(k.dim(), b).projector().conjugate_by(k).max_off_diagonal() <= tol)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim() {
            return Err(QotError::DimensionMismatch {
                expected: self.dim(),
                actual: rho.dim(),
            });
        }
        let mut acc = ComplexSquareMatrix::zeros(rho.dim());
        for k in &self.kraus {
            acc = &acc + &rho.matrix().conjugate_by(k);
        }
        Ok(DensityMatrix::from_trusted(acc.hermitian_part()))
    }
}

/// Random incoherent channel with Kraus operators `Dᵢ Πᵢ S^{-1/2}`, where
/// `Dᵢ` is a complex Gaussian diagonal, `Πᵢ` a uniform permutation and
/// `S = Σ (DᵢΠᵢ)†(DᵢΠᵢ)`, which is diagonal.
pub fn sample_incoherent_channel(d: usize, n_kraus: usize, seed: u64) -> Result<IncoherentChannel> {
    if d < 2 {
        return Err(QotError::InvalidDimension(d));
    }
    if n_kraus == 0 {
        return Err(QotError::InvalidChannel("n_kraus must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(n_kraus);
    let mut s = vec![0.0; d];
    for _ in 0..n_kraus {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rng);
        let diag: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        // K|j⟩ = D_{perm[j]}|perm[j]⟩, so (K†K)_jj = |D_{perm[j]}|²
        for j in 0..d {
            s[j] += diag[perm[j]].norm_sqr();
        }
        raw.push((perm, diag));
    }
    let kraus = raw
        .into_iter()
        .map(|(perm, diag)| {
            ComplexSquareMatrix::from_fn(d, |i, j| {
                if perm[j] == i {
                    diag[i] / s[j].sqrt()
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        })
        .collect();
    IncoherentChannel::new(kraus, 1e-9)
}

/// A pure-state ensemble `{pᵢ, |φᵢ⟩}`.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub weights: Vec<f64>,
    pub states: Vec<PureState>,
}

impl Decomposition {
    /// `Σ pᵢ|φᵢ⟩⟨φᵢ|`.
    pub fn reconstruct(&self) -> ComplexSquareMatrix {
        let d = self.states[0].dim();
        let mut acc = ComplexSquareMatrix::zeros(d);
        for (p, s) in self.weights.iter().zip(&self.states) {
            acc = &acc + &s.projector().scale(*p);
        }
        acc
    }

    /// `Σ pᵢ T̃(|φᵢ⟩)`.
    pub fn average_tilde_t(&self) -> f64 {
        self.weights.iter().zip(&self.states).map(|(p, s)| p * tilde_t_pure(s)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RoofConfig {
    /// Number of ensemble members; `None` means `d·rank(ρ)` capped at `d²`.
    pub ensemble_size: Option<usize>,
    pub starts: usize,
    pub seed: u64,
    /// Ascent steps per start, split evenly over the annealing stages.
    pub max_iters: usize,
    /// Initial soft-maximum temperature.
    pub temperature: f64,
}

impl Default for RoofConfig {
    fn default() -> Self {
        Self {
            ensemble_size: None,
            starts: 32,
            seed: 0,
            max_iters: 600,
            temperature: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoofResult {
    pub value: f64,
    pub best: Decomposition,
    /// Starts whose final exact ascent stalled (a local optimum was reached).
    pub converged_starts: usize,
    pub best_start: usize,
}

const ANNEAL_STAGES: usize = 6;
const ANNEAL_FACTOR: f64 = 0.25;

/// Ensemble search space: `|φ̃ᵢ⟩ = Σⱼ V_ij √qⱼ |eⱼ⟩` for a `K × r` isometry `V`,
/// so `B = A Vᵀ` holds the unnormalized states as columns.
struct RoofSpace {
    a: DMatrix<C64>,
    k: usize,
}

impl RoofSpace {
    fn states(&self, v: &DMatrix<C64>) -> DMatrix<C64> {
        &self.a * v.transpose()
    }

    /// `Σᵢ maxₖ |B_ki|²`; the roof value is `(1 − this)/2`.
    fn exact(&self, v: &DMatrix<C64>) -> f64 {
        let b = self.states(v);
        b.column_iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max))
            .sum()
    }

    /// Log-sum-exp smoothing of `exact` at temperature `t`, and its gradient
    /// with respect to `V̄`.
    fn smoothed(&self, v: &DMatrix<C64>, t: f64) -> (f64, DMatrix<C64>) {
        let b = self.states(v);
        let mut weighted = DMatrix::zeros(b.nrows(), b.ncols());
        let mut total = 0.0;
        for (i, col) in b.column_iter().enumerate() {
            let m = col.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
            let ex: Vec<f64> = col.iter().map(|z| ((z.norm_sqr() - m) / t).exp()).collect();
            let z: f64 = ex.iter().sum();
            total += m + t * z.ln();
            for (kk, e) in ex.iter().enumerate() {
                weighted[(kk, i)] = b[(kk, i)] * (e / z);
            }
        }
        let grad = weighted.transpose() * self.a.map(|z| z.conj());
        (total, grad)
    }

    fn retract(m: &DMatrix<C64>) -> DMatrix<C64> {
        let svd = m.clone().svd(true, true);
        svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
    }

    fn initial(&self, start: usize, seed: u64) -> DMatrix<C64> {
        let r = self.a.ncols();
        if start == 0 {
            return DMatrix::identity(self.k, r);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(start as u64);
        let g = DMatrix::from_fn(self.k, r, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        Self::retract(&g)
    }

    /// Annealed ascent followed by exact-objective polishing. Returns the
    /// best exact objective seen, its isometry and whether polishing stalled.
    fn run(&self, start: usize, config: &RoofConfig) -> (f64, DMatrix<C64>, bool) {
        let mut v = self.initial(start, config.seed);
        let mut best = (self.exact(&v), v.clone());
        let per_stage = (config.max_iters / (ANNEAL_STAGES + 1)).max(1);
        let mut t = config.temperature;
        for _ in 0..ANNEAL_STAGES {
            let mut step = 1.0;
            let (mut f, mut g) = self.smoothed(&v, t);
            for _ in 0..per_stage {
                let cand = Self::retract(&(&v + &g * C64::new(step, 0.0)));
                let (fc, gc) = self.smoothed(&cand, t);
                if fc > f {
                    v = cand;
                    f = fc;
                    g = gc;
                    step *= 1.5;
                    let e = self.exact(&v);
                    if e > best.0 {
                        best = (e, v.clone());
                    }
                } else {
                    step *= 0.5;
                    if step < 1e-12 {
                        break;
                    }
                }
            }
            t *= ANNEAL_FACTOR;
        }
        // polish with the exact objective; the active maximizers make it a
        // smooth quadratic locally, so the soft gradient at tiny t applies
        let mut v = best.1.clone();
        let mut f = best.0;
        let mut step = 1.0;
        let mut stalled = false;
        for _ in 0..per_stage {
            let (_, g) = self.smoothed(&v, 1e-12);
            let cand = Self::retract(&(&v + &g * C64::new(step, 0.0)));
            let fc = self.exact(&cand);
            if fc > f {
                let gain = fc - f;
                v = cand;
                f = fc;
                step *= 1.5;
                if gain < 1e-15 {
                    stalled = true;
                    break;
                }
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    stalled = true;
                    break;
                }
            }
        }
        if f > best.0 {
            best = (f, v);
        }
        (best.0, best.1, stalled)
    }

    fn decomposition(&self, v: &DMatrix<C64>) -> Decomposition {
        let b = self.states(v);
        let mut weights = Vec::new();
        let mut states = Vec::new();
        for col in b.column_iter() {
            let p: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            if p > 1e-15 {
                let s = p.sqrt();
                weights.push(p);
                states.push(PureState::from_trusted(col.iter().map(|z| z / s).collect()));
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Decomposition { weights, states }
    }
}

/// Convex-roof measure `T(ρ) = min Σ pᵢ T̃(|φᵢ⟩)` by multi-start ascent over
/// ensemble isometries. Start 0 is the eigendecomposition, so the result
/// never exceeds its average.
pub fn convex_roof_t(rho: &DensityMatrix, config: &RoofConfig) -> Result<RoofResult> {
    if config.starts == 0 {
        return Err(QotError::OutOfRange {
            name: "starts",
            value: 0.0,
            expected: ">= 1",
        });
    }
    if !(config.temperature > 0.0) {
        return Err(QotError::OutOfRange {
            name: "temperature",
            value: config.temperature,
            expected: "> 0",
        });
    }
    let d = rho.dim();
    let eig = eig_hermitian_unchecked(rho.matrix());
    let r = numerical_rank(rho.matrix(), RANK_TOL)?.max(1);
    let k = config.ensemble_size.unwrap_or((d * r).min(d * d)).max(r);
    let vecs = eig.vectors.as_nalgebra();
    let a = DMatrix::from_fn(d, r, |i, j| vecs[(i, j)] * eig.values[j].max(0.0).sqrt());
    let space = RoofSpace { a, k };

    let runs: Vec<(f64, DMatrix<C64>, bool)> =
        (0..config.starts).into_par_iter().map(|s| space.run(s, config)).collect();
    let converged_starts = runs.iter().filter(|r| r.2).count();
    // runs are in start order, so the first maximum is the lowest index
    let mut best_start = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.0 > runs[best_start].0 {
            best_start = i;
        }
    }
    let best = space.decomposition(&runs[best_start].1);
    Ok(RoofResult {
        value: best.average_tilde_t(),
        best,
        converged_starts,
        best_start,
    })
}

/// One row of the counterexample check.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleCheck {
    pub quantity: &'static str,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    /// `true` when `measured` is only required to stay at or below `expected + tolerance`.
    pub upper_bound: bool,
    pub passed: bool,
}

impl CounterexampleCheck {
    fn equal(quantity: &'static str, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            quantity,
            measured,
            expected,
            tolerance,
            upper_bound: false,
            passed: (measured - expected).abs() <= tolerance,
        }
    }

    fn at_most(quantity: &'static str, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            quantity,
            measured,
            expected,
            tolerance,
            upper_bound: true,
            passed: measured <= expected + tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub tilde_t_rho1: f64,
    pub tilde_t_rho2: f64,
    pub weighted_sum: f64,
    pub tilde_t_rho: f64,
    pub witness_objective: f64,
    pub checks: Vec<CounterexampleCheck>,
}

impl CounterexampleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CounterexampleCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Shipped states and explicit witness for the five-dimensional mixture
/// `½ρ₁ ⊕ ½ρ₂` with `ρ₁ = |+⟩⟨+|` on `{0,1}` and `ρ₂` the uniform
/// superposition on `{2,3,4}`.
pub mod fixtures {
    use crate::error::Result;
    use crate::io::{parse_density, parse_matrix};
    use crate::linalg::{BipartiteOperator, ComplexSquareMatrix, DensityMatrix, Tolerances};

    pub const RHO1: &str = include_str!("../fixtures/rho1.json");
    pub const RHO2: &str = include_str!("../fixtures/rho2.json");
    pub const RHO: &str = include_str!("../fixtures/counterexample_rho.json");
    pub const WITNESS_X: &str = include_str!("../fixtures/witness_x.json");
    pub const WITNESS_Y: &str = include_str!("../fixtures/witness_y.json");
    pub const WITNESS_DELTA: &str = include_str!("../fixtures/witness_delta.json");

    pub fn rho1() -> Result<DensityMatrix> {
        parse_density(RHO1, Tolerances::default())
    }

    pub fn rho2() -> Result<DensityMatrix> {
        parse_density(RHO2, Tolerances::default())
    }

    pub fn rho() -> Result<DensityMatrix> {
        parse_density(RHO, Tolerances::default())
    }

    pub fn witness() -> Result<(BipartiteOperator, BipartiteOperator, ComplexSquareMatrix)> {
        let x = BipartiteOperator::new(5, parse_matrix(WITNESS_X)?)?;
        let y = BipartiteOperator::new(5, parse_matrix(WITNESS_Y)?)?;
        Ok((x, y, parse_matrix(WITNESS_DELTA)?))
    }
}

/// Reproduces the failure of strong monotonicity for `T̃`: the mixture
/// `½ρ₁ ⊕ ½ρ₂` has `T̃ ≤ 1/4` while `½T̃(ρ₁) + ½T̃(ρ₂) = 7/24`.
pub fn verify_b3_counterexample(config: &SolverConfig) -> Result<CounterexampleReport> {
    let t1 = tilde_t(&fixtures::rho1()?, config)?.value;
    let t2 = tilde_t(&fixtures::rho2()?, config)?.value;
    let rho = fixtures::rho()?;
    let t = tilde_t(&rho, config)?.value;
    let (x, y, delta) = fixtures::witness()?;
    let witness_objective = revised_objective(&x, &y);
    let sum = x.add(&y);
    let marginal_residual = sum
        .partial_trace(Subsystem::B)
        .max_abs_diff(rho.matrix())
        .max(sum.partial_trace(Subsystem::A).max_abs_diff(&delta));
    let min_eig = eig_hermitian_unchecked(x.matrix())
        .min_value()
        .min(eig_hermitian_unchecked(y.matrix()).min_value());
    let weighted_sum = 0.5 * t1 + 0.5 * t2;
    let checks = vec![
        CounterexampleCheck::equal("tilde_t(rho1)", t1, 0.25, 1e-6),
        CounterexampleCheck::equal("tilde_t(rho2)", t2, 1.0 / 3.0, 1e-6),
        CounterexampleCheck::equal("weighted sum", weighted_sum, 7.0 / 24.0, 2e-6),
        CounterexampleCheck::equal("witness objective", witness_objective, 0.25, 1e-10),
        CounterexampleCheck::equal("witness marginals", marginal_residual, 0.0, 1e-12),
        CounterexampleCheck::at_most("witness negativity", -min_eig, 0.0, 1e-12),
        CounterexampleCheck::at_most("tilde_t(rho)", t, 0.25, 1e-6),
        CounterexampleCheck::at_most("tilde_t(rho) below weighted sum", t - weighted_sum, 0.0, 0.0),
    ];
    Ok(CounterexampleReport {
        tilde_t_rho1: t1,
        tilde_t_rho2: t2,
        weighted_sum,
        tilde_t_rho: t,
        witness_objective,
        checks,
    })
}
