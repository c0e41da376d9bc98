//! Quantum optimal transport cost `T(ρ, σ)`, the revised cost `T_s(ρ, σ)`
//! through its primal and dual programs, and the ancilla form
//! `T(ρ ⊗ I₂/2, σ ⊗ I₂/2)` used as a cross-check.

use serde::Serialize;

use crate::coupling::{
    add_marginal_constraints, assemble_dual, min_lmi_eigenvalue, BipartiteFrame, Component, LocalFrame,
};
use crate::error::{QotError, Result};
use crate::linalg::{
    asym_projector, eig_hermitian_unchecked, sym_projector, BipartiteOperator, ComplexSquareMatrix, DensityMatrix,
    Subsystem,
};
use crate::sdp::{self, SdpProblem, SdpSolution, SolverConfig};

/// Optimal pair `(X_AB, Y_AB)` of the revised cost with its dual certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingWitness {
    pub value: f64,
    pub gap: f64,
    pub x_ab: BipartiteOperator,
    pub y_ab: BipartiteOperator,
    #[serde(rename = "h1")]
    pub dual_h1: ComplexSquareMatrix,
    #[serde(rename = "h2")]
    pub dual_h2: ComplexSquareMatrix,
}

impl CouplingWitness {
    /// `tr(X P_s + Y P_a)`.
    pub fn objective(&self) -> f64 {
        revised_objective(&self.x_ab, &self.y_ab)
    }

    /// `tr_B(X + Y)`
    pub fn marginal_a(&self) -> ComplexSquareMatrix {
        self.x_ab.add(&self.y_ab).partial_trace(Subsystem::B)
    }

    /// `tr_A(X + Y)`
    pub fn marginal_b(&self) -> ComplexSquareMatrix {
        self.x_ab.add(&self.y_ab).partial_trace(Subsystem::A)
    }
}

/// Value of the revised-cost objective for a candidate pair.
pub fn revised_objective(x_ab: &BipartiteOperator, y_ab: &BipartiteOperator) -> f64 {
    let d = x_ab.local_dim();
    sym_projector(d).matrix().trace_product(x_ab.matrix()).re
        + asym_projector(d).matrix().trace_product(y_ab.matrix()).re
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportCost {
    pub value: f64,
    pub gap: f64,
    pub chi: BipartiteOperator,
}

/// A feasible point of the dual program with its objective.
#[derive(Debug, Clone, Serialize)]
pub struct DualCertificate {
    pub value: f64,
    pub h1: ComplexSquareMatrix,
    pub h2: ComplexSquareMatrix,
    /// Minimum eigenvalues of `P_s − H₁⊗I − I⊗H₂` and `P_a − H₁⊗I − I⊗H₂`.
    pub lmi_min_eigenvalues: [f64; 2],
    /// Amount subtracted from `H₁` to restore exact feasibility.
    pub shift: f64,
}

fn check_dims(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<usize> {
    if rho.dim() != sigma.dim() {
        return Err(QotError::DimensionMismatch {
            expected: rho.dim(),
            actual: sigma.dim(),
        });
    }
    Ok(rho.dim())
}

/// Both marginals equal `ρ` and `σ` within `tol`, and `χ` is a state.
pub fn is_coupling(chi: &BipartiteOperator, rho: &DensityMatrix, sigma: &DensityMatrix, tol: f64) -> bool {
    if chi.local_dim() != rho.dim() || rho.dim() != sigma.dim() {
        return false;
    }
    if !chi.matrix().is_hermitian(tol) || (chi.trace() - 1.0).abs() > tol {
        return false;
    }
    if eig_hermitian_unchecked(chi.matrix()).min_value() < -tol {
        return false;
    }
    chi.partial_trace(Subsystem::B).approx_eq(rho.matrix(), tol)
        && chi.partial_trace(Subsystem::A).approx_eq(sigma.matrix(), tol)
}

/// Coupling program restricted to `supp(ρ) ⊗ supp(σ)`.
struct Reduced {
    frame: BipartiteFrame,
    comps_a: Vec<Component>,
    comps_b: Vec<Component>,
}

impl Reduced {
    fn new(rho: &DensityMatrix, sigma: &DensityMatrix) -> Self {
        let frame = BipartiteFrame {
            a: LocalFrame::support_of(rho.matrix()),
            b: LocalFrame::support_of(sigma.matrix()),
        };
        let (ra, rb) = frame.reduced_dims();
        // the trace of the second marginal is implied by the first
        let comps_b = Component::all(rb).split_off(1);
        Self {
            frame,
            comps_a: Component::all(ra),
            comps_b,
        }
    }

    fn build(&self, rho: &DensityMatrix, sigma: &DensityMatrix, costs: &[(&str, ComplexSquareMatrix)]) -> SdpProblem {
        let dims = self.frame.reduced_dims();
        let mut problem = SdpProblem::new();
        let blocks: Vec<usize> = costs
            .iter()
            .map(|(name, c)| {
                let b = problem.add_block(*name, dims.0 * dims.1);
                problem.set_objective(b, self.frame.compress(c));
                b
            })
            .collect();
        let rho_r = self.frame.a.compress(rho.matrix());
        let sigma_r = self.frame.b.compress(sigma.matrix());
        add_marginal_constraints(&mut problem, &blocks, dims, Subsystem::A, &self.comps_a, |c| c.read(&rho_r));
        add_marginal_constraints(&mut problem, &blocks, dims, Subsystem::B, &self.comps_b, |c| c.read(&sigma_r));
        problem
    }

    fn block(&self, d: usize, sol: &SdpSolution, k: usize) -> Result<BipartiteOperator> {
        BipartiteOperator::new(d, self.frame.expand(&sol.block_values[k]))
    }

    /// Dual multipliers lifted to the full space.
    fn duals(&self, y: &[f64], costs: &[&ComplexSquareMatrix]) -> (ComplexSquareMatrix, ComplexSquareMatrix) {
        let (ra, rb) = self.frame.reduced_dims();
        let n = self.comps_a.len();
        let h1 = assemble_dual(ra, &self.comps_a, &y[..n]);
        let h2 = assemble_dual(rb, &self.comps_b, &y[n..]);
        self.frame.lift_dual(&h1, &h2, costs)
    }
}

/// `T(ρ, σ) = min tr(χ P_a)` over couplings `χ` of `(ρ, σ)`.
pub fn transport_cost(rho: &DensityMatrix, sigma: &DensityMatrix, config: &SolverConfig) -> Result<TransportCost> {
    let d = check_dims(rho, sigma)?;
    let reduced = Reduced::new(rho, sigma);
    let problem = reduced.build(rho, sigma, &[("chi", asym_projector(d).into_matrix())]);
    let sol = sdp::solve(&problem, config)?.require_optimal()?;
    let chi = reduced.block(d, &sol, 0)?;
    Ok(TransportCost {
        value: sol.primal_objective,
        gap: sol.gap,
        chi,
    })
}

struct RevisedSolve {
    reduced: Reduced,
    solution: SdpSolution,
}

fn solve_revised(rho: &DensityMatrix, sigma: &DensityMatrix, config: &SolverConfig) -> Result<RevisedSolve> {
    let d = check_dims(rho, sigma)?;
    let reduced = Reduced::new(rho, sigma);
    let problem = reduced.build(
        rho,
        sigma,
        &[("x_ab", sym_projector(d).into_matrix()), ("y_ab", asym_projector(d).into_matrix())],
    );
    let solution = sdp::solve(&problem, config)?.require_optimal()?;
    Ok(RevisedSolve { reduced, solution })
}

fn revised_duals(d: usize, run: &RevisedSolve) -> (ComplexSquareMatrix, ComplexSquareMatrix) {
    let ps = sym_projector(d).into_matrix();
    let pa = asym_projector(d).into_matrix();
    run.reduced.duals(&run.solution.dual_values, &[&ps, &pa])
}

/// Revised cost `T_s(ρ, σ)` from the primal program over PSD pairs
/// `(X_AB, Y_AB)` with `tr_B(X+Y) = ρ` and `tr_A(X+Y) = σ`.
pub fn ts_primal(rho: &DensityMatrix, sigma: &DensityMatrix, config: &SolverConfig) -> Result<CouplingWitness> {
    let d = check_dims(rho, sigma)?;
    let run = solve_revised(rho, sigma, config)?;
    let (dual_h1, dual_h2) = revised_duals(d, &run);
    let x_ab = run.reduced.block(d, &run.solution, 0)?;
    let y_ab = run.reduced.block(d, &run.solution, 1)?;
    Ok(CouplingWitness {
        value: revised_objective(&x_ab, &y_ab),
        gap: run.solution.gap,
        x_ab,
        y_ab,
        dual_h1,
        dual_h2,
    })
}

/// Minimum eigenvalues of the two dual constraints
/// `P_s − H₁⊗I − I⊗H₂` and `P_a − H₁⊗I − I⊗H₂`.
pub fn lmi_min_eigenvalues(h1: &ComplexSquareMatrix, h2: &ComplexSquareMatrix) -> [f64; 2] {
    let d = h1.dim();
    let ps = sym_projector(d).into_matrix();
    let pa = asym_projector(d).into_matrix();
    [min_lmi_eigenvalue(h1, h2, &[&ps]), min_lmi_eigenvalue(h1, h2, &[&pa])]
}

/// Dual value `sup tr(ρH₁ + σH₂)` subject to both linear matrix inequalities.
///
/// The multipliers come from the interior-point dual iterate. Both LMIs are
/// checked by eigenvalues; any residual violation is removed by shifting
/// `H₁ → H₁ − εI`, which lowers the value by exactly `ε`, so the returned
/// value is always a certified lower bound.
pub fn ts_dual(rho: &DensityMatrix, sigma: &DensityMatrix, config: &SolverConfig) -> Result<DualCertificate> {
    let d = check_dims(rho, sigma)?;
    let run = solve_revised(rho, sigma, config)?;
    let (h1, h2) = revised_duals(d, &run);
    Ok(certify_dual(rho, sigma, h1, h2))
}

/// Makes `(h1, h2)` dual feasible if needed and evaluates the dual objective.
pub fn certify_dual(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    h1: ComplexSquareMatrix,
    h2: ComplexSquareMatrix,
) -> DualCertificate {
    let d = h1.dim();
    let raw = lmi_min_eigenvalues(&h1, &h2);
    let violation = (-raw[0].min(raw[1])).max(0.0);
    let shift = if violation > 0.0 { violation * (1.0 + 1e-9) + 1e-15 } else { 0.0 };
    let h1 = &h1 - &ComplexSquareMatrix::identity(d).scale(shift);
    let lmi = lmi_min_eigenvalues(&h1, &h2);
    let value = rho.matrix().trace_product(&h1).re + sigma.matrix().trace_product(&h2).re;
    DualCertificate {
        value,
        h1,
        h2,
        lmi_min_eigenvalues: lmi,
        shift,
    }
}

/// `T(ρ ⊗ I₂/2, σ ⊗ I₂/2)`, which coincides with `T_s(ρ, σ)`.
pub fn ts_via_ancilla(rho: &DensityMatrix, sigma: &DensityMatrix, config: &SolverConfig) -> Result<f64> {
    check_dims(rho, sigma)?;
    let ancilla = DensityMatrix::maximally_mixed(2);
    let lifted_rho = rho.tensor(&ancilla);
    let lifted_sigma = sigma.tensor(&ancilla);
    Ok(transport_cost(&lifted_rho, &lifted_sigma, config)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{PureState, C64};
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn plus() -> DensityMatrix {
        PureState::maximally_coherent(2).density()
    }

    fn ket(d: usize, i: usize) -> DensityMatrix {
        PureState::basis(d, i).density()
    }

    /// `Σ pᵢ |eᵢeᵢ⟩⟨eᵢeᵢ|` for the eigen-decomposition `ρ = Σ pᵢ|eᵢ⟩⟨eᵢ|`.
    fn diagonal_coupling(rho: &DensityMatrix) -> BipartiteOperator {
        let eig = rho.eigen();
        let d = rho.dim();
        let mut acc = ComplexSquareMatrix::zeros(d * d);
        for (k, p) in eig.values.iter().enumerate() {
            let e = eig.vector(k);
            let ee: Vec<C64> = (0..d * d).map(|r| e[r / d] * e[r % d]).collect();
            acc = &acc + &ComplexSquareMatrix::outer(&ee, &ee).scale(*p);
        }
        BipartiteOperator::new(d, acc).unwrap()
    }

    #[test]
    fn coupling_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random::random_density(3, &mut rng);
        let sigma = random::random_density(3, &mut rng);
        let prod = BipartiteOperator::product(rho.matrix(), sigma.matrix()).unwrap();
        assert!(is_coupling(&prod, &rho, &sigma, 1e-10));

        let half = DensityMatrix::maximally_mixed(2);
        let s = 1.0 / 2f64.sqrt();
        let bell: Vec<C64> = [s, 0.0, 0.0, s].iter().map(|&v| C64::new(v, 0.0)).collect();
        let phi = BipartiteOperator::new(2, ComplexSquareMatrix::outer(&bell, &bell)).unwrap();
        assert!(is_coupling(&phi, &half, &half, 1e-10));

        let zero_zero = BipartiteOperator::new(2, PureState::basis(4, 0).projector()).unwrap();
        assert!(!is_coupling(&zero_zero, &half, &half, 1e-10));
    }

    #[test]
    fn zero_cost_diagonal_coupling_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random::random_density(3, &mut rng);
        let chi = diagonal_coupling(&rho);
        assert!(is_coupling(&chi, &rho, &rho, 1e-10));
        assert!(asym_projector(3).matrix().trace_product(chi.matrix()).re.abs() < 1e-12);
    }

    #[test]
    fn transport_cost_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random::random_density(3, &mut rng);
        let t = transport_cost(&rho, &rho, &cfg()).unwrap();
        assert!(t.value.abs() < 1e-7, "T(ρ,ρ) = {}", t.value);
        assert!(is_coupling(&t.chi, &rho, &rho, 1e-7));

        // the only coupling of two pure states is their product
        let t = transport_cost(&ket(2, 0), &ket(2, 1), &cfg()).unwrap();
        assert!((t.value - 0.5).abs() < 1e-7);
        let t = transport_cost(&ket(2, 0), &ket(2, 0), &cfg()).unwrap();
        assert!(t.value.abs() < 1e-7);
    }

    #[test]
    fn transport_cost_rejects_mismatched_dims() {
        assert!(matches!(
            transport_cost(&ket(2, 0), &ket(3, 0), &cfg()),
            Err(QotError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn revised_cost_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random::random_density(3, &mut rng);
        let w = ts_primal(&rho, &rho, &cfg()).unwrap();
        assert!(w.value.abs() < 1e-7);

        let w = ts_primal(&plus(), &ket(2, 0), &cfg()).unwrap();
        assert!((w.value - 0.25).abs() < 1e-7, "T_s(+,0) = {}", w.value);
        assert!(w.marginal_a().approx_eq(plus().matrix(), 1e-7));
        assert!(w.marginal_b().approx_eq(ket(2, 0).matrix(), 1e-7));
        assert!((w.objective() - w.value).abs() < 1e-12);
    }

    /// Brute force over the only feasible shape when the first marginal is
    /// pure and the second is `|0⟩⟨0|`: `X = |φ⟩⟨φ|⊗s|0⟩⟨0|`,
    /// `Y = |φ⟩⟨φ|⊗(1−s)|0⟩⟨0|` for `s ∈ [0, 1]`.
    #[test]
    fn revised_cost_plus_zero_matches_grid_search() {
        let phi = PureState::maximally_coherent(2);
        let p0 = ket(2, 0).into_matrix();
        let steps = 200;
        let best = (0..=steps)
            .map(|t| {
                let s = t as f64 / steps as f64;
                let x = BipartiteOperator::product(&phi.projector(), &p0.scale(s)).unwrap();
                let y = BipartiteOperator::product(&phi.projector(), &p0.scale(1.0 - s)).unwrap();
                revised_objective(&x, &y)
            })
            .fold(f64::INFINITY, f64::min);
        let w = ts_primal(&plus(), &ket(2, 0), &cfg()).unwrap();
        assert!((best - 0.25).abs() < 1e-12);
        assert!((w.value - best).abs() < 1e-7);
    }

    #[test]
    fn dual_examples() {
        // H₁ = H₂ = −I is strictly feasible with margin 2
        for d in 2..=5 {
            let minus = ComplexSquareMatrix::identity(d).scale(-1.0);
            let lmi = lmi_min_eigenvalues(&minus, &minus);
            assert!((lmi[0] - 2.0).abs() < 1e-12 && (lmi[1] - 2.0).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random::random_density(3, &mut rng);
        let dual = ts_dual(&rho, &rho, &cfg()).unwrap();
        assert!(dual.value.abs() < 1e-7);
        assert!(dual.lmi_min_eigenvalues.iter().all(|&v| v >= -1e-12));

        let dual = ts_dual(&plus(), &ket(2, 0), &cfg()).unwrap();
        assert!((dual.value - 0.25).abs() < 1e-7);
    }

    #[test]
    fn dual_shift_repairs_infeasible_multipliers() {
        let rho = DensityMatrix::maximally_mixed(2);
        let zero = ComplexSquareMatrix::zeros(2);
        let big = ComplexSquareMatrix::identity(2).scale(0.3);
        let cert = certify_dual(&rho, &rho, big, zero);
        assert!(cert.shift > 0.3 - 1e-12);
        assert!(cert.lmi_min_eigenvalues.iter().all(|&v| v >= 0.0));
        assert!(cert.value <= 1e-9);
    }

    #[test]
    fn ancilla_form_matches_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random::random_density(2, &mut rng);
        assert!(ts_via_ancilla(&rho, &rho, &cfg()).unwrap().abs() < 1e-7);
        let v = ts_via_ancilla(&plus(), &ket(2, 0), &cfg()).unwrap();
        assert!((v - 0.25).abs() < 1e-6);
        let a = ts_via_ancilla(&ket(2, 0), &ket(2, 1), &cfg()).unwrap();
        let p = ts_primal(&ket(2, 0), &ket(2, 1), &cfg()).unwrap().value;
        assert!((a - p).abs() < 1e-6);
    }

    #[test]
    fn revised_cost_never_exceeds_transport_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 2..=3 {
            let rho = random::random_density(d, &mut rng);
            let sigma = random::random_density(d, &mut rng);
            let t = transport_cost(&rho, &sigma, &cfg()).unwrap().value;
            let ts = ts_primal(&rho, &sigma, &cfg()).unwrap().value;
            assert!(ts <= t + 1e-7);
            assert!((-1e-8..=0.5 + 1e-8).contains(&t));
        }
    }
}
