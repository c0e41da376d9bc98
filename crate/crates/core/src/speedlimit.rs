//! Evolution time to the nearest incoherent state under the fastest
//! time-independent Hamiltonian, with `ħ = 1`.
//!
//! For a target `|φ⟩` with `⟨φ|ψ⟩ = c ≥ 0`, the Hamiltonian
//! `H′ = −iω(|ψ⟩⟨ψ̄| − |ψ̄⟩⟨ψ|)` rotates `|ψ⟩` into `cos(ωt)|ψ⟩ + sin(ωt)|ψ̄⟩`
//! and reaches `|φ⟩` at `ωt = arccos c`, saturating the Mandelstam–Tamm bound.

use serde::Serialize;

use crate::error::{QotError, Result};
use crate::linalg::{eig_hermitian_unchecked, ComplexSquareMatrix, PureState, C64};

/// Below this `1 − |⟨φ|ψ⟩|²` the two states are treated as identical.
const IDENTICAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionSpec {
    pub omega: f64,
    pub hbar: f64,
    pub hamiltonian: ComplexSquareMatrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedLimitReport {
    pub tau: f64,
    #[serde(skip)]
    pub target: PureState,
    pub target_index: usize,
    pub fidelity_at_tau: f64,
    #[serde(skip)]
    pub bound_rhs: f64,
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(QotError::OutOfRange {
            name: "omega",
            value: omega,
            expected: "finite and > 0",
        })
    }
}

/// `arccos(|⟨φ₁|φ₂⟩|)/ΔH`.
pub fn mt_bound(phi1: &PureState, phi2: &PureState, energy_spread: f64) -> Result<f64> {
    if !(energy_spread > 0.0 && energy_spread.is_finite()) {
        return Err(QotError::OutOfRange {
            name: "energy spread",
            value: energy_spread,
            expected: "finite and > 0",
        });
    }
    if phi1.dim() != phi2.dim() {
        return Err(QotError::DimensionMismatch {
            expected: phi1.dim(),
            actual: phi2.dim(),
        });
    }
    Ok(phi1.inner(phi2).norm().min(1.0).acos() / energy_spread)
}

/// `√(⟨ψ|H²|ψ⟩ − ⟨ψ|H|ψ⟩²)`.
pub fn energy_spread(psi: &PureState, hamiltonian: &ComplexSquareMatrix) -> f64 {
    let h_psi = hamiltonian.mul_vec(psi.amplitudes());
    let mean: f64 = psi.amplitudes().iter().zip(&h_psi).map(|(a, b)| (a.conj() * b).re).sum();
    let second: f64 = h_psi.iter().map(|z| z.norm_sqr()).sum();
    (second - mean * mean).max(0.0).sqrt()
}

/// `H′ = −iω(|ψ⟩⟨ψ̄| − |ψ̄⟩⟨ψ|)` after rephasing `ψ` so that `⟨φ|ψ⟩ ≥ 0`.
pub fn optimal_hamiltonian(psi: &PureState, phi: &PureState, omega: f64) -> Result<EvolutionSpec> {
    check_omega(omega)?;
    if psi.dim() != phi.dim() {
        return Err(QotError::DimensionMismatch {
            expected: psi.dim(),
            actual: phi.dim(),
        });
    }
    let c = phi.inner(psi);
    let overlap = c.norm();
    let residual = 1.0 - overlap * overlap;
    if residual < IDENTICAL_TOL {
        return Err(QotError::IdenticalStates);
    }
    let phase = if overlap > 0.0 { c.conj() / overlap } else { C64::new(1.0, 0.0) };
    let psi_r: Vec<C64> = psi.amplitudes().iter().map(|z| z * phase).collect();
    let norm = residual.sqrt();
    let psi_bar: Vec<C64> = phi
        .amplitudes()
        .iter()
        .zip(&psi_r)
        .map(|(f, p)| (f - p * overlap) / norm)
        .collect();
    let a = ComplexSquareMatrix::outer(&psi_r, &psi_bar);
    let hamiltonian = (&a - &a.adjoint()).scale_complex(C64::new(0.0, -omega));
    Ok(EvolutionSpec {
        omega,
        hbar: 1.0,
        hamiltonian,
    })
}

/// `exp(−iHt)|ψ⟩` through the eigendecomposition of `H`.
pub fn evolve(psi: &PureState, spec: &EvolutionSpec, t: f64) -> Result<PureState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(QotError::OutOfRange {
            name: "t",
            value: t,
            expected: "finite and >= 0",
        });
    }
    if psi.dim() != spec.hamiltonian.dim() {
        return Err(QotError::DimensionMismatch {
            expected: spec.hamiltonian.dim(),
            actual: psi.dim(),
        });
    }
    let eig = eig_hermitian_unchecked(&spec.hamiltonian);
    let v = eig.vectors.as_nalgebra();
    let amps = nalgebra::DVector::from_column_slice(psi.amplitudes());
    let mut coeffs = v.adjoint() * amps;
    for (k, z) in coeffs.iter_mut().enumerate() {
        *z *= C64::from_polar(1.0, -eig.values[k] * t / spec.hbar);
    }
    Ok(PureState::from_trusted((v * coeffs).iter().copied().collect()))
}

/// Time to reach the most populated basis state `|i*⟩` under `H′`, with
/// `τ = arcsin(√(1 − |λ_{i*}|²))/ω`.
pub fn tau_to_incoherent(psi: &PureState, omega: f64) -> Result<SpeedLimitReport> {
    check_omega(omega)?;
    let (index, population) = psi.max_population();
    let target = PureState::basis(psi.dim(), index);
    let tau = (1.0 - population).max(0.0).sqrt().asin() / omega;
    if 1.0 - population < IDENTICAL_TOL {
        return Ok(SpeedLimitReport {
            tau,
            target,
            target_index: index,
            fidelity_at_tau: population.sqrt(),
            bound_rhs: 0.0,
        });
    }
    let spec = optimal_hamiltonian(psi, &target, omega)?;
    let evolved = evolve(psi, &spec, tau)?;
    let fidelity_at_tau = evolved.amplitudes()[index].norm();
    let bound_rhs = mt_bound(psi, &target, energy_spread(psi, &spec.hamiltonian))?;
    Ok(SpeedLimitReport {
        tau,
        target,
        target_index: index,
        fidelity_at_tau,
        bound_rhs,
    })
}

/// `arcsin(√(2T))/ω` for a pure-state coherence value `T ∈ [0, 1/2]`.
pub fn tau_from_coherence(t_value: f64, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    if !(0.0..=0.5).contains(&t_value) {
        return Err(QotError::OutOfRange {
            name: "coherence value",
            value: t_value,
            expected: "in [0, 1/2]",
        });
    }
    Ok((2.0 * t_value).sqrt().asin() / omega)
}
