//! Shared machinery for the coupling programs: marginal constraints in a
//! Hermitian component basis, and restriction of the bipartite variables to
//! the support of rank-deficient marginals.
//!
//! A PSD `X` with `tr_B X ⪯ ρ` lives on `supp(ρ) ⊗ C^d`, so nothing is lost
//! by optimizing over `W X' W†` with `W = V_A ⊗ V_B` built from support
//! isometries. Without the restriction a pure marginal leaves the primal
//! with no interior point and the dual optimal set unbounded, which stalls
//! interior-point convergence.

use nalgebra::DMatrix;

use crate::linalg::{eig_hermitian_unchecked, kron, ComplexSquareMatrix, Subsystem, C64};
use crate::sdp::SdpProblem;

/// Relative eigenvalue cutoff defining the support of a marginal.
pub(crate) const SUPPORT_TOL: f64 = 1e-10;

/// Margin subtracted from a reduced dual before lifting it to the full space.
const LIFT_MARGIN: f64 = 1e-9;

/// Hermitian basis element `B` of `d × d` matrices; `tr(B M)` reads off
/// `M_ii`, `Re M_ij` or `Im M_ij` (i < j).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Component {
    Diagonal(usize),
    Real(usize, usize),
    Imag(usize, usize),
}

impl Component {
    pub(crate) fn all(d: usize) -> Vec<Component> {
        let mut out: Vec<Component> = (0..d).map(Component::Diagonal).collect();
        out.extend(Self::off_diagonal(d));
        out
    }

    pub(crate) fn off_diagonal(d: usize) -> Vec<Component> {
        let mut out = Vec::with_capacity(d * d.saturating_sub(1));
        for i in 0..d {
            for j in (i + 1)..d {
                out.push(Component::Real(i, j));
                out.push(Component::Imag(i, j));
            }
        }
        out
    }

    pub(crate) fn matrix(self, d: usize) -> ComplexSquareMatrix {
        let mut m = ComplexSquareMatrix::zeros(d).into_nalgebra();
        match self {
            Component::Diagonal(i) => m[(i, i)] = C64::new(1.0, 0.0),
            Component::Real(i, j) => {
                m[(i, j)] = C64::new(0.5, 0.0);
                m[(j, i)] = C64::new(0.5, 0.0);
            }
            Component::Imag(i, j) => {
                m[(i, j)] = C64::new(0.0, 0.5);
                m[(j, i)] = C64::new(0.0, -0.5);
            }
        }
        ComplexSquareMatrix::from_nalgebra(m)
    }

    pub(crate) fn read(self, m: &ComplexSquareMatrix) -> f64 {
        match self {
            Component::Diagonal(i) => m[(i, i)].re,
            Component::Real(i, j) => m[(i, j)].re,
            Component::Imag(i, j) => m[(i, j)].im,
        }
    }
}

/// Adds one constraint per component fixing the `side` marginal of
/// `Σ blocks`, where each block acts on `C^{dims.0} ⊗ C^{dims.1}`.
pub(crate) fn add_marginal_constraints(
    problem: &mut SdpProblem,
    blocks: &[usize],
    dims: (usize, usize),
    side: Subsystem,
    components: &[Component],
    target: impl Fn(Component) -> f64,
) {
    for &comp in components {
        let lifted = match side {
            Subsystem::A => kron(&comp.matrix(dims.0), &ComplexSquareMatrix::identity(dims.1)),
            Subsystem::B => kron(&ComplexSquareMatrix::identity(dims.0), &comp.matrix(dims.1)),
        };
        let terms = blocks.iter().map(|&b| (b, lifted.clone())).collect();
        problem.add_constraint(terms, target(comp));
    }
}

/// `Σ_k y_k B_k`.
pub(crate) fn assemble_dual(d: usize, components: &[Component], y: &[f64]) -> ComplexSquareMatrix {
    let mut acc = ComplexSquareMatrix::zeros(d);
    for (comp, &v) in components.iter().zip(y) {
        acc = &acc + &comp.matrix(d).scale(v);
    }
    acc
}

/// Orthonormal basis of the support of `m` as columns, or `None` when `m`
/// has full numerical rank.
pub(crate) fn support_isometry(m: &ComplexSquareMatrix) -> Option<DMatrix<C64>> {
    let eig = eig_hermitian_unchecked(m);
    let cutoff = SUPPORT_TOL * eig.max_value().max(0.0);
    let rank = eig.values.iter().filter(|&&v| v > cutoff).count().max(1);
    if rank == m.dim() {
        return None;
    }
    let v = eig.vectors.as_nalgebra();
    Some(v.columns(0, rank).into_owned())
}

/// One local factor of the reduced bipartite space.
#[derive(Debug, Clone)]
pub(crate) struct LocalFrame {
    dim: usize,
    isometry: Option<DMatrix<C64>>,
}

impl LocalFrame {
    pub(crate) fn full(dim: usize) -> Self {
        Self { dim, isometry: None }
    }

    pub(crate) fn support_of(m: &ComplexSquareMatrix) -> Self {
        Self {
            dim: m.dim(),
            isometry: support_isometry(m),
        }
    }

    pub(crate) fn reduced_dim(&self) -> usize {
        self.isometry.as_ref().map_or(self.dim, |v| v.ncols())
    }

    fn matrix(&self) -> DMatrix<C64> {
        self.isometry.clone().unwrap_or_else(|| DMatrix::identity(self.dim, self.dim))
    }

    /// `V† m V`.
    pub(crate) fn compress(&self, m: &ComplexSquareMatrix) -> ComplexSquareMatrix {
        match &self.isometry {
            None => m.clone(),
            Some(v) => ComplexSquareMatrix::from_nalgebra(v.adjoint() * m.as_nalgebra() * v),
        }
    }

    /// `V m V†`.
    pub(crate) fn expand(&self, m: &ComplexSquareMatrix) -> ComplexSquareMatrix {
        match &self.isometry {
            None => m.clone(),
            Some(v) => ComplexSquareMatrix::from_nalgebra(v * m.as_nalgebra() * v.adjoint()),
        }
    }

    /// `I − V V†`, zero for a full frame.
    fn complement(&self) -> ComplexSquareMatrix {
        match &self.isometry {
            None => ComplexSquareMatrix::zeros(self.dim),
            Some(v) => {
                let p = v * v.adjoint();
                ComplexSquareMatrix::from_nalgebra(DMatrix::identity(self.dim, self.dim) - p)
            }
        }
    }

    fn is_full(&self) -> bool {
        self.isometry.is_none()
    }
}

/// `W = V_A ⊗ V_B`.
#[derive(Debug, Clone)]
pub(crate) struct BipartiteFrame {
    pub(crate) a: LocalFrame,
    pub(crate) b: LocalFrame,
}

impl BipartiteFrame {
    pub(crate) fn reduced_dims(&self) -> (usize, usize) {
        (self.a.reduced_dim(), self.b.reduced_dim())
    }

    fn w(&self) -> DMatrix<C64> {
        self.a.matrix().kronecker(&self.b.matrix())
    }

    /// `W† m W`.
    pub(crate) fn compress(&self, m: &ComplexSquareMatrix) -> ComplexSquareMatrix {
        if self.a.is_full() && self.b.is_full() {
            return m.clone();
        }
        let w = self.w();
        ComplexSquareMatrix::from_nalgebra(w.adjoint() * m.as_nalgebra() * &w)
    }

    /// `W m W†`.
    pub(crate) fn expand(&self, m: &ComplexSquareMatrix) -> ComplexSquareMatrix {
        if self.a.is_full() && self.b.is_full() {
            return m.clone();
        }
        let w = self.w();
        ComplexSquareMatrix::from_nalgebra(&w * m.as_nalgebra() * w.adjoint())
    }

    /// Lifts reduced dual multipliers to the full space so that every
    /// `C − H₁⊗I − I⊗H₂` (for `C` in `costs`) stays PSD off the support.
    ///
    /// `H = V H' V† − t(I − V V†)`; the reduced part is first pulled down by
    /// a small margin so that a finite `t` suffices.
    pub(crate) fn lift_dual(
        &self,
        h1: &ComplexSquareMatrix,
        h2: &ComplexSquareMatrix,
        costs: &[&ComplexSquareMatrix],
    ) -> (ComplexSquareMatrix, ComplexSquareMatrix) {
        if self.a.is_full() && self.b.is_full() {
            return (h1.clone(), h2.clone());
        }
        let margin = |frame: &LocalFrame, h: &ComplexSquareMatrix| {
            if frame.is_full() {
                frame.expand(h)
            } else {
                let shifted = h - &ComplexSquareMatrix::identity(h.dim()).scale(LIFT_MARGIN);
                frame.expand(&shifted)
            }
        };
        let base1 = margin(&self.a, h1);
        let base2 = margin(&self.b, h2);
        let (qa, qb) = (self.a.complement(), self.b.complement());
        let candidate = |t: f64| (&base1 - &qa.scale(t), &base2 - &qb.scale(t));
        let mut best = candidate(1.0);
        let mut best_eig = f64::NEG_INFINITY;
        for k in 0..=12 {
            let t = 10f64.powi(k);
            let (g1, g2) = candidate(t);
            let e = min_lmi_eigenvalue(&g1, &g2, costs);
            if e > best_eig {
                best_eig = e;
                best = (g1, g2);
            }
            if e >= 0.0 {
                break;
            }
        }
        best
    }
}

/// `min_C λ_min(C − H₁⊗I − I⊗H₂)`.
pub(crate) fn min_lmi_eigenvalue(
    h1: &ComplexSquareMatrix,
    h2: &ComplexSquareMatrix,
    costs: &[&ComplexSquareMatrix],
) -> f64 {
    let shift = &kron(h1, &ComplexSquareMatrix::identity(h2.dim())) + &kron(&ComplexSquareMatrix::identity(h1.dim()), h2);
    costs
        .iter()
        .map(|c| eig_hermitian_unchecked(&(*c - &shift)).min_value())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{BipartiteOperator, PureState};
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn components_read_what_their_trace_reads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random::random_hermitian(4, &mut rng);
        for comp in Component::all(4) {
            let via_trace = comp.matrix(4).trace_product(&m);
            assert!((via_trace.re - comp.read(&m)).abs() < 1e-14);
            assert!(via_trace.im.abs() < 1e-14);
        }
        assert_eq!(Component::all(4).len(), 16);
        assert_eq!(Component::off_diagonal(4).len(), 12);
    }

    #[test]
    fn support_of_full_and_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(support_isometry(random::random_density(3, &mut rng).matrix()).is_none());
        let psi = random::random_pure_state(3, &mut rng);
        let v = support_isometry(&psi.projector()).unwrap();
        assert_eq!(v.ncols(), 1);
        let overlap: C64 = v.column(0).iter().zip(psi.amplitudes()).map(|(a, b)| a.conj() * b).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_round_trip_on_supported_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random::random_density_with_rank(3, 2, &mut rng);
        let sigma = PureState::basis(3, 1).projector();
        let frame = BipartiteFrame {
            a: LocalFrame::support_of(rho.matrix()),
            b: LocalFrame::support_of(&sigma),
        };
        assert_eq!(frame.reduced_dims(), (2, 1));
        let op = BipartiteOperator::product(rho.matrix(), &sigma).unwrap();
        let back = frame.expand(&frame.compress(op.matrix()));
        assert!(back.approx_eq(op.matrix(), 1e-12));
    }
}
