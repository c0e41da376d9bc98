//! Dense complex linear algebra for operators on a `d`-dimensional space and
//! on the bipartite space `C^d ⊗ C^d`.
//!
//! Bipartite index convention: the composite index `i * d + j` addresses
//! `|i⟩_A ⊗ |j⟩_B`. Every partial trace, SWAP and product in this crate uses it.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QotError, Result};

pub type C64 = Complex64;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;
pub const NORM_TOL: f64 = 1e-10;
pub const RANK_TOL: f64 = 1e-8;

/// Validation tolerances for [`DensityMatrix`] construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermitian: f64,
    pub psd: f64,
    pub trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: HERMITIAN_TOL,
            psd: PSD_TOL,
            trace: TRACE_TOL,
        }
    }
}

impl Tolerances {
    /// All three tolerances set to the same value.
    pub fn uniform(tol: f64) -> Self {
        Self {
            hermitian: tol,
            psd: tol,
            trace: tol,
        }
    }
}

/// A dense `dim × dim` complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexSquareMatrix {
    inner: DMatrix<C64>,
}

impl fmt::Debug for ComplexSquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexSquareMatrix({}x{})", self.dim(), self.dim())?;
        if self.dim() <= 4 {
            write!(f, " {:?}", self.row_major_entries())?;
        }
        Ok(())
    }
}

impl ComplexSquareMatrix {
    pub fn from_row_major(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(QotError::InvalidDimension(dim));
        }
        if entries.len() != dim * dim {
            return Err(QotError::EntryCount {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QotError::NonFinite("entries"));
        }
        Ok(Self {
            inner: DMatrix::from_row_slice(dim, dim, &entries),
        })
    }

    /// Wraps a square nalgebra matrix.
    ///
    /// Panics if `m` is not square.
    pub fn from_nalgebra(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        Self { inner: m }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            inner: DMatrix::from_fn(dim, dim, |i, j| f(i, j)),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `|a⟩⟨b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_nalgebra(self) -> DMatrix<C64> {
        self.inner
    }

    pub fn row_major_entries(&self) -> Vec<C64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    pub fn real_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            inner: self.inner.map(|z| z * s),
        }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self {
            inner: self.inner.map(|z| z * s),
        }
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.dim(), other.dim());
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.inner[(i, j)] * other.inner[(j, i)];
            }
        }
        acc
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim());
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.inner[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        Self {
            inner: &u.inner * &self.inner * u.inner.adjoint(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Elementwise comparison with an explicit tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim() == other.dim() && self.max_abs_diff(other) <= tol
    }

    /// `max_ij |m_ij − conj(m_ji)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.inner[(i, j)] - self.inner[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    /// `(m + m†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self {
            inner: (&self.inner + self.inner.adjoint()) * C64::new(0.5, 0.0),
        }
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.inner[(i, j)].norm());
                }
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for ComplexSquareMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.inner[idx]
    }
}

impl<'a> Add<&'a ComplexSquareMatrix> for &'a ComplexSquareMatrix {
    type Output = ComplexSquareMatrix;

    fn add(self, rhs: &'a ComplexSquareMatrix) -> ComplexSquareMatrix {
        ComplexSquareMatrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl<'a> Sub<&'a ComplexSquareMatrix> for &'a ComplexSquareMatrix {
    type Output = ComplexSquareMatrix;

    fn sub(self, rhs: &'a ComplexSquareMatrix) -> ComplexSquareMatrix {
        ComplexSquareMatrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

impl<'a> Mul<&'a ComplexSquareMatrix> for &'a ComplexSquareMatrix {
    type Output = ComplexSquareMatrix;

    fn mul(self, rhs: &'a ComplexSquareMatrix) -> ComplexSquareMatrix {
        ComplexSquareMatrix {
            inner: &self.inner * &rhs.inner,
        }
    }
}

/// Kronecker product: `(a ⊗ b)[(i·db + k), (j·db + l)] = a[i,j] · b[k,l]`.
pub fn kron(a: &ComplexSquareMatrix, b: &ComplexSquareMatrix) -> ComplexSquareMatrix {
    let db = b.dim();
    ComplexSquareMatrix::from_fn(a.dim() * db, |r, c| {
        a.inner[(r / db, c / db)] * b.inner[(r % db, c % db)]
    })
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: ComplexSquareMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.inner.column(k).iter().copied().collect()
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    /// `V Λ V†`.
    pub fn reconstruct(&self) -> ComplexSquareMatrix {
        let lambda = ComplexSquareMatrix::from_real_diagonal(&self.values);
        lambda.conjugate_by(&self.vectors)
    }
}

pub fn eig_hermitian(m: &ComplexSquareMatrix) -> Result<HermitianEigen> {
    eig_hermitian_with_tol(m, HERMITIAN_TOL)
}

/// Rejects inputs whose asymmetry exceeds `tol`; the Hermitian part is
/// decomposed otherwise.
pub fn eig_hermitian_with_tol(m: &ComplexSquareMatrix, tol: f64) -> Result<HermitianEigen> {
    let max_asymmetry = m.max_asymmetry();
    if max_asymmetry > tol {
        return Err(QotError::NotHermitian { max_asymmetry });
    }
    Ok(eig_hermitian_unchecked(m))
}

pub(crate) fn eig_hermitian_unchecked(m: &ComplexSquareMatrix) -> HermitianEigen {
    let n = m.dim();
    let eig = m.hermitian_part().inner.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexSquareMatrix::from_fn(n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEigen { values, vectors }
}

/// Count of eigenvalues above `tol · λ_max`.
pub fn numerical_rank(m: &ComplexSquareMatrix, tol: f64) -> Result<usize> {
    let eig = eig_hermitian_with_tol(m, HERMITIAN_TOL.max(tol))?;
    Ok(rank_from_spectrum(&eig.values, tol))
}

fn rank_from_spectrum(values: &[f64], tol: f64) -> usize {
    let top = values[0];
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > tol * top).count()
}

/// A unit-trace positive semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexSquareMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexSquareMatrix) -> Result<Self> {
        Self::with_tolerances(matrix, Tolerances::default())
    }

    pub fn with_tolerances(matrix: ComplexSquareMatrix, tol: Tolerances) -> Result<Self> {
        let max_asymmetry = matrix.max_asymmetry();
        if max_asymmetry > tol.hermitian {
            return Err(QotError::NotHermitian { max_asymmetry });
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > tol.trace || trace.im.abs() > tol.trace {
            return Err(QotError::TraceNotOne { trace: trace.re });
        }
        let min_eigenvalue = eig_hermitian_unchecked(&matrix).min_value();
        if min_eigenvalue < -tol.psd {
            return Err(QotError::NotPositive { min_eigenvalue });
        }
        Ok(Self { matrix })
    }

    /// Diagonal (incoherent) state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        Self::new(ComplexSquareMatrix::from_real_diagonal(populations))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: ComplexSquareMatrix::identity(d).scale(1.0 / d as f64),
        }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self {
            matrix: psi.projector(),
        }
    }

    /// Convex combination `Σ wᵢ ρᵢ`. Weights must be a probability vector.
    pub fn mixture(weights: &[f64], states: &[DensityMatrix]) -> Result<Self> {
        assert_eq!(weights.len(), states.len());
        let d = states[0].dim();
        let mut acc = ComplexSquareMatrix::zeros(d);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != d {
                return Err(QotError::DimensionMismatch {
                    expected: d,
                    actual: s.dim(),
                });
            }
            acc = &acc + &s.matrix.scale(*w);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexSquareMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexSquareMatrix {
        self.matrix
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.real_diagonal()
    }

    pub fn max_off_diagonal(&self) -> f64 {
        self.matrix.max_off_diagonal()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.max_off_diagonal() <= tol
    }

    pub fn eigen(&self) -> HermitianEigen {
        eig_hermitian_unchecked(&self.matrix)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            matrix: kron(&self.matrix, &other.matrix),
        }
    }

    /// `U ρ U†` for a unitary `U`.
    pub fn unitary_conjugate(&self, u: &ComplexSquareMatrix) -> DensityMatrix {
        DensityMatrix {
            matrix: self.matrix.conjugate_by(u).hermitian_part(),
        }
    }

    /// Builds from a matrix already known to be a state, re-symmetrizing it.
    pub(crate) fn from_trusted(matrix: ComplexSquareMatrix) -> Self {
        Self {
            matrix: matrix.hermitian_part(),
        }
    }
}

/// A normalized state vector `Σ λᵢ |i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(QotError::InvalidDimension(0));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QotError::NonFinite("amplitudes"));
        }
        let norm_sq: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(QotError::NotNormalized { norm_sq });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(QotError::NotNormalized {
                norm_sq: norm * norm,
            });
        }
        Self::new(amplitudes.into_iter().map(|z| z / norm).collect())
    }

    pub fn basis(d: usize, index: usize) -> Self {
        assert!(index < d);
        let mut amplitudes = vec![C64::new(0.0, 0.0); d];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    /// `(|0⟩ + … + |d−1⟩)/√d`.
    pub fn maximally_coherent(d: usize) -> Self {
        let a = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        Self {
            amplitudes: vec![a; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Largest population `|λᵢ|²` and its index; ties go to the lowest index.
    pub fn max_population(&self) -> (usize, f64) {
        let mut best = (0, self.amplitudes[0].norm_sqr());
        for (i, z) in self.amplitudes.iter().enumerate().skip(1) {
            let p = z.norm_sqr();
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        assert_eq!(self.dim(), other.dim());
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn projector(&self) -> ComplexSquareMatrix {
        ComplexSquareMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub(crate) fn from_trusted(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// An operator on `C^d ⊗ C^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteOperator {
    local_dim: usize,
    matrix: ComplexSquareMatrix,
}

impl BipartiteOperator {
    pub fn new(local_dim: usize, matrix: ComplexSquareMatrix) -> Result<Self> {
        if local_dim == 0 {
            return Err(QotError::InvalidDimension(0));
        }
        if matrix.dim() != local_dim * local_dim {
            return Err(QotError::DimensionMismatch {
                expected: local_dim * local_dim,
                actual: matrix.dim(),
            });
        }
        Ok(Self { local_dim, matrix })
    }

    pub fn product(a: &ComplexSquareMatrix, b: &ComplexSquareMatrix) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(QotError::DimensionMismatch {
                expected: a.dim(),
                actual: b.dim(),
            });
        }
        Self::new(a.dim(), kron(a, b))
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn matrix(&self) -> &ComplexSquareMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexSquareMatrix {
        self.matrix
    }

    pub fn partial_trace(&self, which: Subsystem) -> ComplexSquareMatrix {
        partial_trace(self, which)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            local_dim: self.local_dim,
            matrix: self.matrix.scale(s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.local_dim, other.local_dim);
        Self {
            local_dim: self.local_dim,
            matrix: &self.matrix + &other.matrix,
        }
    }
}

/// Traces out `which`, returning the `d × d` reduction on the other factor.
pub fn partial_trace(op: &BipartiteOperator, which: Subsystem) -> ComplexSquareMatrix {
    let d = op.local_dim;
    let m = &op.matrix;
    match which {
        Subsystem::A => ComplexSquareMatrix::from_fn(d, |j, l| {
            (0..d).map(|i| m[(i * d + j, i * d + l)]).sum()
        }),
        Subsystem::B => ComplexSquareMatrix::from_fn(d, |i, k| {
            (0..d).map(|j| m[(i * d + j, k * d + j)]).sum()
        }),
    }
}

/// SWAP: `S |i⟩⊗|j⟩ = |j⟩⊗|i⟩`.
pub fn swap_operator(d: usize) -> BipartiteOperator {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let matrix = ComplexSquareMatrix::from_fn(d * d, |r, c| {
        let (i, j) = (c / d, c % d);
        if r == j * d + i {
            one
        } else {
            zero
        }
    });
    BipartiteOperator { local_dim: d, matrix }
}

/// `P_s = (I + S)/2`, the projector onto the symmetric subspace.
pub fn sym_projector(d: usize) -> BipartiteOperator {
    let s = swap_operator(d);
    let id = ComplexSquareMatrix::identity(d * d);
    BipartiteOperator {
        local_dim: d,
        matrix: (&id + &s.matrix).scale(0.5),
    }
}

/// `P_a = (I − S)/2`, the projector onto the antisymmetric subspace.
pub fn asym_projector(d: usize) -> BipartiteOperator {
    let s = swap_operator(d);
    let id = ComplexSquareMatrix::identity(d * d);
    BipartiteOperator {
        local_dim: d,
        matrix: (&id - &s.matrix).scale(0.5),
    }
}

/// Marginals of a substate with a rank-one marginal, and how far the
/// substate is from their (trace-normalized) product.
#[derive(Debug, Clone)]
pub struct RankOneFactorization {
    /// `tr_B x`
    pub marginal_a: ComplexSquareMatrix,
    /// `tr_A x`
    pub marginal_b: ComplexSquareMatrix,
    /// `‖x − (X_A ⊗ X_B)/tr x‖_max`
    pub residual: f64,
}

/// Splits a PSD substate (`tr x ≤ 1`) with a rank-one marginal into the
/// product of its marginals.
///
/// A PSD operator with a rank-one marginal is necessarily a product, so
/// `residual ≤ tol` certifies the factorization.
pub fn factor_rank_one_marginal(x: &BipartiteOperator, tol: f64) -> Result<RankOneFactorization> {
    let eig = eig_hermitian_with_tol(&x.matrix, HERMITIAN_TOL.max(tol))?;
    if eig.min_value() < -tol {
        return Err(QotError::NotPositive {
            min_eigenvalue: eig.min_value(),
        });
    }
    let trace = x.trace();
    if trace > 1.0 + tol {
        return Err(QotError::TraceTooLarge { trace });
    }
    let marginal_a = x.partial_trace(Subsystem::B);
    let marginal_b = x.partial_trace(Subsystem::A);
    let rank_a = rank_from_spectrum(&eig_hermitian_unchecked(&marginal_a).values, tol);
    let rank_b = rank_from_spectrum(&eig_hermitian_unchecked(&marginal_b).values, tol);
    if rank_a != 1 && rank_b != 1 {
        return Err(QotError::RankPrecondition { rank_a, rank_b });
    }
    let product = kron(&marginal_a, &marginal_b).scale(1.0 / trace);
    let residual = x.matrix.max_abs_diff(&product);
    Ok(RankOneFactorization {
        marginal_a,
        marginal_b,
        residual,
    })
}
