//! Seeded samplers for states, unitaries and Hermitian matrices.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexSquareMatrix, DensityMatrix, PureState, C64};

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_complex_matrix(d: usize, rng: &mut impl Rng) -> ComplexSquareMatrix {
    ComplexSquareMatrix::from_nalgebra(ginibre(d, d, rng))
}

pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> ComplexSquareMatrix {
    random_complex_matrix(d, rng).hermitian_part()
}

/// Haar-random pure state.
pub fn random_pure_state(d: usize, rng: &mut impl Rng) -> PureState {
    let amps: Vec<C64> = (0..d).map(|_| gaussian(rng)).collect();
    PureState::normalized(amps).expect("gaussian vector is nonzero")
}

/// Full-rank state from the Hilbert–Schmidt ensemble.
pub fn random_density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    random_density_with_rank(d, d, rng)
}

/// `G G† / tr(G G†)` with `G` a `d × rank` Ginibre matrix.
pub fn random_density_with_rank(d: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let g = ginibre(d, rank, rng);
    let gg = &g * g.adjoint();
    let tr = gg.trace().re;
    DensityMatrix::from_trusted(ComplexSquareMatrix::from_nalgebra(gg / C64::new(tr, 0.0)))
}

/// Random diagonal state with populations drawn uniformly from the simplex.
pub fn random_incoherent(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    let raw: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    let pops: Vec<f64> = raw.iter().map(|x| x / total).collect();
    DensityMatrix::from_trusted(ComplexSquareMatrix::from_real_diagonal(&pops))
}

/// Haar-random unitary (QR of a Ginibre matrix with the phase correction).
pub fn random_unitary(d: usize, rng: &mut impl Rng) -> ComplexSquareMatrix {
    let qr = ginibre(d, d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            let z = r[(i, i)];
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        } else {
            C64::new(0.0, 0.0)
        }
    });
    ComplexSquareMatrix::from_nalgebra(q * phases)
}

/// Random probability vector of length `n` (flat Dirichlet).
pub fn random_simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samplers_produce_valid_objects() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=6 {
            let u = random_unitary(d, &mut rng);
            let gram = &u.adjoint() * &u;
            assert!(gram.max_abs_diff(&ComplexSquareMatrix::identity(d)) < 1e-12);
            let rho = random_density_with_rank(d, 1.max(d / 2), &mut rng);
            assert!(DensityMatrix::new(rho.into_matrix()).is_ok());
            let psi = random_pure_state(d, &mut rng);
            assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
            let p = random_simplex(d, &mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(random_incoherent(d, &mut rng).is_diagonal(0.0));
        }
    }
}
