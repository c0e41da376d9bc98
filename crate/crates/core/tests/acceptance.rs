//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line straight to
//! stderr (bypassing output capture) and then asserts.
//!
//! Reference values come from oracles written here against raw nalgebra:
//! closed forms, explicit SWAP construction and a series matrix exponential.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;
use std::process::Command;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qot_core::coherence::{convex_roof_t, fixtures, sample_incoherent_channel, tilde_t, RoofConfig};
use qot_core::linalg::{factor_rank_one_marginal, BipartiteOperator, ComplexSquareMatrix, DensityMatrix, PureState};
use qot_core::random;
use qot_core::sdp::SolverConfig;
use qot_core::speedlimit::{optimal_hamiltonian, tau_from_coherence, tau_to_incoherent};
use qot_core::transport::{ts_dual, ts_primal, ts_via_ancilla};

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let line = format!("acceptance {id} [{name}]: {status} ({detail})\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(1 − maxᵢ|λᵢ|²)/2` straight from the amplitudes.
fn closed_form(psi: &PureState) -> f64 {
    let max = psi.amplitudes().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    (1.0 - max) / 2.0
}

/// SWAP on `C^d ⊗ C^d` built entry by entry: `S|ij⟩ = |ji⟩`.
fn swap(d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, j) = (c / d, c % d);
        if r == j * d + i {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn projectors(d: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let id = DMatrix::<C64>::identity(d * d, d * d);
    let s = swap(d);
    let half = C64::new(0.5, 0.0);
    ((&id + &s) * half, (&id - &s) * half)
}

fn min_eig(m: &DMatrix<C64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Both dual inequalities `P − H₁⊗I − I⊗H₂ ⪰ 0`, checked independently.
fn dual_lmi_min(h1: &ComplexSquareMatrix, h2: &ComplexSquareMatrix) -> f64 {
    let d = h1.dim();
    let id = DMatrix::<C64>::identity(d, d);
    let shift = h1.as_nalgebra().kronecker(&id) + id.kronecker(h2.as_nalgebra());
    let (ps, pa) = projectors(d);
    min_eig(&(&ps - &shift)).min(min_eig(&(&pa - &shift)))
}

/// `exp(m)` by scaling and squaring of a truncated Taylor series.
fn expm(m: &DMatrix<C64>) -> DMatrix<C64> {
    let norm = m.iter().map(|z| z.norm()).sum::<f64>();
    let squarings = norm.log2().ceil().max(0.0) as i32 + 1;
    let a = m * C64::new(0.5f64.powi(squarings), 0.0);
    let n = m.nrows();
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[test]
fn criterion_1_pure_state_closed_form() {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for d in 2..=5 {
        let mut r = rng(100 + d as u64);
        for _ in 0..100 {
            let psi = random::random_pure_state(d, &mut r);
            match tilde_t(&psi.density(), &cfg()) {
                Ok(res) => worst = worst.max((res.value - closed_form(&psi)).abs()),
                Err(_) => failures += 1,
            }
        }
    }
    let passed = failures == 0 && worst <= 1e-6;
    report(
        1,
        "pure-state closed form, 100 states per d in 2..=5",
        passed,
        &format!("max |SDP - closed form| = {worst:.3e}, tol 1e-6, solver failures {failures}"),
    );
    assert!(passed);
}

#[test]
fn criterion_2_counterexample() {
    let s2 = 0.5f64.sqrt();
    let s3 = (1.0f64 / 3.0).sqrt();
    let amps = |v: [f64; 5]| v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>();
    let psi1 = PureState::new(amps([s2, s2, 0.0, 0.0, 0.0])).unwrap();
    let psi2 = PureState::new(amps([0.0, 0.0, s3, s3, s3])).unwrap();
    let rho1 = psi1.density();
    let rho2 = psi2.density();
    let rho = DensityMatrix::mixture(&[0.5, 0.5], &[rho1.clone(), rho2.clone()]).unwrap();
    let fixtures_agree = fixtures::rho().unwrap().matrix().approx_eq(rho.matrix(), 1e-15)
        && fixtures::rho1().unwrap().matrix().approx_eq(rho1.matrix(), 1e-15)
        && fixtures::rho2().unwrap().matrix().approx_eq(rho2.matrix(), 1e-15);

    let t1 = tilde_t(&rho1, &cfg()).unwrap().value;
    let t2 = tilde_t(&rho2, &cfg()).unwrap().value;
    let t = tilde_t(&rho, &cfg()).unwrap().value;
    let weighted = 0.5 * t1 + 0.5 * t2;

    // the stored witness pair, scored with an explicitly built SWAP: (1 + tr S(X − Y))/2
    let (fx, fy, _) = fixtures::witness().unwrap();
    let (x, y) = (fx.matrix().as_nalgebra(), fy.matrix().as_nalgebra());
    let witness = (1.0 + (swap(5) * (x - y)).trace().re) / 2.0;
    let sum = x + y;
    let (mut marg_a, mut marg_b) = (DMatrix::<C64>::zeros(5, 5), DMatrix::<C64>::zeros(5, 5));
    for i in 0..5 {
        for j in 0..5 {
            for k in 0..5 {
                marg_a[(i, j)] += sum[(i * 5 + k, j * 5 + k)];
                marg_b[(i, j)] += sum[(k * 5 + i, k * 5 + j)];
            }
        }
    }
    let off_b = (0..25).filter(|n| n / 5 != n % 5).map(|n| marg_b[(n / 5, n % 5)].norm()).fold(0.0, f64::max);
    let fixture_witness = (&marg_a - rho.matrix().as_nalgebra()).iter().map(|z| z.norm()).fold(0.0, f64::max) <= 1e-12
        && off_b <= 1e-12
        && (marg_b.trace().re - 1.0).abs() <= 1e-12
        && min_eig(x) >= -1e-12
        && min_eig(y) >= -1e-12;

    let passed = (t1 - 0.25).abs() <= 1e-6
        && (t2 - 1.0 / 3.0).abs() <= 1e-6
        && (weighted - 7.0 / 24.0).abs() <= 2e-6
        && (witness - 0.25).abs() <= 1e-10
        && t <= 0.25 + 1e-6
        && 0.25 + 1e-6 < 7.0 / 24.0
        && fixtures_agree
        && fixture_witness;
    report(
        2,
        "five-dimensional mixture counterexample",
        passed,
        &format!(
            "T~(rho1) = {t1:.9}, T~(rho2) = {t2:.9}, weighted sum = {weighted:.9} (7/24 = {:.9}), witness = {witness:.12}, T~(rho) = {t:.9} <= 0.25 + 1e-6",
            7.0 / 24.0
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_3_strong_duality() {
    let mut worst_gap = 0.0f64;
    let mut worst_lmi = f64::INFINITY;
    let mut failures = 0;
    for d in 2..=4 {
        let mut r = rng(300 + d as u64);
        for _ in 0..50 {
            let rho = random::random_density(d, &mut r);
            let sigma = random::random_density(d, &mut r);
            match (ts_primal(&rho, &sigma, &cfg()), ts_dual(&rho, &sigma, &cfg())) {
                (Ok(p), Ok(q)) => {
                    worst_gap = worst_gap.max((p.value - q.value).abs());
                    worst_lmi = worst_lmi.min(dual_lmi_min(&q.h1, &q.h2));
                }
                _ => failures += 1,
            }
        }
    }
    let mut strict = f64::INFINITY;
    for d in 2..=6 {
        let minus = ComplexSquareMatrix::identity(d).scale(-1.0);
        strict = strict.min(dual_lmi_min(&minus, &minus));
    }
    let passed = failures == 0 && worst_gap <= 1e-6 && worst_lmi >= -1e-9 && strict >= 2.0 - 1e-9;
    report(
        3,
        "strong duality, 50 pairs per d in 2..=4",
        passed,
        &format!(
            "max |primal - dual| = {worst_gap:.3e} (tol 1e-6), min dual LMI eigenvalue = {worst_lmi:.3e}, H1=H2=-I margin = {strict:.12}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_4_ancilla_identity() {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for d in 2..=3 {
        let mut r = rng(400 + d as u64);
        for _ in 0..20 {
            let rho = random::random_density(d, &mut r);
            let sigma = random::random_density(d, &mut r);
            match (ts_primal(&rho, &sigma, &cfg()), ts_via_ancilla(&rho, &sigma, &cfg())) {
                (Ok(p), Ok(a)) => worst = worst.max((p.value - a).abs()),
                _ => failures += 1,
            }
        }
    }
    let passed = failures == 0 && worst <= 1e-6;
    report(
        4,
        "ancilla identity, 20 pairs per d in 2..=3",
        passed,
        &format!("max |T_s - T(rho x I/2, sigma x I/2)| = {worst:.3e}, tol 1e-6"),
    );
    assert!(passed);
}

#[test]
fn criterion_5_postulates() {
    let t = |rho: &DensityMatrix| tilde_t(rho, &cfg()).unwrap().value;
    let mut r = rng(500);

    // faithfulness: zero on diagonal states, positive whenever some |ρ_ij| > 1e-5
    let mut faithful = true;
    for d in 2..=4 {
        for _ in 0..10 {
            faithful &= t(&random::random_incoherent(d, &mut r)) <= 1e-6;
            let rho = random::random_density(d, &mut r);
            if rho.max_off_diagonal() > 1e-5 {
                faithful &= t(&rho) > 1e-6;
            }
        }
    }

    let mut monotone = f64::NEG_INFINITY;
    for k in 0..50 {
        let d = r.random_range(2..=4);
        let rho = random::random_density(d, &mut r);
        let channel = sample_incoherent_channel(d, r.random_range(1..=4), 5000 + k).unwrap();
        monotone = monotone.max(t(&channel.apply(&rho).unwrap()) - t(&rho));
    }

    let mut convex = f64::NEG_INFINITY;
    for _ in 0..50 {
        let d = r.random_range(2..=4);
        let n = r.random_range(2..=4);
        let w = random::random_simplex(n, &mut r);
        let states: Vec<DensityMatrix> = (0..n).map(|_| random::random_density_with_rank(d, r.random_range(1..=d), &mut r)).collect();
        let avg: f64 = w.iter().zip(&states).map(|(wi, s)| wi * t(s)).sum();
        convex = convex.max(t(&DensityMatrix::mixture(&w, &states).unwrap()) - avg);
    }

    let mut subadd = f64::NEG_INFINITY;
    for _ in 0..20 {
        let a = random::random_density(2, &mut r);
        let b = random::random_density(2, &mut r);
        subadd = subadd.max(t(&a.tensor(&b)) - t(&a) - t(&b));
    }

    let passed = faithful && monotone <= 1e-6 && convex <= 1e-6 && subadd <= 1e-6;
    report(
        5,
        "faithfulness, incoherent monotonicity, convexity, subadditivity",
        passed,
        &format!(
            "faithful = {faithful}, max increase under 50 channels = {monotone:.3e}, max convexity excess over 50 ensembles = {convex:.3e}, max subadditivity excess over 20 products = {subadd:.3e}; slack 1e-6"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_6_convex_roof() {
    let config = RoofConfig::default();
    let mut r = rng(600);
    let mut pure_err = 0.0f64;
    let mut pure_sdp_err = 0.0f64;
    for _ in 0..50 {
        let d = r.random_range(2..=5);
        let psi = random::random_pure_state(d, &mut r);
        let roof = convex_roof_t(&psi.density(), &config).unwrap().value;
        let sdp = tilde_t(&psi.density(), &cfg()).unwrap().value;
        pure_err = pure_err.max((roof - closed_form(&psi)).abs());
        pure_sdp_err = pure_sdp_err.max((roof - sdp).abs());
    }

    // ½|φ₊⟩⟨φ₊| + ½|φ₋⟩⟨φ₋| with |φ±⟩ = (|i⟩ ± e^{iθ}|j⟩)/√2 equals ½(|i⟩⟨i| + |j⟩⟨j|)
    let mut diag = 0.0f64;
    for d in 2..=5 {
        for _ in 0..4 {
            let (i, j) = (r.random_range(0..d), r.random_range(0..d));
            if i == j {
                continue;
            }
            let phase = C64::from_polar(1.0, r.random_range(0.0..std::f64::consts::TAU));
            let pair = |sign: f64| {
                let mut a = vec![C64::new(0.0, 0.0); d];
                a[i] = C64::new(1.0, 0.0);
                a[j] = phase * sign;
                PureState::normalized(a).unwrap().density()
            };
            let rho = DensityMatrix::mixture(&[0.5, 0.5], &[pair(1.0), pair(-1.0)]).unwrap();
            diag = diag.max(convex_roof_t(&rho, &config).unwrap().value);
        }
        diag = diag.max(convex_roof_t(&DensityMatrix::maximally_mixed(d), &config).unwrap().value);
    }

    let mut eig_excess = f64::NEG_INFINITY;
    for _ in 0..30 {
        let d = r.random_range(2..=4);
        let rank = r.random_range(1..=d);
        let rho = random::random_density_with_rank(d, rank, &mut r);
        let (vals, vecs) = {
            let e = rho.matrix().as_nalgebra().clone().symmetric_eigen();
            (e.eigenvalues, e.eigenvectors)
        };
        let avg: f64 = (0..d)
            .map(|k| {
                let col = vecs.column(k);
                let max = col.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
                vals[k].max(0.0) * (1.0 - max) / 2.0
            })
            .sum();
        eig_excess = eig_excess.max(convex_roof_t(&rho, &config).unwrap().value - avg);
    }

    let passed = pure_err <= 1e-7 && pure_sdp_err <= 1e-7 && diag <= 1e-6 && eig_excess <= 1e-9;
    report(
        6,
        "convex roof",
        passed,
        &format!(
            "max |T(pure) - closed form| over 50 = {pure_err:.3e}, max |T(pure) - T~(pure)| = {pure_sdp_err:.3e} (tol 1e-7), max T(diagonal mixtures) = {diag:.3e} (tol 1e-6), max excess over eigen average = {eig_excess:.3e} (tol 1e-9)"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_7_rank_lemma() {
    let mut r = rng(700);
    let mut worst = 0.0f64;
    let mut accepted_entangled = 0;
    for k in 0..100 {
        let d = r.random_range(2..=4);
        let m = r.random_range(0.05..=1.0);
        let mixed = random::random_density(d, &mut r);
        let pure = random::random_pure_state(d, &mut r).projector();
        let (a, b) = if k % 2 == 0 { (mixed.matrix(), &pure) } else { (&pure, mixed.matrix()) };
        // the product built directly in nalgebra, independent of the library's kron
        let x = a.as_nalgebra().kronecker(b.as_nalgebra()) * C64::new(m, 0.0);
        let x = BipartiteOperator::new(d, ComplexSquareMatrix::from_nalgebra(x)).unwrap();
        worst = worst.max(factor_rank_one_marginal(&x, 1e-9).map_or(f64::INFINITY, |f| f.residual));

        let psi = random::random_pure_state(d * d, &mut r);
        let ent = BipartiteOperator::new(d, psi.projector()).unwrap();
        if factor_rank_one_marginal(&ent, 1e-9).is_ok() {
            accepted_entangled += 1;
        }
    }
    let passed = worst <= 1e-9 && accepted_entangled == 0;
    report(
        7,
        "rank-one marginal factorization",
        passed,
        &format!("max residual over 100 products = {worst:.3e} (tol 1e-9), entangled inputs accepted = {accepted_entangled}/100"),
    );
    assert!(passed);
}

#[test]
fn criterion_8_speed_limit() {
    let mut r = rng(800);
    let mut identity = 0.0f64;
    let mut fidelity_loss = 0.0f64;
    for _ in 0..200 {
        let d = r.random_range(2..=6);
        let psi = random::random_pure_state(d, &mut r);
        let omega = r.random_range(0.25..4.0);
        let rep = tau_to_incoherent(&psi, omega).unwrap();
        let from_t = tau_from_coherence(closed_form(&psi), omega).unwrap();
        identity = identity.max((rep.tau - from_t).abs());

        // evolve with an independent matrix exponential of −iH′τ
        let h = optimal_hamiltonian(&psi, &PureState::basis(d, rep.target_index), omega).unwrap();
        let u = expm(&(h.hamiltonian.as_nalgebra() * C64::new(0.0, -rep.tau)));
        let out = u * nalgebra::DVector::from_column_slice(psi.amplitudes());
        fidelity_loss = fidelity_loss.max(1.0 - out[rep.target_index].norm());
    }
    let plus = tau_to_incoherent(&PureState::maximally_coherent(2), 1.0).unwrap().tau;
    let passed = identity <= 1e-12 && fidelity_loss <= 1e-7 && (plus - FRAC_PI_4).abs() <= 1e-12;
    report(
        8,
        "speed limit to the nearest incoherent state",
        passed,
        &format!(
            "max |tau - arcsin(sqrt(2T))/omega| over 200 = {identity:.3e} (tol 1e-12), max fidelity loss = {fidelity_loss:.3e} (tol 1e-7), tau(+) - pi/4 = {:.3e}",
            plus - FRAC_PI_4
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_9_determinism() {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_qot"))
            .args(["verify", "all", "--seed", "42"])
            .output()
            .expect("binary runs")
    };
    let a = run();
    let b = run();
    let identical = a.stdout == b.stdout && !a.stdout.is_empty();
    let passed = identical && a.status.success() && b.status.success();
    report(
        9,
        "byte-identical `verify all --seed 42` reports",
        passed,
        &format!(
            "identical = {identical}, report bytes = {}, exit codes = {:?}/{:?}",
            a.stdout.len(),
            a.status.code(),
            b.status.code()
        ),
    );
    assert!(passed);
}
