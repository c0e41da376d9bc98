//! Randomized property suites over the implemented quantifiers.
//!
//! Each trial draws from its own generator, seeded from the master seed, the
//! suite and the trial index, so trials may run in parallel and the report
//! is identical to a sequential run.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coherence::{
    convex_roof_t, sample_incoherent_channel, tilde_t, tilde_t_pure, verify_b3_counterexample, RoofConfig,
};
use crate::error::{QotError, Result};
use crate::linalg::{factor_rank_one_marginal, BipartiteOperator, ComplexSquareMatrix, DensityMatrix, PureState, C64};
use crate::random;
use crate::sdp::SolverConfig;
use crate::speedlimit::{tau_from_coherence, tau_to_incoherent};
use crate::transport::{lmi_min_eigenvalues, ts_dual, ts_primal, ts_via_ancilla};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    B1,
    B2,
    B4,
    C3Counterexample,
    Duality,
    PureClosedForm,
    SpeedLimit,
    Subadditivity,
    RankLemma,
    Ancilla,
    ConvexRoof,
    All,
}

impl Suite {
    pub const INDIVIDUAL: [Suite; 11] = [
        Suite::B1,
        Suite::B2,
        Suite::B4,
        Suite::C3Counterexample,
        Suite::Duality,
        Suite::PureClosedForm,
        Suite::SpeedLimit,
        Suite::Subadditivity,
        Suite::RankLemma,
        Suite::Ancilla,
        Suite::ConvexRoof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::B1 => "b1",
            Suite::B2 => "b2",
            Suite::B4 => "b4",
            Suite::C3Counterexample => "c3-counterexample",
            Suite::Duality => "duality",
            Suite::PureClosedForm => "theorem2",
            Suite::SpeedLimit => "theorem3",
            Suite::Subadditivity => "subadditivity",
            Suite::RankLemma => "rank-lemma",
            Suite::Ancilla => "ancilla",
            Suite::ConvexRoof => "convex-roof",
            Suite::All => "all",
        }
    }

    /// Trials per dimension (or per suite where no dimension sweep applies).
    pub fn default_trials(self) -> usize {
        match self {
            Suite::B1 => 20,
            Suite::B2 | Suite::B4 | Suite::Duality => 50,
            Suite::PureClosedForm | Suite::RankLemma => 100,
            Suite::SpeedLimit => 200,
            Suite::Subadditivity | Suite::Ancilla => 20,
            Suite::ConvexRoof => 50,
            Suite::C3Counterexample | Suite::All => 1,
        }
    }

    fn tag(self) -> u64 {
        Suite::INDIVIDUAL.iter().position(|&s| s == self).unwrap_or(99) as u64 + 1
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::INDIVIDUAL
            .iter()
            .chain(std::iter::once(&Suite::All))
            .find(|suite| suite.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Every measurement must be at most the tolerance.
    AtMost,
    /// Every measurement must exceed the tolerance.
    Above,
}

/// Aggregate of one property over a batch of trials.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub quantity: &'static str,
    pub bound: Bound,
    pub tolerance: f64,
    pub trials: usize,
    pub failures: usize,
    /// Largest (`at_most`) or smallest (`above`) measurement; `None` when no
    /// trial produced a number.
    pub worst: Option<f64>,
    pub worst_trial: Option<usize>,
    pub passed: bool,
    /// First error message, if any trial failed to evaluate.
    pub error: Option<String>,
}

impl Check {
    fn new(
        suite: Suite,
        name: impl Into<String>,
        quantity: &'static str,
        bound: Bound,
        tolerance: f64,
        outcomes: Vec<Result<f64>>,
    ) -> Self {
        let trials = outcomes.len();
        let mut failures = 0;
        let mut worst: Option<(usize, f64)> = None;
        let mut error = None;
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(v) => {
                    let ok = match bound {
                        Bound::AtMost => v <= tolerance,
                        Bound::Above => v > tolerance,
                    };
                    if !ok || v.is_nan() {
                        failures += 1;
                    }
                    let worse = match (worst, bound) {
                        (None, _) => true,
                        (Some((_, w)), Bound::AtMost) => v > w,
                        (Some((_, w)), Bound::Above) => v < w,
                    };
                    if worse || v.is_nan() {
                        worst = Some((i, v));
                    }
                }
                Err(e) => {
                    failures += 1;
                    error.get_or_insert_with(|| format!("trial {i}: {e}"));
                }
            }
        }
        Self {
            suite: suite.name(),
            name: name.into(),
            quantity,
            bound,
            tolerance,
            trials,
            failures,
            worst: worst.map(|w| w.1),
            worst_trial: worst.map(|w| w.0),
            passed: failures == 0,
            error,
        }
    }

    pub fn text_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let rel = match self.bound {
            Bound::AtMost => "<=",
            Bound::Above => ">",
        };
        let worst = self.worst.map_or("n/a".to_string(), |w| format!("{w:.3e}"));
        let mut line = format!(
            "{status} {}/{}: worst {worst} {rel} {:.1e} ({}/{} trials ok)",
            self.suite,
            self.name,
            self.tolerance,
            self.trials - self.failures,
            self.trials
        );
        if let Some(e) = &self.error {
            line.push_str(&format!(" [{e}]"));
        }
        line
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Overrides every suite's default trial count.
    pub trials: Option<usize>,
    pub solver: SolverConfig,
    pub roof_starts: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: None,
            solver: SolverConfig::default(),
            roof_starts: RoofConfig::default().starts,
        }
    }
}

struct Ctx<'a> {
    suite: Suite,
    config: &'a VerifyConfig,
}

impl Ctx<'_> {
    fn trials(&self) -> usize {
        self.config.trials.unwrap_or(self.suite.default_trials())
    }

    fn rng(&self, stream: u64, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream((self.suite.tag() << 48) ^ (stream << 32) ^ trial as u64);
        rng
    }

    /// Runs `f` on every trial in parallel; results stay in trial order.
    fn run<F>(&self, stream: u64, f: F) -> Vec<Result<f64>>
    where
        F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
    {
        (0..self.trials())
            .into_par_iter()
            .map(|t| f(&mut self.rng(stream, t)))
            .collect()
    }

    fn check(&self, name: impl Into<String>, quantity: &'static str, bound: Bound, tol: f64, outcomes: Vec<Result<f64>>) -> Check {
        Check::new(self.suite, name, quantity, bound, tol, outcomes)
    }

    fn solver(&self) -> &SolverConfig {
        &self.config.solver
    }
}

pub fn run_suite(suite: Suite, config: &VerifyConfig) -> Result<VerifyReport> {
    config.solver.validate()?;
    if config.trials == Some(0) {
        return Err(QotError::OutOfRange {
            name: "trials",
            value: 0.0,
            expected: ">= 1",
        });
    }
    let suites: Vec<Suite> = if suite == Suite::All {
        Suite::INDIVIDUAL.to_vec()
    } else {
        vec![suite]
    };
    let mut checks = Vec::new();
    for s in suites {
        let ctx = Ctx { suite: s, config };
        checks.extend(match s {
            Suite::B1 => b1(&ctx),
            Suite::B2 => b2(&ctx),
            Suite::B4 => b4(&ctx),
            Suite::C3Counterexample => c3(&ctx),
            Suite::Duality => duality(&ctx),
            Suite::PureClosedForm => pure_closed_form(&ctx),
            Suite::SpeedLimit => speed_limit(&ctx),
            Suite::Subadditivity => subadditivity(&ctx),
            Suite::RankLemma => rank_lemma(&ctx),
            Suite::Ancilla => ancilla(&ctx),
            Suite::ConvexRoof => convex_roof(&ctx),
            Suite::All => unreachable!("expanded above"),
        });
    }
    Ok(VerifyReport {
        suite: suite.name(),
        seed: config.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

const SLACK: f64 = 1e-6;

fn b1(ctx: &Ctx) -> Vec<Check> {
    let mut out = Vec::new();
    for d in 2..=4 {
        let diag = ctx.run(d as u64, |rng| {
            let rho = random::random_incoherent(d, rng);
            Ok(tilde_t(&rho, ctx.solver())?.value)
        });
        out.push(ctx.check(format!("diagonal d={d}"), "tilde_t of a diagonal state", Bound::AtMost, SLACK, diag));
        // coherent draws are kept only if some |ρ_ij| exceeds 1e-5
        let coherent = ctx.run(10 + d as u64, |rng| {
            let rho = loop {
                let rho = random::random_density(d, rng);
                if rho.max_off_diagonal() > 1e-5 {
                    break rho;
                }
            };
            Ok(tilde_t(&rho, ctx.solver())?.value)
        });
        out.push(ctx.check(format!("coherent d={d}"), "tilde_t of a coherent state", Bound::Above, SLACK, coherent));
    }
    out
}

fn b2(ctx: &Ctx) -> Vec<Check> {
    let outcomes = ctx.run(0, |rng| {
        let d = rng.random_range(2..=4);
        let rho = random::random_density(d, rng);
        let channel = sample_incoherent_channel(d, rng.random_range(1..=4), rng.random())?;
        let before = tilde_t(&rho, ctx.solver())?.value;
        let after = tilde_t(&channel.apply(&rho)?, ctx.solver())?.value;
        Ok(after - before)
    });
    vec![ctx.check(
        "incoherent channels",
        "tilde_t(channel(rho)) - tilde_t(rho)",
        Bound::AtMost,
        SLACK,
        outcomes,
    )]
}

fn b4(ctx: &Ctx) -> Vec<Check> {
    let outcomes = ctx.run(0, |rng| {
        let d = rng.random_range(2..=4);
        let n = rng.random_range(2..=4);
        let weights = random::random_simplex(n, rng);
        let states: Vec<DensityMatrix> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    random::random_pure_state(d, rng).density()
                } else {
                    random::random_density(d, rng)
                }
            })
            .collect();
        let mix = DensityMatrix::mixture(&weights, &states)?;
        let mut avg = 0.0;
        for (w, s) in weights.iter().zip(&states) {
            avg += w * tilde_t(s, ctx.solver())?.value;
        }
        Ok(tilde_t(&mix, ctx.solver())?.value - avg)
    });
    vec![ctx.check(
        "random ensembles",
        "tilde_t(mixture) - average tilde_t",
        Bound::AtMost,
        SLACK,
        outcomes,
    )]
}

fn c3(ctx: &Ctx) -> Vec<Check> {
    let report = match verify_b3_counterexample(ctx.solver()) {
        Ok(r) => r,
        Err(e) => {
            return vec![ctx.check("counterexample", "counterexample evaluation", Bound::AtMost, 0.0, vec![Err(e)])];
        }
    };
    report
        .checks
        .iter()
        .map(|c| {
            // express every row as a deviation measured against its tolerance
            let deviation = if c.upper_bound {
                c.measured - c.expected
            } else {
                (c.measured - c.expected).abs()
            };
            ctx.check(c.quantity, "counterexample quantity", Bound::AtMost, c.tolerance, vec![Ok(deviation)])
        })
        .collect()
}

fn duality(ctx: &Ctx) -> Vec<Check> {
    let mut out = Vec::new();
    let strict: Vec<Result<f64>> = (2..=6)
        .map(|d| {
            let minus = ComplexSquareMatrix::identity(d).scale(-1.0);
            let lmi = lmi_min_eigenvalues(&minus, &minus);
            Ok(2.0 - lmi[0].min(lmi[1]))
        })
        .collect();
    out.push(ctx.check(
        "H1=H2=-I strictly feasible",
        "2 - min LMI eigenvalue",
        Bound::AtMost,
        1e-9,
        strict,
    ));
    for d in 2..=4 {
        let gaps = ctx.run(d as u64, |rng| {
            let rho = random::random_density(d, rng);
            let sigma = random::random_density(d, rng);
            let primal = ts_primal(&rho, &sigma, ctx.solver())?.value;
            let dual = ts_dual(&rho, &sigma, ctx.solver())?;
            Ok((primal - dual.value).abs())
        });
        out.push(ctx.check(format!("gap d={d}"), "|primal - dual| for T_s", Bound::AtMost, SLACK, gaps));
    }
    out
}

fn pure_closed_form(ctx: &Ctx) -> Vec<Check> {
    (2..=5)
        .map(|d| {
            let outcomes = ctx.run(d as u64, |rng| {
                let psi = random::random_pure_state(d, rng);
                let sdp = tilde_t(&psi.density(), ctx.solver())?.value;
                Ok((sdp - tilde_t_pure(&psi)).abs())
            });
            ctx.check(format!("pure d={d}"), "|tilde_t SDP - closed form|", Bound::AtMost, SLACK, outcomes)
        })
        .collect()
}

fn speed_limit(ctx: &Ctx) -> Vec<Check> {
    let identity = ctx.run(0, |rng| {
        let d = rng.random_range(2..=6);
        let psi = random::random_pure_state(d, rng);
        let omega = rng.random_range(0.25..4.0);
        let tau = tau_to_incoherent(&psi, omega)?.tau;
        Ok((tau - tau_from_coherence(tilde_t_pure(&psi), omega)?).abs())
    });
    let fidelity = ctx.run(1, |rng| {
        let d = rng.random_range(2..=6);
        let psi = random::random_pure_state(d, rng);
        let omega = rng.random_range(0.25..4.0);
        Ok(1.0 - tau_to_incoherent(&psi, omega)?.fidelity_at_tau)
    });
    let plus = tau_to_incoherent(&PureState::maximally_coherent(2), 1.0).map(|r| (r.tau - FRAC_PI_4).abs());
    vec![
        ctx.check("identity", "|tau - arcsin(sqrt(2 tilde_t))/omega|", Bound::AtMost, 1e-12, identity),
        ctx.check("saturation", "1 - fidelity at tau", Bound::AtMost, 1e-7, fidelity),
        ctx.check("plus state", "|tau(+) - pi/4|", Bound::AtMost, 1e-12, vec![plus]),
    ]
}

fn subadditivity(ctx: &Ctx) -> Vec<Check> {
    let outcomes = ctx.run(0, |rng| {
        let rho = random::random_density(2, rng);
        let sigma = random::random_density(2, rng);
        let joint = tilde_t(&rho.tensor(&sigma), ctx.solver())?.value;
        Ok(joint - tilde_t(&rho, ctx.solver())?.value - tilde_t(&sigma, ctx.solver())?.value)
    });
    vec![ctx.check(
        "qubit products",
        "tilde_t(rho x sigma) - tilde_t(rho) - tilde_t(sigma)",
        Bound::AtMost,
        SLACK,
        outcomes,
    )]
}

fn rank_lemma(ctx: &Ctx) -> Vec<Check> {
    let products = ctx.run(0, |rng| {
        let d = rng.random_range(2..=4);
        let m = rng.random_range(0.05..=1.0);
        let mixed = random::random_density(d, rng);
        let pure = random::random_pure_state(d, rng).projector();
        let x = if rng.random_bool(0.5) {
            BipartiteOperator::product(mixed.matrix(), &pure)?
        } else {
            BipartiteOperator::product(&pure, mixed.matrix())?
        };
        Ok(factor_rank_one_marginal(&x.scale(m), 1e-9)?.residual)
    });
    let entangled = ctx.run(1, |rng| {
        // a generic bipartite pure state has full-rank marginals
        let d = rng.random_range(2..=4);
        let psi = random::random_pure_state(d * d, rng);
        let x = BipartiteOperator::new(d, psi.projector())?;
        Ok(match factor_rank_one_marginal(&x, 1e-9) {
            Err(QotError::RankPrecondition { .. }) => 0.0,
            _ => 1.0,
        })
    });
    vec![
        ctx.check("products", "factorization residual", Bound::AtMost, 1e-9, products),
        ctx.check("entangled rejected", "1 if accepted", Bound::AtMost, 0.0, entangled),
    ]
}

fn ancilla(ctx: &Ctx) -> Vec<Check> {
    (2..=3)
        .map(|d| {
            let outcomes = ctx.run(d as u64, |rng| {
                let rho = random::random_density(d, rng);
                let sigma = random::random_density(d, rng);
                let direct = ts_primal(&rho, &sigma, ctx.solver())?.value;
                Ok((direct - ts_via_ancilla(&rho, &sigma, ctx.solver())?).abs())
            });
            ctx.check(format!("d={d}"), "|T_s - T(rho x I/2, sigma x I/2)|", Bound::AtMost, SLACK, outcomes)
        })
        .collect()
}

fn convex_roof(ctx: &Ctx) -> Vec<Check> {
    let roof = RoofConfig {
        starts: ctx.config.roof_starts,
        seed: ctx.config.seed,
        ..RoofConfig::default()
    };
    let pure = ctx.run(0, |rng| {
        let d = rng.random_range(2..=4);
        let psi = random::random_pure_state(d, rng);
        let sdp = tilde_t(&psi.density(), ctx.solver())?.value;
        Ok((convex_roof_t(&psi.density(), &roof)?.value - sdp).abs())
    });
    let diagonal = ctx.run(1, |rng| {
        let d = rng.random_range(2..=4);
        // ½|φ₊⟩⟨φ₊| + ½|φ₋⟩⟨φ₋| with |φ±⟩ = (|i⟩ ± e^{iθ}|j⟩)/√2 is diagonal,
        // though built from coherent states
        let i = rng.random_range(0..d);
        let j = (i + rng.random_range(1..d)) % d;
        let phase = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let pair = |sign: f64| {
            let mut amps = vec![C64::new(0.0, 0.0); d];
            amps[i] = C64::new(1.0, 0.0);
            amps[j] = phase * sign;
            PureState::normalized(amps).map(|p| p.density())
        };
        let rho = DensityMatrix::mixture(&[0.5, 0.5], &[pair(1.0)?, pair(-1.0)?])?;
        Ok(convex_roof_t(&rho, &roof)?.value)
    });
    let eigen = ctx.run(2, |rng| {
        let d = rng.random_range(2..=4);
        let rho = random::random_density(d, rng);
        let eig = rho.eigen();
        let avg: f64 = (0..d)
            .map(|k| eig.values[k].max(0.0) * tilde_t_pure(&PureState::from_trusted(eig.vector(k))))
            .sum();
        Ok(convex_roof_t(&rho, &roof)?.value - avg)
    });
    let dominance = ctx.run(3, |rng| {
        let d = rng.random_range(2..=3);
        let rho = random::random_density(d, rng);
        Ok(tilde_t(&rho, ctx.solver())?.value - convex_roof_t(&rho, &roof)?.value)
    });
    vec![
        ctx.check("pure", "|T(pure) - tilde_t(pure)|", Bound::AtMost, 1e-7, pure),
        ctx.check("diagonal", "T of a diagonal state", Bound::AtMost, SLACK, diagonal),
        ctx.check("eigen bound", "T - eigendecomposition average", Bound::AtMost, 1e-9, eigen),
        ctx.check("dominance", "tilde_t - T", Bound::AtMost, SLACK, dominance),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> VerifyConfig {
        VerifyConfig {
            seed,
            trials: Some(3),
            roof_starts: 4,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::INDIVIDUAL.iter().chain(std::iter::once(&Suite::All)) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), *s);
        }
        assert!("b3".parse::<Suite>().is_err());
    }

    #[test]
    fn small_run_of_every_suite_passes() {
        let report = run_suite(Suite::All, &small(1)).unwrap();
        assert!(report.passed, "{:?}", report.first_failure());
        assert!(report.checks.iter().all(|c| c.error.is_none()));
    }

    #[test]
    fn reports_are_reproducible() {
        let a = serde_json::to_string(&run_suite(Suite::B2, &small(7)).unwrap()).unwrap();
        let b = serde_json::to_string(&run_suite(Suite::B2, &small(7)).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&run_suite(Suite::B2, &small(8)).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn check_aggregation() {
        let c = Check::new(Suite::B1, "x", "q", Bound::AtMost, 1.0, vec![Ok(0.5), Ok(2.0), Ok(0.1)]);
        assert_eq!((c.failures, c.worst, c.worst_trial, c.passed), (1, Some(2.0), Some(1), false));
        let c = Check::new(Suite::B1, "x", "q", Bound::Above, 1.0, vec![Ok(3.0), Ok(2.0)]);
        assert_eq!((c.failures, c.worst, c.passed), (0, Some(2.0), true));
        let c = Check::new(Suite::B1, "x", "q", Bound::AtMost, 1.0, vec![Err(QotError::IdenticalStates)]);
        assert!(!c.passed && c.error.is_some() && c.worst.is_none());
    }
}
