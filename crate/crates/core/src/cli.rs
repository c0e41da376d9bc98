//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error, 3 solver error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::coherence::{convex_roof_t, tilde_t, tilde_t_pure, RoofConfig};
use crate::error::{QotError, Result};
use crate::io::{parse_density, parse_pure_state};
use crate::linalg::{numerical_rank, DensityMatrix, PureState, Tolerances, RANK_TOL};
use crate::sdp::SolverConfig;
use crate::speedlimit::tau_to_incoherent;
use crate::transport::{transport_cost, ts_dual, ts_primal, ts_via_ancilla};
use crate::verify::{run_suite, Suite, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "qot", version, about = "Quantum optimal transport costs, coherence and speed limits")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Relative duality-gap tolerance of the SDP solver
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub gap_tol: f64,
    /// Primal/dual feasibility tolerance of the SDP solver
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub feas_tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Multi-start count for the convex-roof search
    #[arg(long, global = true, default_value_t = 32)]
    pub starts: usize,
    /// Angular frequency of the evolution (hbar = 1)
    #[arg(long, global = true, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub output: OutputFormat,
}

impl RunConfig {
    fn solver(&self) -> Result<SolverConfig> {
        let config = SolverConfig {
            gap_tol: self.gap_tol,
            feas_tol: self.feas_tol,
            seed: self.seed,
            ..SolverConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    fn roof(&self) -> Result<RoofConfig> {
        if self.starts == 0 {
            return Err(QotError::OutOfRange {
                name: "starts",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(RoofConfig {
            starts: self.starts,
            seed: self.seed,
            ..RoofConfig::default()
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transport cost T between two states, or the revised cost T_s
    Transport {
        rho: PathBuf,
        sigma: PathBuf,
        /// Report the revised cost T_s instead of T
        #[arg(long)]
        revised: bool,
        /// Also solve the dual of T_s and report the duality gap
        #[arg(long)]
        dual: bool,
        /// Also evaluate T(rho x I/2, sigma x I/2) and compare with T_s
        #[arg(long)]
        ancilla_check: bool,
    },
    /// Coherence quantifier of a state
    Coherence {
        rho: PathBuf,
        /// Evaluate only the closed form for pure inputs, skipping the SDP
        #[arg(long)]
        pure_analytic: bool,
        /// Also run the convex-roof search
        #[arg(long)]
        convex_roof: bool,
        /// Write the optimal incoherent state and coupling pair to FILE
        #[arg(long, value_name = "FILE")]
        witness_out: Option<PathBuf>,
    },
    /// Evolution time to the nearest incoherent state
    Speedlimit { psi: PathBuf },
    /// Run a property-verification suite
    Verify {
        suite: Suite,
        /// Trials per dimension, overriding each suite's default
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Debug, Serialize)]
struct Reported {
    quantity: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TransportOutput {
    command: &'static str,
    cost: Reported,
    #[serde(skip_serializing_if = "Option::is_none")]
    dual: Option<DualOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ancilla: Option<AncillaOutput>,
}

#[derive(Debug, Serialize)]
struct DualOutput {
    quantity: &'static str,
    value: f64,
    duality_gap: f64,
    lmi_min_eigenvalues: [f64; 2],
    shift: f64,
}

#[derive(Debug, Serialize)]
struct AncillaOutput {
    quantity: &'static str,
    value: f64,
    difference: f64,
}

#[derive(Debug, Serialize)]
struct CoherenceOutput {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherence: Option<Reported>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convex_roof: Option<RoofOutput>,
}

#[derive(Debug, Serialize)]
struct AnalyticOutput {
    quantity: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sdp_difference: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RoofOutput {
    quantity: &'static str,
    value: f64,
    starts: usize,
    converged_starts: usize,
    best_start: usize,
    ensemble_size: usize,
}

#[derive(Debug, Serialize)]
struct SpeedlimitOutput {
    command: &'static str,
    quantity: &'static str,
    omega: f64,
    tau: f64,
    target_index: usize,
    fidelity_at_tau: f64,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &QotError) -> i32 {
    match e {
        QotError::Solver { .. } | QotError::InvalidProblem(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let run = &cli.run;
    match &cli.command {
        Command::Transport {
            rho,
            sigma,
            revised,
            dual,
            ancilla_check,
        } => {
            let solver = run.solver()?;
            let rho = load_density(rho)?;
            let sigma = load_density(sigma)?;
            let revised_needed = *revised || *dual || *ancilla_check;
            let cost = if revised_needed {
                let w = ts_primal(&rho, &sigma, &solver)?;
                Reported {
                    quantity: "revised transport cost T_s(rho, sigma)",
                    value: w.value,
                    gap: Some(w.gap),
                }
            } else {
                let t = transport_cost(&rho, &sigma, &solver)?;
                Reported {
                    quantity: "transport cost T(rho, sigma)",
                    value: t.value,
                    gap: Some(t.gap),
                }
            };
            let dual = if *dual {
                let cert = ts_dual(&rho, &sigma, &solver)?;
                Some(DualOutput {
                    quantity: "dual value of T_s (certified lower bound)",
                    value: cert.value,
                    duality_gap: cost.value - cert.value,
                    lmi_min_eigenvalues: cert.lmi_min_eigenvalues,
                    shift: cert.shift,
                })
            } else {
                None
            };
            let ancilla = if *ancilla_check {
                let value = ts_via_ancilla(&rho, &sigma, &solver)?;
                Some(AncillaOutput {
                    quantity: "transport cost T(rho x I/2, sigma x I/2)",
                    value,
                    difference: (value - cost.value).abs(),
                })
            } else {
                None
            };
            emit(
                out,
                run.output,
                &TransportOutput {
                    command: "transport",
                    cost,
                    dual,
                    ancilla,
                },
            )?;
        }
        Command::Coherence {
            rho,
            pure_analytic,
            convex_roof,
            witness_out,
        } => {
            let rho = load_density(rho)?;
            let pure = as_pure(&rho)?;
            let mut output = CoherenceOutput {
                command: "coherence",
                coherence: None,
                delta: None,
                analytic: None,
                convex_roof: None,
            };
            if *pure_analytic {
                let psi = pure.ok_or(QotError::OutOfRange {
                    name: "rank",
                    value: numerical_rank(rho.matrix(), RANK_TOL)? as f64,
                    expected: "1 (the closed form applies to pure states only)",
                })?;
                output.analytic = Some(AnalyticOutput {
                    quantity: "closed form (1 - max_i |lambda_i|^2)/2",
                    value: tilde_t_pure(&psi),
                    sdp_difference: None,
                });
            } else {
                let solver = run.solver()?;
                let res = tilde_t(&rho, &solver)?;
                if let Some(path) = witness_out {
                    std::fs::write(path, serde_json::to_string_pretty(&res)? + "\n")?;
                }
                output.analytic = pure.map(|psi| {
                    let value = tilde_t_pure(&psi);
                    AnalyticOutput {
                        quantity: "closed form (1 - max_i |lambda_i|^2)/2",
                        value,
                        sdp_difference: Some((res.value - value).abs()),
                    }
                });
                output.delta = Some(res.optimal_delta.populations());
                output.coherence = Some(Reported {
                    quantity: "coherence tilde_T(rho) = min over incoherent delta of T_s(rho, delta)",
                    value: res.value,
                    gap: Some(res.witness.gap),
                });
            }
            if *convex_roof {
                let roof = run.roof()?;
                let res = convex_roof_t(&rho, &roof)?;
                output.convex_roof = Some(RoofOutput {
                    quantity: "convex-roof coherence T(rho)",
                    value: res.value,
                    starts: roof.starts,
                    converged_starts: res.converged_starts,
                    best_start: res.best_start,
                    ensemble_size: res.best.states.len(),
                });
            }
            emit(out, run.output, &output)?;
        }
        Command::Speedlimit { psi } => {
            let psi = load_pure(psi)?;
            let report = tau_to_incoherent(&psi, run.omega)?;
            emit(
                out,
                run.output,
                &SpeedlimitOutput {
                    command: "speedlimit",
                    quantity: "time to the nearest incoherent state, arcsin(sqrt(1 - max_i |lambda_i|^2))/omega",
                    omega: run.omega,
                    tau: report.tau,
                    target_index: report.target_index,
                    fidelity_at_tau: report.fidelity_at_tau,
                },
            )?;
        }
        Command::Verify { suite, trials } => {
            let config = VerifyConfig {
                seed: run.seed,
                trials: *trials,
                solver: run.solver()?,
                roof_starts: run.roof()?.starts,
            };
            let report = run_suite(*suite, &config)?;
            match run.output {
                OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
                OutputFormat::Text => {
                    for check in &report.checks {
                        writeln!(out, "{}", check.text_line())?;
                    }
                    let passed = report.checks.iter().filter(|c| c.passed).count();
                    writeln!(out, "{passed}/{} checks passed", report.checks.len())?;
                }
            }
            if let Some(failed) = report.first_failure() {
                writeln!(err, "first failing check: {}", failed.text_line())?;
                return Ok(EXIT_VERIFY_FAILED);
            }
        }
    }
    Ok(EXIT_OK)
}

fn emit<T: Serialize>(out: &mut dyn Write, format: OutputFormat, value: &T) -> Result<()> {
    match format {
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
        OutputFormat::Text => {
            let v = serde_json::to_value(value)?;
            write_text(out, "", &v)?;
        }
    }
    Ok(())
}

/// Flattens a JSON value into `path: value` lines.
fn write_text(out: &mut dyn Write, prefix: &str, v: &serde_json::Value) -> std::io::Result<()> {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                write_text(out, &key, child)?;
            }
            Ok(())
        }
        serde_json::Value::String(s) => writeln!(out, "{prefix}: {s}"),
        other => writeln!(out, "{prefix}: {other}"),
    }
}

/// Reads a density matrix, or a pure state given by its amplitudes.
pub fn load_density(path: &Path) -> Result<DensityMatrix> {
    let text = std::fs::read_to_string(path)?;
    if is_pure_state_json(&text) {
        Ok(parse_pure_state(&text)?.density())
    } else {
        parse_density(&text, Tolerances::default())
    }
}

/// Reads a pure state, or a rank-one density matrix.
pub fn load_pure(path: &Path) -> Result<PureState> {
    let text = std::fs::read_to_string(path)?;
    if is_pure_state_json(&text) {
        return parse_pure_state(&text);
    }
    let rho = parse_density(&text, Tolerances::default())?;
    as_pure(&rho)?.ok_or(QotError::OutOfRange {
        name: "rank",
        value: numerical_rank(rho.matrix(), RANK_TOL)? as f64,
        expected: "1 (a pure state is required)",
    })
}

fn is_pure_state_json(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .map(|v| v.get("amplitudes").is_some())
        .unwrap_or(false)
}

/// The state vector of a rank-one density matrix.
fn as_pure(rho: &DensityMatrix) -> Result<Option<PureState>> {
    if numerical_rank(rho.matrix(), RANK_TOL)? != 1 {
        return Ok(None);
    }
    let eig = rho.eigen();
    PureState::normalized(eig.vector(0)).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("qot").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn bad_flags_are_input_errors() {
        assert_eq!(run_args(&["verify", "nope"]).0, EXIT_INPUT);
        assert_eq!(run_args(&["--gap-tol", "-1", "verify", "b1"]).0, EXIT_INPUT);
        assert_eq!(run_args(&["--starts", "0", "verify", "b1"]).0, EXIT_INPUT);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_file_is_an_input_error() {
        let (code, _, err) = run_args(&["speedlimit", "/nonexistent/psi.json"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn exit_code_mapping() {
        let solver = QotError::Solver {
            status: crate::sdp::SolverStatus::MaxIterations,
            gap: 1.0,
            primal_residual: 1.0,
        };
        assert_eq!(exit_code(&solver), EXIT_SOLVER);
        assert_eq!(exit_code(&QotError::TraceNotOne { trace: 2.0 }), EXIT_INPUT);
    }

    #[test]
    fn text_flattening() {
        let v = serde_json::json!({"a": {"b": 1.5, "c": "x"}, "d": [1, 2]});
        let mut out = Vec::new();
        write_text(&mut out, "", &v).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a.b: 1.5\na.c: x\nd: [1,2]\n");
    }
}
