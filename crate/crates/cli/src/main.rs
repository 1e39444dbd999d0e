//! `meridian`: run, verify and inspect meridian-plane simulations.
//!
//! Exit codes: 0 success, 1 blow-up, 2 configuration or input error,
//! 3 solver failure, 4 failed check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meridian_core::convergence::{elliptic_studies, operator_studies};
use meridian_core::diagnostics::{compute_constants, scaling_check};
use meridian_core::dynamics::{SimConfig, Termination};
use meridian_core::elliptic::SolverOptions;
use meridian_core::harness::{execute, sweep, verify};
use meridian_core::initdata::{DataFamily, FamilyKind};
use meridian_core::io::read_config;
use meridian_core::{grid::MeridianGrid, Error};

const EXIT_BLOWUP: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "meridian", version, about = "Axisymmetric Navier-Stokes in the meridian plane")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration, writing the time series and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run and evaluate every check; exits 4 if any asserted margin fails.
    Verify {
        /// Defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the regularity constants.
    Constants,
    /// Smallness quantity of a family against its rescaled copy.
    ScalingCheck {
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value = "poly_swirl")]
        family: FamilyKind,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
    },
    /// Manufactured-solution order studies for every operator and both routes.
    Convergence {
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        resolutions: Vec<usize>,
    },
    /// Run a grid of (A, B) amplitudes, one subdirectory per member.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "a", value_delimiter = ',', required = true)]
        a_values: Vec<f64>,
        #[arg(long = "b", value_delimiter = ',', required = true)]
        b_values: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. } | Error::NonFinite(_) => EXIT_BLOWUP,
        Error::Solver { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn load(config: Option<&Path>, output: Option<PathBuf>) -> Result<SimConfig, Error> {
    let mut c = match config {
        Some(p) => read_config(p)?,
        None => SimConfig::default(),
    };
    if let Some(o) = output {
        c.output_dir = o;
    }
    Ok(c)
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Completed => 0,
        Termination::BlowUp => EXIT_BLOWUP,
        Termination::SolverFailure => EXIT_SOLVER,
    }
}

fn dispatch(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Run { config, output } => {
            let c = load(Some(&config), output)?;
            let art = execute(&c, &c.output_dir)?;
            let o = &art.outcome;
            println!(
                "{}: {} steps, t = {}, dt in [{:.3e}, {:.3e}], {} records -> {}",
                o.termination.tag(),
                o.steps,
                o.final_state.t(),
                o.min_dt,
                o.max_dt,
                o.records.len(),
                c.output_dir.display()
            );
            if let Some(e) = &o.failure {
                eprintln!("error: {e}");
            }
            Ok(termination_code(o.termination))
        }
        Command::Verify { config, output } => {
            let c = load(config.as_deref(), output)?;
            let report = verify(&c, &c.output_dir)?;
            for k in &report.checks {
                println!(
                    "{:<20} {} value {:.6e} bound {:.6e}{}",
                    k.name,
                    if k.passed { "PASS" } else { "FAIL" },
                    k.value,
                    k.bound,
                    if k.note.is_empty() { String::new() } else { format!(" ({})", k.note) }
                );
            }
            let o = &report.artifacts.outcome;
            println!("termination {} at t = {}", o.termination.tag(), o.final_state.t());
            if let Some(e) = &o.failure {
                eprintln!("error: {e}");
            }
            Ok(match termination_code(o.termination) {
                0 if !report.passed() => EXIT_CHECK,
                code => code,
            })
        }
        Command::Constants => {
            let c = compute_constants();
            println!("C1 = {:.12}", c.c1);
            println!("C3 = {:.12}", c.c3);
            println!("CP_bound = {:.12}", c.poincare_bound);
            Ok(0)
        }
        Command::ScalingCheck { lambda, family, n, a, b } => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
            }
            let fam = DataFamily {
                kind: family,
                a,
                b,
                ..DataFamily::default()
            };
            let grid = MeridianGrid::unit(n, n)?;
            let r = scaling_check(&fam, &grid, lambda, &compute_constants())?;
            let p = lambda.powf(0.75);
            println!("S = {:.12e}", r.smallness);
            println!("S_lambda = {:.12e}", r.smallness_rescaled);
            println!("deviation = {:.3e}", r.deviation);
            println!("gamma_l4 ratio = {:.12} (expected {:.12})", r.gamma_l4_ratio, 1.0 / p);
            println!("v_l4 ratio = {:.12} (expected {:.12})", r.v_l4_ratio, p);
            if r.omega_sqrt_ratio.is_nan() {
                println!("omega_l2^(1/2) ratio = n/a (zero vorticity)");
            } else {
                println!("omega_l2^(1/2) ratio = {:.12} (expected {:.12})", r.omega_sqrt_ratio, p);
            }
            Ok(if r.deviation <= 1e-2 && r.worst_ratio_error() <= 1e-2 { 0 } else { EXIT_CHECK })
        }
        Command::Convergence { resolutions } => {
            if resolutions.len() < 2 {
                return Err(Error::InvalidArgument("need at least two resolutions".into()));
            }
            let mut ok = true;
            let mut studies = operator_studies(&resolutions, 1.0, 1.0)?;
            studies.extend(elliptic_studies(&resolutions, 1.0, 1.0, SolverOptions::default())?);
            for s in &studies {
                let pass = s.within(1.8, 2.2);
                ok &= pass;
                let orders: Vec<String> = s.orders().iter().map(|o| format!("{o:.3}")).collect();
                println!("{:<26} {} orders [{}]", s.name, if pass { "PASS" } else { "FAIL" }, orders.join(", "));
            }
            Ok(if ok { 0 } else { EXIT_CHECK })
        }
        Command::Sweep {
            config,
            a_values,
            b_values,
            output,
        } => {
            let c = load(config.as_deref(), output)?;
            let rows = sweep(&c, &a_values, &b_values, &c.output_dir)?;
            println!("A,B,initial_smallness,energy_monotone,blowup,t_reached");
            for r in &rows {
                let e = match r.energy_monotone {
                    None => "not_applicable",
                    Some(true) => "yes",
                    Some(false) => "no",
                };
                println!("{},{},{:.6e},{e},{},{}", r.a, r.b, r.initial_smallness, r.blowup, r.t_reached);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
