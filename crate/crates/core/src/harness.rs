//! Run execution with on-disk artifacts, the `verify` check suite, amplitude
//! sweeps, and the random-state ensemble for the static inequalities.
//!
//! Inequalities that hold in the continuum are asserted on the grid with the
//! slack `10 h^2` (static bounds, scaled by the right-hand side norm) or
//! `10 (dt + h^2)` (per-record growth of `Gamma` norms and energy).

use std::path::{Path, PathBuf};

use crate::diagnostics::{
    agmon_for, check_energy_monotone, check_gamma_max_principle, gradient_bounds_for, smallness, vertical_imbalance,
    AgmonCheck, DiagnosticsRecord, EnergyCheck, RegularityConstants,
};
use crate::dynamics::{run, FlowState, RunOutcome, SimConfig, Termination};
use crate::elliptic::VelocitySolver;
use crate::error::{Error, Result};
use crate::grid::{linf_norm, weighted_lp_norm, MeridianGrid, ScalarField};
use crate::initdata::{make_initial, DataFamily, FamilyKind};
use crate::io::{float, wall_clock, RunManifest, TimeseriesWriter};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKS_FILE: &str = "checks.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn version() -> String {
    format!("meridian {}", env!("CARGO_PKG_VERSION"))
}

/// Growth slack `10 (dt + h^2)` for the per-record monotonicity checks.
pub fn growth_slack(grid: &MeridianGrid, dt: f64) -> f64 {
    10.0 * (dt + grid.h() * grid.h())
}

fn termination_of(e: &Error) -> Termination {
    match e {
        Error::BlowUp { .. } | Error::NonFinite(_) => Termination::BlowUp,
        _ => Termination::SolverFailure,
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub outcome: RunOutcome,
    pub manifest: RunManifest,
    pub dir: PathBuf,
}

/// Runs `config`, streaming records to `dir/timeseries.csv`. The manifest is
/// written on every path, including setup failures (which are then returned
/// as `Err`). Failures during stepping end the run and are reported in the
/// outcome.
pub fn execute(config: &SimConfig, dir: &Path) -> Result<RunArtifacts> {
    let started = wall_clock();
    let mut manifest = RunManifest {
        config: config.clone(),
        version: version(),
        started,
        finished: started,
        termination: Termination::SolverFailure.tag().into(),
        steps: 0,
        t_reached: 0.0,
        message: None,
    };
    let result = TimeseriesWriter::create(dir.join(TIMESERIES_FILE)).and_then(|mut w| run(config, &mut |r| w.write(r)));
    manifest.finished = wall_clock();
    let manifest_path = dir.join(MANIFEST_FILE);
    match result {
        Ok(outcome) => {
            manifest.termination = outcome.termination.tag().into();
            manifest.steps = outcome.steps;
            manifest.t_reached = outcome.final_state.t();
            manifest.message = outcome.failure.as_ref().map(|e| e.to_string());
            manifest.write(&manifest_path)?;
            Ok(RunArtifacts {
                outcome,
                manifest,
                dir: dir.to_path_buf(),
            })
        }
        Err(e) => {
            manifest.termination = termination_of(&e).tag().into();
            manifest.message = Some(e.to_string());
            // the run error is the one worth reporting
            let _ = manifest.write(&manifest_path);
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    pub note: String,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, bound: f64) -> Self {
        Self {
            name,
            value,
            bound,
            passed: value <= bound,
            note: String::new(),
        }
    }
    fn at_least(name: &'static str, value: f64, bound: f64) -> Self {
        Self {
            name,
            value,
            bound,
            passed: value >= bound,
            note: String::new(),
        }
    }
}

/// Smallest `margin / (h^2 scale)` over the records; `+inf` if every scale is 0.
fn normalized_min(records: &[DiagnosticsRecord], h2: f64, f: impl Fn(&DiagnosticsRecord) -> (f64, f64)) -> f64 {
    records
        .iter()
        .filter_map(|r| {
            let (margin, scale) = f(r);
            (scale > 0.0).then(|| margin / (h2 * scale))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Evaluates every asserted check on a record history produced on `grid`
/// with largest step `max_dt`.
pub fn evaluate_history(records: &[DiagnosticsRecord], grid: &MeridianGrid, max_dt: f64) -> Result<Vec<CheckResult>> {
    let h2 = grid.h() * grid.h();
    let eps = growth_slack(grid, max_dt);
    let mut out = Vec::new();
    if records.len() >= 2 {
        out.push(CheckResult::at_most(
            "gamma_max_principle",
            check_gamma_max_principle(records)?.worst(),
            eps,
        ));
    }
    out.push(match check_energy_monotone(records)? {
        EnergyCheck::NotApplicable { initial_smallness } => CheckResult {
            name: "energy_monotone",
            value: initial_smallness,
            bound: 0.25,
            passed: true,
            note: "not applicable".into(),
        },
        EnergyCheck::Checked { worst_relative, .. } => CheckResult::at_most("energy_monotone", worst_relative, eps),
    });
    out.push(CheckResult::at_least(
        "gradient_bound",
        normalized_min(records, h2, |r| (r.grad_margin, r.omega_l2)),
        -10.0,
    ));
    out.push(CheckResult::at_least(
        "hessian_bound",
        normalized_min(records, h2, |r| (r.hessian_margin, r.dz_omega_l2)),
        -10.0,
    ));
    let min_of = |f: fn(&DiagnosticsRecord) -> f64| records.iter().map(f).fold(f64::INFINITY, f64::min);
    out.push(CheckResult::at_least("vertical_balance", min_of(|r| r.balance_margin), 0.0));
    out.push(CheckResult::at_least("agmon", min_of(|r| r.agmon_margin), 0.0));
    let finite = records
        .iter()
        .all(|r| r.vr_l4.is_finite() && r.vz_l4.is_finite() && r.vtheta_l4.is_finite());
    out.push(CheckResult {
        name: "velocity_l4_finite",
        value: if finite { 1.0 } else { 0.0 },
        bound: 1.0,
        passed: finite,
        note: String::new(),
    });
    Ok(out)
}

#[derive(Debug)]
pub struct VerifyReport {
    pub artifacts: RunArtifacts,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.artifacts.outcome.termination == Termination::Completed && self.checks.iter().all(|c| c.passed)
    }
}

/// Runs `config` into `dir` and evaluates all checks, also written to
/// `dir/checks.csv`.
pub fn verify(config: &SimConfig, dir: &Path) -> Result<VerifyReport> {
    let artifacts = execute(config, dir)?;
    let grid = config.grid()?;
    let o = &artifacts.outcome;
    let mut checks = evaluate_history(&o.records, &grid, o.max_dt)?;
    let eps = growth_slack(&grid, o.max_dt);
    checks.push(CheckResult::at_most("gamma_step_growth", o.step_gamma_growth.worst(), eps));
    let small = o.records.first().map_or(false, |r| r.smallness <= 0.25);
    checks.push(if small {
        CheckResult::at_most("energy_step_growth", o.step_energy_growth, eps)
    } else {
        CheckResult {
            name: "energy_step_growth",
            value: o.step_energy_growth,
            bound: eps,
            passed: true,
            note: "not applicable".into(),
        }
    });
    let mut csv = String::from("check,value,bound,passed,note\n");
    for c in &checks {
        csv.push_str(&format!("{},{},{},{},{}\n", c.name, float(c.value), float(c.bound), c.passed, c.note));
    }
    let path = dir.join(CHECKS_FILE);
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(VerifyReport { artifacts, checks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub a: f64,
    pub b: f64,
    pub initial_smallness: f64,
    /// `None` when the initial smallness exceeds `1/4`.
    pub energy_monotone: Option<bool>,
    pub blowup: bool,
    pub t_reached: f64,
}

/// Runs `base` at every `(A, B)` pair, each member in its own subdirectory
/// `dir/member_<k>`, and writes the summary table to `dir/sweep.csv`.
pub fn sweep(base: &SimConfig, a_values: &[f64], b_values: &[f64], dir: &Path) -> Result<Vec<SweepRow>> {
    let grid = base.grid()?;
    let consts = RegularityConstants::compute();
    let mut rows = Vec::new();
    for &a in a_values {
        for &b in b_values {
            let mut cfg = base.clone();
            cfg.family = cfg.family.with_amplitudes(a, b);
            let member = dir.join(format!("member_{}", rows.len()));
            cfg.output_dir = member.clone();
            let s0 = smallness(&make_initial(&cfg.family, &grid)?.refreshed(&VelocitySolver::new(grid, cfg.solver)?)?, &consts)?;
            let art = execute(&cfg, &member)?;
            let o = &art.outcome;
            let eps = growth_slack(&grid, o.max_dt);
            let energy_monotone = match check_energy_monotone(&o.records)? {
                EnergyCheck::NotApplicable { .. } => None,
                EnergyCheck::Checked { worst_relative, .. } => Some(worst_relative <= eps),
            };
            rows.push(SweepRow {
                a,
                b,
                initial_smallness: s0,
                energy_monotone,
                blowup: o.termination == Termination::BlowUp,
                t_reached: o.final_state.t(),
            });
        }
    }
    let mut csv = String::from("A,B,initial_smallness,energy_monotone,blowup,t_reached\n");
    for r in &rows {
        let e = match r.energy_monotone {
            None => "not_applicable",
            Some(true) => "yes",
            Some(false) => "no",
        };
        csv.push_str(&format!(
            "{},{},{},{e},{},{}\n",
            float(r.a),
            float(r.b),
            float(r.initial_smallness),
            r.blowup,
            float(r.t_reached)
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SWEEP_FILE);
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Random boundary-compatible vorticity with no swirl: the ensemble family.
pub fn ensemble_family(seed: u64) -> DataFamily {
    DataFamily {
        kind: FamilyKind::RandomSmooth,
        a: 0.0,
        b: 1.0,
        k: 1,
        m: 4,
        seed,
    }
}

/// Static checks on one random state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub seed: u64,
    /// `max_i |sum_j (v_r/r) dz|`, stream route.
    pub imbalance: f64,
    pub phi_linf: f64,
    pub grad_margin: f64,
    pub hessian_margin: f64,
    pub omega_l2: f64,
    pub dz_omega_l2: f64,
    pub agmon: AgmonCheck,
    /// `||phi_biot - phi_stream||_2 / ||phi_stream||_2`
    pub route_difference: f64,
}

pub fn ensemble_member(state: &FlowState, solver: &VelocitySolver, consts: &RegularityConstants, seed: u64) -> Result<EnsembleMember> {
    let phi = &state.derived()?.vr_over_r;
    let b = gradient_bounds_for(phi, state.omega(), consts)?;
    let biot = solver.solve_vr_over_r(state.omega())?;
    let mut diff = ScalarField::derived(*phi.grid());
    diff.set_interior((&biot.interior() - &phi.interior()).view())?;
    let base = weighted_lp_norm(phi, 2.0)?;
    Ok(EnsembleMember {
        seed,
        imbalance: vertical_imbalance(phi)?,
        phi_linf: linf_norm(phi)?,
        grad_margin: b.grad_margin,
        hessian_margin: b.hessian_margin,
        omega_l2: b.omega_l2,
        dz_omega_l2: b.dz_omega_l2,
        agmon: agmon_for(phi, consts)?,
        route_difference: if base > 0.0 { weighted_lp_norm(&diff, 2.0)? / base } else { 0.0 },
    })
}

/// Builds and checks the ensemble states for `seeds` on `grid`.
pub fn ensemble(grid: &MeridianGrid, seeds: &[u64], solver: &VelocitySolver, consts: &RegularityConstants) -> Result<Vec<EnsembleMember>> {
    seeds
        .iter()
        .map(|&seed| {
            let s = make_initial(&ensemble_family(seed), grid)?.refreshed(solver)?;
            ensemble_member(&s, solver, consts, seed)
        })
        .collect()
}
