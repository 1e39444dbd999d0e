//! Time evolution of `(Gamma, Omega)` with unit viscosity and no forcing:
//!
//! ```text
//! d_t Gamma = lap Gamma - b.grad Gamma - (2/r) d_r Gamma
//! d_t Omega = lap Omega + (2/r) d_r Omega - b.grad Omega + d_z(Gamma^2) / r^4
//! ```
//!
//! with `b = (v_r, v_z)` rebuilt from `Omega` through the stream function at
//! every Runge-Kutta stage.

use std::path::PathBuf;

use crate::diagnostics::{DiagnosticsRecord, GrowthReport, Monitor, RegularityConstants};
use crate::elliptic::{omega_boundaries, velocity_from_stream, vr_over_r_boundaries, SolverOptions, VelocitySolver};
use crate::error::{Error, Result};
use crate::grid::{linf_norm, weighted_lp_norm, AxisParity, Boundaries, BoundaryCondition, MeridianGrid, ScalarField};
use crate::initdata::{make_initial, DataFamily};
use crate::operators::{advect, d_r, d_z, l_omega, laplacian_cyl, MeridianVector};

/// `Gamma = O(r^2)` at the axis (zero at the axis face), flat at the wall and lids.
pub fn gamma_boundaries() -> Boundaries {
    Boundaries::radial_axial(
        BoundaryCondition::Dirichlet(0.0),
        BoundaryCondition::Neumann(0.0),
        BoundaryCondition::Neumann(0.0),
    )
}

/// Fields reconstructed from the prognostic pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFields {
    pub psi: ScalarField,
    pub velocity: MeridianVector,
    /// `v_r / r` from the stream route, ghosts filled.
    pub vr_over_r: ScalarField,
    /// `v_theta = Gamma / r`
    pub v_theta: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    t: f64,
    gamma: ScalarField,
    omega: ScalarField,
    derived: Option<DerivedFields>,
}

impl FlowState {
    /// Takes interior values of `gamma` and `omega`, applies the flow's
    /// boundary conditions and fills the ghosts.
    pub fn new(t: f64, gamma: ScalarField, omega: ScalarField) -> Result<Self> {
        gamma.grid().same_as(omega.grid())?;
        let gamma = gamma.with_boundaries(AxisParity::Even, gamma_boundaries()).filled()?;
        let omega = omega.with_boundaries(AxisParity::Even, omega_boundaries()).filled()?;
        Ok(Self {
            t,
            gamma,
            omega,
            derived: None,
        })
    }

    pub fn zero(grid: MeridianGrid) -> Result<Self> {
        Self::new(0.0, ScalarField::derived(grid), ScalarField::derived(grid))
    }

    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn grid(&self) -> &MeridianGrid {
        self.gamma.grid()
    }
    pub fn gamma(&self) -> &ScalarField {
        &self.gamma
    }
    pub fn omega(&self) -> &ScalarField {
        &self.omega
    }

    pub fn is_fresh(&self) -> bool {
        self.derived.is_some()
    }

    pub fn derived(&self) -> Result<&DerivedFields> {
        self.derived.as_ref().ok_or(Error::StaleCache)
    }

    pub fn velocity(&self) -> Result<&MeridianVector> {
        Ok(&self.derived()?.velocity)
    }

    /// Rebuilds stream function, velocity, `v_r / r` and `v_theta`.
    pub fn refresh(&mut self, solver: &VelocitySolver) -> Result<()> {
        let psi = solver.solve_stream(&self.omega)?;
        let velocity = velocity_from_stream(&psi)?;
        let mut vr_over_r = velocity
            .r
            .map_interior(|v, r, _| v / r)
            .with_boundaries(AxisParity::Even, vr_over_r_boundaries());
        vr_over_r.fill_ghosts()?;
        let v_theta = self.gamma.map_interior(|g, r, _| g / r);
        self.derived = Some(DerivedFields {
            psi,
            velocity,
            vr_over_r,
            v_theta,
        });
        Ok(())
    }

    pub fn refreshed(mut self, solver: &VelocitySolver) -> Result<Self> {
        self.refresh(solver)?;
        Ok(self)
    }

    /// `V = v_theta / sqrt(r) = Gamma / r^(3/2)`, interior only.
    pub fn swirl_v(&self) -> Result<ScalarField> {
        Ok(self.gamma.map_interior(|g, r, _| g / (r * r.sqrt())))
    }
}

/// `lap Gamma - b.grad Gamma - (2/r) d_r Gamma`.
pub fn rhs_gamma(s: &FlowState) -> Result<ScalarField> {
    let b = s.velocity()?;
    let lap = laplacian_cyl(&s.gamma)?;
    let adv = advect(b, &s.gamma)?;
    let dr = d_r(&s.gamma)?;
    let g = *s.grid();
    let mut out = ScalarField::derived(g);
    let (l, a, d) = (lap.raw(), adv.raw(), dr.raw());
    let dst = out.raw_mut();
    for i in 0..g.nr() {
        let two_over_r = 2.0 / g.r(i as isize);
        for j in 0..g.nz() {
            let k = g.flat(i, j);
            dst[k] = l[k] - a[k] - two_over_r * d[k];
        }
    }
    Ok(out)
}

/// `L_omega Omega - b.grad Omega + d_z(Gamma^2) / r^4`.
pub fn rhs_omega(s: &FlowState) -> Result<ScalarField> {
    let b = s.velocity()?;
    let lo = l_omega(&s.omega)?;
    let adv = advect(b, &s.omega)?;
    let mut g2 = s.gamma.clone();
    g2.raw_mut().iter_mut().for_each(|v| *v *= *v);
    g2.mark_filled();
    let src = d_z(&g2)?;
    let g = *s.grid();
    let mut out = ScalarField::derived(g);
    let (l, a, q) = (lo.raw(), adv.raw(), src.raw());
    let dst = out.raw_mut();
    for i in 0..g.nr() {
        let r = g.r(i as isize);
        let inv_r4 = 1.0 / (r * r * r * r);
        for j in 0..g.nz() {
            let k = g.flat(i, j);
            dst[k] = l[k] - a[k] + q[k] * inv_r4;
        }
    }
    Ok(out)
}

/// Largest step allowed by the explicit scheme.
///
/// Diffusive part: `dr^2 dz^2 / (2 (dr^2 + dz^2)) / nu_eff` where
/// `nu_eff = 1 + dz^2/(dr^2 + dz^2)` accounts for the axis row of `L_omega`,
/// whose Gershgorin radius is `8/dr^2 + 4/dz^2` instead of `4/dr^2 + 4/dz^2`.
/// The `(2/r) d_r` drift adds `dr r_min / 2`; advection adds `dr/max|v_r|` and
/// `dz/max|v_z|`. The minimum is scaled by `cfl`.
pub fn stable_dt(s: &FlowState, cfl: f64) -> Result<f64> {
    let g = s.grid();
    let (dr2, dz2) = (g.dr() * g.dr(), g.dz() * g.dz());
    let nu_eff = 1.0 + dz2 / (dr2 + dz2);
    let mut dt = dr2 * dz2 / (2.0 * (dr2 + dz2)) / nu_eff;
    dt = dt.min(g.dr() * g.r(0) / 2.0);
    let (vr, vz) = s.velocity()?.max_abs();
    if vr > 0.0 {
        dt = dt.min(g.dr() / vr);
    }
    if vz > 0.0 {
        dt = dt.min(g.dz() / vz);
    }
    Ok(cfl * dt)
}

fn combine(terms: &[(f64, &ScalarField)]) -> ScalarField {
    let g = *terms[0].1.grid();
    let mut out = ScalarField::derived(g);
    let srcs: Vec<(f64, &[f64])> = terms.iter().map(|(c, f)| (*c, f.raw())).collect();
    let dst = out.raw_mut();
    for i in 0..g.nr() {
        let row = g.flat(i, 0);
        for k in row..row + g.nz() {
            let mut acc = 0.0;
            for (c, f) in &srcs {
                acc += c * f[k];
            }
            dst[k] = acc;
        }
    }
    out
}

fn check_finite(f: &ScalarField, t: f64, name: &str) -> Result<()> {
    f.require_finite().map_err(|_| Error::BlowUp {
        t,
        field: name.to_string(),
    })
}

/// One SSP-RK3 step (Shu-Osher form). `s` must be fresh; the result is fresh.
pub fn step(s: &FlowState, dt: f64, solver: &VelocitySolver) -> Result<FlowState> {
    s.derived()?;
    if dt == 0.0 {
        return Ok(s.clone());
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let t0 = s.t;
    let stage = |t: f64, gamma: ScalarField, omega: ScalarField| -> Result<FlowState> {
        check_finite(&gamma, t, "Gamma")?;
        check_finite(&omega, t, "Omega")?;
        FlowState::new(t, gamma, omega)?.refreshed(solver)
    };
    let tendencies = |u: &FlowState| -> Result<(ScalarField, ScalarField)> {
        let lg = rhs_gamma(u)?;
        let lo = rhs_omega(u)?;
        check_finite(&lg, u.t, "Gamma tendency")?;
        check_finite(&lo, u.t, "Omega tendency")?;
        Ok((lg, lo))
    };

    let (lg, lo) = tendencies(s)?;
    let u1 = stage(
        t0 + dt,
        combine(&[(1.0, &s.gamma), (dt, &lg)]),
        combine(&[(1.0, &s.omega), (dt, &lo)]),
    )?;
    let (lg, lo) = tendencies(&u1)?;
    let u2 = stage(
        t0 + 0.5 * dt,
        combine(&[(0.75, &s.gamma), (0.25, &u1.gamma), (0.25 * dt, &lg)]),
        combine(&[(0.75, &s.omega), (0.25, &u1.omega), (0.25 * dt, &lo)]),
    )?;
    let (lg, lo) = tendencies(&u2)?;
    let (a, b) = (1.0 / 3.0, 2.0 / 3.0);
    stage(
        t0 + dt,
        combine(&[(a, &s.gamma), (b, &u2.gamma), (b * dt, &lg)]),
        combine(&[(a, &s.omega), (b, &u2.omega), (b * dt, &lo)]),
    )
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nr: usize,
    pub nz: usize,
    pub radius: f64,
    pub height: f64,
    pub t_end: f64,
    pub cfl: f64,
    /// Fixed step; the adaptive bound is used when absent.
    pub dt: Option<f64>,
    pub family: DataFamily,
    /// Steps between emitted records.
    pub cadence: usize,
    pub solver: SolverOptions,
    pub output_dir: PathBuf,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            nr: 128,
            nz: 128,
            radius: 1.0,
            height: 1.0,
            t_end: 0.1,
            cfl: 0.4,
            dt: None,
            family: DataFamily::default(),
            cadence: 10,
            solver: SolverOptions::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<MeridianGrid> {
        MeridianGrid::new(self.nr, self.nz, self.radius, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl must be in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("end time must be finite and >= 0, got {}", self.t_end)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed dt must be positive, got {dt}")));
            }
        }
        if self.cadence == 0 {
            return Err(Error::InvalidArgument("diagnostics cadence must be >= 1".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        self.family.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    BlowUp,
    SolverFailure,
}

impl Termination {
    pub fn tag(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::BlowUp => "blowup",
            Termination::SolverFailure => "solver_failure",
        }
    }
}

/// What a run produced, including the failure if it stopped early.
#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    /// Last state that passed every stage (the dump on failure).
    pub final_state: FlowState,
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    pub termination: Termination,
    pub failure: Option<Error>,
    /// First time with `||Omega||_2^(1/2) > 2 ||Omega_0||_2^(1/2)`, if any.
    pub omega_doubling_time: Option<f64>,
    /// Worst relative growth of `||Gamma||_2`, `||Gamma||_4`, `||Gamma||_inf`
    /// over a single step, tracked at every step regardless of the cadence.
    pub step_gamma_growth: GrowthReport,
    /// Worst relative energy growth over a single step.
    pub step_energy_growth: f64,
}

/// `[||Gamma||_2, ||Gamma||_4, ||Gamma||_inf, E]` of a state.
fn step_norms(s: &FlowState) -> Result<[f64; 4]> {
    let v4 = weighted_lp_norm(&s.swirl_v()?, 4.0)?;
    let om = weighted_lp_norm(s.omega(), 2.0)?;
    Ok([
        weighted_lp_norm(s.gamma(), 2.0)?,
        weighted_lp_norm(s.gamma(), 4.0)?,
        linf_norm(s.gamma())?,
        0.25 * v4.powi(4) + 0.5 * om * om,
    ])
}

fn relative_growth(before: f64, after: f64) -> f64 {
    if before > 0.0 {
        (after - before) / before
    } else if after > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

impl RunOutcome {
    pub fn into_result(self) -> Result<RunOutcome> {
        match self.failure {
            None => Ok(self),
            Some(e) => Err(e),
        }
    }
}

/// Integrates `config` from its initial family to `t_end`.
///
/// Records are emitted at `t = 0`, after every `cadence`-th step and after the
/// final step; each goes to `sink` as soon as it exists. Step failures end the
/// run with the last good state and the error in the outcome; only setup
/// problems return `Err`.
pub fn run(config: &SimConfig, sink: &mut dyn FnMut(&DiagnosticsRecord) -> Result<()>) -> Result<RunOutcome> {
    config.validate()?;
    let grid = config.grid()?;
    let solver = VelocitySolver::new(grid, config.solver)?;
    let consts = RegularityConstants::compute();
    let state = make_initial(&config.family, &grid)?.refreshed(&solver)?;
    run_from(state, config, &solver, &consts, sink)
}

/// Same as [`run`] but starting from a given fresh state.
pub fn run_from(
    mut state: FlowState,
    config: &SimConfig,
    solver: &VelocitySolver,
    consts: &RegularityConstants,
    sink: &mut dyn FnMut(&DiagnosticsRecord) -> Result<()>,
) -> Result<RunOutcome> {
    state.derived()?;
    let monitor = Monitor::new(*consts, &state)?;
    let mut records = Vec::new();
    let first = monitor.record(&state)?;
    let omega0_sqrt = first.omega_l2.sqrt();
    sink(&first)?;
    records.push(first);

    let t_end = config.t_end;
    let (mut steps, mut min_dt, mut max_dt) = (0usize, f64::INFINITY, 0.0_f64);
    let mut doubling = None;
    let mut failure = None;
    let mut growth = [0.0_f64; 4];
    let mut prev = step_norms(&state)?;
    while state.t < t_end {
        let bound = match stable_dt(&state, config.cfl) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let mut dt = config.dt.unwrap_or(bound);
        // stretch by at most 1e-6 dt so accumulated rounding never leaves a sliver step
        let last = t_end - state.t <= dt * (1.0 + 1e-6);
        if last {
            dt = t_end - state.t;
        }
        match step(&state, dt, solver) {
            Ok(mut next) => {
                if last {
                    next.t = t_end;
                }
                state = next;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        match step_norms(&state) {
            Ok(now) => {
                for k in 0..4 {
                    growth[k] = growth[k].max(relative_growth(prev[k], now[k]));
                }
                prev = now;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        steps += 1;
        min_dt = min_dt.min(dt);
        max_dt = max_dt.max(dt);
        if steps % config.cadence == 0 || last {
            let rec = match monitor.record(&state) {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            if doubling.is_none() && rec.omega_l2.sqrt() > 2.0 * omega0_sqrt {
                doubling = Some(rec.t);
            }
            sink(&rec)?;
            records.push(rec);
        }
    }
    let termination = match &failure {
        None => Termination::Completed,
        Some(Error::BlowUp { .. }) | Some(Error::NonFinite(_)) => Termination::BlowUp,
        Some(_) => Termination::SolverFailure,
    };
    Ok(RunOutcome {
        records,
        final_state: state,
        steps,
        min_dt: if steps == 0 { 0.0 } else { min_dt },
        max_dt,
        termination,
        failure,
        omega_doubling_time: doubling,
        step_gamma_growth: GrowthReport {
            l2: growth[0],
            l4: growth[1],
            linf: growth[2],
        },
        step_energy_growth: growth[3],
    })
}
