//! Acceptance suite: one line per criterion, tolerances pinned below.
//!
//! Exits nonzero when a criterion fails unexpectedly. A criterion whose
//! literal target contradicts its own closed form is reported as `XFAIL`
//! next to the check that is actually attainable.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use meridian_core::convergence::{elliptic_studies, operator_studies};
use meridian_core::diagnostics::{check_gamma_max_principle, compute_constants, scaling_check, RegularityConstants};
use meridian_core::dynamics::{run, RunOutcome, SimConfig, Termination};
use meridian_core::elliptic::{SolverOptions, VelocitySolver};
use meridian_core::grid::MeridianGrid;
use meridian_core::harness::{ensemble, growth_slack, EnsembleMember};
use meridian_core::initdata::{amplitude_for_smallness, DataFamily, FamilyKind};

// reference values from 40-digit evaluations of the closed forms
const C1_REF: f64 = 706.436_703_127_742_914_9;
const C3_REF: f64 = 4.414_213_562_373_095_049;
const CP_REF: f64 = 0.711_762_543_417_177_058_5;
// targets as stated for the constants criterion
const C3_TARGET: f64 = 4.41417;
const CP_TARGET: f64 = 0.71176;
const CONST_TOL: f64 = 1e-5;
const C1_SIG_DIGITS_REL: f64 = 5e-11;

const ORDER_LO: f64 = 1.8;
const ORDER_HI: f64 = 2.2;
const BALANCE_REL: f64 = 1e-12;
const MARGIN_SLACK: f64 = 10.0;
const SHRINK_FACTOR: f64 = 2.8;
const ROUTE_C_BAND: f64 = 0.2;
const SCALING_TOL: f64 = 1e-2;
const ENSEMBLE_SIZE: u64 = 20;
const SMALL_TARGETS: [f64; 3] = [0.05, 0.15, 0.24];

#[derive(Default)]
struct Tally {
    failed: usize,
}

impl Tally {
    fn line(&mut self, id: &str, pass: bool, elapsed: Duration, budget: Duration, detail: String) {
        let ok = pass && elapsed <= budget;
        if !ok {
            self.failed += 1;
        }
        let timing = format!("{:.1}s/{:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64());
        println!("[{}] {id}: {detail} ({timing})", if ok { "PASS" } else { "FAIL" });
    }

    fn xfail(&self, id: &str, detail: String) {
        println!("[XFAIL] {id}: {detail}");
    }
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn constants(t: &mut Tally) {
    let start = Instant::now();
    let c = compute_constants();
    let elapsed = start.elapsed();
    let c3_ok = (c.c3 - C3_REF).abs() <= CONST_TOL;
    let cp_ok = (c.poincare_bound - CP_TARGET).abs() <= CONST_TOL && (c.poincare_bound - CP_REF).abs() <= 1e-15;
    let c1_ok = (c.c1 - C1_REF).abs() <= C1_SIG_DIGITS_REL * C1_REF;
    t.line(
        "1 constants",
        c3_ok && cp_ok && c1_ok,
        elapsed,
        Duration::from_secs(1),
        format!(
            "C1 = {:.12} (ref {C1_REF:.12}), C3 = {:.12} (closed form 3+sqrt2), CP = {:.12}",
            c.c1, c.c3, c.poincare_bound
        ),
    );
    if (c.c3 - C3_TARGET).abs() > CONST_TOL {
        t.xfail(
            "1 constants (literal C3 target)",
            format!(
                "|C3 - {C3_TARGET}| = {:.2e} > {CONST_TOL:.0e}; ((2+3/sqrt2)^2+5/2)^(1/2) = 3+sqrt2 = {:.10}",
                (c.c3 - C3_TARGET).abs(),
                3.0 + 2f64.sqrt()
            ),
        );
    }
}

fn convergence(t: &mut Tally) {
    let start = Instant::now();
    let res = [32, 64, 128];
    let mut studies = operator_studies(&res, 1.0, 1.0).unwrap();
    studies.extend(elliptic_studies(&res, 1.0, 1.0, SolverOptions::default()).unwrap());
    let orders: Vec<f64> = studies.iter().flat_map(|s| s.orders()).collect();
    let lo = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = orders.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = studies
        .iter()
        .min_by(|a, b| a.orders()[0].min(a.orders()[1]).total_cmp(&b.orders()[0].min(b.orders()[1])))
        .unwrap();
    t.line(
        "2 operator convergence",
        studies.iter().all(|s| s.within(ORDER_LO, ORDER_HI)),
        start.elapsed(),
        mins(2),
        format!(
            "{} studies over 32/64/128, orders in [{lo:.3}, {hi:.3}] (need [{ORDER_LO}, {ORDER_HI}]; lowest {})",
            studies.len(),
            worst.name
        ),
    );
}

struct Ensembles {
    coarse: Vec<EnsembleMember>,
    fine: Vec<EnsembleMember>,
    h2_coarse: f64,
    h2_fine: f64,
    elapsed_coarse: Duration,
    elapsed_total: Duration,
}

fn build_ensembles(consts: &RegularityConstants) -> Ensembles {
    let seeds: Vec<u64> = (0..ENSEMBLE_SIZE).collect();
    let start = Instant::now();
    let g1 = MeridianGrid::unit(128, 128).unwrap();
    let coarse = ensemble(&g1, &seeds, &VelocitySolver::new(g1, SolverOptions::default()).unwrap(), consts).unwrap();
    let elapsed_coarse = start.elapsed();
    let g2 = MeridianGrid::unit(256, 256).unwrap();
    let fine = ensemble(&g2, &seeds, &VelocitySolver::new(g2, SolverOptions::default()).unwrap(), consts).unwrap();
    Ensembles {
        coarse,
        fine,
        h2_coarse: g1.h() * g1.h(),
        h2_fine: g2.h() * g2.h(),
        elapsed_coarse,
        elapsed_total: start.elapsed(),
    }
}

fn balance(t: &mut Tally, e: &Ensembles) {
    let worst = e
        .coarse
        .iter()
        .map(|m| m.imbalance / (BALANCE_REL * (1.0 + m.phi_linf)))
        .fold(0.0, f64::max);
    t.line(
        "3 vertical balance",
        worst <= 1.0,
        e.elapsed_coarse,
        mins(1),
        format!(
            "{} states at 128^2, worst max_i|sum_j (v_r/r) dz| = {worst:.2e} x 1e-12(1+||v_r/r||_inf)",
            e.coarse.len()
        ),
    );
}

/// Smallest `margin / (h^2 scale)` per member.
fn normalized(members: &[EnsembleMember], h2: f64, f: impl Fn(&EnsembleMember) -> (f64, f64)) -> Vec<f64> {
    members
        .iter()
        .map(|m| {
            let (margin, scale) = f(m);
            margin / (h2 * scale)
        })
        .collect()
}

fn shrink_ok(coarse: &[EnsembleMember], fine: &[EnsembleMember], f: impl Fn(&EnsembleMember) -> f64) -> (bool, usize) {
    let mut negatives = 0;
    let ok = coarse.iter().zip(fine).all(|(c, fi)| {
        let (a, b) = (f(c), f(fi));
        if a >= 0.0 {
            return true;
        }
        negatives += 1;
        b >= 0.0 || a.abs() / b.abs() >= SHRINK_FACTOR
    });
    (ok, negatives)
}

fn gradient_margins(t: &mut Tally, e: &Ensembles) {
    let lowest = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    let mut min_a = f64::INFINITY;
    let mut min_b = f64::INFINITY;
    for (members, h2) in [(&e.coarse, e.h2_coarse), (&e.fine, e.h2_fine)] {
        min_a = min_a.min(lowest(normalized(members, h2, |m| (m.grad_margin, m.omega_l2))));
        min_b = min_b.min(lowest(normalized(members, h2, |m| (m.hessian_margin, m.dz_omega_l2))));
    }
    let (sa, na) = shrink_ok(&e.coarse, &e.fine, |m| m.grad_margin);
    let (sb, nb) = shrink_ok(&e.coarse, &e.fine, |m| m.hessian_margin);
    let shrink = if na + nb == 0 {
        "no negative excursion at 128^2, shrink requirement vacuous".to_string()
    } else {
        format!("{} negative excursions at 128^2, shrink >= {SHRINK_FACTOR}x at 256^2: {}", na + nb, sa && sb)
    };
    t.line(
        "4 gradient/Hessian margins",
        min_a >= -MARGIN_SLACK && min_b >= -MARGIN_SLACK && sa && sb,
        e.elapsed_total,
        mins(5),
        format!(
            "128^2 and 256^2: min grad margin {min_a:.3e} h^2||Omega||, min Hessian margin {min_b:.3e} h^2||d_z Omega|| (need >= -{MARGIN_SLACK}); {shrink}"
        ),
    );
}

fn agmon(t: &mut Tally, e: &Ensembles) {
    let all: Vec<&EnsembleMember> = e.coarse.iter().chain(&e.fine).collect();
    let ok = all.iter().all(|m| m.agmon.margin >= 0.0);
    let min_slack = all
        .iter()
        .map(|m| m.agmon.margin / (m.agmon.margin + m.phi_linf))
        .fold(f64::INFINITY, f64::min);
    let (rlo, rhi) = all
        .iter()
        .map(|m| m.agmon.ratio)
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
    t.line(
        "5 Agmon margin",
        ok,
        e.elapsed_total,
        mins(5),
        format!(
            "margin >= 0 on all {} states, slack >= {:.3}% of the right side, empirical ratio in [{rlo:.3}, {rhi:.3}]",
            all.len(),
            100.0 * min_slack
        ),
    );
}

fn route_agreement(t: &mut Tally, e: &Ensembles) {
    let c1: Vec<f64> = e.coarse.iter().map(|m| m.route_difference / e.h2_coarse).collect();
    let c2: Vec<f64> = e.fine.iter().map(|m| m.route_difference / e.h2_fine).collect();
    let drift = c1.iter().zip(&c2).map(|(a, b)| (b / a - 1.0).abs()).fold(0.0, f64::max);
    let fit = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    let (f1, f2) = (fit(&c1), fit(&c2));
    let (lo, hi) = c1.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), c| (lo.min(*c), hi.max(*c)));
    t.line(
        "9 route cross-validation",
        drift <= ROUTE_C_BAND && (f2 / f1 - 1.0).abs() <= ROUTE_C_BAND,
        e.elapsed_total,
        mins(5),
        format!(
            "||phi_biot - phi_stream||/||phi_stream|| = C h^2: per-state C drift 128->256 <= {:.2}% (need <= {:.0}%), ensemble C {f1:.4} -> {f2:.4}, states span C in [{lo:.3}, {hi:.3}]",
            100.0 * drift,
            100.0 * ROUTE_C_BAND
        ),
    );
}

struct DynamicRun {
    label: String,
    s0: f64,
    slack: f64,
    gamma_growth: f64,
    energy_growth: f64,
    energy_applicable: bool,
    termination: String,
}

fn library_run(label: &str, family: DataFamily) -> DynamicRun {
    let config = SimConfig {
        family,
        ..SimConfig::default()
    };
    let o: RunOutcome = run(&config, &mut |_| Ok(())).unwrap();
    let g = config.grid().unwrap();
    let s0 = o.records[0].smallness;
    DynamicRun {
        label: label.into(),
        s0,
        slack: growth_slack(&g, o.max_dt),
        gamma_growth: o.step_gamma_growth.worst().max(check_gamma_max_principle(&o.records).unwrap().worst()),
        energy_growth: o.step_energy_growth,
        energy_applicable: s0 <= 0.25,
        termination: o.termination.tag().into(),
    }
}

/// `(check, value, bound, note)` rows.
fn checks_csv(path: &Path) -> Vec<(String, f64, f64, String)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[4].to_string())
        })
        .collect()
}

fn manifest_value(dir: &Path, key: &str) -> String {
    std::fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap()
}

fn meridian(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_meridian"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

/// `meridian verify` on the default configuration.
fn default_verify_run(work: &Path) -> (DynamicRun, bool) {
    let out = meridian(work, &["verify", "--output", "defaults"]);
    let dir = work.join("defaults");
    let checks = checks_csv(&dir.join("checks.csv"));
    let get = |name: &str| checks.iter().find(|c| c.0 == name).unwrap().clone();
    let energy = get("energy_monotone");
    let series = meridian_core::io::read_timeseries(&dir.join("timeseries.csv")).unwrap();
    (
        DynamicRun {
            label: "defaults (verify)".into(),
            s0: series[0].smallness,
            slack: get("gamma_step_growth").2,
            gamma_growth: get("gamma_step_growth").1.max(get("gamma_max_principle").1),
            energy_growth: get("energy_step_growth").1,
            energy_applicable: energy.3 != "not applicable",
            termination: manifest_value(&dir, "termination"),
        },
        out.status.success(),
    )
}

fn dynamic_runs(consts: &RegularityConstants, work: &Path) -> (Vec<DynamicRun>, bool, Duration) {
    let start = Instant::now();
    let grid = SimConfig::default().grid().unwrap();
    let mut runs = Vec::new();
    let diffusion = DataFamily {
        kind: FamilyKind::PolySwirl,
        a: 1.0,
        b: 0.0,
        k: 0,
        ..DataFamily::default()
    };
    runs.push(library_run("swirl diffusion", diffusion));
    for target in SMALL_TARGETS {
        let base = DataFamily::default();
        let alpha = amplitude_for_smallness(&base, &grid, consts, target).unwrap();
        let fam = base.with_amplitudes(alpha * base.a, alpha * base.b);
        runs.push(library_run(&format!("combined S0={target}"), fam));
    }
    let (r, verify_ok) = default_verify_run(work);
    runs.push(r);
    (runs, verify_ok, start.elapsed())
}

fn max_principle(t: &mut Tally, runs: &[DynamicRun], total: Duration) {
    let mut detail = Vec::new();
    let mut ok = true;
    for r in runs {
        let eps = r.slack;
        ok &= r.gamma_growth <= eps && r.termination == Termination::Completed.tag();
        detail.push(format!("{} {:.1e}/{:.1e}", r.label, r.gamma_growth, eps));
    }
    t.line(
        "6 Gamma maximum principle",
        ok,
        total,
        mins(10),
        format!("worst one-step growth vs 10(dt+h^2), 128^2 to T=0.1: {}", detail.join("; ")),
    );
}

fn energy(t: &mut Tally, runs: &[DynamicRun], total: Duration) {
    let small: Vec<&DynamicRun> = runs.iter().filter(|r| r.label.starts_with("combined")).collect();
    let large = runs.iter().find(|r| r.label.starts_with("defaults")).unwrap();
    let mut ok = small.len() == 3 && small.iter().all(|r| r.energy_applicable && r.s0 <= 0.25);
    let mut detail = Vec::new();
    for r in &small {
        let eps = r.slack;
        ok &= r.energy_growth <= eps;
        detail.push(format!("S0={:.3} growth {:.1e}/{:.1e}", r.s0, r.energy_growth, eps));
    }
    let gate = large.s0 > 0.25 && !large.energy_applicable && (large.termination == "completed" || large.termination == "blowup");
    ok &= gate;
    detail.push(format!(
        "S0={:.2} -> {} and {}",
        large.s0,
        if large.energy_applicable { "applied" } else { "not applicable" },
        large.termination
    ));
    t.line(
        "7 energy under smallness",
        ok,
        total,
        mins(10),
        detail.join("; "),
    );
}

fn criticality(t: &mut Tally, consts: &RegularityConstants) {
    let start = Instant::now();
    let g = MeridianGrid::unit(256, 256).unwrap();
    let mut worst_dev = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    let mut ok = true;
    for fam in [
        DataFamily {
            kind: FamilyKind::PolySwirl,
            a: 1.0,
            ..DataFamily::default()
        },
        DataFamily::default(),
    ] {
        let r = scaling_check(&fam, &g, 2.0, consts).unwrap();
        worst_dev = worst_dev.max(r.deviation);
        worst_ratio = worst_ratio.max(r.worst_ratio_error());
        ok &= r.deviation <= SCALING_TOL && r.worst_ratio_error() <= SCALING_TOL;
        if fam.kind == FamilyKind::Combined {
            ok &= !r.omega_sqrt_ratio.is_nan();
        }
    }
    t.line(
        "8 criticality",
        ok,
        start.elapsed(),
        mins(1),
        format!(
            "lambda=2 at 256^2 (poly_swirl, combined): |dS|/S <= {worst_dev:.2e}, norm ratios vs lambda^(-+3/4) within {worst_ratio:.2e} (need {SCALING_TOL:.0e})"
        ),
    );
}

fn determinism(t: &mut Tally, work: &Path) {
    let start = Instant::now();
    std::fs::write(work.join("det.cfg"), "grid.nr = 48\ngrid.nz = 48\ntime.T = 0.02\ninit.family = random_smooth\ninit.seed = 3\ninit.k = 2\ninit.m = 2\n").unwrap();
    let mut codes = Vec::new();
    for out in ["det_a", "det_b"] {
        codes.push(meridian(work, &["verify", "--config", "det.cfg", "--output", out]).status.code());
    }
    let mut identical = true;
    for f in ["timeseries.csv", "checks.csv"] {
        let a = std::fs::read(work.join("det_a").join(f)).unwrap();
        let b = std::fs::read(work.join("det_b").join(f)).unwrap();
        identical &= a == b && !a.is_empty();
    }
    t.line(
        "10 determinism",
        identical && codes[0] == codes[1],
        start.elapsed(),
        mins(1),
        format!("two verify runs (48^2, random_smooth, T=0.02): CSVs byte-identical = {identical}, exit codes {codes:?}"),
    );
}

fn main() {
    // libtest flags (e.g. from `cargo test -- --nocapture`) are ignored
    let work = tempfile::tempdir().unwrap();
    let consts = compute_constants();
    let mut t = Tally::default();
    constants(&mut t);
    convergence(&mut t);
    let e = build_ensembles(&consts);
    balance(&mut t, &e);
    gradient_margins(&mut t, &e);
    agmon(&mut t, &e);
    let (runs, verify_ok, total) = dynamic_runs(&consts, work.path());
    max_principle(&mut t, &runs, total);
    energy(&mut t, &runs, total);
    criticality(&mut t, &consts);
    route_agreement(&mut t, &e);
    determinism(&mut t, work.path());
    if !verify_ok {
        println!("[FAIL] verify on defaults did not exit 0");
        t.failed += 1;
    }
    println!("acceptance: {} unexpected failure(s)", t.failed);
    if t.failed > 0 {
        std::process::exit(1);
    }
}
