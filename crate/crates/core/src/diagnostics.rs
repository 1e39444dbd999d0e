//! Norms, energy, the smallness quantity and the margins of the a-priori
//! estimates, evaluated on discrete states.
//!
//! Every margin is `rhs - lhs` of the inequality it monitors, so it is
//! non-negative when the inequality holds:
//!
//! * `grad_margin`: `||Omega||_2 - ||grad(v_r/r)||_2`
//! * `hessian_margin`: `C3 ||d_z Omega||_2 - ||Hess(v_r/r)||_2`
//! * `gamma_margin`: `min_p (||Gamma_0||_p - ||Gamma||_p)`, `p in {2, 4, inf}`
//! * `balance_margin`: `1e-12 (1 + ||v_r/r||_inf) - max_i |sum_j (v_r/r) dz|`
//! * `agmon_margin`: `C1 ||grad(v_r/r)||^(1/2) ||Hess(v_r/r)||^(1/2) - ||v_r/r||_inf`
//!
//! All L2/L4 norms use the quadrature `r dr dz` without the `2 pi` factor,
//! which cancels from every inequality.

use std::f64::consts::PI;

use crate::dynamics::FlowState;
use crate::error::{Error, Result};
use crate::grid::{linf_norm, pairwise_sum, weighted_lp_norm, MeridianGrid, ScalarField};
use crate::initdata::{make_initial, rescaled, DataFamily};
use crate::operators::{d_z, grad_meridian, hessian_vr_over_r};

/// Constants of the global regularity criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants {
    /// Agmon-type constant on the cylinder.
    pub c1: f64,
    /// Hessian bound constant `((2 + 3/sqrt 2)^2 + 5/2)^(1/2)`.
    pub c3: f64,
    /// Upper bound `sqrt(5)/pi` for the Poincare constant of the cylinder.
    pub poincare_bound: f64,
}

impl RegularityConstants {
    pub fn compute() -> Self {
        compute_constants()
    }
}

/// The `(1+sqrt 2) 2 sqrt(pi)` factor of `C1`.
pub fn c1_prefactor() -> f64 {
    (1.0 + 2f64.sqrt()) * 2.0 * PI.sqrt()
}

/// The extension factor `536^(1/4) (57452 (1 + 5/pi^2) + 60)^(1/4)` of `C1`.
pub fn c1_extension_factor() -> f64 {
    536f64.powf(0.25) * (57452.0 * (1.0 + 5.0 / (PI * PI)) + 60.0).powf(0.25)
}

pub fn compute_constants() -> RegularityConstants {
    let s2 = 2f64.sqrt();
    let a = 2.0 + 3.0 / s2;
    RegularityConstants {
        c1: c1_prefactor() * c1_extension_factor(),
        c3: (a * a + 2.5).sqrt(),
        poincare_bound: 5f64.sqrt() / PI,
    }
}

/// `9 C1 C3^(1/2) / 4`.
pub fn smallness_prefactor(c: &RegularityConstants) -> f64 {
    9.0 * c.c1 * c.c3.sqrt() / 4.0
}

/// `(9 C1 C3^(1/2)/4) (||V||_4^4 / 2 + ||Omega||_2^2)^(1/4) ||Gamma||_4`.
/// Global regularity is guaranteed when this is at most `1/4`.
pub fn smallness(s: &FlowState, consts: &RegularityConstants) -> Result<f64> {
    let v4 = weighted_lp_norm(&s.swirl_v()?, 4.0)?;
    let om = weighted_lp_norm(s.omega(), 2.0)?;
    let g4 = weighted_lp_norm(s.gamma(), 4.0)?;
    Ok(smallness_from_norms(consts, v4, om, g4))
}

fn smallness_from_norms(consts: &RegularityConstants, v4: f64, om: f64, g4: f64) -> f64 {
    smallness_prefactor(consts) * (0.5 * v4.powi(4) + om * om).powf(0.25) * g4
}

/// Margins of the gradient and Hessian bounds for `v_r / r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientBounds {
    pub grad_margin: f64,
    pub hessian_margin: f64,
    pub grad_l2: f64,
    pub hessian_l2: f64,
    pub omega_l2: f64,
    pub dz_omega_l2: f64,
}

/// Gradient and Hessian bounds for a given `phi = v_r / r` (ghosts filled).
pub fn gradient_bounds_for(phi: &ScalarField, omega: &ScalarField, consts: &RegularityConstants) -> Result<GradientBounds> {
    let grad_l2 = grad_meridian(phi)?.l2_norm()?;
    let hessian_l2 = hessian_vr_over_r(phi)?.frobenius_l2()?;
    let omega_l2 = weighted_lp_norm(omega, 2.0)?;
    let dz_omega_l2 = weighted_lp_norm(&d_z(omega)?, 2.0)?;
    Ok(GradientBounds {
        grad_margin: omega_l2 - grad_l2,
        hessian_margin: consts.c3 * dz_omega_l2 - hessian_l2,
        grad_l2,
        hessian_l2,
        omega_l2,
        dz_omega_l2,
    })
}

/// Gradient/Hessian bounds with `v_r / r` from the stream route.
pub fn check_gradient_bounds(s: &FlowState, consts: &RegularityConstants) -> Result<GradientBounds> {
    gradient_bounds_for(&s.derived()?.vr_over_r, s.omega(), consts)
}

/// `max_i |sum_j phi_ij dz|`: the vertical mean of `v_r / r` vanishes on every
/// cylinder `r = const`.
pub fn vertical_imbalance(phi: &ScalarField) -> Result<f64> {
    phi.require_finite()?;
    let g = *phi.grid();
    let mut worst = 0.0_f64;
    let mut col = vec![0.0; g.nz()];
    for i in 0..g.nr() {
        for (j, c) in col.iter_mut().enumerate() {
            *c = phi.at(i as isize, j as isize) * g.dz();
        }
        worst = worst.max(pairwise_sum(&col).abs());
    }
    Ok(worst)
}

/// Balance margin `1e-12 (1 + ||phi||_inf) - vertical_imbalance(phi)` on the
/// stream-route `v_r / r`.
pub fn check_vertical_balance(s: &FlowState) -> Result<f64> {
    let phi = &s.derived()?.vr_over_r;
    Ok(1e-12 * (1.0 + linf_norm(phi)?) - vertical_imbalance(phi)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgmonCheck {
    /// `+inf` when `v_r / r` vanishes identically.
    pub margin: f64,
    /// `||phi||_inf / (||grad phi||^(1/2) ||Hess phi||^(1/2))`, 0 for `phi = 0`.
    pub ratio: f64,
}

pub fn agmon_for(phi: &ScalarField, consts: &RegularityConstants) -> Result<AgmonCheck> {
    let sup = linf_norm(phi)?;
    let grad = grad_meridian(phi)?.l2_norm()?;
    let hess = hessian_vr_over_r(phi)?.frobenius_l2()?;
    let den = (grad * hess).sqrt();
    if den == 0.0 {
        return Ok(AgmonCheck {
            margin: f64::INFINITY,
            ratio: 0.0,
        });
    }
    Ok(AgmonCheck {
        margin: consts.c1 * den - sup,
        ratio: sup / den,
    })
}

pub fn check_agmon(s: &FlowState, consts: &RegularityConstants) -> Result<AgmonCheck> {
    agmon_for(&s.derived()?.vr_over_r, consts)
}

/// One row of the time series. Column order is [`DiagnosticsRecord::COLUMNS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub gamma_l2: f64,
    pub gamma_l4: f64,
    pub gamma_linf: f64,
    pub omega_l2: f64,
    pub dz_omega_l2: f64,
    pub v_l4: f64,
    pub v2_over_r_l2: f64,
    /// `||V^2||_2^2 / 4 + ||Omega||_2^2 / 2`
    pub energy: f64,
    pub smallness: f64,
    pub grad_margin: f64,
    pub hessian_margin: f64,
    pub gamma_margin: f64,
    pub balance_margin: f64,
    pub agmon_margin: f64,
    pub agmon_ratio: f64,
    pub vr_l4: f64,
    pub vz_l4: f64,
    pub vtheta_l4: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 19] = [
        "t",
        "gamma_l2",
        "gamma_l4",
        "gamma_linf",
        "omega_l2",
        "dz_omega_l2",
        "v_l4",
        "v2_over_r_l2",
        "energy",
        "smallness",
        "grad_margin",
        "hessian_margin",
        "gamma_margin",
        "balance_margin",
        "agmon_margin",
        "agmon_ratio",
        "vr_l4",
        "vz_l4",
        "vtheta_l4",
    ];

    pub fn values(&self) -> [f64; 19] {
        [
            self.t,
            self.gamma_l2,
            self.gamma_l4,
            self.gamma_linf,
            self.omega_l2,
            self.dz_omega_l2,
            self.v_l4,
            self.v2_over_r_l2,
            self.energy,
            self.smallness,
            self.grad_margin,
            self.hessian_margin,
            self.gamma_margin,
            self.balance_margin,
            self.agmon_margin,
            self.agmon_ratio,
            self.vr_l4,
            self.vz_l4,
            self.vtheta_l4,
        ]
    }

    pub fn from_values(v: [f64; 19]) -> Self {
        Self {
            t: v[0],
            gamma_l2: v[1],
            gamma_l4: v[2],
            gamma_linf: v[3],
            omega_l2: v[4],
            dz_omega_l2: v[5],
            v_l4: v[6],
            v2_over_r_l2: v[7],
            energy: v[8],
            smallness: v[9],
            grad_margin: v[10],
            hessian_margin: v[11],
            gamma_margin: v[12],
            balance_margin: v[13],
            agmon_margin: v[14],
            agmon_ratio: v[15],
            vr_l4: v[16],
            vz_l4: v[17],
            vtheta_l4: v[18],
        }
    }

    pub fn gamma_norms(&self) -> [f64; 3] {
        [self.gamma_l2, self.gamma_l4, self.gamma_linf]
    }
}

/// Record builder holding the constants and the initial swirl norms.
#[derive(Debug, Clone, Copy)]
pub struct Monitor {
    consts: RegularityConstants,
    gamma0: [f64; 3],
}

impl Monitor {
    pub fn new(consts: RegularityConstants, initial: &FlowState) -> Result<Self> {
        Ok(Self {
            consts,
            gamma0: gamma_norms(initial.gamma())?,
        })
    }

    pub fn constants(&self) -> &RegularityConstants {
        &self.consts
    }

    pub fn record(&self, s: &FlowState) -> Result<DiagnosticsRecord> {
        let d = s.derived()?;
        let gamma = gamma_norms(s.gamma())?;
        let v = s.swirl_v()?;
        let v_l4 = weighted_lp_norm(&v, 4.0)?;
        let v2_over_r = v.map_interior(|x, r, _| x * x / r);
        let bounds = check_gradient_bounds(s, &self.consts)?;
        let agmon = check_agmon(s, &self.consts)?;
        let gamma_margin = (0..3).map(|k| self.gamma0[k] - gamma[k]).fold(f64::INFINITY, f64::min);
        Ok(DiagnosticsRecord {
            t: s.t(),
            gamma_l2: gamma[0],
            gamma_l4: gamma[1],
            gamma_linf: gamma[2],
            omega_l2: bounds.omega_l2,
            dz_omega_l2: bounds.dz_omega_l2,
            v_l4,
            v2_over_r_l2: weighted_lp_norm(&v2_over_r, 2.0)?,
            energy: 0.25 * v_l4.powi(4) + 0.5 * bounds.omega_l2 * bounds.omega_l2,
            smallness: smallness_from_norms(&self.consts, v_l4, bounds.omega_l2, gamma[1]),
            grad_margin: bounds.grad_margin,
            hessian_margin: bounds.hessian_margin,
            gamma_margin,
            balance_margin: check_vertical_balance(s)?,
            agmon_margin: agmon.margin,
            agmon_ratio: agmon.ratio,
            vr_l4: weighted_lp_norm(&d.velocity.r, 4.0)?,
            vz_l4: weighted_lp_norm(&d.velocity.z, 4.0)?,
            vtheta_l4: weighted_lp_norm(&d.v_theta, 4.0)?,
        })
    }
}

fn gamma_norms(g: &ScalarField) -> Result<[f64; 3]> {
    Ok([weighted_lp_norm(g, 2.0)?, weighted_lp_norm(g, 4.0)?, linf_norm(g)?])
}

/// Worst relative growth of `||Gamma||_2`, `||Gamma||_4`, `||Gamma||_inf`
/// between consecutive records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub l2: f64,
    pub l4: f64,
    pub linf: f64,
}

impl GrowthReport {
    pub fn worst(&self) -> f64 {
        self.l2.max(self.l4).max(self.linf)
    }
}

pub fn check_gamma_max_principle(history: &[DiagnosticsRecord]) -> Result<GrowthReport> {
    if history.len() < 2 {
        return Err(Error::InvalidArgument("growth check needs at least two records".into()));
    }
    let mut worst = [0.0_f64; 3];
    for w in history.windows(2) {
        let (a, b) = (w[0].gamma_norms(), w[1].gamma_norms());
        for k in 0..3 {
            if a[k] > 0.0 {
                worst[k] = worst[k].max((b[k] - a[k]) / a[k]);
            } else if b[k] > 0.0 {
                worst[k] = f64::INFINITY;
            }
        }
    }
    Ok(GrowthReport {
        l2: worst[0],
        l4: worst[1],
        linf: worst[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyCheck {
    /// Initial smallness quantity above `1/4`; the estimate does not apply.
    NotApplicable { initial_smallness: f64 },
    Checked {
        /// `max_k E(t_{k+1}) - E(t_k)`
        worst_increase: f64,
        /// `max_k (E(t_{k+1}) - E(t_k)) / E(t_k)`
        worst_relative: f64,
    },
}

pub fn check_energy_monotone(history: &[DiagnosticsRecord]) -> Result<EnergyCheck> {
    let first = history
        .first()
        .ok_or_else(|| Error::InvalidArgument("energy check needs records".into()))?;
    if first.smallness > 0.25 {
        return Ok(EnergyCheck::NotApplicable {
            initial_smallness: first.smallness,
        });
    }
    let (mut inc, mut rel) = (0.0_f64, 0.0_f64);
    for w in history.windows(2) {
        let d = w[1].energy - w[0].energy;
        inc = inc.max(d);
        if w[0].energy > 0.0 {
            rel = rel.max(d / w[0].energy);
        } else if d > 0.0 {
            rel = f64::INFINITY;
        }
    }
    Ok(EnergyCheck::Checked {
        worst_increase: inc,
        worst_relative: rel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport {
    pub lambda: f64,
    pub smallness: f64,
    pub smallness_rescaled: f64,
    /// `|S_l - S| / S`
    pub deviation: f64,
    /// `||Gamma_l||_4 / ||Gamma||_4`, expected `lambda^(-3/4)`
    pub gamma_l4_ratio: f64,
    /// `||V_l||_4 / ||V||_4`, expected `lambda^(3/4)`
    pub v_l4_ratio: f64,
    /// `||Omega_l||_2^(1/2) / ||Omega||_2^(1/2)`, expected `lambda^(3/4)`
    pub omega_sqrt_ratio: f64,
}

impl ScalingReport {
    /// Largest relative miss of the three norm ratios against their powers of
    /// `lambda`; ratios undefined for a vanishing field are skipped.
    pub fn worst_ratio_error(&self) -> f64 {
        let p = self.lambda.powf(0.75);
        let e = |got: f64, want: f64| if got.is_nan() { 0.0 } else { (got / want - 1.0).abs() };
        e(self.gamma_l4_ratio, 1.0 / p).max(e(self.v_l4_ratio, p)).max(e(self.omega_sqrt_ratio, p))
    }
}

/// Compares the smallness quantity of the family on `grid` with that of its
/// `lambda`-rescaled copy on the shrunken cylinder at the same cell counts.
pub fn scaling_check(
    family: &DataFamily,
    grid: &MeridianGrid,
    lambda: f64,
    consts: &RegularityConstants,
) -> Result<ScalingReport> {
    let base = make_initial(family, grid)?;
    let small = rescaled(family, grid, lambda)?;
    let s = smallness(&base, consts)?;
    if s == 0.0 {
        return Err(Error::InvalidArgument("scaling check requires nonzero data".into()));
    }
    let sl = smallness(&small, consts)?;
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::NAN } else { a / b };
    Ok(ScalingReport {
        lambda,
        smallness: s,
        smallness_rescaled: sl,
        deviation: (sl - s).abs() / s,
        gamma_l4_ratio: ratio(weighted_lp_norm(small.gamma(), 4.0)?, weighted_lp_norm(base.gamma(), 4.0)?),
        v_l4_ratio: ratio(weighted_lp_norm(&small.swirl_v()?, 4.0)?, weighted_lp_norm(&base.swirl_v()?, 4.0)?),
        omega_sqrt_ratio: ratio(
            weighted_lp_norm(small.omega(), 2.0)?.sqrt(),
            weighted_lp_norm(base.omega(), 2.0)?.sqrt(),
        ),
    })
}
