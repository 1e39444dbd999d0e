//! Boundary-compatible initial data families and the `lambda`-rescaling used
//! by the scaling check.
//!
//! Swirl profiles are `r^2 (R^2-r^2)^2 (r/R)^(2p) cos(q pi z/H)`: zero and
//! `O(r^2)` at the axis, double root at the wall, flat at the lids. Vorticity
//! profiles are `(R^2-r^2) (r/R)^(2p) sin(q pi z/H)`: zero on wall and lids,
//! even in `r`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{smallness_prefactor, RegularityConstants};
use crate::dynamics::{gamma_boundaries, FlowState};
use crate::elliptic::omega_boundaries;
use crate::error::{Error, Result};
use crate::grid::{weighted_lp_norm, AxisParity, MeridianGrid, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    PolySwirl,
    PolyVorticity,
    Combined,
    SwirlFree,
    RandomSmooth,
}

impl FamilyKind {
    pub fn tag(self) -> &'static str {
        match self {
            FamilyKind::PolySwirl => "poly_swirl",
            FamilyKind::PolyVorticity => "poly_vorticity",
            FamilyKind::Combined => "combined",
            FamilyKind::SwirlFree => "swirl_free",
            FamilyKind::RandomSmooth => "random_smooth",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FamilyKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "poly_swirl" => FamilyKind::PolySwirl,
            "poly_vorticity" => FamilyKind::PolyVorticity,
            "combined" => FamilyKind::Combined,
            "swirl_free" => FamilyKind::SwirlFree,
            "random_smooth" => FamilyKind::RandomSmooth,
            other => return Err(format!("unknown initial-data family '{other}'")),
        })
    }
}

/// Initial-data family with amplitudes `a` (swirl) and `b` (vorticity).
///
/// `k` is the axial wavenumber of the swirl (0 gives a z-independent swirl,
/// which never drives a meridian flow), `m` that of the vorticity. For
/// `random_smooth` they are the highest modes used and `seed` fixes the
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataFamily {
    pub kind: FamilyKind,
    pub a: f64,
    pub b: f64,
    pub k: u32,
    pub m: u32,
    pub seed: u64,
}

impl Default for DataFamily {
    fn default() -> Self {
        Self {
            kind: FamilyKind::Combined,
            a: 0.1,
            b: 0.1,
            k: 1,
            m: 1,
            seed: 0,
        }
    }
}

impl DataFamily {
    pub fn with_amplitudes(mut self, a: f64, b: f64) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidArgument("family amplitudes must be finite".into()));
        }
        if self.m == 0 && self.kind != FamilyKind::PolySwirl {
            return Err(Error::InvalidArgument("vorticity wavenumber m must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form profile on the domain `(0, R) x (0, H)`.
    pub fn profile(&self, radius: f64, height: f64) -> Result<Profile> {
        self.validate()?;
        let swirl = matches!(self.kind, FamilyKind::PolySwirl | FamilyKind::Combined);
        let vort = matches!(self.kind, FamilyKind::PolyVorticity | FamilyKind::Combined | FamilyKind::SwirlFree);
        let mut gamma_terms = Vec::new();
        let mut omega_terms = Vec::new();
        match self.kind {
            FamilyKind::RandomSmooth => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                for p in 0..2 {
                    for q in 0..=self.k {
                        gamma_terms.push(Term {
                            coef: self.a * rng.gen_range(-1.0..=1.0),
                            p,
                            q,
                        });
                    }
                }
                for p in 0..2 {
                    for q in 1..=self.m {
                        omega_terms.push(Term {
                            coef: self.b * rng.gen_range(-1.0..=1.0),
                            p,
                            q,
                        });
                    }
                }
            }
            _ => {
                if swirl {
                    gamma_terms.push(Term { coef: self.a, p: 0, q: self.k });
                }
                if vort {
                    omega_terms.push(Term { coef: self.b, p: 0, q: self.m });
                }
            }
        }
        Ok(Profile {
            radius,
            height,
            gamma_terms,
            omega_terms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    coef: f64,
    p: i32,
    q: u32,
}

/// Evaluable `(Gamma, Omega)` pair of a family on a fixed base domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    radius: f64,
    height: f64,
    gamma_terms: Vec<Term>,
    omega_terms: Vec<Term>,
}

impl Profile {
    pub fn gamma(&self, r: f64, z: f64) -> f64 {
        let r2 = self.radius * self.radius;
        let base = r * r * (r2 - r * r) * (r2 - r * r);
        let s = (r / self.radius) * (r / self.radius);
        self.gamma_terms
            .iter()
            .map(|t| t.coef * base * s.powi(t.p) * (t.q as f64 * PI * z / self.height).cos())
            .sum()
    }

    pub fn omega(&self, r: f64, z: f64) -> f64 {
        let r2 = self.radius * self.radius;
        let s = (r / self.radius) * (r / self.radius);
        self.omega_terms
            .iter()
            .map(|t| t.coef * (r2 - r * r) * s.powi(t.p) * (t.q as f64 * PI * z / self.height).sin())
            .sum()
    }
}

fn state_from(grid: MeridianGrid, gamma: impl Fn(f64, f64) -> f64, omega: impl Fn(f64, f64) -> f64) -> Result<FlowState> {
    let g = ScalarField::from_fn(grid, AxisParity::Even, gamma_boundaries(), gamma);
    let o = ScalarField::from_fn(grid, AxisParity::Even, omega_boundaries(), omega);
    g.require_finite().map_err(|_| Error::NonFinite(Some("initial Gamma".into())))?;
    o.require_finite().map_err(|_| Error::NonFinite(Some("initial Omega".into())))?;
    FlowState::new(0.0, g, o)
}

/// Samples the family on `grid`; ghosts filled, derived fields not yet built.
pub fn make_initial(family: &DataFamily, grid: &MeridianGrid) -> Result<FlowState> {
    let p = family.profile(grid.radius(), grid.height())?;
    state_from(*grid, |r, z| p.gamma(r, z), |r, z| p.omega(r, z))
}

/// The family pulled through `v -> lambda v(lambda x)` onto the shrunken
/// cylinder `(0, R/lambda) x (0, H/lambda)` at the same cell counts:
/// `Gamma_l(r, z) = Gamma(l r, l z)`, `Omega_l(r, z) = l^3 Omega(l r, l z)`.
pub fn rescaled(family: &DataFamily, grid: &MeridianGrid, lambda: f64) -> Result<FlowState> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("scaling factor must be positive, got {lambda}")));
    }
    let p = family.profile(grid.radius(), grid.height())?;
    let small = MeridianGrid::new(grid.nr(), grid.nz(), grid.radius() / lambda, grid.height() / lambda)?;
    let l3 = lambda * lambda * lambda;
    state_from(
        small,
        |r, z| p.gamma(lambda * r, lambda * z),
        |r, z| l3 * p.omega(lambda * r, lambda * z),
    )
}

/// Joint amplitude factor `alpha` such that the family with amplitudes
/// `(alpha a, alpha b)` has smallness quantity `target` on `grid`.
///
/// The quantity is `P (alpha^4 v/2 + alpha^2 w)^(1/4) alpha g` with the norms
/// `v = ||V||_4^4`, `w = ||Omega||_2^2`, `g = ||Gamma||_4` of the unit-amplitude
/// data, strictly increasing in `alpha`; solved by bisection.
pub fn amplitude_for_smallness(
    family: &DataFamily,
    grid: &MeridianGrid,
    consts: &RegularityConstants,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidArgument(format!("target smallness must be positive, got {target}")));
    }
    let s = make_initial(family, grid)?;
    let v = s.swirl_v()?;
    let v4 = weighted_lp_norm(&v, 4.0)?.powi(4);
    let w = weighted_lp_norm(s.omega(), 2.0)?.powi(2);
    let g4 = weighted_lp_norm(s.gamma(), 4.0)?;
    let pre = smallness_prefactor(consts);
    let quantity = |alpha: f64| pre * (0.5 * alpha.powi(4) * v4 + alpha * alpha * w).powf(0.25) * alpha * g4;
    if quantity(1.0) == 0.0 {
        return Err(Error::InvalidArgument("family has zero smallness quantity at every amplitude".into()));
    }
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    while quantity(lo) > target {
        lo *= 0.5;
    }
    while quantity(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if quantity(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{compute_constants, smallness};

    #[test]
    fn zero_amplitude_is_zero_state() {
        let g = MeridianGrid::unit(16, 16).unwrap();
        let f = DataFamily {
            kind: FamilyKind::SwirlFree,
            b: 0.0,
            ..DataFamily::default()
        };
        let s = make_initial(&f, &g).unwrap();
        assert!(s.gamma().interior().iter().chain(s.omega().interior().iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn poly_swirl_l4_norm_matches_quadrature_oracle() {
        // ||r^2 (1-r^2)^2 cos(pi z)||_4 on the unit cylinder, 40-digit quadrature:
        // (3/16 B(5,9))^(1/4)
        let golden = 0.073_470_531_259_778_78;
        let f = DataFamily {
            kind: FamilyKind::PolySwirl,
            a: 1.0,
            ..DataFamily::default()
        };
        let g = MeridianGrid::unit(256, 256).unwrap();
        let s = make_initial(&f, &g).unwrap();
        let n = weighted_lp_norm(s.gamma(), 4.0).unwrap();
        assert!((n - golden).abs() < 1e-4 * golden, "{n}");
    }

    #[test]
    fn swirl_profile_is_flat_at_the_wall() {
        let f = DataFamily {
            kind: FamilyKind::PolySwirl,
            a: 1.0,
            ..DataFamily::default()
        };
        for n in [32usize, 64] {
            let g = MeridianGrid::unit(n, n).unwrap();
            let s = make_initial(&f, &g).unwrap();
            let i = n as isize - 1;
            // one-sided difference across the wall face from the filled ghost
            let d = (s.gamma().at(i + 1, 3) - s.gamma().at(i, 3)) / g.dr();
            assert_eq!(d, 0.0);
            let p = f.profile(1.0, 1.0).unwrap();
            let one_sided = (p.gamma(1.0, g.z(3)) - p.gamma(1.0 - g.dr(), g.z(3))) / g.dr();
            // Gamma ~ 4 (1 - r)^2 near the wall, so the one-sided slope is O(dr)
            assert!(one_sided.abs() <= 4.0 * g.dr() * 1.01);
        }
    }

    #[test]
    fn random_family_is_reproducible_and_seed_dependent() {
        let g = MeridianGrid::unit(16, 16).unwrap();
        let f = DataFamily {
            kind: FamilyKind::RandomSmooth,
            a: 1.0,
            b: 1.0,
            k: 2,
            m: 3,
            seed: 7,
        };
        let a = make_initial(&f, &g).unwrap();
        let b = make_initial(&f, &g).unwrap();
        assert_eq!(a.gamma().interior(), b.gamma().interior());
        let c = make_initial(&DataFamily { seed: 8, ..f }, &g).unwrap();
        assert_ne!(a.omega().interior(), c.omega().interior());
    }

    #[test]
    fn rescaled_with_unit_factor_is_identity() {
        let g = MeridianGrid::unit(16, 12).unwrap();
        let f = DataFamily::default();
        let a = make_initial(&f, &g).unwrap();
        let b = rescaled(&f, &g, 1.0).unwrap();
        assert_eq!(a.gamma().interior(), b.gamma().interior());
        assert_eq!(a.omega().interior(), b.omega().interior());
        assert!(rescaled(&f, &g, 0.0).is_err());
        assert!(rescaled(&f, &g, -1.0).is_err());
    }

    #[test]
    fn bisection_hits_target() {
        let g = MeridianGrid::unit(32, 32).unwrap();
        let consts = compute_constants();
        let f = DataFamily::default();
        let alpha = amplitude_for_smallness(&f, &g, &consts, 0.25).unwrap();
        let scaled = f.with_amplitudes(alpha * f.a, alpha * f.b);
        let s = smallness(&make_initial(&scaled, &g).unwrap(), &consts).unwrap();
        assert!((s - 0.25).abs() < 1e-9, "{s}");
    }
}
