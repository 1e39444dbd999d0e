//! Manufactured-solution order studies for the stencils and both velocity
//! reconstruction routes.
//!
//! Operator studies sample `f = cos(pi r^2 / 2R^2) cos(pi z / H)` including the
//! ghost layer, so only the interior stencil error is measured. The smooth
//! radial profile keeps every entry (including `(1/r) d_r`) away from the
//! exact-on-quadratics regime. Errors are max-norm over the interior.
//!
//! Elliptic studies use `psi* = r^2 (R^2-r^2)^2 sin^2(pi z/H)` for the stream
//! route and `phi* = (R^2-r^2) cos(pi z/H)` for the direct `v_r / r` route, with
//! forcings in closed form; errors are weighted L2.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::elliptic::{
    biot_radial_row, stream_from_chi, velocity_from_stream, vr_over_r_boundaries, EllipticOperator, SolverOptions,
    VelocitySolver,
};
use crate::error::Result;
use crate::grid::{weighted_lp_norm, AxisParity, Boundaries, MeridianGrid, ScalarField};
use crate::operators::{advect, d_r, d_z, hessian_vr_over_r, l_omega, laplacian_cyl, MeridianVector};

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub name: String,
    pub resolutions: Vec<usize>,
    pub errors: Vec<f64>,
}

impl OrderStudy {
    /// Observed orders `log2(e_k / e_{k+1})` between successive doublings.
    pub fn orders(&self) -> Vec<f64> {
        self.errors
            .windows(2)
            .zip(self.resolutions.windows(2))
            .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
            .collect()
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        let o = self.orders();
        !o.is_empty() && o.iter().all(|v| *v >= lo && *v <= hi)
    }
}

struct Manufactured {
    radius: f64,
    height: f64,
}

impl Manufactured {
    fn a(&self) -> f64 {
        PI / (2.0 * self.radius * self.radius)
    }
    fn k(&self) -> f64 {
        PI / self.height
    }
    fn f(&self, r: f64, z: f64) -> f64 {
        (self.a() * r * r).cos() * (self.k() * z).cos()
    }
    fn f_r(&self, r: f64, z: f64) -> f64 {
        -2.0 * self.a() * r * (self.a() * r * r).sin() * (self.k() * z).cos()
    }
    fn f_rr(&self, r: f64, z: f64) -> f64 {
        let (a, u) = (self.a(), self.a() * r * r);
        (-2.0 * a * u.sin() - 4.0 * a * a * r * r * u.cos()) * (self.k() * z).cos()
    }
    fn f_z(&self, r: f64, z: f64) -> f64 {
        -self.k() * (self.a() * r * r).cos() * (self.k() * z).sin()
    }
    fn f_zz(&self, r: f64, z: f64) -> f64 {
        -self.k() * self.k() * self.f(r, z)
    }
    fn f_rz(&self, r: f64, z: f64) -> f64 {
        2.0 * self.a() * self.k() * r * (self.a() * r * r).sin() * (self.k() * z).sin()
    }
    // advecting field used for the drift study
    fn b(&self, r: f64, z: f64) -> (f64, f64) {
        (r * (self.k() * z).sin(), (r / self.radius).cos() + 0.5)
    }
}

fn max_error(f: &ScalarField, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let g = *f.grid();
    let mut m = 0.0_f64;
    for i in 0..g.nr() as isize {
        for j in 0..g.nz() as isize {
            m = m.max((f.at(i, j) - exact(g.r(i), g.z(j))).abs());
        }
    }
    m
}

fn weighted_error(f: &ScalarField, exact: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let diff = f.map_interior(|v, r, z| v - exact(r, z));
    weighted_lp_norm(&diff, 2.0)
}

/// Max-norm errors of every stencil operator on one grid, in the order of
/// [`OPERATOR_NAMES`].
fn operator_errors(grid: MeridianGrid) -> Result<Vec<f64>> {
    let m = Manufactured {
        radius: grid.radius(),
        height: grid.height(),
    };
    let f = ScalarField::sampled_with_ghosts(grid, AxisParity::Even, Boundaries::unset(), |r, z| m.f(r, z));
    let lap = |r: f64, z: f64| m.f_rr(r, z) + m.f_r(r, z) / r + m.f_zz(r, z);
    let b = MeridianVector::new(
        ScalarField::from_fn(grid, AxisParity::Odd, Boundaries::unset(), |r, z| m.b(r, z).0),
        ScalarField::from_fn(grid, AxisParity::Even, Boundaries::unset(), |r, z| m.b(r, z).1),
    )?;
    let h = hessian_vr_over_r(&f)?;
    Ok(vec![
        max_error(&d_r(&f)?, |r, z| m.f_r(r, z)),
        max_error(&d_z(&f)?, |r, z| m.f_z(r, z)),
        max_error(&laplacian_cyl(&f)?, lap),
        max_error(&l_omega(&f)?, |r, z| lap(r, z) + 2.0 * m.f_r(r, z) / r),
        max_error(&advect(&b, &f)?, |r, z| {
            let (br, bz) = m.b(r, z);
            br * m.f_r(r, z) + bz * m.f_z(r, z)
        }),
        max_error(&h.rr, |r, z| m.f_rr(r, z)),
        max_error(&h.r_over, |r, z| m.f_r(r, z) / r),
        max_error(&h.zz, |r, z| m.f_zz(r, z)),
        max_error(&h.rz, |r, z| m.f_rz(r, z)),
    ])
}

pub const OPERATOR_NAMES: [&str; 9] = [
    "grad_meridian.r",
    "grad_meridian.z",
    "laplacian_cyl",
    "l_omega",
    "advect",
    "hessian.rr",
    "hessian.r_over",
    "hessian.zz",
    "hessian.rz",
];

/// Order studies for every stencil operator over square grids of the given
/// sizes on `(0, R) x (0, H)`.
pub fn operator_studies(resolutions: &[usize], radius: f64, height: f64) -> Result<Vec<OrderStudy>> {
    let mut errors = vec![Vec::new(); OPERATOR_NAMES.len()];
    for &n in resolutions {
        let e = operator_errors(MeridianGrid::new(n, n, radius, height)?)?;
        for (k, v) in e.into_iter().enumerate() {
            errors[k].push(v);
        }
    }
    Ok(OPERATOR_NAMES
        .iter()
        .zip(errors)
        .map(|(name, errors)| OrderStudy {
            name: name.to_string(),
            resolutions: resolutions.to_vec(),
            errors,
        })
        .collect())
}

/// Stream route: recovers `psi*` and the velocity it induces.
fn stream_errors(grid: MeridianGrid, options: SolverOptions) -> Result<(f64, f64)> {
    let (r2, k) = (grid.radius() * grid.radius(), PI / grid.height());
    let chi_exact = |r: f64, z: f64| (r2 - r * r).powi(2) * (k * z).sin().powi(2);
    // L5 chi* with L5 = d_r^2 + (3/r) d_r + d_z^2
    let l5 = |r: f64, z: f64| {
        (24.0 * r * r - 16.0 * r2) * (k * z).sin().powi(2) + (r2 - r * r).powi(2) * 2.0 * k * k * (2.0 * k * z).cos()
    };
    let solver = VelocitySolver::new(grid, options)?;
    let omega = ScalarField::from_fn(grid, AxisParity::Even, Boundaries::unset(), |r, z| -l5(r, z));
    let (chi, _) = solver.solve_chi(&omega)?;
    let psi = stream_from_chi(&chi)?;
    let e_psi = weighted_error(&psi, |r, z| r * r * chi_exact(r, z))?;
    let v = velocity_from_stream(&psi)?;
    let vr_exact = |r: f64, z: f64| -r * (r2 - r * r).powi(2) * k * (2.0 * k * z).sin();
    let e_v = weighted_error(&v.r, vr_exact)?;
    Ok((e_psi, e_v))
}

/// Direct route: `L_omega phi = g` with `phi* = (R^2 - r^2) cos(pi z / H)`.
fn biot_errors(grid: MeridianGrid, options: SolverOptions) -> Result<f64> {
    let (r2, k) = (grid.radius() * grid.radius(), PI / grid.height());
    let op = EllipticOperator::new(grid, |i| biot_radial_row(&grid, i), AxisParity::Even, vr_over_r_boundaries())?;
    let rhs = Array2::from_shape_fn((grid.nr(), grid.nz()), |(i, j)| {
        let (r, z) = (grid.r(i as isize), grid.z(j as isize));
        (-8.0 - k * k * (r2 - r * r)) * (k * z).cos()
    });
    let (phi, _) = op.solve(rhs.view(), &options)?;
    weighted_error(&phi, |r, z| (r2 - r * r) * (k * z).cos())
}

/// Order studies of the stream function, the velocity it induces, and the
/// direct `v_r / r` route.
pub fn elliptic_studies(resolutions: &[usize], radius: f64, height: f64, options: SolverOptions) -> Result<Vec<OrderStudy>> {
    let (mut psi, mut vel, mut phi) = (Vec::new(), Vec::new(), Vec::new());
    for &n in resolutions {
        let grid = MeridianGrid::new(n, n, radius, height)?;
        let (a, b) = stream_errors(grid, options)?;
        psi.push(a);
        vel.push(b);
        phi.push(biot_errors(grid, options)?);
    }
    let study = |name: &str, errors| OrderStudy {
        name: name.into(),
        resolutions: resolutions.to_vec(),
        errors,
    };
    Ok(vec![
        study("solve_stream.psi", psi),
        study("velocity_from_stream.v_r", vel),
        study("solve_vr_over_r", phi),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_from_errors() {
        let s = OrderStudy {
            name: "x".into(),
            resolutions: vec![10, 20, 40],
            errors: vec![1.0, 0.25, 0.0625],
        };
        assert_eq!(s.orders(), vec![2.0, 2.0]);
        assert!(s.within(1.8, 2.2));
    }

    #[test]
    fn closed_form_derivatives_match_finite_differences() {
        let m = Manufactured { radius: 1.3, height: 0.7 };
        let (r, z, e) = (0.37, 0.21, 1e-5);
        let fd_r = (m.f(r + e, z) - m.f(r - e, z)) / (2.0 * e);
        let fd_rr = (m.f_r(r + e, z) - m.f_r(r - e, z)) / (2.0 * e);
        let fd_z = (m.f(r, z + e) - m.f(r, z - e)) / (2.0 * e);
        let fd_rz = (m.f_r(r, z + e) - m.f_r(r, z - e)) / (2.0 * e);
        assert!((fd_r - m.f_r(r, z)).abs() < 1e-8);
        assert!((fd_rr - m.f_rr(r, z)).abs() < 1e-8);
        assert!((fd_z - m.f_z(r, z)).abs() < 1e-8);
        assert!((fd_rz - m.f_rz(r, z)).abs() < 1e-8);
    }

    #[test]
    fn operators_are_second_order_on_small_grids() {
        for s in operator_studies(&[16, 32, 64], 1.0, 1.0).unwrap() {
            assert!(s.within(1.8, 2.2), "{} {:?}", s.name, s.orders());
        }
    }
}
