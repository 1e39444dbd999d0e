//! Centered second-order stencils on the meridian grid.
//!
//! Every operator reads the ghost layer of its input and writes interior values
//! of a fresh derived field (no boundary descriptor, ghosts zero).

use crate::error::Result;
use crate::grid::{pairwise_sum, MeridianGrid, ScalarField};

/// Meridian vector field `b = v_r e_r + v_z e_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeridianVector {
    pub r: ScalarField,
    pub z: ScalarField,
}

impl MeridianVector {
    pub fn new(r: ScalarField, z: ScalarField) -> Result<Self> {
        r.grid().same_as(z.grid())?;
        Ok(Self { r, z })
    }

    pub fn zeros(grid: MeridianGrid) -> Self {
        Self {
            r: ScalarField::derived(grid),
            z: ScalarField::derived(grid),
        }
    }

    pub fn grid(&self) -> &MeridianGrid {
        self.r.grid()
    }

    /// `(sum_ij w_i (b_r^2 + b_z^2))^(1/2)`.
    pub fn l2_norm(&self) -> Result<f64> {
        self.r.require_finite()?;
        self.z.require_finite()?;
        let g = *self.grid();
        let (a, b) = (self.r.raw(), self.z.raw());
        let mut terms = Vec::with_capacity(g.nr() * g.nz());
        for i in 0..g.nr() {
            let w = g.weight(i);
            for j in 0..g.nz() {
                let k = g.flat(i, j);
                terms.push((a[k] * a[k] + b[k] * b[k]) * w);
            }
        }
        Ok(pairwise_sum(&terms).sqrt())
    }

    pub fn max_abs(&self) -> (f64, f64) {
        let m = |f: &ScalarField| f.interior().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (m(&self.r), m(&self.z))
    }
}

/// Loops over interior cells with the flat index, cell indices and radius.
#[inline]
fn for_interior(g: &MeridianGrid, mut body: impl FnMut(usize, usize, usize, f64)) {
    for i in 0..g.nr() {
        let r = g.r(i as isize);
        let row = g.flat(i, 0);
        for j in 0..g.nz() {
            body(row + j, i, j, r);
        }
    }
}

/// Centered `d/dr`.
pub fn d_r(f: &ScalarField) -> Result<ScalarField> {
    f.require_filled()?;
    let g = *f.grid();
    let (s, c) = (g.stride(), 0.5 / g.dr());
    let src = f.raw();
    let mut out = ScalarField::derived(g);
    let dst = out.raw_mut();
    for_interior(&g, |k, _, _, _| dst[k] = (src[k + s] - src[k - s]) * c);
    Ok(out)
}

/// Centered `d/dz`.
pub fn d_z(f: &ScalarField) -> Result<ScalarField> {
    f.require_filled()?;
    let g = *f.grid();
    let c = 0.5 / g.dz();
    let src = f.raw();
    let mut out = ScalarField::derived(g);
    let dst = out.raw_mut();
    for_interior(&g, |k, _, _, _| dst[k] = (src[k + 1] - src[k - 1]) * c);
    Ok(out)
}

pub fn grad_meridian(f: &ScalarField) -> Result<MeridianVector> {
    Ok(MeridianVector {
        r: d_r(f)?,
        z: d_z(f)?,
    })
}

/// Conservative cylindrical Laplacian
/// `(1/r) d_r(r d_r f) + d_z^2 f` with face radii `r_{i +- 1/2}`.
pub fn laplacian_cyl(f: &ScalarField) -> Result<ScalarField> {
    f.require_filled()?;
    let g = *f.grid();
    let s = g.stride();
    let (idr2, idz2) = (1.0 / (g.dr() * g.dr()), 1.0 / (g.dz() * g.dz()));
    let src = f.raw();
    let mut out = ScalarField::derived(g);
    let dst = out.raw_mut();
    for_interior(&g, |k, i, _, r| {
        let (rp, rm) = (g.r_face(i as isize), g.r_face(i as isize - 1));
        let radial = (rp * (src[k + s] - src[k]) - rm * (src[k] - src[k - s])) * idr2 / r;
        let axial = (src[k + 1] - 2.0 * src[k] + src[k - 1]) * idz2;
        dst[k] = radial + axial;
    });
    Ok(out)
}

/// `laplacian_cyl(f) + (2/r) d_r f`, the radial Laplacian of five dimensions.
pub fn l_omega(f: &ScalarField) -> Result<ScalarField> {
    f.require_filled()?;
    let g = *f.grid();
    let s = g.stride();
    let (idr2, idz2, idr) = (1.0 / (g.dr() * g.dr()), 1.0 / (g.dz() * g.dz()), 1.0 / g.dr());
    let src = f.raw();
    let mut out = ScalarField::derived(g);
    let dst = out.raw_mut();
    for_interior(&g, |k, i, _, r| {
        let (rp, rm) = (g.r_face(i as isize), g.r_face(i as isize - 1));
        let radial = (rp * (src[k + s] - src[k]) - rm * (src[k] - src[k - s])) * idr2 / r;
        let axial = (src[k + 1] - 2.0 * src[k] + src[k - 1]) * idz2;
        let drift = (src[k + s] - src[k - s]) * idr / r;
        dst[k] = radial + axial + drift;
    });
    Ok(out)
}

/// `b_r d_r f + b_z d_z f`, centered. Only interior values of `b` are read.
pub fn advect(b: &MeridianVector, f: &ScalarField) -> Result<ScalarField> {
    f.require_filled()?;
    let g = *f.grid();
    g.same_as(b.grid())?;
    let s = g.stride();
    let (cr, cz) = (0.5 / g.dr(), 0.5 / g.dz());
    let (src, br, bz) = (f.raw(), b.r.raw(), b.z.raw());
    let mut out = ScalarField::derived(g);
    let dst = out.raw_mut();
    for_interior(&g, |k, _, _, _| {
        dst[k] = br[k] * (src[k + s] - src[k - s]) * cr + bz[k] * (src[k + 1] - src[k - 1]) * cz;
    });
    Ok(out)
}

/// Discrete cylindrical divergence `(1/r) d_r(r b_r) + d_z b_z` with centered
/// differences. Reads the radial ghosts of `b_r` and the z-ghosts of `b_z`.
pub fn divergence(b: &MeridianVector) -> Result<ScalarField> {
    b.r.require_filled()?;
    b.z.require_filled()?;
    let g = *b.grid();
    let s = g.stride();
    let (cr, cz) = (0.5 / g.dr(), 0.5 / g.dz());
    let (br, bz) = (b.r.raw(), b.z.raw());
    let mut out = ScalarField::derived(g);
    let dst = out.raw_mut();
    for_interior(&g, |k, i, _, r| {
        let (rp, rm) = (g.r(i as isize + 1), g.r(i as isize - 1));
        dst[k] = (rp * br[k + s] - rm * br[k - s]) * cr / r + (bz[k + 1] - bz[k - 1]) * cz;
    });
    Ok(out)
}

/// The four distinct entries of the Hessian of an axisymmetric scalar in
/// cylindrical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEntries {
    /// `d_r^2 phi`
    pub rr: ScalarField,
    /// `(1/r) d_r phi`
    pub r_over: ScalarField,
    /// `d_z^2 phi`
    pub zz: ScalarField,
    /// `d_r d_z phi`
    pub rz: ScalarField,
}

impl HessianEntries {
    /// Weighted L2 norm of the full 3x3 Hessian; the mixed entry appears twice.
    pub fn frobenius_l2(&self) -> Result<f64> {
        let g = *self.rr.grid();
        for f in [&self.rr, &self.r_over, &self.zz, &self.rz] {
            f.require_finite()?;
        }
        let (a, b, c, d) = (self.rr.raw(), self.r_over.raw(), self.zz.raw(), self.rz.raw());
        let mut terms = Vec::with_capacity(g.nr() * g.nz());
        for i in 0..g.nr() {
            let w = g.weight(i);
            for j in 0..g.nz() {
                let k = g.flat(i, j);
                terms.push((a[k] * a[k] + b[k] * b[k] + c[k] * c[k] + 2.0 * d[k] * d[k]) * w);
            }
        }
        Ok(pairwise_sum(&terms).sqrt())
    }
}

pub fn hessian_vr_over_r(phi: &ScalarField) -> Result<HessianEntries> {
    phi.require_filled()?;
    let g = *phi.grid();
    let s = g.stride();
    let (idr2, idz2) = (1.0 / (g.dr() * g.dr()), 1.0 / (g.dz() * g.dz()));
    let (cr, crz) = (0.5 / g.dr(), 0.25 / (g.dr() * g.dz()));
    let src = phi.raw();
    let mut rr = ScalarField::derived(g);
    let mut r_over = ScalarField::derived(g);
    let mut zz = ScalarField::derived(g);
    let mut rz = ScalarField::derived(g);
    {
        let (a, b, c, d) = (rr.raw_mut(), r_over.raw_mut(), zz.raw_mut(), rz.raw_mut());
        for_interior(&g, |k, _, _, r| {
            a[k] = (src[k + s] - 2.0 * src[k] + src[k - s]) * idr2;
            b[k] = (src[k + s] - src[k - s]) * cr / r;
            c[k] = (src[k + 1] - 2.0 * src[k] + src[k - 1]) * idz2;
            d[k] = (src[k + s + 1] - src[k + s - 1] - src[k - s + 1] + src[k - s - 1]) * crz;
        });
    }
    Ok(HessianEntries { rr, r_over, zz, rz })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::grid::{AxisParity, Boundaries};
    use std::f64::consts::PI;

    fn exact(n: usize, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let g = MeridianGrid::unit(n, n).unwrap();
        ScalarField::sampled_with_ghosts(g, AxisParity::Even, Boundaries::unset(), f)
    }

    fn max_err(f: &ScalarField, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let g = *f.grid();
        let mut m = 0.0_f64;
        for i in 0..g.nr() as isize {
            for j in 0..g.nz() as isize {
                m = m.max((f.at(i, j) - exact(g.r(i), g.z(j))).abs());
            }
        }
        m
    }

    #[test]
    fn unfilled_ghosts_are_rejected() {
        let g = MeridianGrid::unit(4, 4).unwrap();
        let f = ScalarField::derived(g);
        assert!(matches!(laplacian_cyl(&f), Err(Error::GhostsNotFilled)));
        assert!(matches!(grad_meridian(&f), Err(Error::GhostsNotFilled)));
    }

    #[test]
    fn gradient_examples() {
        let f = exact(16, |r, _| r);
        let gr = grad_meridian(&f).unwrap();
        assert!(max_err(&gr.r, |_, _| 1.0) < 1e-13);
        assert!(max_err(&gr.z, |_, _| 0.0) == 0.0);
        let f = exact(16, |_, z| z * z);
        assert!(max_err(&d_z(&f).unwrap(), |_, z| 2.0 * z) < 1e-13);
        let n = 64;
        let f = exact(n, |r, z| (PI * r).sin() * (PI * z).cos());
        let gr = grad_meridian(&f).unwrap();
        let h2 = 2.0 / (n * n) as f64;
        assert!(max_err(&gr.r, |r, z| PI * (PI * r).cos() * (PI * z).cos()) <= 5.0 * h2 * PI.powi(3));
        assert!(max_err(&gr.z, |r, z| -PI * (PI * r).sin() * (PI * z).sin()) <= 5.0 * h2 * PI.powi(3));
    }

    #[test]
    fn laplacian_examples() {
        assert!(max_err(&laplacian_cyl(&exact(16, |r, _| r * r)).unwrap(), |_, _| 4.0) < 1e-10);
        assert!(max_err(&laplacian_cyl(&exact(16, |_, z| z * z)).unwrap(), |_, _| 2.0) < 1e-10);
        let e = max_err(&laplacian_cyl(&exact(64, |r, _| r * r * (1.0 - r * r))).unwrap(), |r, _| {
            4.0 - 16.0 * r * r
        });
        assert!(e < 10.0 / (64.0 * 64.0), "{e}");
    }

    #[test]
    fn l_omega_examples() {
        assert!(max_err(&l_omega(&exact(16, |r, _| r * r)).unwrap(), |_, _| 8.0) < 1e-10);
        assert!(max_err(&l_omega(&exact(16, |_, _| 3.0)).unwrap(), |_, _| 0.0) < 1e-12);
        let e = max_err(&l_omega(&exact(64, |r, _| r.powi(4))).unwrap(), |r, _| 24.0 * r * r);
        assert!(e < 20.0 / (64.0 * 64.0), "{e}");
    }

    #[test]
    fn advect_examples() {
        let g = MeridianGrid::unit(16, 16).unwrap();
        let f = exact(16, |_, z| z);
        let zero = MeridianVector::zeros(g);
        assert!(max_err(&advect(&zero, &f).unwrap(), |_, _| 0.0) == 0.0);
        let up = MeridianVector::new(
            ScalarField::derived(g),
            ScalarField::from_fn(g, AxisParity::Even, Boundaries::unset(), |_, _| 1.0),
        )
        .unwrap();
        assert!(max_err(&advect(&up, &f).unwrap(), |_, _| 1.0) < 1e-13);

        // b from psi = r^2 (1-r^2) z (1-z), f = r^2
        let dzpsi = |r: f64, z: f64| r * r * (1.0 - r * r) * (1.0 - 2.0 * z);
        let dr_psi = |r: f64, z: f64| (2.0 * r - 4.0 * r.powi(3)) * z * (1.0 - z);
        let b = MeridianVector::new(
            ScalarField::from_fn(g, AxisParity::Odd, Boundaries::unset(), |r, z| -dzpsi(r, z) / r),
            ScalarField::from_fn(g, AxisParity::Even, Boundaries::unset(), |r, z| dr_psi(r, z) / r),
        )
        .unwrap();
        let out = advect(&b, &exact(16, |r, _| r * r)).unwrap();
        assert!(max_err(&out, |r, z| -2.0 * dzpsi(r, z)) < 1e-12);
    }

    #[test]
    fn hessian_examples() {
        let h = hessian_vr_over_r(&exact(16, |_, _| 2.0)).unwrap();
        for f in [&h.rr, &h.r_over, &h.zz, &h.rz] {
            assert!(max_err(f, |_, _| 0.0) < 1e-12);
        }
        let h = hessian_vr_over_r(&exact(16, |r, _| r * r)).unwrap();
        assert!(max_err(&h.rr, |_, _| 2.0) < 1e-10);
        assert!(max_err(&h.r_over, |_, _| 2.0) < 1e-10);
        assert!(max_err(&h.zz, |_, _| 0.0) < 1e-10);
        assert!(max_err(&h.rz, |_, _| 0.0) < 1e-10);
        let n = 64;
        let h = hessian_vr_over_r(&exact(n, |r, z| (1.0 - r * r) * (PI * z).cos())).unwrap();
        let tol = 10.0 / (n * n) as f64 * PI.powi(4);
        assert!(max_err(&h.rr, |_, z| -2.0 * (PI * z).cos()) < tol);
        assert!(max_err(&h.r_over, |_, z| -2.0 * (PI * z).cos()) < tol);
        assert!(max_err(&h.zz, |r, z| -PI * PI * (1.0 - r * r) * (PI * z).cos()) < tol);
        assert!(max_err(&h.rz, |r, z| 2.0 * r * PI * (PI * z).sin()) < tol);
    }

    #[test]
    fn frobenius_counts_mixed_entry_twice() {
        let g = MeridianGrid::unit(8, 8).unwrap();
        let c = |v: f64| ScalarField::from_fn(g, AxisParity::Even, Boundaries::unset(), move |_, _| v);
        let h = HessianEntries {
            rr: c(1.0),
            r_over: c(0.0),
            zz: c(0.0),
            rz: c(1.0),
        };
        // sum of weights is exactly 1/2
        assert!((h.frobenius_l2().unwrap() - (1.5f64).sqrt()).abs() < 1e-14);
    }
}
