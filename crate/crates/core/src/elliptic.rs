//! Velocity reconstruction from `Omega`.
//!
//! Two routes are provided. The stream route solves for `chi = psi / r^2` with
//! the five-dimensional radial Laplacian `L5 chi = -Omega` (equivalent to
//! `d_r^2 psi - (1/r) d_r psi + d_z^2 psi = -r^2 Omega`), then differentiates
//! `psi` to get a discretely divergence-free velocity with zero wall flux. The
//! second route solves `L_omega phi = d_z Omega` for `phi = v_r / r` directly and
//! exists only as an independent cross-check.
//!
//! Both operators are separable 5-point stencils: a radial tridiagonal row per
//! cell ring plus the uniform axial second difference. [`EllipticOperator`]
//! stores that splitting with homogeneous boundary conditions folded into the
//! diagonal, and solves either directly (fast sine or cosine transform along
//! z, then one tridiagonal solve per mode) or by Jacobi-preconditioned CG on the
//! weight-symmetrized system.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::grid::{homogeneous_factor, AxisParity, Boundaries, BoundaryCondition, MeridianGrid, ScalarField};
use crate::operators::{d_z, MeridianVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Axial eigen-decomposition plus tridiagonal solves.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

impl SolverMethod {
    pub fn name(self) -> &'static str {
        match self {
            SolverMethod::Direct => "direct",
            SolverMethod::ConjugateGradient => "cg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Relative residual `||A x - b|| / ||b||` required of every solve.
    pub tol: f64,
    /// CG iteration cap; `None` means `50 * max(nr, nz)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Direct,
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub method: SolverMethod,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Tridiagonal rows `lower * x[i-1] + diag * x[i] + upper * x[i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    fn len(&self) -> usize {
        self.diag.len()
    }

    /// Folds `ghost = k * interior` at both ends.
    fn fold(&mut self, k_low: f64, k_high: f64) {
        let n = self.len();
        self.diag[0] += self.lower[0] * k_low;
        self.lower[0] = 0.0;
        self.diag[n - 1] += self.upper[n - 1] * k_high;
        self.upper[n - 1] = 0.0;
    }

    /// Diagonal weights `d` with `d_i upper_i = d_{i+1} lower_{i+1}`, if any.
    fn symmetrizer(&self) -> Option<Vec<f64>> {
        let n = self.len();
        let mut d = vec![1.0; n];
        for i in 0..n - 1 {
            let (u, l) = (self.upper[i], self.lower[i + 1]);
            if !(u * l > 0.0) {
                return None;
            }
            d[i + 1] = d[i] * u / l;
        }
        let scale = d.iter().cloned().fold(0.0_f64, f64::max);
        Some(d.into_iter().map(|v| v / scale).collect())
    }
}

/// Pre-factored tridiagonal solve (Thomas algorithm).
#[derive(Debug, Clone)]
struct Thomas {
    lower: Vec<f64>,
    c: Vec<f64>,
    inv: Vec<f64>,
}

impl Thomas {
    fn new(t: &Tridiagonal, shift: f64) -> Result<Self> {
        let n = t.len();
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let den = t.diag[i] + shift - t.lower[i] * prev_c;
            if den == 0.0 || !den.is_finite() {
                return Err(Error::Solver {
                    method: "direct",
                    residual: f64::NAN,
                    iterations: 0,
                    reason: format!("singular radial factor at row {i}"),
                });
            }
            inv[i] = 1.0 / den;
            c[i] = t.upper[i] * inv[i];
            prev_c = c[i];
        }
        Ok(Self {
            lower: t.lower.clone(),
            c,
            inv,
        })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c[i] * x[i + 1];
        }
    }
}

/// Eigen-decomposition of the folded axial second difference with matching
/// homogeneous conditions on both z-sides. The eigenvectors are midpoint sine
/// or cosine modes, applied by fast transform.
#[derive(Clone)]
struct AxialModes {
    eig: Vec<f64>,
    sine: bool,
    plan: Arc<dyn TransformType2And3<f64>>,
}

impl fmt::Debug for AxialModes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AxialModes")
            .field("n", &self.eig.len())
            .field("sine", &self.sine)
            .finish()
    }
}

impl AxialModes {
    fn new(nz: usize, dz: f64, k_bottom: f64, k_top: f64) -> Option<Self> {
        let is = |k: f64, v: f64| (k - v).abs() < 1e-14;
        // midpoint Dirichlet: sine modes k = 1..nz; midpoint Neumann: cosine modes k = 0..nz-1
        let sine = if is(k_bottom, -1.0) && is(k_top, -1.0) {
            true
        } else if is(k_bottom, 1.0) && is(k_top, 1.0) {
            false
        } else {
            return None;
        };
        let eig = (0..nz)
            .map(|m| {
                let km = if sine { m + 1 } else { m } as f64;
                let s = (km * std::f64::consts::PI / (2.0 * nz as f64)).sin();
                -4.0 * s * s / (dz * dz)
            })
            .collect();
        let plan = DctPlanner::new().plan_dct2(nz);
        Some(Self { eig, sine, plan })
    }

    /// Orthonormal eigenvectors as columns.
    #[cfg(test)]
    fn basis(&self) -> Array2<f64> {
        let nz = self.eig.len();
        let n = nz as f64;
        Array2::from_shape_fn((nz, nz), |(j, m)| {
            let arg = std::f64::consts::PI * (j as f64 + 0.5) / n;
            if self.sine {
                let norm = if m + 1 == nz { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                norm * ((m + 1) as f64 * arg).sin()
            } else {
                let norm = if m == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                norm * (m as f64 * arg).cos()
            }
        })
    }

    fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.plan.get_scratch_len()]
    }

    /// Unnormalized modal coefficients `sum_j basis_m(j) x_j`, in place.
    fn forward(&self, x: &mut [f64], scratch: &mut [f64]) {
        if self.sine {
            self.plan.process_dst2_with_scratch(x, scratch);
        } else {
            self.plan.process_dct2_with_scratch(x, scratch);
        }
    }

    /// Inverse of [`Self::forward`] up to the factor `n / 2`.
    fn backward(&self, x: &mut [f64], scratch: &mut [f64]) {
        if self.sine {
            self.plan.process_dst3_with_scratch(x, scratch);
        } else {
            self.plan.process_dct3_with_scratch(x, scratch);
        }
    }
}

/// Separable 5-point operator `A = R (x) I + I (x) Z` on the interior cells,
/// with the solution's boundary conditions folded in.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: MeridianGrid,
    radial: Tridiagonal,
    axial: Tridiagonal,
    parity: AxisParity,
    bc: Boundaries,
    modes: Option<AxialModes>,
    factors: Vec<Thomas>,
}

impl EllipticOperator {
    /// `radial_row(i)` returns the unfolded `(lower, diag, upper)` coefficients
    /// of the radial part at ring `i`; the axial part is `d_z^2`.
    pub fn new(
        grid: MeridianGrid,
        radial_row: impl Fn(usize) -> (f64, f64, f64),
        parity: AxisParity,
        bc: Boundaries,
    ) -> Result<Self> {
        let side = |bc: Option<BoundaryCondition>, name: &'static str| bc.ok_or(Error::MissingBoundary(name));
        let k_axis = homogeneous_factor(side(bc.axis, "axis")?, parity, grid.dr())?;
        let k_outer = homogeneous_factor(side(bc.outer, "outer")?, parity, grid.dr())?;
        let k_bottom = homogeneous_factor(side(bc.bottom, "bottom")?, parity, grid.dz())?;
        let k_top = homogeneous_factor(side(bc.top, "top")?, parity, grid.dz())?;

        let (nr, nz) = (grid.nr(), grid.nz());
        let mut radial = Tridiagonal {
            lower: vec![0.0; nr],
            diag: vec![0.0; nr],
            upper: vec![0.0; nr],
        };
        for i in 0..nr {
            let (l, d, u) = radial_row(i);
            radial.lower[i] = l;
            radial.diag[i] = d;
            radial.upper[i] = u;
        }
        radial.fold(k_axis, k_outer);

        let idz2 = 1.0 / (grid.dz() * grid.dz());
        let mut axial = Tridiagonal {
            lower: vec![idz2; nz],
            diag: vec![-2.0 * idz2; nz],
            upper: vec![idz2; nz],
        };
        axial.fold(k_bottom, k_top);

        let modes = AxialModes::new(nz, grid.dz(), k_bottom, k_top);
        let factors = match &modes {
            Some(m) => m.eig.iter().map(|&e| Thomas::new(&radial, e)).collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            grid,
            radial,
            axial,
            parity,
            bc,
            modes,
            factors,
        })
    }

    pub fn grid(&self) -> &MeridianGrid {
        &self.grid
    }

    pub fn radial(&self) -> &Tridiagonal {
        &self.radial
    }

    /// `A x` on an `nr x nz` interior array.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (nr, nz) = (self.grid.nr(), self.grid.nz());
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut y = Array2::zeros((nr, nz));
        let ys = y.as_slice_mut().expect("fresh array");
        let (rl, rd, ru) = (&self.radial.lower, &self.radial.diag, &self.radial.upper);
        let (zl, zd, zu) = (&self.axial.lower, &self.axial.diag, &self.axial.upper);
        for i in 0..nr {
            let row = &xs[i * nz..(i + 1) * nz];
            let out = &mut ys[i * nz..(i + 1) * nz];
            for j in 0..nz {
                let mut acc = (rd[i] + zd[j]) * row[j];
                if j > 0 {
                    acc += zl[j] * row[j - 1];
                }
                if j + 1 < nz {
                    acc += zu[j] * row[j + 1];
                }
                out[j] = acc;
            }
            if i > 0 {
                let below = &xs[(i - 1) * nz..i * nz];
                out.iter_mut().zip(below).for_each(|(o, v)| *o += rl[i] * v);
            }
            if i + 1 < nr {
                let above = &xs[(i + 1) * nz..(i + 2) * nz];
                out.iter_mut().zip(above).for_each(|(o, v)| *o += ru[i] * v);
            }
        }
        y
    }

    fn relative_residual(&self, x: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn == 0.0 {
            return if x.iter().all(|v| *v == 0.0) { 0.0 } else { f64::INFINITY };
        }
        let ax = self.apply(x);
        let rn = ax.iter().zip(b.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        rn / bn
    }

    /// Solves `A x = rhs` on the interior. The returned field carries the
    /// operator's boundary conditions with ghosts filled.
    pub fn solve(&self, rhs: ArrayView2<'_, f64>, opts: &SolverOptions) -> Result<(ScalarField, SolveReport)> {
        let (nr, nz) = (self.grid.nr(), self.grid.nz());
        if rhs.dim() != (nr, nz) {
            return Err(Error::GridMismatch(format!("rhs shape {:?} vs {nr}x{nz}", rhs.dim())));
        }
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(Some("elliptic right-hand side".into())));
        }
        let (x, iterations) = match opts.method {
            SolverMethod::Direct => (self.solve_direct(rhs)?, 1),
            SolverMethod::ConjugateGradient => self.solve_cg(rhs, opts)?,
        };
        let relative_residual = self.relative_residual(x.view(), rhs);
        if !(relative_residual <= opts.tol) {
            return Err(Error::Solver {
                method: opts.method.name(),
                residual: relative_residual,
                iterations,
                reason: format!("tolerance {:.1e} not reached", opts.tol),
            });
        }
        let mut out = ScalarField::zeros(self.grid, self.parity, self.bc);
        out.set_interior(x.view())?;
        out.fill_ghosts()?;
        Ok((
            out,
            SolveReport {
                method: opts.method,
                iterations,
                relative_residual,
            },
        ))
    }

    fn solve_direct(&self, rhs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let modes = self.modes.as_ref().ok_or_else(|| Error::Solver {
            method: "direct",
            residual: f64::NAN,
            iterations: 0,
            reason: "axial boundary pair has no closed-form eigenbasis; use cg".into(),
        })?;
        let mut scratch = modes.scratch();
        let mut buf = rhs.as_standard_layout().into_owned();
        for mut row in buf.rows_mut() {
            modes.forward(row.as_slice_mut().expect("row-major rhs"), &mut scratch);
        }
        // one contiguous row per axial mode
        let mut yhat = buf.t().as_standard_layout().into_owned();
        for (m, fac) in self.factors.iter().enumerate() {
            fac.solve_in_place(yhat.row_mut(m).into_slice().expect("row-major modal array"));
        }
        // orthonormal round trip: the type-III transform halves the one mode
        // whose squared norm is 1/n instead of 2/n, so the scale is uniform
        let scale = 2.0 / self.grid.nz() as f64;
        let mut x = yhat.t().as_standard_layout().into_owned();
        for mut row in x.rows_mut() {
            let row = row.as_slice_mut().expect("row-major solution");
            row.iter_mut().for_each(|v| *v *= scale);
            modes.backward(row, &mut scratch);
        }
        Ok(x)
    }

    fn solve_cg(&self, rhs: ArrayView2<'_, f64>, opts: &SolverOptions) -> Result<(Array2<f64>, usize)> {
        let weight = self.radial.symmetrizer().ok_or_else(|| Error::Solver {
            method: "cg",
            residual: f64::NAN,
            iterations: 0,
            reason: "operator is not symmetrizable by a diagonal weight".into(),
        })?;
        let (nr, nz) = (self.grid.nr(), self.grid.nz());
        let max_iter = opts.max_iter.unwrap_or(50 * nr.max(nz));
        // work with the positive definite -A
        let b = rhs.mapv(|v| -v);
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = Array2::<f64>::zeros((nr, nz));
        if bn == 0.0 {
            return Ok((x, 0));
        }
        let dot = |a: &Array2<f64>, c: &Array2<f64>| -> f64 {
            let mut acc = 0.0;
            for i in 0..nr {
                let mut row = 0.0;
                for j in 0..nz {
                    row += a[[i, j]] * c[[i, j]];
                }
                acc += weight[i] * row;
            }
            acc
        };
        let inv_diag = Array2::from_shape_fn((nr, nz), |(i, j)| -1.0 / (self.radial.diag[i] + self.axial.diag[j]));
        let mut r = b.clone();
        let mut z = &r * &inv_diag;
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=max_iter {
            let ap = self.apply(p.view()).mapv(|v| -v);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Solver {
                    method: "cg",
                    residual: r.iter().map(|v| v * v).sum::<f64>().sqrt() / bn,
                    iterations: it,
                    reason: "operator is not positive definite".into(),
                });
            }
            let alpha = rz / pap;
            x.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &ap);
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bn;
            // stop a little below the requested level so the recomputed
            // residual also passes
            if rn <= 0.5 * opts.tol {
                return Ok((x, it));
            }
            z = &r * &inv_diag;
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &z + &(beta * &p);
        }
        let residual = self.relative_residual(x.view(), rhs);
        Err(Error::Solver {
            method: "cg",
            residual,
            iterations: max_iter,
            reason: "iteration limit reached".into(),
        })
    }
}

/// Boundary conditions of `Omega`: zero on the wall and the lids, even at the axis.
pub fn omega_boundaries() -> Boundaries {
    Boundaries::radial_axial(BoundaryCondition::Parity, BoundaryCondition::Dirichlet(0.0), BoundaryCondition::Dirichlet(0.0))
}

/// Boundary conditions of `psi` and `chi = psi / r^2`.
pub fn stream_boundaries() -> Boundaries {
    omega_boundaries()
}

/// Boundary conditions of `phi = v_r / r`.
pub fn vr_over_r_boundaries() -> Boundaries {
    Boundaries::radial_axial(BoundaryCondition::Parity, BoundaryCondition::Dirichlet(0.0), BoundaryCondition::Neumann(0.0))
}

/// Radial rows of `(1/r^3) d_r (r^3 d_r)` in flux form. The axis face has zero
/// radius, so the first row needs no ghost.
pub fn stream_radial_row(grid: &MeridianGrid, i: usize) -> (f64, f64, f64) {
    let idr2 = 1.0 / (grid.dr() * grid.dr());
    let r3 = grid.r(i as isize).powi(3);
    let lo = grid.r_face(i as isize - 1).powi(3) / r3 * idr2;
    let up = grid.r_face(i as isize).powi(3) / r3 * idr2;
    (lo, -(lo + up), up)
}

/// Radial rows of `L_omega`: conservative `(1/r) d_r(r d_r)` plus the centered
/// drift `(2/r) d_r`.
pub fn biot_radial_row(grid: &MeridianGrid, i: usize) -> (f64, f64, f64) {
    let (dr, r) = (grid.dr(), grid.r(i as isize));
    let idr2 = 1.0 / (dr * dr);
    let (rm, rp) = (grid.r_face(i as isize - 1), grid.r_face(i as isize));
    let lo = rm / r * idr2 - 1.0 / (r * dr);
    let up = rp / r * idr2 + 1.0 / (r * dr);
    (lo, -(rm + rp) / r * idr2, up)
}

/// Both reconstruction operators for one grid, factored once.
#[derive(Debug, Clone)]
pub struct VelocitySolver {
    grid: MeridianGrid,
    stream: EllipticOperator,
    biot: EllipticOperator,
    options: SolverOptions,
}

impl VelocitySolver {
    pub fn new(grid: MeridianGrid, options: SolverOptions) -> Result<Self> {
        if !(options.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("solver tolerance must be positive, got {}", options.tol)));
        }
        let stream = EllipticOperator::new(grid, |i| stream_radial_row(&grid, i), AxisParity::Even, stream_boundaries())?;
        let biot = EllipticOperator::new(grid, |i| biot_radial_row(&grid, i), AxisParity::Even, vr_over_r_boundaries())?;
        Ok(Self {
            grid,
            stream,
            biot,
            options,
        })
    }

    pub fn grid(&self) -> &MeridianGrid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Solves for `chi = psi / r^2`.
    pub fn solve_chi(&self, omega: &ScalarField) -> Result<(ScalarField, SolveReport)> {
        self.grid.same_as(omega.grid())?;
        let rhs = omega.interior().mapv(|v| -v);
        self.stream.solve(rhs.view(), &self.options)
    }

    /// Stokes stream function with `psi = 0` on the wall and lids and the
    /// `psi ~ r^2` closure at the axis, ghosts filled.
    pub fn solve_stream(&self, omega: &ScalarField) -> Result<ScalarField> {
        let (chi, _) = self.solve_chi(omega)?;
        stream_from_chi(&chi)
    }

    /// `phi = v_r / r` from `L_omega phi = d_z Omega`, ghosts filled.
    pub fn solve_vr_over_r(&self, omega: &ScalarField) -> Result<ScalarField> {
        self.grid.same_as(omega.grid())?;
        let mut om = omega.clone();
        if !om.ghosts_filled() {
            om.fill_ghosts()?;
        }
        let rhs = d_z(&om)?;
        let (phi, _) = self.biot.solve(rhs.interior(), &self.options)?;
        Ok(phi)
    }
}

/// `psi = r^2 chi` at cell centers, ghosts from the stream conditions.
pub fn stream_from_chi(chi: &ScalarField) -> Result<ScalarField> {
    let mut psi = chi.map_interior(|v, r, _| r * r * v).with_boundaries(AxisParity::Even, stream_boundaries());
    psi.fill_ghosts()?;
    Ok(psi)
}

/// `v_r = -(1/r) d_z psi`, `v_z = (1/r) d_r psi` with centered differences.
///
/// Ghost values are produced by the same formulas wherever the stencil of
/// `psi` reaches (radial ghosts of `v_r`, z-ghosts of `v_z`), so the discrete
/// divergence telescopes to rounding and the wall flux `r v_r` averaged to the
/// face vanishes. The remaining ghosts copy the adjacent cell.
pub fn velocity_from_stream(psi: &ScalarField) -> Result<MeridianVector> {
    psi.require_filled()?;
    let g = *psi.grid();
    let (nr, nz, st) = (g.nr(), g.nz(), g.stride());
    let (cr, cz) = (0.5 / g.dr(), 0.5 / g.dz());
    let p = psi.raw();
    let mut vr = ScalarField::derived(g);
    let mut vz = ScalarField::derived(g);
    {
        let out = vr.raw_mut();
        // padded rows 0..=nr+1 are rings -1..=nr
        for row in 0..nr + 2 {
            let r = g.r(row as isize - 1);
            let base = row * st;
            for j in 1..=nz {
                out[base + j] = -(p[base + j + 1] - p[base + j - 1]) * cz / r;
            }
            out[base] = out[base + 1];
            out[base + nz + 1] = out[base + nz];
        }
    }
    {
        let out = vz.raw_mut();
        for row in 1..=nr {
            let r = g.r(row as isize - 1);
            let base = row * st;
            for j in 0..nz + 2 {
                out[base + j] = (p[base + st + j] - p[base - st + j]) * cr / r;
            }
        }
        out.copy_within(st..2 * st, 0);
        out.copy_within(nr * st..(nr + 1) * st, (nr + 1) * st);
    }
    vr.mark_filled();
    vz.mark_filled();
    MeridianVector::new(vr, vz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{divergence, grad_meridian, l_omega};
    use std::f64::consts::PI;

    #[test]
    fn axial_modes_diagonalize_the_folded_matrix() {
        for (kb, kt) in [(-1.0, -1.0), (1.0, 1.0)] {
            let nz = 12;
            let dz = 1.0 / nz as f64;
            let modes = AxialModes::new(nz, dz, kb, kt).unwrap();
            let q = modes.basis();
            let idz2 = 1.0 / (dz * dz);
            let mut t = Tridiagonal {
                lower: vec![idz2; nz],
                diag: vec![-2.0 * idz2; nz],
                upper: vec![idz2; nz],
            };
            t.fold(kb, kt);
            for m in 0..nz {
                for j in 0..nz {
                    let mut tv = t.diag[j] * q[[j, m]];
                    if j > 0 {
                        tv += t.lower[j] * q[[j - 1, m]];
                    }
                    if j + 1 < nz {
                        tv += t.upper[j] * q[[j + 1, m]];
                    }
                    assert!((tv - modes.eig[m] * q[[j, m]]).abs() < 1e-9 * idz2);
                }
            }
            let qtq = q.t().dot(&q);
            for a in 0..nz {
                for b in 0..nz {
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((qtq[[a, b]] - e).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn fast_transform_matches_the_dense_basis() {
        for (k, nz) in [(-1.0, 12), (1.0, 12), (-1.0, 7), (1.0, 7)] {
            let modes = AxialModes::new(nz, 1.0 / nz as f64, k, k).unwrap();
            let q = modes.basis();
            let x: Vec<f64> = (0..nz).map(|j| ((j * j) as f64 * 0.37).sin()).collect();
            let dense = q.t().dot(&ndarray::aview1(&x));
            let mut fast = x.clone();
            let mut scratch = modes.scratch();
            modes.forward(&mut fast, &mut scratch);
            let special = if modes.sine { nz - 1 } else { 0 };
            for m in 0..nz {
                // forward omits the column norm
                let norm = (if m == special { 1.0 } else { 2.0 } / nz as f64).sqrt();
                assert!((fast[m] * norm - dense[m]).abs() < 1e-12, "mode {m}");
            }
            fast.iter_mut().for_each(|v| *v *= 2.0 / nz as f64);
            modes.backward(&mut fast, &mut scratch);
            for j in 0..nz {
                assert!((fast[j] - x[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn biot_rows_reproduce_l_omega() {
        let g = MeridianGrid::unit(10, 7).unwrap();
        let op = EllipticOperator::new(g, |i| biot_radial_row(&g, i), AxisParity::Even, vr_over_r_boundaries()).unwrap();
        let f = ScalarField::from_fn(g, AxisParity::Even, vr_over_r_boundaries(), |r, z| {
            (1.3 - r * r) * (2.0 * z).cos() + r
        })
        .filled()
        .unwrap();
        let direct = l_omega(&f).unwrap();
        let assembled = op.apply(f.interior());
        for (a, b) in direct.interior().iter().zip(assembled.iter()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn direct_and_cg_agree_on_stream_problem() {
        let g = MeridianGrid::unit(24, 20).unwrap();
        let omega = ScalarField::from_fn(g, AxisParity::Even, omega_boundaries(), |r, z| {
            (1.0 - r * r) * (PI * z).sin() + 0.3 * (1.0 - r * r) * r * r * (3.0 * PI * z).sin()
        });
        let direct = VelocitySolver::new(g, SolverOptions::default()).unwrap();
        let cg = VelocitySolver::new(
            g,
            SolverOptions {
                method: SolverMethod::ConjugateGradient,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        let (a, ra) = direct.solve_chi(&omega).unwrap();
        let (b, rb) = cg.solve_chi(&omega).unwrap();
        assert!(ra.relative_residual < 1e-12 && rb.relative_residual <= 1e-10);
        assert!(rb.iterations > 1);
        let diff = a.interior().iter().zip(b.interior().iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = a.interior().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(diff < 1e-8 * scale, "{diff} vs {scale}");
    }

    #[test]
    fn cg_refuses_non_symmetrizable_operator() {
        let g = MeridianGrid::unit(8, 8).unwrap();
        let op = EllipticOperator::new(g, |i| biot_radial_row(&g, i), AxisParity::Even, vr_over_r_boundaries()).unwrap();
        let rhs = Array2::from_elem((8, 8), 1.0);
        let opts = SolverOptions {
            method: SolverMethod::ConjugateGradient,
            ..SolverOptions::default()
        };
        assert!(matches!(op.solve(rhs.view(), &opts), Err(Error::Solver { .. })));
    }

    #[test]
    fn unreachable_tolerance_reports_residual() {
        let g = MeridianGrid::unit(16, 16).unwrap();
        let opts = SolverOptions {
            tol: 1e-30,
            ..SolverOptions::default()
        };
        let solver = VelocitySolver::new(g, opts).unwrap();
        let omega = ScalarField::from_fn(g, AxisParity::Even, omega_boundaries(), |r, z| (1.0 - r * r) * (PI * z).sin());
        match solver.solve_stream(&omega) {
            Err(Error::Solver { residual, .. }) => assert!(residual > 0.0 && residual < 1e-10),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn zero_vorticity_gives_zero_flow() {
        let g = MeridianGrid::unit(16, 16).unwrap();
        let solver = VelocitySolver::new(g, SolverOptions::default()).unwrap();
        let omega = ScalarField::zeros(g, AxisParity::Even, omega_boundaries());
        let psi = solver.solve_stream(&omega).unwrap();
        assert!(psi.interior().iter().all(|v| *v == 0.0));
        let v = velocity_from_stream(&psi).unwrap();
        assert_eq!(v.max_abs(), (0.0, 0.0));
        let phi = solver.solve_vr_over_r(&omega).unwrap();
        assert!(phi.interior().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn velocity_of_quadratic_stream_function() {
        let g = MeridianGrid::unit(16, 16).unwrap();
        let psi = ScalarField::sampled_with_ghosts(g, AxisParity::Even, stream_boundaries(), |r, z| r * r * z * (1.0 - z));
        let v = velocity_from_stream(&psi).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let (r, z) = (g.r(i), g.z(j));
                assert!((v.r.at(i, j) + r * (1.0 - 2.0 * z)).abs() < 1e-13);
                assert!((v.z.at(i, j) - 2.0 * z * (1.0 - z)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn solved_velocity_is_divergence_free_and_linear() {
        let g = MeridianGrid::unit(32, 24).unwrap();
        let solver = VelocitySolver::new(g, SolverOptions::default()).unwrap();
        let omega = ScalarField::from_fn(g, AxisParity::Even, omega_boundaries(), |r, z| {
            (1.0 - r * r) * ((PI * z).sin() + 0.5 * (2.0 * PI * z).sin() * r)
        });
        let psi = solver.solve_stream(&omega).unwrap();
        let v = velocity_from_stream(&psi).unwrap();
        let div = divergence(&v).unwrap();
        let gr = grad_meridian(&v.r).unwrap().l2_norm().unwrap() + grad_meridian(&v.z).unwrap().l2_norm().unwrap();
        let maxdiv = div.interior().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(maxdiv <= 1e-12 * gr, "{maxdiv} vs {gr}");

        let mut scaled = omega.clone();
        scaled.scale(-2.5);
        let psi2 = solver.solve_stream(&scaled).unwrap();
        let scale = psi.interior().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for (a, b) in psi.interior().iter().zip(psi2.interior().iter()) {
            assert!((b + 2.5 * a).abs() <= 1e-10 * scale);
        }
    }
}
