//! Cell-centered meridian mesh, scalar fields with one ghost layer, and the
//! cylindrical quadrature `r dr dz` used by every norm.
//!
//! Storage is an `(nr+2) x (nz+2)` array, radial index major. Interior cell
//! `(i, j)` with `i in 0..nr`, `j in 0..nz` sits at array index `(i+1, j+1)`;
//! ghost cells are addressed with `i = -1`, `i = nr`, `j = -1`, `j = nz`.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeridianGrid {
    nr: usize,
    nz: usize,
    radius: f64,
    height: f64,
    dr: f64,
    dz: f64,
}

impl MeridianGrid {
    pub fn new(nr: usize, nz: usize, radius: f64, height: f64) -> Result<Self> {
        if nr < 2 || nz < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 cells per direction, got {nr} x {nz}"
            )));
        }
        if !(radius.is_finite() && radius > 0.0 && height.is_finite() && height > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "domain extents must be positive, got R = {radius}, H = {height}"
            )));
        }
        Ok(Self {
            nr,
            nz,
            radius,
            height,
            dr: radius / nr as f64,
            dz: height / nz as f64,
        })
    }

    /// Unit cylinder `R = H = 1`.
    pub fn unit(nr: usize, nz: usize) -> Result<Self> {
        Self::new(nr, nz, 1.0, 1.0)
    }

    pub fn nr(&self) -> usize {
        self.nr
    }
    pub fn nz(&self) -> usize {
        self.nz
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn height(&self) -> f64 {
        self.height
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// Largest mesh spacing.
    pub fn h(&self) -> f64 {
        self.dr.max(self.dz)
    }

    /// Cell-center radius; valid for ghost indices too (`r(-1) = -dr/2`).
    #[inline]
    pub fn r(&self, i: isize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    #[inline]
    pub fn z(&self, j: isize) -> f64 {
        (j as f64 + 0.5) * self.dz
    }

    /// Radius of the face between cells `i` and `i+1`.
    #[inline]
    pub fn r_face(&self, i: isize) -> f64 {
        (i as f64 + 1.0) * self.dr
    }

    /// Quadrature weight of interior cell row `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.r(i as isize) * self.dr * self.dz
    }

    pub(crate) fn shape(&self) -> (usize, usize) {
        (self.nr + 2, self.nz + 2)
    }

    /// Row stride of the padded storage.
    #[inline]
    pub(crate) fn stride(&self) -> usize {
        self.nz + 2
    }

    /// Flat index of interior cell `(i, j)` in the padded storage.
    #[inline]
    pub(crate) fn flat(&self, i: usize, j: usize) -> usize {
        (i + 1) * (self.nz + 2) + j + 1
    }

    pub(crate) fn same_as(&self, other: &MeridianGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} on ({}, {}) vs {}x{} on ({}, {})",
                self.nr, self.nz, self.radius, self.height, other.nr, other.nz, other.radius, other.height
            )))
        }
    }
}

/// Behavior of the continuous function under `r -> -r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisParity {
    Even,
    Odd,
}

impl AxisParity {
    pub fn sign(self) -> f64 {
        match self {
            AxisParity::Even => 1.0,
            AxisParity::Odd => -1.0,
        }
    }
}

/// Boundary relation on one side. Normal derivatives are outward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet(f64),
    Neumann(f64),
    /// `alpha * u + beta * du/dn = 0`.
    Robin { alpha: f64, beta: f64 },
    /// Reflection by the field's axis parity. Axis side only.
    Parity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Axis,
    Outer,
    Bottom,
    Top,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Axis => "axis",
            Side::Outer => "outer",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Boundaries {
    pub axis: Option<BoundaryCondition>,
    pub outer: Option<BoundaryCondition>,
    pub bottom: Option<BoundaryCondition>,
    pub top: Option<BoundaryCondition>,
}

impl Boundaries {
    pub fn new(
        axis: BoundaryCondition,
        outer: BoundaryCondition,
        bottom: BoundaryCondition,
        top: BoundaryCondition,
    ) -> Self {
        Self {
            axis: Some(axis),
            outer: Some(outer),
            bottom: Some(bottom),
            top: Some(top),
        }
    }

    /// Same condition on both z-sides.
    pub fn radial_axial(axis: BoundaryCondition, outer: BoundaryCondition, z_sides: BoundaryCondition) -> Self {
        Self::new(axis, outer, z_sides, z_sides)
    }

    pub fn unset() -> Self {
        Self::default()
    }

    pub fn get(&self, side: Side) -> Option<BoundaryCondition> {
        match side {
            Side::Axis => self.axis,
            Side::Outer => self.outer,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }

    fn require(&self, side: Side) -> Result<BoundaryCondition> {
        let bc = self.get(side).ok_or(Error::MissingBoundary(side.name()))?;
        if matches!(bc, BoundaryCondition::Parity) && side != Side::Axis {
            return Err(Error::InvalidBoundary(format!(
                "parity reflection only applies at the axis, not the {} side",
                side.name()
            )));
        }
        Ok(bc)
    }
}

/// Ghost value for a two-point boundary relation, `dn` being the normal spacing.
fn ghost_value(bc: BoundaryCondition, parity: AxisParity, interior: f64, dn: f64) -> Result<f64> {
    Ok(match bc {
        BoundaryCondition::Dirichlet(g) => 2.0 * g - interior,
        BoundaryCondition::Neumann(g) => interior + g * dn,
        BoundaryCondition::Robin { alpha, beta } => interior * robin_factor(alpha, beta, dn)?,
        BoundaryCondition::Parity => parity.sign() * interior,
    })
}

/// `ghost = k * interior` for `alpha (g+u)/2 + beta (g-u)/dn = 0`.
pub(crate) fn robin_factor(alpha: f64, beta: f64, dn: f64) -> Result<f64> {
    let den = 2.0 * beta + alpha * dn;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::InvalidBoundary(format!(
            "degenerate robin coefficients alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok((2.0 * beta - alpha * dn) / den)
}

/// Multiplier `k` with `ghost = k * interior` for a homogeneous condition.
pub(crate) fn homogeneous_factor(bc: BoundaryCondition, parity: AxisParity, dn: f64) -> Result<f64> {
    match bc {
        BoundaryCondition::Dirichlet(g) | BoundaryCondition::Neumann(g) if g != 0.0 => Err(Error::InvalidBoundary(
            format!("elliptic operators need homogeneous conditions, got {bc:?}"),
        )),
        _ => ghost_value(bc, parity, 1.0, dn),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: MeridianGrid,
    data: Array2<f64>,
    parity: AxisParity,
    bc: Boundaries,
    filled: bool,
}

impl ScalarField {
    pub fn zeros(grid: MeridianGrid, parity: AxisParity, bc: Boundaries) -> Self {
        Self {
            grid,
            data: Array2::zeros(grid.shape()),
            parity,
            bc,
            filled: false,
        }
    }

    /// Result field of an operator: no boundary descriptor, ghosts zero.
    pub fn derived(grid: MeridianGrid) -> Self {
        Self::zeros(grid, AxisParity::Even, Boundaries::unset())
    }

    /// Samples `f(r, z)` at interior cell centers. Ghosts are left unfilled.
    pub fn from_fn(grid: MeridianGrid, parity: AxisParity, bc: Boundaries, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, parity, bc);
        for i in 0..grid.nr {
            for j in 0..grid.nz {
                out.data[[i + 1, j + 1]] = f(grid.r(i as isize), grid.z(j as isize));
            }
        }
        out
    }

    /// Samples `f` at every cell center including ghosts and marks the ghost
    /// layer as filled. Used for manufactured solutions with exact ghosts.
    pub fn sampled_with_ghosts(
        grid: MeridianGrid,
        parity: AxisParity,
        bc: Boundaries,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid, parity, bc);
        for a in 0..grid.nr + 2 {
            for b in 0..grid.nz + 2 {
                let (i, j) = (a as isize - 1, b as isize - 1);
                out.data[[a, b]] = f(grid.r(i), grid.z(j));
            }
        }
        out.filled = true;
        out
    }

    pub fn grid(&self) -> &MeridianGrid {
        &self.grid
    }
    pub fn parity(&self) -> AxisParity {
        self.parity
    }
    pub fn boundaries(&self) -> &Boundaries {
        &self.bc
    }
    pub fn ghosts_filled(&self) -> bool {
        self.filled
    }

    pub fn with_boundaries(mut self, parity: AxisParity, bc: Boundaries) -> Self {
        self.parity = parity;
        self.bc = bc;
        self.filled = false;
        self
    }

    /// Value at cell `(i, j)`; ghost indices `-1` and `n` are allowed.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.data[[(i + 1) as usize, (j + 1) as usize]]
    }

    /// Sets an interior or ghost value; invalidates the ghost layer.
    pub fn set(&mut self, i: isize, j: isize, value: f64) {
        self.data[[(i + 1) as usize, (j + 1) as usize]] = value;
        self.filled = false;
    }

    pub fn interior(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![1..self.grid.nr + 1, 1..self.grid.nz + 1])
    }

    /// Interior values copied into a dense `nr x nz` array.
    pub fn interior_owned(&self) -> Array2<f64> {
        self.interior().to_owned()
    }

    /// Overwrites the interior; invalidates the ghost layer.
    pub fn set_interior(&mut self, values: ArrayView2<'_, f64>) -> Result<()> {
        if values.dim() != (self.grid.nr, self.grid.nz) {
            return Err(Error::GridMismatch(format!(
                "interior shape {:?} vs grid {}x{}",
                values.dim(),
                self.grid.nr,
                self.grid.nz
            )));
        }
        let (nr, nz) = (self.grid.nr, self.grid.nz);
        self.data.slice_mut(s![1..nr + 1, 1..nz + 1]).assign(&values);
        self.filled = false;
        Ok(())
    }

    /// Padded storage, row-major with stride `nz + 2`.
    pub(crate) fn raw(&self) -> &[f64] {
        self.data.as_slice().expect("field storage is contiguous")
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        self.filled = false;
        self.data.as_slice_mut().expect("field storage is contiguous")
    }

    /// Marks ghosts valid after they were written directly.
    pub(crate) fn mark_filled(&mut self) {
        self.filled = true;
    }

    pub fn require_filled(&self) -> Result<()> {
        if self.filled {
            Ok(())
        } else {
            Err(Error::GhostsNotFilled)
        }
    }

    pub fn require_finite(&self) -> Result<()> {
        let (nr, nz, st) = (self.grid.nr, self.grid.nz, self.grid.stride());
        let raw = self.raw();
        if (1..=nr).all(|row| raw[row * st + 1..row * st + nz + 1].iter().all(|v| v.is_finite())) {
            Ok(())
        } else {
            Err(Error::NonFinite(None))
        }
    }

    /// Populates the ghost layer from the interior so that each discrete
    /// boundary relation holds exactly. Radial sides are filled first, then the
    /// z-sides across the full padded width, which also sets the corners.
    pub fn fill_ghosts(&mut self) -> Result<()> {
        let g = self.grid;
        let axis = self.bc.require(Side::Axis)?;
        let outer = self.bc.require(Side::Outer)?;
        let bottom = self.bc.require(Side::Bottom)?;
        let top = self.bc.require(Side::Top)?;
        let (nr, nz) = (g.nr as isize, g.nz as isize);
        for j in 0..nz {
            let v0 = self.at(0, j);
            let vn = self.at(nr - 1, j);
            let ga = ghost_value(axis, self.parity, v0, g.dr)?;
            let go = ghost_value(outer, self.parity, vn, g.dr)?;
            self.data[[0, (j + 1) as usize]] = ga;
            self.data[[(nr + 1) as usize, (j + 1) as usize]] = go;
        }
        for i in -1..=nr {
            let v0 = self.at(i, 0);
            let vn = self.at(i, nz - 1);
            let gb = ghost_value(bottom, self.parity, v0, g.dz)?;
            let gt = ghost_value(top, self.parity, vn, g.dz)?;
            self.data[[(i + 1) as usize, 0]] = gb;
            self.data[[(i + 1) as usize, (nz + 1) as usize]] = gt;
        }
        self.filled = true;
        Ok(())
    }

    /// Builder form of [`ScalarField::fill_ghosts`].
    pub fn filled(mut self) -> Result<Self> {
        self.fill_ghosts()?;
        Ok(self)
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.mapv_inplace(|v| alpha * v);
    }

    /// Interior-wise map into a derived field.
    pub fn map_interior(&self, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        let g = self.grid;
        let mut out = ScalarField::derived(g);
        let src = self.raw();
        let dst = out.raw_mut();
        for i in 0..g.nr {
            let r = g.r(i as isize);
            let k0 = g.flat(i, 0);
            for j in 0..g.nz {
                dst[k0 + j] = f(src[k0 + j], r, g.z(j as isize));
            }
        }
        out
    }
}

/// Pure form of the ghost fill.
pub fn fill_ghosts(f: &ScalarField) -> Result<ScalarField> {
    f.clone().filled()
}

/// Pairwise (cascade) summation. Fixed reduction tree for a fixed length, so
/// results are bit-reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Weighted sum `sum_ij w_i g(f_ij)` in row-major pairwise order.
pub(crate) fn weighted_sum(f: &ScalarField, g: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid;
    let raw = f.raw();
    let mut terms = Vec::with_capacity(grid.nr * grid.nz);
    for i in 0..grid.nr {
        let w = grid.weight(i);
        let row = grid.flat(i, 0);
        for v in &raw[row..row + grid.nz] {
            terms.push(g(*v) * w);
        }
    }
    pairwise_sum(&terms)
}

/// `(sum_ij |f_ij|^p w_ij)^(1/p)`, midpoint quadrature of the cylindrical
/// measure without the `2 pi`.
pub fn weighted_lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("norm exponent must be >= 1, got {p}")));
    }
    f.require_finite()?;
    let sum = if p == 2.0 {
        weighted_sum(f, |v| v * v)
    } else if p == 4.0 {
        weighted_sum(f, |v| (v * v) * (v * v))
    } else {
        weighted_sum(f, |v| v.abs().powf(p))
    };
    Ok(if p == 2.0 { sum.sqrt() } else { sum.powf(1.0 / p) })
}

/// Nodal sup over interior cells.
pub fn linf_norm(f: &ScalarField) -> Result<f64> {
    f.require_finite()?;
    Ok(f.interior().iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Weighted inner product over interior cells.
pub fn weighted_inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid.same_as(&b.grid)?;
    let grid = a.grid;
    let (ra, rb) = (a.raw(), b.raw());
    let mut terms = Vec::with_capacity(grid.nr * grid.nz);
    for i in 0..grid.nr {
        let w = grid.weight(i);
        for j in 0..grid.nz {
            let k = grid.flat(i, j);
            terms.push(ra[k] * rb[k] * w);
        }
    }
    Ok(pairwise_sum(&terms))
}
