//! Uniform rectangular grids, MAC-staggered fields and the discrete operators
//! shared by the state, linearized and adjoint solvers.
//!
//! Layout: scalars live at cell centres `(i, j)`, stored row-major with
//! index `j * nx + i` (row 0 at the bottom). The x-velocity lives on the
//! `(nx + 1) * ny` vertical faces (`j * (nx + 1) + i`, face `i` at
//! `x = i * hx`) and the y-velocity on the `nx * (ny + 1)` horizontal faces
//! (`j * nx + i`, face `j` at `y = j * hy`).
//!
//! Ghost-cell conventions:
//! - Neumann: the ghost mirrors the adjacent cell, so the boundary-face
//!   gradient is zero.
//! - Robin `d_n f = K (g - f)`: the ghost is chosen so that the normal
//!   derivative and the face value `(f_ghost + f_cell) / 2` satisfy the
//!   condition at the face. The outward flux then reads
//!   `K_eff (g - f_cell)` with `K_eff = 2K / (2 + hK)`.
//! - Dirichlet `f = g` on the face: the limit `K -> inf`, `K_eff = 2 / h`.

use crate::error::{ChbError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(ChbError::InvalidGrid(format!(
                "cell counts must be >= 2, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(ChbError::InvalidGrid(format!(
                "edge lengths must be positive and finite, got {lx}x{ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn num_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn num_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn xface_center(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn yface_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), j as f64 * self.hy())
    }

    /// Quadrature weight of x-face `i`: trapezoidal, halved on the boundary.
    #[inline]
    pub fn xface_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx {
            0.5 * self.cell_area()
        } else {
            self.cell_area()
        }
    }

    #[inline]
    pub fn yface_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.ny {
            0.5 * self.cell_area()
        } else {
            self.cell_area()
        }
    }

    pub(crate) fn check_cells(&self, len: usize) -> Result<()> {
        if len != self.num_cells() {
            return Err(ChbError::mismatch(
                format!("{} cell values", self.num_cells()),
                format!("{len}"),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(ChbError::mismatch(self.describe(), other.describe()));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("{}x{} grid on {}x{}", self.nx, self.ny, self.lx, self.ly)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeSpec {
    horizon: f64,
    nt: usize,
}

impl TimeSpec {
    pub fn new(horizon: f64, nt: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ChbError::InvalidTime(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if nt == 0 {
            return Err(ChbError::InvalidTime("nt must be >= 1".into()));
        }
        Ok(Self { horizon, nt })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn tau(&self) -> f64 {
        self.horizon / self.nt as f64
    }
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau()
    }
}

/// Cell-centred scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.check_cells(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ChbError::NonFinite("scalar field".into()));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; the caller guarantees the length.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_cells());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.num_cells()],
        }
    }

    /// Samples `f(x, y)` at the cell centres.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.num_cells());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// `hx * hy * sum(a * b)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.grid.cell_area() * dot(&self.values, &other.values)
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Face-centred vector field on the MAC layout.
#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredVectorField {
    grid: GridSpec,
    xfaces: Vec<f64>,
    yfaces: Vec<f64>,
}

impl StaggeredVectorField {
    pub fn new(grid: GridSpec, xfaces: Vec<f64>, yfaces: Vec<f64>) -> Result<Self> {
        if xfaces.len() != grid.num_xfaces() || yfaces.len() != grid.num_yfaces() {
            return Err(ChbError::mismatch(
                format!("{}+{} face values", grid.num_xfaces(), grid.num_yfaces()),
                format!("{}+{}", xfaces.len(), yfaces.len()),
            ));
        }
        if xfaces.iter().chain(&yfaces).any(|v| !v.is_finite()) {
            return Err(ChbError::NonFinite("vector field".into()));
        }
        Ok(Self {
            grid,
            xfaces,
            yfaces,
        })
    }

    pub(crate) fn from_raw(grid: GridSpec, xfaces: Vec<f64>, yfaces: Vec<f64>) -> Self {
        debug_assert_eq!(xfaces.len(), grid.num_xfaces());
        debug_assert_eq!(yfaces.len(), grid.num_yfaces());
        Self {
            grid,
            xfaces,
            yfaces,
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(
            grid,
            vec![0.0; grid.num_xfaces()],
            vec![0.0; grid.num_yfaces()],
        )
    }

    /// Samples the two components at their own face centres.
    pub fn from_fn(
        grid: GridSpec,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut xf = Vec::with_capacity(grid.num_xfaces());
        for j in 0..grid.ny() {
            for i in 0..=grid.nx() {
                let (x, y) = grid.xface_center(i, j);
                xf.push(fx(x, y));
            }
        }
        let mut yf = Vec::with_capacity(grid.num_yfaces());
        for j in 0..=grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.yface_center(i, j);
                yf.push(fy(x, y));
            }
        }
        Self::from_raw(grid, xf, yf)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn xfaces(&self) -> &[f64] {
        &self.xfaces
    }
    pub fn yfaces(&self) -> &[f64] {
        &self.yfaces
    }

    pub fn is_finite(&self) -> bool {
        self.xfaces.iter().chain(&self.yfaces).all(|v| v.is_finite())
    }

    /// Trapezoidal face inner product (boundary faces carry half weight).
    pub fn inner(&self, other: &Self) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                let k = g.xface(i, j);
                s += g.xface_weight(i) * self.xfaces[k] * other.xfaces[k];
            }
        }
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                let k = g.yface(i, j);
                s += g.yface_weight(j) * self.yfaces[k] * other.yfaces[k];
            }
        }
        s
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.xfaces
            .iter()
            .chain(&self.yfaces)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zeroes the normal component on every boundary face.
    pub fn with_zero_normal_flux(mut self) -> Self {
        let g = self.grid;
        for j in 0..g.ny() {
            self.xfaces[g.xface(0, j)] = 0.0;
            self.xfaces[g.xface(g.nx(), j)] = 0.0;
        }
        for i in 0..g.nx() {
            self.yfaces[g.yface(i, 0)] = 0.0;
            self.yfaces[g.yface(i, g.ny())] = 0.0;
        }
        self
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-side Robin coefficients: `d_n f = K_side (g - f)`. `0` is Neumann,
/// `f64::INFINITY` is Dirichlet (`f = g` at the face).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobinBoundary {
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

impl RobinBoundary {
    pub fn uniform(k: f64) -> Result<Self> {
        Self {
            west: k,
            east: k,
            south: k,
            north: k,
        }
        .validated()
    }

    pub fn dirichlet() -> Self {
        Self {
            west: f64::INFINITY,
            east: f64::INFINITY,
            south: f64::INFINITY,
            north: f64::INFINITY,
        }
    }

    pub fn validated(self) -> Result<Self> {
        for (name, k) in [
            ("west", self.west),
            ("east", self.east),
            ("south", self.south),
            ("north", self.north),
        ] {
            if k.is_nan() || k < 0.0 {
                return Err(ChbError::InvalidParameter(format!(
                    "Robin coefficient on {name} side must be >= 0, got {k}"
                )));
            }
        }
        Ok(self)
    }
}

/// Flux transfer coefficient `K_eff` of a boundary face at distance `h/2`
/// from the adjacent cell centre.
#[inline]
pub fn robin_transfer(k: f64, h: f64) -> f64 {
    if k.is_infinite() {
        2.0 / h
    } else {
        2.0 * k / (2.0 + h * k)
    }
}

/// Robin Laplacian split as `Δf = linear + affine`.
#[derive(Clone, Debug, PartialEq)]
pub struct RobinLaplacian {
    /// Part proportional to `f` (Neumann stencil minus boundary transfer).
    pub linear: ScalarField,
    /// Boundary contribution `K_eff * g / h`; independent of `f`.
    pub affine: ScalarField,
}

pub fn gradient(f: &ScalarField) -> StaggeredVectorField {
    let g = *f.grid();
    let mut xf = vec![0.0; g.num_xfaces()];
    let mut yf = vec![0.0; g.num_yfaces()];
    gradient_raw(&g, f.values(), &mut xf, &mut yf);
    StaggeredVectorField::from_raw(g, xf, yf)
}

/// Checked against a declared grid.
pub fn gradient_on(grid: &GridSpec, f: &ScalarField) -> Result<StaggeredVectorField> {
    grid.check_same(f.grid())?;
    Ok(gradient(f))
}

pub fn divergence(v: &StaggeredVectorField) -> ScalarField {
    let g = *v.grid();
    let mut out = vec![0.0; g.num_cells()];
    divergence_raw(&g, v.xfaces(), v.yfaces(), &mut out);
    ScalarField::from_raw(g, out)
}

pub fn divergence_on(grid: &GridSpec, v: &StaggeredVectorField) -> Result<ScalarField> {
    grid.check_same(v.grid())?;
    Ok(divergence(v))
}

pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let mut out = vec![0.0; g.num_cells()];
    laplacian_neumann_raw(&g, f.values(), &mut out);
    ScalarField::from_raw(g, out)
}

pub fn laplacian_robin(f: &ScalarField, k: f64, ambient: f64) -> Result<RobinLaplacian> {
    laplacian_robin_sides(f, &RobinBoundary::uniform(k)?, ambient)
}

pub fn laplacian_robin_sides(
    f: &ScalarField,
    bc: &RobinBoundary,
    ambient: f64,
) -> Result<RobinLaplacian> {
    let bc = bc.validated()?;
    let g = *f.grid();
    let mut linear = vec![0.0; g.num_cells()];
    laplacian_neumann_raw(&g, f.values(), &mut linear);
    let mut affine = vec![0.0; g.num_cells()];
    for (c, t) in boundary_transfer(&g, &bc) {
        linear[c] -= t * f.values()[c];
        affine[c] += t * ambient;
    }
    Ok(RobinLaplacian {
        linear: ScalarField::from_raw(g, linear),
        affine: ScalarField::from_raw(g, affine),
    })
}

/// Midpoint rule.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid().cell_area() * f.values().iter().sum::<f64>()
}

/// Boundary transfer per cell, `K_eff / h` summed over its boundary faces.
/// Yields `(cell, coefficient)` pairs, one per boundary face.
pub(crate) fn boundary_transfer(
    g: &GridSpec,
    bc: &RobinBoundary,
) -> impl Iterator<Item = (usize, f64)> {
    let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
    let tw = robin_transfer(bc.west, hx) / hx;
    let te = robin_transfer(bc.east, hx) / hx;
    let ts = robin_transfer(bc.south, hy) / hy;
    let tn = robin_transfer(bc.north, hy) / hy;
    let grid = *g;
    let we = (0..ny).flat_map(move |j| [(grid.cell(0, j), tw), (grid.cell(nx - 1, j), te)]);
    let sn = (0..nx).flat_map(move |i| [(grid.cell(i, 0), ts), (grid.cell(i, ny - 1), tn)]);
    we.chain(sn).filter(|&(_, t)| t != 0.0)
}

pub(crate) fn gradient_raw(g: &GridSpec, f: &[f64], xf: &mut [f64], yf: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (rhx, rhy) = (1.0 / g.hx(), 1.0 / g.hy());
    for j in 0..ny {
        xf[g.xface(0, j)] = 0.0;
        xf[g.xface(nx, j)] = 0.0;
        for i in 1..nx {
            xf[g.xface(i, j)] = (f[g.cell(i, j)] - f[g.cell(i - 1, j)]) * rhx;
        }
    }
    for i in 0..nx {
        yf[g.yface(i, 0)] = 0.0;
        yf[g.yface(i, ny)] = 0.0;
    }
    for j in 1..ny {
        for i in 0..nx {
            yf[g.yface(i, j)] = (f[g.cell(i, j)] - f[g.cell(i, j - 1)]) * rhy;
        }
    }
}

/// Euclidean transpose of `gradient_raw`, accumulated into `f`.
pub(crate) fn gradient_transpose_add(g: &GridSpec, xf: &[f64], yf: &[f64], f: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (rhx, rhy) = (1.0 / g.hx(), 1.0 / g.hy());
    for j in 0..ny {
        for i in 1..nx {
            let c = xf[g.xface(i, j)] * rhx;
            f[g.cell(i, j)] += c;
            f[g.cell(i - 1, j)] -= c;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = yf[g.yface(i, j)] * rhy;
            f[g.cell(i, j)] += c;
            f[g.cell(i, j - 1)] -= c;
        }
    }
}

pub(crate) fn divergence_raw(g: &GridSpec, xf: &[f64], yf: &[f64], out: &mut [f64]) {
    let (rhx, rhy) = (1.0 / g.hx(), 1.0 / g.hy());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            out[g.cell(i, j)] = (xf[g.xface(i + 1, j)] - xf[g.xface(i, j)]) * rhx
                + (yf[g.yface(i, j + 1)] - yf[g.yface(i, j)]) * rhy;
        }
    }
}

/// Euclidean transpose of `divergence_raw`, accumulated into the faces.
pub(crate) fn divergence_transpose_add(g: &GridSpec, c: &[f64], xf: &mut [f64], yf: &mut [f64]) {
    let (rhx, rhy) = (1.0 / g.hx(), 1.0 / g.hy());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = c[g.cell(i, j)];
            xf[g.xface(i + 1, j)] += v * rhx;
            xf[g.xface(i, j)] -= v * rhx;
            yf[g.yface(i, j + 1)] += v * rhy;
            yf[g.yface(i, j)] -= v * rhy;
        }
    }
}

pub(crate) fn laplacian_neumann_raw(g: &GridSpec, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (rx, ry) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    for j in 0..ny {
        for i in 0..nx {
            let c = f[g.cell(i, j)];
            let mut s = 0.0;
            if i > 0 {
                s += (f[g.cell(i - 1, j)] - c) * rx;
            }
            if i + 1 < nx {
                s += (f[g.cell(i + 1, j)] - c) * rx;
            }
            if j > 0 {
                s += (f[g.cell(i, j - 1)] - c) * ry;
            }
            if j + 1 < ny {
                s += (f[g.cell(i, j + 1)] - c) * ry;
            }
            out[g.cell(i, j)] = s;
        }
    }
}

/// Face values of a cell field: mean of the two neighbours on interior
/// faces, the adjacent cell on boundary faces.
pub(crate) fn face_average_raw(g: &GridSpec, f: &[f64], xf: &mut [f64], yf: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    for j in 0..ny {
        xf[g.xface(0, j)] = f[g.cell(0, j)];
        xf[g.xface(nx, j)] = f[g.cell(nx - 1, j)];
        for i in 1..nx {
            xf[g.xface(i, j)] = 0.5 * (f[g.cell(i, j)] + f[g.cell(i - 1, j)]);
        }
    }
    for i in 0..nx {
        yf[g.yface(i, 0)] = f[g.cell(i, 0)];
        yf[g.yface(i, ny)] = f[g.cell(i, ny - 1)];
    }
    for j in 1..ny {
        for i in 0..nx {
            yf[g.yface(i, j)] = 0.5 * (f[g.cell(i, j)] + f[g.cell(i, j - 1)]);
        }
    }
}

pub(crate) fn face_average_transpose_add(g: &GridSpec, xf: &[f64], yf: &[f64], f: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    for j in 0..ny {
        f[g.cell(0, j)] += xf[g.xface(0, j)];
        f[g.cell(nx - 1, j)] += xf[g.xface(nx, j)];
        for i in 1..nx {
            let c = 0.5 * xf[g.xface(i, j)];
            f[g.cell(i, j)] += c;
            f[g.cell(i - 1, j)] += c;
        }
    }
    for i in 0..nx {
        f[g.cell(i, 0)] += yf[g.yface(i, 0)];
        f[g.cell(i, ny - 1)] += yf[g.yface(i, ny)];
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = 0.5 * yf[g.yface(i, j)];
            f[g.cell(i, j)] += c;
            f[g.cell(i, j - 1)] += c;
        }
    }
}

pub fn face_average(f: &ScalarField) -> StaggeredVectorField {
    let g = *f.grid();
    let mut xf = vec![0.0; g.num_xfaces()];
    let mut yf = vec![0.0; g.num_yfaces()];
    face_average_raw(&g, f.values(), &mut xf, &mut yf);
    StaggeredVectorField::from_raw(g, xf, yf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand::rngs::StdRng;

    fn random_field(g: GridSpec, rng: &mut StdRng) -> ScalarField {
        ScalarField::from_raw(g, (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn random_vector(g: GridSpec, rng: &mut StdRng) -> StaggeredVectorField {
        StaggeredVectorField::from_raw(
            g,
            (0..g.num_xfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..g.num_yfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 1.0, -2.0).is_err());
        let g = GridSpec::new(4, 8, 2.0, 1.0).unwrap();
        assert_eq!(g.hx(), 0.5);
        assert_eq!(g.hy(), 0.125);
        assert!(TimeSpec::new(0.0, 4).is_err());
        assert!(TimeSpec::new(1.0, 0).is_err());
        assert_eq!(TimeSpec::new(2.0, 4).unwrap().tau(), 0.5);
    }

    #[test]
    fn field_rejects_bad_input() {
        let g = GridSpec::unit_square(4).unwrap();
        assert!(ScalarField::new(g, vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
        assert!(StaggeredVectorField::new(g, vec![0.0; 20], vec![0.0; 19]).is_err());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = GridSpec::unit_square(6).unwrap();
        let grad = gradient(&ScalarField::constant(g, 5.0));
        assert!(grad.max_abs() == 0.0);
    }

    #[test]
    fn gradient_of_linear_field() {
        let g = GridSpec::new(8, 5, 2.0, 1.0).unwrap();
        let grad = gradient(&ScalarField::from_fn(g, |x, _| x));
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                assert!((grad.xfaces()[g.xface(i, j)] - 1.0).abs() < 1e-12);
            }
        }
        assert!(grad.yfaces().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_of_impulse() {
        let g = GridSpec::new(4, 4, 4.0, 4.0).unwrap();
        let mut f = ScalarField::zeros(g);
        f.values_mut()[g.cell(1, 2)] = 1.0;
        let grad = gradient(&f);
        let mut expected_x = vec![0.0; g.num_xfaces()];
        expected_x[g.xface(1, 2)] = 1.0;
        expected_x[g.xface(2, 2)] = -1.0;
        let mut expected_y = vec![0.0; g.num_yfaces()];
        expected_y[g.yface(1, 2)] = 1.0;
        expected_y[g.yface(1, 3)] = -1.0;
        assert_eq!(grad.xfaces(), &expected_x[..]);
        assert_eq!(grad.yfaces(), &expected_y[..]);
    }

    #[test]
    fn divergence_of_constant_vanishes() {
        let g = GridSpec::unit_square(5).unwrap();
        let v = StaggeredVectorField::from_fn(g, |_, _| 2.0, |_, _| -3.0);
        assert!(divergence(&v).max_abs() < 1e-12);
    }

    #[test]
    fn divergence_of_gradient_of_parabola() {
        let g = GridSpec::unit_square(8).unwrap();
        let f = ScalarField::from_fn(g, |x, _| 0.5 * x * x);
        let d = divergence(&gradient(&f));
        for j in 0..8 {
            for i in 1..7 {
                assert!((d.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn summation_by_parts() {
        let g = GridSpec::new(7, 5, 1.3, 0.9).unwrap();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..20 {
            let f = random_field(g, &mut rng);
            let v = random_vector(g, &mut rng).with_zero_normal_flux();
            let lhs = divergence(&v).inner(&f);
            let rhs = -v.inner(&gradient(&f));
            assert!((lhs - rhs).abs() <= 1e-13, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn neumann_laplacian_properties() {
        let g = GridSpec::new(6, 9, 1.0, 2.0).unwrap();
        assert!(laplacian_neumann(&ScalarField::constant(g, 3.0)).max_abs() < 1e-12);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let f = random_field(g, &mut rng);
            let h = random_field(g, &mut rng);
            let a = laplacian_neumann(&f).inner(&h);
            let b = f.inner(&laplacian_neumann(&h));
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
            assert!(laplacian_neumann(&f).inner(&f) <= 1e-12);
        }
    }

    #[test]
    fn neumann_laplacian_eigenfunction_second_order() {
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = GridSpec::new(n, n, 2.0, 1.0).unwrap();
                let k = std::f64::consts::PI / 2.0;
                let f = ScalarField::from_fn(g, |x, _| (k * x).cos());
                let lap = laplacian_neumann(&f);
                let diff = lap.zip_map(&f, |l, v| l + k * k * v).unwrap();
                diff.norm_l2() / (k * k * f.norm_l2())
            })
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
        }
    }

    #[test]
    fn robin_laplacian_cancels_on_ambient() {
        let g = GridSpec::unit_square(6).unwrap();
        let r = laplacian_robin(&ScalarField::constant(g, 0.7), 3.0, 0.7).unwrap();
        let total = r.linear.zip_map(&r.affine, |a, b| a + b).unwrap();
        assert!(total.max_abs() < 1e-12);
    }

    #[test]
    fn robin_with_zero_coefficient_is_neumann() {
        let g = GridSpec::new(5, 7, 1.0, 1.5).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let f = random_field(g, &mut rng);
        let r = laplacian_robin(&f, 0.0, 1.0).unwrap();
        assert_eq!(r.linear, laplacian_neumann(&f));
        assert!(r.affine.max_abs() == 0.0);
    }

    #[test]
    fn robin_rejects_negative_coefficient() {
        let g = GridSpec::unit_square(4).unwrap();
        assert!(laplacian_robin(&ScalarField::zeros(g), -1.0, 1.0).is_err());
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&r, &s| a[r][k].abs().partial_cmp(&a[s][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for r in k + 1..n {
                let m = a[r][k] / a[k][k];
                for c in k..n {
                    a[r][c] -= m * a[k][c];
                }
                b[r] -= m * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| a[k][c] * x[c]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    #[test]
    fn robin_one_dimensional_cosh_profile() {
        // -s'' + s = 0 on [0,1], outward s' = K(1 - s) at both ends, K = 1:
        // s = C cosh(x - 1/2), C = K / (sinh(1/2) + K cosh(1/2)).
        // Robin on west/east, Neumann on south/north keeps the problem 1-D.
        let exact = |x: f64| (x - 0.5).cosh() / (0.5f64.sinh() + 0.5f64.cosh());
        let bc = RobinBoundary {
            west: 1.0,
            east: 1.0,
            south: 0.0,
            north: 0.0,
        };
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let g = GridSpec::new(n, 2, 1.0, 1.0).unwrap();
            let nc = g.num_cells();
            let mut a = vec![vec![0.0; nc]; nc];
            for c in 0..nc {
                let mut e = ScalarField::zeros(g);
                e.values_mut()[c] = 1.0;
                let r = laplacian_robin_sides(&e, &bc, 1.0).unwrap();
                for (row, v) in r.linear.values().iter().enumerate() {
                    a[row][c] = -v + if row == c { 1.0 } else { 0.0 };
                }
            }
            let affine = laplacian_robin_sides(&ScalarField::zeros(g), &bc, 1.0)
                .unwrap()
                .affine
                .into_values();
            let x = dense_solve(a, affine);
            let err = (0..nc)
                .map(|k| (x[k] - exact((k % n) as f64 * g.hx() + 0.5 * g.hx())).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.3, "slope {slope} from {errs:?}");
        }
    }

    #[test]
    fn integrate_midpoint() {
        let g = GridSpec::unit_square(64).unwrap();
        assert_eq!(integrate(&ScalarField::constant(g, 1.0)), 1.0);
        assert_eq!(integrate(&ScalarField::zeros(g)), 0.0);
        assert!((integrate(&ScalarField::from_fn(g, |x, _| x)) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn transposes_match_probing() {
        let g = GridSpec::new(4, 3, 1.0, 0.6).unwrap();
        let nc = g.num_cells();
        let (nxf, nyf) = (g.num_xfaces(), g.num_yfaces());
        // grad: cells -> faces; check <grad e_c, e_f> == <e_c, grad^T e_f>
        for c in 0..nc {
            let mut f = vec![0.0; nc];
            f[c] = 1.0;
            let mut xf = vec![0.0; nxf];
            let mut yf = vec![0.0; nyf];
            gradient_raw(&g, &f, &mut xf, &mut yf);
            let mut av_x = vec![0.0; nxf];
            let mut av_y = vec![0.0; nyf];
            face_average_raw(&g, &f, &mut av_x, &mut av_y);
            for k in 0..nxf + nyf {
                let mut ex = vec![0.0; nxf];
                let mut ey = vec![0.0; nyf];
                if k < nxf {
                    ex[k] = 1.0;
                } else {
                    ey[k - nxf] = 1.0;
                }
                let mut back = vec![0.0; nc];
                gradient_transpose_add(&g, &ex, &ey, &mut back);
                let fwd = if k < nxf { xf[k] } else { yf[k - nxf] };
                assert!((fwd - back[c]).abs() < 1e-14);
                let mut back = vec![0.0; nc];
                face_average_transpose_add(&g, &ex, &ey, &mut back);
                let fwd = if k < nxf { av_x[k] } else { av_y[k - nxf] };
                assert!((fwd - back[c]).abs() < 1e-14);
                let mut d = vec![0.0; nc];
                divergence_raw(&g, &ex, &ey, &mut d);
                let mut bx = vec![0.0; nxf];
                let mut by = vec![0.0; nyf];
                divergence_transpose_add(&g, &f, &mut bx, &mut by);
                let back = if k < nxf { bx[k] } else { by[k - nxf] };
                assert!((d[c] - back).abs() < 1e-14);
            }
        }
    }
}
