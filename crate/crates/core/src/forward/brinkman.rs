//! Brinkman flow `-div T(v, p) + νv = f`, `div v = g`, `T(v, p) n = 0` on
//! the MAC grid.
//!
//! The momentum rows come from the discrete energy
//!
//! ```text
//! a(v, v) = Σ_cells  hxhy [2η (d_x v_x)² + 2η (d_y v_y)² + λ (div v)²]
//!         + Σ_nodes  hxhy η (d_y v_x + d_x v_y)²      (interior nodes only)
//!         + Σ_faces  ω_f ν |v|²
//! ```
//!
//! Leaving the boundary nodes out of the shear sum imposes zero tangential
//! traction there; the normal traction, pressure included, vanishes through
//! the half control volumes of the boundary faces. The assembled saddle
//! point matrix
//!
//! ```text
//! [ A        -Dᵀ W ] [v]   [ M_f f ]
//! [ -W D      0    ] [p] = [ -W g  ]
//! ```
//!
//! is symmetric (`W = hxhy I`, `M_f` the trapezoidal face weights) and
//! depends only on the grid and on `η, λ, ν`, so it is factored once.

use crate::discretization::GridSpec;
use crate::error::{ChbError, Result};
use crate::linsolve::{LuFactors, SparseMatrix};

#[derive(Clone, Debug)]
pub struct BrinkmanOperator {
    grid: GridSpec,
    matrix: SparseMatrix,
    lu: LuFactors,
}

impl BrinkmanOperator {
    pub fn new(grid: GridSpec, eta: f64, lambda: f64, nu: f64) -> Result<Self> {
        if !(eta > 0.0 && nu > 0.0 && lambda >= 0.0) {
            return Err(ChbError::InvalidParameter(format!(
                "Brinkman needs eta > 0, nu > 0, lambda >= 0 (got {eta}, {nu}, {lambda})"
            )));
        }
        let matrix = assemble(&grid, eta, lambda, nu)?;
        let lu = LuFactors::factor(&matrix)?;
        Ok(Self { grid, matrix, lu })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn num_unknowns(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves for `(v_x, v_y, p)` given face forcing and cell divergence data.
    pub fn solve(&self, fx: &[f64], fy: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let rhs = self.load(fx, fy, g);
        let z = self.lu.solve(&rhs);
        self.split(z)
    }

    /// Right-hand side `[M_f f; -W g]`.
    pub fn load(&self, fx: &[f64], fy: &[f64], g: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let (nxf, nyf) = (grid.num_xfaces(), grid.num_yfaces());
        let area = grid.cell_area();
        let mut rhs = vec![0.0; self.num_unknowns()];
        for j in 0..grid.ny() {
            for i in 0..=grid.nx() {
                let k = grid.xface(i, j);
                rhs[k] = grid.xface_weight(i) * fx[k];
            }
        }
        for j in 0..=grid.ny() {
            for i in 0..grid.nx() {
                let k = grid.yface(i, j);
                rhs[nxf + k] = grid.yface_weight(j) * fy[k];
            }
        }
        for (c, gc) in g.iter().enumerate() {
            rhs[nxf + nyf + c] = -area * gc;
        }
        rhs
    }

    /// Transposed solve on raw (unweighted) right-hand sides.
    pub fn solve_transpose_raw(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve_transpose(rhs)
    }

    pub fn split(&self, z: Vec<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nxf = self.grid.num_xfaces();
        let nyf = self.grid.num_yfaces();
        let vx = z[..nxf].to_vec();
        let vy = z[nxf..nxf + nyf].to_vec();
        let p = z[nxf + nyf..].to_vec();
        (vx, vy, p)
    }
}

fn assemble(grid: &GridSpec, eta: f64, lambda: f64, nu: f64) -> Result<SparseMatrix> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let area = grid.cell_area();
    let nxf = grid.num_xfaces();
    let nyf = grid.num_yfaces();
    let n = nxf + nyf + grid.num_cells();
    let vx = |i: usize, j: usize| grid.xface(i, j);
    let vy = |i: usize, j: usize| nxf + grid.yface(i, j);
    let pc = |i: usize, j: usize| nxf + nyf + grid.cell(i, j);

    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(30 * n);
    let outer = |trip: &mut Vec<(usize, usize, f64)>, g: &[(usize, f64)], w: f64| {
        for &(a, ca) in g {
            for &(b, cb) in g {
                trip.push((a, b, w * ca * cb));
            }
        }
    };

    for j in 0..ny {
        for i in 0..nx {
            let exx = [(vx(i + 1, j), 1.0 / hx), (vx(i, j), -1.0 / hx)];
            let eyy = [(vy(i, j + 1), 1.0 / hy), (vy(i, j), -1.0 / hy)];
            outer(&mut trip, &exx, 2.0 * eta * area);
            outer(&mut trip, &eyy, 2.0 * eta * area);
            if lambda > 0.0 {
                let div = [exx[0], exx[1], eyy[0], eyy[1]];
                outer(&mut trip, &div, lambda * area);
            }
        }
    }
    for j in 1..ny {
        for i in 1..nx {
            let shear = [
                (vx(i, j), 1.0 / hy),
                (vx(i, j - 1), -1.0 / hy),
                (vy(i, j), 1.0 / hx),
                (vy(i - 1, j), -1.0 / hx),
            ];
            outer(&mut trip, &shear, eta * area);
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            trip.push((vx(i, j), vx(i, j), nu * grid.xface_weight(i)));
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            trip.push((vy(i, j), vy(i, j), nu * grid.yface_weight(j)));
        }
    }
    // -W D and its transpose
    for j in 0..ny {
        for i in 0..nx {
            let p = pc(i, j);
            for (f, c) in [
                (vx(i + 1, j), 1.0 / hx),
                (vx(i, j), -1.0 / hx),
                (vy(i, j + 1), 1.0 / hy),
                (vy(i, j), -1.0 / hy),
            ] {
                trip.push((p, f, -area * c));
                trip.push((f, p, -area * c));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &trip)
}
