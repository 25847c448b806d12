//! Linearly implicit, stabilized Cahn-Hilliard step.
//!
//! ```text
//! (φ' - φ)/τ - m Δμ'         = φ/τ - div(φ̄ v) + (Pσ - A - u) h(φ)     =: r1
//! μ' + Δφ' - s φ'            = -s φ + ψ'(φ) - χσ                      =: r2
//! ```
//!
//! Eliminating `μ' = r2 + (s - Δ)φ'` leaves the symmetric positive definite
//! system `(I/τ + mΔ² - msΔ) φ' = r1 + mΔ r2` whose matrix depends only on
//! the grid, `τ`, `m` and `s`; it is factored once.

use crate::discretization::{laplacian_neumann_raw, GridSpec};
use crate::error::Result;
use crate::linsolve::{LuFactors, SparseMatrix};

#[derive(Clone, Debug)]
pub struct PhaseOperator {
    grid: GridSpec,
    mobility: f64,
    s_stab: f64,
    schur: SparseMatrix,
    lu: LuFactors,
}

pub(crate) fn neumann_matrix(grid: &GridSpec) -> Result<SparseMatrix> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let rx = 1.0 / (grid.hx() * grid.hx());
    let ry = 1.0 / (grid.hy() * grid.hy());
    let n = grid.num_cells();
    let mut trip = Vec::with_capacity(5 * n);
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.cell(i, j);
            let mut d = 0.0;
            let mut link = |nb: usize, r: f64| {
                trip.push((c, nb, r));
                d -= r;
            };
            if j > 0 {
                link(grid.cell(i, j - 1), ry);
            }
            if i > 0 {
                link(grid.cell(i - 1, j), rx);
            }
            if i + 1 < nx {
                link(grid.cell(i + 1, j), rx);
            }
            if j + 1 < ny {
                link(grid.cell(i, j + 1), ry);
            }
            trip.push((c, c, d));
        }
    }
    SparseMatrix::from_triplets(n, n, &trip)
}

impl PhaseOperator {
    pub fn new(grid: GridSpec, tau: f64, mobility: f64, s_stab: f64) -> Result<Self> {
        let lap = neumann_matrix(&grid)?;
        let n = grid.num_cells();
        let mut trip = Vec::with_capacity(13 * n);
        for r in 0..n {
            trip.push((r, r, 1.0 / tau));
            for (k, a) in lap.row(r) {
                trip.push((r, k, -mobility * s_stab * a));
                for (c, b) in lap.row(k) {
                    trip.push((r, c, mobility * a * b));
                }
            }
        }
        let schur = SparseMatrix::from_triplets(n, n, &trip)?;
        let lu = LuFactors::factor(&schur)?;
        Ok(Self {
            grid,
            mobility,
            s_stab,
            schur,
            lu,
        })
    }

    pub fn schur_matrix(&self) -> &SparseMatrix {
        &self.schur
    }

    /// `(φ', μ')` from the two right-hand sides.
    pub fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = r1.len();
        let mut lap = vec![0.0; n];
        laplacian_neumann_raw(&self.grid, r2, &mut lap);
        let rhs: Vec<f64> = (0..n).map(|k| r1[k] + self.mobility * lap[k]).collect();
        let phi = self.lu.solve(&rhs);
        laplacian_neumann_raw(&self.grid, &phi, &mut lap);
        let mu = (0..n).map(|k| r2[k] + self.s_stab * phi[k] - lap[k]).collect();
        (phi, mu)
    }

    /// Transpose of [`solve`](Self::solve): maps output cotangents
    /// `(φ̄', μ̄')` to right-hand-side cotangents `(r̄1, r̄2)`.
    pub fn solve_transpose(&self, phi_bar: &[f64], mu_bar: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = phi_bar.len();
        let mut lap = vec![0.0; n];
        laplacian_neumann_raw(&self.grid, mu_bar, &mut lap);
        let total: Vec<f64> = (0..n)
            .map(|k| phi_bar[k] + self.s_stab * mu_bar[k] - lap[k])
            .collect();
        let r1 = self.lu.solve_transpose(&total);
        laplacian_neumann_raw(&self.grid, &r1, &mut lap);
        let r2 = (0..n).map(|k| mu_bar[k] + self.mobility * lap[k]).collect();
        (r1, r2)
    }
}
