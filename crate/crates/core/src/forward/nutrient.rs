//! Quasi-static nutrient equation `-Δσ + h(φ)σ = 0` with `d_n σ = K(1 - σ)`.

use crate::discretization::{boundary_transfer, GridSpec, RobinBoundary};
use crate::error::Result;
use crate::linsolve::SparseMatrix;
use crate::potentials::interp;

/// Assembles `-Δ_R + diag(h(φ))` and the boundary load for ambient value 1.
/// The matrix is a symmetric M-matrix: nonpositive off-diagonals and
/// diagonal dominance, strict on boundary rows whenever `K > 0`.
pub fn assemble_nutrient(
    grid: &GridSpec,
    phi: &[f64],
    bc: &RobinBoundary,
) -> Result<(SparseMatrix, Vec<f64>)> {
    assemble_reaction_diffusion(grid, &phi.iter().map(|&p| interp(p)).collect::<Vec<_>>(), bc)
}

/// `-Δ_R + diag(reaction)` with the Robin load for ambient value 1.
pub(crate) fn assemble_reaction_diffusion(
    grid: &GridSpec,
    reaction: &[f64],
    bc: &RobinBoundary,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let bc = bc.validated()?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let rx = 1.0 / (grid.hx() * grid.hx());
    let ry = 1.0 / (grid.hy() * grid.hy());
    let n = grid.num_cells();
    let mut diag = reaction.to_vec();
    let mut load = vec![0.0; n];
    for (c, t) in boundary_transfer(grid, &bc) {
        diag[c] += t;
        load[c] += t;
    }
    let mut trip = Vec::with_capacity(5 * n);
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.cell(i, j);
            let mut d = diag[c];
            if j > 0 {
                trip.push((c, grid.cell(i, j - 1), -ry));
                d += ry;
            }
            if i > 0 {
                trip.push((c, grid.cell(i - 1, j), -rx));
                d += rx;
            }
            if i + 1 < nx {
                trip.push((c, grid.cell(i + 1, j), -rx));
                d += rx;
            }
            if j + 1 < ny {
                trip.push((c, grid.cell(i, j + 1), -ry));
                d += ry;
            }
            trip.push((c, c, d));
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, &trip)?, load))
}
