//! Exact linearization of the discrete forward map and its transpose.
//!
//! The tangent solver differentiates every update of
//! [`StateSolver::solve_forward`] at a stored base trajectory and accepts
//! the five source families of the continuous linearized system:
//!
//! | source | enters                                   | indexed by |
//! |--------|------------------------------------------|------------|
//! | `f1`   | divergence constraint `div v = … + F₁`   | snapshot   |
//! | `fvec` | momentum forcing `… + F`                 | snapshot   |
//! | `f2`   | phase right-hand side of step `n -> n+1` | slab       |
//! | `f3`   | chemical potential `μ = … + F₃`          | snapshot   |
//! | `f4`   | nutrient `-Δσ + h'(φ)σ_uφ + h(φ)σ = F₄`   | snapshot   |
//!
//! The adjoint sweep runs the transposed updates from `t^N` back to `t^0`.
//! Its Euclidean multipliers are rescaled to fields so that
//!
//! ```text
//! ⟨L[src], y⟩ = Σₙ τ [⟨F₂,ϑ⟩ + ⟨F₃,τ⟩ + ⟨F₄,ρ⟩ + ⟨F₁,q⟩ + ⟨F,w⟩_faces]
//! ```
//!
//! where `y` is the derivative of the tracking terms. The correspondence with
//! the continuous adjoint system:
//!
//! * `w`, `q`: transposed Brinkman solve. The zero pressure cotangent makes
//!   the second block row read `div w = 0`; the momentum rows collect
//!   `φ∇ϑ` from the transposed advection term and the velocity tracking.
//! * `ρ`: transposed nutrient solve with the homogeneous Robin closure
//!   `∂ₙρ = -Kρ` of the linearized operator.
//! * `τ`: second right-hand-side cotangent of each phase step.
//! * `ϑ`: first right-hand-side cotangent, marched backward by the
//!   transposed Schur solve. The transposed face average and divergence carry
//!   the boundary flux coupling of `τ` with `ϑv·n` and `(μ+χσ)w·n`; it is
//!   implied by the transposition and not imposed separately.
//! * `ϑᴺ = α₀(φᴺ - φ_f)` is set directly.

use rand::Rng;

use crate::discretization::{
    divergence_raw, divergence_transpose_add, face_average_raw, face_average_transpose_add,
    gradient_raw, gradient_transpose_add, laplacian_neumann_raw, GridSpec, ScalarField,
    StaggeredVectorField, TimeSpec,
};
use crate::error::{ChbError, Result};
use crate::forward::{FlowMode, StateSnapshot, StateSolver, StateTrajectory};
use crate::objective::{ControlField, CostWeights, TargetBundle};
use crate::potentials::{interp, interp_d1, psi_d2};

/// Sources of the linearized system. `f2` has one entry per slab, the rest
/// one per snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceBundle {
    pub f1: Vec<ScalarField>,
    pub f2: Vec<ScalarField>,
    pub f3: Vec<ScalarField>,
    pub f4: Vec<ScalarField>,
    pub fvec: Vec<StaggeredVectorField>,
}

impl SourceBundle {
    pub fn zeros(grid: GridSpec, time: &TimeSpec) -> Self {
        let n = time.nt() + 1;
        let z = ScalarField::zeros(grid);
        Self {
            f1: vec![z.clone(); n],
            f2: vec![z.clone(); time.nt()],
            f3: vec![z.clone(); n],
            f4: vec![z; n],
            fvec: vec![StaggeredVectorField::zeros(grid); n],
        }
    }

    /// Uniform samples in `[-1, 1)` for every entry.
    pub fn random(grid: GridSpec, time: &TimeSpec, rng: &mut impl Rng) -> Self {
        let n = time.nt() + 1;
        let mut cells = |k: usize| -> Vec<ScalarField> {
            (0..k)
                .map(|_| ScalarField::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let f1 = cells(n);
        let f2 = cells(time.nt());
        let f3 = cells(n);
        let f4 = cells(n);
        let fvec = (0..n)
            .map(|_| {
                let xf = (0..grid.num_xfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let yf = (0..grid.num_yfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                StaggeredVectorField::from_raw(grid, xf, yf)
            })
            .collect();
        Self {
            f1,
            f2,
            f3,
            f4,
            fvec,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &[ScalarField]| v.iter().map(|f| f.map(|x| c * x)).collect();
        Self {
            f1: s(&self.f1),
            f2: s(&self.f2),
            f3: s(&self.f3),
            f4: s(&self.f4),
            fvec: self
                .fvec
                .iter()
                .map(|v| {
                    StaggeredVectorField::from_raw(
                        *v.grid(),
                        v.xfaces().iter().map(|x| c * x).collect(),
                        v.yfaces().iter().map(|x| c * x).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn check_spec(&self, grid: &GridSpec, time: &TimeSpec) -> Result<()> {
        let n = time.nt() + 1;
        for (name, len, want) in [
            ("f1", self.f1.len(), n),
            ("f2", self.f2.len(), time.nt()),
            ("f3", self.f3.len(), n),
            ("f4", self.f4.len(), n),
            ("fvec", self.fvec.len(), n),
        ] {
            if len != want {
                return Err(ChbError::mismatch(format!("{want} {name} entries"), len));
            }
        }
        for f in self.f1.iter().chain(&self.f2).chain(&self.f3).chain(&self.f4) {
            grid.check_same(f.grid())?;
        }
        for v in &self.fvec {
            grid.check_same(v.grid())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinTrajectory {
    pub phi: Vec<ScalarField>,
    pub mu: Vec<ScalarField>,
    pub sigma: Vec<ScalarField>,
    pub p: Vec<ScalarField>,
    pub vel: Vec<StaggeredVectorField>,
}

impl LinTrajectory {
    pub fn max_abs(&self) -> f64 {
        let s = self
            .phi
            .iter()
            .chain(&self.mu)
            .chain(&self.sigma)
            .chain(&self.p)
            .fold(0.0f64, |m, f| m.max(f.max_abs()));
        self.vel.iter().fold(s, |m, v| m.max(v.max_abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrajectory {
    pub theta: Vec<ScalarField>,
    pub tauv: Vec<ScalarField>,
    pub rho: Vec<ScalarField>,
    pub q: Vec<ScalarField>,
    pub w: Vec<StaggeredVectorField>,
}

impl AdjointTrajectory {
    pub fn max_abs(&self) -> f64 {
        let s = self
            .theta
            .iter()
            .chain(&self.tauv)
            .chain(&self.rho)
            .chain(&self.q)
            .fold(0.0f64, |m, f| m.max(f.max_abs()));
        self.w.iter().fold(s, |m, v| m.max(v.max_abs()))
    }

    /// `Σₙ τ [⟨F₂,ϑ⟩ + ⟨F₃,τ⟩ + ⟨F₄,ρ⟩ + ⟨F₁,q⟩ + ⟨F,w⟩]`.
    pub fn pair_sources(&self, src: &SourceBundle, time: &TimeSpec) -> f64 {
        let tau = time.tau();
        let mut s = 0.0;
        for n in 0..time.nt() {
            s += tau * src.f2[n].inner(&self.theta[n]);
        }
        for n in 0..=time.nt() {
            s += tau
                * (src.f3[n].inner(&self.tauv[n])
                    + src.f4[n].inner(&self.rho[n])
                    + src.f1[n].inner(&self.q[n])
                    + src.fvec[n].inner(&self.w[n]));
        }
        s
    }
}

/// Derivative of the state-dependent part of `J` at `base` in direction
/// `lin`.
pub fn tracking_derivative(
    base: &StateTrajectory,
    lin: &LinTrajectory,
    targets: &TargetBundle,
    weights: &CostWeights,
) -> f64 {
    let tau = base.time.tau();
    let nt = base.time.nt();
    let cell = |a: &ScalarField, b: &ScalarField, d: &ScalarField| -> f64 {
        let v: f64 = (0..a.values().len())
            .map(|k| (a.values()[k] - b.values()[k]) * d.values()[k])
            .sum();
        v * a.grid().cell_area()
    };
    let mut s = weights.alpha0 * cell(&base.snapshots[nt].phi, &targets.phi_f, &lin.phi[nt]);
    for n in 1..=nt {
        let b = &base.snapshots[n];
        let dv = StaggeredVectorField::from_raw(
            base.grid,
            b.vel.xfaces().iter().zip(targets.v_d[n].xfaces()).map(|(a, c)| a - c).collect(),
            b.vel.yfaces().iter().zip(targets.v_d[n].yfaces()).map(|(a, c)| a - c).collect(),
        );
        s += tau
            * (weights.alpha1 * cell(&b.phi, &targets.phi_d[n], &lin.phi[n])
                + weights.alpha2 * cell(&b.mu, &targets.mu_d[n], &lin.mu[n])
                + weights.alpha3 * cell(&b.sigma, &targets.sigma_d[n], &lin.sigma[n])
                + weights.alpha4 * dv.inner(&lin.vel[n]));
    }
    s
}

fn face_weights(g: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let mut wx = vec![0.0; g.num_xfaces()];
    let mut wy = vec![0.0; g.num_yfaces()];
    for j in 0..g.ny() {
        for i in 0..=g.nx() {
            wx[g.xface(i, j)] = g.xface_weight(i);
        }
    }
    for j in 0..=g.ny() {
        for i in 0..g.nx() {
            wy[g.yface(i, j)] = g.yface_weight(j);
        }
    }
    (wx, wy)
}

/// Tangent of one snapshot: `(φ, μ, σ, v, p)` perturbations.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Lin {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub p: Vec<f64>,
}

/// Euclidean cotangent of one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Cot {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub p: Vec<f64>,
}

impl Cot {
    pub fn zeros(g: &GridSpec) -> Self {
        let n = g.num_cells();
        Self {
            phi: vec![0.0; n],
            mu: vec![0.0; n],
            sigma: vec![0.0; n],
            vx: vec![0.0; g.num_xfaces()],
            vy: vec![0.0; g.num_yfaces()],
            p: vec![0.0; n],
        }
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn grad(g: &GridSpec, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; g.num_xfaces()];
    let mut y = vec![0.0; g.num_yfaces()];
    gradient_raw(g, f, &mut x, &mut y);
    (x, y)
}

fn avg(g: &GridSpec, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; g.num_xfaces()];
    let mut y = vec![0.0; g.num_yfaces()];
    face_average_raw(g, f, &mut x, &mut y);
    (x, y)
}

/// Tangent of the Brinkman data `((μ+χσ)~∇φ, (Pσ-A)h(φ))`.
pub(crate) fn forcing_tangent(
    solver: &StateSolver,
    b: &StateSnapshot,
    dphi: &[f64],
    dmu: &[f64],
    dsigma: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = solver.grid();
    let p = solver.params();
    let phi = b.phi.values();
    let sigma = b.sigma.values();
    let pot: Vec<f64> = b.mu.values().iter().zip(sigma).map(|(m, s)| m + p.chi * s).collect();
    let dpot: Vec<f64> = dmu.iter().zip(dsigma).map(|(m, s)| m + p.chi * s).collect();
    let (gx, gy) = grad(g, phi);
    let (dgx, dgy) = grad(g, dphi);
    let (ax, ay) = avg(g, &pot);
    let (dax, day) = avg(g, &dpot);
    let fx = (0..gx.len()).map(|k| dax[k] * gx[k] + ax[k] * dgx[k]).collect();
    let fy = (0..gy.len()).map(|k| day[k] * gy[k] + ay[k] * dgy[k]).collect();
    let dg = (0..phi.len())
        .map(|k| {
            p.prolif * dsigma[k] * interp(phi[k])
                + (p.prolif * sigma[k] - p.apopt) * interp_d1(phi[k]) * dphi[k]
        })
        .collect();
    (fx, fy, dg)
}

/// Adds the transpose of [`forcing_tangent`] applied to `(f̄x, f̄y, ḡ)`.
pub(crate) fn forcing_transpose(
    solver: &StateSolver,
    b: &StateSnapshot,
    fbx: &[f64],
    fby: &[f64],
    gbar: &[f64],
    cot: &mut Cot,
) {
    let g = solver.grid();
    let p = solver.params();
    let phi = b.phi.values();
    let sigma = b.sigma.values();
    let pot: Vec<f64> = b.mu.values().iter().zip(sigma).map(|(m, s)| m + p.chi * s).collect();
    let (gx, gy) = grad(g, phi);
    let (ax, ay) = avg(g, &pot);
    let mut dpot = vec![0.0; phi.len()];
    face_average_transpose_add(g, &mul(fbx, &gx), &mul(fby, &gy), &mut dpot);
    gradient_transpose_add(g, &mul(fbx, &ax), &mul(fby, &ay), &mut cot.phi);
    for k in 0..phi.len() {
        cot.mu[k] += dpot[k];
        cot.sigma[k] += p.chi * dpot[k] + p.prolif * interp(phi[k]) * gbar[k];
        cot.phi[k] += (p.prolif * sigma[k] - p.apopt) * interp_d1(phi[k]) * gbar[k];
    }
}

/// Tangent of the phase right-hand sides `(r1, r2)` built from snapshot `b`
/// and control slab `u`.
pub(crate) fn rhs_tangent(
    solver: &StateSolver,
    b: &StateSnapshot,
    u: &[f64],
    d: &Lin,
) -> (Vec<f64>, Vec<f64>) {
    let g = solver.grid();
    let p = solver.params();
    let tau = solver.time().tau();
    let s = solver.potential().s_stab;
    let phi = b.phi.values();
    let sigma = b.sigma.values();
    let (ax, ay) = avg(g, phi);
    let (dax, day) = avg(g, &d.phi);
    let vx = b.vel.xfaces();
    let vy = b.vel.yfaces();
    let flux_x: Vec<f64> = (0..ax.len()).map(|k| dax[k] * vx[k] + ax[k] * d.vx[k]).collect();
    let flux_y: Vec<f64> = (0..ay.len()).map(|k| day[k] * vy[k] + ay[k] * d.vy[k]).collect();
    let mut adv = vec![0.0; phi.len()];
    divergence_raw(g, &flux_x, &flux_y, &mut adv);
    let r1 = (0..phi.len())
        .map(|k| {
            d.phi[k] / tau - adv[k]
                + p.prolif * d.sigma[k] * interp(phi[k])
                + (p.prolif * sigma[k] - p.apopt - u[k]) * interp_d1(phi[k]) * d.phi[k]
        })
        .collect();
    let r2 = (0..phi.len())
        .map(|k| (psi_d2(phi[k]) - s) * d.phi[k] - p.chi * d.sigma[k])
        .collect();
    (r1, r2)
}

/// Adds the transpose of [`rhs_tangent`] applied to `(r̄1, r̄2)`.
pub(crate) fn rhs_transpose(
    solver: &StateSolver,
    b: &StateSnapshot,
    u: &[f64],
    r1: &[f64],
    r2: &[f64],
    cot: &mut Cot,
) {
    let g = solver.grid();
    let p = solver.params();
    let tau = solver.time().tau();
    let s = solver.potential().s_stab;
    let phi = b.phi.values();
    let sigma = b.sigma.values();
    let mut ex = vec![0.0; g.num_xfaces()];
    let mut ey = vec![0.0; g.num_yfaces()];
    divergence_transpose_add(g, r1, &mut ex, &mut ey);
    let (ax, ay) = avg(g, phi);
    let vx = b.vel.xfaces();
    let vy = b.vel.yfaces();
    let tx: Vec<f64> = (0..ex.len()).map(|k| -vx[k] * ex[k]).collect();
    let ty: Vec<f64> = (0..ey.len()).map(|k| -vy[k] * ey[k]).collect();
    face_average_transpose_add(g, &tx, &ty, &mut cot.phi);
    for k in 0..ex.len() {
        cot.vx[k] -= ax[k] * ex[k];
    }
    for k in 0..ey.len() {
        cot.vy[k] -= ay[k] * ey[k];
    }
    for k in 0..phi.len() {
        cot.phi[k] += r1[k] / tau
            + (p.prolif * sigma[k] - p.apopt - u[k]) * interp_d1(phi[k]) * r1[k]
            + (psi_d2(phi[k]) - s) * r2[k];
        cot.sigma[k] += p.prolif * interp(phi[k]) * r1[k] - p.chi * r2[k];
    }
}

fn nutrient_solve(solver: &StateSolver, phi: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let (a, _) = solver.nutrient_matrix(phi)?;
    Ok(solver.cg(&a, rhs)?.0)
}

/// `δσ = N(φ)⁻¹ (F₄ - h'(φ)σ δφ)`.
fn lin_nutrient(
    solver: &StateSolver,
    b: &StateSnapshot,
    dphi: &[f64],
    f4: &[f64],
) -> Result<Vec<f64>> {
    let phi = b.phi.values();
    let sigma = b.sigma.values();
    let rhs: Vec<f64> = (0..phi.len())
        .map(|k| f4[k] - interp_d1(phi[k]) * sigma[k] * dphi[k])
        .collect();
    nutrient_solve(solver, phi, &rhs)
}

fn lin_brinkman(
    solver: &StateSolver,
    b: &StateSnapshot,
    dphi: &[f64],
    dmu: &[f64],
    dsigma: &[f64],
    f1: &[f64],
    fvec: &StaggeredVectorField,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = solver.grid();
    if solver.flow() == FlowMode::Frozen {
        return (
            vec![0.0; g.num_xfaces()],
            vec![0.0; g.num_yfaces()],
            vec![0.0; g.num_cells()],
        );
    }
    let (mut fx, mut fy, mut dg) = forcing_tangent(solver, b, dphi, dmu, dsigma);
    for (a, s) in fx.iter_mut().zip(fvec.xfaces()) {
        *a += s;
    }
    for (a, s) in fy.iter_mut().zip(fvec.yfaces()) {
        *a += s;
    }
    for (a, s) in dg.iter_mut().zip(f1) {
        *a += s;
    }
    solver.brinkman().solve(&fx, &fy, &dg)
}

/// Linearized step `n -> n+1` about `(b0, b1)` with zero sources except the
/// ones passed in.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lin_step(
    solver: &StateSolver,
    b0: &StateSnapshot,
    b1: &StateSnapshot,
    u: &[f64],
    d: &Lin,
    f2: &[f64],
    f3: &[f64],
    f4: &[f64],
    f1: &[f64],
    fvec: &StaggeredVectorField,
) -> Result<Lin> {
    let (mut r1, mut r2) = rhs_tangent(solver, b0, u, d);
    for k in 0..r1.len() {
        r1[k] += f2[k];
        r2[k] += f3[k];
    }
    let (phi, mu) = solver.phase().solve(&r1, &r2);
    let sigma = lin_nutrient(solver, b1, &phi, f4)?;
    let (vx, vy, p) = lin_brinkman(solver, b1, &phi, &mu, &sigma, f1, fvec);
    Ok(Lin {
        phi,
        mu,
        sigma,
        vx,
        vy,
        p,
    })
}

/// Multipliers of the transposed Brinkman solve; adds the forcing
/// transpose into `cot`.
fn adj_brinkman(solver: &StateSolver, b: &StateSnapshot, cot: &mut Cot) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = solver.grid();
    if solver.flow() == FlowMode::Frozen {
        return (
            vec![0.0; g.num_xfaces()],
            vec![0.0; g.num_yfaces()],
            vec![0.0; g.num_cells()],
        );
    }
    let mut rhs = Vec::with_capacity(solver.brinkman().num_unknowns());
    rhs.extend_from_slice(&cot.vx);
    rhs.extend_from_slice(&cot.vy);
    rhs.extend_from_slice(&cot.p);
    let (lx, ly, lp) = solver.brinkman().split(solver.brinkman().solve_transpose_raw(&rhs));
    let (wx, wy) = face_weights(g);
    let area = g.cell_area();
    let fbx = mul(&wx, &lx);
    let fby = mul(&wy, &ly);
    let gbar: Vec<f64> = lp.iter().map(|l| -area * l).collect();
    forcing_transpose(solver, b, &fbx, &fby, &gbar, cot);
    (lx, ly, lp)
}

/// Multiplier of the transposed nutrient solve; adds its `φ` coupling.
fn adj_nutrient(solver: &StateSolver, b: &StateSnapshot, cot: &mut Cot) -> Result<Vec<f64>> {
    let phi = b.phi.values();
    let sigma = b.sigma.values();
    let lam = nutrient_solve(solver, phi, &cot.sigma)?;
    for k in 0..phi.len() {
        cot.phi[k] -= interp_d1(phi[k]) * sigma[k] * lam[k];
    }
    Ok(lam)
}

fn check_base(solver: &StateSolver, base: &StateTrajectory) -> Result<()> {
    solver.grid().check_same(&base.grid)?;
    if *solver.time() != base.time || base.snapshots.len() != base.time.nt() + 1 {
        return Err(ChbError::mismatch(
            format!("{:?}", solver.time()),
            format!("{:?} with {} snapshots", base.time, base.snapshots.len()),
        ));
    }
    Ok(())
}

pub fn solve_linearized(
    solver: &StateSolver,
    base: &StateTrajectory,
    src: &SourceBundle,
) -> Result<LinTrajectory> {
    check_base(solver, base)?;
    src.check_spec(&base.grid, &base.time)?;
    let g = base.grid;
    let n_cells = g.num_cells();
    let nt = base.time.nt();
    let s0 = &base.snapshots[0];

    let dphi = vec![0.0; n_cells];
    let sigma = lin_nutrient(solver, s0, &dphi, src.f4[0].values()).map_err(|e| e.at_step(0))?;
    let mut lap = vec![0.0; n_cells];
    laplacian_neumann_raw(&g, &dphi, &mut lap);
    let chi = solver.params().chi;
    let mu: Vec<f64> = (0..n_cells)
        .map(|k| {
            -lap[k] + psi_d2(s0.phi.values()[k]) * dphi[k] - chi * sigma[k] + src.f3[0].values()[k]
        })
        .collect();
    let (vx, vy, p) = lin_brinkman(solver, s0, &dphi, &mu, &sigma, src.f1[0].values(), &src.fvec[0]);
    let mut states = vec![Lin {
        phi: dphi,
        mu,
        sigma,
        vx,
        vy,
        p,
    }];
    for n in 0..nt {
        let next = lin_step(
            solver,
            &base.snapshots[n],
            &base.snapshots[n + 1],
            base.control.slabs()[n].values(),
            &states[n],
            src.f2[n].values(),
            src.f3[n + 1].values(),
            src.f4[n + 1].values(),
            src.f1[n + 1].values(),
            &src.fvec[n + 1],
        )
        .map_err(|e| e.at_step(n + 1))?;
        states.push(next);
    }
    let field = |v: Vec<f64>| ScalarField::from_raw(g, v);
    let mut out = LinTrajectory {
        phi: Vec::with_capacity(nt + 1),
        mu: Vec::with_capacity(nt + 1),
        sigma: Vec::with_capacity(nt + 1),
        p: Vec::with_capacity(nt + 1),
        vel: Vec::with_capacity(nt + 1),
    };
    for s in states {
        out.phi.push(field(s.phi));
        out.mu.push(field(s.mu));
        out.sigma.push(field(s.sigma));
        out.p.push(field(s.p));
        out.vel.push(StaggeredVectorField::from_raw(g, s.vx, s.vy));
    }
    Ok(out)
}

/// Linearized trajectory in the control direction `h`: the only source is
/// `F₂ = -h h(φ)` on each slab.
pub fn directional_derivative(
    solver: &StateSolver,
    base: &StateTrajectory,
    h: &ControlField,
) -> Result<LinTrajectory> {
    h.check_spec(&base.grid, &base.time)?;
    let mut src = SourceBundle::zeros(base.grid, &base.time);
    for (n, f2) in src.f2.iter_mut().enumerate() {
        let phi = base.snapshots[n].phi.values();
        let v = h.slabs()[n]
            .values()
            .iter()
            .zip(phi)
            .map(|(&h, &f)| -h * interp(f))
            .collect();
        *f2 = ScalarField::from_raw(base.grid, v);
    }
    solve_linearized(solver, base, &src)
}

/// Euclidean cotangent contributed by the tracking terms at snapshot `n`.
fn tracking_seed(
    base: &StateTrajectory,
    targets: &TargetBundle,
    weights: &CostWeights,
    n: usize,
) -> Cot {
    let g = &base.grid;
    let mut cot = Cot::zeros(g);
    let nt = base.time.nt();
    if n == 0 {
        return cot;
    }
    let tau = base.time.tau();
    let area = g.cell_area();
    let s = &base.snapshots[n];
    let diff = |a: &ScalarField, b: &ScalarField, w: f64, out: &mut [f64]| {
        for (o, (x, y)) in out.iter_mut().zip(a.values().iter().zip(b.values())) {
            *o += w * (x - y);
        }
    };
    diff(&s.phi, &targets.phi_d[n], tau * weights.alpha1 * area, &mut cot.phi);
    diff(&s.mu, &targets.mu_d[n], tau * weights.alpha2 * area, &mut cot.mu);
    diff(&s.sigma, &targets.sigma_d[n], tau * weights.alpha3 * area, &mut cot.sigma);
    if n == nt {
        diff(&s.phi, &targets.phi_f, weights.alpha0 * area, &mut cot.phi);
    }
    let (wx, wy) = face_weights(g);
    let c = tau * weights.alpha4;
    for k in 0..wx.len() {
        cot.vx[k] = c * wx[k] * (s.vel.xfaces()[k] - targets.v_d[n].xfaces()[k]);
    }
    for k in 0..wy.len() {
        cot.vy[k] = c * wy[k] * (s.vel.yfaces()[k] - targets.v_d[n].yfaces()[k]);
    }
    cot
}

pub fn solve_adjoint(
    solver: &StateSolver,
    base: &StateTrajectory,
    targets: &TargetBundle,
    weights: &CostWeights,
) -> Result<AdjointTrajectory> {
    check_base(solver, base)?;
    targets.check_spec(&base.grid, &base.time)?;
    weights.validate()?;
    let g = base.grid;
    let nt = base.time.nt();
    let scale = 1.0 / (base.time.tau() * g.cell_area());
    let tau = base.time.tau();
    let field = |v: &[f64], c: f64| ScalarField::from_raw(g, v.iter().map(|x| c * x).collect());
    let zero = ScalarField::zeros(g);
    let mut adj = AdjointTrajectory {
        theta: vec![zero.clone(); nt + 1],
        tauv: vec![zero.clone(); nt + 1],
        rho: vec![zero.clone(); nt + 1],
        q: vec![zero; nt + 1],
        w: vec![StaggeredVectorField::zeros(g); nt + 1],
    };
    let mut cot = tracking_seed(base, targets, weights, nt);
    for n in (0..=nt).rev() {
        let b = &base.snapshots[n];
        let (lx, ly, lp) = adj_brinkman(solver, b, &mut cot);
        adj.w[n] = StaggeredVectorField::from_raw(
            g,
            lx.iter().map(|x| x / tau).collect(),
            ly.iter().map(|x| x / tau).collect(),
        );
        adj.q[n] = field(&lp, -1.0 / tau);
        if n == 0 {
            adj.tauv[0] = field(&cot.mu, scale);
            let chi = solver.params().chi;
            for k in 0..cot.mu.len() {
                cot.sigma[k] -= chi * cot.mu[k];
            }
        }
        let lam = adj_nutrient(solver, b, &mut cot).map_err(|e| e.at_step(n))?;
        adj.rho[n] = field(&lam, scale);
        if n >= 1 {
            let (r1, r2) = solver.phase().solve_transpose(&cot.phi, &cot.mu);
            adj.theta[n - 1] = field(&r1, scale);
            adj.tauv[n] = field(&r2, scale);
            let mut prev = tracking_seed(base, targets, weights, n - 1);
            rhs_transpose(
                solver,
                &base.snapshots[n - 1],
                base.control.slabs()[n - 1].values(),
                &r1,
                &r2,
                &mut prev,
            );
            cot = prev;
        }
    }
    let last = &base.snapshots[nt].phi;
    adj.theta[nt] = last
        .zip_map(&targets.phi_f, |a, b| weights.alpha0 * (a - b))
        .expect("targets checked against the grid");
    Ok(adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::GridSpec;
    use crate::forward::{ModelParams, SolverOptions};
    use crate::potentials::PotentialSpec;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn setup(n: usize, nt: usize, tol: f64) -> (StateSolver, StateTrajectory) {
        let g = GridSpec::new(n, n, 2.0, 2.0).unwrap();
        let t = TimeSpec::new(0.2, nt).unwrap();
        let opts = SolverOptions {
            cg_tol: tol,
            ..SolverOptions::default()
        };
        let solver = StateSolver::new(g, t, ModelParams::default(), PotentialSpec::default(), opts).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        let phi0 = ScalarField::from_fn(g, |x, y| {
            (1.5 * (0.8 - ((x - 1.0).powi(2) + (y - 0.9).powi(2)).sqrt())).tanh() + 0.1 * rng.gen_range(-1.0..1.0)
        });
        let u = ControlField::new(
            t,
            (0..nt)
                .map(|_| ScalarField::from_fn(g, |_, _| rng.gen_range(0.0..1.0)))
                .collect(),
        )
        .unwrap();
        let base = solver.solve_forward(&u, &phi0).unwrap();
        (solver, base)
    }

    /// Transpose of [`lin_step`] restricted to the state: maps the cotangent of
    /// snapshot `n+1` to the cotangent of snapshot `n` (added into `prev`).
    /// Returns `(r̄1, r̄2)`.
    fn adj_step(
        solver: &StateSolver,
        b0: &StateSnapshot,
        b1: &StateSnapshot,
        u: &[f64],
        mut cot: Cot,
        prev: &mut Cot,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        adj_brinkman(solver, b1, &mut cot);
        adj_nutrient(solver, b1, &mut cot)?;
        let (r1, r2) = solver.phase().solve_transpose(&cot.phi, &cot.mu);
        rhs_transpose(solver, b0, u, &r1, &r2, prev);
        Ok((r1, r2))
    }

    fn lin_to_vec(l: &Lin) -> Vec<f64> {
        [&l.phi, &l.mu, &l.sigma, &l.vx, &l.vy, &l.p].iter().flat_map(|v| v.iter().copied()).collect()
    }

    fn cot_from_vec(g: &GridSpec, v: &[f64]) -> Cot {
        let n = g.num_cells();
        let (nx, ny) = (g.num_xfaces(), g.num_yfaces());
        let mut it = 0;
        let mut take = |k: usize| {
            let out = v[it..it + k].to_vec();
            it += k;
            out
        };
        Cot {
            phi: take(n),
            mu: take(n),
            sigma: take(n),
            vx: take(nx),
            vy: take(ny),
            p: take(n),
        }
    }

    /// Inputs of a step that matter: `(φ, σ, vx, vy)`.
    fn input_dim(g: &GridSpec) -> usize {
        2 * g.num_cells() + g.num_xfaces() + g.num_yfaces()
    }

    fn lin_from_input(g: &GridSpec, v: &[f64]) -> Lin {
        let n = g.num_cells();
        let nx = g.num_xfaces();
        Lin {
            phi: v[..n].to_vec(),
            mu: vec![0.0; n],
            sigma: v[n..2 * n].to_vec(),
            vx: v[2 * n..2 * n + nx].to_vec(),
            vy: v[2 * n + nx..].to_vec(),
            p: vec![0.0; n],
        }
    }

    fn cot_to_input(c: &Cot) -> Vec<f64> {
        [&c.phi, &c.sigma, &c.vx, &c.vy].iter().flat_map(|v| v.iter().copied()).collect()
    }

    #[test]
    fn step_transpose_matches_probed_tangent() {
        let (solver, base) = setup(3, 2, 1e-15);
        let g = base.grid;
        let nin = input_dim(&g);
        let nout = 4 * g.num_cells() + g.num_xfaces() + g.num_yfaces();
        let (b0, b1) = (&base.snapshots[0], &base.snapshots[1]);
        let u = base.control.slabs()[0].values();
        let z = vec![0.0; g.num_cells()];
        let zf = StaggeredVectorField::zeros(g);
        let mut tangent = vec![vec![0.0; nin]; nout];
        for c in 0..nin {
            let mut e = vec![0.0; nin];
            e[c] = 1.0;
            let out = lin_step(&solver, b0, b1, u, &lin_from_input(&g, &e), &z, &z, &z, &z, &zf).unwrap();
            for (r, v) in lin_to_vec(&out).into_iter().enumerate() {
                tangent[r][c] = v;
            }
        }
        let scale = tangent.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for r in 0..nout {
            let mut e = vec![0.0; nout];
            e[r] = 1.0;
            let mut prev = Cot::zeros(&g);
            adj_step(&solver, b0, b1, u, cot_from_vec(&g, &e), &mut prev).unwrap();
            for (c, v) in cot_to_input(&prev).into_iter().enumerate() {
                worst = worst.max((v - tangent[r][c]).abs());
            }
        }
        assert!(worst <= 1e-14 * scale.max(1.0), "worst {worst:e}, scale {scale:e}");
    }

    fn probe_pair(
        nin: usize,
        nout: usize,
        tangent: impl Fn(&[f64]) -> Vec<f64>,
        transpose: impl Fn(&[f64]) -> Vec<f64>,
    ) -> f64 {
        let mut m = vec![vec![0.0; nin]; nout];
        for c in 0..nin {
            let mut e = vec![0.0; nin];
            e[c] = 1.0;
            for (r, v) in tangent(&e).into_iter().enumerate() {
                m[r][c] = v;
            }
        }
        let mut worst = 0.0f64;
        for r in 0..nout {
            let mut e = vec![0.0; nout];
            e[r] = 1.0;
            for (c, v) in transpose(&e).into_iter().enumerate() {
                worst = worst.max((v - m[r][c]).abs());
            }
        }
        worst
    }

    #[test]
    fn forcing_and_rhs_transposes_are_exact() {
        let (solver, base) = setup(4, 1, 1e-12);
        let g = base.grid;
        let b = &base.snapshots[1];
        let n = g.num_cells();
        let (nx, ny) = (g.num_xfaces(), g.num_yfaces());
        let worst = probe_pair(
            3 * n,
            nx + ny + n,
            |e| {
                let (fx, fy, dg) = forcing_tangent(&solver, b, &e[..n], &e[n..2 * n], &e[2 * n..]);
                [fx, fy, dg].concat()
            },
            |e| {
                let mut cot = Cot::zeros(&g);
                forcing_transpose(&solver, b, &e[..nx], &e[nx..nx + ny], &e[nx + ny..], &mut cot);
                [cot.phi, cot.mu, cot.sigma].concat()
            },
        );
        assert!(worst <= 1e-14, "forcing {worst:e}");
        let u = base.control.slabs()[0].values();
        let worst = probe_pair(
            input_dim(&g),
            2 * n,
            |e| {
                let (r1, r2) = rhs_tangent(&solver, b, u, &lin_from_input(&g, e));
                [r1, r2].concat()
            },
            |e| {
                let mut cot = Cot::zeros(&g);
                rhs_transpose(&solver, b, u, &e[..n], &e[n..], &mut cot);
                cot_to_input(&cot)
            },
        );
        assert!(worst <= 1e-14 * (1.0 / solver.time().tau()), "rhs {worst:e}");
    }

    #[test]
    fn zero_sources_give_zero_trajectory() {
        let (solver, base) = setup(6, 3, 1e-12);
        let lin = solve_linearized(&solver, &base, &SourceBundle::zeros(base.grid, &base.time)).unwrap();
        assert_eq!(lin.max_abs(), 0.0);
        assert!(lin.phi[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linearized_solve_is_homogeneous() {
        let (solver, base) = setup(6, 3, 1e-13);
        let mut rng = StdRng::seed_from_u64(8);
        let src = SourceBundle::random(base.grid, &base.time, &mut rng);
        let a = solve_linearized(&solver, &base, &src).unwrap();
        let b = solve_linearized(&solver, &base, &src.scaled(2.0)).unwrap();
        let scale = a.max_abs();
        for n in 0..a.phi.len() {
            for (x, y) in a.phi[n].values().iter().zip(b.phi[n].values()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * scale);
            }
            for (x, y) in a.vel[n].xfaces().iter().zip(b.vel[n].xfaces()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn zero_direction_and_inactive_support() {
        let (solver, base) = setup(6, 3, 1e-12);
        let zero = ControlField::zeros(base.grid, base.time);
        assert_eq!(directional_derivative(&solver, &base, &zero).unwrap().max_abs(), 0.0);

        let g = base.grid;
        let phi0 = ScalarField::constant(g, -1.2);
        let healthy = solver.solve_forward(&zero, &phi0).unwrap();
        let h = ControlField::constant(g, base.time, 1.0);
        let lin = directional_derivative(&solver, &healthy, &h).unwrap();
        assert_eq!(lin.max_abs(), 0.0);
    }

    #[test]
    fn adjoint_terminal_condition_and_divergence() {
        let (solver, base) = setup(6, 3, 1e-12);
        let g = base.grid;
        let mut targets = TargetBundle::zeros(g, &base.time);
        targets.phi_f = ScalarField::from_fn(g, |x, _| 0.3 * x - 0.5);
        let weights = CostWeights::new([1.3, 0.5, 0.2, 0.7, 0.4], 0.1).unwrap();
        let adj = solve_adjoint(&solver, &base, &targets, &weights).unwrap();
        let nt = base.time.nt();
        for (t, (p, f)) in adj.theta[nt]
            .values()
            .iter()
            .zip(base.snapshots[nt].phi.values().iter().zip(targets.phi_f.values()))
        {
            assert_eq!(*t, 1.3 * (p - f));
        }
        let scale = adj.w.iter().fold(0.0f64, |m, w| m.max(w.max_abs())).max(1.0);
        for w in &adj.w {
            let mut div = vec![0.0; g.num_cells()];
            divergence_raw(&g, w.xfaces(), w.yfaces(), &mut div);
            assert!(div.iter().all(|d| d.abs() <= 1e-9 * scale));
        }
    }

    #[test]
    fn adjoint_vanishes_without_residuals() {
        let (solver, base) = setup(6, 3, 1e-12);
        let weights = CostWeights::new([1.0, 2.0, 3.0, 4.0, 5.0], 1.0).unwrap();
        let adj = solve_adjoint(&solver, &base, &TargetBundle::matching(&base), &weights).unwrap();
        assert!(adj.max_abs() <= 1e-12);
        let none = CostWeights::new([0.0; 5], 1.0).unwrap();
        let adj = solve_adjoint(&solver, &base, &TargetBundle::zeros(base.grid, &base.time), &none).unwrap();
        assert_eq!(adj.max_abs(), 0.0);
    }

    #[test]
    fn duality_holds_on_random_pairs() {
        let (solver, base) = setup(6, 3, 1e-13);
        let g = base.grid;
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..3 {
            let src = SourceBundle::random(g, &base.time, &mut rng);
            let dual = SourceBundle::random(g, &base.time, &mut rng);
            let targets = TargetBundle {
                phi_d: dual.f1.clone(),
                mu_d: dual.f3.clone(),
                sigma_d: dual.f4.clone(),
                v_d: dual.fvec.clone(),
                phi_f: dual.f2[0].clone(),
            };
            let weights = CostWeights::new([0.9, 1.1, 0.6, 1.4, 0.8], 1.0).unwrap();
            let lin = solve_linearized(&solver, &base, &src).unwrap();
            let lhs = tracking_derivative(&base, &lin, &targets, &weights);
            let adj = solve_adjoint(&solver, &base, &targets, &weights).unwrap();
            let rhs = adj.pair_sources(&src, &base.time);
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}
