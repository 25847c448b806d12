//! Control-to-state map: marches the coupled Cahn-Hilliard, nutrient and
//! Brinkman system over `[0, T]`.
//!
//! Step `n -> n+1` runs three decoupled subsolves:
//! 1. phase step for `(φ^{n+1}, μ^{n+1})` with lagged `σ^n`, `v^n` and the
//!    control slab `u^n`,
//! 2. nutrient `σ^{n+1}` from `φ^{n+1}`,
//! 3. Brinkman `(v^{n+1}, p^{n+1})` from `(φ^{n+1}, μ^{n+1}, σ^{n+1})`.

mod brinkman;
mod nutrient;
mod phase;

pub use brinkman::BrinkmanOperator;
pub use nutrient::assemble_nutrient;
pub use phase::PhaseOperator;

use log::debug;

use crate::discretization::{
    divergence_raw, face_average_raw, gradient_raw, laplacian_neumann_raw, GridSpec,
    RobinBoundary, ScalarField, StaggeredVectorField, TimeSpec,
};
use crate::error::{ChbError, Result};
use crate::linsolve::{pcg, SolveReport, SparseMatrix};
use crate::objective::ControlField;
use crate::potentials::{interp, psi_d1, PotentialSpec};

/// Model coefficients. Mobility, permeability, shear viscosity and the
/// Robin coefficient must be positive; the rest nonnegative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub nu: f64,
    pub eta: f64,
    pub lambda: f64,
    pub chi: f64,
    pub prolif: f64,
    pub apopt: f64,
    pub robin_k: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            nu: 1.0,
            eta: 1.0,
            lambda: 0.5,
            chi: 0.5,
            prolif: 1.0,
            apopt: 0.2,
            robin_k: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("m", self.m), ("nu", self.nu), ("eta", self.eta), ("robin_k", self.robin_k)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChbError::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("lambda", self.lambda),
            ("chi", self.chi),
            ("prolif", self.prolif),
            ("apopt", self.apopt),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ChbError::InvalidParameter(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target of the nutrient CG solves.
    pub cg_tol: f64,
    /// CG iteration cap as a multiple of the system size.
    pub cg_maxit_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cg_tol: 1e-12,
            cg_maxit_factor: 10,
        }
    }
}

/// `Frozen` pins `v = 0, p = 0` and skips the Brinkman solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlowMode {
    #[default]
    Coupled,
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSnapshot {
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub sigma: ScalarField,
    pub vel: StaggeredVectorField,
    pub p: ScalarField,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub nutrient_iterations: usize,
    pub nutrient_residual: f64,
    /// `max |div v - (Pσ - A) h(φ)|`.
    pub divergence_residual: f64,
}

/// Snapshots at `t^0 … t^N`; memory is `(N + 1)` times five fields.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub grid: GridSpec,
    pub time: TimeSpec,
    /// The control that produced the trajectory.
    pub control: ControlField,
    pub snapshots: Vec<StateSnapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl StateTrajectory {
    pub fn last(&self) -> &StateSnapshot {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn max_divergence_residual(&self) -> f64 {
        self.diagnostics
            .iter()
            .fold(0.0, |m, d| m.max(d.divergence_residual))
    }

    pub fn max_phi_abs(&self) -> f64 {
        self.snapshots.iter().fold(0.0, |m, s| m.max(s.phi.max_abs()))
    }
}

/// Owns the factored constant operators for one grid, time step and
/// parameter set.
#[derive(Clone, Debug)]
pub struct StateSolver {
    grid: GridSpec,
    time: TimeSpec,
    params: ModelParams,
    potential: PotentialSpec,
    options: SolverOptions,
    flow: FlowMode,
    nutrient_bc: RobinBoundary,
    brinkman: BrinkmanOperator,
    phase: PhaseOperator,
}

impl StateSolver {
    pub fn new(
        grid: GridSpec,
        time: TimeSpec,
        params: ModelParams,
        potential: PotentialSpec,
        options: SolverOptions,
    ) -> Result<Self> {
        params.validate()?;
        let potential = PotentialSpec::new(potential.s_stab)?;
        if !(options.cg_tol > 0.0) || options.cg_maxit_factor == 0 {
            return Err(ChbError::InvalidParameter(
                "cg_tol must be > 0 and cg_maxit_factor >= 1".into(),
            ));
        }
        let brinkman = BrinkmanOperator::new(grid, params.eta, params.lambda, params.nu)?;
        let phase = PhaseOperator::new(grid, time.tau(), params.m, potential.s_stab)?;
        Ok(Self {
            grid,
            time,
            params,
            potential,
            options,
            flow: FlowMode::Coupled,
            nutrient_bc: RobinBoundary::uniform(params.robin_k)?,
            brinkman,
            phase,
        })
    }

    pub fn with_flow(mut self, flow: FlowMode) -> Self {
        self.flow = flow;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn time(&self) -> &TimeSpec {
        &self.time
    }
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }
    pub fn options(&self) -> &SolverOptions {
        &self.options
    }
    pub fn flow(&self) -> FlowMode {
        self.flow
    }
    pub fn brinkman(&self) -> &BrinkmanOperator {
        &self.brinkman
    }
    pub fn phase(&self) -> &PhaseOperator {
        &self.phase
    }

    pub(crate) fn cg(&self, a: &SparseMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let (x, report) = pcg(
            a,
            b,
            None,
            self.options.cg_tol,
            self.options.cg_maxit_factor * b.len(),
        );
        if report.converged {
            Ok((x, report))
        } else {
            Err(ChbError::NotConverged { report })
        }
    }

    pub(crate) fn nutrient_matrix(&self, phi: &[f64]) -> Result<(SparseMatrix, Vec<f64>)> {
        assemble_nutrient(&self.grid, phi, &self.nutrient_bc)
    }

    pub fn solve_nutrient(&self, phi: &ScalarField) -> Result<ScalarField> {
        Ok(self.solve_nutrient_report(phi, &self.nutrient_bc)?.0)
    }

    /// Nutrient solve under arbitrary per-side Robin coefficients.
    pub fn solve_nutrient_report(
        &self,
        phi: &ScalarField,
        bc: &RobinBoundary,
    ) -> Result<(ScalarField, SolveReport)> {
        self.grid.check_same(phi.grid())?;
        let (a, load) = assemble_nutrient(&self.grid, phi.values(), bc)?;
        let (sigma, report) = self.cg(&a, &load)?;
        Ok((ScalarField::from_raw(self.grid, sigma), report))
    }

    /// Face forcing `(μ + χσ)~ ∇φ` and divergence data `(Pσ - A) h(φ)`.
    pub(crate) fn brinkman_data(
        &self,
        phi: &[f64],
        mu: &[f64],
        sigma: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let p = &self.params;
        let (nxf, nyf) = (g.num_xfaces(), g.num_yfaces());
        let mut gx = vec![0.0; nxf];
        let mut gy = vec![0.0; nyf];
        gradient_raw(g, phi, &mut gx, &mut gy);
        let pot: Vec<f64> = mu.iter().zip(sigma).map(|(m, s)| m + p.chi * s).collect();
        let mut ax = vec![0.0; nxf];
        let mut ay = vec![0.0; nyf];
        face_average_raw(g, &pot, &mut ax, &mut ay);
        let fx = ax.iter().zip(&gx).map(|(a, b)| a * b).collect();
        let fy = ay.iter().zip(&gy).map(|(a, b)| a * b).collect();
        let div = phi
            .iter()
            .zip(sigma)
            .map(|(&f, &s)| (p.prolif * s - p.apopt) * interp(f))
            .collect();
        (fx, fy, div)
    }

    pub fn solve_brinkman(
        &self,
        phi: &ScalarField,
        mu: &ScalarField,
        sigma: &ScalarField,
    ) -> Result<(StaggeredVectorField, ScalarField)> {
        self.grid.check_same(phi.grid())?;
        self.grid.check_same(mu.grid())?;
        self.grid.check_same(sigma.grid())?;
        let (v, p, _) = self.brinkman_with_residual(phi.values(), mu.values(), sigma.values());
        Ok((v, p))
    }

    fn brinkman_with_residual(
        &self,
        phi: &[f64],
        mu: &[f64],
        sigma: &[f64],
    ) -> (StaggeredVectorField, ScalarField, f64) {
        if self.flow == FlowMode::Frozen {
            return (
                StaggeredVectorField::zeros(self.grid),
                ScalarField::zeros(self.grid),
                0.0,
            );
        }
        let (fx, fy, g) = self.brinkman_data(phi, mu, sigma);
        let (vx, vy, p) = self.brinkman.solve(&fx, &fy, &g);
        let mut div = vec![0.0; self.grid.num_cells()];
        divergence_raw(&self.grid, &vx, &vy, &mut div);
        let residual = div
            .iter()
            .zip(&g)
            .fold(0.0f64, |m, (d, s)| m.max((d - s).abs()));
        (
            StaggeredVectorField::from_raw(self.grid, vx, vy),
            ScalarField::from_raw(self.grid, p),
            residual,
        )
    }

    /// Right-hand sides `(r1, r2)` of the phase step.
    pub(crate) fn phase_rhs(
        &self,
        phi: &[f64],
        sigma: &[f64],
        vel: &StaggeredVectorField,
        u: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let p = &self.params;
        let tau = self.time.tau();
        let s = self.potential.s_stab;
        let n = g.num_cells();
        let mut ax = vec![0.0; g.num_xfaces()];
        let mut ay = vec![0.0; g.num_yfaces()];
        face_average_raw(g, phi, &mut ax, &mut ay);
        for (a, v) in ax.iter_mut().zip(vel.xfaces()) {
            *a *= v;
        }
        for (a, v) in ay.iter_mut().zip(vel.yfaces()) {
            *a *= v;
        }
        let mut adv = vec![0.0; n];
        divergence_raw(g, &ax, &ay, &mut adv);
        let r1 = (0..n)
            .map(|k| {
                phi[k] / tau - adv[k] + (p.prolif * sigma[k] - p.apopt - u[k]) * interp(phi[k])
            })
            .collect();
        let r2 = (0..n)
            .map(|k| -s * phi[k] + psi_d1(phi[k]) - p.chi * sigma[k])
            .collect();
        (r1, r2)
    }

    pub fn step_phase(
        &self,
        prev: &StateSnapshot,
        u_n: &ScalarField,
    ) -> Result<(ScalarField, ScalarField)> {
        self.grid.check_same(prev.phi.grid())?;
        self.grid.check_same(u_n.grid())?;
        let (r1, r2) = self.phase_rhs(
            prev.phi.values(),
            prev.sigma.values(),
            &prev.vel,
            u_n.values(),
        );
        let (phi, mu) = self.phase.solve(&r1, &r2);
        let phi = ScalarField::from_raw(self.grid, phi);
        let mu = ScalarField::from_raw(self.grid, mu);
        if !phi.is_finite() || !mu.is_finite() {
            return Err(ChbError::NonFinite("phase step".into()));
        }
        Ok((phi, mu))
    }

    /// `μ⁰ = -Δφ₀ + ψ'(φ₀) - χσ⁰`.
    pub(crate) fn initial_potential(&self, phi: &[f64], sigma: &[f64]) -> Vec<f64> {
        let mut lap = vec![0.0; phi.len()];
        laplacian_neumann_raw(&self.grid, phi, &mut lap);
        (0..phi.len())
            .map(|k| -lap[k] + psi_d1(phi[k]) - self.params.chi * sigma[k])
            .collect()
    }

    fn complete_snapshot(
        &self,
        phi: ScalarField,
        mu: ScalarField,
        sigma: (Vec<f64>, SolveReport),
        time: f64,
    ) -> (StateSnapshot, StepDiagnostics) {
        let (sigma, report) = sigma;
        let sigma = ScalarField::from_raw(self.grid, sigma);
        let (vel, p, divergence_residual) =
            self.brinkman_with_residual(phi.values(), mu.values(), sigma.values());
        let snap = StateSnapshot {
            phi,
            mu,
            sigma,
            vel,
            p,
            time,
        };
        let diag = StepDiagnostics {
            nutrient_iterations: report.iterations,
            nutrient_residual: report.final_residual,
            divergence_residual,
        };
        (snap, diag)
    }

    pub fn initial_snapshot(&self, phi0: &ScalarField) -> Result<(StateSnapshot, StepDiagnostics)> {
        self.grid.check_same(phi0.grid())?;
        if !phi0.is_finite() {
            return Err(ChbError::NonFinite("initial phase field".into()));
        }
        let (a, load) = self.nutrient_matrix(phi0.values())?;
        let sigma = self.cg(&a, &load)?;
        let mu = self.initial_potential(phi0.values(), &sigma.0);
        Ok(self.complete_snapshot(phi0.clone(), ScalarField::from_raw(self.grid, mu), sigma, 0.0))
    }

    pub fn solve_forward(&self, u: &ControlField, phi0: &ScalarField) -> Result<StateTrajectory> {
        u.check_spec(&self.grid, &self.time)?;
        let nt = self.time.nt();
        let mut snapshots = Vec::with_capacity(nt + 1);
        let mut diagnostics = Vec::with_capacity(nt + 1);
        let (s0, d0) = self.initial_snapshot(phi0).map_err(|e| e.at_step(0))?;
        snapshots.push(s0);
        diagnostics.push(d0);
        for n in 0..nt {
            let prev = &snapshots[n];
            let (phi, mu) = self
                .step_phase(prev, &u.slabs()[n])
                .map_err(|e| e.at_step(n + 1))?;
            let sigma = self
                .nutrient_matrix(phi.values())
                .and_then(|(a, load)| self.cg(&a, &load))
                .map_err(|e| e.at_step(n + 1))?;
            let (snap, diag) = self.complete_snapshot(phi, mu, sigma, self.time.time(n + 1));
            debug!(
                "step {}: |phi|_inf = {:.4}, cg its = {}, div res = {:.2e}",
                n + 1,
                snap.phi.max_abs(),
                diag.nutrient_iterations,
                diag.divergence_residual
            );
            snapshots.push(snap);
            diagnostics.push(diag);
        }
        Ok(StateTrajectory {
            grid: self.grid,
            time: self.time,
            control: u.clone(),
            snapshots,
            diagnostics,
        })
    }
}
