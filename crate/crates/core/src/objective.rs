//! Tracking-type cost functional, reduced gradient and box projection.
//!
//! ```text
//! J(u) = α₀/2 |φ(T) - φ_f|² + α₁/2 ‖φ - φ_d‖² + α₂/2 ‖μ - μ_d‖²
//!      + α₃/2 ‖σ - σ_d‖² + α₄/2 ‖v - v_d‖² + κ/2 ‖u‖²
//! ```
//!
//! Space integrals use the midpoint rule on cells and the trapezoidal rule
//! on faces. Time integrals of the state use the right endpoint of each slab
//! (snapshots `1..=N`); the control is piecewise constant on slabs `0..N`.

use crate::discretization::{GridSpec, ScalarField, StaggeredVectorField, TimeSpec};
use crate::error::{ChbError, Result};
use crate::forward::{StateSolver, StateTrajectory};
use crate::potentials::interp;
use crate::sensitivity::{solve_adjoint, AdjointTrajectory};

/// Cell-centred control, one slab per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    time: TimeSpec,
    slabs: Vec<ScalarField>,
}

impl ControlField {
    pub fn new(time: TimeSpec, slabs: Vec<ScalarField>) -> Result<Self> {
        if slabs.len() != time.nt() {
            return Err(ChbError::mismatch(
                format!("{} control slabs", time.nt()),
                slabs.len(),
            ));
        }
        let grid = *slabs[0].grid();
        for s in &slabs {
            grid.check_same(s.grid())?;
            if !s.is_finite() {
                return Err(ChbError::NonFinite("control".into()));
            }
        }
        Ok(Self { time, slabs })
    }

    pub fn constant(grid: GridSpec, time: TimeSpec, c: f64) -> Self {
        Self {
            time,
            slabs: vec![ScalarField::constant(grid, c); time.nt()],
        }
    }

    pub fn zeros(grid: GridSpec, time: TimeSpec) -> Self {
        Self::constant(grid, time, 0.0)
    }

    /// Same value on every slab.
    pub fn steady(time: TimeSpec, field: ScalarField) -> Self {
        Self {
            time,
            slabs: vec![field; time.nt()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.slabs[0].grid()
    }
    pub fn time(&self) -> &TimeSpec {
        &self.time
    }
    pub fn slabs(&self) -> &[ScalarField] {
        &self.slabs
    }
    #[cfg(test)]
    pub(crate) fn slabs_mut(&mut self) -> &mut [ScalarField] {
        &mut self.slabs
    }

    pub fn check_spec(&self, grid: &GridSpec, time: &TimeSpec) -> Result<()> {
        grid.check_same(self.grid())?;
        if self.time != *time {
            return Err(ChbError::mismatch(format!("{time:?}"), format!("{:?}", self.time)));
        }
        Ok(())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        other.check_spec(self.grid(), &self.time)
    }

    /// `L²(0,T; L²(Ω))` inner product.
    pub fn inner(&self, other: &Self) -> f64 {
        let tau = self.time.tau();
        self.slabs
            .iter()
            .zip(&other.slabs)
            .map(|(a, b)| tau * a.inner(b))
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.slabs.iter().fold(0.0, |m, s| m.max(s.max_abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            time: self.time,
            slabs: self.slabs.iter().map(|s| s.map(&f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other)?;
        let slabs = self
            .slabs
            .iter()
            .zip(&other.slabs)
            .map(|(a, b)| a.zip_map(b, &f))
            .collect::<Result<_>>()?;
        Ok(Self {
            time: self.time,
            slabs,
        })
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + alpha * b)
    }
}

/// Box constraints `a ≤ u ≤ b`, pointwise on every slab.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBounds {
    lower: ControlField,
    upper: ControlField,
}

impl ControlBounds {
    pub fn new(lower: ControlField, upper: ControlField) -> Result<Self> {
        lower.check_same(&upper)?;
        for (a, b) in lower.slabs.iter().zip(&upper.slabs) {
            if let Some(k) = a.values().iter().zip(b.values()).position(|(a, b)| a > b) {
                return Err(ChbError::InvalidParameter(format!(
                    "lower bound exceeds upper bound at cell {k}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn scalar(grid: GridSpec, time: TimeSpec, a: f64, b: f64) -> Result<Self> {
        if !(a <= b) {
            return Err(ChbError::InvalidParameter(format!(
                "lower bound {a} exceeds upper bound {b}"
            )));
        }
        Ok(Self {
            lower: ControlField::constant(grid, time, a),
            upper: ControlField::constant(grid, time, b),
        })
    }

    pub fn lower(&self) -> &ControlField {
        &self.lower
    }
    pub fn upper(&self) -> &ControlField {
        &self.upper
    }

    pub fn contains(&self, u: &ControlField) -> bool {
        u.slabs.iter().zip(self.lower.slabs.iter().zip(&self.upper.slabs)).all(|(s, (a, b))| {
            s.values()
                .iter()
                .zip(a.values().iter().zip(b.values()))
                .all(|(v, (a, b))| a <= v && v <= b)
        })
    }
}

/// `P_[a,b](u) = max(a, min(b, u))`.
pub fn project_control(u: &ControlField, bounds: &ControlBounds) -> ControlField {
    let slabs = u
        .slabs
        .iter()
        .zip(bounds.lower.slabs.iter().zip(&bounds.upper.slabs))
        .map(|(s, (a, b))| {
            let v = s
                .values()
                .iter()
                .zip(a.values().iter().zip(b.values()))
                .map(|(&v, (&a, &b))| v.min(b).max(a))
                .collect();
            ScalarField::from_raw(*s.grid(), v)
        })
        .collect();
    ControlField {
        time: u.time,
        slabs,
    }
}

/// `‖u - P(u - γ g)‖ / γ`.
pub fn stationarity_residual(
    u: &ControlField,
    grad: &ControlField,
    bounds: &ControlBounds,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(ChbError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    let trial = project_control(&u.axpy(-gamma, grad)?, bounds);
    Ok(u.axpy(-1.0, &trial)?.norm_l2() / gamma)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub kappa: f64,
}

impl CostWeights {
    pub fn new(alpha: [f64; 5], kappa: f64) -> Result<Self> {
        let w = Self {
            alpha0: alpha[0],
            alpha1: alpha[1],
            alpha2: alpha[2],
            alpha3: alpha[3],
            alpha4: alpha[4],
            kappa,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn alphas(&self) -> [f64; 5] {
        [self.alpha0, self.alpha1, self.alpha2, self.alpha3, self.alpha4]
    }

    pub fn validate(&self) -> Result<()> {
        for (k, a) in self.alphas().iter().enumerate() {
            if !(*a >= 0.0 && a.is_finite()) {
                return Err(ChbError::InvalidParameter(format!("alpha{k} must be ≥ 0, got {a}")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(ChbError::InvalidParameter(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Desired states. The per-step vectors hold `N + 1` entries aligned with the
/// trajectory snapshots; entry 0 never enters the cost.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBundle {
    pub phi_d: Vec<ScalarField>,
    pub mu_d: Vec<ScalarField>,
    pub sigma_d: Vec<ScalarField>,
    pub v_d: Vec<StaggeredVectorField>,
    pub phi_f: ScalarField,
}

impl TargetBundle {
    /// Time-independent targets.
    pub fn steady(
        time: &TimeSpec,
        phi_d: ScalarField,
        mu_d: ScalarField,
        sigma_d: ScalarField,
        v_d: StaggeredVectorField,
        phi_f: ScalarField,
    ) -> Self {
        let n = time.nt() + 1;
        Self {
            phi_d: vec![phi_d; n],
            mu_d: vec![mu_d; n],
            sigma_d: vec![sigma_d; n],
            v_d: vec![v_d; n],
            phi_f,
        }
    }

    pub fn zeros(grid: GridSpec, time: &TimeSpec) -> Self {
        let z = ScalarField::zeros(grid);
        Self::steady(time, z.clone(), z.clone(), z.clone(), StaggeredVectorField::zeros(grid), z)
    }

    /// Targets equal to the given trajectory: every tracking residual is zero.
    pub fn matching(traj: &StateTrajectory) -> Self {
        let s = &traj.snapshots;
        Self {
            phi_d: s.iter().map(|x| x.phi.clone()).collect(),
            mu_d: s.iter().map(|x| x.mu.clone()).collect(),
            sigma_d: s.iter().map(|x| x.sigma.clone()).collect(),
            v_d: s.iter().map(|x| x.vel.clone()).collect(),
            phi_f: traj.last().phi.clone(),
        }
    }

    pub fn check_spec(&self, grid: &GridSpec, time: &TimeSpec) -> Result<()> {
        let n = time.nt() + 1;
        for (name, len) in [
            ("phi_d", self.phi_d.len()),
            ("mu_d", self.mu_d.len()),
            ("sigma_d", self.sigma_d.len()),
            ("v_d", self.v_d.len()),
        ] {
            if len != n {
                return Err(ChbError::mismatch(format!("{n} {name} entries"), len));
            }
        }
        for f in self.phi_d.iter().chain(&self.mu_d).chain(&self.sigma_d) {
            grid.check_same(f.grid())?;
        }
        for v in &self.v_d {
            grid.check_same(v.grid())?;
        }
        grid.check_same(self.phi_f.grid())
    }
}

/// The six addends of `J`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub terminal: f64,
    pub phi: f64,
    pub mu: f64,
    pub sigma: f64,
    pub vel: f64,
    pub control: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.terminal + self.phi + self.mu + self.sigma + self.vel + self.control
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.terminal, self.phi, self.mu, self.sigma, self.vel, self.control]
    }

    fn add(&mut self, o: &Self) {
        self.terminal += o.terminal;
        self.phi += o.phi;
        self.mu += o.mu;
        self.sigma += o.sigma;
        self.vel += o.vel;
        self.control += o.control;
    }
}

fn sq_dist(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    d * a.grid().cell_area()
}

fn sq_dist_faces(a: &StaggeredVectorField, b: &StaggeredVectorField) -> f64 {
    let g = a.grid();
    let mut s = 0.0;
    for j in 0..g.ny() {
        for i in 0..=g.nx() {
            let k = g.xface(i, j);
            let d = a.xfaces()[k] - b.xfaces()[k];
            s += g.xface_weight(i) * d * d;
        }
    }
    for j in 0..=g.ny() {
        for i in 0..g.nx() {
            let k = g.yface(i, j);
            let d = a.yfaces()[k] - b.yfaces()[k];
            s += g.yface_weight(j) * d * d;
        }
    }
    s
}

fn check_inputs(
    traj: &StateTrajectory,
    u: &ControlField,
    targets: &TargetBundle,
    weights: &CostWeights,
) -> Result<()> {
    u.check_spec(&traj.grid, &traj.time)?;
    targets.check_spec(&traj.grid, &traj.time)?;
    weights.validate()
}

/// Contributions of snapshot `n` (tracking and terminal terms) and of slab
/// `n` (control term) to `J`.
pub fn step_cost_terms(
    traj: &StateTrajectory,
    u: &ControlField,
    targets: &TargetBundle,
    weights: &CostWeights,
    n: usize,
) -> Result<CostBreakdown> {
    check_inputs(traj, u, targets, weights)?;
    let nt = traj.time.nt();
    if n > nt {
        return Err(ChbError::mismatch(format!("step <= {nt}"), n));
    }
    let tau = traj.time.tau();
    let w = weights;
    let mut c = CostBreakdown::default();
    let s = &traj.snapshots[n];
    if n >= 1 {
        c.phi = 0.5 * tau * w.alpha1 * sq_dist(&s.phi, &targets.phi_d[n]);
        c.mu = 0.5 * tau * w.alpha2 * sq_dist(&s.mu, &targets.mu_d[n]);
        c.sigma = 0.5 * tau * w.alpha3 * sq_dist(&s.sigma, &targets.sigma_d[n]);
        c.vel = 0.5 * tau * w.alpha4 * sq_dist_faces(&s.vel, &targets.v_d[n]);
    }
    if n == nt {
        c.terminal = 0.5 * w.alpha0 * sq_dist(&s.phi, &targets.phi_f);
    }
    if n < nt {
        let slab = &u.slabs[n];
        c.control = 0.5 * tau * w.kappa * slab.inner(slab);
    }
    Ok(c)
}

pub fn cost_breakdown(
    traj: &StateTrajectory,
    u: &ControlField,
    targets: &TargetBundle,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    let mut total = CostBreakdown::default();
    for n in 0..=traj.time.nt() {
        total.add(&step_cost_terms(traj, u, targets, weights, n)?);
    }
    Ok(total)
}

pub fn evaluate_cost(
    traj: &StateTrajectory,
    u: &ControlField,
    targets: &TargetBundle,
    weights: &CostWeights,
) -> Result<f64> {
    Ok(cost_breakdown(traj, u, targets, weights)?.total())
}

/// Slab `n` receives `κ uⁿ - ϑⁿ h(φⁿ)`.
pub fn reduced_gradient(
    u: &ControlField,
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
    weights: &CostWeights,
) -> Result<ControlField> {
    u.check_spec(&traj.grid, &traj.time)?;
    if adj.theta.len() != traj.snapshots.len() {
        return Err(ChbError::mismatch(traj.snapshots.len(), adj.theta.len()));
    }
    let slabs = (0..traj.time.nt())
        .map(|n| {
            let phi = traj.snapshots[n].phi.values();
            let theta = adj.theta[n].values();
            let v = u.slabs[n]
                .values()
                .iter()
                .zip(phi.iter().zip(theta))
                .map(|(&u, (&f, &t))| weights.kappa * u - t * interp(f))
                .collect();
            ScalarField::from_raw(traj.grid, v)
        })
        .collect();
    Ok(ControlField {
        time: traj.time,
        slabs,
    })
}

/// Everything needed to evaluate the reduced cost `J(u)` and its gradient.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub solver: StateSolver,
    pub phi0: ScalarField,
    pub targets: TargetBundle,
    pub weights: CostWeights,
    pub bounds: ControlBounds,
}

/// Cost, gradient and the states they came from.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: ControlField,
    pub trajectory: StateTrajectory,
    pub adjoint: AdjointTrajectory,
}

impl ControlProblem {
    pub fn new(
        solver: StateSolver,
        phi0: ScalarField,
        targets: TargetBundle,
        weights: CostWeights,
        bounds: ControlBounds,
    ) -> Result<Self> {
        let (grid, time) = (*solver.grid(), *solver.time());
        grid.check_same(phi0.grid())?;
        targets.check_spec(&grid, &time)?;
        weights.validate()?;
        bounds.lower.check_spec(&grid, &time)?;
        Ok(Self {
            solver,
            phi0,
            targets,
            weights,
            bounds,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.solver.grid()
    }
    pub fn time(&self) -> &TimeSpec {
        self.solver.time()
    }

    pub fn forward(&self, u: &ControlField) -> Result<StateTrajectory> {
        self.solver.solve_forward(u, &self.phi0)
    }

    pub fn cost(&self, u: &ControlField) -> Result<f64> {
        let traj = self.forward(u)?;
        evaluate_cost(&traj, u, &self.targets, &self.weights)
    }

    pub fn evaluate(&self, u: &ControlField) -> Result<Evaluation> {
        let trajectory = self.forward(u)?;
        let cost = evaluate_cost(&trajectory, u, &self.targets, &self.weights)?;
        let adjoint = solve_adjoint(&self.solver, &trajectory, &self.targets, &self.weights)?;
        let gradient = reduced_gradient(u, &trajectory, &adjoint, &self.weights)?;
        Ok(Evaluation {
            cost,
            gradient,
            trajectory,
            adjoint,
        })
    }

    /// `P_[a,b](ϑ h(φ) / κ)`, the fixed point an optimal control satisfies.
    pub fn projection_formula(&self, eval: &Evaluation) -> ControlField {
        let kappa = self.weights.kappa;
        let u = &eval.trajectory.control;
        let target = u
            .axpy(-1.0 / kappa, &eval.gradient)
            .expect("gradient shares the control's spec");
        project_control(&target, &self.bounds)
    }
}
