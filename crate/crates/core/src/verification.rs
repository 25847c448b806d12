//! Executable checks of the analytic properties with a discrete counterpart.
//! Every check is deterministic given its seed and yields PASS/FAIL rows.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::discretization::{
    gradient, GridSpec, RobinBoundary, ScalarField, TimeSpec,
};
use crate::error::{ChbError, Result};
use crate::forward::{FlowMode, ModelParams, SolverOptions, StateSolver, StateTrajectory};
use crate::objective::{ControlField, ControlProblem, CostWeights, TargetBundle};
use crate::potentials::{psi, PotentialSpec};
use crate::sensitivity::{solve_adjoint, solve_linearized, tracking_derivative, SourceBundle};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub case: String,
    pub quantity: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub rows: Vec<CheckRow>,
    pub pass: bool,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            rows: Vec::new(),
            pass: true,
        }
    }

    fn row(&mut self, case: impl Into<String>, quantity: &str, value: f64, threshold: f64, pass: bool) {
        self.pass &= pass;
        self.rows.push(CheckRow {
            check: self.name.clone(),
            case: case.into(),
            quantity: quantity.into(),
            value,
            threshold,
            pass,
        });
    }

    pub const CSV_HEADER: &'static str = "check,case,quantity,value,threshold,status";

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{}",
                r.check,
                r.case,
                r.quantity,
                r.value,
                r.threshold,
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

fn random_control(grid: GridSpec, time: TimeSpec, rng: &mut StdRng) -> ControlField {
    let slabs = (0..time.nt())
        .map(|_| ScalarField::from_fn(grid, |_, _| rng.gen_range(0.0..1.0)))
        .collect();
    ControlField::new(time, slabs).expect("finite samples")
}

/// Least-squares slope of `log err` against `log eps`.
pub fn loglog_slope(eps: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdDirection {
    pub directional: f64,
    /// `(ε, central difference, relative error)`.
    pub samples: Vec<(f64, f64, f64)>,
    pub slope: f64,
}

/// Compares `⟨∇J(u), h⟩` with central differences of `J` along random
/// directions with entries uniform in `[0, 1]` (feasible from the lower
/// bound `u = 0`). A direction passes when its smallest relative error is at
/// most `1e-6` and the errors decay like `ε²` (slope `2 ± 0.3`), unless they
/// already sit at round-off level (`≤ 1e-10`) for every `ε`.
pub fn fd_gradient_check(
    problem: &ControlProblem,
    u: &ControlField,
    directions: usize,
    eps: &[f64],
    seed: u64,
) -> Result<(CheckReport, Vec<FdDirection>)> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(ChbError::InvalidParameter("eps list must be nonempty and positive".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let eval = problem.evaluate(u)?;
    let mut report = CheckReport::new("fd_gradient");
    let mut out = Vec::new();
    for d in 0..directions {
        let h = random_control(*problem.grid(), *problem.time(), &mut rng);
        let dd = eval.gradient.inner(&h);
        let mut samples = Vec::new();
        for &e in eps {
            let jp = problem.cost(&u.axpy(e, &h)?)?;
            let jm = problem.cost(&u.axpy(-e, &h)?)?;
            let fd = (jp - jm) / (2.0 * e);
            let rel = if dd == 0.0 { fd.abs() } else { (dd - fd).abs() / dd.abs() };
            samples.push((e, fd, rel));
        }
        let errs: Vec<f64> = samples.iter().map(|s| s.2).collect();
        let slope = if eps.len() >= 2 { loglog_slope(eps, &errs) } else { 2.0 };
        let min_err = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        let roundoff = errs.iter().all(|&e| e <= 1e-10);
        report.row(format!("dir{d}"), "directional_derivative", dd, 0.0, true);
        for s in &samples {
            report.row(format!("dir{d}:eps={:e}", s.0), "rel_error", s.2, 1e-6, true);
        }
        report.row(format!("dir{d}"), "min_rel_error", min_err, 1e-6, min_err <= 1e-6);
        report.row(
            format!("dir{d}"),
            "slope",
            slope,
            2.0,
            roundoff || (slope - 2.0).abs() <= 0.3,
        );
        out.push(FdDirection {
            directional: dd,
            samples,
            slope,
        });
    }
    Ok((report, out))
}

/// Random tracking data standing in for the dual variable `y`.
fn random_targets(grid: GridSpec, time: &TimeSpec, rng: &mut StdRng) -> TargetBundle {
    let s = SourceBundle::random(grid, time, rng);
    let phi_f = ScalarField::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0));
    TargetBundle {
        phi_d: s.f1,
        mu_d: s.f3,
        sigma_d: s.f4,
        v_d: s.fvec,
        phi_f,
    }
}

/// Defect of `⟨L src, y⟩ = ⟨src, L* y⟩` on random pairs.
pub fn duality_check(
    solver: &StateSolver,
    base: &StateTrajectory,
    pairs: usize,
    seed: u64,
) -> Result<(CheckReport, f64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = CheckReport::new("duality");
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let src = SourceBundle::random(base.grid, &base.time, &mut rng);
        let targets = random_targets(base.grid, &base.time, &mut rng);
        let alpha = [(); 5].map(|_| rng.gen_range(0.1..2.0));
        let weights = CostWeights::new(alpha, 1.0)?;
        let lin = solve_linearized(solver, base, &src)?;
        let lhs = tracking_derivative(base, &lin, &targets, &weights);
        let adj = solve_adjoint(solver, base, &targets, &weights)?;
        let rhs = adj.pair_sources(&src, &base.time);
        let scale = lhs.abs().max(rhs.abs());
        let defect = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
        worst = worst.max(defect);
        report.row(format!("pair{k}"), "rel_defect", defect, 1e-9, defect <= 1e-9);
    }
    Ok((report, worst))
}

/// Largest `|σ_b - 1|` over boundary faces, where the face value
/// `σ_b = (2σ_c + hK) / (2 + hK)` follows from the half-cell flux balance
/// `(σ_b - σ_c) / (h/2) = K (1 - σ_b)`.
fn boundary_trace_deviation(sigma: &ScalarField, k: f64) -> f64 {
    let g = sigma.grid();
    let trace = |c: f64, h: f64| (2.0 * c + h * k) / (2.0 + h * k);
    let mut dev = 0.0f64;
    for j in 0..g.ny() {
        dev = dev.max((trace(sigma.at(0, j), g.hx()) - 1.0).abs());
        dev = dev.max((trace(sigma.at(g.nx() - 1, j), g.hx()) - 1.0).abs());
    }
    for i in 0..g.nx() {
        dev = dev.max((trace(sigma.at(i, 0), g.hy()) - 1.0).abs());
        dev = dev.max((trace(sigma.at(i, g.ny() - 1), g.hy()) - 1.0).abs());
    }
    dev
}

/// `‖σ_K - σ_Dirichlet‖` over an increasing list of Robin coefficients.
pub fn dirichlet_limit_check(
    solver: &StateSolver,
    phi: &ScalarField,
    ks: &[f64],
) -> Result<(CheckReport, Vec<f64>)> {
    if ks.is_empty() || ks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ChbError::InvalidParameter("K list must be nonempty and increasing".into()));
    }
    let (dir, _) = solver.solve_nutrient_report(phi, &RobinBoundary::dirichlet())?;
    let mut report = CheckReport::new("dirichlet_limit");
    let mut errs = Vec::with_capacity(ks.len());
    let mut last = None;
    for &k in ks {
        let (sigma, _) = solver.solve_nutrient_report(phi, &RobinBoundary::uniform(k)?)?;
        let err = sigma.zip_map(&dir, |a, b| a - b)?.norm_l2();
        let monotone = errs.last().is_none_or(|&prev| err <= prev);
        report.row(format!("K={k:e}"), "l2_error", err, errs.last().copied().unwrap_or(f64::INFINITY), monotone);
        errs.push(err);
        last = Some((k, sigma));
    }
    let (k_max, sigma) = last.expect("nonempty K list");
    let dev = boundary_trace_deviation(&sigma, k_max);
    report.row(format!("K={k_max:e}"), "boundary_deviation", dev, 1e-4, dev <= 1e-4);
    Ok((report, errs))
}

/// `∫ ½|∇φ|² + ψ(φ)` with the trapezoidal face rule for the gradient.
pub fn ginzburg_landau_energy(phi: &ScalarField) -> f64 {
    let g = gradient(phi);
    let area = phi.grid().cell_area();
    0.5 * g.inner(&g) + area * phi.values().iter().map(|&s| psi(s)).sum::<f64>()
}

/// Runs `steps` steps with sources, chemotaxis and flow switched off and
/// checks `Eⁿ⁺¹ ≤ Eⁿ + 1e-12`.
pub fn energy_decay_check(
    params: &ModelParams,
    potential: PotentialSpec,
    phi0: &ScalarField,
    tau: f64,
    steps: usize,
) -> Result<(CheckReport, Vec<f64>)> {
    let grid = *phi0.grid();
    let time = TimeSpec::new(tau * steps as f64, steps)?;
    let quiet = ModelParams {
        prolif: 0.0,
        apopt: 0.0,
        chi: 0.0,
        ..*params
    };
    let solver = StateSolver::new(grid, time, quiet, potential, SolverOptions::default())?
        .with_flow(FlowMode::Frozen);
    let traj = solver.solve_forward(&ControlField::zeros(grid, time), phi0)?;
    let energies: Vec<f64> = traj.snapshots.iter().map(|s| ginzburg_landau_energy(&s.phi)).collect();
    let mut report = CheckReport::new("energy_decay");
    let worst = energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    report.row(format!("steps={steps}"), "max_energy_increase", worst, 1e-12, worst <= 1e-12);
    report.row(
        format!("steps={steps}"),
        "final_over_initial",
        energies[steps] / energies[0].max(f64::MIN_POSITIVE),
        1.0,
        true,
    );
    Ok((report, energies))
}
