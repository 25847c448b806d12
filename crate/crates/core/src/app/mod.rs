//! Command orchestration for the `chb` binary: configuration, field files
//! and the `forward`, `optimize` and `check` runs.

pub mod config;
pub mod io;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::discretization::{ScalarField, StaggeredVectorField};
use crate::error::{ChbError, Result};
use crate::forward::StateTrajectory;
use crate::objective::{step_cost_terms, ControlField, ControlProblem};
use crate::optimize::{projected_gradient_descent, IterRecord};
use crate::verification::{
    dirichlet_limit_check, duality_check, energy_decay_check, fd_gradient_check,
    ginzburg_landau_energy, CheckReport,
};

pub use config::{FieldSpec, ProblemBundle, ProblemConfig};
pub use io::FieldFormat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Forward,
    Optimize,
    Check,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    Fail,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::Fail => 1,
        }
    }
}

/// Error exit code.
pub const EXIT_ERROR: i32 = 2;

pub const DIAGNOSTICS_HEADER: &str =
    "step,time,terminal,phi,mu,sigma,vel,control,mass,energy,sigma_min,sigma_max";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| ChbError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn cell_velocity(v: &StaggeredVectorField) -> (ScalarField, ScalarField) {
    let g = *v.grid();
    let (xf, yf) = (v.xfaces(), v.yfaces());
    let mut vx = Vec::with_capacity(g.num_cells());
    let mut vy = Vec::with_capacity(g.num_cells());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            vx.push(0.5 * (xf[g.xface(i, j)] + xf[g.xface(i + 1, j)]));
            vy.push(0.5 * (yf[g.yface(i, j)] + yf[g.yface(i, j + 1)]));
        }
    }
    let field = |values| ScalarField::new(g, values).expect("finite face values");
    (field(vx), field(vy))
}

pub fn diagnostics_csv(problem: &ControlProblem, traj: &StateTrajectory, u: &ControlField) -> Result<String> {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    let area = traj.grid.cell_area();
    for (n, snap) in traj.snapshots.iter().enumerate() {
        let c = step_cost_terms(traj, u, &problem.targets, &problem.weights, n)?;
        let _ = write!(s, "{n},{}", snap.time);
        for v in c.as_array() {
            let _ = write!(s, ",{v}");
        }
        let mass = area * snap.phi.values().iter().sum::<f64>();
        let _ = writeln!(
            s,
            ",{mass},{},{},{}",
            ginzburg_landau_energy(&snap.phi),
            snap.sigma.min(),
            snap.sigma.max()
        );
    }
    Ok(s)
}

fn solver_csv(traj: &StateTrajectory) -> String {
    let mut s = String::from("step,nutrient_iterations,nutrient_residual,divergence_residual\n");
    for (n, d) in traj.diagnostics.iter().enumerate() {
        let _ = writeln!(
            s,
            "{n},{},{:e},{:e}",
            d.nutrient_iterations, d.nutrient_residual, d.divergence_residual
        );
    }
    s
}

fn write_trajectory(dir: &Path, traj: &StateTrajectory, cfg: &ProblemConfig) -> Result<()> {
    let fields = dir.join("fields");
    ensure_dir(&fields)?;
    for (n, snap) in traj.snapshots.iter().enumerate() {
        if n % cfg.output.every != 0 && n != traj.snapshots.len() - 1 {
            continue;
        }
        let (vx, vy) = cell_velocity(&snap.vel);
        io::write_fields(
            &fields,
            &format!("state_{n:04}"),
            &[
                ("phi", &snap.phi),
                ("mu", &snap.mu),
                ("sigma", &snap.sigma),
                ("p", &snap.p),
                ("vx", &vx),
                ("vy", &vy),
            ],
            cfg.output.format,
        )?;
    }
    Ok(())
}

fn write_control(dir: &Path, u: &ControlField, format: FieldFormat) -> Result<()> {
    let d = dir.join("control");
    ensure_dir(&d)?;
    for (n, slab) in u.slabs().iter().enumerate() {
        io::write_fields(&d, &format!("slab_{n:04}"), &[("u", slab)], format)?;
    }
    Ok(())
}

fn history_csv(history: &[IterRecord]) -> String {
    let mut s = String::from("iter,cost,residual,step,trials\n");
    for r in history {
        let _ = writeln!(s, "{},{},{:e},{:e},{}", r.iter, r.cost, r.residual, r.step, r.trials);
    }
    s
}

pub fn run_forward(bundle: &ProblemBundle, out: &Path) -> Result<RunStatus> {
    ensure_dir(out)?;
    let traj = bundle.problem.forward(&bundle.u0)?;
    info!(
        "forward: {} steps, max divergence residual {:.3e}",
        traj.time.nt(),
        traj.max_divergence_residual()
    );
    io::write_text(&out.join("config.ini"), &bundle.config.to_ini())?;
    io::write_text(&out.join("diagnostics.csv"), &diagnostics_csv(&bundle.problem, &traj, &bundle.u0)?)?;
    io::write_text(&out.join("solver.csv"), &solver_csv(&traj))?;
    write_trajectory(out, &traj, &bundle.config)?;
    Ok(RunStatus::Success)
}

pub fn run_optimize(bundle: &ProblemBundle, out: &Path) -> Result<RunStatus> {
    ensure_dir(out)?;
    io::write_text(&out.join("config.ini"), &bundle.config.to_ini())?;
    let res = match projected_gradient_descent(&bundle.problem, &bundle.u0, &bundle.config.optimize) {
        Ok(r) => r,
        Err(failure) => {
            io::write_text(&out.join("history.csv"), &history_csv(&failure.history))?;
            return Err(failure.error);
        }
    };
    let last = res.history.last().copied();
    info!(
        "optimize: converged = {}, iterations = {}, J = {:.12e}",
        res.converged,
        res.history.len().saturating_sub(1),
        res.eval.cost
    );
    io::write_text(&out.join("history.csv"), &history_csv(&res.history))?;
    let fmt = bundle.config.output.format;
    write_control(out, &res.u_opt, fmt)?;
    let grad_dir = out.join("gradient");
    ensure_dir(&grad_dir)?;
    for (n, slab) in res.eval.gradient.slabs().iter().enumerate() {
        io::write_fields(&grad_dir, &format!("slab_{n:04}"), &[("grad", slab)], fmt)?;
    }
    io::write_text(
        &out.join("diagnostics.csv"),
        &diagnostics_csv(&bundle.problem, &res.eval.trajectory, &res.u_opt)?,
    )?;
    io::write_text(&out.join("solver.csv"), &solver_csv(&res.eval.trajectory))?;
    write_trajectory(out, &res.eval.trajectory, &bundle.config)?;
    let summary = format!(
        "converged = {}\niterations = {}\ncost = {}\nresidual = {:e}\n",
        res.converged,
        res.history.len().saturating_sub(1),
        res.eval.cost,
        last.map_or(f64::NAN, |r| r.residual)
    );
    io::write_text(&out.join("summary.txt"), &summary)?;
    Ok(if res.converged {
        RunStatus::Success
    } else {
        RunStatus::Fail
    })
}

/// Runs the four verification checks on the configured instance.
pub fn check_reports(bundle: &ProblemBundle) -> Result<Vec<CheckReport>> {
    let cfg = &bundle.config;
    let k = &cfg.check;
    let problem = &bundle.problem;
    let (fd, _) = fd_gradient_check(problem, &bundle.u0, k.fd_directions, &k.fd_eps, k.seed)?;
    let base = problem.forward(&bundle.u0)?;
    let (dual, _) = duality_check(&problem.solver, &base, k.duality_pairs, k.seed)?;
    let (dir, _) = dirichlet_limit_check(&problem.solver, &problem.phi0, &k.dirichlet_k)?;
    let mut rng = StdRng::seed_from_u64(k.seed);
    let noise = ScalarField::from_fn(*problem.grid(), |_, _| rng.gen_range(-1.0..1.0));
    let (energy, _) = energy_decay_check(&cfg.params, cfg.potential, &noise, k.energy_tau, k.energy_steps)?;
    Ok(vec![fd, dual, dir, energy])
}

pub fn run_check(bundle: &ProblemBundle, out: &Path) -> Result<RunStatus> {
    ensure_dir(out)?;
    let reports = check_reports(bundle)?;
    let mut csv = String::from(CheckReport::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        info!("{}: {}", r.name, if r.pass { "PASS" } else { "FAIL" });
        csv.push_str(&r.to_csv());
    }
    io::write_text(&out.join("checks.csv"), &csv)?;
    Ok(if reports.iter().all(|r| r.pass) {
        RunStatus::Success
    } else {
        RunStatus::Fail
    })
}

/// Loads `config`, applies the seed override and dispatches.
pub fn run(command: Command, config: &Path, out: &Path, seed: Option<u64>) -> Result<RunStatus> {
    let mut cfg = ProblemConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.check.seed = s;
    }
    let bundle = cfg.build()?;
    let out: PathBuf = out.to_path_buf();
    match command {
        Command::Forward => run_forward(&bundle, &out),
        Command::Optimize => run_optimize(&bundle, &out),
        Command::Check => run_check(&bundle, &out),
    }
}
