//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use chb_core::discretization::{ScalarField, StaggeredVectorField, TimeSpec};
use chb_core::forward::{StateSolver, StateTrajectory};
use chb_core::objective::{project_control, ControlField, ControlProblem};
use chb_core::optimize::{projected_gradient_descent, residual, OptimOptions};
use chb_core::sensitivity::directional_derivative;
use chb_core::verification::{
    dirichlet_limit_check, duality_check, energy_decay_check, fd_gradient_check, loglog_slope, DEFAULT_SEED,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::{brinkman_errors, random_control, random_field, reference};

type Outcome = Result<(bool, String), String>;
type Criterion = fn(&mut Monitor) -> Outcome;

struct Monitor {
    max_div: f64,
}

impl Monitor {
    fn see(&mut self, t: &StateTrajectory) {
        self.max_div = self.max_div.max(t.max_divergence_residual());
    }
}

fn reference_problem() -> chb_core::app::ProblemBundle {
    reference().build().expect("reference bundle")
}

fn gradient_exactness(mon: &mut Monitor) -> Outcome {
    let start = Instant::now();
    let b = reference_problem();
    let eps = [1e-2, 1e-3, 1e-4];
    let (report, dirs) = fd_gradient_check(&b.problem, &b.u0, 5, &eps, DEFAULT_SEED).map_err(|e| e.to_string())?;
    mon.see(&b.problem.forward(&b.u0).map_err(|e| e.to_string())?);
    let secs = start.elapsed().as_secs_f64();
    let at_small = dirs.iter().map(|d| d.samples[2].2).fold(0.0f64, f64::max);
    let slopes: Vec<String> = dirs.iter().map(|d| format!("{:.2}", d.slope)).collect();
    let ok = report.pass && at_small <= 1e-6 && dirs.iter().all(|d| (d.slope - 2.0).abs() <= 0.3) && secs <= 120.0;
    Ok((
        ok,
        format!("max rel err at eps=1e-4 {at_small:.2e}, slopes [{}], {secs:.1}s", slopes.join(", ")),
    ))
}

fn small_instance(n: usize, nt: usize) -> Result<(StateSolver, StateTrajectory), String> {
    let mut cfg = reference();
    cfg.nx = n;
    cfg.ny = n;
    cfg.nt = nt;
    cfg.horizon = 0.5;
    let b = cfg.build().map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(DEFAULT_SEED);
    let u = random_control(*b.problem.grid(), *b.problem.time(), &mut rng, 0.0, 1.0);
    let base = b.problem.forward(&u).map_err(|e| e.to_string())?;
    Ok((b.problem.solver, base))
}

fn duality(mon: &mut Monitor) -> Outcome {
    let (solver, base) = small_instance(8, 5)?;
    mon.see(&base);
    let (report, worst) = duality_check(&solver, &base, 10, DEFAULT_SEED).map_err(|e| e.to_string())?;
    Ok((report.pass && worst <= 1e-9, format!("max relative defect {worst:.2e} over 10 pairs")))
}

fn trajectory_distance(a: &StateTrajectory, b: &StateTrajectory, scale: f64, lin: &chb_core::sensitivity::LinTrajectory) -> (f64, f64) {
    let mut diff = 0.0;
    let mut norm = 0.0;
    let mut acc = |x: &ScalarField, y: &ScalarField, l: &ScalarField| {
        for ((p, m), d) in x.values().iter().zip(y.values()).zip(l.values()) {
            let fd = (p - m) / scale;
            diff += (fd - d).powi(2);
            norm += d * d;
        }
    };
    for n in 0..a.snapshots.len() {
        let (sa, sb) = (&a.snapshots[n], &b.snapshots[n]);
        acc(&sa.phi, &sb.phi, &lin.phi[n]);
        acc(&sa.mu, &sb.mu, &lin.mu[n]);
        acc(&sa.sigma, &sb.sigma, &lin.sigma[n]);
        acc(&sa.p, &sb.p, &lin.p[n]);
    }
    let mut accv = |x: &StaggeredVectorField, y: &StaggeredVectorField, l: &StaggeredVectorField| {
        let xs = x.xfaces().iter().chain(x.yfaces());
        let ys = y.xfaces().iter().chain(y.yfaces());
        let ls = l.xfaces().iter().chain(l.yfaces());
        for ((p, m), d) in xs.zip(ys).zip(ls) {
            let fd = (p - m) / scale;
            diff += (fd - d).powi(2);
            norm += d * d;
        }
    };
    for n in 0..a.snapshots.len() {
        accv(&a.snapshots[n].vel, &b.snapshots[n].vel, &lin.vel[n]);
    }
    (diff.sqrt(), norm.sqrt())
}

fn linearized_vs_fd(mon: &mut Monitor) -> Outcome {
    let b = reference_problem();
    let p = &b.problem;
    let (g, t) = (*p.grid(), *p.time());
    let mut rng = StdRng::seed_from_u64(DEFAULT_SEED);
    let u = random_control(g, t, &mut rng, 0.0, 1.0);
    let base = p.forward(&u).map_err(|e| e.to_string())?;
    mon.see(&base);
    let eps = [1e-1, 1e-2, 1e-3];
    let mut slopes = Vec::new();
    let mut ok = true;
    for _ in 0..3 {
        let h = random_control(g, t, &mut rng, 0.0, 1.0);
        let lin = directional_derivative(&p.solver, &base, &h).map_err(|e| e.to_string())?;
        let mut errs = Vec::new();
        for &e in &eps {
            let plus = p.forward(&u.axpy(e, &h).unwrap()).map_err(|e| e.to_string())?;
            let minus = p.forward(&u.axpy(-e, &h).unwrap()).map_err(|e| e.to_string())?;
            mon.see(&plus);
            mon.see(&minus);
            let (d, n) = trajectory_distance(&plus, &minus, 2.0 * e, &lin);
            errs.push(d / n);
        }
        let s = loglog_slope(&eps, &errs);
        ok &= (s - 2.0).abs() <= 0.3;
        slopes.push(format!("{s:.2}"));
    }
    Ok((ok, format!("slopes [{}] over eps {:?}", slopes.join(", "), eps)))
}

fn maximum_principle(_: &mut Monitor) -> Outcome {
    let cfg = reference();
    let solver = cfg.state_solver().map_err(|e| e.to_string())?;
    let g = *solver.grid();
    let mut rng = StdRng::seed_from_u64(DEFAULT_SEED);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let phi = random_field(g, &mut rng, -1.5, 1.5);
        let s = solver.solve_nutrient(&phi).map_err(|e| e.to_string())?;
        lo = lo.min(s.min());
        hi = hi.max(s.max());
    }
    let phi = random_field(g, &mut rng, -2.0, -1.0);
    let s = solver.solve_nutrient(&phi).map_err(|e| e.to_string())?;
    let dev = s.map(|v| v - 1.0).max_abs();
    let tol = cfg.solver.cg_tol;
    let ok = lo >= 0.0 && hi <= 1.0 + 1e-10 && dev <= 100.0 * tol;
    Ok((ok, format!("min σ {lo:.3e}, max σ {hi:.12}, |σ-1| with h=0: {dev:.1e}")))
}

fn dirichlet_limit(_: &mut Monitor) -> Outcome {
    let mut cfg = reference();
    cfg.nx = 32;
    cfg.ny = 32;
    let solver = cfg.state_solver().map_err(|e| e.to_string())?;
    let phi = cfg.disc_field(*solver.grid(), cfg.disc.radius);
    let ks: Vec<f64> = (0..=6).map(|k| 10f64.powi(k)).collect();
    let (report, errs) = dirichlet_limit_check(&solver, &phi, &ks).map_err(|e| e.to_string())?;
    let dev = report.rows.last().map_or(f64::NAN, |r| r.value);
    Ok((
        report.pass,
        format!("L2 errors {:.1e} .. {:.1e}, boundary deviation at K=1e6 {dev:.1e}", errs[0], errs[6]),
    ))
}

fn energy_stability(_: &mut Monitor) -> Outcome {
    let cfg = reference();
    let g = cfg.grid().map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(DEFAULT_SEED);
    let phi = random_field(g, &mut rng, -1.0, 1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for tau in [0.01, 0.1, 1.0] {
        let (report, e) = energy_decay_check(&cfg.params, cfg.potential, &phi, tau, 200).map_err(|e| e.to_string())?;
        ok &= report.pass;
        worst = worst.max(e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok((ok, format!("largest step increase {worst:.2e} over 200 steps, tau in {{0.01, 0.1, 1}}")))
}

fn stationary_state(mon: &mut Monitor) -> Outcome {
    let cfg = reference();
    let g = cfg.grid().map_err(|e| e.to_string())?;
    let t = TimeSpec::new(10.0, 100).map_err(|e| e.to_string())?;
    let solver = StateSolver::new(g, t, cfg.params, cfg.potential, cfg.solver).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(DEFAULT_SEED);
    let u = random_control(g, t, &mut rng, 0.0, 1.0);
    let phi0 = ScalarField::constant(g, -1.0);
    let traj = solver.solve_forward(&u, &phi0).map_err(|e| e.to_string())?;
    mon.see(&traj);
    let dev = traj
        .snapshots
        .iter()
        .map(|s| s.phi.map(|v| v + 1.0).max_abs())
        .fold(0.0f64, f64::max);
    Ok((dev <= 1e-12, format!("max |φⁿ - φ⁰| over 100 steps {dev:.1e}")))
}

fn optimizer_sanity(mon: &mut Monitor) -> Outcome {
    let mut cfg = reference();
    cfg.weights.alpha0 = 0.0;
    cfg.weights.alpha1 = 0.0;
    cfg.weights.alpha2 = 0.0;
    cfg.weights.alpha3 = 0.0;
    cfg.weights.alpha4 = 0.0;
    let b = cfg.build().map_err(|e| e.to_string())?;
    let u0 = ControlField::constant(*b.problem.grid(), *b.problem.time(), 0.7);
    let zero = projected_gradient_descent(&b.problem, &u0, &cfg.optimize).map_err(|e| e.to_string())?;
    let znorm = zero.u_opt.norm_l2();
    let zit = zero.history.len() - 1;
    let ok_zero = zero.converged && znorm <= 1e-8 && zit <= 50;

    let b = reference_problem();
    let res = projected_gradient_descent(&b.problem, &b.u0, &b.config.optimize).map_err(|e| e.to_string())?;
    mon.see(&res.eval.trajectory);
    let monotone = res.history.windows(2).all(|w| w[1].cost <= w[0].cost);
    let r = residual(&b.problem, &res.u_opt, &res.eval.gradient).map_err(|e| e.to_string())?;
    let fixed = b.problem.projection_formula(&res.eval);
    let fp = fixed.axpy(-1.0, &res.u_opt).unwrap().norm_l2();
    let ok = ok_zero && res.converged && monotone && r <= 1e-6 && fp <= 1e-6;
    Ok((
        ok,
        format!(
            "zero weights: ‖u‖ {znorm:.1e} in {zit} iters; reference: {} iters, monotone {monotone}, residual {r:.1e}, fixed point {fp:.1e}",
            res.history.len() - 1
        ),
    ))
}

fn variational_inequality(mon: &mut Monitor) -> Outcome {
    let b = reference_problem();
    let opts = OptimOptions {
        tol: 1e-9,
        ..b.config.optimize
    };
    let res = projected_gradient_descent(&b.problem, &b.u0, &opts).map_err(|e| e.to_string())?;
    mon.see(&res.eval.trajectory);
    let p: &ControlProblem = &b.problem;
    let mut rng = StdRng::seed_from_u64(DEFAULT_SEED);
    let (g, t) = (*p.grid(), *p.time());
    let grad = &res.eval.gradient;
    let scale = res.eval.cost.abs().max(1.0);
    let mut worst = f64::INFINITY;
    for k in 0..20 {
        // Distances from the optimum range over three decades.
        let spread = 10f64.powf(-3.0 * k as f64 / 19.0);
        let r = random_control(g, t, &mut rng, -1.0, 1.0);
        let v = project_control(&res.u_opt.axpy(spread, &r).unwrap(), &p.bounds);
        let val = grad.inner(&v.axpy(-1.0, &res.u_opt).unwrap());
        worst = worst.min(val / scale);
    }
    Ok((
        res.converged && worst >= -1e-8,
        format!("min ∫(κū - ϑh(φ))(u - ū) / scale {worst:.2e} over 20 feasible u"),
    ))
}

fn brinkman_and_divergence(mon: &mut Monitor) -> Outcome {
    let e: Vec<_> = [16, 32, 64].iter().map(|&n| brinkman_errors(n)).collect();
    let rates: Vec<f64> = e.windows(2).map(|w| (w[0].0 / w[1].0).log2()).collect();
    let ok = rates.iter().all(|&r| r >= 1.5) && mon.max_div <= 1e-9;
    Ok((
        ok,
        format!(
            "velocity L2 rates {:.2}, {:.2}; max divergence residual over accepted runs {:.1e}",
            rates[0], rates[1], mon.max_div
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("gradient exactness", gradient_exactness),
        ("linearized-adjoint duality", duality),
        ("linearized solver vs finite differences", linearized_vs_fd),
        ("nutrient maximum principle", maximum_principle),
        ("Dirichlet limit", dirichlet_limit),
        ("energy stability", energy_stability),
        ("stationary state", stationary_state),
        ("optimizer sanity", optimizer_sanity),
        ("discrete variational inequality", variational_inequality),
        ("Brinkman manufactured solution and divergence constraint", brinkman_and_divergence),
    ];
    let mut mon = Monitor { max_div: 0.0 };
    let mut all = true;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match f(&mut mon) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        all &= ok;
        println!("criterion {:>2} {name}: {} ({detail})", k + 1, if ok { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
