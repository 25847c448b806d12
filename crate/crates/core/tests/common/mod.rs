#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use chb_core::app::ProblemConfig;
use chb_core::discretization::{divergence, GridSpec, ScalarField, StaggeredVectorField, TimeSpec};
use chb_core::forward::BrinkmanOperator;
use chb_core::objective::ControlField;
use rand::rngs::StdRng;
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn reference() -> ProblemConfig {
    ProblemConfig::from_file(&config_path("reference.ini")).expect("reference config")
}

pub fn random_field(grid: GridSpec, rng: &mut StdRng, lo: f64, hi: f64) -> ScalarField {
    ScalarField::from_fn(grid, |_, _| rng.gen_range(lo..hi))
}

pub fn random_control(grid: GridSpec, time: TimeSpec, rng: &mut StdRng, lo: f64, hi: f64) -> ControlField {
    let slabs = (0..time.nt()).map(|_| random_field(grid, rng, lo, hi)).collect();
    ControlField::new(time, slabs).unwrap()
}

// Manufactured solution for the Brinkman subproblem on the unit square.
//
// `v = (sin πx sin²πy, sin πy sin²πx)` with `p = (2η + λ) div v` has zero
// traction on every side, and `f = -η Δv + η ∇div v + ν v`.
const ETA: f64 = 1.0;
const LAMBDA: f64 = 0.5;
const NU: f64 = 1.0;

fn vx(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin().powi(2)
}
fn vy(x: f64, y: f64) -> f64 {
    vx(y, x)
}
fn div(x: f64, y: f64) -> f64 {
    PI * (PI * x).cos() * (PI * y).sin().powi(2) + PI * (PI * y).cos() * (PI * x).sin().powi(2)
}
fn fx(x: f64, y: f64) -> f64 {
    ETA * PI * PI * (-2.0 * (PI * x).sin() * (2.0 * PI * y).cos() + (PI * y).cos() * (2.0 * PI * x).sin())
        + NU * vx(x, y)
}
fn fy(x: f64, y: f64) -> f64 {
    fx(y, x)
}

/// `(velocity L² error, pressure L² error, max |div v - g|)`.
pub fn brinkman_errors(n: usize) -> (f64, f64, f64) {
    let g = GridSpec::unit_square(n).unwrap();
    let op = BrinkmanOperator::new(g, ETA, LAMBDA, NU).unwrap();
    let f = StaggeredVectorField::from_fn(g, fx, fy);
    let gdiv = ScalarField::from_fn(g, div);
    let (ux, uy, p) = op.solve(f.xfaces(), f.yfaces(), gdiv.values());
    let exact = StaggeredVectorField::from_fn(g, vx, vy);
    let num = StaggeredVectorField::new(g, ux, uy).unwrap();
    let dv = StaggeredVectorField::new(
        g,
        num.xfaces().iter().zip(exact.xfaces()).map(|(a, b)| a - b).collect(),
        num.yfaces().iter().zip(exact.yfaces()).map(|(a, b)| a - b).collect(),
    )
    .unwrap();
    let p_exact = ScalarField::from_fn(g, |x, y| (2.0 * ETA + LAMBDA) * div(x, y));
    let p = ScalarField::new(g, p).unwrap();
    let dp = p.zip_map(&p_exact, |a, b| a - b).unwrap();
    let res = divergence(&num)
        .zip_map(&gdiv, |a, b| a - b)
        .unwrap()
        .max_abs();
    (dv.norm_l2(), dp.norm_l2(), res)
}
