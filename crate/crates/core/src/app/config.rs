//! INI-style problem configuration.
//!
//! ```ini
//! [grid]
//! nx = 16
//! ny = 16
//! lx = 8
//! ly = 8
//!
//! [initial]
//! phi0 = disc
//! ```
//!
//! Sections: `grid`, `time`, `model`, `potential`, `solver`, `weights`,
//! `bounds`, `initial`, `targets`, `control`, `optimize`, `check`,
//! `output`. Every key is optional and falls back to the default listed in
//! [`ProblemConfig::default`]. Unknown sections or keys are errors.
//!
//! Scalar fields are given as presets: `zero`, `constant:<c>`, `disc`
//! (tanh profile of the `[initial]` disc), `disc:<radius>` or
//! `file:<path>` (csv-grid, relative to the config file).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::discretization::{GridSpec, ScalarField, StaggeredVectorField, TimeSpec};
use crate::error::{ChbError, Result};
use crate::forward::{ModelParams, SolverOptions, StateSolver};
use crate::objective::{ControlBounds, ControlField, ControlProblem, CostWeights, TargetBundle};
use crate::optimize::OptimOptions;
use crate::potentials::PotentialSpec;

use super::io::{read_csv_grid, FieldFormat};

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Zero,
    Constant(f64),
    /// Tanh disc; `None` takes the radius from `[initial]`.
    Disc(Option<f64>),
    File(PathBuf),
}

impl FieldSpec {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let num = |v: &str| real(v.trim());
        match s.split_once(':') {
            None if s == "zero" => Ok(Self::Zero),
            None if s == "disc" => Ok(Self::Disc(None)),
            None => num(s)
                .map(Self::Constant)
                .map_err(|_| format!("unknown field preset '{s}'")),
            Some(("constant", v)) => num(v).map(Self::Constant),
            Some(("disc", v)) => num(v).map(|r| Self::Disc(Some(r))),
            Some(("file", p)) if !p.trim().is_empty() => Ok(Self::File(PathBuf::from(p.trim()))),
            _ => Err(format!("unknown field preset '{s}'")),
        }
    }

    fn to_ini(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Constant(c) => format!("constant:{c:?}"),
            Self::Disc(None) => "disc".into(),
            Self::Disc(Some(r)) => format!("disc:{r:?}"),
            Self::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscSpec {
    /// Centre; `None` means the domain centre.
    pub center: Option<(f64, f64)>,
    pub radius: f64,
    /// Interface width `w` in `tanh((r0 - r) / w)`.
    pub width: f64,
}

impl Default for DiscSpec {
    fn default() -> Self {
        Self {
            center: None,
            radius: 2.0,
            width: std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub fd_directions: usize,
    pub fd_eps: Vec<f64>,
    pub duality_pairs: usize,
    pub dirichlet_k: Vec<f64>,
    pub energy_steps: usize,
    pub energy_tau: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            fd_directions: 5,
            fd_eps: vec![1e-2, 1e-3, 1e-4],
            duality_pairs: 10,
            dirichlet_k: vec![1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            energy_steps: 200,
            energy_tau: 0.05,
            seed: crate::verification::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputOptions {
    pub format: FieldFormat,
    /// Snapshot stride for field files.
    pub every: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            format: FieldFormat::CsvGrid,
            every: 1,
        }
    }
}

/// Parsed configuration. Field presets stay symbolic until [`build`](Self::build).
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub horizon: f64,
    pub nt: usize,
    pub params: ModelParams,
    pub potential: PotentialSpec,
    pub solver: SolverOptions,
    pub weights: CostWeights,
    pub lower: FieldSpec,
    pub upper: FieldSpec,
    pub phi0: FieldSpec,
    pub disc: DiscSpec,
    pub phi_d: FieldSpec,
    pub mu_d: FieldSpec,
    pub sigma_d: FieldSpec,
    pub v_d: FieldSpec,
    pub phi_f: FieldSpec,
    pub u0: FieldSpec,
    pub optimize: OptimOptions,
    pub check: CheckOptions,
    pub output: OutputOptions,
    /// Directory that `file:` presets are resolved against.
    pub base_dir: PathBuf,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            nx: 16,
            ny: 16,
            lx: 8.0,
            ly: 8.0,
            horizon: 1.0,
            nt: 10,
            params: ModelParams::default(),
            potential: PotentialSpec::default(),
            solver: SolverOptions::default(),
            weights: CostWeights {
                alpha0: 1.0,
                alpha1: 0.5,
                alpha2: 0.0,
                alpha3: 0.0,
                alpha4: 0.0,
                kappa: 0.1,
            },
            lower: FieldSpec::Constant(0.0),
            upper: FieldSpec::Constant(1.0),
            phi0: FieldSpec::Disc(None),
            disc: DiscSpec::default(),
            phi_d: FieldSpec::Constant(-1.0),
            mu_d: FieldSpec::Zero,
            sigma_d: FieldSpec::Constant(1.0),
            v_d: FieldSpec::Zero,
            phi_f: FieldSpec::Constant(-1.0),
            u0: FieldSpec::Zero,
            optimize: OptimOptions::default(),
            check: CheckOptions::default(),
            output: OutputOptions::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Everything a run needs, validated and materialized.
#[derive(Clone, Debug)]
pub struct ProblemBundle {
    pub config: ProblemConfig,
    pub problem: ControlProblem,
    pub u0: ControlField,
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn split_ini(text: &str) -> std::result::Result<Sections, String> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.find(['#', ';']).map_or(raw, |k| &raw[..k]).trim();
        if line.is_empty() {
            continue;
        }
        let lineno = no + 1;
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| format!("line {lineno}: malformed section header"))?
                .trim()
                .to_string();
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {lineno}: expected 'key = value'"))?;
        let section = current
            .clone()
            .ok_or_else(|| format!("line {lineno}: key outside of a section"))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {lineno}: empty key"));
        }
        let entries = out.entry(section.clone()).or_default();
        if entries.insert(key.clone(), (lineno, v.trim().to_string())).is_some() {
            return Err(format!("line {lineno}: duplicate key {section}.{key}"));
        }
    }
    Ok(out)
}

struct Reader {
    sections: Sections,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.sections.get_mut(section).and_then(|s| s.remove(key))
    }

    fn get<T>(
        &mut self,
        section: &str,
        key: &str,
        slot: &mut T,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> std::result::Result<(), String> {
        if let Some((line, v)) = self.take(section, key) {
            *slot = parse(&v).map_err(|e| format!("line {line}: {section}.{key}: {e}"))?;
        }
        Ok(())
    }

    fn finish(self) -> std::result::Result<(), String> {
        for (section, keys) in &self.sections {
            if !KNOWN_SECTIONS.contains(&section.as_str()) {
                return Err(format!("unknown section [{section}]"));
            }
            if let Some((key, (line, _))) = keys.iter().next() {
                return Err(format!("line {line}: unknown key {section}.{key}"));
            }
        }
        Ok(())
    }
}

const MAX_CELLS: usize = 1 << 20;
const MAX_STEPS: usize = 1 << 16;

const KNOWN_SECTIONS: [&str; 13] = [
    "grid", "time", "model", "potential", "solver", "weights", "bounds", "initial", "targets",
    "control", "optimize", "check", "output",
];

fn real(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("malformed number '{s}'")),
    }
}

fn count(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("malformed count '{s}'"))
}

fn list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|v| real(v.trim())).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl ProblemConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ChbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Parses `text`; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str, base_dir: PathBuf) -> Result<Self> {
        let err = |message: String| ChbError::Config {
            path: origin.to_string(),
            message,
        };
        let mut c = Self {
            base_dir,
            ..Self::default()
        };
        c.read(split_ini(text).map_err(err)?).map_err(err)?;
        c.validate().map_err(|e| match e {
            ChbError::Config { .. } => e,
            other => err(other.to_string()),
        })?;
        Ok(c)
    }

    fn read(&mut self, sections: Sections) -> std::result::Result<(), String> {
        let mut r = Reader { sections };
        r.get("grid", "nx", &mut self.nx, count)?;
        r.get("grid", "ny", &mut self.ny, count)?;
        r.get("grid", "lx", &mut self.lx, real)?;
        r.get("grid", "ly", &mut self.ly, real)?;
        r.get("time", "horizon", &mut self.horizon, real)?;
        r.get("time", "nt", &mut self.nt, count)?;
        let p = &mut self.params;
        r.get("model", "m", &mut p.m, real)?;
        r.get("model", "nu", &mut p.nu, real)?;
        r.get("model", "eta", &mut p.eta, real)?;
        r.get("model", "lambda", &mut p.lambda, real)?;
        r.get("model", "chi", &mut p.chi, real)?;
        r.get("model", "prolif", &mut p.prolif, real)?;
        r.get("model", "apopt", &mut p.apopt, real)?;
        r.get("model", "robin_k", &mut p.robin_k, real)?;
        r.get("potential", "s_stab", &mut self.potential.s_stab, real)?;
        r.get("solver", "cg_tol", &mut self.solver.cg_tol, real)?;
        r.get("solver", "cg_maxit_factor", &mut self.solver.cg_maxit_factor, count)?;
        let w = &mut self.weights;
        r.get("weights", "alpha0", &mut w.alpha0, real)?;
        r.get("weights", "alpha1", &mut w.alpha1, real)?;
        r.get("weights", "alpha2", &mut w.alpha2, real)?;
        r.get("weights", "alpha3", &mut w.alpha3, real)?;
        r.get("weights", "alpha4", &mut w.alpha4, real)?;
        r.get("weights", "kappa", &mut w.kappa, real)?;
        r.get("bounds", "lower", &mut self.lower, FieldSpec::parse)?;
        r.get("bounds", "upper", &mut self.upper, FieldSpec::parse)?;
        r.get("initial", "phi0", &mut self.phi0, FieldSpec::parse)?;
        let mut cx = None;
        let mut cy = None;
        r.get("initial", "disc_x", &mut cx, |s| real(s).map(Some))?;
        r.get("initial", "disc_y", &mut cy, |s| real(s).map(Some))?;
        self.disc.center = match (cx, cy) {
            (Some(x), Some(y)) => Some((x, y)),
            (None, None) => self.disc.center,
            _ => return Err("initial.disc_x and initial.disc_y must be given together".into()),
        };
        r.get("initial", "disc_radius", &mut self.disc.radius, real)?;
        r.get("initial", "disc_width", &mut self.disc.width, real)?;
        r.get("targets", "phi_d", &mut self.phi_d, FieldSpec::parse)?;
        r.get("targets", "mu_d", &mut self.mu_d, FieldSpec::parse)?;
        r.get("targets", "sigma_d", &mut self.sigma_d, FieldSpec::parse)?;
        r.get("targets", "v_d", &mut self.v_d, FieldSpec::parse)?;
        r.get("targets", "phi_f", &mut self.phi_f, FieldSpec::parse)?;
        r.get("control", "u0", &mut self.u0, FieldSpec::parse)?;
        let o = &mut self.optimize;
        r.get("optimize", "max_iters", &mut o.max_iters, count)?;
        r.get("optimize", "c1", &mut o.c1, real)?;
        r.get("optimize", "beta", &mut o.beta, real)?;
        r.get("optimize", "gamma0", &mut o.gamma0, |s| {
            if s == "auto" {
                Ok(None)
            } else {
                real(s).map(Some)
            }
        })?;
        r.get("optimize", "tol", &mut o.tol, real)?;
        r.get("optimize", "ftol", &mut o.ftol, real)?;
        r.get("optimize", "max_trials", &mut o.max_trials, count)?;
        let k = &mut self.check;
        r.get("check", "fd_directions", &mut k.fd_directions, count)?;
        r.get("check", "fd_eps", &mut k.fd_eps, list)?;
        r.get("check", "duality_pairs", &mut k.duality_pairs, count)?;
        r.get("check", "dirichlet_k", &mut k.dirichlet_k, list)?;
        r.get("check", "energy_steps", &mut k.energy_steps, count)?;
        r.get("check", "energy_tau", &mut k.energy_tau, real)?;
        r.get("check", "seed", &mut k.seed, |s| {
            s.parse::<u64>().map_err(|_| format!("malformed seed '{s}'"))
        })?;
        r.get("output", "format", &mut self.output.format, |s| s.parse())?;
        r.get("output", "every", &mut self.output.every, count)?;
        r.finish()
    }

    /// Checks everything that does not need the field files.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ChbError::InvalidParameter(m.into()));
        for (key, n, min) in [("grid.nx", self.nx, 2), ("grid.ny", self.ny, 2), ("time.nt", self.nt, 1)] {
            if n < min {
                return bad(&format!("{key} must be ≥ {min}, got {n}"));
            }
        }
        for (key, v) in [("grid.lx", self.lx), ("grid.ly", self.ly), ("time.horizon", self.horizon)] {
            if !(v > 0.0) {
                return bad(&format!("{key} must be > 0, got {v}"));
            }
        }
        GridSpec::new(self.nx, self.ny, self.lx, self.ly)?;
        TimeSpec::new(self.horizon, self.nt)?;
        self.params.validate()?;
        PotentialSpec::new(self.potential.s_stab)?;
        self.weights.validate()?;
        self.optimize.validate()?;
        if !(self.solver.cg_tol > 0.0) || self.solver.cg_maxit_factor == 0 {
            return bad("solver.cg_tol must be > 0 and cg_maxit_factor ≥ 1");
        }
        if !(self.disc.radius > 0.0 && self.disc.width > 0.0) {
            return bad("initial.disc_radius and disc_width must be > 0");
        }
        if let (FieldSpec::Constant(a), FieldSpec::Constant(b)) = (&self.lower, &self.upper) {
            if a > b {
                return bad(&format!("bounds: lower {a} exceeds upper {b}"));
            }
        }
        if self.nx.saturating_mul(self.ny) > MAX_CELLS || self.nt > MAX_STEPS {
            return bad(&format!("grid.nx * grid.ny must be ≤ {MAX_CELLS} and time.nt ≤ {MAX_STEPS}"));
        }
        if self.output.every == 0 {
            return bad("output.every must be ≥ 1");
        }
        if !(self.check.energy_tau > 0.0) || self.check.fd_eps.iter().any(|e| !(*e > 0.0)) {
            return bad("check.energy_tau and check.fd_eps must be > 0");
        }
        if matches!(self.v_d, FieldSpec::File(_) | FieldSpec::Disc(_)) {
            return bad("targets.v_d accepts zero or constant:<c> only");
        }
        Ok(())
    }

    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let w = &self.weights;
        let o = &self.optimize;
        let k = &self.check;
        let _ = write!(
            s,
            "[grid]\nnx = {}\nny = {}\nlx = {:?}\nly = {:?}\n\n\
             [time]\nhorizon = {:?}\nnt = {}\n\n\
             [model]\nm = {:?}\nnu = {:?}\neta = {:?}\nlambda = {:?}\nchi = {:?}\nprolif = {:?}\napopt = {:?}\nrobin_k = {:?}\n\n\
             [potential]\ns_stab = {:?}\n\n\
             [solver]\ncg_tol = {:?}\ncg_maxit_factor = {}\n\n\
             [weights]\nalpha0 = {:?}\nalpha1 = {:?}\nalpha2 = {:?}\nalpha3 = {:?}\nalpha4 = {:?}\nkappa = {:?}\n\n\
             [bounds]\nlower = {}\nupper = {}\n\n[initial]\nphi0 = {}\n",
            self.nx, self.ny, self.lx, self.ly, self.horizon, self.nt,
            p.m, p.nu, p.eta, p.lambda, p.chi, p.prolif, p.apopt, p.robin_k,
            self.potential.s_stab, self.solver.cg_tol, self.solver.cg_maxit_factor,
            w.alpha0, w.alpha1, w.alpha2, w.alpha3, w.alpha4, w.kappa,
            self.lower.to_ini(), self.upper.to_ini(), self.phi0.to_ini(),
        );
        if let Some((x, y)) = self.disc.center {
            let _ = write!(s, "disc_x = {x:?}\ndisc_y = {y:?}\n");
        }
        let _ = write!(
            s,
            "disc_radius = {:?}\ndisc_width = {:?}\n\n\
             [targets]\nphi_d = {}\nmu_d = {}\nsigma_d = {}\nv_d = {}\nphi_f = {}\n\n\
             [control]\nu0 = {}\n\n\
             [optimize]\nmax_iters = {}\nc1 = {:?}\nbeta = {:?}\ngamma0 = {}\ntol = {:?}\nftol = {:?}\nmax_trials = {}\n\n\
             [check]\nfd_directions = {}\nfd_eps = {}\nduality_pairs = {}\ndirichlet_k = {}\nenergy_steps = {}\nenergy_tau = {:?}\nseed = {}\n\n\
             [output]\nformat = {}\nevery = {}\n",
            self.disc.radius, self.disc.width,
            self.phi_d.to_ini(), self.mu_d.to_ini(), self.sigma_d.to_ini(), self.v_d.to_ini(), self.phi_f.to_ini(),
            self.u0.to_ini(),
            o.max_iters, o.c1, o.beta, o.gamma0.map_or_else(|| "auto".into(), |g| format!("{g:?}")), o.tol, o.ftol, o.max_trials,
            k.fd_directions, fmt_list(&k.fd_eps), k.duality_pairs, fmt_list(&k.dirichlet_k), k.energy_steps, k.energy_tau, k.seed,
            self.output.format, self.output.every,
        );
        s
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn time(&self) -> Result<TimeSpec> {
        TimeSpec::new(self.horizon, self.nt)
    }

    pub fn disc_field(&self, grid: GridSpec, radius: f64) -> ScalarField {
        let (cx, cy) = self.disc.center.unwrap_or((0.5 * grid.lx(), 0.5 * grid.ly()));
        let w = self.disc.width;
        ScalarField::from_fn(grid, |x, y| {
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            ((radius - r) / w).tanh()
        })
    }

    pub fn field(&self, spec: &FieldSpec, grid: GridSpec) -> Result<ScalarField> {
        match spec {
            FieldSpec::Zero => Ok(ScalarField::zeros(grid)),
            FieldSpec::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            FieldSpec::Disc(r) => Ok(self.disc_field(grid, r.unwrap_or(self.disc.radius))),
            FieldSpec::File(p) => read_csv_grid(&self.base_dir.join(p), grid),
        }
    }

    fn velocity(&self, spec: &FieldSpec, grid: GridSpec) -> StaggeredVectorField {
        match spec {
            FieldSpec::Constant(c) => StaggeredVectorField::from_fn(grid, |_, _| *c, |_, _| *c),
            _ => StaggeredVectorField::zeros(grid),
        }
    }

    pub fn state_solver(&self) -> Result<StateSolver> {
        StateSolver::new(self.grid()?, self.time()?, self.params, self.potential, self.solver)
    }

    pub fn build(&self) -> Result<ProblemBundle> {
        self.validate()?;
        let grid = self.grid()?;
        let time = self.time()?;
        let steady = |spec: &FieldSpec| -> Result<ControlField> {
            Ok(ControlField::steady(time, self.field(spec, grid)?))
        };
        let bounds = ControlBounds::new(steady(&self.lower)?, steady(&self.upper)?)?;
        let targets = TargetBundle::steady(
            &time,
            self.field(&self.phi_d, grid)?,
            self.field(&self.mu_d, grid)?,
            self.field(&self.sigma_d, grid)?,
            self.velocity(&self.v_d, grid),
            self.field(&self.phi_f, grid)?,
        );
        let phi0 = self.field(&self.phi0, grid)?;
        let u0 = steady(&self.u0)?;
        let problem = ControlProblem::new(self.state_solver()?, phi0, targets, self.weights, bounds)?;
        Ok(ProblemBundle {
            config: self.clone(),
            problem,
            u0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn parse(text: &str) -> Result<ProblemConfig> {
        ProblemConfig::parse(text, "<test>", PathBuf::from("."))
    }

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c, ProblemConfig::default());
        let b = c.build().unwrap();
        assert_eq!(b.problem.grid().nx(), 16);
        assert_eq!(b.problem.time().nt(), 10);
    }

    #[test]
    fn negative_apoptosis_is_named() {
        let e = parse("[model]\napopt = -1\n").unwrap_err().to_string();
        assert!(e.contains("apopt must be ≥ 0"), "{e}");
    }

    #[test]
    fn distinct_errors() {
        let cases = [
            ("[grid]\nnx = 1\n", "grid.nx must be ≥ 2"),
            ("[time]\nhorizon = -1\n", "time.horizon must be > 0"),
            ("[grid]\nfoo = 1\n", "unknown key grid.foo"),
            ("[nope]\n", "unknown section"),
            ("[grid]\nnx = abc\n", "malformed count"),
            ("[weights]\nkappa = 0\n", "kappa must be > 0"),
            ("[bounds]\nlower = 2\nupper = 1\n", "exceeds upper"),
            ("nx = 3\n", "outside of a section"),
            ("[grid]\nnx = 4\nnx = 5\n", "duplicate key"),
            ("[targets]\nphi_d = wobble\n", "unknown field preset"),
        ];
        for (text, needle) in cases {
            let e = parse(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{text:?}: {e}");
        }
    }

    #[test]
    fn roundtrip_preserves_every_value() {
        let text = "[grid]\nnx = 12\nny = 9\nlx = 3.5\nly = 2.25\n[time]\nhorizon = 0.3\nnt = 7\n\
                    [model]\nchi = 0.1234567890123\n[weights]\nalpha3 = 0.7\nkappa = 1e-3\n\
                    [bounds]\nlower = constant:-0.5\nupper = file:ub.csv\n\
                    [initial]\nphi0 = disc:1.5\ndisc_x = 1\ndisc_y = 1.1\n\
                    [optimize]\ngamma0 = 2.5\n[check]\nfd_eps = 0.1, 0.01\n[output]\nformat = vtk-legacy-ascii\n";
        let a = parse(text).unwrap();
        let b = parse(&a.to_ini()).unwrap();
        assert_eq!(a, b);
        let d = ProblemConfig::default();
        assert_eq!(parse(&d.to_ini()).unwrap(), d);
    }

    #[test]
    fn mutated_configs_never_panic() {
        let base = ProblemConfig::default().to_ini();
        let lines: Vec<&str> = base.lines().collect();
        let junk = ["", "=", "[", "]", "-1", "nan", "1e400", "file:", "disc:", "constant:x", "0", "99999999999999999999"];
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..500 {
            let mut l: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
            for _ in 0..rng.gen_range(1..4) {
                let k = rng.gen_range(0..l.len());
                let j = junk[rng.gen_range(0..junk.len())];
                match rng.gen_range(0..3) {
                    0 => l[k] = j.to_string(),
                    1 => {
                        if let Some((key, _)) = l[k].split_once('=') {
                            l[k] = format!("{key}= {j}");
                        }
                    }
                    _ => l.insert(k, format!("{j} = {j}")),
                }
            }
            let _ = parse(&l.join("\n"));
        }
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_text_never_panics(text in "(\\[[a-z]{0,8}\\]\n|[a-z_0-9]{0,8} ?= ?[-a-z0-9.:e]{0,12}\n|.{0,20}\n){0,12}") {
            let _ = parse(&text);
        }

        #[test]
        fn numeric_roundtrip(nx in 2usize..40, chi in 0.0f64..10.0, kappa in 1e-6f64..1e3, lo in -5.0f64..0.0, c in -2.0f64..2.0) {
            let text = format!(
                "[grid]\nnx = {nx}\n[model]\nchi = {chi:e}\n[weights]\nkappa = {kappa}\n\
                 [bounds]\nlower = {lo}\n[initial]\nphi0 = constant:{c}\n"
            );
            let a = parse(&text).unwrap();
            proptest::prop_assert_eq!(&a, &parse(&a.to_ini()).unwrap());
        }
    }
}
