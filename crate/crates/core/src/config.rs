//! Run configuration: a TOML file with `[grid]`, `[physics]`, `[time]`,
//! `[initial]`, `[solver]` and `[output]` sections. Every key is optional and
//! falls back to the defaults on [`SimConfig::default`].
//!
//! Initial data are named presets written as call expressions:
//!
//! * `homogeneous(v)`
//! * `tanh_profile(center, width, low, high)`, varying along the first axis
//! * `random_band(seed, lo, hi)`, i.i.d. uniform values from SplitMix64
//!
//! Parsing reports every violation it finds, each tagged with `section.key`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use toml::{Table, Value};

use crate::grid::{Field, Grid};
use crate::potential::{PotentialSpec, SmoothTable, DEFAULT_LAMBDA, DEFAULT_SINGULAR_FLOOR};
use crate::stepper::{
    State, StepParams, DEFAULT_LINEAR_TOL, DEFAULT_NEWTON_MAX_ITER, DEFAULT_NEWTON_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("TOML syntax error: {0}")]
    Syntax(String),
    #[error("{} configuration error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

/// 64-bit SplitMix generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Homogeneous(f64),
    TanhProfile { center: f64, width: f64, low: f64, high: f64 },
    RandomBand { seed: u64, lo: f64, hi: f64 },
}

impl Preset {
    pub fn sample(&self, grid: Grid) -> Field {
        match *self {
            Preset::Homogeneous(v) => Field::constant(grid, v),
            Preset::TanhProfile { center, width, low, high } => Field::from_fn(grid, |[x, _]| {
                low + (high - low) * 0.5 * (1.0 + ((x - center) / width).tanh())
            }),
            Preset::RandomBand { seed, lo, hi } => {
                let mut rng = SplitMix64::new(seed);
                let values = (0..grid.len()).map(|_| lo + (hi - lo) * rng.next_f64()).collect();
                Field::new(grid, values).expect("finite samples")
            }
        }
    }

    /// Greatest lower bound of the preset over the domain.
    pub fn infimum(&self) -> f64 {
        match *self {
            Preset::Homogeneous(v) => v,
            Preset::TanhProfile { low, high, .. } => low.min(high),
            Preset::RandomBand { lo, .. } => lo,
        }
    }

    fn check(&self, rho: bool) -> Vec<String> {
        let mut bad = Vec::new();
        let range_ok = |v: f64| if rho { (0.0..=1.0).contains(&v) } else { v >= 0.0 && v.is_finite() };
        let what = if rho { "in [0, 1]" } else { "nonnegative" };
        match *self {
            Preset::Homogeneous(v) => {
                if rho && !(v > 0.0 && v < 1.0) {
                    bad.push(format!("homogeneous value {v} must lie in (0, 1)"));
                } else if !rho && !range_ok(v) {
                    bad.push(format!("homogeneous value {v} must be nonnegative"));
                }
            }
            Preset::TanhProfile { width, low, high, center } => {
                if !(width > 0.0 && width.is_finite()) {
                    bad.push(format!("tanh width {width} must be positive"));
                }
                if !center.is_finite() {
                    bad.push("tanh center must be finite".into());
                }
                for v in [low, high] {
                    if !range_ok(v) {
                        bad.push(format!("tanh level {v} must be {what}"));
                    }
                }
            }
            Preset::RandomBand { lo, hi, .. } => {
                if !(range_ok(lo) && range_ok(hi) && lo <= hi) {
                    bad.push(format!("random band [{lo}, {hi}] must be {what} with lo <= hi"));
                }
            }
        }
        bad
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Homogeneous(v) => write!(f, "homogeneous({v:?})"),
            Preset::TanhProfile { center, width, low, high } => {
                write!(f, "tanh_profile({center:?}, {width:?}, {low:?}, {high:?})")
            }
            Preset::RandomBand { seed, lo, hi } => write!(f, "random_band({seed}, {lo:?}, {hi:?})"),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, rest) = s.split_once('(').ok_or_else(|| format!("expected name(args), got {s:?}"))?;
        let args = rest.strip_suffix(')').ok_or_else(|| format!("missing ')' in {s:?}"))?;
        let args: Vec<&str> = args.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
        let num = |i: usize| -> Result<f64, String> {
            args[i].parse::<f64>().map_err(|_| format!("argument {} of {name} is not a number: {:?}", i + 1, args[i]))
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("{name} takes {n} argument(s), got {}", args.len()))
            }
        };
        match name.trim() {
            "homogeneous" => {
                arity(1)?;
                Ok(Preset::Homogeneous(num(0)?))
            }
            "tanh_profile" => {
                arity(4)?;
                Ok(Preset::TanhProfile { center: num(0)?, width: num(1)?, low: num(2)?, high: num(3)? })
            }
            "random_band" => {
                arity(3)?;
                let seed = args[0].parse::<u64>().map_err(|_| format!("seed must be a u64, got {:?}", args[0]))?;
                Ok(Preset::RandomBand { seed, lo: num(1)?, hi: num(2)? })
            }
            other => Err(format!("unknown preset {other:?} (homogeneous, tanh_profile, random_band)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub cells: Vec<usize>,
    pub extent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConfig {
    pub eps: f64,
    pub delta: f64,
    pub lambda: f64,
    /// Nodes `(r, f2'(r))` of a tabulated smooth part; `None` selects the
    /// logarithmic default.
    pub f2_prime_table: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub rho0: Preset,
    pub mu0: Preset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
    pub singular_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Subset of `csv`, `snapshots`.
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let delta = 1.0;
        let lambda = DEFAULT_LAMBDA;
        Self {
            grid: GridConfig { cells: vec![128], extent: vec![1.0] },
            physics: PhysicsConfig { eps: 0.05, delta, lambda, f2_prime_table: None },
            time: TimeConfig { dt: delta / (4.0 * lambda), t_final: 1.0, snapshot_stride: 100 },
            initial: InitialConfig {
                rho0: Preset::TanhProfile { center: 0.5, width: 0.1, low: 0.1, high: 0.9 },
                mu0: Preset::Homogeneous(1.0),
            },
            solver: SolverConfig {
                newton_tol: DEFAULT_NEWTON_TOL,
                newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
                linear_tol: DEFAULT_LINEAR_TOL,
                singular_floor: DEFAULT_SINGULAR_FLOOR,
            },
            output: OutputConfig {
                directory: PathBuf::from("output"),
                formats: vec!["csv".into(), "snapshots".into()],
            },
        }
    }
}

/// Collects typed values and issues while walking the TOML table.
struct Reader<'a> {
    root: &'a Table,
    issues: Vec<ConfigIssue>,
}

impl<'a> Reader<'a> {
    fn issue(&mut self, section: &str, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue { location: format!("{section}.{key}"), message: message.into() });
    }

    fn section(&mut self, name: &str, known: &[&str]) -> Option<&'a Table> {
        let value = self.root.get(name)?;
        let Some(table) = value.as_table() else {
            self.issues.push(ConfigIssue { location: name.into(), message: "expected a table".into() });
            return None;
        };
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                self.issue(name, key, format!("unknown key (expected one of: {})", known.join(", ")));
            }
        }
        Some(table)
    }

    fn float(&mut self, t: Option<&'a Table>, section: &str, key: &str, default: f64) -> f64 {
        match t.and_then(|t| t.get(key)) {
            None => default,
            Some(v) => match as_f64(v) {
                Some(x) => x,
                None => {
                    self.issue(section, key, format!("expected a number, got {}", v.type_str()));
                    default
                }
            },
        }
    }

    fn opt_float(&mut self, t: Option<&'a Table>, section: &str, key: &str) -> Option<f64> {
        let v = t.and_then(|t| t.get(key))?;
        let x = as_f64(v);
        if x.is_none() {
            self.issue(section, key, format!("expected a number, got {}", v.type_str()));
        }
        x
    }

    fn uint(&mut self, t: Option<&'a Table>, section: &str, key: &str, default: usize) -> usize {
        match t.and_then(|t| t.get(key)) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(v) => {
                self.issue(section, key, format!("expected a nonnegative integer, got {v}"));
                default
            }
        }
    }

    fn string(&mut self, t: Option<&'a Table>, section: &str, key: &str) -> Option<&'a str> {
        let v = t.and_then(|t| t.get(key))?;
        let s = v.as_str();
        if s.is_none() {
            self.issue(section, key, format!("expected a string, got {}", v.type_str()));
        }
        s
    }

    fn array(&mut self, t: Option<&'a Table>, section: &str, key: &str) -> Option<&'a Vec<Value>> {
        let v = t.and_then(|t| t.get(key))?;
        let a = v.as_array();
        if a.is_none() {
            self.issue(section, key, format!("expected an array, got {}", v.type_str()));
        }
        a
    }

    fn preset(&mut self, t: Option<&'a Table>, section: &str, key: &str, default: Preset) -> Preset {
        match self.string(t, section, key) {
            None => default,
            Some(s) => s.parse().unwrap_or_else(|e: String| {
                self.issue(section, key, e);
                default
            }),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut r = Reader { root: &root, issues: Vec::new() };
    let d = SimConfig::default();

    const SECTIONS: [&str; 6] = ["grid", "physics", "time", "initial", "solver", "output"];
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            r.issues.push(ConfigIssue { location: key.clone(), message: "unknown section".into() });
        }
    }

    // [grid]
    let g = r.section("grid", &["dim", "cells", "extent"]);
    let dim = r.uint(g, "grid", "dim", 0);
    let cells: Vec<usize> = match r.array(g, "grid", "cells") {
        None => d.grid.cells.clone(),
        Some(a) => a
            .iter()
            .filter_map(|v| match v {
                Value::Integer(i) if *i > 0 => Some(*i as usize),
                _ => {
                    r.issue("grid", "cells", format!("entries must be positive integers, got {v}"));
                    None
                }
            })
            .collect(),
    };
    let dim = if dim == 0 { cells.len() } else { dim };
    let extent: Vec<f64> = match r.array(g, "grid", "extent") {
        None => vec![1.0; dim.max(1)],
        Some(a) => a
            .iter()
            .filter_map(|v| {
                let x = as_f64(v);
                if x.is_none() {
                    r.issue("grid", "extent", format!("entries must be numbers, got {v}"));
                }
                x
            })
            .collect(),
    };
    if !(1..=2).contains(&dim) {
        r.issue("grid", "dim", format!("must be 1 or 2, got {dim}"));
    } else {
        if cells.len() != dim {
            r.issue("grid", "cells", format!("need {dim} entries, got {}", cells.len()));
        }
        if extent.len() != dim {
            r.issue("grid", "extent", format!("need {dim} entries, got {}", extent.len()));
        }
    }
    for &n in &cells {
        if n < 3 {
            r.issue("grid", "cells", format!("at least 3 cells per axis, got {n}"));
        }
    }
    for &e in &extent {
        if !(e > 0.0 && e.is_finite()) {
            r.issue("grid", "extent", format!("extent must be positive, got {e}"));
        }
    }

    // [physics]
    let p = r.section("physics", &["eps", "delta", "lambda", "potential", "f2_prime_table"]);
    let eps = r.float(p, "physics", "eps", d.physics.eps);
    let delta = r.float(p, "physics", "delta", d.physics.delta);
    let lambda = r.float(p, "physics", "lambda", d.physics.lambda);
    if !(0.0..=1.0).contains(&eps) {
        r.issue("physics", "eps", format!("must lie in [0, 1], got {eps}"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        r.issue("physics", "delta", format!("must be positive, got {delta}"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        r.issue("physics", "lambda", format!("must be nonnegative, got {lambda}"));
    }
    let potential = r.string(p, "physics", "potential").unwrap_or("logarithmic");
    let f2_prime_table = match potential {
        "logarithmic" => {
            if p.is_some_and(|p| p.contains_key("f2_prime_table")) {
                r.issue("physics", "f2_prime_table", "only used with potential = \"custom_table\"");
            }
            None
        }
        "custom_table" => {
            let nodes: Vec<(f64, f64)> = r
                .array(p, "physics", "f2_prime_table")
                .map(|a| {
                    a.iter()
                        .filter_map(|v| {
                            let pair = v.as_array().filter(|p| p.len() == 2).and_then(|p| Some((as_f64(&p[0])?, as_f64(&p[1])?)));
                            if pair.is_none() {
                                r.issue("physics", "f2_prime_table", format!("entries must be [r, value] pairs, got {v}"));
                            }
                            pair
                        })
                        .collect()
                })
                .unwrap_or_default();
            if let Err(e) = SmoothTable::new(nodes.clone()) {
                r.issue("physics", "f2_prime_table", e.to_string());
            }
            Some(nodes)
        }
        other => {
            r.issue("physics", "potential", format!("unknown potential {other:?} (logarithmic, custom_table)"));
            None
        }
    };

    // [solver]
    let s = r.section("solver", &["newton_tol", "newton_max_iter", "linear_tol", "singular_floor"]);
    let solver = SolverConfig {
        newton_tol: r.float(s, "solver", "newton_tol", d.solver.newton_tol),
        newton_max_iter: r.uint(s, "solver", "newton_max_iter", d.solver.newton_max_iter),
        linear_tol: r.float(s, "solver", "linear_tol", d.solver.linear_tol),
        singular_floor: r.float(s, "solver", "singular_floor", d.solver.singular_floor),
    };
    for (key, v) in [("newton_tol", solver.newton_tol), ("linear_tol", solver.linear_tol)] {
        if !(v > 0.0 && v.is_finite()) {
            r.issue("solver", key, format!("must be positive, got {v}"));
        }
    }
    if solver.newton_max_iter == 0 {
        r.issue("solver", "newton_max_iter", "must be at least 1");
    }
    if !(solver.singular_floor > 0.0 && solver.singular_floor < 0.5) {
        r.issue("solver", "singular_floor", format!("must lie in (0, 0.5), got {}", solver.singular_floor));
    }

    let physics = PhysicsConfig { eps, delta, lambda, f2_prime_table };

    // [time]
    let t = r.section("time", &["dt", "t_final", "snapshot_stride"]);
    let dt = match r.opt_float(t, "time", "dt") {
        Some(dt) => dt,
        None => {
            let spec = potential_from(&physics, solver.singular_floor).unwrap_or_default();
            StepParams::default_dt(delta.max(f64::MIN_POSITIVE), &spec)
        }
    };
    let time = TimeConfig {
        dt,
        t_final: r.float(t, "time", "t_final", d.time.t_final),
        snapshot_stride: r.uint(t, "time", "snapshot_stride", d.time.snapshot_stride),
    };
    if !(time.dt > 0.0 && time.dt.is_finite()) {
        r.issue("time", "dt", format!("must be positive, got {}", time.dt));
    }
    if !(time.t_final > 0.0 && time.t_final.is_finite()) {
        r.issue("time", "t_final", format!("must be positive, got {}", time.t_final));
    }
    if time.snapshot_stride == 0 {
        r.issue("time", "snapshot_stride", "must be at least 1");
    }

    // [initial]
    let i = r.section("initial", &["rho0", "mu0"]);
    let initial = InitialConfig {
        rho0: r.preset(i, "initial", "rho0", d.initial.rho0.clone()),
        mu0: r.preset(i, "initial", "mu0", d.initial.mu0.clone()),
    };
    for m in initial.rho0.check(true) {
        r.issue("initial", "rho0", m);
    }
    for m in initial.mu0.check(false) {
        r.issue("initial", "mu0", m);
    }
    if eps == 0.0 && initial.rho0.infimum() <= 0.0 {
        r.issue("initial", "rho0", "eps = 0 requires inf rho0 > 0 (preset touches 0)");
    }
    let grid = Grid::new(&cells, &extent).ok();
    if let Some(grid) = grid {
        let rho = initial.rho0.sample(grid);
        if !(rho.min() > 0.0 && rho.max() < 1.0) {
            r.issue("initial", "rho0", format!("sampled rho0 leaves (0, 1): range [{}, {}]", rho.min(), rho.max()));
        }
    }

    // [output]
    let o = r.section("output", &["directory", "formats"]);
    let directory = r.string(o, "output", "directory").map(PathBuf::from).unwrap_or(d.output.directory);
    let formats = match r.array(o, "output", "formats") {
        None => d.output.formats,
        Some(a) => a
            .iter()
            .filter_map(|v| match v.as_str() {
                Some(s @ ("csv" | "snapshots")) => Some(s.to_string()),
                _ => {
                    r.issue("output", "formats", format!("unknown format {v} (csv, snapshots)"));
                    None
                }
            })
            .collect(),
    };

    if !r.issues.is_empty() {
        return Err(ConfigError::Invalid(r.issues));
    }
    Ok(SimConfig {
        grid: GridConfig { cells, extent },
        physics,
        time,
        initial,
        solver,
        output: OutputConfig { directory, formats },
    })
}

fn potential_from(physics: &PhysicsConfig, floor: f64) -> Option<PotentialSpec> {
    let mut spec = match &physics.f2_prime_table {
        None => PotentialSpec::logarithmic(physics.lambda),
        Some(nodes) => PotentialSpec::custom_table(SmoothTable::new(nodes.clone()).ok()?),
    };
    spec.singular_floor = floor;
    Some(spec)
}

impl SimConfig {
    /// 1D two-phase `tanh` profile on the unit interval with `eps = 0.05`.
    pub fn tanh_preset() -> Self {
        let mut c = Self::default();
        c.time.dt = 1e-3;
        c.initial.rho0 = Preset::TanhProfile { center: 0.5, width: 0.1, low: 0.1, high: 0.9 };
        c.initial.mu0 = Preset::Homogeneous(1.0);
        c
    }

    /// Spatially constant data on the stable lower branch; reduces the system
    /// to two coupled ODEs.
    pub fn homogeneous_preset() -> Self {
        let mut c = Self::default();
        c.grid.cells = vec![8];
        c.time.dt = 1e-3;
        c.initial.rho0 = Preset::Homogeneous(0.15);
        c.initial.mu0 = Preset::Homogeneous(0.05);
        c
    }

    pub fn build_grid(&self) -> Result<Grid, crate::grid::GridError> {
        Grid::new(&self.grid.cells, &self.grid.extent)
    }

    pub fn potential(&self) -> PotentialSpec {
        potential_from(&self.physics, self.solver.singular_floor).unwrap_or_default()
    }

    pub fn step_params(&self) -> StepParams {
        StepParams {
            eps: self.physics.eps,
            delta: self.physics.delta,
            dt: self.time.dt,
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
            linear_tol: self.solver.linear_tol,
        }
    }

    pub fn initial_state(&self) -> Result<State, crate::grid::GridError> {
        let grid = self.build_grid()?;
        Ok(State {
            mu: self.initial.mu0.sample(grid),
            rho: self.initial.rho0.sample(grid),
            time: 0.0,
        })
    }

    /// Number of steps to reach `t_final`.
    pub fn num_steps(&self) -> usize {
        ((self.time.t_final / self.time.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }

    /// Fully resolved configuration as TOML; parses back to `self`.
    pub fn to_toml(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        s.push_str("[grid]\n");
        s.push_str(&format!("dim = {}\n", self.grid.cells.len()));
        s.push_str(&format!(
            "cells = [{}]\n",
            self.grid.cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
        ));
        s.push_str(&format!("extent = [{}]\n\n", list(&self.grid.extent)));
        s.push_str("[physics]\n");
        s.push_str(&format!("eps = {:?}\ndelta = {:?}\nlambda = {:?}\n", self.physics.eps, self.physics.delta, self.physics.lambda));
        match &self.physics.f2_prime_table {
            None => s.push_str("potential = \"logarithmic\"\n\n"),
            Some(nodes) => {
                s.push_str("potential = \"custom_table\"\n");
                let pairs: Vec<String> = nodes.iter().map(|(r, v)| format!("[{r:?}, {v:?}]")).collect();
                s.push_str(&format!("f2_prime_table = [{}]\n\n", pairs.join(", ")));
            }
        }
        s.push_str("[time]\n");
        s.push_str(&format!(
            "dt = {:?}\nt_final = {:?}\nsnapshot_stride = {}\n\n",
            self.time.dt, self.time.t_final, self.time.snapshot_stride
        ));
        s.push_str("[initial]\n");
        s.push_str(&format!("rho0 = \"{}\"\nmu0 = \"{}\"\n\n", self.initial.rho0, self.initial.mu0));
        s.push_str("[solver]\n");
        s.push_str(&format!(
            "newton_tol = {:?}\nnewton_max_iter = {}\nlinear_tol = {:?}\nsingular_floor = {:?}\n\n",
            self.solver.newton_tol, self.solver.newton_max_iter, self.solver.linear_tol, self.solver.singular_floor
        ));
        s.push_str("[output]\n");
        s.push_str(&format!(
            "directory = {:?}\nformats = [{}]\n",
            self.output.directory.to_string_lossy(),
            self.output.formats.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(", ")
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config_str(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, SimConfig::default());
        assert!((c.time.dt - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn dt_defaults_to_delta_over_four_lambda() {
        let c = parse_config_str("[physics]\ndelta = 2.0\nlambda = 5.0\n").unwrap();
        assert!((c.time.dt - 0.1).abs() < 1e-15);
        assert!(c.to_toml().contains("dt = 0.1\n"));
    }

    #[test]
    fn eps_zero_rejects_rho0_touching_zero() {
        let v = issues("[physics]\neps = 0\n[initial]\nrho0 = \"random_band(7, 0.0, 0.5)\"\n");
        assert!(v.iter().any(|i| i.location == "initial.rho0" && i.message.contains("inf rho0 > 0")));
        // the same preset is accepted with eps > 0
        assert!(parse_config_str("[physics]\neps = 0.1\n[initial]\nrho0 = \"random_band(7, 0.0, 0.5)\"\n").is_ok());
    }

    #[test]
    fn reports_every_violation() {
        let v = issues(
            "[grid]\ncells = [2]\n[physics]\ndelta = -1\neps = 3\n[time]\nt_final = \"x\"\n[initial]\nmu0 = \"homogeneous(-1)\"\nrho0 = \"bogus(1)\"\n[typo]\n",
        );
        let locs: Vec<&str> = v.iter().map(|i| i.location.as_str()).collect();
        for want in ["grid.cells", "physics.delta", "physics.eps", "time.t_final", "initial.mu0", "initial.rho0", "typo"] {
            assert!(locs.contains(&want), "missing {want} in {locs:?}");
        }
    }

    #[test]
    fn unknown_keys_are_reported() {
        let v = issues("[time]\ndtt = 0.1\n");
        assert_eq!(v[0].location, "time.dtt");
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("homogeneous(0.3)".parse::<Preset>().unwrap(), Preset::Homogeneous(0.3));
        assert_eq!(
            " tanh_profile(0.5, 0.1, 0.1, 0.9) ".parse::<Preset>().unwrap(),
            Preset::TanhProfile { center: 0.5, width: 0.1, low: 0.1, high: 0.9 }
        );
        assert_eq!(
            "random_band(42, 0.2, 0.8)".parse::<Preset>().unwrap(),
            Preset::RandomBand { seed: 42, lo: 0.2, hi: 0.8 }
        );
        assert!("homogeneous(0.3, 0.4)".parse::<Preset>().is_err());
        assert!("random_band(-1, 0.2, 0.8)".parse::<Preset>().is_err());
        assert!("tanh_profile(0.5".parse::<Preset>().is_err());
        for p in ["homogeneous(0.3)", "tanh_profile(0.5, 0.1, 0.1, 0.9)", "random_band(42, 0.2, 0.8)"] {
            let parsed: Preset = p.parse().unwrap();
            assert_eq!(parsed.to_string().parse::<Preset>().unwrap(), parsed);
        }
    }

    #[test]
    fn splitmix_reference_values() {
        // reference outputs of the published SplitMix64 for seed 1234567
        let mut rng = SplitMix64::new(1234567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn random_band_within_band() {
        let g = Grid::new_1d(1000, 1.0).unwrap();
        let f = Preset::RandomBand { seed: 3, lo: 0.2, hi: 0.4 }.sample(g);
        assert!(f.min() >= 0.2 && f.max() < 0.4);
        assert_eq!(f, Preset::RandomBand { seed: 3, lo: 0.2, hi: 0.4 }.sample(g));
    }

    #[test]
    fn custom_table_round_trip() {
        let text = "[physics]\npotential = \"custom_table\"\nf2_prime_table = [[0.0, 2.0], [0.5, 0.0], [1.0, -2.0]]\n";
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.potential().sup_abs_f2_prime(), 2.0);
        assert!((c.time.dt - 0.125).abs() < 1e-15);
        assert_eq!(parse_config_str(&c.to_toml()).unwrap(), c);
        assert!(parse_config_str("[physics]\npotential = \"custom_table\"\nf2_prime_table = [[0.2, 1.0]]\n").is_err());
    }

    #[test]
    fn resolved_dump_round_trips() {
        for c in [SimConfig::default(), SimConfig::tanh_preset(), SimConfig::homogeneous_preset()] {
            assert_eq!(parse_config_str(&c.to_toml()).unwrap(), c);
        }
        let mut c = SimConfig::default();
        c.grid = GridConfig { cells: vec![16, 12], extent: vec![1.5, 0.75] };
        c.initial.rho0 = Preset::RandomBand { seed: 99, lo: 0.05, hi: 0.95 };
        c.physics.eps = 0.0;
        c.time.dt = 1.0 / 3.0;
        assert_eq!(parse_config_str(&c.to_toml()).unwrap(), c);
    }
}
