//! Flat `section.key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;
use crate::control::{AscentMode, AscentOptions, Constraints, CostFamily, CostSpec, ProblemSpec};
use crate::grid::{discrete_eigenbasis, BoundaryCondition, Grid};
use crate::parabolic::{Coefficient, Nonlinearity, SpaceTimeField, TimeGrid};

/// Every accepted key with whether it is required.
const KEYS: &[(&str, bool)] = &[
    ("domain.L", true),
    ("domain.n", true),
    ("domain.bc", true),
    ("time.T", true),
    ("time.nt", true),
    ("model.f", true),
    ("model.j1", true),
    ("model.j2", true),
    ("model.u0", true),
    ("constraints.kappa0", true),
    ("constraints.kappa1", true),
    ("constraints.V0", true),
    ("experiment.omega", false),
    ("experiment.K_list", false),
    ("experiment.eps_list", false),
    ("experiment.t0", false),
    ("experiment.h0", false),
    ("experiment.potential", false),
    ("experiment.y0", false),
    ("experiment.control", false),
    ("experiment.max_iters", false),
    ("experiment.tol", false),
    ("experiment.mode", false),
    ("experiment.damping", false),
    ("experiment.time_tail_max", false),
    ("experiment.space_tail_max", false),
    ("experiment.energy_ratio_min", false),
    ("experiment.energy_ratio_max", false),
    ("experiment.ratio_max", false),
    ("output.dir", false),
    ("output.dump", false),
];

/// Reaction term choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReactionSpec {
    Zero,
    Linear(f64),
    Monostable(f64),
    Bistable(f64),
}

impl ReactionSpec {
    pub fn build(self) -> Nonlinearity {
        match self {
            ReactionSpec::Zero => Nonlinearity::Zero,
            ReactionSpec::Linear(a) => Nonlinearity::Linear(a),
            ReactionSpec::Monostable(m) => Nonlinearity::Monostable(Coefficient::Constant(m)),
            ReactionSpec::Bistable(t) => Nonlinearity::Bistable(Coefficient::Constant(t)),
        }
    }
}

impl FromStr for ReactionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = split_tagged(s);
        let param = |what: &str| -> Result<f64, String> {
            let a = arg.ok_or_else(|| format!("'{name}' needs a parameter, as in {name}:<{what}>"))?;
            parse_real(a)
        };
        match name {
            "zero" if arg.is_none() => Ok(Self::Zero),
            "linear" => Ok(Self::Linear(param("a")?)),
            "monostable" => Ok(Self::Monostable(param("m")?)),
            "bistable" => Ok(Self::Bistable(param("theta")?)),
            _ => Err(format!("unknown reaction '{s}' (expected zero, linear:a, monostable:m or bistable:theta)")),
        }
    }
}

/// A spatial profile: constant, `c + a cos(πx/L)`, a single discrete
/// eigenmode, or a table file with one value per dof.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    Constant(f64),
    Cosine(f64, f64),
    Mode(usize),
    Table(PathBuf),
}

impl ProfileSpec {
    fn parse(s: &str, base: &Path) -> Result<Self, String> {
        match split_tagged(s) {
            ("constant", Some(c)) => Ok(Self::Constant(parse_real(c)?)),
            ("cosine", Some(ca)) => {
                let (c, a) = ca.split_once(':').ok_or_else(|| format!("'{s}' is not of the form cosine:c:a"))?;
                Ok(Self::Cosine(parse_real(c)?, parse_real(a)?))
            }
            ("mode", Some(k)) => {
                let k: usize = k.parse().map_err(|_| format!("invalid mode index '{k}'"))?;
                if k == 0 {
                    return Err("mode index is 1-based".into());
                }
                Ok(Self::Mode(k))
            }
            ("table", Some(p)) => Ok(Self::Table(base.join(p))),
            _ => Err(format!("unknown profile '{s}' (expected constant:c, cosine:c:a, mode:k or table:path)")),
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<Vec<f64>, CliError> {
        match self {
            ProfileSpec::Constant(c) => Ok(vec![*c; grid.dofs()]),
            ProfileSpec::Cosine(c, a) => {
                let l = grid.length();
                Ok(grid.positions().iter().map(|x| c + a * (std::f64::consts::PI * x / l).cos()).collect())
            }
            ProfileSpec::Mode(k) => {
                let basis = discrete_eigenbasis(grid, *k)?;
                Ok(basis.mode(*k).expect("basis holds k modes").vector.clone())
            }
            ProfileSpec::Table(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let values = text
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(parse_real)
                    .collect::<Result<Vec<f64>, String>>()
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                if values.len() != grid.dofs() {
                    return Err(CliError::Invalid(format!(
                        "{}: {} values, grid has {} dofs",
                        path.display(),
                        values.len(),
                        grid.dofs()
                    )));
                }
                Ok(values)
            }
        }
    }
}

/// Potential of the concentration experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialSpec {
    Zero,
    /// `2 + cos(πx/L) cos(2πt/T)`
    Benchmark,
}

/// Starting control of the ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlStart {
    /// `y ≡ V0`
    Uniform,
    /// `y = V0 + a cos(πx/L)`, projected.
    Cosine(f64),
}

impl ControlStart {
    pub fn build(self, grid: &Grid, time: &TimeGrid, cons: &Constraints) -> SpaceTimeField {
        let v0 = cons.mean;
        match self {
            ControlStart::Uniform => SpaceTimeField::constant(grid, time, v0),
            ControlStart::Cosine(a) => {
                let l = grid.length();
                SpaceTimeField::from_fn(grid, time, |_, x| v0 + a * (std::f64::consts::PI * x / l).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub omega: Option<Vec<(f64, f64)>>,
    pub k_list: Vec<usize>,
    /// Absolute half-widths; `None` means `{0.2, 0.1, 0.05, 0.025} T`.
    pub eps_list: Option<Vec<f64>>,
    /// `None` means `T/2`.
    pub t0: Option<f64>,
    pub h0: ProfileSpec,
    pub potential: PotentialSpec,
    pub y0: ControlStart,
    pub control: Option<PathBuf>,
    pub ascent: AscentOptions,
    pub time_tail_max: f64,
    pub space_tail_max: f64,
    pub energy_ratio_min: f64,
    pub energy_ratio_max: f64,
    pub ratio_max: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            omega: None,
            k_list: vec![4, 8, 16, 32],
            eps_list: None,
            t0: None,
            h0: ProfileSpec::Mode(2),
            potential: PotentialSpec::Benchmark,
            y0: ControlStart::Uniform,
            control: None,
            ascent: AscentOptions::default(),
            time_tail_max: 0.1,
            space_tail_max: 0.1,
            energy_ratio_min: 0.2,
            energy_ratio_max: 1.5,
            ratio_max: 0.3,
        }
    }
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Entries in file order, for the report echo.
    pub entries: Vec<(String, String)>,
    pub length: f64,
    pub n: usize,
    pub bc: BoundaryCondition,
    pub horizon: f64,
    pub nt: usize,
    pub reaction: ReactionSpec,
    pub costs: CostSpec,
    pub u0: ProfileSpec,
    pub constraints: Constraints,
    pub experiment: ExperimentConfig,
    pub output_dir: Option<PathBuf>,
    pub dump: bool,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.length, self.n, self.bc)?)
    }

    pub fn time(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.horizon, self.nt)?)
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let grid = self.grid()?;
        let initial = self.u0.build(&grid)?;
        Ok(ProblemSpec::new(grid, self.time()?, self.reaction.build(), self.costs, initial, self.constraints)?)
    }

    pub fn eps_list(&self) -> Vec<f64> {
        self.experiment
            .eps_list
            .clone()
            .unwrap_or_else(|| [0.2, 0.1, 0.05, 0.025].iter().map(|f| f * self.horizon).collect())
    }

    pub fn t0(&self) -> f64 {
        self.experiment.t0.unwrap_or(0.5 * self.horizon)
    }
}

fn split_tagged(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (s.trim(), None),
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(v)
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let list: Vec<T> = s.split(',').map(|t| item(t.trim())).collect::<Result<_, _>>()?;
    if list.is_empty() {
        return Err("empty list".into());
    }
    Ok(list)
}

fn parse_intervals(s: &str) -> Result<Vec<(f64, f64)>, String> {
    parse_list(s, |t| {
        let (a, b) = t.split_once(':').ok_or_else(|| format!("interval '{t}' is not of the form a:b"))?;
        let (a, b) = (parse_real(a)?, parse_real(b)?);
        if a > b {
            return Err(format!("interval '{t}' is reversed"));
        }
        Ok((a, b))
    })
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{s}' is not a boolean")),
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}

/// Parses configuration text; relative table paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let mut values: BTreeMap<&'static str, (String, usize)> = BTreeMap::new();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| CliError::Parse {
            line,
            message: format!("expected 'section.key = value', got '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let known = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(k, _)| *k)
            .ok_or_else(|| CliError::Parse { line, message: format!("unknown key '{key}'") })?;
        if value.is_empty() {
            return Err(CliError::Parse { line, message: format!("empty value for '{key}'") });
        }
        if values.insert(known, (value.to_string(), line)).is_some() {
            return Err(CliError::Parse { line, message: format!("duplicate key '{key}'") });
        }
        entries.push((key.to_string(), value.to_string()));
    }
    for (key, required) in KEYS {
        if *required && !values.contains_key(key) {
            return Err(CliError::Key { key: key.to_string(), message: "missing required key".into() });
        }
    }

    let get = |key: &'static str| values.get(key).map(|(v, l)| (v.as_str(), *l));
    fn typed<T>(
        key: &str,
        found: Option<(&str, usize)>,
        f: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        match found {
            None => Ok(None),
            Some((v, line)) => {
                f(v).map(Some).map_err(|message| CliError::Key { key: format!("{key} (line {line})"), message })
            }
        }
    }
    macro_rules! req {
        ($key:literal, $f:expr) => {
            typed($key, get($key), $f)?.expect("required keys are present")
        };
    }
    macro_rules! opt {
        ($key:literal, $f:expr) => {
            typed($key, get($key), $f)?
        };
    }
    let positive = |s: &str| {
        let v = parse_real(s)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(format!("must be positive, got {v}"))
        }
    };
    let count = |s: &str| s.parse::<usize>().map_err(|_| format!("'{s}' is not a nonnegative integer"));

    let length = req!("domain.L", positive);
    let n = req!("domain.n", count);
    let bc = req!("domain.bc", |s: &str| BoundaryCondition::from_str(s).map_err(|e| e.to_string()));
    let horizon = req!("time.T", positive);
    let nt = req!("time.nt", count);
    let reaction = req!("model.f", ReactionSpec::from_str);
    let running = req!("model.j1", CostFamily::from_str);
    let terminal = req!("model.j2", CostFamily::from_str);
    let u0 = req!("model.u0", |s: &str| ProfileSpec::parse(s, base));
    let kappa0 = req!("constraints.kappa0", parse_real);
    let kappa1 = req!("constraints.kappa1", parse_real);
    let mean = req!("constraints.V0", parse_real);
    let constraints = Constraints { kappa0, kappa1, mean };
    constraints.validate().map_err(|e| CliError::Key { key: "constraints.V0".into(), message: e.to_string() })?;

    let mut ex = ExperimentConfig::default();
    ex.omega = opt!("experiment.omega", parse_intervals);
    if let Some(k) = opt!("experiment.K_list", |s| parse_list(s, count)) {
        ex.k_list = k;
    }
    ex.eps_list = opt!("experiment.eps_list", |s| parse_list(s, positive));
    ex.t0 = opt!("experiment.t0", parse_real);
    if let Some(h) = opt!("experiment.h0", |s: &str| ProfileSpec::parse(s, base)) {
        ex.h0 = h;
    }
    if let Some(p) = opt!("experiment.potential", |s: &str| match s {
        "zero" => Ok(PotentialSpec::Zero),
        "benchmark" => Ok(PotentialSpec::Benchmark),
        _ => Err(format!("unknown potential '{s}' (expected zero or benchmark)")),
    }) {
        ex.potential = p;
    }
    if let Some(y) = opt!("experiment.y0", |s: &str| match split_tagged(s) {
        ("uniform", None) => Ok(ControlStart::Uniform),
        ("cosine", Some(a)) => Ok(ControlStart::Cosine(parse_real(a)?)),
        _ => Err(format!("unknown start '{s}' (expected uniform or cosine:a)")),
    }) {
        ex.y0 = y;
    }
    ex.control = opt!("experiment.control", |s: &str| Ok(base.join(s)));
    if let Some(v) = opt!("experiment.max_iters", count) {
        ex.ascent.max_iters = v;
    }
    if let Some(v) = opt!("experiment.tol", positive) {
        ex.ascent.tol = v;
    }
    if let Some(v) = opt!("experiment.mode", AscentMode::from_str) {
        ex.ascent.mode = v;
    }
    if let Some(v) = opt!("experiment.damping", |s: &str| {
        let v = parse_real(s)?;
        if v > 0.0 && v <= 1.0 {
            Ok(v)
        } else {
            Err(format!("must lie in (0, 1], got {v}"))
        }
    }) {
        ex.ascent.damping = v;
    }
    if let Some(v) = opt!("experiment.time_tail_max", positive) {
        ex.time_tail_max = v;
    }
    if let Some(v) = opt!("experiment.space_tail_max", positive) {
        ex.space_tail_max = v;
    }
    if let Some(v) = opt!("experiment.energy_ratio_min", parse_real) {
        ex.energy_ratio_min = v;
    }
    if let Some(v) = opt!("experiment.energy_ratio_max", parse_real) {
        ex.energy_ratio_max = v;
    }
    if let Some(v) = opt!("experiment.ratio_max", positive) {
        ex.ratio_max = v;
    }
    let output_dir = opt!("output.dir", |s: &str| Ok(PathBuf::from(s)));
    let dump = opt!("output.dump", parse_bool).unwrap_or(false);

    let config = RunConfig {
        entries,
        length,
        n,
        bc,
        horizon,
        nt,
        reaction,
        costs: CostSpec { running, terminal },
        u0,
        constraints,
        experiment: ex,
        output_dir,
        dump,
    };
    config.grid().map_err(|e| CliError::Key { key: "domain.n".into(), message: e.to_string() })?;
    config.time().map_err(|e| CliError::Key { key: "time.nt".into(), message: e.to_string() })?;
    Ok(config)
}
