//! Run configuration: a flat `section.key = value` file.
//!
//! ```text
//! # comments start with '#', anywhere on a line
//! levy.mu = -0.0018
//! levy.sigma2 = 4.011e-4
//! book.n = 1000
//! book.xbar = -1
//! resilience.lambda = 5
//! agent.A = 1e-2
//! agent.b = 1
//! agent.y0 = 1e4
//! agent.z0 = 0
//! ```
//!
//! Keys are case-insensitive. Any key can be overridden from the environment
//! as `LOBEXIT_<SECTION>_<KEY>`, e.g. `LOBEXIT_AGENT_A=1e-3`. Table files
//! (`levy.jump_table`, `book.table`, `resilience.table`) are resolved
//! relative to the directory of the configuration file.
//!
//! Parsing never stops at the first problem: every missing key, malformed
//! value and violated invariant is collected and reported with its key and
//! line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use lobexit::{
    BookShape, JumpSpec, LevyModel, Problem, Resilience, TableResilience, TableShape,
    TabulatedDensity, VgParams,
};

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "LOBEXIT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Count,
    Word(&'static [&'static str]),
    File,
}

/// Every recognised key, its type, and whether it is unconditionally
/// required.
const KEYS: &[(&str, Kind, bool)] = &[
    ("levy.mu", Kind::Real, true),
    ("levy.sigma2", Kind::Real, true),
    ("levy.jumps", Kind::Word(&["none", "vg", "table"]), false),
    ("levy.vg_rho", Kind::Real, false),
    ("levy.vg_eta", Kind::Real, false),
    ("levy.vg_theta", Kind::Real, false),
    ("levy.jump_table", Kind::File, false),
    ("book.kind", Kind::Word(&["block", "table"]), false),
    ("book.n", Kind::Real, false),
    ("book.xbar", Kind::Real, false),
    ("book.table", Kind::File, false),
    (
        "resilience.kind",
        Kind::Word(&["exponential", "table"]),
        false,
    ),
    ("resilience.lambda", Kind::Real, false),
    ("resilience.table", Kind::File, false),
    ("agent.A", Kind::Real, true),
    ("agent.b", Kind::Real, true),
    ("agent.c", Kind::Real, false),
    ("agent.y0", Kind::Real, true),
    ("agent.z0", Kind::Real, true),
    ("numerics.y_max", Kind::Real, false),
    ("numerics.nodes", Kind::Count, false),
    ("numerics.rtol", Kind::Real, false),
    ("numerics.dt_max", Kind::Real, false),
    ("numerics.horizon", Kind::Real, false),
    ("numerics.trunc_rel", Kind::Real, false),
    ("numerics.hjb_points", Kind::Count, false),
    ("numerics.hjb_tol", Kind::Real, false),
    ("numerics.oracle_ny", Kind::Count, false),
    ("numerics.oracle_nz", Kind::Count, false),
    ("numerics.oracle_ymax", Kind::Real, false),
    ("numerics.oracle_dt", Kind::Real, false),
    ("numerics.mc_paths", Kind::Count, false),
    ("numerics.mc_dt", Kind::Real, false),
    ("numerics.mc_eps", Kind::Real, false),
    ("numerics.seed", Kind::Count, false),
    ("numerics.threads", Kind::Count, false),
];

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Env(String),
    Missing,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Env(var) => write!(f, "env {var}"),
            Origin::Missing => write!(f, "missing"),
        }
    }
}

/// One configuration problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted key path, or empty for syntax errors.
    pub key: String,
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}: {}", self.origin, self.message)
        } else {
            write!(f, "{}: {}: {}", self.origin, self.key, self.message)
        }
    }
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// The agent's position and preferences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    /// Absolute risk aversion.
    pub a: f64,
    /// Initial unaffected price.
    pub b: f64,
    /// Initial cash.
    pub c: f64,
    pub y0: f64,
    pub z0: f64,
}

/// Tolerances, grids and seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Upper end of the tabulated boundary.
    pub y_max: f64,
    pub nodes: usize,
    pub rtol: f64,
    pub dt_max: f64,
    pub horizon: f64,
    pub trunc_rel: f64,
    pub hjb_points: usize,
    pub hjb_tol: f64,
    pub oracle_ny: usize,
    pub oracle_nz: usize,
    pub oracle_ymax: f64,
    pub oracle_dt: Option<f64>,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub mc_eps: f64,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub agent: Agent,
    pub numerics: Numerics,
    /// The resolved settings, for echoing into output metadata.
    pub settings: BTreeMap<String, String>,
}

struct Entry {
    value: String,
    origin: Origin,
}

fn canonical(key: &str) -> Option<(&'static str, Kind)> {
    KEYS.iter()
        .find(|(k, _, _)| k.eq_ignore_ascii_case(key))
        .map(|&(k, kind, _)| (k, kind))
}

fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
}

/// Reads and validates a configuration file, applying environment
/// overrides from the process environment.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            key: String::new(),
            origin: Origin::Missing,
            message: format!("cannot read {}: {e}", path.display()),
        }])
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let env: Vec<(String, String)> = std::env::vars()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    parse_str(&text, &base, &env)
}

/// Parses configuration text. `base` resolves relative table paths; `env`
/// holds `(variable, value)` overrides.
pub fn parse_str(
    text: &str,
    base: &Path,
    env: &[(String, String)],
) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut entries: BTreeMap<&'static str, Entry> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: String| ConfigError {
            key: String::new(),
            origin: Origin::Line(lineno),
            message,
        };
        let Some((key, value)) = line.split_once('=') else {
            errors.push(syntax(format!(
                "expected `section.key = value`, found `{line}`"
            )));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some((name, _)) = canonical(key) else {
            errors.push(syntax(format!("unknown key `{key}`")));
            continue;
        };
        if value.is_empty() {
            errors.push(ConfigError {
                key: name.into(),
                origin: Origin::Line(lineno),
                message: "empty value".into(),
            });
            continue;
        }
        if let Some(prev) = entries.get(name) {
            errors.push(ConfigError {
                key: name.into(),
                origin: Origin::Line(lineno),
                message: format!("duplicate key (first set at {})", prev.origin),
            });
            continue;
        }
        entries.insert(
            name,
            Entry {
                value: value.to_string(),
                origin: Origin::Line(lineno),
            },
        );
    }

    for (var, value) in env {
        let Some(rest) = var.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let found = KEYS
            .iter()
            .find(|(k, _, _)| env_name(k) == format!("{ENV_PREFIX}{rest}"));
        match found {
            Some(&(name, _, _)) => {
                entries.insert(
                    name,
                    Entry {
                        value: value.trim().to_string(),
                        origin: Origin::Env(var.clone()),
                    },
                );
            }
            None => errors.push(ConfigError {
                key: String::new(),
                origin: Origin::Env(var.clone()),
                message: "does not name a configuration key".into(),
            }),
        }
    }

    let mut r = Reader {
        entries: &entries,
        errors: &mut errors,
        base,
    };
    let built = r.build();
    if errors.is_empty() {
        let (problem, agent, numerics) =
            built.expect("build succeeds when no errors were recorded");
        let settings = entries
            .iter()
            .map(|(k, e)| (k.to_string(), e.value.clone()))
            .collect();
        Ok(RunConfig {
            problem,
            agent,
            numerics,
            settings,
        })
    } else {
        Err(ConfigErrors(errors))
    }
}

struct Reader<'a> {
    entries: &'a BTreeMap<&'static str, Entry>,
    errors: &'a mut Vec<ConfigError>,
    base: &'a Path,
}

impl Reader<'_> {
    fn origin(&self, key: &str) -> Origin {
        self.entries
            .get(key)
            .map_or(Origin::Missing, |e| e.origin.clone())
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        let origin = self.origin(key);
        self.errors.push(ConfigError {
            key: key.into(),
            origin,
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &'static str, required: bool) -> Option<String> {
        match self.entries.get(key) {
            Some(e) => Some(e.value.clone()),
            None => {
                if required {
                    self.fail(key, "required key is missing");
                }
                None
            }
        }
    }

    fn real(&mut self, key: &'static str, required: bool) -> Option<f64> {
        debug_assert_eq!(canonical(key).map(|c| c.1), Some(Kind::Real));
        let v = self.raw(key, required)?;
        match v.parse::<f64>() {
            Ok(x) if !x.is_nan() => Some(x),
            _ => {
                self.fail(key, format!("expected a real number, found `{v}`"));
                None
            }
        }
    }

    /// Optional real; a malformed value is reported and the default keeps
    /// the remaining checks going.
    fn real_or(&mut self, key: &'static str, default: f64) -> f64 {
        self.real(key, false).unwrap_or(default)
    }

    fn count(&mut self, key: &'static str, default: usize) -> usize {
        let Some(v) = self.raw(key, false) else {
            return default;
        };
        match v.parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                self.fail(key, format!("expected a non-negative integer, found `{v}`"));
                default
            }
        }
    }

    fn word(&mut self, key: &'static str, default: &'static str) -> &'static str {
        let Some((_, Kind::Word(options))) = canonical(key) else {
            unreachable!("{key} is not a word key");
        };
        let Some(v) = self.raw(key, false) else {
            return default;
        };
        match options.iter().find(|o| o.eq_ignore_ascii_case(&v)) {
            Some(o) => o,
            None => {
                self.fail(
                    key,
                    format!("expected one of {}, found `{v}`", options.join("|")),
                );
                default
            }
        }
    }

    fn file(&mut self, key: &'static str) -> Option<String> {
        let v = self.raw(key, true)?;
        let path: PathBuf = if Path::new(&v).is_absolute() {
            PathBuf::from(&v)
        } else {
            self.base.join(&v)
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Some(text),
            Err(e) => {
                self.fail(key, format!("cannot read {}: {e}", path.display()));
                None
            }
        }
    }

    fn check<T>(&mut self, key: &str, r: lobexit::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(key, e.to_string());
                None
            }
        }
    }

    fn build(&mut self) -> Option<(Problem, Agent, Numerics)> {
        let levy = self.levy();
        let shape = self.shape();
        let resilience = self.resilience();
        let agent = self.agent();
        let numerics = self.numerics(agent.map(|a| a.y0));

        let (levy, shape, resilience, agent, numerics) =
            (levy?, shape?, resilience?, agent?, numerics?);
        let problem = self.check("agent.A", Problem::new(levy, shape, resilience, agent.a))?;
        self.validate(&problem, &agent, &numerics);
        Some((problem, agent, numerics))
    }

    fn levy(&mut self) -> Option<LevyModel> {
        let mu = self.real("levy.mu", true);
        let sigma2 = self.real("levy.sigma2", true);
        let jumps = match self.word("levy.jumps", "none") {
            "vg" => {
                let rho = self.real("levy.vg_rho", true);
                let eta = self.real("levy.vg_eta", true);
                let theta = self.real("levy.vg_theta", true);
                let vg = VgParams::new(rho?, eta?, theta?);
                JumpSpec::VarianceGamma(self.check("levy.vg_rho", vg)?)
            }
            "table" => {
                let text = self.file("levy.jump_table")?;
                JumpSpec::Table(self.check("levy.jump_table", TabulatedDensity::parse(&text))?)
            }
            _ => JumpSpec::None,
        };
        let (mu, sigma2) = (mu?, sigma2?);
        let key = if mu > 0.0 || !mu.is_finite() {
            "levy.mu"
        } else {
            "levy.sigma2"
        };
        self.check(key, LevyModel::new(mu, sigma2, jumps))
    }

    fn shape(&mut self) -> Option<BookShape> {
        match self.word("book.kind", "block") {
            "table" => {
                let text = self.file("book.table")?;
                let t = self.check("book.table", TableShape::parse(&text))?;
                Some(BookShape::Table(t))
            }
            _ => {
                let n = self.real("book.n", true);
                let xbar = self.real("book.xbar", true);
                let (n, xbar) = (n?, xbar?);
                let key = if n > 0.0 { "book.xbar" } else { "book.n" };
                self.check(key, BookShape::block(n, xbar))
            }
        }
    }

    fn resilience(&mut self) -> Option<Resilience> {
        match self.word("resilience.kind", "exponential") {
            "table" => {
                let text = self.file("resilience.table")?;
                let t = self.check("resilience.table", TableResilience::parse(&text))?;
                Some(Resilience::Table(t))
            }
            _ => {
                let lambda = self.real("resilience.lambda", true)?;
                self.check("resilience.lambda", Resilience::exponential(lambda))
            }
        }
    }

    fn agent(&mut self) -> Option<Agent> {
        let a = self.real("agent.A", true);
        let b = self.real("agent.b", true);
        let c = self.real_or("agent.c", 0.0);
        let y0 = self.real("agent.y0", true);
        let z0 = self.real("agent.z0", true);
        let mut ok = true;
        if let Some(a) = a {
            if !(a > 0.0 && a.is_finite()) {
                self.fail("agent.A", format!("A = {a} must be positive and finite"));
                ok = false;
            }
        }
        if let Some(b) = b {
            if !(b > 0.0 && b.is_finite()) {
                self.fail("agent.b", format!("b = {b} must be positive and finite"));
                ok = false;
            }
        }
        if !c.is_finite() {
            self.fail("agent.c", "c must be finite");
            ok = false;
        }
        if let Some(y0) = y0 {
            if !(y0 >= 0.0 && y0.is_finite()) {
                self.fail(
                    "agent.y0",
                    format!("y0 = {y0} must be non-negative and finite"),
                );
                ok = false;
            }
        }
        if let Some(z0) = z0 {
            if !(z0 <= 0.0) {
                self.fail("agent.z0", format!("z0 = {z0} must satisfy z0 <= 0"));
                ok = false;
            }
        }
        if !ok {
            return None;
        }
        Some(Agent {
            a: a?,
            b: b?,
            c,
            y0: y0?,
            z0: z0?,
        })
    }

    fn numerics(&mut self, y0: Option<f64>) -> Option<Numerics> {
        let y_max = self.real_or("numerics.y_max", y0.unwrap_or(1.0).max(1.0));
        let oracle_dt = self.real("numerics.oracle_dt", false);
        let n = Numerics {
            y_max,
            nodes: self.count("numerics.nodes", 2048),
            rtol: self.real_or("numerics.rtol", 1e-10),
            dt_max: self.real_or("numerics.dt_max", f64::INFINITY),
            horizon: self.real_or("numerics.horizon", 1e6),
            trunc_rel: self.real_or("numerics.trunc_rel", 1e-9),
            hjb_points: self.count("numerics.hjb_points", 10_000),
            hjb_tol: self.real_or("numerics.hjb_tol", 1e-8),
            oracle_ny: self.count("numerics.oracle_ny", 200),
            oracle_nz: self.count("numerics.oracle_nz", 200),
            oracle_ymax: self.real_or("numerics.oracle_ymax", y_max),
            oracle_dt,
            mc_paths: self.count("numerics.mc_paths", 100_000),
            mc_dt: self.real_or("numerics.mc_dt", 1e-3),
            mc_eps: self.real_or("numerics.mc_eps", 1e-3),
            seed: self.count("numerics.seed", 1) as u64,
            threads: self.count("numerics.threads", 0),
        };
        let positive: [(&'static str, f64); 8] = [
            ("numerics.y_max", n.y_max),
            ("numerics.rtol", n.rtol),
            ("numerics.dt_max", n.dt_max),
            ("numerics.horizon", n.horizon),
            ("numerics.hjb_tol", n.hjb_tol),
            ("numerics.oracle_ymax", n.oracle_ymax),
            ("numerics.mc_dt", n.mc_dt),
            ("numerics.mc_eps", n.mc_eps),
        ];
        let mut ok = true;
        for (key, v) in positive {
            if !(v > 0.0) {
                self.fail(key, format!("{v} must be positive"));
                ok = false;
            }
        }
        if let Some(dt) = n.oracle_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                self.fail(
                    "numerics.oracle_dt",
                    format!("{dt} must be positive and finite"),
                );
                ok = false;
            }
        }
        if !(n.trunc_rel > 0.0 && n.trunc_rel < 1.0) {
            self.fail(
                "numerics.trunc_rel",
                format!("{} must lie in (0, 1)", n.trunc_rel),
            );
            ok = false;
        }
        if n.nodes < 8 {
            self.fail("numerics.nodes", "at least 8 boundary nodes are needed");
            ok = false;
        }
        ok.then_some(n)
    }

    fn validate(&mut self, p: &Problem, agent: &Agent, n: &Numerics) {
        let zbar = p.zbar();
        if agent.z0 < zbar {
            self.fail(
                "agent.z0",
                format!("z0 = {} lies below the total book depth zbar = {zbar}; require zbar <= z0 <= 0", agent.z0),
            );
        } else if !p.is_solvent(agent.y0, agent.z0) {
            self.fail(
                "agent.z0",
                format!(
                    "(y0, z0) = ({}, {}) violates solvency z0 > y0 - ybar_A + zbar (ybar_A = {}, zbar = {zbar})",
                    agent.y0,
                    agent.z0,
                    p.ybar()
                ),
            );
        }
        if n.y_max >= p.ybar() {
            self.fail(
                "numerics.y_max",
                format!("y_max = {} must lie below ybar_A = {}", n.y_max, p.ybar()),
            );
        }
    }
}

/// Required keys for the default block book, exponential resilience and
/// no-jump model, in file order.
pub fn required_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = KEYS.iter().filter(|k| k.2).map(|k| k.0).collect();
    keys.extend(["book.n", "book.xbar", "resilience.lambda"]);
    keys
}
