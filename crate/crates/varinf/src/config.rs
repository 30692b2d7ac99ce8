//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers and `#` comments.
//!
//! ```text
//! [domain]
//! omega = 0 1 0 1            # x0 x1 y0 y1
//! inner = 0.25 0.75 0.25 0.75  # or `none`
//! resolution = 65            # or `nx ny`
//!
//! [exponent]
//! p = const 4                # const P | affine A B C | table PATH
//!
//! [data]
//! g = affine -0.5 1 0        # const C | affine A B C | quadratic A B C D E F | table PATH
//!
//! [schedule]
//! k = 8 16 32 64             # explicit levels, or `geometric N`
//! stop_tol = 1e-5            # optional; default is relative to the first solve
//! early_stop = false
//!
//! [solver]
//! grad_tol = 1e-9
//! max_iters = 100000
//! ls_shrink = 0.5
//! ls_c1 = 1e-4
//! direction = lbfgs 10       # or `steepest`
//!
//! [verify]
//! s_factor = 5               # every tolerance factor of the battery
//! trials = 100               # minimality audit
//! seed = 0
//!
//! [output]
//! dir = out
//!
//! [sweep]
//! max_nodes = 1000000
//! ```
//!
//! Every section and key is optional except `[exponent] p` and `[data] g`.
//! Relative paths are resolved against the directory of the config file.
//! Tables are field CSV files (see [`crate::csvio`]) and are read at parse
//! time, so they must match the configured resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use varinf_core::functional::{compatibility, compatibility_tolerance};
use varinf_core::solver::{ContinuationSchedule, Direction, SolverConfig};
use varinf_core::verify::VerifyConfig;
use varinf_core::{
    build_grid, DomainSpec, Error, ExponentField, ExponentSpec, FieldExpr, Grid, Rect, ScalarField,
};

use crate::csvio;

/// Default cap on the node count of the finest sweep level.
pub const DEFAULT_MAX_NODES: usize = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("PMinusTooSmall: exponent infimum {p_minus} must exceed the dimension 2")]
    PMinusTooSmall { p_minus: f64 },
    #[error("DRectTouchesBoundary: the inner rectangle must lie strictly inside the outer one")]
    DRectTouchesBoundary,
    #[error("Compatibility: boundary integral of g is {integral:e}, tolerance {tolerance:e}")]
    Compatibility { integral: f64, tolerance: f64 },
    #[error("table {path}: {source}")]
    Table {
        path: PathBuf,
        source: csvio::CsvError,
    },
    #[error(transparent)]
    Core(Error),
}

impl From<Error> for ValidationError {
    fn from(e: Error) -> Self {
        match e {
            Error::PMinusTooSmall { p_minus } => ValidationError::PMinusTooSmall { p_minus },
            Error::DRectTouchesBoundary => ValidationError::DRectTouchesBoundary,
            other => ValidationError::Core(other),
        }
    }
}

/// Boundary data source.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Expr(FieldExpr),
    /// Node-ordered values read from a table.
    Table(Vec<f64>),
}

/// How the truncation levels are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSpec {
    Explicit(Vec<f64>),
    /// `p_plus * 2^j`, `j = 1..=n`.
    Geometric(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// The file the config was read from, and its text verbatim.
    pub path: PathBuf,
    pub source: String,
    pub domain: DomainSpec,
    pub exponent: ExponentSpec,
    pub data: DataSpec,
    pub levels: LevelSpec,
    pub stop_tol: Option<f64>,
    pub early_stop: bool,
    pub solver: SolverConfig,
    pub verify: VerifyConfig,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub max_nodes: usize,
}

/// Grid, exponent, data and schedule of one resolution.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub p: ExponentField,
    pub g: ScalarField,
    pub schedule: ContinuationSchedule,
}

impl RunConfig {
    /// Builds and validates the problem on `domain` (normally `self.domain`,
    /// or a refinement of it for a sweep).
    pub fn problem_on(&self, domain: &DomainSpec) -> Result<Problem, ValidationError> {
        let grid = build_grid(domain)?;
        let p = ExponentField::validate(self.exponent.clone(), &grid)?;
        let g = match &self.data {
            DataSpec::Expr(e) => e.sample(&grid),
            DataSpec::Table(v) => ScalarField::new(&grid, v.clone())?,
        };
        let integral = compatibility(&grid, &g);
        let tolerance = compatibility_tolerance(&grid, &g);
        if !(integral.abs() <= tolerance) {
            return Err(ValidationError::Compatibility {
                integral,
                tolerance,
            });
        }
        let mut schedule = match &self.levels {
            LevelSpec::Explicit(k) => ContinuationSchedule::new(k.clone(), self.stop_tol),
            LevelSpec::Geometric(n) => ContinuationSchedule::geometric(p.p_plus(), *n),
        };
        schedule.stop_tol = self.stop_tol;
        schedule.early_stop = self.early_stop;
        schedule.validate(p.p_plus())?;
        self.solver.validate()?;
        Ok(Problem {
            grid,
            p,
            g,
            schedule,
        })
    }

    pub fn problem(&self) -> Result<Problem, ValidationError> {
        self.problem_on(&self.domain)
    }
}

struct Entry {
    line: usize,
    value_column: usize,
    value: String,
}

struct Parser<'a> {
    path: &'a Path,
    entries: BTreeMap<(String, String), Entry>,
}

const KEYS: &[(&str, &[&str])] = &[
    ("domain", &["omega", "inner", "resolution"]),
    ("exponent", &["p"]),
    ("data", &["g"]),
    ("schedule", &["k", "stop_tol", "early_stop"]),
    (
        "solver",
        &["grad_tol", "max_iters", "ls_shrink", "ls_c1", "direction"],
    ),
    (
        "verify",
        &[
            "s_factor",
            "midrange_factor",
            "direct_factor",
            "pxlap_factor",
            "flux_factor",
            "interface_factor",
            "singular_rel",
            "corner_radius",
            "interface_fraction",
            "trials",
            "seed",
        ],
    ),
    ("output", &["dir"]),
    ("sweep", &["max_nodes"]),
];

impl<'a> Parser<'a> {
    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ConfigError {
        ConfigError::Parse {
            path: self.path.to_path_buf(),
            line,
            column,
            message: message.into(),
        }
    }

    fn scan(path: &'a Path, text: &str) -> Result<Self, ConfigError> {
        let mut parser = Parser {
            path,
            entries: BTreeMap::new(),
        };
        let mut section: Option<&str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = content.len() - content.trim_start().len();
            if let Some(rest) = trimmed.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(parser.error(line, indent + 1, "unterminated section header"));
                };
                let name = name.trim();
                match KEYS.iter().find(|(s, _)| *s == name) {
                    Some((s, _)) => section = Some(s),
                    None => {
                        return Err(parser.error(
                            line,
                            indent + 2,
                            format!("unknown section `{name}`"),
                        ))
                    }
                }
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(parser.error(line, indent + 1, "expected `key = value`"));
            };
            let key = content[..eq].trim();
            let Some(sec) = section else {
                return Err(parser.error(line, indent + 1, "key outside of any section"));
            };
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(parser.error(
                    line,
                    indent + 1,
                    format!("unknown key `{key}` in section [{sec}]"),
                ));
            }
            let after = &content[eq + 1..];
            let value = after.trim();
            if value.is_empty() {
                return Err(parser.error(line, eq + 2, format!("empty value for `{key}`")));
            }
            let value_column = eq + 2 + (after.len() - after.trim_start().len());
            let slot = (sec.to_string(), key.to_string());
            if parser.entries.contains_key(&slot) {
                return Err(parser.error(line, indent + 1, format!("duplicate key `{key}`")));
            }
            parser.entries.insert(
                slot,
                Entry {
                    line,
                    value_column,
                    value: value.to_string(),
                },
            );
        }
        Ok(parser)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn numbers(&self, e: &Entry, tokens: &[&str]) -> Result<Vec<f64>, ConfigError> {
        tokens
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    let offset = e.value.find(t).unwrap_or(0);
                    self.error(
                        e.line,
                        e.value_column + offset,
                        format!("`{t}` is not a number"),
                    )
                })
            })
            .collect()
    }

    fn floats(
        &self,
        section: &str,
        key: &str,
        count: Option<usize>,
    ) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.get(section, key) else {
            return Ok(None);
        };
        let tokens: Vec<&str> = e.value.split_whitespace().collect();
        if let Some(n) = count {
            if tokens.len() != n {
                return Err(self.error(
                    e.line,
                    e.value_column,
                    format!("`{key}` takes {n} numbers, found {}", tokens.len()),
                ));
            }
        }
        self.numbers(e, &tokens).map(Some)
    }

    fn float(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self
            .floats(section, key, Some(1))?
            .map_or(default, |v| v[0]))
    }

    fn integer<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| {
                self.error(
                    e.line,
                    e.value_column,
                    format!("`{}` is not a non-negative integer", e.value),
                )
            }),
        }
    }

    fn boolean(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(self.error(
                    e.line,
                    e.value_column,
                    format!("`{other}` is not true/false"),
                )),
            },
        }
    }

    fn rect(&self, key: &str, values: &[f64]) -> Result<Rect, ConfigError> {
        Rect::new(values[0], values[1], values[2], values[3]).map_err(|err| {
            let e = self.get("domain", key).expect("present");
            self.error(e.line, e.value_column, err.to_string())
        })
    }

    /// Splits `kind args...` and returns the kind with the arguments.
    fn tagged<'e>(&self, e: &'e Entry) -> (&'e str, Vec<&'e str>) {
        let mut it = e.value.split_whitespace();
        let kind = it.next().unwrap_or("");
        (kind, it.collect())
    }

    fn arity(&self, e: &Entry, kind: &str, args: &[&str], n: usize) -> Result<(), ConfigError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(self.error(
                e.line,
                e.value_column,
                format!("`{kind}` takes {n} arguments, found {}", args.len()),
            ))
        }
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_table(path: PathBuf, nodes: usize) -> Result<Vec<f64>, ValidationError> {
    let rows = csvio::read_field(&path).map_err(|source| ValidationError::Table {
        path: path.clone(),
        source,
    })?;
    if rows.len() != nodes {
        return Err(ValidationError::Core(Error::ShapeMismatch {
            expected: nodes,
            found: rows.len(),
        }));
    }
    Ok(rows.into_iter().map(|r| r.u).collect())
}

/// Reads and validates a run configuration.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(path, &text)
}

/// Parses config text as if it had been read from `path`.
pub fn parse_config_str(path: &Path, text: &str) -> Result<RunConfig, ConfigError> {
    let ps = Parser::scan(path, text)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let omega = match ps.floats("domain", "omega", Some(4))? {
        Some(v) => ps.rect("omega", &v)?,
        None => Rect::unit(),
    };
    let inner = match ps.get("domain", "inner") {
        Some(e) if e.value == "none" => None,
        Some(_) => {
            let v = ps.floats("domain", "inner", Some(4))?.expect("present");
            Some(ps.rect("inner", &v)?)
        }
        None => Some(Rect::new(0.25, 0.75, 0.25, 0.75).expect("valid")),
    };
    let resolution = match ps.get("domain", "resolution") {
        None => (65, 65),
        Some(e) => {
            let parsed: Result<Vec<usize>, _> =
                e.value.split_whitespace().map(str::parse).collect();
            match parsed.as_deref() {
                Ok([n]) => (*n, *n),
                Ok([nx, ny]) => (*nx, *ny),
                _ => {
                    return Err(ps.error(
                        e.line,
                        e.value_column,
                        "resolution is `n` or `nx ny` node counts",
                    ))
                }
            }
        }
    };
    let domain = DomainSpec::new(omega, inner, resolution);
    let nodes = resolution.0 * resolution.1;

    let Some(pe) = ps.get("exponent", "p") else {
        return Err(ValidationError::Missing("[exponent] p").into());
    };
    let (kind, args) = ps.tagged(pe);
    let exponent = match kind {
        "const" => {
            ps.arity(pe, kind, &args, 1)?;
            ExponentSpec::Constant(ps.numbers(pe, &args)?[0])
        }
        "affine" => {
            ps.arity(pe, kind, &args, 3)?;
            let v = ps.numbers(pe, &args)?;
            ExponentSpec::Affine {
                a: v[0],
                b: v[1],
                c: v[2],
            }
        }
        "table" => {
            ps.arity(pe, kind, &args, 1)?;
            ExponentSpec::Table(read_table(resolve(&base, args[0]), nodes)?)
        }
        other => {
            return Err(ps.error(
                pe.line,
                pe.value_column,
                format!("unknown exponent kind `{other}` (const, affine, table)"),
            ))
        }
    };

    let Some(ge) = ps.get("data", "g") else {
        return Err(ValidationError::Missing("[data] g").into());
    };
    let (kind, args) = ps.tagged(ge);
    let data = match kind {
        "const" => {
            ps.arity(ge, kind, &args, 1)?;
            DataSpec::Expr(FieldExpr::Constant(ps.numbers(ge, &args)?[0]))
        }
        "affine" => {
            ps.arity(ge, kind, &args, 3)?;
            let v = ps.numbers(ge, &args)?;
            DataSpec::Expr(FieldExpr::Affine {
                a: v[0],
                b: v[1],
                c: v[2],
            })
        }
        "quadratic" => {
            ps.arity(ge, kind, &args, 6)?;
            let v = ps.numbers(ge, &args)?;
            DataSpec::Expr(FieldExpr::Quadratic {
                a: v[0],
                b: v[1],
                c: v[2],
                d: v[3],
                e: v[4],
                f: v[5],
            })
        }
        "table" => {
            ps.arity(ge, kind, &args, 1)?;
            DataSpec::Table(read_table(resolve(&base, args[0]), nodes)?)
        }
        other => {
            return Err(ps.error(
                ge.line,
                ge.value_column,
                format!("unknown data kind `{other}` (const, affine, quadratic, table)"),
            ))
        }
    };

    let levels = match ps.get("schedule", "k") {
        None => LevelSpec::Geometric(12),
        Some(e) => {
            let (kind, args) = ps.tagged(e);
            if kind == "geometric" {
                ps.arity(e, kind, &args, 1)?;
                LevelSpec::Geometric(args[0].parse().map_err(|_| {
                    ps.error(e.line, e.value_column, "`geometric` takes a level count")
                })?)
            } else {
                let tokens: Vec<&str> = e.value.split_whitespace().collect();
                LevelSpec::Explicit(ps.numbers(e, &tokens)?)
            }
        }
    };
    let stop_tol = ps.floats("schedule", "stop_tol", Some(1))?.map(|v| v[0]);
    let early_stop = ps.boolean(
        "schedule",
        "early_stop",
        matches!(levels, LevelSpec::Geometric(_)),
    )?;

    let defaults = SolverConfig::default();
    let direction = match ps.get("solver", "direction") {
        None => defaults.direction,
        Some(e) => {
            let (kind, args) = ps.tagged(e);
            match (kind, args.as_slice()) {
                ("steepest", []) => Direction::SteepestBb,
                ("lbfgs", []) => Direction::Lbfgs { memory: 10 },
                ("lbfgs", [m]) => Direction::Lbfgs {
                    memory: m.parse().map_err(|_| {
                        ps.error(e.line, e.value_column, "`lbfgs` takes a memory length")
                    })?,
                },
                _ => {
                    return Err(ps.error(
                        e.line,
                        e.value_column,
                        "direction is `steepest` or `lbfgs [memory]`",
                    ))
                }
            }
        }
    };
    let solver = SolverConfig {
        grad_tol: ps.float("solver", "grad_tol", defaults.grad_tol)?,
        max_iters: ps.integer("solver", "max_iters", defaults.max_iters)?,
        ls_shrink: ps.float("solver", "ls_shrink", defaults.ls_shrink)?,
        ls_c1: ps.float("solver", "ls_c1", defaults.ls_c1)?,
        direction,
    };

    let d = VerifyConfig::default();
    let verify = VerifyConfig {
        s_factor: ps.float("verify", "s_factor", d.s_factor)?,
        midrange_factor: ps.float("verify", "midrange_factor", d.midrange_factor)?,
        direct_factor: ps.float("verify", "direct_factor", d.direct_factor)?,
        pxlap_factor: ps.float("verify", "pxlap_factor", d.pxlap_factor)?,
        flux_factor: ps.float("verify", "flux_factor", d.flux_factor)?,
        interface_factor: ps.float("verify", "interface_factor", d.interface_factor)?,
        singular_rel: ps.float("verify", "singular_rel", d.singular_rel)?,
        corner_radius: ps.float("verify", "corner_radius", d.corner_radius)?,
        interface_fraction: ps.float("verify", "interface_fraction", d.interface_fraction)?,
    };
    let trials = ps.integer("verify", "trials", 100)?;
    let seed = ps.integer("verify", "seed", 0)?;

    let out_dir = match ps.get("output", "dir") {
        Some(e) => resolve(&base, &e.value),
        None => base.join("out"),
    };
    let max_nodes = ps.integer("sweep", "max_nodes", DEFAULT_MAX_NODES)?;

    let config = RunConfig {
        path: path.to_path_buf(),
        source: text.to_string(),
        domain,
        exponent,
        data,
        levels,
        stop_tol,
        early_stop,
        solver,
        verify,
        trials,
        seed,
        out_dir,
        max_nodes,
    };
    config.problem()?;
    Ok(config)
}

impl fmt::Display for LevelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSpec::Explicit(k) => {
                let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                write!(f, "{}", parts.join(" "))
            }
            LevelSpec::Geometric(n) => write!(f, "geometric {n}"),
        }
    }
}
