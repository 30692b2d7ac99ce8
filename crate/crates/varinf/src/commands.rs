//! The `solve`, `verify`, `sweep` and `report` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use varinf_core::math::observed_order;
use varinf_core::solver::{extract_limit, run_continuation};
use varinf_core::verify::{
    check_membership_s, flux_residual, infinity_residual, interface_sign_condition,
    minimality_spot_check, pxlap_residual, uniform_bounds_monitor,
};
use varinf_core::{Error, ScalarField};

use crate::config::{Problem, RunConfig};
use crate::csvio;
use crate::report::{LevelSummary, LimitSummary, MinimalityOutcome, RunReport, VerifyReports};

pub const REPORT_FILE: &str = "report.txt";
pub const TIMINGS_FILE: &str = "timings.txt";
pub const FAILURE_FILE: &str = "failure.txt";
pub const LIMIT_FILE: &str = "u_inf.csv";
pub const VERIFY_FILE: &str = "verify.txt";
pub const SWEEP_FILE: &str = "sweep.txt";

/// Process exit status of a finished command.
pub fn exit_code(report: &RunReport) -> i32 {
    if report.certified() {
        0
    } else {
        2
    }
}

/// Thread pool whose width is taken from `VARINF_THREADS` (unset or 0 means
/// one thread per core).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("VARINF_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("VARINF_THREADS={v} is not a thread count"))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

/// Runs the whole verification battery on one field. The independent
/// checks run concurrently; each is deterministic on its own.
pub fn verify_battery(
    config: &RunConfig,
    problem: &Problem,
    u: &ScalarField,
) -> Result<VerifyReports> {
    let Problem { grid, p, g, .. } = problem;
    let cfg = &config.verify;
    let ((membership, infinity), ((pxlap, flux), (interface, minimality))) = rayon::join(
        || {
            (
                check_membership_s(grid, u, p, cfg),
                infinity_residual(grid, u, cfg),
            )
        },
        || {
            rayon::join(
                || {
                    (
                        pxlap_residual(grid, u, p, cfg),
                        flux_residual(grid, u, p, g, cfg),
                    )
                },
                || {
                    (
                        interface_sign_condition(grid, u, cfg),
                        minimality_spot_check(grid, u, p, g, config.trials, config.seed),
                    )
                },
            )
        },
    );
    let minimality = match minimality {
        Ok(r) => MinimalityOutcome::Passed(r),
        Err(Error::MinimalityViolated { trial, excess, .. }) => {
            MinimalityOutcome::Violated { trial, excess }
        }
        Err(e) => return Err(e).context("minimality audit"),
    };
    Ok(VerifyReports {
        membership,
        infinity,
        pxlap,
        flux,
        interface,
        interface_fraction: cfg.interface_fraction,
        minimality,
    })
}

fn level_file(j: usize, k: f64) -> String {
    format!("u_level{j:02}_k{k}.csv")
}

fn write_failure(out: &Path, config: &RunConfig, err: &anyhow::Error) {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", crate::report::VERSION);
    let _ = writeln!(s, "error = {err:#}");
    let _ = writeln!(s, "[config]");
    for line in config.source.lines() {
        let _ = writeln!(s, "| {line}");
    }
    let _ = std::fs::create_dir_all(out);
    let _ = std::fs::write(out.join(FAILURE_FILE), s);
}

/// Continuation, limit extraction and the verification battery, without
/// writing anything.
pub fn solve_report(config: &RunConfig) -> Result<(RunReport, Vec<ScalarField>)> {
    let problem = config.problem().context("config")?;
    let mut timings = Vec::new();

    let t = Instant::now();
    let results = run_continuation(
        &problem.grid,
        &problem.p,
        &problem.g,
        &problem.schedule,
        &config.solver,
    )
    .context("continuation")?;
    timings.push(("continuation".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let limit = extract_limit(&results, &problem.schedule).context("limit extraction")?;
    let verify = verify_battery(config, &problem, &limit.u_inf)?;
    let bounds = uniform_bounds_monitor(
        &problem.grid,
        &results,
        &problem.p,
        2.0 * problem.p.p_minus(),
    )
    .ok();
    timings.push(("verify".to_string(), t.elapsed().as_secs_f64()));

    let levels = results
        .iter()
        .enumerate()
        .map(|(j, r)| LevelSummary {
            k: r.k,
            iterations: r.iterations,
            energy: r.energy,
            grad_norm_final: r.grad_norm_final,
            modular_bulk: r.modular_bulk,
            delta: j.checked_sub(1).map(|i| limit.deltas[i]),
            file: level_file(j, r.k),
        })
        .collect();
    let report = RunReport {
        command: "solve",
        config_path: config.path.display().to_string(),
        config_echo: config.source.clone(),
        grid: problem.grid.spec().resolution,
        h: problem.grid.h(),
        levels,
        limit: Some(LimitSummary {
            k_final: limit.k_final,
            stop_tol: limit.stop_tol,
            final_delta: *limit.deltas.last().expect("at least two levels"),
            cauchy_ok: limit.cauchy_ok,
        }),
        bounds,
        verify,
        field_file: LIMIT_FILE.to_string(),
        timings,
    };
    Ok((report, results.into_iter().map(|r| r.u).collect()))
}

/// Solves, verifies and writes per-level fields, `u_inf.csv` and the report
/// to `out`. On error only `failure.txt` is written.
pub fn cmd_solve(config: &RunConfig, out: &Path) -> Result<RunReport> {
    let (mut report, fields) = match solve_report(config) {
        Ok(r) => r,
        Err(e) => {
            write_failure(out, config, &e);
            return Err(e);
        }
    };
    let t = Instant::now();
    let problem = config.problem()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (level, u) in report.levels.iter().zip(&fields) {
        csvio::write_field(&out.join(&level.file), &problem.grid, u)?;
    }
    let last = fields.last().expect("at least two levels");
    csvio::write_field(&out.join(LIMIT_FILE), &problem.grid, last)?;
    report
        .timings
        .push(("write".to_string(), t.elapsed().as_secs_f64()));
    std::fs::write(out.join(REPORT_FILE), report.render())?;
    std::fs::write(out.join(TIMINGS_FILE), report.render_timings())?;
    Ok(report)
}

/// Runs the verification battery on a stored field.
pub fn cmd_verify(config: &RunConfig, field: &Path, out: Option<&Path>) -> Result<RunReport> {
    let problem = config.problem().context("config")?;
    let t = Instant::now();
    let u = csvio::read_field_on(field, &problem.grid)?;
    let verify = verify_battery(config, &problem, &u)?;
    let report = RunReport {
        command: "verify",
        config_path: config.path.display().to_string(),
        config_echo: config.source.clone(),
        grid: problem.grid.spec().resolution,
        h: problem.grid.h(),
        levels: Vec::new(),
        limit: None,
        bounds: None,
        verify,
        field_file: field.display().to_string(),
        timings: vec![("verify".to_string(), t.elapsed().as_secs_f64())],
    };
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(VERIFY_FILE), report.render())?;
    }
    Ok(report)
}

/// One refinement level of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub resolution: (usize, usize),
    pub h: f64,
    pub final_delta: f64,
    pub midrange_max: f64,
    pub direct_max: f64,
    pub pxlap_max: f64,
    pub pxlap_regular: f64,
    pub flux_max: f64,
    pub flux_regular: f64,
    pub interface_max: f64,
    pub interface_pass_fraction: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub requested: usize,
    pub warnings: Vec<String>,
}

impl SweepTable {
    /// Fitted order of a residual across all levels.
    pub fn order(&self, pick: impl Fn(&SweepRow) -> f64) -> Option<f64> {
        let hs: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let values: Vec<f64> = self.rows.iter().map(pick).collect();
        observed_order(&hs, &values)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", crate::report::VERSION);
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        let _ = writeln!(
            s,
            "nx,ny,h,final_delta,midrange_max,direct_max,pxlap_max,pxlap_regular,flux_max,flux_regular,interface_max,interface_pass_fraction,certified"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                r.resolution.0,
                r.resolution.1,
                r.h,
                r.final_delta,
                r.midrange_max,
                r.direct_max,
                r.pxlap_max,
                r.pxlap_regular,
                r.flux_max,
                r.flux_regular,
                r.interface_max,
                r.interface_pass_fraction,
                r.certified
            );
        }
        type Column = (&'static str, fn(&SweepRow) -> f64);
        let orders: [Column; 6] = [
            ("final_delta", |r| r.final_delta),
            ("midrange_max", |r| r.midrange_max),
            ("direct_max", |r| r.direct_max),
            ("pxlap_regular", |r| r.pxlap_regular),
            ("flux_max", |r| r.flux_max),
            ("flux_regular", |r| r.flux_regular),
        ];
        for (name, pick) in orders {
            let o = self
                .order(pick)
                .map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(s, "# order {name}: {o}");
        }
        s
    }
}

/// Solves and verifies at `levels` successive refinements of the configured
/// grid. Levels whose node count would exceed `max_nodes` are dropped with a
/// warning. Levels run concurrently on the current rayon pool.
pub fn cmd_sweep(config: &RunConfig, levels: usize, out: Option<&Path>) -> Result<SweepTable> {
    if levels < 2 {
        bail!("a sweep needs at least 2 levels, got {levels}");
    }
    let mut domains = vec![config.domain.clone()];
    let mut warnings = Vec::new();
    while domains.len() < levels {
        let next = domains.last().expect("nonempty").refined();
        let nodes = next.resolution.0 * next.resolution.1;
        if nodes > config.max_nodes {
            warnings.push(format!(
                "capped at {} of {levels} levels: the next grid has {nodes} nodes, above max_nodes = {}",
                domains.len(),
                config.max_nodes
            ));
            break;
        }
        domains.push(next);
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let rows: Vec<Result<SweepRow>> = domains
        .par_iter()
        .map(|domain| {
            let mut c = config.clone();
            c.domain = domain.clone();
            let res = domain.resolution;
            let (report, _) =
                solve_report(&c).with_context(|| format!("level {}x{}", res.0, res.1))?;
            let v = &report.verify;
            Ok(SweepRow {
                resolution: res,
                h: report.h,
                final_delta: report.limit.as_ref().map_or(f64::NAN, |l| l.final_delta),
                midrange_max: v.infinity.midrange.max,
                direct_max: v.infinity.direct.max,
                pxlap_max: v.pxlap.max,
                pxlap_regular: v.pxlap.regular_max,
                flux_max: v.flux.max,
                flux_regular: v.flux.regular_max,
                interface_max: v.interface.max,
                interface_pass_fraction: v.interface.pass_fraction,
                certified: report.certified(),
            })
        })
        .collect();
    let table = SweepTable {
        rows: rows.into_iter().collect::<Result<_>>()?,
        requested: levels,
        warnings,
    };
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(SWEEP_FILE), table.render())?;
    }
    Ok(table)
}

/// The stored report of a previous `solve` in `out`, with its timings.
pub fn cmd_report(out: &Path) -> Result<String> {
    let path: PathBuf = out.join(REPORT_FILE);
    let mut text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(t) = std::fs::read_to_string(out.join(TIMINGS_FILE)) {
        text.push_str("\n[timings]\n");
        text.push_str(&t);
    }
    Ok(text)
}
