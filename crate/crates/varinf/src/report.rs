//! Run reports: a deterministic `key = value` text with sections.
//!
//! Wall-clock timings are kept out of `report.txt` so that two runs of the
//! same config produce identical reports; they are written to
//! `timings.txt` next to it.

use std::fmt::Write as _;

use varinf_core::verify::{
    BoundsMonitor, InfinityResidual, MinimalityReport, ResidualReport, SMembership,
};
use varinf_core::EnergyBreakdown;

pub const VERSION: &str = concat!("varinf ", env!("CARGO_PKG_VERSION"));

/// Summary of one truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub k: f64,
    pub iterations: usize,
    pub energy: EnergyBreakdown,
    pub grad_norm_final: f64,
    pub modular_bulk: f64,
    /// Sup distance to the previous level.
    pub delta: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSummary {
    pub k_final: f64,
    pub stop_tol: f64,
    pub final_delta: f64,
    pub cauchy_ok: bool,
}

/// Outcome of the randomized minimality audit.
#[derive(Debug, Clone, PartialEq)]
pub enum MinimalityOutcome {
    Passed(MinimalityReport),
    Violated { trial: usize, excess: f64 },
}

impl MinimalityOutcome {
    pub fn pass(&self) -> bool {
        matches!(self, MinimalityOutcome::Passed(_))
    }
}

/// Everything the verification battery computes for one field.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReports {
    pub membership: SMembership,
    pub infinity: InfinityResidual,
    pub pxlap: ResidualReport,
    pub flux: ResidualReport,
    pub interface: ResidualReport,
    pub interface_fraction: f64,
    pub minimality: MinimalityOutcome,
}

impl VerifyReports {
    /// The expanded operator is certified away from the corners, where the
    /// limit is not smooth.
    pub fn pxlap_pass(&self) -> bool {
        self.pxlap.regular_max <= self.pxlap.tolerance
    }

    pub fn interface_pass(&self) -> bool {
        self.interface.pass_fraction >= self.interface_fraction
    }

    /// Named pass/fail results that make up the certificate. The
    /// minimality audit is reported separately: at finite `k` the inner
    /// gradient constraint is only approximately active, so the audit can
    /// find admissible fields that are lower by more than its tolerance.
    pub fn checks(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("s_membership", self.membership.pass),
            ("midrange", self.infinity.midrange.pass),
            ("pxlap_regular", self.pxlap_pass()),
            ("flux", self.flux.pass),
            ("interface", self.interface_pass()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: &'static str,
    pub config_path: String,
    pub config_echo: String,
    pub grid: (usize, usize),
    pub h: f64,
    pub levels: Vec<LevelSummary>,
    pub limit: Option<LimitSummary>,
    pub bounds: Option<BoundsMonitor>,
    pub verify: VerifyReports,
    pub field_file: String,
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    /// All checks of the certificate, including the Cauchy test when a
    /// continuation was run.
    pub fn checks(&self) -> Vec<(&'static str, bool)> {
        let mut out = Vec::new();
        if let Some(l) = &self.limit {
            out.push(("cauchy", l.cauchy_ok));
        }
        out.extend(self.verify.checks());
        out
    }

    pub fn certified(&self) -> bool {
        self.checks().iter().all(|(_, ok)| *ok)
    }

    /// The report without timings.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "# {VERSION}");
        let _ = writeln!(w, "[run]");
        let _ = writeln!(w, "command = {}", self.command);
        let _ = writeln!(w, "version = {VERSION}");
        let _ = writeln!(w, "config = {}", self.config_path);
        let _ = writeln!(w, "grid = {} {}", self.grid.0, self.grid.1);
        let _ = writeln!(w, "h = {:e}", self.h);
        let _ = writeln!(w, "field = {}", self.field_file);
        let _ = writeln!(w, "certified = {}", self.certified());
        let _ = writeln!(w);

        let _ = writeln!(w, "[certificate]");
        for (name, ok) in self.checks() {
            let _ = writeln!(w, "{name} = {}", if ok { "pass" } else { "FAIL" });
        }
        let audit = if self.verify.minimality.pass() {
            "pass"
        } else {
            "FAIL"
        };
        let _ = writeln!(w, "# not part of the certificate");
        let _ = writeln!(w, "minimality_audit = {audit}");
        let _ = writeln!(w);

        if !self.levels.is_empty() {
            let _ = writeln!(w, "[levels]");
            let _ = writeln!(
                w,
                "# k iterations energy bulk boundary grad_norm modular_bulk delta file"
            );
            for l in &self.levels {
                let delta = l.delta.map_or("-".to_string(), |d| format!("{d:e}"));
                let _ = writeln!(
                    w,
                    "level = {} {} {:e} {:e} {:e} {:e} {:e} {} {}",
                    l.k,
                    l.iterations,
                    l.energy.total,
                    l.energy.bulk,
                    l.energy.boundary,
                    l.grad_norm_final,
                    l.modular_bulk,
                    delta,
                    l.file
                );
            }
            let _ = writeln!(w);
        }

        if let Some(l) = &self.limit {
            let _ = writeln!(w, "[limit]");
            let _ = writeln!(w, "k_final = {}", l.k_final);
            let _ = writeln!(w, "final_delta = {:e}", l.final_delta);
            let _ = writeln!(w, "stop_tol = {:e}", l.stop_tol);
            let _ = writeln!(w, "cauchy_ok = {}", l.cauchy_ok);
            let _ = writeln!(w);
        }

        let m = &self.verify.membership;
        let _ = writeln!(w, "[s_membership]");
        let _ = writeln!(w, "grad_sup_inner = {:e}", m.grad_sup_d);
        let _ = writeln!(w, "gauss_grad_sup_inner = {:e}", m.gauss_grad_sup_d);
        let _ = writeln!(w, "gradient_tolerance = {:e}", m.tol_s);
        let _ = writeln!(w, "mean = {:e}", m.mean_u);
        let _ = writeln!(w, "mean_tolerance = {:e}", m.tol_mean);
        let _ = writeln!(w, "modular_outer = {:e}", m.modular_outer);
        let _ = writeln!(w, "pass = {}", m.pass);
        let _ = writeln!(w);

        for r in [
            &self.verify.infinity.midrange,
            &self.verify.infinity.direct,
            &self.verify.pxlap,
            &self.verify.flux,
            &self.verify.interface,
        ] {
            write_residual(w, r);
        }

        if let Some(b) = &self.bounds {
            let _ = writeln!(w, "[uniform_bounds]");
            let _ = writeln!(w, "modular_bulk = {}", join(&b.modular_bulk));
            let _ = writeln!(w, "modular_variation = {:e}", b.modular_variation);
            let _ = writeln!(w, "modular_pass = {}", b.modular_pass);
            let _ = writeln!(w, "m = {}", b.m);
            let _ = writeln!(w, "lm_norms = {}", join(&b.lm_norms));
            let _ = writeln!(w, "lm_bound = {:e}", b.lm_bound);
            let first = b
                .lm_first_violation
                .map_or("none".to_string(), |k| k.to_string());
            let _ = writeln!(w, "lm_first_violation_k = {first}");
            let _ = writeln!(w, "lm_pass = {}", b.lm_pass);
            let _ = writeln!(w, "holder_exponent = {}", b.holder_exponent);
            let _ = writeln!(w, "holder_seminorms = {}", join(&b.holder_seminorms));
            let _ = writeln!(w, "holder_variation = {:e}", b.holder_variation);
            let _ = writeln!(w, "holder_pass = {}", b.holder_pass);
            let _ = writeln!(w, "holder_pairs = {}", b.pairs);
            let _ = writeln!(w);
        }

        let _ = writeln!(w, "[minimality]");
        match &self.verify.minimality {
            MinimalityOutcome::Passed(r) => {
                let _ = writeln!(w, "trials = {}", r.trials);
                let _ = writeln!(w, "seed = {}", r.seed);
                let _ = writeln!(w, "energy = {:e}", r.energy);
                let _ = writeln!(w, "grad_cap = {:e}", r.grad_cap);
                let _ = writeln!(w, "min_margin = {:e}", r.min_margin);
                let _ = writeln!(w, "tolerance = {:e}", r.tolerance);
                let _ = writeln!(w, "pass = true");
            }
            MinimalityOutcome::Violated { trial, excess } => {
                let _ = writeln!(w, "violated_at_trial = {trial}");
                let _ = writeln!(w, "excess = {excess:e}");
                let _ = writeln!(w, "pass = false");
            }
        }
        let _ = writeln!(w);

        let _ = writeln!(w, "[config]");
        for line in self.config_echo.lines() {
            let _ = writeln!(w, "| {line}");
        }
        s
    }

    pub fn render_timings(&self) -> String {
        let mut s = String::new();
        for (name, secs) in &self.timings {
            let _ = writeln!(s, "{name} = {secs:.3}");
        }
        s
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_residual(w: &mut String, r: &ResidualReport) {
    let _ = writeln!(w, "[residual.{}]", r.name);
    let _ = writeln!(w, "region = {}", r.region.name());
    let _ = writeln!(w, "max = {:e}", r.max);
    let _ = writeln!(w, "mean = {:e}", r.mean);
    let _ = writeln!(w, "q95 = {:e}", r.q95);
    let _ = writeln!(w, "regular_max = {:e}", r.regular_max);
    if let Some(c) = r.corner_max {
        let _ = writeln!(w, "corner_max = {c:e}");
    }
    let _ = writeln!(w, "count = {}", r.count);
    let _ = writeln!(w, "skipped = {}", r.skipped);
    let _ = writeln!(w, "tolerance = {:e}", r.tolerance);
    let _ = writeln!(w, "pass_fraction = {}", r.pass_fraction);
    let _ = writeln!(w, "pass = {}", r.pass);
    let _ = writeln!(w);
}

/// Reads the `certified` flag back from a rendered report.
pub fn certified_flag(text: &str) -> Option<bool> {
    text.lines()
        .find_map(|l| l.strip_prefix("certified = "))
        .and_then(|v| v.trim().parse().ok())
}
