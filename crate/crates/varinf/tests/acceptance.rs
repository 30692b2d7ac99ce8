//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The reference problem (unit square, inner square [0.25, 0.75]^2, p = 4,
//! g = x - 1/2, k = 8, 16, ..., 1024) is solved once at 65 x 65 through
//! `cmd_solve` and shared; the refinement study adds 33 x 33 and 129 x 129.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use oracle::{linear_oracle, newton_oracle, OracleGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varinf::commands::{cmd_solve, solve_report};
use varinf::config::{parse_config, parse_config_str, ConfigError, RunConfig, ValidationError};
use varinf::csvio;
use varinf::report::RunReport;
use varinf_core::functional::{self, energy_gradient, energy_ik, value_samples};
use varinf_core::math::observed_order;
use varinf_core::verify::cell_grad_sup_inner;
use varinf_core::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.cfg")
}

fn reference_config() -> RunConfig {
    parse_config(&reference_config_path()).expect("reference config")
}

struct ReferenceRun {
    dir: tempfile::TempDir,
    report: RunReport,
    fields: Vec<ScalarField>,
    grid: Grid,
    seconds: f64,
}

fn reference() -> &'static ReferenceRun {
    static RUN: OnceLock<ReferenceRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = reference_config();
        let dir = tempfile::tempdir().unwrap();
        let t = Instant::now();
        let report = cmd_solve(&config, dir.path()).expect("reference solve");
        let seconds = t.elapsed().as_secs_f64();
        let grid = config.problem().unwrap().grid;
        let fields = report
            .levels
            .iter()
            .map(|l| csvio::read_field_on(&dir.path().join(&l.file), &grid).unwrap())
            .collect();
        ReferenceRun {
            dir,
            report,
            fields,
            grid,
            seconds,
        }
    })
}

fn refined_level(n: usize) -> RunReport {
    let mut config = reference_config();
    config.domain.resolution = (n, n);
    solve_report(&config).expect("refinement solve").0
}

fn unit_grid(n: usize) -> Grid {
    build_grid(&DomainSpec::new(Rect::unit(), None, (n, n))).unwrap()
}

fn x_minus_half(grid: &Grid) -> ScalarField {
    FieldExpr::Affine {
        a: -0.5,
        b: 1.0,
        c: 0.0,
    }
    .sample(grid)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let n = 33;
    let grid = unit_grid(n);
    let pk = TruncatedExponent::uniform(&grid, 2.0);
    let res = minimize_ik(
        &grid,
        &pk,
        &x_minus_half(&grid),
        &ScalarField::zeros(&grid),
        &SolverConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let oracle = linear_oracle(&OracleGrid::unit(n), &|x, _| x - 0.5);
    let range = varinf_core::math::spread(&oracle);
    let err = sup_diff(res.u.values(), &oracle);
    let secs = t.elapsed().as_secs_f64();
    check(
        err <= 1e-8 * range && secs < 10.0,
        format!("sup error {err:.3e} vs {:.3e}, {secs:.2} s", 1e-8 * range),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let n = 9;
    let grid = unit_grid(n);
    let pk = TruncatedExponent::uniform(&grid, 4.0);
    let res = minimize_ik(
        &grid,
        &pk,
        &x_minus_half(&grid),
        &ScalarField::zeros(&grid),
        &SolverConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let (oracle, resid) = newton_oracle(&OracleGrid::unit(n), 4.0, &|x, _| x - 0.5);
    let err = sup_diff(res.u.values(), &oracle);
    let secs = t.elapsed().as_secs_f64();
    check(
        err <= 1e-6 && resid < 1e-12 && secs < 30.0,
        format!("sup error {err:.3e} (Newton residual {resid:.1e}), {secs:.2} s"),
    )
}

fn small_problem() -> (Grid, ExponentField) {
    let d = Rect::new(0.25, 0.75, 0.25, 0.75).unwrap();
    let grid = build_grid(&DomainSpec::new(Rect::unit(), Some(d), (9, 9))).unwrap();
    let p = ExponentField::validate(
        ExponentSpec::Affine {
            a: 2.5,
            b: 1.5,
            c: 0.5,
        },
        &grid,
    )
    .unwrap();
    (grid, p)
}

fn random_field(rng: &mut ChaCha8Rng, grid: &Grid, scale: f64) -> ScalarField {
    let v = (0..grid.node_count())
        .map(|_| scale * rng.gen_range(-1.0..1.0))
        .collect();
    ScalarField::new(grid, v).unwrap()
}

fn criterion_3() -> Outcome {
    let (grid, p) = small_problem();
    let pk = p.truncate(8.0).unwrap();
    let g = x_minus_half(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_fd = 0.0_f64;
    for _ in 0..200 {
        // a random affine field plus noise of size h keeps |grad u| = O(1);
        // independent O(1) nodal noise makes the energy so large that the
        // central difference itself loses all accuracy to cancellation
        let (a, b, c) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let noise = random_field(&mut rng, &grid, grid.h());
        let u = ScalarField::from_fn(&grid, |x, y| a + b * x + c * y).axpy(1.0, &noise);
        let grad = energy_gradient(&grid, &u, &pk, &g).map_err(|e| e.to_string())?;
        let step = 1e-6 * u.spread();
        for node in 0..grid.node_count() {
            let mut plus = u.clone();
            plus.values_mut()[node] += step;
            let mut minus = u.clone();
            minus.values_mut()[node] -= step;
            let fd = (energy_ik(&grid, &plus, &pk, &g).unwrap().total
                - energy_ik(&grid, &minus, &pk, &g).unwrap().total)
                / (2.0 * step);
            let an = grad.values()[node];
            worst_fd = worst_fd.max((fd - an).abs() / (1.0 + an.abs()));
        }
    }
    let mut worst_convex = f64::NEG_INFINITY;
    for _ in 0..200 {
        let u = random_field(&mut rng, &grid, 1.0);
        let v = random_field(&mut rng, &grid, 1.0);
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let mix = ScalarField::new(
            &grid,
            u.values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        )
        .unwrap();
        let eu = energy_ik(&grid, &u, &pk, &g).unwrap().total;
        let ev = energy_ik(&grid, &v, &pk, &g).unwrap().total;
        let em = energy_ik(&grid, &mix, &pk, &g).unwrap().total;
        let scale = 1.0 + eu.abs() + ev.abs();
        worst_convex = worst_convex.max((em - lambda * eu - (1.0 - lambda) * ev) / scale);
    }
    check(
        worst_fd < 1e-6 && worst_convex <= 1e-12,
        format!(
            "max relative FD gap {worst_fd:.2e}, max scaled convexity excess {worst_convex:.2e}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let (grid, p) = small_problem();
    let pk = p.truncate(6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sandwich_bad = 0;
    let mut holder_worst = 0.0_f64;
    for _ in 0..500 {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let f = random_field(&mut rng, &grid, scale);
        let s = value_samples(&grid, f.values(), |c| Some(pk.cell_exponent(c)));
        let (lo, hi) = varinf_core::exponent::extrema(&s.exponents);
        let norm = functional::luxemburg_norm(&s).map_err(|e| e.to_string())?;
        let rho = functional::modular(&s).map_err(|e| e.to_string())?;
        let slack = 1e-8 * rho;
        let ok = if norm > 1.0 {
            norm.powf(lo) <= rho + slack && rho <= norm.powf(hi) + slack
        } else {
            norm.powf(hi) <= rho + slack && rho <= norm.powf(lo) + slack
        };
        sandwich_bad += usize::from(!ok);
    }
    for _ in 0..500 {
        let u = random_field(&mut rng, &grid, 1.0);
        let v = random_field(&mut rng, &grid, 1.0);
        let su = value_samples(&grid, u.values(), |c| Some(pk.cell_exponent(c)));
        let mut sv = value_samples(&grid, v.values(), |c| Some(pk.cell_exponent(c)));
        sv.exponents = sv.exponents.iter().map(|p| conjugate(*p)).collect();
        let lhs: f64 = su
            .values
            .iter()
            .zip(&sv.values)
            .zip(&su.weights)
            .map(|((a, b), w)| w * (a * b).abs())
            .sum();
        let rhs = 2.0
            * functional::luxemburg_norm(&su).unwrap()
            * functional::luxemburg_norm(&sv).unwrap();
        holder_worst = holder_worst.max(lhs / rhs);
    }
    let mut classical_worst = 0.0_f64;
    for q in [2.5, 3.0, 4.0, 7.5] {
        let f = random_field(&mut rng, &grid, 3.0);
        let s = value_samples(&grid, f.values(), |_| Some(q));
        let lux = functional::luxemburg_norm(&s).unwrap();
        let integral: f64 = s
            .values
            .iter()
            .zip(&s.weights)
            .map(|(v, w)| w * v.abs().powf(q))
            .sum();
        let classical = integral.powf(1.0 / q);
        classical_worst = classical_worst.max((lux - classical).abs() / classical);
    }
    check(
        sandwich_bad == 0 && holder_worst <= 1.0 + 1e-9 && classical_worst <= 1e-9,
        format!(
            "sandwich violations {sandwich_bad}/500, max Holder ratio {holder_worst:.4}, constant-p norm gap {classical_worst:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let run = reference();
    let h = run.grid.h();
    let sups: Vec<f64> = run
        .fields
        .iter()
        .map(|u| cell_grad_sup_inner(&run.grid, u))
        .collect();
    let last3 = &sups[sups.len() - 3..];
    let excess: Vec<f64> = last3.iter().map(|s| (s - 1.0).max(0.0)).collect();
    let final_ok = *last3.last().unwrap() <= 1.0 + 5.0 * h;
    let monotone = excess.windows(2).all(|w| w[1] <= w[0]);
    check(
        final_ok && monotone && run.seconds < 300.0,
        format!(
            "cell gradient sup over D at last three k: {:.5} {:.5} {:.5} (bound {:.4}), reference run {:.1} s",
            last3[0],
            last3[1],
            last3[2],
            1.0 + 5.0 * h,
            run.seconds
        ),
    )
}

fn criterion_6() -> Outcome {
    let run = reference();
    let deltas: Vec<f64> = run.report.levels.iter().filter_map(|l| l.delta).collect();
    let monotone = deltas[1..].windows(2).all(|w| w[1] <= w[0]);
    let range = run.fields.last().unwrap().spread();
    let last = *deltas.last().unwrap();
    let shown: Vec<String> = deltas.iter().map(|d| format!("{d:.2e}")).collect();
    check(
        monotone && last <= 1e-4 * range,
        format!(
            "deltas {}; final {last:.3e} vs 1e-4 * range = {:.3e}",
            shown.join(" "),
            1e-4 * range
        ),
    )
}

fn criterion_7() -> Outcome {
    let run = reference();
    let b = run.report.bounds.as_ref().ok_or("no bounds monitor")?;
    let lm: Vec<String> = b.lm_norms[b.lm_norms.len() - 3..]
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect();
    check(
        b.modular_pass && b.lm_pass && b.holder_pass && b.m == 8.0,
        format!(
            "modular variation {:.2e}, L^{} norms {} vs {:.4}, Holder variation {:.2e}",
            b.modular_variation,
            b.m,
            lm.join(" "),
            b.lm_bound,
            b.holder_variation
        ),
    )
}

struct Refinement {
    coarse: RunReport,
    fine: RunReport,
}

fn refinement_reports() -> &'static Refinement {
    static REF: OnceLock<Refinement> = OnceLock::new();
    REF.get_or_init(|| {
        let fine = std::thread::spawn(|| refined_level(129));
        let coarse = refined_level(33);
        Refinement {
            coarse,
            fine: fine.join().expect("fine level"),
        }
    })
}

fn levels() -> [&'static RunReport; 3] {
    let r = refinement_reports();
    [&r.coarse, &reference().report, &r.fine]
}

fn order_of(pick: impl Fn(&RunReport) -> f64) -> (Vec<f64>, Option<f64>) {
    let lv = levels();
    let hs: Vec<f64> = lv.iter().map(|r| r.h).collect();
    let vals: Vec<f64> = lv.iter().map(|r| pick(r)).collect();
    let order = observed_order(&hs, &vals);
    (vals, order)
}

fn fmt_series(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_8() -> Outcome {
    let run = reference();
    let mid = &run.report.verify.infinity.midrange;
    let (vals, order) = order_of(|r| r.verify.infinity.midrange.max);
    let order = order.unwrap_or(f64::NAN);
    check(
        mid.max <= 10.0 * run.grid.h() && order >= 0.8,
        format!(
            "midrange max at 33/65/129: {} (65: bound {:.3e}), order {order:.2}",
            fmt_series(&vals),
            10.0 * run.grid.h()
        ),
    )
}

fn criterion_9() -> Outcome {
    let (pxlap, pxlap_order) = order_of(|r| r.verify.pxlap.max);
    let (flux, flux_order) = order_of(|r| r.verify.flux.max);
    let (pxlap_reg, pxlap_reg_order) = order_of(|r| r.verify.pxlap.regular_max);
    let (flux_reg, flux_reg_order) = order_of(|r| r.verify.flux.regular_max);
    let finest = levels()[2];
    let iface = &finest.verify.interface;
    let po = pxlap_order.unwrap_or(f64::NAN);
    let fo = flux_order.unwrap_or(f64::NAN);
    let ok = po >= 0.8 && fo >= 0.8 && iface.pass_fraction >= 0.95;
    check(
        ok,
        format!(
            "pxlap max {} order {po:.2}; flux max {} order {fo:.2}; away from corners pxlap {} order {:.2}, flux {} order {:.2}; interface pass fraction {:.3} at 129",
            fmt_series(&pxlap),
            fmt_series(&flux),
            fmt_series(&pxlap_reg),
            pxlap_reg_order.unwrap_or(f64::NAN),
            fmt_series(&flux_reg),
            flux_reg_order.unwrap_or(f64::NAN),
            iface.pass_fraction
        ),
    )
}

fn criterion_10() -> Outcome {
    let run = reference();
    match &run.report.verify.minimality {
        varinf::report::MinimalityOutcome::Passed(r) => check(
            r.trials == 100,
            format!(
                "{} trials, smallest margin {:.2e} vs tolerance {:.2e}",
                r.trials, r.min_margin, r.tolerance
            ),
        ),
        varinf::report::MinimalityOutcome::Violated { trial, excess } => Err(format!(
            "trial {trial} lowered the limit energy by {excess:.3e}"
        )),
    }
}

fn criterion_11() -> Outcome {
    let base = std::fs::read_to_string(reference_config_path()).unwrap();
    let mut rejected = Vec::new();
    for g in [
        "const 1",
        "affine 0 1 0",
        "quadratic 0 0 0 1 0 0",
        "affine -0.5 1 1e-3",
    ] {
        let text = base.replace("g = affine -0.5 1 0", &format!("g = {g}"));
        assert_ne!(text, base);
        let t = Instant::now();
        match parse_config_str(&reference_config_path(), &text) {
            Err(ConfigError::Validation(ValidationError::Compatibility { integral, .. })) => {
                rejected.push(format!(
                    "`{g}` ({integral:.3e}, {:.0} ms)",
                    t.elapsed().as_secs_f64() * 1e3
                ))
            }
            other => return Err(format!("`{g}` was not rejected: {:?}", other.map(|_| ()))),
        }
    }
    Ok(format!("rejected before solving: {}", rejected.join(", ")))
}

fn criterion_12() -> Outcome {
    let run = reference();
    let config = reference_config();
    let dir = tempfile::tempdir().unwrap();
    let again = cmd_solve(&config, dir.path()).map_err(|e| format!("{e:#}"))?;
    let mut files: Vec<String> = again.levels.iter().map(|l| l.file.clone()).collect();
    files.push("u_inf.csv".into());
    files.push("report.txt".into());
    let mut differing = Vec::new();
    for f in &files {
        let a = std::fs::read(run.dir.path().join(f)).unwrap();
        let b = std::fs::read(dir.path().join(f)).unwrap();
        if a != b {
            differing.push(f.clone());
        }
    }
    check(
        differing.is_empty(),
        format!("{} files compared, differing: {:?}", files.len(), differing),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("oracle equivalence, linear case", criterion_1),
        ("oracle equivalence, quartic case", criterion_2),
        ("energy gradient and convexity", criterion_3),
        ("modular/norm inequalities", criterion_4),
        ("inner gradient bound", criterion_5),
        ("uniform convergence in k", criterion_6),
        ("uniform estimates", criterion_7),
        ("infinity-harmonicity in D", criterion_8),
        ("limit system residuals", criterion_9),
        ("minimality audit", criterion_10),
        ("compatibility rejection", criterion_11),
        ("determinism", criterion_12),
    ];
    // criterion numbers on the command line select a subset
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    // the refinement levels are independent of the reference run; start them now
    let background = (wanted(8) || wanted(9)).then(|| {
        std::thread::spawn(|| {
            refinement_reports();
        })
    });
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted(n) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                println!("FAIL criterion {n:>2} {name}: {detail} [{secs:.1} s]");
                failed.push(n);
            }
        }
    }
    if let Some(b) = background {
        let _ = b.join();
    }
    if failed.is_empty() {
        println!("acceptance: {ran} criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
