//! Residual certificates for a candidate limit field.
//!
//! Every check is a pointwise residual of a consistent finite-difference
//! discretisation, reported per region. Tolerances are multiples of the grid
//! spacing so certification is a statement about refinement behaviour.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::domain::{
    boundary_gradient, cell_gradient, central_derivatives, normal_derivative, normal_set,
    ring_values, Grid, Region,
};
use crate::error::Error;
use crate::exponent::ExponentField;
use crate::field::ScalarField;
use crate::functional::{self, gradient_samples};
use crate::math;
use crate::solver::{project_mean_zero, SolveResult};

/// Tolerance multipliers and thresholds of the verification battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// Slack on the gradient bound in the inner region, times `h`.
    pub s_factor: f64,
    /// Midrange infinity-Laplacian residual tolerance, times `h`.
    pub midrange_factor: f64,
    /// Direct infinity-Laplacian residual tolerance, times `h`.
    pub direct_factor: f64,
    /// Expanded variable-exponent Laplacian residual tolerance, times `h`.
    pub pxlap_factor: f64,
    /// Neumann flux residual tolerance, times `h`.
    pub flux_factor: f64,
    /// Interface sign-condition tolerance, times `h`.
    pub interface_factor: f64,
    /// Nodes with `|grad u|` below this times the gradient scale are skipped
    /// by the expanded operator.
    pub singular_rel: f64,
    /// Radius around geometric corners, as a fraction of the shorter side
    /// of the domain, excluded from the `regular_max` statistic.
    pub corner_radius: f64,
    /// Fraction of interface nodes that must pass.
    pub interface_fraction: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            s_factor: 5.0,
            midrange_factor: 10.0,
            direct_factor: 10.0,
            pxlap_factor: 10.0,
            flux_factor: 5.0,
            interface_factor: 5.0,
            singular_rel: 1e-8,
            corner_radius: 0.125,
            interface_fraction: 0.95,
        }
    }
}

impl VerifyConfig {
    fn corner_radius(&self, grid: &Grid) -> f64 {
        let o = grid.spec().omega;
        self.corner_radius * o.width().min(o.height())
    }
}

/// Statistics of one residual over one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub name: &'static str,
    pub region: Region,
    /// Largest absolute residual over the counted nodes.
    pub max: f64,
    pub mean: f64,
    pub q95: f64,
    pub count: usize,
    /// Nodes of the region without a usable stencil or excluded as singular.
    pub skipped: usize,
    pub tolerance: f64,
    /// `max <= tolerance`.
    pub pass: bool,
    /// Fraction of counted nodes with residual within tolerance.
    pub pass_fraction: f64,
    /// Largest residual at nodes carrying two normals, which are kept out
    /// of the other statistics.
    pub corner_max: Option<f64>,
    /// Largest residual at nodes farther than the corner radius from every
    /// geometric corner.
    pub regular_max: f64,
    /// `(node, signed residual)` for every counted node.
    pub entries: Vec<(usize, f64)>,
}

impl ResidualReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        name: &'static str,
        region: Region,
        grid: &Grid,
        entries: Vec<(usize, f64)>,
        skipped: usize,
        tolerance: f64,
        corner_max: Option<f64>,
        corner_radius: f64,
    ) -> Self {
        let abs: Vec<f64> = entries.iter().map(|(_, r)| libm::fabs(*r)).collect();
        let max = abs.iter().fold(0.0_f64, |m, r| m.max(*r));
        let mean = if abs.is_empty() {
            0.0
        } else {
            math::pairwise_sum(&abs) / abs.len() as f64
        };
        let within = abs.iter().filter(|r| **r <= tolerance).count();
        let regular_max = entries
            .iter()
            .filter(|(n, _)| grid.distance_to_corner(*n) > corner_radius)
            .fold(0.0_f64, |m, (_, r)| m.max(libm::fabs(*r)));
        ResidualReport {
            name,
            region,
            max,
            mean,
            q95: math::quantile(&abs, 0.95),
            count: abs.len(),
            skipped,
            tolerance,
            pass: max <= tolerance,
            pass_fraction: if abs.is_empty() {
                1.0
            } else {
                within as f64 / abs.len() as f64
            },
            corner_max,
            regular_max,
            entries,
        }
    }
}

/// Membership of a field in the admissible set of the limit energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SMembership {
    /// Largest cell-centre `|grad u|` over inner cells.
    pub grad_sup_d: f64,
    /// Largest `|grad u|` over the Gauss points of inner cells.
    pub gauss_grad_sup_d: f64,
    pub mean_u: f64,
    /// `sum w |grad u|^p` outside the inner rectangle; infinite on overflow.
    pub modular_outer: f64,
    pub tol_s: f64,
    pub tol_mean: f64,
    pub pass: bool,
}

/// Largest gradient magnitude over the Gauss points of inner cells.
pub fn grad_sup_inner(grid: &Grid, u: &[f64]) -> f64 {
    let s = gradient_samples(grid, u, |c| grid.cell_in_inner(c).then_some(1.0));
    s.values.iter().fold(0.0_f64, |m, v| m.max(*v))
}

/// Largest cell-centre gradient magnitude over inner cells.
pub fn cell_grad_sup_inner(grid: &Grid, u: &ScalarField) -> f64 {
    (0..grid.cell_count())
        .filter(|c| grid.cell_in_inner(*c))
        .map(|c| {
            let [gx, gy] = cell_gradient(grid, u, c);
            math::hypot(gx, gy)
        })
        .fold(0.0_f64, f64::max)
}

pub fn check_membership_s(
    grid: &Grid,
    u: &ScalarField,
    p: &ExponentField,
    cfg: &VerifyConfig,
) -> SMembership {
    let grad_sup_d = cell_grad_sup_inner(grid, u);
    let gauss_grad_sup_d = grad_sup_inner(grid, u.values());
    let mean_u = u.mean(grid);
    let modular_outer =
        functional::modular(&gradient_samples(grid, u.values(), |c| p.cell_exponent(c)))
            .unwrap_or(f64::INFINITY);
    let tol_s = cfg.s_factor * grid.h();
    let tol_mean = 1e-10 * (1.0 + u.max_abs());
    SMembership {
        grad_sup_d,
        gauss_grad_sup_d,
        mean_u,
        modular_outer,
        tol_s,
        tol_mean,
        pass: grad_sup_d <= 1.0 + tol_s
            && libm::fabs(mean_u) <= tol_mean
            && modular_outer.is_finite(),
    }
}

/// The direct and midrange infinity-Laplacian residuals over inner nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InfinityResidual {
    /// `u_x^2 u_xx + 2 u_x u_y u_xy + u_y^2 u_yy` from central differences.
    pub direct: ResidualReport,
    /// `u - (max ring + min ring) / 2` over the eight neighbours.
    pub midrange: ResidualReport,
}

/// Infinity Laplacian of `u` at an interior node, from central differences.
pub fn infinity_laplacian(grid: &Grid, u: &[f64], node: usize) -> Option<f64> {
    let [ux, uy, uxx, uyy, uxy] = central_derivatives(grid, u, node)?;
    Some(ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy)
}

/// `u(x)` minus the midrange of its eight neighbours.
pub fn midrange_residual(grid: &Grid, u: &[f64], node: usize) -> Option<f64> {
    let ring = ring_values(grid, u, node)?;
    let (lo, hi) = ring
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    Some(u[node] - 0.5 * (lo + hi))
}

pub fn infinity_residual(grid: &Grid, u: &ScalarField, cfg: &VerifyConfig) -> InfinityResidual {
    let (mut direct, mut midrange, mut skipped) = (Vec::new(), Vec::new(), 0);
    for node in grid.nodes_in(Region::Inner) {
        match (
            infinity_laplacian(grid, u.values(), node),
            midrange_residual(grid, u.values(), node),
        ) {
            (Some(d), Some(m)) => {
                direct.push((node, d));
                midrange.push((node, m));
            }
            _ => skipped += 1,
        }
    }
    let h = grid.h();
    let radius = cfg.corner_radius(grid);
    InfinityResidual {
        direct: ResidualReport::build(
            "infinity_direct",
            Region::Inner,
            grid,
            direct,
            skipped,
            cfg.direct_factor * h,
            None,
            radius,
        ),
        midrange: ResidualReport::build(
            "infinity_midrange",
            Region::Inner,
            grid,
            midrange,
            skipped,
            cfg.midrange_factor * h,
            None,
            radius,
        ),
    }
}

/// Typical gradient size of a field: its range over the domain diameter.
fn gradient_scale(grid: &Grid, u: &ScalarField) -> f64 {
    u.spread() / grid.spec().omega.diameter()
}

/// Value of the expanded operator
/// `|Du|^{p-2} Lap u + (p-2)|Du|^{p-4} Lap_inf u + |Du|^{p-2} ln|Du| Du.Dp`
/// at a node, or `None` when the stencil is incomplete or `|Du|` is below
/// `singular`.
pub fn expanded_pxlap(
    grid: &Grid,
    u: &[f64],
    p: &ExponentField,
    node: usize,
    singular: f64,
) -> Option<f64> {
    let [ux, uy, uxx, uyy, uxy] = central_derivatives(grid, u, node)?;
    let s2 = ux * ux + uy * uy;
    let s = math::sqrt(s2);
    if !(s >= singular) || s == 0.0 {
        return None;
    }
    let pv = p.at(node);
    let [px, py] = p.gradient(grid, node);
    let lap = uxx + uyy;
    let linf = ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy;
    let w = math::sq_pow(s2, pv - 2.0).unwrap_or(f64::INFINITY);
    Some(w * (lap + (pv - 2.0) * linf / s2 + libm::log(s) * (ux * px + uy * py)))
}

/// Residual of the variable-exponent Laplacian over the outer bulk; entries
/// hold the operator value with the leading minus sign.
pub fn pxlap_residual(
    grid: &Grid,
    u: &ScalarField,
    p: &ExponentField,
    cfg: &VerifyConfig,
) -> ResidualReport {
    let singular = cfg.singular_rel * gradient_scale(grid, u);
    let (mut entries, mut skipped) = (Vec::new(), 0);
    for node in grid.nodes_in(Region::OuterBulk) {
        match expanded_pxlap(grid, u.values(), p, node, singular) {
            Some(v) => entries.push((node, -v)),
            None => skipped += 1,
        }
    }
    ResidualReport::build(
        "pxlap",
        Region::OuterBulk,
        grid,
        entries,
        skipped,
        cfg.pxlap_factor * grid.h(),
        None,
        cfg.corner_radius(grid),
    )
}

/// `|grad u|^{p-2} du/dnu - g` at a boundary node, largest over its normals.
fn flux_at(
    grid: &Grid,
    u: &ScalarField,
    p: &ExponentField,
    g: &ScalarField,
    node: usize,
) -> Option<f64> {
    let set = normal_set(grid, node).ok()?;
    let [gx, gy] = boundary_gradient(grid, u, node).ok()?;
    let w = math::sq_pow(gx * gx + gy * gy, p.at(node) - 2.0).unwrap_or(f64::INFINITY);
    let mut worst: Option<f64> = None;
    for nu in &set.normals {
        let dn = normal_derivative(grid, u, node, *nu).ok()?.value;
        let r = w * dn - g.values()[node];
        if worst.is_none_or(|m| libm::fabs(r) > libm::fabs(m)) {
            worst = Some(r);
        }
    }
    worst
}

/// Neumann flux residual over the outer boundary. Corner nodes are reported
/// only through `corner_max`.
pub fn flux_residual(
    grid: &Grid,
    u: &ScalarField,
    p: &ExponentField,
    g: &ScalarField,
    cfg: &VerifyConfig,
) -> ResidualReport {
    let (mut entries, mut skipped) = (Vec::new(), 0);
    let mut corner_max: Option<f64> = None;
    for node in grid.nodes_in(Region::OuterBoundary) {
        let corner = normal_set(grid, node).is_ok_and(|s| s.is_corner());
        match flux_at(grid, u, p, g, node) {
            Some(r) if corner => corner_max = Some(corner_max.unwrap_or(0.0).max(libm::fabs(r))),
            Some(r) => entries.push((node, r)),
            None => skipped += 1,
        }
    }
    ResidualReport::build(
        "flux",
        Region::OuterBoundary,
        grid,
        entries,
        skipped,
        cfg.flux_factor * grid.h(),
        corner_max,
        cfg.corner_radius(grid),
    )
}

/// `min(| |grad u| - 1 |, min over normals |du/dnu|)` with derivatives taken
/// from inside the inner rectangle.
pub fn interface_residual_at(grid: &Grid, u: &ScalarField, node: usize) -> Option<f64> {
    let set = normal_set(grid, node).ok()?;
    let [gx, gy] = boundary_gradient(grid, u, node).ok()?;
    let mut r = libm::fabs(math::hypot(gx, gy) - 1.0);
    for nu in &set.normals {
        r = r.min(libm::fabs(
            normal_derivative(grid, u, node, *nu).ok()?.value,
        ));
    }
    Some(r)
}

pub fn interface_sign_condition(
    grid: &Grid,
    u: &ScalarField,
    cfg: &VerifyConfig,
) -> ResidualReport {
    let (mut entries, mut skipped) = (Vec::new(), 0);
    for node in grid.nodes_in(Region::Interface) {
        match interface_residual_at(grid, u, node) {
            Some(r) => entries.push((node, r)),
            None => skipped += 1,
        }
    }
    ResidualReport::build(
        "interface",
        Region::Interface,
        grid,
        entries,
        skipped,
        cfg.interface_factor * grid.h(),
        None,
        cfg.corner_radius(grid),
    )
}

/// Monitors of the estimates that hold uniformly in the truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsMonitor {
    pub k_values: Vec<f64>,
    /// `sum w |grad u_k|^{p_k}` per level.
    pub modular_bulk: Vec<f64>,
    /// Relative spread of `modular_bulk` over the upper half of the levels.
    pub modular_variation: f64,
    pub modular_pass: bool,
    pub m: f64,
    /// `|grad u_k|_{L^m(D)}` per level.
    pub lm_norms: Vec<f64>,
    /// `2 |D|^{1/m}`.
    pub lm_bound: f64,
    /// First level at which the bound fails, if any.
    pub lm_first_violation: Option<f64>,
    /// The bound holds on the last three levels.
    pub lm_pass: bool,
    /// `1 - 2/p_minus`.
    pub holder_exponent: f64,
    /// Largest difference quotient over the sampled node pairs, per level.
    pub holder_seminorms: Vec<f64>,
    pub holder_variation: f64,
    pub holder_pass: bool,
    pub pairs: usize,
}

impl BoundsMonitor {
    pub fn pass(&self) -> bool {
        self.modular_pass && self.lm_pass && self.holder_pass
    }
}

/// Largest allowed relative spread of a plateaued sequence.
pub const PLATEAU_TOL: f64 = 0.1;
const MAX_HOLDER_PAIRS: usize = 100_000;
const TAIL: usize = 3;

/// `(max - min) / max` over the upper half of the sequence; 0 when all
/// entries vanish.
pub fn plateau_variation(values: &[f64]) -> f64 {
    let tail = &values[values.len() / 2..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    if tail.is_empty() || hi <= 0.0 {
        0.0
    } else {
        (hi - lo) / hi
    }
}

/// Nodes used for the Holder quotient: an even stride through the grid
/// giving at most `MAX_HOLDER_PAIRS` unordered pairs.
pub fn holder_nodes(grid: &Grid) -> Vec<usize> {
    let n = grid.node_count();
    let mut keep = n;
    while keep * (keep - 1) / 2 > MAX_HOLDER_PAIRS {
        keep -= 1;
    }
    (0..keep).map(|i| i * n / keep).collect()
}

pub fn holder_seminorm(grid: &Grid, u: &[f64], nodes: &[usize], alpha: f64) -> f64 {
    let mut best = 0.0_f64;
    for (a, &i) in nodes.iter().enumerate() {
        let [xi, yi] = grid.coords(i);
        for &j in &nodes[a + 1..] {
            let [xj, yj] = grid.coords(j);
            let dist = math::hypot(xi - xj, yi - yj);
            best = best.max(libm::fabs(u[i] - u[j]) / libm::pow(dist, alpha));
        }
    }
    best
}

/// `(sum over inner Gauss points of w |grad u|^m)^{1/m}`.
pub fn gradient_lm_norm_inner(grid: &Grid, u: &[f64], m: f64) -> f64 {
    let s = gradient_samples(grid, u, |c| grid.cell_in_inner(c).then_some(m));
    let terms: Vec<f64> = s
        .values
        .iter()
        .zip(&s.weights)
        .map(|(v, w)| w * libm::exp(m * libm::log(*v)))
        .collect();
    libm::pow(math::pairwise_sum(&terms), 1.0 / m)
}

pub fn uniform_bounds_monitor(
    grid: &Grid,
    results: &[SolveResult],
    p: &ExponentField,
    m: f64,
) -> Result<BoundsMonitor, Error> {
    if !(m > p.p_minus()) {
        return Err(Error::MTooSmall {
            m,
            p_minus: p.p_minus(),
        });
    }
    let k_values: Vec<f64> = results.iter().map(|r| r.k).collect();
    let modular_bulk: Vec<f64> = results.iter().map(|r| r.modular_bulk).collect();
    let modular_variation = plateau_variation(&modular_bulk);

    let lm_bound = 2.0 * libm::pow(grid.inner_area(), 1.0 / m);
    let lm_norms: Vec<f64> = results
        .iter()
        .map(|r| gradient_lm_norm_inner(grid, r.u.values(), m))
        .collect();
    let lm_first_violation = lm_norms
        .iter()
        .zip(&k_values)
        .find(|(n, _)| **n > lm_bound)
        .map(|(_, k)| *k);
    let lm_pass = lm_norms[lm_norms.len().saturating_sub(TAIL)..]
        .iter()
        .all(|n| *n <= lm_bound);

    let holder_exponent = 1.0 - 2.0 / p.p_minus();
    let nodes = holder_nodes(grid);
    let holder_seminorms: Vec<f64> = results
        .iter()
        .map(|r| holder_seminorm(grid, r.u.values(), &nodes, holder_exponent))
        .collect();
    let holder_variation = plateau_variation(&holder_seminorms);

    Ok(BoundsMonitor {
        k_values,
        modular_pass: modular_variation < PLATEAU_TOL,
        modular_bulk,
        modular_variation,
        m,
        lm_norms,
        lm_bound,
        lm_first_violation,
        lm_pass,
        holder_exponent,
        holder_pass: holder_variation < PLATEAU_TOL,
        holder_seminorms,
        holder_variation,
        pairs: nodes.len() * nodes.len().saturating_sub(1) / 2,
    })
}

/// Outcome of a randomised minimality audit.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub trials: usize,
    pub seed: u64,
    /// Limit energy of the audited field.
    pub energy: f64,
    /// Gradient cap on the inner region used for admissible perturbations.
    pub grad_cap: f64,
    /// Smallest `I_inf(v) - I_inf(u)` over the trials.
    pub min_margin: f64,
    pub tolerance: f64,
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - uniform01(rng);
    let u2 = uniform01(rng);
    math::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Compares the limit energy of `u_inf` with randomly perturbed admissible
/// fields.
///
/// Each trial adds a Gaussian bump with random centre, width and
/// log-uniform amplitude, projects to mean zero and shrinks the bump by
/// bisection until the inner gradient stays below
/// `max(1, grad_sup_d(u_inf))`.
pub fn minimality_spot_check(
    grid: &Grid,
    u_inf: &ScalarField,
    p: &ExponentField,
    g: &ScalarField,
    trials: usize,
    seed: u64,
) -> Result<MinimalityReport, Error> {
    let energy = functional::energy_iinf(grid, u_inf, p, g)?.total;
    let tolerance = 1e-8 * (1.0 + libm::fabs(energy));
    let grad_cap = grad_sup_inner(grid, u_inf.values()).max(1.0);
    let omega = grid.spec().omega;
    let scale = u_inf.spread().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_margin = f64::INFINITY;

    for trial in 0..trials {
        let cx = omega.x0 + omega.width() * uniform01(&mut rng);
        let cy = omega.y0 + omega.height() * uniform01(&mut rng);
        let radius = omega.diameter() * (0.05 + 0.45 * uniform01(&mut rng));
        let amplitude =
            scale * libm::pow(10.0, -6.0 + 5.0 * uniform01(&mut rng)) * standard_normal(&mut rng);
        let bump = ScalarField::from_fn(grid, |x, y| {
            let r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
            amplitude * libm::exp(-r2)
        });
        let bump = project_mean_zero(grid, &bump);
        let admissible = |t: f64| grad_sup_inner(grid, u_inf.axpy(t, &bump).values()) <= grad_cap;
        let mut t = 1.0;
        if !admissible(t) {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if admissible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t = lo;
        }
        let v = project_mean_zero(grid, &u_inf.axpy(t, &bump));
        let margin = match functional::energy_iinf(grid, &v, p, g) {
            Ok(e) => e.total - energy,
            Err(Error::ModularOverflow { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        min_margin = min_margin.min(margin);
        if -margin > tolerance {
            return Err(Error::MinimalityViolated {
                trial,
                excess: -margin,
                witness: Box::new(v),
            });
        }
    }
    Ok(MinimalityReport {
        trials,
        seed,
        energy,
        grad_cap,
        min_margin,
        tolerance,
    })
}
