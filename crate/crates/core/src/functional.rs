//! Modulars, Luxemburg norms and the discrete energies.
//!
//! Volume integrals are 2x2 Gauss sums over cells; each Gauss point carries a
//! quarter of the cell weight and the cell's exponent. The boundary integral
//! is a trapezoidal sum over the outer boundary nodes.

use alloc::vec::Vec;

use crate::domain::{Grid, GAUSS_POINTS};
use crate::error::Error;
use crate::exponent::{ExponentField, TruncatedExponent};
use crate::field::ScalarField;
use crate::math::{self, LOG_POWER_CAP};

/// Default relative tolerance of the boundary compatibility check.
pub const COMPAT_REL_TOL: f64 = 1e-10;

/// Relative bracket width at which the Luxemburg bisection stops.
const NORM_REL_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 200;

/// Point samples of a function with per-point exponents and weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadratureSamples {
    pub values: Vec<f64>,
    pub exponents: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        math::pairwise_sum(&self.weights)
    }
}

/// Values of the bilinear interpolant of `u` at the Gauss points of every
/// cell for which `exponent(cell)` is `Some`.
pub fn value_samples(
    grid: &Grid,
    u: &[f64],
    exponent: impl Fn(usize) -> Option<f64>,
) -> QuadratureSamples {
    sample_cells(grid, exponent, |cell, xi, eta| {
        let [a, b, c, d] = grid.cell_nodes(cell);
        (1.0 - xi) * (1.0 - eta) * u[a]
            + xi * (1.0 - eta) * u[b]
            + (1.0 - xi) * eta * u[c]
            + xi * eta * u[d]
    })
}

/// `|grad u|` at the Gauss points of every cell for which `exponent(cell)`
/// is `Some`.
pub fn gradient_samples(
    grid: &Grid,
    u: &[f64],
    exponent: impl Fn(usize) -> Option<f64>,
) -> QuadratureSamples {
    sample_cells(grid, exponent, |cell, xi, eta| {
        let [gx, gy] = grid.cell_gradient_at(u, cell, xi, eta);
        math::hypot(gx, gy)
    })
}

fn sample_cells(
    grid: &Grid,
    exponent: impl Fn(usize) -> Option<f64>,
    f: impl Fn(usize, f64, f64) -> f64,
) -> QuadratureSamples {
    let w = grid.cell_weight() / 4.0;
    let mut s = QuadratureSamples::default();
    for cell in 0..grid.cell_count() {
        if let Some(p) = exponent(cell) {
            for (xi, eta) in GAUSS_POINTS {
                s.values.push(f(cell, xi, eta));
                s.exponents.push(p);
                s.weights.push(w);
            }
        }
    }
    s
}

/// `sum w |f|^p` over the samples.
pub fn modular(samples: &QuadratureSamples) -> Result<f64, Error> {
    scaled_modular(samples, 1.0)
}

/// `sum w |f / lambda|^p` over the samples.
fn scaled_modular(samples: &QuadratureSamples, lambda: f64) -> Result<f64, Error> {
    let mut terms = Vec::with_capacity(samples.len());
    for (point, ((f, p), w)) in samples
        .values
        .iter()
        .zip(&samples.exponents)
        .zip(&samples.weights)
        .enumerate()
    {
        let t = math::abs_pow(f / lambda, *p).ok_or(Error::ModularOverflow { point })?;
        terms.push(w * t);
    }
    Ok(math::pairwise_sum(&terms))
}

/// Luxemburg norm `inf { lambda > 0 : modular(f / lambda) <= 1 }`.
///
/// Brackets the root by doubling or halving from 1 and bisects to a relative
/// width of `1e-10`. An overflowing modular counts as exceeding 1.
pub fn luxemburg_norm(samples: &QuadratureSamples) -> Result<f64, Error> {
    if samples.values.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let below_one = |lambda: f64| -> Result<bool, Error> {
        match scaled_modular(samples, lambda) {
            Ok(m) => Ok(m <= 1.0),
            Err(Error::ModularOverflow { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let (mut lo, mut hi);
    if below_one(1.0)? {
        hi = 1.0;
        lo = 0.5;
        let mut n = 0;
        while below_one(lo)? {
            hi = lo;
            lo *= 0.5;
            n += 1;
            if n > MAX_DOUBLINGS {
                return Err(Error::BracketFailure);
            }
        }
    } else {
        lo = 1.0;
        hi = 2.0;
        let mut n = 0;
        while !below_one(hi)? {
            lo = hi;
            hi *= 2.0;
            n += 1;
            if n > MAX_DOUBLINGS {
                return Err(Error::BracketFailure);
            }
        }
    }
    while hi - lo > NORM_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if below_one(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Boundary quadrature of `g`, zero for compatible Neumann data.
pub fn compatibility(grid: &Grid, g: &ScalarField) -> f64 {
    let terms: Vec<f64> = grid
        .boundary_weights()
        .iter()
        .zip(g.values())
        .map(|(w, v)| w * v)
        .collect();
    math::pairwise_sum(&terms)
}

/// Threshold below which [`compatibility`] counts as zero.
pub fn compatibility_tolerance(grid: &Grid, g: &ScalarField) -> f64 {
    COMPAT_REL_TOL * grid.perimeter() * (1.0 + boundary_max_abs(grid, g))
}

pub fn is_compatible(grid: &Grid, g: &ScalarField) -> bool {
    libm::fabs(compatibility(grid, g)) <= compatibility_tolerance(grid, g)
}

fn boundary_max_abs(grid: &Grid, g: &ScalarField) -> f64 {
    grid.boundary_weights()
        .iter()
        .zip(g.values())
        .filter(|(w, _)| **w > 0.0)
        .fold(0.0_f64, |m, (_, v)| m.max(libm::fabs(*v)))
}

/// Bulk, boundary and total energy, with `total = bulk - boundary`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub bulk: f64,
    pub boundary: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(bulk: f64, boundary: f64) -> Self {
        EnergyBreakdown {
            bulk,
            boundary,
            total: bulk - boundary,
        }
    }
}

/// `sum w g u` over the outer boundary.
pub fn boundary_term(grid: &Grid, u: &ScalarField, g: &ScalarField) -> f64 {
    let terms: Vec<f64> = grid
        .boundary_weights()
        .iter()
        .zip(g.values())
        .zip(u.values())
        .map(|((w, g), u)| w * g * u)
        .collect();
    math::pairwise_sum(&terms)
}

/// `sum_cells sum_q (w/4) |grad u|^p / p` over cells with `Some` exponent.
fn bulk_energy(
    grid: &Grid,
    u: &[f64],
    exponent: impl Fn(usize) -> Option<f64>,
) -> Result<f64, Error> {
    let wq = grid.cell_weight() / 4.0;
    let mut cells = Vec::with_capacity(grid.cell_count());
    for cell in 0..grid.cell_count() {
        let Some(p) = exponent(cell) else { continue };
        let mut acc = 0.0;
        for (q, (xi, eta)) in GAUSS_POINTS.iter().enumerate() {
            let [gx, gy] = grid.cell_gradient_at(u, cell, *xi, *eta);
            let t = math::sq_pow(gx * gx + gy * gy, p).ok_or(Error::ModularOverflow {
                point: 4 * cell + q,
            })?;
            acc += t / p;
        }
        cells.push(wq * acc);
    }
    Ok(math::pairwise_sum(&cells))
}

/// The truncated energy `I_k`.
pub fn energy_ik(
    grid: &Grid,
    u: &ScalarField,
    pk: &TruncatedExponent,
    g: &ScalarField,
) -> Result<EnergyBreakdown, Error> {
    let bulk = bulk_energy(grid, u.values(), |c| Some(pk.cell_exponent(c)))?;
    Ok(EnergyBreakdown::new(bulk, boundary_term(grid, u, g)))
}

/// The limit energy `I_inf`: the bulk sum skips the closed inner rectangle.
pub fn energy_iinf(
    grid: &Grid,
    u: &ScalarField,
    p: &ExponentField,
    g: &ScalarField,
) -> Result<EnergyBreakdown, Error> {
    let bulk = bulk_energy(grid, u.values(), |c| p.cell_exponent(c))?;
    Ok(EnergyBreakdown::new(bulk, boundary_term(grid, u, g)))
}

/// `sum w |grad u|^{p_k}` over all cells.
pub fn gradient_modular(
    grid: &Grid,
    u: &ScalarField,
    pk: &TruncatedExponent,
) -> Result<f64, Error> {
    modular(&gradient_samples(grid, u.values(), |c| {
        Some(pk.cell_exponent(c))
    }))
}

/// Shape-function derivatives of the four cell nodes at `(xi, eta)`.
fn shape_gradients(hx: f64, hy: f64, xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta) / hx, -(1.0 - xi) / hy],
        [(1.0 - eta) / hx, -xi / hy],
        [-eta / hx, (1.0 - xi) / hy],
        [eta / hx, xi / hy],
    ]
}

/// Exact derivative of [`energy_ik`] with respect to every nodal value.
///
/// Cells are scattered in index order so the result is reproducible.
pub fn energy_gradient(
    grid: &Grid,
    u: &ScalarField,
    pk: &TruncatedExponent,
    g: &ScalarField,
) -> Result<ScalarField, Error> {
    let (hx, hy) = grid.spacing();
    let wq = grid.cell_weight() / 4.0;
    let uv = u.values();
    let mut out: Vec<f64> = grid
        .boundary_weights()
        .iter()
        .zip(g.values())
        .map(|(w, g)| -w * g)
        .collect();
    let mut bulk = alloc::vec![0.0; grid.node_count()];
    for cell in 0..grid.cell_count() {
        let p = pk.cell_exponent(cell);
        let nodes = grid.cell_nodes(cell);
        let mut local = [0.0; 4];
        for (q, (xi, eta)) in GAUSS_POINTS.iter().enumerate() {
            let [gx, gy] = grid.cell_gradient_at(uv, cell, *xi, *eta);
            let a = gx * gx + gy * gy;
            if a == 0.0 {
                continue;
            }
            let coef = math::sq_pow(a, p - 2.0).ok_or(Error::ModularOverflow {
                point: 4 * cell + q,
            })?;
            for (l, [dx, dy]) in shape_gradients(hx, hy, *xi, *eta).iter().enumerate() {
                local[l] += coef * (gx * dx + gy * dy);
            }
        }
        for (l, n) in nodes.iter().enumerate() {
            bulk[*n] += wq * local[l];
        }
    }
    for (o, b) in out.iter_mut().zip(&bulk) {
        *o += b;
    }
    Ok(ScalarField::from_vec_unchecked(out))
}

/// Left minus right side of the weak Euler-Lagrange equation tested
/// against `v`.
pub fn weak_residual(
    grid: &Grid,
    u: &ScalarField,
    pk: &TruncatedExponent,
    g: &ScalarField,
    v: &ScalarField,
) -> Result<f64, Error> {
    let uv = u.values();
    let vv = v.values();
    let wq = grid.cell_weight() / 4.0;
    let mut cells = Vec::with_capacity(grid.cell_count());
    for cell in 0..grid.cell_count() {
        let p = pk.cell_exponent(cell);
        let mut acc = 0.0;
        for (q, (xi, eta)) in GAUSS_POINTS.iter().enumerate() {
            let [gx, gy] = grid.cell_gradient_at(uv, cell, *xi, *eta);
            let a = gx * gx + gy * gy;
            if a == 0.0 {
                continue;
            }
            let coef = math::sq_pow(a, p - 2.0).ok_or(Error::ModularOverflow {
                point: 4 * cell + q,
            })?;
            let [vx, vy] = grid.cell_gradient_at(vv, cell, *xi, *eta);
            acc += coef * (gx * vx + gy * vy);
        }
        cells.push(wq * acc);
    }
    Ok(math::pairwise_sum(&cells) - boundary_term(grid, v, g))
}

/// `I_k(u + t d) - I_k(u)` evaluated without subtracting two energies.
///
/// Per Gauss point the bulk change is `a^{p/2} expm1((p/2) log1p(delta/a)) / p`
/// with `a = |grad u|^2` and `delta = t grad d . (2 grad u + t grad d)`,
/// which keeps full relative accuracy when the step is tiny.
pub fn energy_change(
    grid: &Grid,
    u: &ScalarField,
    d: &ScalarField,
    t: f64,
    pk: &TruncatedExponent,
    g: &ScalarField,
) -> Result<f64, Error> {
    let uv = u.values();
    let dv = d.values();
    let wq = grid.cell_weight() / 4.0;
    let mut cells = Vec::with_capacity(grid.cell_count());
    for cell in 0..grid.cell_count() {
        let p = pk.cell_exponent(cell);
        let mut acc = 0.0;
        for (q, (xi, eta)) in GAUSS_POINTS.iter().enumerate() {
            let [gx, gy] = grid.cell_gradient_at(uv, cell, *xi, *eta);
            let [dx, dy] = grid.cell_gradient_at(dv, cell, *xi, *eta);
            let a = gx * gx + gy * gy;
            let delta = t * (dx * (2.0 * gx + t * dx) + dy * (2.0 * gy + t * dy));
            let overflow = Error::ModularOverflow {
                point: 4 * cell + q,
            };
            let b = a + delta;
            if b > 0.0 && 0.5 * p * libm::log(b) > LOG_POWER_CAP {
                return Err(overflow);
            }
            let change = if a == 0.0 {
                math::sq_pow(delta.max(0.0), p).ok_or(overflow)?
            } else if delta / a <= -1.0 {
                -math::sq_pow(a, p).ok_or(overflow)?
            } else {
                let base = math::sq_pow(a, p).ok_or(overflow)?;
                base * libm::expm1(0.5 * p * libm::log1p(delta / a))
            };
            acc += change / p;
        }
        cells.push(wq * acc);
    }
    let bulk = math::pairwise_sum(&cells);
    Ok(bulk - t * boundary_term(grid, d, g))
}
