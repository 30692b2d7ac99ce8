//! The variable exponent and its truncations.
//!
//! The exponent is finite on every node outside the open inner rectangle and
//! infinite inside it. Truncating at level `k > p_plus` leaves the finite part
//! untouched and replaces the infinite part by `k`.

use alloc::vec::Vec;

use crate::domain::{Grid, Region};
use crate::error::Error;
use crate::Vec2;

/// Dimension of the ambient space; the infimum of the exponent must exceed it.
pub const DIMENSION: f64 = 2.0;

/// How the finite part of the exponent is given.
#[derive(Debug, Clone, PartialEq)]
pub enum ExponentSpec {
    Constant(f64),
    /// `a + b x + c y`
    Affine {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Node-ordered values; entries on inner nodes are ignored.
    Table(Vec<f64>),
}

/// Validated exponent on a grid. Inner nodes hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    spec: ExponentSpec,
    values: Vec<f64>,
    cell_values: Vec<Option<f64>>,
    p_minus: f64,
    p_plus: f64,
}

impl ExponentField {
    /// Checks the exponent against the grid and caches its extrema.
    pub fn validate(spec: ExponentSpec, grid: &Grid) -> Result<Self, Error> {
        let n = grid.node_count();
        if let ExponentSpec::Table(t) = &spec {
            if t.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: n,
                    found: t.len(),
                });
            }
        }
        let mut values = Vec::with_capacity(n);
        let (mut p_minus, mut p_plus) = (f64::INFINITY, f64::NEG_INFINITY);
        for node in 0..n {
            if grid.label(node) == Region::Inner {
                values.push(f64::INFINITY);
                continue;
            }
            let [x, y] = grid.coords(node);
            let p = match &spec {
                ExponentSpec::Constant(v) => *v,
                ExponentSpec::Affine { a, b, c } => a + b * x + c * y,
                ExponentSpec::Table(t) => t[node],
            };
            if !p.is_finite() {
                return Err(Error::PNotFinite { node });
            }
            p_minus = p_minus.min(p);
            p_plus = p_plus.max(p);
            values.push(p);
        }
        if !(p_minus > DIMENSION) {
            return Err(Error::PMinusTooSmall { p_minus });
        }
        let cell_values = (0..grid.cell_count())
            .map(|c| {
                if grid.cell_in_inner(c) {
                    None
                } else {
                    let nodes = grid.cell_nodes(c);
                    Some(nodes.iter().map(|n| values[*n]).sum::<f64>() / 4.0)
                }
            })
            .collect();
        Ok(ExponentField {
            spec,
            values,
            cell_values,
            p_minus,
            p_plus,
        })
    }

    pub fn spec(&self) -> &ExponentSpec {
        &self.spec
    }

    /// Per-node exponent; `INFINITY` on inner nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    /// Exponent at the quadrature points of a cell outside the inner
    /// rectangle (average of its four nodes); `None` for inner cells.
    pub fn cell_exponent(&self, cell: usize) -> Option<f64> {
        self.cell_values[cell]
    }

    /// Gradient of the finite exponent at a non-inner node.
    ///
    /// Closed forms are differentiated exactly. Tables use central
    /// differences where both neighbours carry finite values, one-sided
    /// differences otherwise.
    pub fn gradient(&self, grid: &Grid, node: usize) -> Vec2 {
        match &self.spec {
            ExponentSpec::Constant(_) => [0.0, 0.0],
            ExponentSpec::Affine { b, c, .. } => [*b, *c],
            ExponentSpec::Table(_) => {
                let (i, j) = grid.node_ij(node);
                let (hx, hy) = grid.spacing();
                let fin = |ii: i64, jj: i64| -> Option<f64> {
                    if ii < 0 || jj < 0 || ii >= grid.nx() as i64 || jj >= grid.ny() as i64 {
                        return None;
                    }
                    let v = self.values[grid.node_index(ii as usize, jj as usize)];
                    v.is_finite().then_some(v)
                };
                let (i, j) = (i as i64, j as i64);
                let c = self.values[grid.node_index(i as usize, j as usize)];
                let diff = |lo: Option<f64>, hi: Option<f64>, h: f64| match (lo, hi) {
                    (Some(a), Some(b)) => (b - a) / (2.0 * h),
                    (None, Some(b)) => (b - c) / h,
                    (Some(a), None) => (c - a) / h,
                    (None, None) => 0.0,
                };
                [
                    diff(fin(i - 1, j), fin(i + 1, j), hx),
                    diff(fin(i, j - 1), fin(i, j + 1), hy),
                ]
            }
        }
    }

    /// `p_k = min(p, k)` on every node.
    pub fn truncate(&self, k: f64) -> Result<TruncatedExponent, Error> {
        if !(k > self.p_plus) {
            return Err(Error::KTooSmall {
                k,
                p_plus: self.p_plus,
            });
        }
        Ok(TruncatedExponent {
            k,
            values: self.values.iter().map(|p| p.min(k)).collect(),
            cell_values: self
                .cell_values
                .iter()
                .map(|p| p.map_or(k, |p| p.min(k)))
                .collect(),
        })
    }

    /// Smallest exponent of the truncation at level `k`.
    pub fn truncated_minimum(&self, k: f64) -> f64 {
        self.p_minus.min(k)
    }
}

/// The exponent truncated at level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedExponent {
    k: f64,
    values: Vec<f64>,
    cell_values: Vec<f64>,
}

impl TruncatedExponent {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Exponent used at the quadrature points of a cell: `k` inside the
    /// closed inner rectangle, the cell average of `p` elsewhere.
    pub fn cell_exponent(&self, cell: usize) -> f64 {
        self.cell_values[cell]
    }

    pub fn cell_exponents(&self) -> &[f64] {
        &self.cell_values
    }

    /// A truncation with one exponent on every cell, for plain
    /// constant-exponent problems without an inner region.
    pub fn uniform(grid: &Grid, p: f64) -> Self {
        TruncatedExponent {
            k: p,
            values: alloc::vec![p; grid.node_count()],
            cell_values: alloc::vec![p; grid.cell_count()],
        }
    }
}

/// Hölder conjugate `p / (p - 1)`; `1` for an infinite exponent.
pub fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        return 1.0;
    }
    p / (p - 1.0)
}

/// Extrema of a slice of exponents.
pub fn extrema(exps: &[f64]) -> (f64, f64) {
    exps.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(*p), hi.max(*p))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, DomainSpec, Rect};

    fn grid(n: usize) -> Grid {
        let d = Rect::new(0.25, 0.75, 0.25, 0.75).unwrap();
        build_grid(&DomainSpec::new(Rect::unit(), Some(d), (n, n))).unwrap()
    }

    #[test]
    fn constant_exponent() {
        let g = grid(9);
        let p = ExponentField::validate(ExponentSpec::Constant(4.0), &g).unwrap();
        assert_eq!((p.p_minus(), p.p_plus()), (4.0, 4.0));
        let inner = g.node_index(4, 4);
        assert!(p.at(inner).is_infinite());
    }

    #[test]
    fn affine_exponent_extrema() {
        let g = grid(9);
        let p = ExponentField::validate(
            ExponentSpec::Affine {
                a: 3.0,
                b: 1.0,
                c: 0.0,
            },
            &g,
        )
        .unwrap();
        assert_eq!((p.p_minus(), p.p_plus()), (3.0, 4.0));
    }

    #[test]
    fn exponent_must_exceed_dimension() {
        let g = grid(9);
        assert_eq!(
            ExponentField::validate(ExponentSpec::Constant(1.5), &g),
            Err(Error::PMinusTooSmall { p_minus: 1.5 })
        );
        assert!(ExponentField::validate(ExponentSpec::Constant(2.0), &g).is_err());
    }

    #[test]
    fn table_exponent_checks() {
        let g = grid(5);
        let mut t = alloc::vec![4.0; 25];
        t[12] = f64::NAN; // inner node, ignored
        assert!(ExponentField::validate(ExponentSpec::Table(t.clone()), &g).is_ok());
        t[0] = f64::INFINITY;
        assert_eq!(
            ExponentField::validate(ExponentSpec::Table(t), &g),
            Err(Error::PNotFinite { node: 0 })
        );
        assert!(matches!(
            ExponentField::validate(ExponentSpec::Table(alloc::vec![4.0; 3]), &g),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn truncation_examples() {
        let g = grid(9);
        let p = ExponentField::validate(ExponentSpec::Constant(4.0), &g).unwrap();
        let pk = p.truncate(10.0).unwrap();
        assert_eq!(pk.at(g.node_index(1, 1)), 4.0);
        assert_eq!(pk.at(g.node_index(4, 4)), 10.0);
        let eps = p.truncate(4.0 + 1e-9).unwrap();
        assert_eq!(eps.at(g.node_index(0, 3)), 4.0);
        assert_eq!(
            p.truncate(3.0),
            Err(Error::KTooSmall {
                k: 3.0,
                p_plus: 4.0
            })
        );
        assert_eq!(
            p.truncate(4.0),
            Err(Error::KTooSmall {
                k: 4.0,
                p_plus: 4.0
            })
        );
    }

    #[test]
    fn cell_exponents_follow_the_inner_box() {
        let g = grid(9);
        let p = ExponentField::validate(
            ExponentSpec::Affine {
                a: 3.0,
                b: 1.0,
                c: 0.0,
            },
            &g,
        )
        .unwrap();
        let pk = p.truncate(50.0).unwrap();
        for c in 0..g.cell_count() {
            if g.cell_in_inner(c) {
                assert_eq!(pk.cell_exponent(c), 50.0);
                assert_eq!(p.cell_exponent(c), None);
            } else {
                let [x, _] = g.cell_center(c);
                assert!((pk.cell_exponent(c) - (3.0 + x)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn table_gradient_matches_affine_closed_form() {
        let g = grid(9);
        let table: Vec<f64> = (0..g.node_count())
            .map(|n| {
                let [x, y] = g.coords(n);
                3.0 + 0.5 * x - 0.25 * y
            })
            .collect();
        let p = ExponentField::validate(ExponentSpec::Table(table), &g).unwrap();
        for n in 0..g.node_count() {
            if g.label(n) != Region::Inner {
                let gp = p.gradient(&g, n);
                assert!((gp[0] - 0.5).abs() < 1e-12 && (gp[1] + 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(conjugate(2.0), 2.0);
        assert!((conjugate(4.0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((conjugate(1e9) - 1.0).abs() < 2e-9);
        assert_eq!(conjugate(f64::INFINITY), 1.0);
    }
}
