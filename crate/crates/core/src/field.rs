use alloc::vec::Vec;

use crate::domain::Grid;
use crate::error::Error;
use crate::math;
use crate::Vec2;

/// Nodal values of a scalar field on a grid (node-ordered, `x` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps nodal values, checking the node count and finiteness.
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != grid.node_count() {
            return Err(Error::ShapeMismatch {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { node });
        }
        Ok(ScalarField { values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            values: alloc::vec![0.0; grid.node_count()],
        }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|n| {
                let [x, y] = grid.coords(n);
                f(x, y)
            })
            .collect();
        ScalarField { values }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ScalarField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        math::max_abs(&self.values)
    }

    /// `max - min` over all nodes.
    pub fn spread(&self) -> f64 {
        math::spread(&self.values)
    }

    /// Sup-norm distance to another field of the same length.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max(libm::fabs(a - b)))
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        math::pairwise_sum(&terms)
    }

    /// `self + t * dir`.
    pub fn axpy(&self, t: f64, dir: &ScalarField) -> ScalarField {
        ScalarField {
            values: self
                .values
                .iter()
                .zip(&dir.values)
                .map(|(a, d)| a + t * d)
                .collect(),
        }
    }

    /// Quadrature mean: the exact mean of the bilinear interpolant.
    pub fn mean(&self, grid: &Grid) -> f64 {
        let mass = grid.lumped_mass();
        let weighted: Vec<f64> = self.values.iter().zip(mass).map(|(v, m)| v * m).collect();
        math::pairwise_sum(&weighted) / math::pairwise_sum(mass)
    }
}

/// Closed-form scalar expressions used for boundary data and test fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldExpr {
    Constant(f64),
    /// `a + b x + c y`
    Affine {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `a + b x + c y + d x^2 + e x y + f y^2`
    Quadratic {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        e: f64,
        f: f64,
    },
}

impl FieldExpr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            FieldExpr::Constant(v) => v,
            FieldExpr::Affine { a, b, c } => a + b * x + c * y,
            FieldExpr::Quadratic { a, b, c, d, e, f } => {
                a + b * x + c * y + d * x * x + e * x * y + f * y * y
            }
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> Vec2 {
        match *self {
            FieldExpr::Constant(_) => [0.0, 0.0],
            FieldExpr::Affine { b, c, .. } => [b, c],
            FieldExpr::Quadratic { b, c, d, e, f, .. } => {
                [b + 2.0 * d * x + e * y, c + e * x + 2.0 * f * y]
            }
        }
    }

    pub fn sample(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| self.eval(x, y))
    }
}
