//! Reference solutions assembled independently of the library.
//!
//! Nothing here touches `varinf_core`: the grid, the element matrices, the
//! boundary weights and the mean constraint are rebuilt from scratch, and
//! the linear algebra is done by nalgebra. Both oracles impose the
//! mean-zero constraint with a Lagrange multiplier.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Uniform grid on `[x0, x1] x [y0, y1]`, nodes numbered `j * nx + i`.
#[derive(Debug, Clone, Copy)]
pub struct OracleGrid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub hx: f64,
    pub hy: f64,
}

impl OracleGrid {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Self {
        OracleGrid {
            nx,
            ny,
            x0,
            y0,
            hx: (x1 - x0) / (nx - 1) as f64,
            hy: (y1 - y0) / (ny - 1) as f64,
        }
    }

    pub fn unit(n: usize) -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0, n, n)
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn xy(&self, node: usize) -> (f64, f64) {
        let (i, j) = (node % self.nx, node / self.nx);
        (self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy)
    }

    /// Element nodes counter-clockwise from the lower-left corner.
    fn element(&self, ci: usize, cj: usize) -> [usize; 4] {
        let n = cj * self.nx + ci;
        [n, n + 1, n + self.nx + 1, n + self.nx]
    }

    fn elements(&self) -> impl Iterator<Item = [usize; 4]> + '_ {
        (0..self.ny - 1).flat_map(move |cj| (0..self.nx - 1).map(move |ci| self.element(ci, cj)))
    }

    /// Trapezoidal weights of the boundary: each boundary segment gives half
    /// its length to each endpoint.
    pub fn boundary_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes()];
        for i in 0..self.nx - 1 {
            for j in [0, self.ny - 1] {
                w[j * self.nx + i] += 0.5 * self.hx;
                w[j * self.nx + i + 1] += 0.5 * self.hx;
            }
        }
        for j in 0..self.ny - 1 {
            for i in [0, self.nx - 1] {
                w[j * self.nx + i] += 0.5 * self.hy;
                w[(j + 1) * self.nx + i] += 0.5 * self.hy;
            }
        }
        w
    }

    /// Integral of each bilinear hat function (a quarter of each incident
    /// element's area).
    pub fn hat_integrals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nodes()];
        for e in self.elements() {
            for n in e {
                m[n] += 0.25 * self.hx * self.hy;
            }
        }
        m
    }

    /// Boundary load `sum_i w_i g(x_i) e_i`.
    pub fn load(&self, g: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
        self.boundary_weights()
            .iter()
            .enumerate()
            .map(|(n, w)| {
                let (x, y) = self.xy(n);
                w * g(x, y)
            })
            .collect()
    }

    /// Closed-form bilinear stiffness matrix on one rectangle, counter-clockwise
    /// node order.
    fn element_stiffness(&self) -> [[f64; 4]; 4] {
        let (a, b) = (self.hx, self.hy);
        let kx = [
            [2.0, -2.0, -1.0, 1.0],
            [-2.0, 2.0, 1.0, -1.0],
            [-1.0, 1.0, 2.0, -2.0],
            [1.0, -1.0, -2.0, 2.0],
        ];
        let ky = [
            [2.0, 1.0, -1.0, -2.0],
            [1.0, 2.0, -2.0, -1.0],
            [-1.0, -2.0, 2.0, 1.0],
            [-2.0, -1.0, 1.0, 2.0],
        ];
        let mut k = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                k[r][c] = b / (6.0 * a) * kx[r][c] + a / (6.0 * b) * ky[r][c];
            }
        }
        k
    }

    pub fn stiffness(&self) -> DMatrix<f64> {
        let n = self.nodes();
        let ke = self.element_stiffness();
        let mut k = DMatrix::zeros(n, n);
        for e in self.elements() {
            for r in 0..4 {
                for c in 0..4 {
                    k[(e[r], e[c])] += ke[r][c];
                }
            }
        }
        k
    }

    /// Gradient operator (2 x 4) of the element at local point `(s, t)` in
    /// `[0, 1]^2`, counter-clockwise node order.
    fn b_matrix(&self, s: f64, t: f64) -> [[f64; 4]; 2] {
        let (a, b) = (self.hx, self.hy);
        [
            [-(1.0 - t) / a, (1.0 - t) / a, t / a, -t / a],
            [-(1.0 - s) / b, -s / b, s / b, (1.0 - s) / b],
        ]
    }

    fn gauss() -> [(f64, f64); 4] {
        let o = 0.5 / 3.0_f64.sqrt();
        [
            (0.5 - o, 0.5 - o),
            (0.5 + o, 0.5 - o),
            (0.5 + o, 0.5 + o),
            (0.5 - o, 0.5 + o),
        ]
    }

    /// Residual and Jacobian of `u -> d/du [ sum_q w |grad u|^p / p ] - load`
    /// with the Gauss rule.
    fn p_system(&self, u: &[f64], p: f64, load: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.nodes();
        let mut f = DVector::from_iterator(n, load.iter().map(|v| -v));
        let mut jac = DMatrix::zeros(n, n);
        let w = 0.25 * self.hx * self.hy;
        for e in self.elements() {
            for (s, t) in Self::gauss() {
                let b = self.b_matrix(s, t);
                let gx: f64 = (0..4).map(|l| b[0][l] * u[e[l]]).sum();
                let gy: f64 = (0..4).map(|l| b[1][l] * u[e[l]]).sum();
                let a2 = gx * gx + gy * gy;
                let c0 = a2.powf(0.5 * (p - 2.0));
                let c1 = if a2 > 0.0 {
                    (p - 2.0) * a2.powf(0.5 * (p - 4.0))
                } else {
                    0.0
                };
                let m = [
                    [c0 + c1 * gx * gx, c1 * gx * gy],
                    [c1 * gx * gy, c0 + c1 * gy * gy],
                ];
                for r in 0..4 {
                    f[e[r]] += w * c0 * (b[0][r] * gx + b[1][r] * gy);
                    for c in 0..4 {
                        let mut v = 0.0;
                        for i in 0..2 {
                            for k in 0..2 {
                                v += b[i][r] * m[i][k] * b[k][c];
                            }
                        }
                        jac[(e[r], e[c])] += w * v;
                    }
                }
            }
        }
        (f, jac)
    }
}

/// Bordered system `[A m; m^T 0]` with right-hand side `[rhs; 0]`.
fn bordered_solve(a: &DMatrix<f64>, m: &[f64], rhs: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        big[(i, n)] = m[i];
        big[(n, i)] = m[i];
    }
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from(rhs);
    let sol = big.lu().solve(&b).expect("bordered system is nonsingular");
    sol.rows(0, n).into_owned()
}

/// Mean-zero solution of `K u = load` for the quadratic energy.
pub fn linear_oracle(grid: &OracleGrid, g: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let k = grid.stiffness();
    let load = DVector::from_vec(grid.load(g));
    bordered_solve(&k, &grid.hat_integrals(), &load)
        .iter()
        .copied()
        .collect()
}

/// Damped Newton on the Euler-Lagrange system of the constant-exponent
/// energy, started from the quadratic solution. Returns the solution and the
/// final residual norm.
pub fn newton_oracle(grid: &OracleGrid, p: f64, g: &dyn Fn(f64, f64) -> f64) -> (Vec<f64>, f64) {
    let load = grid.load(g);
    let mass = grid.hat_integrals();
    let mut u = linear_oracle(grid, g);
    let norm = |u: &[f64]| grid.p_system(u, p, &load).0.norm();
    let mut res = norm(&u);
    for _ in 0..200 {
        if res < 1e-14 {
            break;
        }
        let (f, jac) = grid.p_system(&u, p, &load);
        let du = bordered_solve(&jac, &mass, &(-f));
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(du.iter()).map(|(a, d)| a + t * d).collect();
            let r = norm(&trial);
            if r < (1.0 - 1e-4 * t) * res || t < 1e-12 {
                u = trial;
                res = r;
                break;
            }
            t *= 0.5;
        }
    }
    (u, res)
}

/// `K u` for the quadratic energy.
pub fn stiffness_product(grid: &OracleGrid, u: &[f64]) -> Vec<f64> {
    let k = grid.stiffness();
    (k * DVector::from_column_slice(u))
        .iter()
        .copied()
        .collect()
}
