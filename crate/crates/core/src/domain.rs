//! Rectangular grids over the outer domain with an optional inner rectangle.
//!
//! Nodes are numbered row-major with `x` fastest: node `(i, j)` has id
//! `j * nx + i` and coordinates `(x0 + i hx, y0 + j hy)`. Cell `(i, j)` spans
//! nodes `(i, j)`, `(i+1, j)`, `(i, j+1)`, `(i+1, j+1)`.
//!
//! Fields are read as their bilinear interpolant on each cell. Volume
//! integrals use the 2x2 Gauss rule on every cell; boundary integrals use
//! trapezoidal weights on the outer boundary nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::field::ScalarField;
use crate::Vec2;

/// Snap tolerance, in cells, for inner-rectangle sides.
const SNAP_TOL: f64 = 1e-9;

/// Gauss abscissa offset `1/(2 sqrt 3)` on the unit interval.
const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9;

/// Local coordinates of the 2x2 Gauss points on the unit cell.
pub const GAUSS_POINTS: [(f64, f64); 4] = [
    (0.5 - GAUSS_OFFSET, 0.5 - GAUSS_OFFSET),
    (0.5 + GAUSS_OFFSET, 0.5 - GAUSS_OFFSET),
    (0.5 - GAUSS_OFFSET, 0.5 + GAUSS_OFFSET),
    (0.5 + GAUSS_OFFSET, 0.5 + GAUSS_OFFSET),
];

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, Error> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(Error::InvalidRect("non-finite corner"));
        }
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidRect("empty or inverted"));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn unit() -> Self {
        Rect {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }

    pub fn diameter(&self) -> f64 {
        libm::hypot(self.width(), self.height())
    }

    /// Closure of `self` lies in the open interior of `outer`.
    pub fn is_compactly_inside(&self, outer: &Rect) -> bool {
        self.x0 > outer.x0 && self.x1 < outer.x1 && self.y0 > outer.y0 && self.y1 < outer.y1
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            [self.x0, self.y0],
            [self.x1, self.y0],
            [self.x0, self.y1],
            [self.x1, self.y1],
        ]
    }
}

/// Geometry and resolution of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub omega: Rect,
    /// The region where the exponent is infinite; `None` for a plain problem.
    pub inner: Option<Rect>,
    /// Nodes per axis.
    pub resolution: (usize, usize),
}

impl DomainSpec {
    pub fn new(omega: Rect, inner: Option<Rect>, resolution: (usize, usize)) -> Self {
        DomainSpec {
            omega,
            inner,
            resolution,
        }
    }

    /// The same geometry with every cell split in two along each axis.
    pub fn refined(&self) -> Self {
        let (nx, ny) = self.resolution;
        DomainSpec {
            resolution: (2 * (nx - 1) + 1, 2 * (ny - 1) + 1),
            ..self.clone()
        }
    }
}

/// Region label of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Interior of the outer domain minus the closed inner rectangle.
    OuterBulk,
    /// Open inner rectangle, where the exponent is infinite.
    Inner,
    /// Boundary of the inner rectangle.
    Interface,
    /// Boundary of the outer domain.
    OuterBoundary,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::OuterBulk,
        Region::Inner,
        Region::Interface,
        Region::OuterBoundary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::OuterBulk => "OUTER_BULK",
            Region::Inner => "INNER",
            Region::Interface => "INTERFACE",
            Region::OuterBoundary => "OUTER_BOUNDARY",
        }
    }

    pub fn from_name(name: &str) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// Inclusive node-index box of the closed inner rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl IndexBox {
    fn contains(&self, i: usize, j: usize) -> bool {
        (self.i0..=self.i1).contains(&i) && (self.j0..=self.j1).contains(&j)
    }

    fn contains_strictly(&self, i: usize, j: usize) -> bool {
        i > self.i0 && i < self.i1 && j > self.j0 && j < self.j1
    }
}

/// The outward unit normals of a boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalSet {
    pub node: usize,
    pub normals: Vec<Vec2>,
}

impl NormalSet {
    pub fn is_corner(&self) -> bool {
        self.normals.len() == 2
    }
}

/// Result of a one-sided normal difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalDerivative {
    pub value: f64,
    /// `false` when only two inward nodes were available.
    pub second_order: bool,
}

/// Discretised domain with labels and quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: DomainSpec,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    labels: Vec<Region>,
    inner: Option<IndexBox>,
    boundary_weights: Vec<f64>,
    lumped_mass: Vec<f64>,
}

/// Builds the grid for `spec`, snapping the inner rectangle to grid lines.
pub fn build_grid(spec: &DomainSpec) -> Result<Grid, Error> {
    let (nx, ny) = spec.resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::ResolutionTooSmall { nx, ny });
    }
    let omega = Rect::new(spec.omega.x0, spec.omega.x1, spec.omega.y0, spec.omega.y1)?;
    let hx = omega.width() / (nx - 1) as f64;
    let hy = omega.height() / (ny - 1) as f64;

    let inner = match &spec.inner {
        None => None,
        Some(d) => {
            Rect::new(d.x0, d.x1, d.y0, d.y1)?;
            if !d.is_compactly_inside(&omega) {
                return Err(Error::DRectTouchesBoundary);
            }
            let i0 = snap("x0", d.x0, omega.x0, hx)?;
            let i1 = snap("x1", d.x1, omega.x0, hx)?;
            let j0 = snap("y0", d.y0, omega.y0, hy)?;
            let j1 = snap("y1", d.y1, omega.y0, hy)?;
            if i0 < 1 || j0 < 1 || i1 + 1 > nx - 1 || j1 + 1 > ny - 1 {
                return Err(Error::DRectTouchesBoundary);
            }
            Some(IndexBox { i0, i1, j0, j1 })
        }
    };

    let mut grid = Grid {
        spec: spec.clone(),
        nx,
        ny,
        hx,
        hy,
        labels: Vec::new(),
        inner,
        boundary_weights: vec![0.0; nx * ny],
        lumped_mass: vec![0.0; nx * ny],
    };
    grid.labels = classify_nodes(&grid);

    for j in 0..ny {
        for i in 0..nx {
            let id = grid.node_index(i, j);
            let mut w = 0.0;
            if j == 0 || j == ny - 1 {
                w += if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
            }
            if i == 0 || i == nx - 1 {
                w += if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
            }
            grid.boundary_weights[id] = w;
        }
    }
    let quarter = 0.25 * hx * hy;
    for c in 0..grid.cell_count() {
        for n in grid.cell_nodes(c) {
            grid.lumped_mass[n] += quarter;
        }
    }
    Ok(grid)
}

fn snap(side: &'static str, coord: f64, origin: f64, h: f64) -> Result<usize, Error> {
    let cells = (coord - origin) / h;
    let nearest = libm::round(cells);
    let offset = cells - nearest;
    if libm::fabs(offset) > SNAP_TOL {
        return Err(Error::DRectOffGrid { side, offset });
    }
    Ok(nearest as usize)
}

/// Labels every node of a built grid.
///
/// Outer-boundary nodes take precedence; the inner box never reaches the
/// outer boundary on a valid grid.
pub fn classify_nodes(grid: &Grid) -> Vec<Region> {
    let mut labels = Vec::with_capacity(grid.node_count());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let label = if i == 0 || j == 0 || i == grid.nx - 1 || j == grid.ny - 1 {
                Region::OuterBoundary
            } else {
                match grid.inner {
                    Some(b) if b.contains_strictly(i, j) => Region::Inner,
                    Some(b) if b.contains(i, j) => Region::Interface,
                    _ => Region::OuterBulk,
                }
            };
            labels.push(label);
        }
    }
    labels
}

impl Grid {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    /// The larger of the two spacings; tolerances scale with it.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.spec.omega.x1
        } else {
            self.spec.omega.x0 + i as f64 * self.hx
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == self.ny - 1 {
            self.spec.omega.y1
        } else {
            self.spec.omega.y0 + j as f64 * self.hy
        }
    }

    pub fn coords(&self, node: usize) -> Vec2 {
        let (i, j) = self.node_ij(node);
        [self.x(i), self.y(j)]
    }

    pub fn label(&self, node: usize) -> Region {
        self.labels[node]
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn nodes_in(&self, region: Region) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == region)
            .map(|(n, _)| n)
    }

    pub fn inner_box(&self) -> Option<IndexBox> {
        self.inner
    }

    /// Area of the inner rectangle, 0 without one.
    pub fn inner_area(&self) -> f64 {
        self.spec.inner.map_or(0.0, |d| d.area())
    }

    pub fn omega_area(&self) -> f64 {
        self.spec.omega.area()
    }

    pub fn perimeter(&self) -> f64 {
        self.spec.omega.perimeter()
    }

    /// Trapezoidal weight of a node on the outer boundary, 0 elsewhere.
    pub fn boundary_weight(&self, node: usize) -> f64 {
        self.boundary_weights[node]
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// Lumped (row-sum) mass of each node: `sum over incident cells of w/4`.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn cell_weight(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % (self.nx - 1), cell / (self.nx - 1))
    }

    /// Nodes of a cell in the order `(i,j)`, `(i+1,j)`, `(i,j+1)`, `(i+1,j+1)`.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(cell);
        let n00 = self.node_index(i, j);
        [n00, n00 + 1, n00 + self.nx, n00 + self.nx + 1]
    }

    pub fn cell_center(&self, cell: usize) -> Vec2 {
        let (i, j) = self.cell_ij(cell);
        [self.x(i) + 0.5 * self.hx, self.y(j) + 0.5 * self.hy]
    }

    /// Whether the cell lies in the closed inner rectangle.
    pub fn cell_in_inner(&self, cell: usize) -> bool {
        match self.inner {
            None => false,
            Some(b) => {
                let (i, j) = self.cell_ij(cell);
                i >= b.i0 && i < b.i1 && j >= b.j0 && j < b.j1
            }
        }
    }

    /// Gradient of the bilinear interpolant of `u` at local point `(xi, eta)`.
    pub fn cell_gradient_at(&self, u: &[f64], cell: usize, xi: f64, eta: f64) -> Vec2 {
        let [a, b, c, d] = self.cell_nodes(cell);
        let dx_bottom = (u[b] - u[a]) / self.hx;
        let dx_top = (u[d] - u[c]) / self.hx;
        let dy_left = (u[c] - u[a]) / self.hy;
        let dy_right = (u[d] - u[b]) / self.hy;
        [
            (1.0 - eta) * dx_bottom + eta * dx_top,
            (1.0 - xi) * dy_left + xi * dy_right,
        ]
    }

    /// Gradients at the four Gauss points of a cell.
    pub fn gauss_gradients(&self, u: &[f64], cell: usize) -> [Vec2; 4] {
        GAUSS_POINTS.map(|(xi, eta)| self.cell_gradient_at(u, cell, xi, eta))
    }

    /// Chebyshev distance from a node to the nearest corner of the outer or
    /// inner rectangle.
    pub fn distance_to_corner(&self, node: usize) -> f64 {
        let [x, y] = self.coords(node);
        let mut best = f64::INFINITY;
        let rects = [Some(self.spec.omega), self.spec.inner];
        for r in rects.iter().flatten() {
            for [cx, cy] in r.corners() {
                best = best.min(libm::fabs(x - cx).max(libm::fabs(y - cy)));
            }
        }
        best
    }

    fn check_node(&self, node: usize) -> Result<(), Error> {
        if node >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                node,
                nodes: self.node_count(),
            });
        }
        Ok(())
    }

    /// Node reached from `(i, j)` after `steps` steps along `(di, dj)`.
    fn step(&self, i: usize, j: usize, di: i64, dj: i64, steps: i64) -> Option<usize> {
        let ii = i as i64 + di * steps;
        let jj = j as i64 + dj * steps;
        if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
            return None;
        }
        Some(self.node_index(ii as usize, jj as usize))
    }

    /// Whether the node at the given index lies on the side of the inner box
    /// that an inward difference from an interface node must stay within.
    fn in_closed_inner(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        self.inner.is_some_and(|b| b.contains(i, j))
    }
}

/// Bilinear-interpolant gradient at the cell center: each component is the
/// average of the two divided differences along that axis.
pub fn cell_gradient(grid: &Grid, u: &ScalarField, cell: usize) -> Vec2 {
    grid.cell_gradient_at(u.values(), cell, 0.5, 0.5)
}

/// Outward unit normals at an interface or outer-boundary node.
///
/// Interface normals point out of the inner rectangle, outer-boundary normals
/// out of the domain. Corners carry both adjacent face normals.
pub fn normal_set(grid: &Grid, node: usize) -> Result<NormalSet, Error> {
    grid.check_node(node)?;
    let (i, j) = grid.node_ij(node);
    let (ilo, ihi, jlo, jhi) = match grid.label(node) {
        Region::OuterBoundary => (0, grid.nx - 1, 0, grid.ny - 1),
        Region::Interface => {
            let b = grid.inner.expect("interface nodes imply an inner box");
            (b.i0, b.i1, b.j0, b.j1)
        }
        _ => return Err(Error::NotBoundaryNode { node }),
    };
    let mut normals = Vec::with_capacity(2);
    if i == ilo {
        normals.push([-1.0, 0.0]);
    } else if i == ihi {
        normals.push([1.0, 0.0]);
    }
    if j == jlo {
        normals.push([0.0, -1.0]);
    } else if j == jhi {
        normals.push([0.0, 1.0]);
    }
    Ok(NormalSet { node, normals })
}

/// Outward normal derivative from a one-sided difference along `-nu`.
///
/// Uses the three-node second-order formula when three inward nodes exist,
/// otherwise the two-node first-order one with `second_order = false`. For
/// interface nodes the stencil stays inside the closed inner rectangle.
pub fn normal_derivative(
    grid: &Grid,
    u: &ScalarField,
    node: usize,
    nu: Vec2,
) -> Result<NormalDerivative, Error> {
    let set = normal_set(grid, node)?;
    let matches = |n: &Vec2| n[0] == nu[0] && n[1] == nu[1];
    if !set.normals.iter().any(matches) {
        return Err(Error::NotInNormalSet { node });
    }
    let (i, j) = grid.node_ij(node);
    let (di, dj) = (-(nu[0] as i64), -(nu[1] as i64));
    let h = if di != 0 { grid.hx } else { grid.hy };
    let interface = grid.label(node) == Region::Interface;
    let usable = |n: Option<usize>| n.filter(|n| !interface || grid.in_closed_inner(*n));
    let v = u.values();
    let first = usable(grid.step(i, j, di, dj, 1)).ok_or(Error::StencilOutOfDomain { node })?;
    // Derivative along the inward direction, then flipped to outward.
    let inward = match usable(grid.step(i, j, di, dj, 2)) {
        Some(second) => (-3.0 * v[node] + 4.0 * v[first] - v[second]) / (2.0 * h),
        None => {
            return Ok(NormalDerivative {
                value: -(v[first] - v[node]) / h,
                second_order: false,
            })
        }
    };
    Ok(NormalDerivative {
        value: -inward,
        second_order: true,
    })
}

/// Gradient at a boundary node: one-sided second-order differences across
/// each face the node sits on, central differences along the faces.
///
/// For interface nodes the one-sided stencils point into the inner
/// rectangle; for outer-boundary nodes into the domain.
pub fn boundary_gradient(grid: &Grid, u: &ScalarField, node: usize) -> Result<Vec2, Error> {
    let set = normal_set(grid, node)?;
    let (i, j) = grid.node_ij(node);
    let v = u.values();
    let mut grad = [0.0; 2];
    for axis in 0..2 {
        match set.normals.iter().find(|n| n[axis] != 0.0) {
            Some(nu) => {
                let d = normal_derivative(grid, u, node, *nu)?;
                grad[axis] = d.value * nu[axis];
            }
            None => {
                let (di, dj, h) = if axis == 0 {
                    (1, 0, grid.hx)
                } else {
                    (0, 1, grid.hy)
                };
                let fwd = grid
                    .step(i, j, di, dj, 1)
                    .ok_or(Error::StencilOutOfDomain { node })?;
                let bwd = grid
                    .step(i, j, di, dj, -1)
                    .ok_or(Error::StencilOutOfDomain { node })?;
                grad[axis] = (v[fwd] - v[bwd]) / (2.0 * h);
            }
        }
    }
    Ok(grad)
}

/// Central-difference first and second derivatives at an interior node:
/// `(ux, uy, uxx, uyy, uxy)`.
pub fn central_derivatives(grid: &Grid, u: &[f64], node: usize) -> Option<[f64; 5]> {
    let (i, j) = grid.node_ij(node);
    if i == 0 || j == 0 || i + 1 >= grid.nx || j + 1 >= grid.ny {
        return None;
    }
    let at =
        |di: i64, dj: i64| u[grid.node_index((i as i64 + di) as usize, (j as i64 + dj) as usize)];
    let (hx, hy) = (grid.hx, grid.hy);
    let c = at(0, 0);
    let ux = (at(1, 0) - at(-1, 0)) / (2.0 * hx);
    let uy = (at(0, 1) - at(0, -1)) / (2.0 * hy);
    let uxx = (at(1, 0) - 2.0 * c + at(-1, 0)) / (hx * hx);
    let uyy = (at(0, 1) - 2.0 * c + at(0, -1)) / (hy * hy);
    let uxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hx * hy);
    Some([ux, uy, uxx, uyy, uxy])
}

/// Values of the eight neighbours of an interior node.
pub fn ring_values(grid: &Grid, u: &[f64], node: usize) -> Option<[f64; 8]> {
    let (i, j) = grid.node_ij(node);
    if i == 0 || j == 0 || i + 1 >= grid.nx || j + 1 >= grid.ny {
        return None;
    }
    let mut out = [0.0; 8];
    let mut k = 0;
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            out[k] = u[grid.node_index((i as i64 + di) as usize, (j as i64 + dj) as usize)];
            k += 1;
        }
    }
    Some(out)
}
