//! Uniform MAC staggered grid on a rectangle and the field containers
//! living on it.
//!
//! Scalars (phi, mu, sigma, p) sit at cell centers and carry homogeneous
//! Neumann boundary conditions, realized by mirrored ghost values inside the
//! stencil operators. Vector quantities store face-normal components: `u` on
//! x-faces, `w` on y-faces. No-penetration means boundary-face normal
//! components are exactly zero; tangential no-slip is realized by linear
//! ghost reflection (`u_ghost = -u_interior`) inside the operators.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("fields live on different grids: {0}x{1} vs {2}x{3}")]
    Mismatch(usize, usize, usize, usize),
}

/// Uniform rectangular grid: `nx * ny` cells over `[0, lx] x [0, ly]`.
///
/// Cell centers at `((i+1/2) hx, (j+1/2) hy)`, x-faces at `(i hx, (j+1/2) hy)`,
/// y-faces at `((i+1/2) hx, j hy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        assert!(nx >= 4 && ny >= 4, "grid needs at least 4x4 cells");
        assert!(
            lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite(),
            "domain side lengths must be positive"
        );
        Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        }
    }

    /// Unit square with `n x n` cells.
    pub fn unit(n: usize) -> Self {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Flat index of cell `(i, j)`.
    #[inline(always)]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Flat index of x-face `(i, j)`, `i` in `0..=nx`.
    #[inline(always)]
    pub fn uidx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Flat index of y-face `(i, j)`, `j` in `0..=ny`.
    #[inline(always)]
    pub fn widx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Coordinates of the x-face `(i, j)`.
    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Coordinates of the y-face `(i, j)`.
    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, j as f64 * self.hy)
    }

    /// Coordinates of the grid node `(i, j)` (cell corner).
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, j as f64 * self.hy)
    }
}

/// Cell-centered scalar field with homogeneous Neumann boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    /// Sample `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.n_cells()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values[grid.idx(i, j)] = f(x, y);
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Area-weighted spatial average (equals the arithmetic mean on a
    /// uniform grid).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Area-weighted l2 norm: `sqrt(sum f^2 hx hy)`.
    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// `self += a * g`, elementwise.
    pub fn axpy(&mut self, a: f64, g: &ScalarField) {
        debug_assert_eq!(self.grid, g.grid);
        for (s, t) in self.values.iter_mut().zip(&g.values) {
            *s += a * t;
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }
}

/// Area-weighted inner product `sum f g hx hy` of two fields on the same grid.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> Result<f64, GridError> {
    if f.grid != g.grid {
        return Err(GridError::Mismatch(
            f.grid.nx, f.grid.ny, g.grid.nx, g.grid.ny,
        ));
    }
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.grid.cell_area())
}

/// Face-normal vector field on the MAC grid: `u` on x-faces ((nx+1) x ny),
/// `w` on y-faces (nx x (ny+1)).
///
/// Used both for velocities (no-slip walls) and for face-valued gradients
/// or fluxes, whose normal boundary components vanish under the Neumann
/// conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVelocity {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl MacVelocity {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: vec![0.0; (grid.nx + 1) * grid.ny],
            w: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    /// Build a field from node samples of a stream function:
    /// `u = d(psi)/dy`, `w = -d(psi)/dx` as exact finite differences of node
    /// values, which makes the discrete divergence vanish identically.
    /// `psi` should be constant along each wall for no-penetration; boundary
    /// normal faces are zeroed afterwards regardless.
    pub fn from_stream_fn(grid: Grid, psi: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.node(i, j);
                let (x1, y1) = grid.node(i, j + 1);
                debug_assert_eq!(x, x1);
                v.u[grid.uidx(i, j)] = (psi(x1, y1) - psi(x, y)) / grid.hy;
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.node(i, j);
                let (x1, y1) = grid.node(i + 1, j);
                debug_assert_eq!(y, y1);
                v.w[grid.widx(i, j)] = -(psi(x1, y1) - psi(x, y)) / grid.hx;
            }
        }
        v.enforce_no_penetration();
        v
    }

    /// Zero the boundary-face normal components.
    pub fn enforce_no_penetration(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.u[g.uidx(0, j)] = 0.0;
            self.u[g.uidx(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.w[g.widx(i, 0)] = 0.0;
            self.w[g.widx(i, g.ny)] = 0.0;
        }
    }

    pub fn is_no_penetration(&self) -> bool {
        let g = self.grid;
        (0..g.ny).all(|j| self.u[g.uidx(0, j)] == 0.0 && self.u[g.uidx(g.nx, j)] == 0.0)
            && (0..g.nx).all(|i| self.w[g.widx(i, 0)] == 0.0 && self.w[g.widx(i, g.ny)] == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.w.iter()).all(|v| v.is_finite())
    }

    /// Face-weighted squared l2 norm; boundary faces carry half weight
    /// (trapezoidal), which is immaterial for no-penetration fields.
    pub fn norm_sq(&self) -> f64 {
        let g = self.grid;
        let a = g.cell_area();
        let mut s = 0.0;
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let wt = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
                let v = self.u[g.uidx(i, j)];
                s += wt * v * v;
            }
        }
        for j in 0..=g.ny {
            let wt_j = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
            for i in 0..g.nx {
                let v = self.w[g.widx(i, j)];
                s += wt_j * v * v;
            }
        }
        s * a
    }

    /// Kinetic energy `1/2 ||v||^2` with face-area weights.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.norm_sq()
    }

    /// Largest absolute component per direction, for CFL control.
    pub fn max_speeds(&self) -> (f64, f64) {
        let mu = self.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mw = self.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (mu, mw)
    }

    pub fn linf(&self) -> f64 {
        let (a, b) = self.max_speeds();
        a.max(b)
    }

    /// `self += a * g`, elementwise on both components.
    pub fn axpy(&mut self, a: f64, g: &MacVelocity) {
        debug_assert_eq!(self.grid, g.grid);
        for (s, t) in self.u.iter_mut().zip(&g.u) {
            *s += a * t;
        }
        for (s, t) in self.w.iter_mut().zip(&g.w) {
            *s += a * t;
        }
    }
}
