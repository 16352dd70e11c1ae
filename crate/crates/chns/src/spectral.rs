//! Cosine-basis transforms on the cell-centered grid.
//!
//! The mirror-ghost Neumann Laplacian is exactly diagonalized by the DCT-II
//! basis `cos(pi k (i + 1/2)/n)` with eigenvalues `-(2 - 2 cos(pi k/n))/h^2`
//! per direction. This gives a direct solver for the pressure Poisson
//! problem and constant-coefficient spectral preconditioners for the
//! fourth-order Cahn-Hilliard and transport systems. Transforms are plain
//! matrix products against precomputed basis tables, which is plenty at desk
//! scale.

use crate::grid::Grid;
use crate::linsolve::Precond;
use std::cell::RefCell;

struct DctTable {
    n: usize,
    /// `basis[k * n + i] = cos(pi k (i + 1/2) / n)`.
    basis: Vec<f64>,
}

impl DctTable {
    fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                basis[k * n + i] =
                    (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
            }
        }
        Self { n, basis }
    }

    /// Forward coefficients `X_k = sum_i cos(pi k (i+1/2)/n) x_i`.
    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.n {
            let row = &self.basis[k * self.n..(k + 1) * self.n];
            out[k] = row.iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }

    /// Inverse `x_i = X_0/n + (2/n) sum_{k>=1} cos(pi k (i+1/2)/n) X_k`.
    #[inline]
    fn inverse(&self, xhat: &[f64], out: &mut [f64]) {
        let n = self.n;
        let scale = 2.0 / n as f64;
        for v in out.iter_mut() {
            *v = xhat[0] / n as f64;
        }
        for k in 1..n {
            let row = &self.basis[k * n..(k + 1) * n];
            let c = scale * xhat[k];
            for i in 0..n {
                out[i] += c * row[i];
            }
        }
    }
}

/// Two-dimensional DCT on row-major cell data, with scratch buffers.
pub struct Dct2D {
    grid: Grid,
    tx: DctTable,
    ty: DctTable,
    scratch: RefCell<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl Dct2D {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            tx: DctTable::new(grid.nx),
            ty: DctTable::new(grid.ny),
            scratch: RefCell::new((vec![0.0; n], vec![0.0; n], vec![0.0; grid.nx.max(grid.ny)])),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn rows_forward(&self, src: &[f64], dst: &mut [f64], line: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            self.tx.forward(&src[j * nx..(j + 1) * nx], &mut line[..nx]);
            dst[j * nx..(j + 1) * nx].copy_from_slice(&line[..nx]);
        }
    }

    fn rows_inverse(&self, src: &[f64], dst: &mut [f64], line: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            self.tx.inverse(&src[j * nx..(j + 1) * nx], &mut line[..nx]);
            dst[j * nx..(j + 1) * nx].copy_from_slice(&line[..nx]);
        }
    }

    fn cols_forward(&self, src: &[f64], dst: &mut [f64], line: &mut [f64], col: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for i in 0..nx {
            for j in 0..ny {
                col[j] = src[j * nx + i];
            }
            self.ty.forward(&col[..ny], &mut line[..ny]);
            for j in 0..ny {
                dst[j * nx + i] = line[j];
            }
        }
    }

    fn cols_inverse(&self, src: &[f64], dst: &mut [f64], line: &mut [f64], col: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for i in 0..nx {
            for j in 0..ny {
                col[j] = src[j * nx + i];
            }
            self.ty.inverse(&col[..ny], &mut line[..ny]);
            for j in 0..ny {
                dst[j * nx + i] = line[j];
            }
        }
    }

    /// `out = T^{-1}[ f(lambda) .* T[x] ]` with the given multiplier over the
    /// eigenvalue table of the negative Neumann Laplacian.
    pub fn apply_multiplier(&self, x: &[f64], multiplier: &[f64], out: &mut [f64]) {
        let mut scratch = self.scratch.borrow_mut();
        let (a, b, line) = &mut *scratch;
        let mut col = vec![0.0; self.grid.ny];
        self.rows_forward(x, a, line);
        self.cols_forward(a, b, line, &mut col);
        for (v, m) in b.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.cols_inverse(b, a, line, &mut col);
        self.rows_inverse(a, out, line);
    }
}

/// Eigenvalues of the negative Neumann Laplacian on the grid, laid out
/// row-major over mode indices `(k, l)`.
pub fn neg_laplacian_eigenvalues(grid: Grid) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_cells()];
    for l in 0..grid.ny {
        let ey = (2.0 - 2.0 * (std::f64::consts::PI * l as f64 / grid.ny as f64).cos())
            / (grid.hy * grid.hy);
        for k in 0..grid.nx {
            let ex = (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / grid.nx as f64).cos())
                / (grid.hx * grid.hx);
            out[l * grid.nx + k] = ex + ey;
        }
    }
    out
}

/// Constant-coefficient spectral preconditioner with symbol
/// `c0 + c1 lambda + c2 lambda^2` in the cosine basis.
pub struct SpectralPrecond {
    dct: Dct2D,
    inv_symbol: Vec<f64>,
}

impl SpectralPrecond {
    pub fn new(dct: Dct2D, c0: f64, c1: f64, c2: f64) -> Self {
        let inv_symbol = neg_laplacian_eigenvalues(dct.grid())
            .iter()
            .map(|&l| 1.0 / (c0 + c1 * l + c2 * l * l))
            .collect();
        Self { dct, inv_symbol }
    }

    /// Reuse the transform tables with new symbol coefficients.
    pub fn set_symbol(&mut self, c0: f64, c1: f64, c2: f64) {
        for (s, &l) in self
            .inv_symbol
            .iter_mut()
            .zip(neg_laplacian_eigenvalues(self.dct.grid()).iter())
        {
            *s = 1.0 / (c0 + c1 * l + c2 * l * l);
        }
    }
}

impl Precond for SpectralPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.dct.apply_multiplier(r, &self.inv_symbol, z);
    }
}

/// Direct solve of the Neumann Poisson problem `-lap p = rhs` (consistent
/// right-hand side) in the cosine basis; the returned field has zero mean.
pub fn poisson_neumann_direct(dct: &Dct2D, rhs: &[f64], out: &mut [f64]) {
    let grid = dct.grid();
    let mut inv = neg_laplacian_eigenvalues(grid);
    inv[0] = f64::INFINITY; // project out the constant mode
    for v in inv.iter_mut() {
        *v = if v.is_finite() { 1.0 / *v } else { 0.0 };
    }
    dct.apply_multiplier(rhs, &inv, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;
    use crate::ops::laplacian_neumann;

    fn rand_field(grid: Grid, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        (0..grid.n_cells())
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn transform_roundtrips() {
        let grid = Grid::new(12, 9, 1.0, 1.4);
        let dct = Dct2D::new(grid);
        let x = rand_field(grid, 3);
        let ones = vec![1.0; grid.n_cells()];
        let mut out = vec![0.0; grid.n_cells()];
        dct.apply_multiplier(&x, &ones, &mut out);
        for (a, b) in x.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_match_the_stencil() {
        // Applying the actual discrete Laplacian to a cosine mode scales it
        // by the tabulated eigenvalue.
        let grid = Grid::new(16, 8, 1.0, 2.0);
        let (k, l) = (3usize, 2usize);
        let mode = ScalarField::from_fn(grid, |x, y| {
            // Cell centers: x = (i + 1/2) hx.
            (std::f64::consts::PI * k as f64 * x / grid.lx).cos()
                * (std::f64::consts::PI * l as f64 * y / grid.ly).cos()
        });
        let lap = laplacian_neumann(&mode);
        let eig = neg_laplacian_eigenvalues(grid)[l * grid.nx + k];
        for (lv, mv) in lap.values.iter().zip(&mode.values) {
            assert!(
                (lv + eig * mv).abs() <= 1e-10 * (1.0 + eig),
                "eigenvalue mismatch: {lv} vs {}",
                -eig * mv
            );
        }
    }

    #[test]
    fn direct_poisson_solver_inverts_the_laplacian() {
        let grid = Grid::new(24, 16, 1.0, 1.0);
        let dct = Dct2D::new(grid);
        let mut rhs = rand_field(grid, 17);
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        for v in rhs.iter_mut() {
            *v -= mean;
        }
        let mut p = vec![0.0; grid.n_cells()];
        poisson_neumann_direct(&dct, &rhs, &mut p);
        let pf = ScalarField {
            grid,
            values: p.clone(),
        };
        let lap = laplacian_neumann(&pf);
        for (l, r) in lap.values.iter().zip(&rhs) {
            assert!((l + r).abs() < 1e-9, "residual {l} vs {r}");
        }
        let pmean = p.iter().sum::<f64>() / p.len() as f64;
        assert!(pmean.abs() < 1e-12);
    }
}
