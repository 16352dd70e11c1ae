//! Matrix-free Krylov solvers for the implicit substeps: Jacobi-preconditioned
//! conjugate gradients for the symmetric positive definite systems (viscous
//! momentum, pressure Poisson, singular elliptic Jacobian) and BiCGStab for
//! the nonsymmetric scalar-transport and Cahn-Hilliard Schur systems.
//!
//! Operators that map the zero-mean subspace into itself (Neumann Poisson,
//! the mass-conserving transport operators) are solved inside that subspace:
//! with `project_mean` set, every matrix and preconditioner application is
//! followed by a mean subtraction, which keeps the discrete mean laws exact
//! to rounding instead of to solver tolerance.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("{solver} stalled after {iters} iterations (residual {residual:.3e}, target {target:.3e})")]
    MaxIterations {
        solver: &'static str,
        iters: usize,
        residual: f64,
        target: f64,
    },
    #[error("{solver} breakdown: {detail}")]
    Breakdown { solver: &'static str, detail: String },
}

/// Matrix-free linear operator on flat vectors.
pub trait LinOp {
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn len(&self) -> usize;
}

/// Left preconditioner: `z ~ M^{-1} r`.
pub trait Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal (Jacobi) preconditioner over precomputed inverse entries.
pub struct Jacobi<'a>(pub &'a [f64]);

impl Precond for Jacobi<'_> {
    #[inline]
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for i in 0..r.len() {
            z[i] = r[i] * self.0[i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn subtract_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v {
        *x -= m;
    }
}

/// Jacobi-preconditioned CG for SPD systems. `tol_abs` bounds the final
/// unweighted l2 residual. With `project_mean`, the solve is restricted to
/// the zero-mean subspace (for the singular Neumann Poisson problem).
pub fn pcg(
    op: &dyn LinOp,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Precond,
    tol_abs: f64,
    max_iter: usize,
    project_mean: bool,
) -> Result<SolveStats, LinSolveError> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];

    if project_mean {
        subtract_mean(x);
    }
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if project_mean {
        subtract_mean(&mut r);
    }
    let mut rnorm = norm(&r);
    if rnorm <= tol_abs {
        return Ok(SolveStats {
            iterations: 0,
            residual: rnorm,
        });
    }

    precond.apply(&r, &mut z);
    if project_mean {
        subtract_mean(&mut z);
    }
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        if project_mean {
            subtract_mean(&mut ap);
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(LinSolveError::Breakdown {
                solver: "pcg",
                detail: format!("non-positive curvature p'Ap = {pap}"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm(&r);
        if rnorm <= tol_abs {
            if project_mean {
                subtract_mean(x);
            }
            return Ok(SolveStats {
                iterations: it,
                residual: rnorm,
            });
        }
        precond.apply(&r, &mut z);
        if project_mean {
            subtract_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinSolveError::MaxIterations {
        solver: "pcg",
        iters: max_iter,
        residual: rnorm,
        target: tol_abs,
    })
}

/// Jacobi-preconditioned BiCGStab for nonsymmetric systems; same contract as
/// [`pcg`]. Restarts once from the current iterate on inner-product breakdown.
pub fn bicgstab(
    op: &dyn LinOp,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Precond,
    tol_abs: f64,
    max_iter: usize,
    project_mean: bool,
) -> Result<SolveStats, LinSolveError> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);

    let mut r = vec![0.0; n];
    let mut rhat = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];

    if project_mean {
        subtract_mean(x);
    }
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if project_mean {
        subtract_mean(&mut r);
    }
    let mut rnorm = norm(&r);
    if rnorm <= tol_abs {
        return Ok(SolveStats {
            iterations: 0,
            residual: rnorm,
        });
    }

    rhat.copy_from_slice(&r);
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut restarted = false;

    let mut it = 0;
    while it < max_iter {
        it += 1;
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() < 1e-300 * rnorm.max(1.0) {
            if restarted {
                return Err(LinSolveError::Breakdown {
                    solver: "bicgstab",
                    detail: "rho breakdown after restart".into(),
                });
            }
            // Restart with a fresh shadow residual.
            rhat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            restarted = true;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut phat);
        if project_mean {
            subtract_mean(&mut phat);
        }
        op.apply(&phat, &mut v);
        if project_mean {
            subtract_mean(&mut v);
        }
        let rhat_v = dot(&rhat, &v);
        if rhat_v.abs() < 1e-300 {
            return Err(LinSolveError::Breakdown {
                solver: "bicgstab",
                detail: "orthogonality breakdown (rhat'v = 0)".into(),
            });
        }
        alpha = rho / rhat_v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s);
        if snorm <= tol_abs {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            if project_mean {
                subtract_mean(x);
            }
            return Ok(SolveStats {
                iterations: it,
                residual: snorm,
            });
        }
        precond.apply(&s, &mut shat);
        if project_mean {
            subtract_mean(&mut shat);
        }
        op.apply(&shat, &mut t);
        if project_mean {
            subtract_mean(&mut t);
        }
        let tt = dot(&t, &t);
        if tt <= 0.0 {
            return Err(LinSolveError::Breakdown {
                solver: "bicgstab",
                detail: "t vanished".into(),
            });
        }
        omega = dot(&t, &s) / tt;
        if omega.abs() < 1e-300 {
            return Err(LinSolveError::Breakdown {
                solver: "bicgstab",
                detail: "omega breakdown".into(),
            });
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = norm(&r);
        if rnorm <= tol_abs {
            if project_mean {
                subtract_mean(x);
            }
            return Ok(SolveStats {
                iterations: it,
                residual: rnorm,
            });
        }
    }
    Err(LinSolveError::MaxIterations {
        solver: "bicgstab",
        iters: max_iter,
        residual: rnorm,
        target: tol_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, ScalarField};
    use crate::ops::laplacian_neumann;

    struct Dense {
        a: Vec<Vec<f64>>,
    }
    impl LinOp for Dense {
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for (i, row) in self.a.iter().enumerate() {
                y[i] = row.iter().zip(x).map(|(c, v)| c * v).sum();
            }
        }
        fn len(&self) -> usize {
            self.a.len()
        }
    }

    #[test]
    fn pcg_solves_small_spd_system() {
        // Diagonally dominant symmetric matrix.
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 5.0, 2.0],
            vec![0.0, 2.0, 6.0],
        ];
        let op = Dense { a };
        let b = vec![1.0, -2.0, 3.0];
        let mut x = vec![0.0; 3];
        let inv_diag = vec![0.25, 0.2, 1.0 / 6.0];
        pcg(&op, &b, &mut x, &Jacobi(&inv_diag), 1e-13, 100, false).unwrap();
        let mut r = vec![0.0; 3];
        op.apply(&x, &mut r);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = vec![
            vec![5.0, 1.5, 0.0],
            vec![-1.0, 4.0, 1.0],
            vec![0.5, -2.0, 6.0],
        ];
        let op = Dense { a };
        let b = vec![2.0, 0.0, -1.0];
        let mut x = vec![0.0; 3];
        let inv_diag = vec![0.2, 0.25, 1.0 / 6.0];
        bicgstab(&op, &b, &mut x, &Jacobi(&inv_diag), 1e-13, 200, false).unwrap();
        let mut r = vec![0.0; 3];
        op.apply(&x, &mut r);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    struct NegLaplace {
        grid: Grid,
    }
    impl LinOp for NegLaplace {
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let f = ScalarField {
                grid: self.grid,
                values: x.to_vec(),
            };
            let lap = laplacian_neumann(&f);
            for (o, l) in y.iter_mut().zip(&lap.values) {
                *o = -l;
            }
        }
        fn len(&self) -> usize {
            self.grid.n_cells()
        }
    }

    #[test]
    fn projected_pcg_solves_singular_neumann_poisson() {
        let grid = Grid::unit(16);
        let op = NegLaplace { grid };
        // Consistent (zero-mean) right-hand side.
        let mut b = ScalarField::from_fn(grid, |x, y| {
            (2.0 * std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
        });
        let m = b.mean();
        b.add_constant(-m);
        let inv_diag: Vec<f64> = {
            let mut d = vec![0.0; grid.n_cells()];
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let mut s = 0.0;
                    if i > 0 {
                        s += 1.0 / (grid.hx * grid.hx);
                    }
                    if i + 1 < grid.nx {
                        s += 1.0 / (grid.hx * grid.hx);
                    }
                    if j > 0 {
                        s += 1.0 / (grid.hy * grid.hy);
                    }
                    if j + 1 < grid.ny {
                        s += 1.0 / (grid.hy * grid.hy);
                    }
                    d[grid.idx(i, j)] = 1.0 / s;
                }
            }
            d
        };
        let mut x = vec![0.0; grid.n_cells()];
        let stats = pcg(&op, &b.values, &mut x, &Jacobi(&inv_diag), 1e-12, 2000, true).unwrap();
        assert!(stats.residual <= 1e-12);
        // Solution has zero mean and satisfies the equation.
        let xm: f64 = x.iter().sum::<f64>() / x.len() as f64;
        assert!(xm.abs() < 1e-13);
        let mut y = vec![0.0; x.len()];
        op.apply(&x, &mut y);
        let err: f64 = y
            .iter()
            .zip(&b.values)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        assert!(err < 2e-12);
    }
}
