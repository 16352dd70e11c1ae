//! Damped-Newton solver for the singular Neumann problem
//! `-B lap(u) + A psi0'(u) = f`, `du/dn = 0`, together with the separation
//! margin `1 - ||u||_inf` it certifies. The monotone singular nonlinearity
//! keeps every Newton linear system symmetric positive definite
//! (`-B lap + A psi0''(u) I` with `psi0'' >= theta > 0`), and the backtracking
//! safeguard keeps all iterates strictly inside (-1, 1).
//!
//! The same Newton kernel pattern is reused by the Cahn-Hilliard substep of
//! the time integrator.

use crate::grid::ScalarField;
use crate::linsolve::{pcg, Jacobi, LinOp, LinSolveError, SolveStats};
use crate::ops::{laplacian_neumann, neg_laplacian_diag};
use crate::potential::Potential;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EllipticError {
    #[error("Newton did not converge in {iters} iterations (best residual {best_residual:.3e}); history: {history:?}")]
    NonConvergence {
        iters: usize,
        best_residual: f64,
        history: Vec<f64>,
        /// Best iterate seen, for post-mortem inspection.
        best_iterate: Box<ScalarField>,
    },
    #[error("line search could not find an admissible damped step at iteration {iter}")]
    LineSearchFailed { iter: usize },
    #[error("linear sub-solver failed: {0}")]
    Linear(#[from] LinSolveError),
    #[error("invalid problem data: {0}")]
    BadData(String),
}

/// Data for `-B lap(u) + A psi0'(u) = f` with homogeneous Neumann conditions.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub a: f64,
    pub b: f64,
    pub potential: Potential,
    pub f: ScalarField,
    /// Convergence threshold on the area-weighted l2 residual.
    pub tol_residual: f64,
    pub max_newton: usize,
}

impl EllipticProblem {
    pub fn new(a: f64, b: f64, potential: Potential, f: ScalarField) -> Self {
        assert!(a > 0.0 && b > 0.0, "coefficients A, B must be positive");
        Self {
            a,
            b,
            potential,
            f,
            tol_residual: 1e-10,
            max_newton: 50,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_residual = tol;
        self
    }
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub u: ScalarField,
    pub newton_iters: usize,
    pub final_residual: f64,
    /// `1 - ||u||_inf`, strictly positive for the singular potential.
    pub margin: f64,
    pub residual_history: Vec<f64>,
    pub linear_iters: usize,
}

/// Separation margin `1 - ||u||_inf`; non-positive values flag an invalid
/// phase field and are left to the caller to interpret.
pub fn separation_margin(u: &ScalarField) -> f64 {
    1.0 - u.linf()
}

struct Jacobian<'a> {
    prob: &'a EllipticProblem,
    /// `A psi0''(u)` at the current iterate.
    curvature: Vec<f64>,
}

impl LinOp for Jacobian<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let f = ScalarField {
            grid: self.prob.f.grid,
            values: x.to_vec(),
        };
        let lap = laplacian_neumann(&f);
        for i in 0..x.len() {
            y[i] = -self.prob.b * lap.values[i] + self.curvature[i] * x[i];
        }
    }
    fn len(&self) -> usize {
        self.prob.f.grid.n_cells()
    }
}

fn residual(prob: &EllipticProblem, u: &ScalarField, clamp_events: &mut u64) -> ScalarField {
    let lap = laplacian_neumann(u);
    let mut r = ScalarField::zeros(u.grid);
    for i in 0..r.values.len() {
        r.values[i] = -prob.b * lap.values[i]
            + prob.a * prob.potential.psi0_prime_clamped(u.values[i], clamp_events)
            - prob.f.values[i];
    }
    r
}

/// Default initial guess: the constant `clamp(mean(f) / (A * s), +-0.9)` with
/// `s` a curvature scale of the potential. Immaterial by uniqueness.
pub fn default_initial_guess(prob: &EllipticProblem) -> ScalarField {
    let p = &prob.potential;
    let scale = p.psi0_second(0.0).unwrap_or(p.theta).max(p.theta).max(1e-8);
    let c = (prob.f.mean() / (prob.a * scale)).clamp(-0.9, 0.9);
    ScalarField::constant(prob.f.grid, c)
}

/// Solve the singular Neumann problem by damped Newton iteration.
///
/// `u_init` is clamped into `||u||_inf <= 1 - 1e-8` if necessary; pass `None`
/// for the default constant guess. Each accepted step decreases the residual
/// and keeps the iterate strictly separated from the pure states.
pub fn solve_singular_neumann(
    prob: &EllipticProblem,
    u_init: Option<&ScalarField>,
) -> Result<EllipticSolution, EllipticError> {
    if !prob.f.is_finite() {
        return Err(EllipticError::BadData("right-hand side not finite".into()));
    }
    let grid = prob.f.grid;
    let n = grid.n_cells();
    let area_w = grid.cell_area().sqrt();
    let singular = prob.potential.is_singular();
    let barrier = 1.0 - prob.potential.eps_barrier;

    let mut u = match u_init {
        Some(f0) => {
            let mut u = f0.clone();
            for v in &mut u.values {
                *v = v.clamp(-(1.0 - 1e-8), 1.0 - 1e-8);
            }
            u
        }
        None => default_initial_guess(prob),
    };

    // Iterates are kept inside the barrier by the line search; the counter
    // stays at zero unless the safeguard itself fails.
    let mut clamp_events = 0u64;
    let neg_lap_diag = neg_laplacian_diag(grid);
    let mut history = Vec::new();
    let mut best: (f64, ScalarField) = (f64::INFINITY, u.clone());
    let mut linear_iters = 0usize;

    let mut r = residual(prob, &u, &mut clamp_events);
    let mut rnorm = r.l2();
    history.push(rnorm);

    for iter in 0..prob.max_newton {
        if rnorm <= prob.tol_residual {
            return Ok(EllipticSolution {
                margin: separation_margin(&u),
                u,
                newton_iters: iter,
                final_residual: rnorm,
                residual_history: history,
                linear_iters,
            });
        }
        if rnorm < best.0 {
            best = (rnorm, u.clone());
        }

        let mut curvature = vec![0.0; n];
        for i in 0..n {
            curvature[i] =
                prob.a * prob.potential.psi0_second_clamped(u.values[i], &mut clamp_events);
        }
        let jac = Jacobian { prob, curvature };
        let mut inv_diag = vec![0.0; n];
        for i in 0..n {
            inv_diag[i] = 1.0 / (prob.b * neg_lap_diag[i] + jac.curvature[i]).max(1e-300);
        }

        // Inexact Newton: the linear residual is slaved two orders below the
        // outer tolerance (in the same area-weighted norm).
        let tol_vec = (1e-2 * prob.tol_residual / area_w).max(1e-4 * rnorm / area_w * 1e-2);
        let mut delta = vec![0.0; n];
        let rhs: Vec<f64> = r.values.iter().map(|v| -v).collect();
        let stats: SolveStats = pcg(&jac, &rhs, &mut delta, &Jacobi(&inv_diag), tol_vec, 50 * n, false)?;
        linear_iters += stats.iterations;

        // Backtracking: stay inside the barrier and decrease the residual.
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            for i in 0..n {
                trial.values[i] += s * delta[i];
            }
            let inside = !singular || trial.linf() <= barrier;
            if inside {
                let rt = residual(prob, &trial, &mut clamp_events);
                let rtn = rt.l2();
                if rtn < rnorm {
                    u = trial;
                    r = rt;
                    rnorm = rtn;
                    history.push(rnorm);
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            return Err(EllipticError::LineSearchFailed { iter });
        }
        debug_assert!(!singular || u.linf() < 1.0);
    }

    if rnorm <= prob.tol_residual {
        return Ok(EllipticSolution {
            margin: separation_margin(&u),
            u,
            newton_iters: prob.max_newton,
            final_residual: rnorm,
            residual_history: history,
            linear_iters,
        });
    }
    if rnorm < best.0 {
        best = (rnorm, u);
    }
    Err(EllipticError::NonConvergence {
        iters: prob.max_newton,
        best_residual: best.0,
        history,
        best_iterate: Box::new(best.1),
    })
}

/// One row of a [`margin_vs_data_bound`] report.
#[derive(Debug, Clone)]
pub struct MarginEntry {
    pub f_l2: f64,
    pub margin: f64,
    pub psi0_prime_linf: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone)]
pub struct MarginReport {
    pub entries: Vec<MarginEntry>,
    pub all_margins_positive: bool,
}

/// Solve a family of problems (typically with data scaled by increasing
/// factors) and report how the separation margin responds to the data size.
/// Solver failures propagate; positivity of every margin is reported for the
/// caller to assert.
pub fn margin_vs_data_bound(problems: &[EllipticProblem]) -> Result<MarginReport, EllipticError> {
    let mut entries = Vec::with_capacity(problems.len());
    for prob in problems {
        let sol = solve_singular_neumann(prob, None)?;
        let mut events = 0u64;
        let psi0_prime_linf = sol
            .u
            .values
            .iter()
            .map(|&v| {
                prob.potential
                    .psi0_prime_clamped(v, &mut events)
                    .abs()
            })
            .fold(0.0f64, f64::max);
        entries.push(MarginEntry {
            f_l2: prob.f.l2(),
            margin: sol.margin,
            psi0_prime_linf,
            newton_iters: sol.newton_iters,
        });
    }
    let all_margins_positive = entries.iter().all(|e| e.margin > 0.0);
    Ok(MarginReport {
        entries,
        all_margins_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn log_potential() -> Potential {
        Potential::logarithmic(1.0, 2.0)
    }

    #[test]
    fn zero_data_gives_zero_solution_with_full_margin() {
        let grid = Grid::unit(16);
        let prob = EllipticProblem::new(1.0, 1.0, log_potential(), ScalarField::zeros(grid));
        let sol = solve_singular_neumann(&prob, None).unwrap();
        assert!(sol.u.linf() < 1e-12);
        assert_eq!(sol.margin, 1.0 - sol.u.linf());
        assert!(sol.final_residual <= prob.tol_residual);
    }

    #[test]
    fn constant_data_recovers_closed_form() {
        // psi0'(u) = ln 3 with theta = 1 forces u = 0.8.
        let grid = Grid::unit(16);
        let f = ScalarField::constant(grid, 3.0f64.ln());
        let prob = EllipticProblem::new(1.0, 1.0, log_potential(), f);
        let sol = solve_singular_neumann(&prob, None).unwrap();
        for &v in &sol.u.values {
            assert!((v - 0.8).abs() < 1e-9, "got {v}");
        }
        assert!((sol.margin - 0.2).abs() < 1e-9);
    }

    #[test]
    fn discrete_manufactured_solution_is_recovered() {
        let grid = Grid::new(24, 20, 1.0, 1.0);
        let target = ScalarField::from_fn(grid, |x, y| {
            0.5 * (PI * x / grid.lx).cos() * (PI * y / grid.ly).cos()
        });
        let pot = log_potential();
        let (a, b) = (1.3, 0.7);
        let lap = laplacian_neumann(&target);
        let mut f = ScalarField::zeros(grid);
        for i in 0..grid.n_cells() {
            f.values[i] = -b * lap.values[i] + a * pot.psi0_prime(target.values[i]).unwrap();
        }
        let prob = EllipticProblem::new(a, b, pot, f);
        let sol = solve_singular_neumann(&prob, None).unwrap();
        let mut diff = sol.u.clone();
        diff.axpy(-1.0, &target);
        assert!(
            diff.l2() < 1e-8,
            "recovery error {} exceeds tolerance",
            diff.l2()
        );
    }

    #[test]
    fn solution_is_independent_of_initialization() {
        let grid = Grid::unit(12);
        let f = ScalarField::from_fn(grid, |x, y| (2.0 * PI * x).cos() + 0.5 * (PI * y).cos());
        let prob = EllipticProblem::new(1.0, 0.5, log_potential(), f);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut solutions = Vec::new();
        for _ in 0..10 {
            let mut init = ScalarField::zeros(grid);
            for v in &mut init.values {
                *v = rng.gen_range(-0.5..0.5);
            }
            solutions.push(solve_singular_neumann(&prob, Some(&init)).unwrap().u);
        }
        for s in &solutions[1..] {
            let mut diff = s.clone();
            diff.axpy(-1.0, &solutions[0]);
            assert!(diff.l2() <= 10.0 * prob.tol_residual);
        }
    }

    #[test]
    fn residual_history_is_monotone() {
        let grid = Grid::unit(12);
        let f = ScalarField::from_fn(grid, |x, _| 2.0 * (PI * x).cos());
        let prob = EllipticProblem::new(1.0, 1.0, log_potential(), f);
        let sol = solve_singular_neumann(&prob, None).unwrap();
        for w in sol.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn comparison_principle_for_constant_data() {
        let grid = Grid::unit(8);
        let pot = log_potential();
        let solve_const = |c: f64| {
            let prob = EllipticProblem::new(1.0, 1.0, pot, ScalarField::constant(grid, c));
            solve_singular_neumann(&prob, None).unwrap().u
        };
        let u1 = solve_const(0.5);
        let u2 = solve_const(1.0);
        for (a, b) in u1.values.iter().zip(&u2.values) {
            assert!(a <= b);
        }
    }

    #[test]
    fn margin_family_follows_hyperbolic_tangent_law() {
        let grid = Grid::unit(8);
        let pot = log_potential();
        let problems: Vec<EllipticProblem> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|&s| {
                EllipticProblem::new(
                    1.0,
                    1.0,
                    pot,
                    ScalarField::constant(grid, s * 3.0f64.ln()),
                )
            })
            .collect();
        let report = margin_vs_data_bound(&problems).unwrap();
        assert!(report.all_margins_positive);
        assert!((report.entries[0].margin - 1.0).abs() < 1e-10);
        for (entry, s) in report.entries.iter().zip([0.0, 1.0, 2.0, 4.0]) {
            let expected = 1.0 - (s * 3.0f64.ln()).tanh();
            assert!(
                (entry.margin - expected).abs() < 1e-8,
                "s={s}: margin {} vs expected {expected}",
                entry.margin
            );
        }
        // Margins shrink monotonically as the data grows.
        for w in report.entries.windows(2) {
            assert!(w[1].margin < w[0].margin || w[0].margin == 1.0 && w[1].margin < 1.0);
        }
    }

    #[test]
    fn one_hot_cell_margin() {
        let grid = Grid::unit(8);
        let mut u = ScalarField::zeros(grid);
        u.values[17] = 0.99;
        assert!((separation_margin(&u) - 0.01).abs() < 1e-12);
    }
}
