//! Implicit convex-split Cahn-Hilliard substep.
//!
//! Solves, for the new phase field `phi` and chemical potential `mu`,
//!
//! ```text
//! (phi - phi_n)/dt + div(v phi) = lap(mu) - alpha (phi - c0) + F
//! mu = A psi0'(phi) - A theta0 phi_n - B lap(phi) - chi sigma
//! ```
//!
//! with the convex part implicit and the concave part explicit, reduced by
//! substituting `mu` into the transport equation (Schur form). The nonlinear
//! system is solved by safeguarded Newton; each linear system is the
//! fourth-order operator `c I + div(v .) - lap(A psi0''(phi) .) + B lap^2`,
//! handled by Jacobi-preconditioned BiCGStab.
//!
//! The transport and diffusion terms have exactly zero area-weighted sum, so
//! the scheme's mean is known in closed form. The solve is carried out in the
//! zero-mean subspace around that exact mean, which makes the discrete mean
//! recurrence hold to rounding rather than to solver tolerance.

use super::{PhysParams, StepError, StepStats, StepperConfig, SimState};
use crate::grid::{Grid, MacVelocity, ScalarField};
use crate::linsolve::{bicgstab, LinOp};
use crate::ops::{advect_conservative, advect_into, laplacian_into, laplacian_neumann, AdvectScheme};
use crate::spectral::{Dct2D, SpectralPrecond};
use std::cell::RefCell;

pub struct ChResult {
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub newton_iters: usize,
    pub linear_iters: usize,
}

struct SchurOp<'a> {
    grid: Grid,
    vel: &'a MacVelocity,
    /// `1/dt + alpha`.
    c_coef: f64,
    /// `A psi0''(phi_k)` per cell.
    curvature: &'a [f64],
    b: f64,
    scheme: AdvectScheme,
    workspace: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl LinOp for SchurOp<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = self.grid;
        let mut ws = self.workspace.borrow_mut();
        let (w1, w2) = &mut *ws;
        laplacian_into(grid, x, w1);
        for i in 0..x.len() {
            w2[i] = self.curvature[i] * x[i] - self.b * w1[i];
        }
        laplacian_into(grid, w2, w1);
        advect_into(grid, &self.vel.u, &self.vel.w, x, self.scheme, y);
        for i in 0..x.len() {
            y[i] += self.c_coef * x[i] - w1[i];
        }
    }
    fn len(&self) -> usize {
        self.grid.n_cells()
    }
}

struct Residual<'a> {
    phi_old: &'a ScalarField,
    vel: &'a MacVelocity,
    /// Explicit part of the chemical potential:
    /// `-A theta0 phi_n - chi sigma_lag` per cell.
    mu_explicit: Vec<f64>,
    forcing: Option<&'a ScalarField>,
    params: &'a PhysParams,
    dt: f64,
    scheme: AdvectScheme,
}

impl Residual<'_> {
    /// Residual field and the chemical potential of the current iterate.
    fn eval(&self, phi: &ScalarField, clamp_events: &mut u64) -> (ScalarField, ScalarField) {
        let grid = phi.grid;
        let lap_phi = laplacian_neumann(phi);
        let mut mu = ScalarField::zeros(grid);
        for i in 0..grid.n_cells() {
            mu.values[i] = self.params.a
                * self
                    .params
                    .potential
                    .psi0_prime_clamped(phi.values[i], clamp_events)
                + self.mu_explicit[i]
                - self.params.b * lap_phi.values[i];
        }
        let lap_mu = laplacian_neumann(&mu);
        let adv = advect_conservative(self.vel, phi, self.scheme);
        let mut r = ScalarField::zeros(grid);
        let alpha = self.params.alpha;
        let c0 = self.params.c0;
        for i in 0..grid.n_cells() {
            r.values[i] = (phi.values[i] - self.phi_old.values[i]) / self.dt
                + adv.values[i]
                + alpha * (phi.values[i] - c0)
                - lap_mu.values[i];
        }
        if let Some(f) = self.forcing {
            for i in 0..grid.n_cells() {
                r.values[i] -= f.values[i];
            }
        }
        (r, mu)
    }
}

fn subtract_field_mean(f: &mut ScalarField) -> f64 {
    let m = f.mean();
    f.add_constant(-m);
    m
}

#[allow(clippy::too_many_arguments)]
pub(super) fn ch_substep_inner(
    phi_old: &ScalarField,
    vel: &MacVelocity,
    sigma_lag: &ScalarField,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
    t: f64,
    forcing: Option<&ScalarField>,
    stats: &mut StepStats,
) -> Result<ChResult, StepError> {
    let grid = phi_old.grid;
    let n = grid.n_cells();
    let area_w = grid.cell_area().sqrt();
    let singular = params.potential.is_singular();
    let barrier = 1.0 - params.potential.eps_barrier;
    let reject = |detail: String| StepError::Rejected {
        substep: "cahn-hilliard",
        t,
        detail,
    };

    let mut mu_explicit = vec![0.0; n];
    for i in 0..n {
        mu_explicit[i] = -params.a * params.potential.theta0 * phi_old.values[i]
            - params.chi * sigma_lag.values[i];
    }
    let res = Residual {
        phi_old,
        vel,
        mu_explicit,
        forcing,
        params,
        dt,
        scheme: cfg.advect_scheme(),
    };

    // Exact mean of the scheme: the transport and diffusion terms telescope,
    // so averaging the update gives
    //   (m - mean(phi_n))/dt + alpha (m - c0) = mean(F).
    let f_mean = forcing.map_or(0.0, |f| f.mean());
    let m_star = (phi_old.mean() + dt * (params.alpha * params.c0 + f_mean))
        / (1.0 + params.alpha * dt);
    if singular && m_star.abs() >= barrier {
        return Err(reject(format!(
            "prescribed phase mean {m_star} leaves the admissible interval"
        )));
    }

    // Start from the previous phase field shifted onto the exact mean,
    // shrunk toward the mean if the shift grazes the barrier.
    let mut phi = phi_old.clone();
    phi.add_constant(m_star - phi_old.mean());
    if singular && phi.linf() > barrier {
        let dev = phi.values.iter().map(|v| (v - m_star).abs()).fold(0.0, f64::max);
        let s = 0.999 * (barrier - m_star.abs()) / dev;
        for v in &mut phi.values {
            *v = m_star + s * (*v - m_star);
        }
    }

    let c_coef = 1.0 / dt + params.alpha;
    // Constant-coefficient spectral preconditioner around the mean
    // curvature; the symbol is updated per Newton iterate.
    let mut precond = SpectralPrecond::new(Dct2D::new(grid), c_coef, params.a, params.b);

    let mut lin_iters = 0usize;
    let (mut r, mut mu) = res.eval(&phi, &mut stats.clamp_events);
    // Only the zero-mean part of the residual is an equation; the mean part
    // vanishes identically for the exact-mean iterate (up to rounding).
    let r_mean = subtract_field_mean(&mut r);
    debug_assert!(r_mean.abs() < 1e-6 * (1.0 / dt), "mean defect {r_mean}");
    let mut rnorm = r.l2();

    let mut newton_iters = 0;
    for _ in 0..cfg.max_newton {
        if rnorm <= cfg.newton_tol {
            stats.ch_newton_iters += newton_iters;
            return Ok(ChResult {
                phi,
                mu,
                newton_iters,
                linear_iters: lin_iters,
            });
        }
        newton_iters += 1;

        let mut curvature = vec![0.0; n];
        for i in 0..n {
            curvature[i] = params.a
                * params
                    .potential
                    .psi0_second_clamped(phi.values[i], &mut stats.clamp_events);
        }
        let curvature_mean = curvature.iter().sum::<f64>() / n as f64;
        precond.set_symbol(c_coef, curvature_mean, params.b);
        let op = SchurOp {
            grid,
            vel,
            c_coef,
            curvature: &curvature,
            b: params.b,
            scheme: cfg.advect_scheme(),
            workspace: RefCell::new((vec![0.0; n], vec![0.0; n])),
        };

        let rhs: Vec<f64> = r.values.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; n];
        // Inexact Newton forcing: modest relative drop per iteration with an
        // absolute floor slaved to the outer tolerance.
        let tol_vec = (1e-4 * rnorm / area_w).max(0.02 * cfg.newton_tol / area_w);
        let solve = bicgstab(&op, &rhs, &mut delta, &precond, tol_vec, 40 * n, true);
        match solve {
            Ok(s) => {
                stats.ch_linear_iters += s.iterations;
                lin_iters += s.iterations;
            }
            Err(e) => return Err(reject(format!("Newton linear solve failed: {e}"))),
        }

        // Backtracking: stay inside the barrier (singular kind) and decrease
        // the residual.
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = phi.clone();
            for i in 0..n {
                trial.values[i] += s * delta[i];
            }
            if !singular || trial.linf() <= barrier {
                let (mut rt, mu_trial) = res.eval(&trial, &mut stats.clamp_events);
                subtract_field_mean(&mut rt);
                let rtn = rt.l2();
                // Accept on decrease, or outright convergence at the floor.
                if rtn < rnorm || rtn <= cfg.newton_tol {
                    phi = trial;
                    r = rt;
                    mu = mu_trial;
                    rnorm = rtn;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            return Err(reject(format!(
                "Newton line search stalled at residual {rnorm:.3e}"
            )));
        }
        debug_assert!(!singular || phi.linf() < 1.0);
    }
    if rnorm <= cfg.newton_tol {
        stats.ch_newton_iters += newton_iters;
        return Ok(ChResult {
            phi,
            mu,
            newton_iters,
            linear_iters: lin_iters,
        });
    }
    Err(reject(format!(
        "Newton did not converge in {} iterations (residual {rnorm:.3e}, tol {:.3e})",
        cfg.max_newton, cfg.newton_tol
    )))
}

/// Public single-substep entry: advance only the phase/chemical-potential
/// pair from `state` with the lagged velocity and nutrient.
pub fn ch_substep(
    state: &SimState,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<ChResult, StepError> {
    let mut stats = StepStats::default();
    ch_substep_inner(
        &state.phi,
        &state.v,
        &state.sigma,
        params,
        cfg,
        dt,
        state.t,
        None,
        &mut stats,
    )
}
