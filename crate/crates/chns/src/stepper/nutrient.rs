//! Implicit nutrient substep: advection-diffusion with active-transport
//! flux and consumption,
//!
//! ```text
//! (sigma - sigma_n)/dt + div(v sigma)
//!     = lap(sigma) - lambda lap(phi) - C h(phi) sigma + S
//! ```
//!
//! (using `lap(lambda (1 - phi)) = -lambda lap(phi)`), one linear solve per
//! step. Without consumption the operator maps the zero-mean subspace into
//! itself and the new mean is known exactly (`mean + dt mean(S)`), so the
//! solve is done around the prescribed mean. With consumption the mean
//! couples to `h(phi) sigma`; after the solve the iterate is shifted by the
//! (solver-tolerance-sized) constant that makes the discrete mean balance
//! exact.

use super::{PhysParams, StepError, StepStats, StepperConfig, SimState};
use crate::grid::{Grid, MacVelocity, ScalarField};
use crate::linsolve::{bicgstab, LinOp};
use crate::ops::{advect_into, laplacian_into, laplacian_neumann, AdvectScheme};
use crate::spectral::{Dct2D, SpectralPrecond};
use std::cell::RefCell;

struct TransportOp<'a> {
    grid: Grid,
    vel: &'a MacVelocity,
    /// `1/dt` plus the consumption coefficient `C h(phi)` per cell.
    zeroth_order: &'a [f64],
    scheme: AdvectScheme,
    workspace: RefCell<Vec<f64>>,
}

impl LinOp for TransportOp<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = self.grid;
        let mut lap = self.workspace.borrow_mut();
        laplacian_into(grid, x, &mut lap);
        advect_into(grid, &self.vel.u, &self.vel.w, x, self.scheme, y);
        for i in 0..x.len() {
            y[i] += self.zeroth_order[i] * x[i] - lap[i];
        }
    }
    fn len(&self) -> usize {
        self.grid.n_cells()
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn nutrient_substep_inner(
    sigma_old: &ScalarField,
    vel: &MacVelocity,
    phi_new: &ScalarField,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
    t: f64,
    source_next: &ScalarField,
    stats: &mut StepStats,
) -> Result<ScalarField, StepError> {
    let grid = sigma_old.grid;
    let n = grid.n_cells();
    let reject = |detail: String| StepError::Rejected {
        substep: "nutrient",
        t,
        detail,
    };

    let consumption = params.consumption;
    let mut zeroth_order = vec![0.0; n];
    let mut h_field = vec![0.0; n];
    for i in 0..n {
        h_field[i] = params.h(phi_new.values[i]);
        zeroth_order[i] = 1.0 / dt + consumption * h_field[i];
    }
    let op = TransportOp {
        grid,
        vel,
        zeroth_order: &zeroth_order,
        scheme: cfg.advect_scheme(),
        workspace: RefCell::new(vec![0.0; n]),
    };

    let lap_phi = laplacian_neumann(phi_new);
    let mut rhs = ScalarField::zeros(grid);
    for i in 0..n {
        rhs.values[i] = sigma_old.values[i] / dt - params.lambda * lap_phi.values[i]
            + source_next.values[i];
    }

    let z_mean = zeroth_order.iter().sum::<f64>() / n as f64;
    let precond = SpectralPrecond::new(Dct2D::new(grid), z_mean, 1.0, 0.0);
    let tol_vec = cfg.linear_tol / grid.cell_area().sqrt();

    let mut sigma = sigma_old.clone();
    if consumption == 0.0 {
        // The new mean is exact: transport, diffusion and the interface flux
        // all telescope to zero.
        let m_star = sigma_old.mean() + dt * source_next.mean();
        sigma.add_constant(m_star - sigma.mean());
        // Solve for the zero-mean fluctuation around the prescribed mean.
        let mut shifted = vec![0.0; n];
        op.apply(&vec![m_star; n], &mut shifted);
        let mut rhs_fluct: Vec<f64> = (0..n).map(|i| rhs.values[i] - shifted[i]).collect();
        let mean_defect = rhs_fluct.iter().sum::<f64>() / n as f64;
        debug_assert!(
            mean_defect.abs() <= 1e-7 / dt,
            "inconsistent fluctuation mean {mean_defect}"
        );
        for v in &mut rhs_fluct {
            *v -= mean_defect;
        }
        let mut fluct: Vec<f64> = sigma.values.iter().map(|v| v - m_star).collect();
        let stats_lin = bicgstab(&op, &rhs_fluct, &mut fluct, &precond, tol_vec, 40 * n, true)
            .map_err(|e| reject(format!("transport solve failed: {e}")))?;
        stats.nutrient_iters += stats_lin.iterations;
        for i in 0..n {
            sigma.values[i] = m_star + fluct[i];
        }
    } else {
        let stats_lin = bicgstab(
            &op,
            &rhs.values,
            &mut sigma.values,
            &precond,
            tol_vec,
            40 * n,
            false,
        )
        .map_err(|e| reject(format!("transport solve failed: {e}")))?;
        stats.nutrient_iters += stats_lin.iterations;
        // Shift by a constant so the discrete mean balance
        //   mean(sigma') = mean(sigma) + dt (mean(S) - C mean(h sigma'))
        // holds exactly; the shift is bounded by the solver tolerance.
        let h_mean = h_field.iter().sum::<f64>() / n as f64;
        let hs_mean = h_field
            .iter()
            .zip(&sigma.values)
            .map(|(h, s)| h * s)
            .sum::<f64>()
            / n as f64;
        let target = sigma_old.mean() + dt * (source_next.mean() - consumption * hs_mean);
        let denom = 1.0 + dt * consumption * h_mean;
        if denom.abs() > 1e-8 {
            sigma.add_constant((target - sigma.mean()) / denom);
        }
    }

    if !sigma.is_finite() {
        return Err(reject("nutrient solve produced non-finite values".into()));
    }
    Ok(sigma)
}

/// Public single-substep entry: advance only the nutrient from `state`,
/// given the already-updated phase field of the same step.
pub fn nutrient_substep(
    state: &SimState,
    phi_new: &ScalarField,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<ScalarField, StepError> {
    let mut stats = StepStats::default();
    let src = params.source.field(state.sigma.grid, state.t + dt);
    nutrient_substep_inner(
        &state.sigma,
        &state.v,
        phi_new,
        params,
        cfg,
        dt,
        state.t,
        &src,
        &mut stats,
    )
}
