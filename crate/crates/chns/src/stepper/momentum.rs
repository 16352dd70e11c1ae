//! Variable-viscosity projection substep.
//!
//! (i) implicit momentum solve for the tentative velocity
//! `v*/dt - div(2 eta(phi) D v*) = v_n/dt - (v_n . grad) v_n + (mu + chi sigma) grad(phi) + F`,
//! (ii) pressure Poisson solve `lap(p) = div(v*)/dt` with Neumann walls,
//! (iii) correction `v = v* - dt grad(p)`, which leaves
//! `||div v||_inf <= projection_tol` because the discrete Laplacian is
//! exactly the divergence of the discrete gradient.
//!
//! The viscous operator is the gradient of the discrete dissipation form
//! (cell-centered normal strains, node-centered shear strains with linearly
//! reflected tangential ghosts), hence symmetric positive definite together
//! with the `1/dt` mass term; both solves use Jacobi-preconditioned CG.

use super::{PhysParams, StepError, StepStats, StepperConfig, SimState};
use crate::grid::{Grid, MacVelocity, ScalarField};
use crate::linsolve::{pcg, Jacobi, LinOp};
use crate::ops::{divergence, gradient};
use crate::spectral::{poisson_neumann_direct, Dct2D};

pub struct NsResult {
    pub v: MacVelocity,
    pub p: ScalarField,
    pub momentum_iters: usize,
    pub poisson_iters: usize,
}

/// Viscosity at cell centers from the phase field.
pub(super) fn eta_cells(phi: &ScalarField, params: &PhysParams) -> Vec<f64> {
    phi.values.iter().map(|&r| params.eta(r)).collect()
}

/// Viscosity at grid nodes: average of the adjacent cells, which under the
/// Neumann mirror ghosts reduces to the mean of the available cells.
pub(super) fn eta_nodes(grid: Grid, eta_c: &[f64]) -> Vec<f64> {
    let nx = grid.nx;
    let ny = grid.ny;
    let mut out = vec![0.0; (nx + 1) * (ny + 1)];
    for jn in 0..=ny {
        for in_ in 0..=nx {
            let mut sum = 0.0;
            let mut count = 0.0;
            let ilo = in_.saturating_sub(1);
            let ihi = in_.min(nx - 1);
            let jlo = jn.saturating_sub(1);
            let jhi = jn.min(ny - 1);
            let mut i = ilo;
            while i <= ihi {
                let mut j = jlo;
                while j <= jhi {
                    sum += eta_c[grid.idx(i, j)];
                    count += 1.0;
                    j += 1;
                }
                i += 1;
            }
            out[jn * (nx + 1) + in_] = sum / count;
        }
    }
    out
}

/// Interior-face unknown layout: all u faces (i in 1..nx) first, then all
/// w faces (j in 1..ny).
struct FaceLayout {
    grid: Grid,
    n_u: usize,
}

impl FaceLayout {
    fn new(grid: Grid) -> Self {
        Self {
            grid,
            n_u: (grid.nx - 1) * grid.ny,
        }
    }
    fn len(&self) -> usize {
        self.n_u + self.grid.nx * (self.grid.ny - 1)
    }
    #[inline]
    fn ku(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..self.grid.nx).contains(&i));
        j * (self.grid.nx - 1) + (i - 1)
    }
    #[inline]
    fn kw(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..self.grid.ny).contains(&j));
        self.n_u + (j - 1) * self.grid.nx + i
    }

    fn pack(&self, v: &MacVelocity, out: &mut [f64]) {
        let g = self.grid;
        for j in 0..g.ny {
            for i in 1..g.nx {
                out[self.ku(i, j)] = v.u[g.uidx(i, j)];
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                out[self.kw(i, j)] = v.w[g.widx(i, j)];
            }
        }
    }

    fn unpack(&self, x: &[f64], v: &mut MacVelocity) {
        let g = self.grid;
        for j in 0..g.ny {
            for i in 1..g.nx {
                v.u[g.uidx(i, j)] = x[self.ku(i, j)];
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                v.w[g.widx(i, j)] = x[self.kw(i, j)];
            }
        }
        v.enforce_no_penetration();
    }
}

/// Shear strain rate `du/dy + dw/dx` at node `(i, j)`, with linear ghost
/// reflection of the tangential components across the walls and the exact
/// zero normal components on the walls themselves.
#[inline]
fn shear_at_node(v: &MacVelocity, i: usize, j: usize) -> f64 {
    let g = v.grid;
    let du_dy = if j == 0 {
        2.0 * v.u[g.uidx(i, 0)] / g.hy
    } else if j == g.ny {
        -2.0 * v.u[g.uidx(i, g.ny - 1)] / g.hy
    } else {
        (v.u[g.uidx(i, j)] - v.u[g.uidx(i, j - 1)]) / g.hy
    };
    let dw_dx = if i == 0 {
        2.0 * v.w[g.widx(0, j)] / g.hx
    } else if i == g.nx {
        -2.0 * v.w[g.widx(g.nx - 1, j)] / g.hx
    } else {
        (v.w[g.widx(i, j)] - v.w[g.widx(i - 1, j)]) / g.hx
    };
    du_dy + dw_dx
}

/// `y = x/dt - div(2 eta D x)` on the interior faces.
struct MomentumOp<'a> {
    layout: &'a FaceLayout,
    dt_inv: f64,
    eta_c: &'a [f64],
    eta_n: &'a [f64],
}

impl MomentumOp<'_> {
    fn node_eta(&self, i: usize, j: usize) -> f64 {
        self.eta_n[j * (self.layout.grid.nx + 1) + i]
    }
}

impl LinOp for MomentumOp<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.layout.grid;
        let mut v = MacVelocity::zeros(g);
        self.layout.unpack(x, &mut v);

        // x-momentum rows.
        for j in 0..g.ny {
            for i in 1..g.nx {
                let txx_r = 2.0 * self.eta_c[g.idx(i, j)]
                    * (v.u[g.uidx(i + 1, j)] - v.u[g.uidx(i, j)])
                    / g.hx;
                let txx_l = 2.0 * self.eta_c[g.idx(i - 1, j)]
                    * (v.u[g.uidx(i, j)] - v.u[g.uidx(i - 1, j)])
                    / g.hx;
                let txy_t = self.node_eta(i, j + 1) * shear_at_node(&v, i, j + 1);
                let txy_b = self.node_eta(i, j) * shear_at_node(&v, i, j);
                let div_tau = (txx_r - txx_l) / g.hx + (txy_t - txy_b) / g.hy;
                y[self.layout.ku(i, j)] = self.dt_inv * v.u[g.uidx(i, j)] - div_tau;
            }
        }
        // y-momentum rows.
        for j in 1..g.ny {
            for i in 0..g.nx {
                let tyy_t = 2.0 * self.eta_c[g.idx(i, j)]
                    * (v.w[g.widx(i, j + 1)] - v.w[g.widx(i, j)])
                    / g.hy;
                let tyy_b = 2.0 * self.eta_c[g.idx(i, j - 1)]
                    * (v.w[g.widx(i, j)] - v.w[g.widx(i, j - 1)])
                    / g.hy;
                let txy_r = self.node_eta(i + 1, j) * shear_at_node(&v, i + 1, j);
                let txy_l = self.node_eta(i, j) * shear_at_node(&v, i, j);
                let div_tau = (tyy_t - tyy_b) / g.hy + (txy_r - txy_l) / g.hx;
                y[self.layout.kw(i, j)] = self.dt_inv * v.w[g.widx(i, j)] - div_tau;
            }
        }
    }
    fn len(&self) -> usize {
        self.layout.len()
    }
}

fn momentum_inv_diag(layout: &FaceLayout, dt_inv: f64, eta_c: &[f64], eta_n: &[f64]) -> Vec<f64> {
    let g = layout.grid;
    let node = |i: usize, j: usize| eta_n[j * (g.nx + 1) + i];
    let mut d = vec![0.0; layout.len()];
    for j in 0..g.ny {
        for i in 1..g.nx {
            let cell_part = 2.0 * (eta_c[g.idx(i, j)] + eta_c[g.idx(i - 1, j)]) / (g.hx * g.hx);
            let c_b = if j == 0 { 2.0 } else { 1.0 };
            let c_t = if j + 1 == g.ny { 2.0 } else { 1.0 };
            let node_part = (c_t * node(i, j + 1) + c_b * node(i, j)) / (g.hy * g.hy);
            d[layout.ku(i, j)] = 1.0 / (dt_inv + cell_part + node_part);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let cell_part = 2.0 * (eta_c[g.idx(i, j)] + eta_c[g.idx(i, j - 1)]) / (g.hy * g.hy);
            let c_l = if i == 0 { 2.0 } else { 1.0 };
            let c_r = if i + 1 == g.nx { 2.0 } else { 1.0 };
            let node_part = (c_r * node(i + 1, j) + c_l * node(i, j)) / (g.hx * g.hx);
            d[layout.kw(i, j)] = 1.0 / (dt_inv + cell_part + node_part);
        }
    }
    d
}

/// Explicit convective term `(v . grad) v` at interior faces, central
/// differences with reflected tangential ghosts.
fn convection(v: &MacVelocity) -> (Vec<f64>, Vec<f64>) {
    let g = v.grid;
    let mut cu = vec![0.0; (g.nx + 1) * g.ny];
    let mut cw = vec![0.0; g.nx * (g.ny + 1)];
    for j in 0..g.ny {
        for i in 1..g.nx {
            let du_dx = (v.u[g.uidx(i + 1, j)] - v.u[g.uidx(i - 1, j)]) / (2.0 * g.hx);
            let u_t = if j + 1 < g.ny {
                v.u[g.uidx(i, j + 1)]
            } else {
                -v.u[g.uidx(i, j)]
            };
            let u_b = if j > 0 {
                v.u[g.uidx(i, j - 1)]
            } else {
                -v.u[g.uidx(i, j)]
            };
            let du_dy = (u_t - u_b) / (2.0 * g.hy);
            let w_avg = 0.25
                * (v.w[g.widx(i - 1, j)]
                    + v.w[g.widx(i, j)]
                    + v.w[g.widx(i - 1, j + 1)]
                    + v.w[g.widx(i, j + 1)]);
            cu[g.uidx(i, j)] = v.u[g.uidx(i, j)] * du_dx + w_avg * du_dy;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let dw_dy = (v.w[g.widx(i, j + 1)] - v.w[g.widx(i, j - 1)]) / (2.0 * g.hy);
            let w_r = if i + 1 < g.nx {
                v.w[g.widx(i + 1, j)]
            } else {
                -v.w[g.widx(i, j)]
            };
            let w_l = if i > 0 {
                v.w[g.widx(i - 1, j)]
            } else {
                -v.w[g.widx(i, j)]
            };
            let dw_dx = (w_r - w_l) / (2.0 * g.hx);
            let u_avg = 0.25
                * (v.u[g.uidx(i, j - 1)]
                    + v.u[g.uidx(i + 1, j - 1)]
                    + v.u[g.uidx(i, j)]
                    + v.u[g.uidx(i + 1, j)]);
            cw[g.widx(i, j)] = u_avg * dw_dx + v.w[g.widx(i, j)] * dw_dy;
        }
    }
    (cu, cw)
}

/// Capillary/chemotaxis forcing `(mu + chi sigma) grad(phi)` at interior
/// faces: face-centered gradient times the arithmetic face average of the
/// coefficient.
fn capillary_forcing(
    phi: &ScalarField,
    mu: &ScalarField,
    sigma: &ScalarField,
    chi: f64,
) -> (Vec<f64>, Vec<f64>) {
    let g = phi.grid;
    let mut fx = vec![0.0; (g.nx + 1) * g.ny];
    let mut fy = vec![0.0; g.nx * (g.ny + 1)];
    let coef = |i: usize, j: usize| mu.at(i, j) + chi * sigma.at(i, j);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let c = 0.5 * (coef(i - 1, j) + coef(i, j));
            fx[g.uidx(i, j)] = c * (phi.at(i, j) - phi.at(i - 1, j)) / g.hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let c = 0.5 * (coef(i, j - 1) + coef(i, j));
            fy[g.widx(i, j)] = c * (phi.at(i, j) - phi.at(i, j - 1)) / g.hy;
        }
    }
    (fx, fy)
}

/// Sample manufactured momentum forcing at face centers.
pub(super) fn sample_face_forcing(
    grid: Grid,
    fx: impl Fn(f64, f64) -> f64,
    fy: impl Fn(f64, f64) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut out_x = vec![0.0; (grid.nx + 1) * grid.ny];
    let mut out_y = vec![0.0; grid.nx * (grid.ny + 1)];
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            let (x, y) = grid.xface(i, j);
            out_x[grid.uidx(i, j)] = fx(x, y);
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.yface(i, j);
            out_y[grid.widx(i, j)] = fy(x, y);
        }
    }
    (out_x, out_y)
}

#[allow(clippy::too_many_arguments)]
pub(super) fn ns_substep_inner(
    v_old: &MacVelocity,
    conv_vel: &MacVelocity,
    phi_new: &ScalarField,
    mu_new: &ScalarField,
    sigma_new: &ScalarField,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
    t: f64,
    extra_forcing: Option<(Vec<f64>, Vec<f64>)>,
    stats: &mut StepStats,
) -> Result<NsResult, StepError> {
    let grid = phi_new.grid;
    let layout = FaceLayout::new(grid);
    let reject = |detail: String| StepError::Rejected {
        substep: "momentum",
        t,
        detail,
    };

    let eta_c = eta_cells(phi_new, params);
    let eta_n = eta_nodes(grid, &eta_c);
    let dt_inv = 1.0 / dt;
    let op = MomentumOp {
        layout: &layout,
        dt_inv,
        eta_c: &eta_c,
        eta_n: &eta_n,
    };
    let inv_diag = momentum_inv_diag(&layout, dt_inv, &eta_c, &eta_n);

    let (conv_u, conv_w) = convection(conv_vel);
    let (cap_u, cap_w) = capillary_forcing(phi_new, mu_new, sigma_new, params.chi);

    let mut rhs = vec![0.0; layout.len()];
    let g = grid;
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = g.uidx(i, j);
            rhs[layout.ku(i, j)] = dt_inv * v_old.u[k] - conv_u[k] + cap_u[k];
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = g.widx(i, j);
            rhs[layout.kw(i, j)] = dt_inv * v_old.w[k] - conv_w[k] + cap_w[k];
        }
    }
    if let Some((fx, fy)) = &extra_forcing {
        for j in 0..g.ny {
            for i in 1..g.nx {
                rhs[layout.ku(i, j)] += fx[g.uidx(i, j)];
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                rhs[layout.kw(i, j)] += fy[g.widx(i, j)];
            }
        }
    }

    let mut x = vec![0.0; layout.len()];
    layout.pack(v_old, &mut x);
    let tol_vec = cfg.linear_tol / grid.cell_area().sqrt();
    let solve = pcg(
        &op,
        &rhs,
        &mut x,
        &Jacobi(&inv_diag),
        tol_vec,
        40 * layout.len(),
        false,
    )
    .map_err(|e| reject(format!("momentum solve failed: {e}")))?;
    stats.momentum_iters += solve.iterations;

    let mut v_star = MacVelocity::zeros(grid);
    layout.unpack(&x, &mut v_star);

    // Pressure projection, solved directly in the cosine eigenbasis of the
    // Neumann Laplacian. The correction only touches interior faces, and
    // div(grad p) is exactly that Laplacian, so one round removes the
    // divergence to rounding; the loop guards against accumulation.
    let dct = Dct2D::new(grid);
    let mut p = ScalarField::zeros(grid);
    let mut v_new = v_star.clone();
    let mut poisson_iters = 0;
    for _round in 0..3 {
        let div = divergence(&v_new);
        if div.linf() <= cfg.projection_tol {
            break;
        }
        let rhs_p: Vec<f64> = div.values.iter().map(|d| -d / dt).collect();
        let mut dp = vec![0.0; grid.n_cells()];
        poisson_neumann_direct(&dct, &rhs_p, &mut dp);
        poisson_iters += 1;
        let dp_field = ScalarField { grid, values: dp };
        let gp = gradient(&dp_field);
        v_new.axpy(-dt, &gp);
        v_new.enforce_no_penetration();
        p.axpy(1.0, &dp_field);
    }
    stats.poisson_iters += poisson_iters;

    let final_div = divergence(&v_new).linf();
    if final_div > cfg.projection_tol {
        return Err(reject(format!(
            "projection left divergence {final_div:.3e} above tolerance {:.3e}",
            cfg.projection_tol
        )));
    }
    if !v_new.is_finite() {
        return Err(reject("momentum solve produced non-finite values".into()));
    }
    Ok(NsResult {
        v: v_new,
        p,
        momentum_iters: solve.iterations,
        poisson_iters,
    })
}

/// Public single-substep entry: advance only the velocity/pressure pair from
/// `state`, given the already-updated scalars of the same step.
pub fn ns_substep(
    state: &SimState,
    phi_new: &ScalarField,
    mu_new: &ScalarField,
    sigma_new: &ScalarField,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<NsResult, StepError> {
    let mut stats = StepStats::default();
    ns_substep_inner(
        &state.v,
        &state.v,
        phi_new,
        mu_new,
        sigma_new,
        params,
        cfg,
        dt,
        state.t,
        None,
        &mut stats,
    )
}


/// Viscous part of the dissipation functional,
/// `int 2 eta(phi) |D v|^2`, evaluated with the same discrete strains and
/// quadrature weights as the momentum operator (cells for the normal
/// strains; nodes for the shear strain, half weight on wall nodes).
pub fn viscous_dissipation(v: &MacVelocity, phi: &ScalarField, params: &PhysParams) -> f64 {
    let g = v.grid;
    let eta_c = eta_cells(phi, params);
    let eta_n = eta_nodes(g, &eta_c);
    let area = g.cell_area();
    let mut total = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let du_dx = (v.u[g.uidx(i + 1, j)] - v.u[g.uidx(i, j)]) / g.hx;
            let dw_dy = (v.w[g.widx(i, j + 1)] - v.w[g.widx(i, j)]) / g.hy;
            total += 2.0 * eta_c[g.idx(i, j)] * (du_dx * du_dx + dw_dy * dw_dy) * area;
        }
    }
    for jn in 0..=g.ny {
        for in_ in 0..=g.nx {
            let gamma = shear_at_node(v, in_, jn);
            let wx = if in_ == 0 || in_ == g.nx { 0.5 } else { 1.0 };
            let wy = if jn == 0 || jn == g.ny { 0.5 } else { 1.0 };
            total += eta_n[jn * (g.nx + 1) + in_] * gamma * gamma * wx * wy * area;
        }
    }
    total
}
