//! Coupled first-order time integrator: implicit convex-split Cahn-Hilliard
//! substep, implicit nutrient advection-diffusion-reaction substep and a
//! variable-viscosity projection substep for the momentum equation, composed
//! sequentially (or iterated as a Picard fixed point).
//!
//! Structure preservation:
//! - the phase-mean recurrence `(mean(phi') - c0)(1 + alpha dt) = mean(phi) - c0`
//!   and the nutrient mean balance hold to rounding, because the scalar
//!   solves are carried out inside the zero-mean subspace with the exact mean
//!   prescribed analytically;
//! - all Cahn-Hilliard Newton iterates stay strictly inside (-1, 1) for the
//!   singular potential (backtracking safeguard);
//! - the projected velocity is discretely divergence-free to `projection_tol`.

mod ch;
mod momentum;
mod nutrient;
#[cfg(test)]
mod tests;

pub use ch::ChResult;
pub use momentum::{viscous_dissipation, NsResult};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::grid::{MacVelocity, ScalarField};
use crate::ops::AdvectScheme;
use crate::potential::Potential;
use crate::source::SourceSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("{substep} substep rejected at t = {t}: {detail}")]
    Rejected {
        substep: &'static str,
        t: f64,
        detail: String,
    },
    #[error("time step underflow at t = {t}: dt = {dt:.3e} below dt_min = {dt_min:.3e}")]
    DtUnderflow {
        t: f64,
        dt: f64,
        dt_min: f64,
        /// Last accepted state, for post-mortem dumps.
        last_state: Box<SimState>,
    },
    #[error("invalid state or parameters: {0}")]
    Invalid(String),
}

/// Consumption interpolation `h` with `h(-1) = 0`, `h(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HInterp {
    /// `(1 + r)/2` clamped to [0, 1].
    LinearClamped,
    /// Cubic smoothstep in `(1 + r)/2`, clamped.
    SmoothStep,
}

/// All model coefficients plus the nutrient source.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    pub a: f64,
    pub b: f64,
    /// Chemotaxis coefficient (enters the chemical potential).
    pub chi: f64,
    /// Active-transport coefficient (enters the nutrient flux);
    /// `lambda = chi` recovers the single-coefficient model.
    pub lambda: f64,
    /// Reaction rate of the mean-reverting interconversion term.
    pub alpha: f64,
    pub c0: f64,
    /// Nutrient consumption rate.
    pub consumption: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub h_interp: HInterp,
    pub potential: Potential,
    pub source: SourceSpec,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.01,
            chi: 0.0,
            lambda: 0.0,
            alpha: 0.0,
            c0: 0.0,
            consumption: 0.0,
            eta1: 1.0,
            eta2: 1.0,
            h_interp: HInterp::LinearClamped,
            potential: Potential::logarithmic(0.8, 1.6),
            source: SourceSpec::Zero,
        }
    }
}

impl PhysParams {
    /// Concentration-dependent viscosity, linear interpolation between the
    /// two pure-fluid values with the argument clamped to [-1, 1] so the
    /// bounds `min(eta1, eta2) <= eta <= max(eta1, eta2)` hold everywhere.
    #[inline]
    pub fn eta(&self, r: f64) -> f64 {
        let rc = r.clamp(-1.0, 1.0);
        0.5 * (self.eta1 * (1.0 + rc) + self.eta2 * (1.0 - rc))
    }

    /// Consumption interpolation `h(r)`, bounded with bounded derivative.
    #[inline]
    pub fn h(&self, r: f64) -> f64 {
        let t = (0.5 * (1.0 + r)).clamp(0.0, 1.0);
        match self.h_interp {
            HInterp::LinearClamped => t,
            HInterp::SmoothStep => t * t * (3.0 - 2.0 * t),
        }
    }

    /// Check the coefficient hypotheses. Violations are reported with the
    /// hypothesis tag used throughout configuration validation.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta1 > 0.0 && self.eta2 > 0.0) {
            return Err(format!(
                "[H1] viscosities must be positive: eta1 = {}, eta2 = {}",
                self.eta1, self.eta2
            ));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(format!(
                "[H5] A and B must be positive: A = {}, B = {}",
                self.a, self.b
            ));
        }
        if self.alpha < 0.0 {
            return Err(format!("[H5] alpha must be non-negative: {}", self.alpha));
        }
        if !(self.c0 > -1.0 && self.c0 < 1.0) {
            return Err(format!("[H5] c0 must lie in (-1, 1): {}", self.c0));
        }
        if self.potential.theta <= 0.0 {
            return Err(format!(
                "[H2] potential temperature theta must be positive: {}",
                self.potential.theta
            ));
        }
        if self.lambda == 0.0 && self.chi != 0.0 {
            return Err(format!(
                "energy weights undefined: lambda = 0 with chi = {} (active transport switched off needs chi = 0 or the single-coefficient model lambda = chi)",
                self.chi
            ));
        }
        Ok(())
    }

    /// Weights of the sigma terms in the audited energy/dissipation pair:
    /// `w_sigma = chi/(2 lambda)` and `w_d = chi/lambda`, with the
    /// single-coefficient values (1/2, 1) taken exactly when `lambda == chi`.
    pub fn energy_weights(&self) -> (f64, f64) {
        if self.lambda == self.chi {
            (0.5, 1.0)
        } else {
            debug_assert!(self.lambda != 0.0);
            (self.chi / (2.0 * self.lambda), self.chi / self.lambda)
        }
    }
}

/// Snapshot of the coupled state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub v: MacVelocity,
    pub p: ScalarField,
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub sigma: ScalarField,
    pub t: f64,
    pub step_index: u64,
}

impl SimState {
    /// Assemble an initial state: enforces no-penetration on the velocity,
    /// validates the phase-field admissibility (`|mean(phi)| < 1` is a hard
    /// error; `||phi||_inf = 1` is clamped inward with a warning for the
    /// singular potential) and computes the compatible chemical potential
    /// `mu = A psi'(phi) - B lap(phi) - chi sigma`.
    pub fn initial(
        mut v: MacVelocity,
        phi: ScalarField,
        sigma: ScalarField,
        params: &PhysParams,
        t: f64,
    ) -> Result<(Self, Vec<String>), StepError> {
        let grid = phi.grid;
        if v.grid != grid || sigma.grid != grid {
            return Err(StepError::Invalid("initial fields on different grids".into()));
        }
        if !phi.is_finite() || !sigma.is_finite() || !v.is_finite() {
            return Err(StepError::Invalid("initial fields contain non-finite values".into()));
        }
        let mut warnings = Vec::new();
        let mut phi = phi;
        let mean = phi.mean();
        if mean.abs() >= 1.0 {
            return Err(StepError::Invalid(format!(
                "initial phase mean must satisfy |mean(phi)| < 1, got {mean}"
            )));
        }
        let linf = phi.linf();
        if params.potential.is_singular() {
            if linf > 1.0 {
                return Err(StepError::Invalid(format!(
                    "initial phase field exceeds the pure states: ||phi||_inf = {linf} > 1"
                )));
            }
            let barrier = 1.0 - params.potential.eps_barrier;
            if linf > barrier {
                for val in &mut phi.values {
                    *val = val.clamp(-barrier, barrier);
                }
                warnings.push(format!(
                    "initial phase field touches the pure states (||phi||_inf = {linf}); clamped inward by the evaluation barrier"
                ));
            }
        }
        v.enforce_no_penetration();

        let lap = crate::ops::laplacian_neumann(&phi);
        let mut mu = ScalarField::zeros(grid);
        let mut clamp_events = 0u64;
        for i in 0..grid.n_cells() {
            let r = phi.values[i];
            let psi_prime = params.potential.psi0_prime_clamped(r, &mut clamp_events)
                - params.potential.theta0 * r;
            mu.values[i] = params.a * psi_prime - params.b * lap.values[i]
                - params.chi * sigma.values[i];
        }
        Ok((
            Self {
                v,
                p: ScalarField::zeros(grid),
                phi,
                mu,
                sigma,
                t,
                step_index: 0,
            },
            warnings,
        ))
    }

    pub fn quiescent(grid: crate::grid::Grid, params: &PhysParams) -> Self {
        let (state, _) = Self::initial(
            MacVelocity::zeros(grid),
            ScalarField::zeros(grid),
            ScalarField::zeros(grid),
            params,
            0.0,
        )
        .expect("zero state is always admissible");
        state
    }
}

/// Substep coupling of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// One sweep: phase, then nutrient, then momentum, each using the
    /// freshest available fields and the lagged velocity.
    Sequential,
    /// Fixed-point iteration of the sequential sweep until successive
    /// phase/nutrient/velocity changes drop below `tol` (or `k_max` sweeps).
    /// `k_max = 1` is bit-identical to `Sequential`.
    Picard { k_max: usize, tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub dt_min: f64,
    /// Cap for the adaptive doubling; defaults to the initial `dt`.
    pub dt_max: f64,
    pub cfl_max: f64,
    pub adapt_dt: bool,
    /// Area-weighted l2 tolerance of the Cahn-Hilliard Newton residual.
    /// The residual carries the fourth-order term `B lap^2 phi`, whose
    /// double-precision evaluation floor grows like `B h^-4 eps`; keep the
    /// tolerance above that floor on fine grids.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Max-norm bound on the post-projection velocity divergence.
    pub projection_tol: f64,
    /// Area-weighted l2 tolerance of the inner linear solves.
    pub linear_tol: f64,
    pub coupling: Coupling,
    /// First-order upwind face interpolation for the advected scalars.
    pub upwind: bool,
    /// Skip the nutrient solve, freezing sigma (decoupling experiments).
    pub disable_sigma: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dt_min: 1e-12,
            dt_max: 1e-3,
            cfl_max: 0.5,
            adapt_dt: false,
            newton_tol: 1e-8,
            max_newton: 50,
            projection_tol: 1e-9,
            linear_tol: 1e-11,
            coupling: Coupling::Sequential,
            upwind: false,
            disable_sigma: false,
        }
    }
}

impl StepperConfig {
    /// Interface-resolving default time step `0.1 min(hx, hy)^2 / B`.
    pub fn default_dt(grid: crate::grid::Grid, params: &PhysParams) -> f64 {
        0.1 * grid.hx.min(grid.hy).powi(2) / params.b
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self.dt_max = dt;
        self
    }

    pub(crate) fn advect_scheme(&self) -> AdvectScheme {
        if self.upwind {
            AdvectScheme::Upwind
        } else {
            AdvectScheme::Centered
        }
    }
}

/// Additional manufactured forcing for convergence studies: per-equation
/// source terms evaluated at points and the implicit time level.
pub trait ExtraForcing {
    fn phi(&self, x: f64, y: f64, t: f64) -> f64;
    fn sigma(&self, x: f64, y: f64, t: f64) -> f64;
    fn momentum_x(&self, x: f64, y: f64, t: f64) -> f64;
    fn momentum_y(&self, x: f64, y: f64, t: f64) -> f64;
}

/// Per-step solver effort and safeguard counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub dt_used: f64,
    pub rejections: u32,
    pub picard_sweeps: usize,
    pub ch_newton_iters: usize,
    pub ch_linear_iters: usize,
    pub nutrient_iters: usize,
    pub momentum_iters: usize,
    pub poisson_iters: usize,
    pub clamp_events: u64,
}

/// One sequential sweep at fixed dt. `vel_sweep`/`sigma_sweep` are the
/// coupling fields (the previous time level in sequential mode, the previous
/// sweep under Picard iteration).
#[allow(clippy::too_many_arguments)]
fn sweep(
    state: &SimState,
    vel_sweep: &MacVelocity,
    sigma_sweep: &ScalarField,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
    forcing: Option<&dyn ExtraForcing>,
    stats: &mut StepStats,
) -> Result<(ScalarField, ScalarField, ScalarField, MacVelocity, ScalarField), StepError> {
    let grid = state.phi.grid;
    let t_new = state.t + dt;

    let forcing_phi = forcing.map(|f| ScalarField::from_fn(grid, |x, y| f.phi(x, y, t_new)));
    let ch = ch::ch_substep_inner(
        &state.phi,
        vel_sweep,
        sigma_sweep,
        params,
        cfg,
        dt,
        state.t,
        forcing_phi.as_ref(),
        stats,
    )?;

    let sigma_new = if cfg.disable_sigma {
        state.sigma.clone()
    } else {
        let mut src = params.source.field(grid, t_new);
        if let Some(f) = forcing {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let (x, y) = grid.cell_center(i, j);
                    src.values[grid.idx(i, j)] += f.sigma(x, y, t_new);
                }
            }
        }
        nutrient::nutrient_substep_inner(
            &state.sigma,
            vel_sweep,
            &ch.phi,
            params,
            cfg,
            dt,
            state.t,
            &src,
            stats,
        )?
    };

    let ns = momentum::ns_substep_inner(
        &state.v,
        vel_sweep,
        &ch.phi,
        &ch.mu,
        &sigma_new,
        params,
        cfg,
        dt,
        state.t,
        forcing.map(|f| {
            let fx = move |x: f64, y: f64| f.momentum_x(x, y, t_new);
            let fy = move |x: f64, y: f64| f.momentum_y(x, y, t_new);
            momentum::sample_face_forcing(grid, fx, fy)
        }),
        stats,
    )?;

    Ok((ch.phi, ch.mu, sigma_new, ns.v, ns.p))
}

/// One attempted step at fixed `dt` (sequential sweep or Picard iteration).
fn step_attempt(
    state: &SimState,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt: f64,
    forcing: Option<&dyn ExtraForcing>,
    stats: &mut StepStats,
) -> Result<SimState, StepError> {
    let (k_max, tol) = match cfg.coupling {
        Coupling::Sequential => (1, 0.0),
        Coupling::Picard { k_max, tol } => (k_max.max(1), tol),
    };

    let mut vel_sweep = state.v.clone();
    let mut sigma_sweep = state.sigma.clone();
    let mut result = None;
    for k in 0..k_max {
        stats.picard_sweeps = k + 1;
        let (phi, mu, sigma, v, p) = sweep(
            state,
            &vel_sweep,
            &sigma_sweep,
            params,
            cfg,
            dt,
            forcing,
            stats,
        )?;
        let converged = if k + 1 < k_max {
            let mut dphi = phi.clone();
            if let Some((prev_phi, _, prev_sigma, prev_v, _)) = &result {
                let _: &ScalarField = prev_phi;
                dphi.axpy(-1.0, prev_phi);
                let mut dsig = sigma.clone();
                dsig.axpy(-1.0, prev_sigma);
                let mut dv: MacVelocity = v.clone();
                dv.axpy(-1.0, prev_v);
                dphi.l2().max(dsig.l2()).max(dv.norm_sq().sqrt()) < tol
            } else {
                false
            }
        } else {
            true
        };
        vel_sweep = v.clone();
        sigma_sweep = sigma.clone();
        result = Some((phi, mu, sigma, v, p));
        if converged {
            break;
        }
    }
    let (phi, mu, sigma, v, p) = result.expect("at least one sweep runs");
    Ok(SimState {
        v,
        p,
        phi,
        mu,
        sigma,
        t: state.t + dt,
        step_index: state.step_index + 1,
    })
}

/// Advance one step, applying CFL control and rejection handling.
///
/// Without `adapt_dt` the configured `dt` is used as-is and any substep
/// rejection aborts. With `adapt_dt`, `dt` is first halved until
/// `max|u| dt/hx + max|w| dt/hy <= cfl_max`, and halved again on rejection
/// down to `dt_min`. Returns the new state and the per-step statistics
/// (including the dt actually used).
pub fn step(
    state: &SimState,
    params: &PhysParams,
    cfg: &StepperConfig,
    forcing: Option<&dyn ExtraForcing>,
) -> Result<(SimState, StepStats), StepError> {
    step_with_dt(state, params, cfg, cfg.dt, forcing)
}

fn step_with_dt(
    state: &SimState,
    params: &PhysParams,
    cfg: &StepperConfig,
    dt_start: f64,
    forcing: Option<&dyn ExtraForcing>,
) -> Result<(SimState, StepStats), StepError> {
    let grid = state.phi.grid;
    let mut dt = dt_start;
    if cfg.adapt_dt {
        let (mu, mw) = state.v.max_speeds();
        let cfl = |dt: f64| mu * dt / grid.hx + mw * dt / grid.hy;
        while cfl(dt) > cfg.cfl_max && dt > cfg.dt_min {
            dt *= 0.5;
        }
    }
    let mut stats = StepStats::default();
    loop {
        stats.dt_used = dt;
        match step_attempt(state, params, cfg, dt, forcing, &mut stats) {
            Ok(next) => return Ok((next, stats)),
            Err(err) => {
                if !cfg.adapt_dt {
                    return Err(err);
                }
                dt *= 0.5;
                stats.rejections += 1;
                if dt < cfg.dt_min {
                    return Err(StepError::DtUnderflow {
                        t: state.t,
                        dt,
                        dt_min: cfg.dt_min,
                        last_state: Box::new(state.clone()),
                    });
                }
            }
        }
    }
}

/// Callbacks invoked while a run progresses.
#[derive(Default)]
pub struct Hooks<'a> {
    pub on_record: Option<Box<dyn FnMut(&DiagnosticsRecord) + 'a>>,
    pub on_snapshot: Option<Box<dyn FnMut(&SimState) + 'a>>,
    /// Snapshot cadence in accepted steps (0 disables snapshots).
    pub snapshot_every: usize,
}

/// Drive the integrator from `initial.t` to `t_end`, recording diagnostics
/// for the initial state and after every accepted step. Deterministic for a
/// fixed configuration.
pub fn run(
    initial: &SimState,
    params: &PhysParams,
    cfg: &StepperConfig,
    t_end: f64,
    forcing: Option<&dyn ExtraForcing>,
    mut hooks: Hooks<'_>,
) -> Result<(SimState, Vec<DiagnosticsRecord>), StepError> {
    params.validate().map_err(StepError::Invalid)?;
    let mut records = Vec::new();
    let mut state = initial.clone();
    let rec0 = diagnostics::record(&state, params, StepStats::default(), 0.0);
    if let Some(cb) = hooks.on_record.as_mut() {
        cb(&rec0);
    }
    records.push(rec0);

    let mut dt = cfg.dt;
    let mut accepted_streak = 0usize;
    while state.t < t_end - 1e-14 * t_end.abs().max(1.0) {
        let dt_step = dt.min(t_end - state.t);
        let (next, stats) = step_with_dt(&state, params, cfg, dt_step, forcing)?;
        if cfg.adapt_dt {
            if stats.rejections > 0 || stats.dt_used < dt_step {
                dt = stats.dt_used;
                accepted_streak = 0;
            } else {
                accepted_streak += 1;
                if accepted_streak >= 10 && dt < cfg.dt_max {
                    dt = (dt * 2.0).min(cfg.dt_max);
                    accepted_streak = 0;
                }
            }
        }
        let rec = diagnostics::record_with_previous(&next, &state, params, stats);
        if let Some(cb) = hooks.on_record.as_mut() {
            cb(&rec);
        }
        records.push(rec);
        state = next;
        if hooks.snapshot_every > 0 && state.step_index % hooks.snapshot_every as u64 == 0 {
            if let Some(cb) = hooks.on_snapshot.as_mut() {
                cb(&state);
            }
        }
    }
    Ok((state, records))
}

pub use ch::ch_substep;
pub use momentum::ns_substep;
pub use nutrient::nutrient_substep;
