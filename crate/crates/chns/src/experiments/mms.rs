//! Manufactured solution for convergence studies of the coupled scheme.
//!
//! Exact fields on `[0, lx] x [0, ly]` (all compatible with the Neumann /
//! no-slip walls):
//!
//! ```text
//! phi   = a_phi cos(pi x/lx) cos(pi y/ly) cos(t)
//! sigma = a_sig cos(2 pi x/lx) cos(pi y/ly) sin(t)
//! v     = a_v cos(t) (d_y psi, -d_x psi),   psi = sin^2(pi x/lx) sin^2(pi y/ly)
//! p     = 0
//! ```
//!
//! The forcing terms are the continuous-equation residuals of these fields,
//! derived in closed form; unit tests verify every derivative against high
//! order finite differences of the value functions.

use crate::grid::{Grid, MacVelocity, ScalarField};
use crate::stepper::{ExtraForcing, PhysParams, SimState};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Manufactured {
    pub params: PhysParams,
    pub lx: f64,
    pub ly: f64,
    pub a_phi: f64,
    pub a_sigma: f64,
    pub a_v: f64,
}

impl Manufactured {
    pub fn new(params: PhysParams, lx: f64, ly: f64) -> Self {
        Self {
            params,
            lx,
            ly,
            a_phi: 0.5,
            a_sigma: 0.3,
            a_v: 0.15,
        }
    }

    #[inline]
    fn kx(&self) -> f64 {
        PI / self.lx
    }
    #[inline]
    fn ky(&self) -> f64 {
        PI / self.ly
    }

    // --- phase field -----------------------------------------------------

    pub fn phi(&self, x: f64, y: f64, t: f64) -> f64 {
        self.a_phi * (self.kx() * x).cos() * (self.ky() * y).cos() * t.cos()
    }

    fn phi_t(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.a_phi * (self.kx() * x).cos() * (self.ky() * y).cos() * t.sin()
    }

    fn phi_x(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.a_phi * self.kx() * (self.kx() * x).sin() * (self.ky() * y).cos() * t.cos()
    }

    fn phi_y(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.a_phi * self.ky() * (self.kx() * x).cos() * (self.ky() * y).sin() * t.cos()
    }

    fn lap_phi(&self, x: f64, y: f64, t: f64) -> f64 {
        -(self.kx().powi(2) + self.ky().powi(2)) * self.phi(x, y, t)
    }

    fn bilap_phi(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.kx().powi(2) + self.ky().powi(2)).powi(2) * self.phi(x, y, t)
    }

    // --- nutrient ----------------------------------------------------------

    pub fn sigma(&self, x: f64, y: f64, t: f64) -> f64 {
        self.a_sigma * (2.0 * self.kx() * x).cos() * (self.ky() * y).cos() * t.sin()
    }

    fn sigma_t(&self, x: f64, y: f64, t: f64) -> f64 {
        self.a_sigma * (2.0 * self.kx() * x).cos() * (self.ky() * y).cos() * t.cos()
    }

    fn sigma_x(&self, x: f64, y: f64, t: f64) -> f64 {
        -2.0 * self.kx() * self.a_sigma
            * (2.0 * self.kx() * x).sin()
            * (self.ky() * y).cos()
            * t.sin()
    }

    fn sigma_y(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.ky() * self.a_sigma
            * (2.0 * self.kx() * x).cos()
            * (self.ky() * y).sin()
            * t.sin()
    }

    fn lap_sigma(&self, x: f64, y: f64, t: f64) -> f64 {
        -(4.0 * self.kx().powi(2) + self.ky().powi(2)) * self.sigma(x, y, t)
    }

    // --- velocity ----------------------------------------------------------

    pub fn stream(&self, x: f64, y: f64) -> f64 {
        (self.kx() * x).sin().powi(2) * (self.ky() * y).sin().powi(2)
    }

    /// Spatial profile of `u`: `d(psi)/dy`.
    fn u_profile(&self, x: f64, y: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        ky * (kx * x).sin().powi(2) * (2.0 * ky * y).sin()
    }

    /// Spatial profile of `w`: `-d(psi)/dx`.
    fn w_profile(&self, x: f64, y: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        -kx * (2.0 * kx * x).sin() * (ky * y).sin().powi(2)
    }

    pub fn u(&self, x: f64, y: f64, t: f64) -> f64 {
        self.a_v * t.cos() * self.u_profile(x, y)
    }

    pub fn w(&self, x: f64, y: f64, t: f64) -> f64 {
        self.a_v * t.cos() * self.w_profile(x, y)
    }

    fn u_t(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.a_v * t.sin() * self.u_profile(x, y)
    }

    fn w_t(&self, x: f64, y: f64, t: f64) -> f64 {
        -self.a_v * t.sin() * self.w_profile(x, y)
    }

    fn u_x(&self, x: f64, y: f64, t: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        self.a_v * t.cos() * ky * kx * (2.0 * kx * x).sin() * (2.0 * ky * y).sin()
    }

    fn u_y(&self, x: f64, y: f64, t: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        2.0 * self.a_v * t.cos() * ky * ky * (kx * x).sin().powi(2) * (2.0 * ky * y).cos()
    }

    fn w_x(&self, x: f64, y: f64, t: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        -2.0 * self.a_v * t.cos() * kx * kx * (2.0 * kx * x).cos() * (ky * y).sin().powi(2)
    }

    fn w_y(&self, x: f64, y: f64, t: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        -self.a_v * t.cos() * kx * ky * (2.0 * kx * x).sin() * (2.0 * ky * y).sin()
    }

    fn lap_u(&self, x: f64, y: f64, t: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        self.a_v
            * t.cos()
            * ky
            * (2.0 * kx * kx * (2.0 * kx * x).cos() * (2.0 * ky * y).sin()
                - 4.0 * ky * ky * (kx * x).sin().powi(2) * (2.0 * ky * y).sin())
    }

    fn lap_w(&self, x: f64, y: f64, t: f64) -> f64 {
        let (kx, ky) = (self.kx(), self.ky());
        -self.a_v
            * t.cos()
            * kx
            * (-4.0 * kx * kx * (2.0 * kx * x).sin() * (ky * y).sin().powi(2)
                + 2.0 * ky * ky * (2.0 * kx * x).sin() * (2.0 * ky * y).cos())
    }

    // --- chemical potential and forcings ------------------------------------

    /// Exact chemical potential `A psi'(phi) - B lap(phi) - chi sigma`.
    pub fn mu(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = &self.params;
        let phi = self.phi(x, y, t);
        p.a * (p.potential.psi0_prime(phi).unwrap() - p.potential.theta0 * phi)
            - p.b * self.lap_phi(x, y, t)
            - p.chi * self.sigma(x, y, t)
    }

    /// `lap(mu)` via the chain rule (`psi0'''` from the potential).
    fn lap_mu(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = &self.params;
        let phi = self.phi(x, y, t);
        let gx = self.phi_x(x, y, t);
        let gy = self.phi_y(x, y, t);
        let lap = self.lap_phi(x, y, t);
        let grad_sq = gx * gx + gy * gy;
        let dd = p.potential.psi0_second(phi).unwrap();
        let ddd = p.potential.psi0_third(phi).unwrap();
        p.a * (dd * lap + ddd * grad_sq - p.potential.theta0 * lap) - p.b * self.bilap_phi(x, y, t)
            - p.chi * self.lap_sigma(x, y, t)
    }

    pub fn forcing_phi(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = &self.params;
        self.phi_t(x, y, t)
            + self.u(x, y, t) * self.phi_x(x, y, t)
            + self.w(x, y, t) * self.phi_y(x, y, t)
            - self.lap_mu(x, y, t)
            + p.alpha * (self.phi(x, y, t) - p.c0)
    }

    pub fn forcing_sigma(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = &self.params;
        self.sigma_t(x, y, t)
            + self.u(x, y, t) * self.sigma_x(x, y, t)
            + self.w(x, y, t) * self.sigma_y(x, y, t)
            - self.lap_sigma(x, y, t)
            + p.lambda * self.lap_phi(x, y, t)
            + p.consumption * p.h(self.phi(x, y, t)) * self.sigma(x, y, t)
    }

    fn eta_and_gradient(&self, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let c2 = 0.5 * (p.eta1 - p.eta2);
        let eta = p.eta(self.phi(x, y, t));
        (eta, c2 * self.phi_x(x, y, t), c2 * self.phi_y(x, y, t))
    }

    pub fn forcing_u(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = &self.params;
        let (eta, eta_x, eta_y) = self.eta_and_gradient(x, y, t);
        let shear = self.u_y(x, y, t) + self.w_x(x, y, t);
        let div_tau_x =
            eta * self.lap_u(x, y, t) + 2.0 * self.u_x(x, y, t) * eta_x + shear * eta_y;
        let capillary = (self.mu(x, y, t) + p.chi * self.sigma(x, y, t)) * self.phi_x(x, y, t);
        self.u_t(x, y, t)
            + self.u(x, y, t) * self.u_x(x, y, t)
            + self.w(x, y, t) * self.u_y(x, y, t)
            - div_tau_x
            - capillary
    }

    pub fn forcing_w(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = &self.params;
        let (eta, eta_x, eta_y) = self.eta_and_gradient(x, y, t);
        let shear = self.u_y(x, y, t) + self.w_x(x, y, t);
        let div_tau_y =
            eta * self.lap_w(x, y, t) + shear * eta_x + 2.0 * self.w_y(x, y, t) * eta_y;
        let capillary = (self.mu(x, y, t) + p.chi * self.sigma(x, y, t)) * self.phi_y(x, y, t);
        self.w_t(x, y, t)
            + self.u(x, y, t) * self.w_x(x, y, t)
            + self.w(x, y, t) * self.w_y(x, y, t)
            - div_tau_y
            - capillary
    }

    /// Exact fields sampled into an initial state at time `t0`. The velocity
    /// is built from node values of the stream function, which is an O(h^2)
    /// sample of the exact velocity and exactly divergence-free discretely.
    pub fn initial_state(&self, grid: Grid, t0: f64) -> SimState {
        let phi = ScalarField::from_fn(grid, |x, y| self.phi(x, y, t0));
        let sigma = ScalarField::from_fn(grid, |x, y| self.sigma(x, y, t0));
        let scale = self.a_v * t0.cos();
        let v = MacVelocity::from_stream_fn(grid, |x, y| scale * self.stream(x, y));
        let (mut state, warnings) =
            SimState::initial(v, phi, sigma, &self.params, t0).expect("manufactured state admissible");
        assert!(warnings.is_empty());
        // Overwrite mu with the exact chemical potential sample so the
        // state is fully consistent with the manufactured fields.
        state.mu = ScalarField::from_fn(grid, |x, y| self.mu(x, y, t0));
        state
    }

    /// Grid errors (area-weighted l2) of a computed state against the exact
    /// fields at the state's time: `(e_phi, e_sigma, e_v)`.
    pub fn errors(&self, state: &SimState) -> (f64, f64, f64) {
        let grid = state.phi.grid;
        let t = state.t;
        let mut e_phi = state.phi.clone();
        e_phi.axpy(-1.0, &ScalarField::from_fn(grid, |x, y| self.phi(x, y, t)));
        let mut e_sigma = state.sigma.clone();
        e_sigma.axpy(-1.0, &ScalarField::from_fn(grid, |x, y| self.sigma(x, y, t)));
        let mut e_v = state.v.clone();
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.xface(i, j);
                e_v.u[grid.uidx(i, j)] -= self.u(x, y, t);
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.yface(i, j);
                e_v.w[grid.widx(i, j)] -= self.w(x, y, t);
            }
        }
        // The exact velocity vanishes on the walls, so the boundary faces
        // carry no error.
        (e_phi.l2(), e_sigma.l2(), e_v.norm_sq().sqrt())
    }
}

impl ExtraForcing for Manufactured {
    fn phi(&self, x: f64, y: f64, t: f64) -> f64 {
        self.forcing_phi(x, y, t)
    }
    fn sigma(&self, x: f64, y: f64, t: f64) -> f64 {
        self.forcing_sigma(x, y, t)
    }
    fn momentum_x(&self, x: f64, y: f64, t: f64) -> f64 {
        self.forcing_u(x, y, t)
    }
    fn momentum_y(&self, x: f64, y: f64, t: f64) -> f64 {
        self.forcing_w(x, y, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;

    fn mms() -> Manufactured {
        let params = PhysParams {
            a: 1.0,
            b: 0.04,
            chi: 0.3,
            lambda: 0.3,
            alpha: 0.2,
            c0: 0.0,
            eta1: 1.0,
            eta2: 2.0,
            potential: Potential::logarithmic(0.8, 1.6),
            ..Default::default()
        };
        Manufactured::new(params, 1.0, 1.5)
    }

    const POINTS: &[(f64, f64, f64)] = &[
        (0.31, 0.47, 0.2),
        (0.12, 1.13, 0.7),
        (0.83, 0.29, 1.1),
        (0.55, 0.91, 0.05),
        (0.07, 0.06, 0.4),
        (0.93, 1.41, 0.9),
    ];

    fn fd2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn fd_lap(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> f64 {
        (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h)
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let m = mms();
        let h = 1e-5;
        for &(x, y, t) in POINTS {
            let close = |a: f64, b: f64, what: &str| {
                assert!(
                    (a - b).abs() <= 2e-5 * (1.0 + b.abs()),
                    "{what} at ({x},{y},{t}): analytic {a}, fd {b}"
                );
            };
            close(m.phi_t(x, y, t), fd2(|s| m.phi(x, y, s), t, h), "phi_t");
            close(m.phi_x(x, y, t), fd2(|s| m.phi(s, y, t), x, h), "phi_x");
            close(m.phi_y(x, y, t), fd2(|s| m.phi(x, s, t), y, h), "phi_y");
            close(m.lap_phi(x, y, t), fd_lap(|a, b| m.phi(a, b, t), x, y, 1e-4), "lap_phi");
            close(m.sigma_t(x, y, t), fd2(|s| m.sigma(x, y, s), t, h), "sigma_t");
            close(m.sigma_x(x, y, t), fd2(|s| m.sigma(s, y, t), x, h), "sigma_x");
            close(m.sigma_y(x, y, t), fd2(|s| m.sigma(x, s, t), y, h), "sigma_y");
            close(
                m.lap_sigma(x, y, t),
                fd_lap(|a, b| m.sigma(a, b, t), x, y, 1e-4),
                "lap_sigma",
            );
            close(m.u_t(x, y, t), fd2(|s| m.u(x, y, s), t, h), "u_t");
            close(m.w_t(x, y, t), fd2(|s| m.w(x, y, s), t, h), "w_t");
            close(m.u_x(x, y, t), fd2(|s| m.u(s, y, t), x, h), "u_x");
            close(m.u_y(x, y, t), fd2(|s| m.u(x, s, t), y, h), "u_y");
            close(m.w_x(x, y, t), fd2(|s| m.w(s, y, t), x, h), "w_x");
            close(m.w_y(x, y, t), fd2(|s| m.w(x, s, t), y, h), "w_y");
            close(m.lap_u(x, y, t), fd_lap(|a, b| m.u(a, b, t), x, y, 1e-4), "lap_u");
            close(m.lap_w(x, y, t), fd_lap(|a, b| m.w(a, b, t), x, y, 1e-4), "lap_w");
            close(
                m.lap_mu(x, y, t),
                fd_lap(|a, b| m.mu(a, b, t), x, y, 1e-4),
                "lap_mu",
            );
        }
    }

    #[test]
    fn velocity_is_divergence_free_and_stream_consistent() {
        let m = mms();
        for &(x, y, t) in POINTS {
            let div = m.u_x(x, y, t) + m.w_y(x, y, t);
            assert!(div.abs() < 1e-13, "div {div} at ({x},{y})");
            // u = a_v cos(t) d(psi)/dy.
            let h = 1e-6;
            let psi_y = (m.stream(x, y + h) - m.stream(x, y - h)) / (2.0 * h);
            assert!((m.u(x, y, t) - m.a_v * t.cos() * psi_y).abs() < 1e-8);
        }
    }

    #[test]
    fn fields_satisfy_wall_conditions() {
        let m = mms();
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let t = 0.3;
            // No-slip on all four walls.
            assert!(m.u(0.0, s * m.ly, t).abs() < 1e-14);
            assert!(m.u(m.lx, s * m.ly, t).abs() < 1e-13);
            assert!(m.u(s * m.lx, 0.0, t).abs() < 1e-13);
            assert!(m.w(s * m.lx, m.ly, t).abs() < 1e-13);
            // Neumann for the scalars across x-walls.
            assert!(m.phi_x(0.0, s * m.ly, t).abs() < 1e-14);
            assert!(m.phi_x(m.lx, s * m.ly, t).abs() < 1e-13);
            assert!(m.sigma_y(s * m.lx, 0.0, t).abs() < 1e-14);
        }
    }

    #[test]
    fn forcing_reproduces_continuous_residual() {
        // Assemble the phase-equation residual from finite differences of
        // the exact fields and compare with the closed-form forcing.
        let m = mms();
        let h = 1e-4;
        for &(x, y, t) in &POINTS[..3] {
            let mu_fd_lap = fd_lap(|a, b| m.mu(a, b, t), x, y, h);
            let residual = fd2(|s| m.phi(x, y, s), t, 1e-6)
                + m.u(x, y, t) * fd2(|s| m.phi(s, y, t), x, 1e-6)
                + m.w(x, y, t) * fd2(|s| m.phi(x, s, t), y, 1e-6)
                - mu_fd_lap
                + m.params.alpha * (m.phi(x, y, t) - m.params.c0);
            let forcing = m.forcing_phi(x, y, t);
            assert!(
                (residual - forcing).abs() <= 1e-4 * (1.0 + forcing.abs()),
                "residual {residual} vs forcing {forcing}"
            );
        }
    }

    #[test]
    fn initial_state_matches_exact_fields() {
        let m = mms();
        let grid = Grid::new(32, 48, m.lx, m.ly);
        let state = m.initial_state(grid, 0.0);
        let (e_phi, e_sigma, e_v) = m.errors(&state);
        assert_eq!(e_phi, 0.0);
        assert_eq!(e_sigma, 0.0);
        // Stream-function differencing is an O(h^2) sample.
        assert!(e_v < 1e-3, "initial velocity error {e_v}");
        assert!(crate::ops::divergence(&state.v).linf() < 1e-13);
    }
}
