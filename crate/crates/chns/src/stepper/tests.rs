use super::*;
use crate::diagnostics;
use crate::grid::{Grid, MacVelocity, ScalarField};
use crate::init::{spinodal_phi, vortex_velocity};
use crate::ops::{divergence, grad_norm_sq};
use crate::potential::Potential;
use crate::source::SourceSpec;

fn small_params() -> PhysParams {
    PhysParams {
        a: 1.0,
        b: 0.01,
        potential: Potential::logarithmic(0.8, 1.6),
        ..Default::default()
    }
}

fn state_with_phi(grid: Grid, phi: ScalarField, params: &PhysParams) -> SimState {
    let (state, _) = SimState::initial(
        MacVelocity::zeros(grid),
        phi,
        ScalarField::zeros(grid),
        params,
        0.0,
    )
    .unwrap();
    state
}

#[test]
fn eta_interpolates_viscosities() {
    let params = PhysParams {
        eta1: 1.0,
        eta2: 2.0,
        ..Default::default()
    };
    assert_eq!(params.eta(0.0), 1.5);
    assert_eq!(params.eta(1.0), 1.0);
    assert_eq!(params.eta(-1.0), 2.0);
    // Clamped outside [-1, 1].
    assert_eq!(params.eta(5.0), 1.0);
}

#[test]
fn h_interpolation_endpoints() {
    let params = PhysParams::default();
    assert_eq!(params.h(0.0), 0.5);
    assert_eq!(params.h(1.0), 1.0);
    assert_eq!(params.h(-1.0), 0.0);
    assert_eq!(params.h(-2.0), 0.0);
}

#[test]
fn constant_phase_at_c0_is_a_fixed_point() {
    let mut params = small_params();
    params.alpha = 0.7;
    params.c0 = 0.3;
    let grid = Grid::unit(8);
    let state = state_with_phi(grid, ScalarField::constant(grid, 0.3), &params);
    let cfg = StepperConfig::default().with_dt(1e-3);
    let res = ch_substep(&state, &params, &cfg, cfg.dt).unwrap();
    for &v in &res.phi.values {
        assert!((v - 0.3).abs() < 1e-12);
    }
    // mu = A psi'(c0) everywhere.
    let expected_mu = params.a * params.potential.psi_prime(0.3).unwrap();
    for &m in &res.mu.values {
        assert!((m - expected_mu).abs() < 1e-10);
    }
}

#[test]
fn phase_mean_recurrence_is_exact() {
    let mut params = small_params();
    params.alpha = 1.0;
    params.c0 = -0.1;
    let grid = Grid::unit(16);
    // mean(phi0) - c0 = 0.2
    let phi0 = spinodal_phi(grid, 0.1, 0.02, 9);
    let state = state_with_phi(grid, phi0, &params);
    let m0 = state.phi.mean();
    let cfg = StepperConfig::default().with_dt(0.1);
    let res = ch_substep(&state, &params, &cfg, cfg.dt).unwrap();
    let m1 = res.phi.mean();
    let expected = params.c0 + (m0 - params.c0) / (1.0 + params.alpha * cfg.dt);
    assert!(
        (m1 - expected).abs() <= 1e-12 * (m0 - params.c0).abs(),
        "mean defect {:.3e}",
        (m1 - expected).abs()
    );
}

#[test]
fn convex_splitting_decreases_gradient_energy() {
    // Pure Cahn-Hilliard gradient flow (no flow, no coupling, no reaction):
    // the split energy A int Psi + B/2 |grad phi|^2 is a Lyapunov function.
    let params = small_params();
    let grid = Grid::unit(24);
    let phi0 = spinodal_phi(grid, 0.0, 0.05, 3);
    let mut state = state_with_phi(grid, phi0, &params);
    let cfg = StepperConfig::default().with_dt(5.0 * StepperConfig::default_dt(grid, &params));
    let ch_energy = |phi: &ScalarField| {
        let bulk: f64 = phi
            .values
            .iter()
            .map(|&r| params.a * params.potential.psi_clamped(r))
            .sum::<f64>()
            * grid.cell_area();
        bulk + 0.5 * params.b * grad_norm_sq(phi)
    };
    let mut prev = ch_energy(&state.phi);
    for _ in 0..10 {
        let res = ch_substep(&state, &params, &cfg, cfg.dt).unwrap();
        state.phi = res.phi;
        state.mu = res.mu;
        let e = ch_energy(&state.phi);
        assert!(
            e <= prev + 1e-12 * (1.0 + prev.abs()),
            "energy rose from {prev} to {e}"
        );
        prev = e;
    }
    // The spinodal seed actually evolved.
    assert!(state.phi.linf() > 0.05);
}

#[test]
fn nutrient_mean_balance_with_uniform_source() {
    let mut params = small_params();
    params.lambda = 0.4;
    params.chi = 0.4;
    params.source = SourceSpec::Constant { value: 1.0 };
    let grid = Grid::unit(12);
    let phi = spinodal_phi(grid, 0.0, 0.3, 5);
    let state = state_with_phi(grid, phi, &params);
    let cfg = StepperConfig::default().with_dt(0.05);
    let sigma_new = nutrient_substep(&state, &state.phi, &params, &cfg, cfg.dt).unwrap();
    let expected = state.sigma.mean() + cfg.dt * 1.0;
    assert!(
        (sigma_new.mean() - expected).abs() < 1e-13,
        "mean defect {:.3e}",
        (sigma_new.mean() - expected).abs()
    );
}

#[test]
fn nutrient_diffusion_contracts_l2() {
    let params = small_params();
    let grid = Grid::unit(16);
    let mut state = SimState::quiescent(grid, &params);
    state.sigma = ScalarField::from_fn(grid, |x, y| {
        (2.0 * std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos()
    });
    let cfg = StepperConfig::default().with_dt(1e-3);
    let mut prev = state.sigma.l2();
    for _ in 0..5 {
        let sigma = nutrient_substep(&state, &state.phi, &params, &cfg, cfg.dt).unwrap();
        let n = sigma.l2();
        assert!(n <= prev);
        state.sigma = sigma;
        prev = n;
    }
}

#[test]
fn nutrient_mean_balance_with_consumption() {
    let mut params = small_params();
    params.consumption = 1.5;
    let grid = Grid::unit(12);
    let phi = spinodal_phi(grid, 0.2, 0.3, 11);
    let mut state = state_with_phi(grid, phi, &params);
    state.sigma = ScalarField::from_fn(grid, |x, _| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).cos());
    let cfg = StepperConfig::default().with_dt(0.02);
    let sigma_new = nutrient_substep(&state, &state.phi, &params, &cfg, cfg.dt).unwrap();
    // Discrete balance: mean' = mean + dt (mean(S) - C mean(h(phi) sigma')).
    let hs: f64 = state
        .phi
        .values
        .iter()
        .zip(&sigma_new.values)
        .map(|(&p, &s)| params.h(p) * s)
        .sum::<f64>()
        / grid.n_cells() as f64;
    let expected = state.sigma.mean() + cfg.dt * (0.0 - params.consumption * hs);
    assert!(
        (sigma_new.mean() - expected).abs() < 1e-13,
        "defect {:.3e}",
        (sigma_new.mean() - expected).abs()
    );
}

#[test]
fn quiescent_state_stays_quiescent() {
    let params = small_params();
    let grid = Grid::unit(8);
    let state = SimState::quiescent(grid, &params);
    let cfg = StepperConfig::default().with_dt(1e-3);
    let (next, _) = step(&state, &params, &cfg, None).unwrap();
    assert_eq!(next.v.linf(), 0.0);
    assert!(next.phi.linf() < 1e-14);
    assert!(next.sigma.linf() < 1e-14);
    assert!(next.p.linf() < 1e-14);
}

#[test]
fn viscous_vortex_decays_monotonically() {
    // Constant phase: capillary forcing vanishes and the vortex decays.
    let mut params = small_params();
    params.eta1 = 1.0;
    params.eta2 = 1.0;
    let grid = Grid::unit(16);
    let (mut state, _) = SimState::initial(
        vortex_velocity(grid, 0.2),
        ScalarField::zeros(grid),
        ScalarField::zeros(grid),
        &params,
        0.0,
    )
    .unwrap();
    let cfg = StepperConfig::default().with_dt(2e-3);
    let mut prev = state.v.kinetic_energy();
    assert!(prev > 0.0);
    for _ in 0..8 {
        let (next, stats) = step(&state, &params, &cfg, None).unwrap();
        let ke = next.v.kinetic_energy();
        assert!(ke < prev, "kinetic energy rose from {prev} to {ke}");
        assert!(divergence(&next.v).linf() <= cfg.projection_tol);
        assert!(stats.momentum_iters > 0);
        prev = ke;
        state = next;
    }
}

#[test]
fn picard_single_sweep_matches_sequential_bitwise() {
    let mut params = small_params();
    params.chi = 0.3;
    params.lambda = 0.3;
    params.alpha = 0.4;
    params.c0 = -0.1;
    let grid = Grid::unit(12);
    let phi0 = spinodal_phi(grid, -0.1, 0.05, 21);
    let (state, _) = SimState::initial(
        vortex_velocity(grid, 0.05),
        phi0,
        ScalarField::constant(grid, 0.2),
        &params,
        0.0,
    )
    .unwrap();
    let cfg_seq = StepperConfig::default().with_dt(1e-3);
    let cfg_pic = StepperConfig {
        coupling: Coupling::Picard {
            k_max: 1,
            tol: 1e-8,
        },
        ..cfg_seq.clone()
    };
    let (a, _) = step(&state, &params, &cfg_seq, None).unwrap();
    let (b, _) = step(&state, &params, &cfg_pic, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn picard_iteration_converges_toward_coupled_solution() {
    let mut params = small_params();
    params.chi = 0.3;
    params.lambda = 0.3;
    let grid = Grid::unit(12);
    let phi0 = spinodal_phi(grid, 0.0, 0.05, 33);
    let (state, _) = SimState::initial(
        vortex_velocity(grid, 0.1),
        phi0,
        ScalarField::constant(grid, 0.5),
        &params,
        0.0,
    )
    .unwrap();
    let cfg = StepperConfig {
        coupling: Coupling::Picard {
            k_max: 6,
            tol: 1e-12,
        },
        ..StepperConfig::default().with_dt(1e-3)
    };
    let (next, stats) = step(&state, &params, &cfg, None).unwrap();
    assert!(stats.picard_sweeps >= 2);
    assert!(next.phi.is_finite());
}

#[test]
fn run_with_zero_horizon_returns_initial_state() {
    let params = small_params();
    let grid = Grid::unit(8);
    let state = SimState::quiescent(grid, &params);
    let cfg = StepperConfig::default();
    let (final_state, records) = run(&state, &params, &cfg, 0.0, None, Hooks::default()).unwrap();
    assert_eq!(final_state, state);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].energy_residual, 0.0);
}

#[test]
fn runs_are_deterministic() {
    let mut params = small_params();
    params.chi = 0.2;
    params.lambda = 0.2;
    params.alpha = 0.5;
    params.c0 = -0.1;
    let grid = Grid::unit(12);
    let phi0 = spinodal_phi(grid, -0.05, 0.05, 7);
    let (state, _) = SimState::initial(
        MacVelocity::zeros(grid),
        phi0,
        ScalarField::constant(grid, 0.1),
        &params,
        0.0,
    )
    .unwrap();
    let cfg = StepperConfig::default().with_dt(1e-3);
    let t_end = 5e-3;
    let (s1, r1) = run(&state, &params, &cfg, t_end, None, Hooks::default()).unwrap();
    let (s2, r2) = run(&state, &params, &cfg, t_end, None, Hooks::default()).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(r1.len(), r2.len());
    for (a, b) in r1.iter().zip(&r2) {
        assert_eq!(a, b);
    }
}

#[test]
fn short_spinodal_run_keeps_margin_and_mass_law() {
    let mut params = small_params();
    params.alpha = 0.5;
    params.c0 = -0.1;
    params.chi = 0.2;
    params.lambda = 0.2;
    let grid = Grid::unit(16);
    let phi0 = spinodal_phi(grid, -0.05, 0.05, 17);
    let (state, _) = SimState::initial(
        MacVelocity::zeros(grid),
        phi0,
        ScalarField::constant(grid, 0.3),
        &params,
        0.0,
    )
    .unwrap();
    let dt = StepperConfig::default_dt(grid, &params);
    let cfg = StepperConfig::default().with_dt(dt);
    let (final_state, records) = run(&state, &params, &cfg, 15.0 * dt, None, Hooks::default()).unwrap();
    assert!(final_state.phi.linf() < 1.0);
    for rec in &records {
        assert!(rec.margin > 0.0);
        assert_eq!(rec.clamp_events, 0);
        assert!(rec.dissipation >= 0.0);
    }
    let report = diagnostics::analytic_mean_law_check(&records, &params);
    assert!(report.max_recurrence_rel_err < 1e-12);
}

#[test]
fn rejection_without_adaptivity_aborts() {
    let params = small_params();
    let grid = Grid::unit(8);
    let phi0 = spinodal_phi(grid, 0.0, 0.05, 2);
    let state = state_with_phi(grid, phi0, &params);
    // Absurd tolerance with a single Newton iteration forces rejection.
    let cfg = StepperConfig {
        newton_tol: 1e-300,
        max_newton: 1,
        ..StepperConfig::default().with_dt(1e-3)
    };
    assert!(matches!(
        step(&state, &params, &cfg, None),
        Err(StepError::Rejected { .. })
    ));
}

#[test]
fn initial_state_validation() {
    let params = small_params();
    let grid = Grid::unit(8);
    // Mean at a pure state is rejected outright.
    let err = SimState::initial(
        MacVelocity::zeros(grid),
        ScalarField::constant(grid, 1.0),
        ScalarField::zeros(grid),
        &params,
        0.0,
    );
    assert!(err.is_err());
    // Touching the pure state pointwise is clamped with a warning.
    let mut phi = ScalarField::constant(grid, 0.0);
    phi.values[0] = 1.0;
    let (state, warnings) = SimState::initial(
        MacVelocity::zeros(grid),
        phi,
        ScalarField::zeros(grid),
        &params,
        0.0,
    )
    .unwrap();
    assert_eq!(warnings.len(), 1);
    assert!(state.phi.linf() < 1.0);
}
