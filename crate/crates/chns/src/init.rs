//! Named initial-condition presets: spinodal seed, tanh stripe, constant
//! fields and an exactly divergence-free vortex.

use crate::grid::{Grid, MacVelocity, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Constant mean plus uniform noise in `[-amp, amp]`, seeded and
/// reproducible across platforms.
pub fn spinodal_phi(grid: Grid, mean: f64, amp: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = ScalarField::zeros(grid);
    for v in &mut f.values {
        *v = mean + rng.gen_range(-amp..=amp);
    }
    f
}

/// Horizontal band: `phi = amp (tanh((y - ly/3)/w) - tanh((y - 2 ly/3)/w) - 1)`,
/// a `+amp` stripe through the middle of the domain with `-amp` outside,
/// compatible with the Neumann walls for widths well below `ly`.
pub fn stripe_phi(grid: Grid, amp: f64, width: f64) -> ScalarField {
    let ly = grid.ly;
    ScalarField::from_fn(grid, |_, y| {
        amp * (((y - ly / 3.0) / width).tanh() - ((y - 2.0 * ly / 3.0) / width).tanh() - 1.0)
    })
}

/// Exactly divergence-free vortex from the stream function
/// `amp sin^2(pi x / lx) sin^2(pi y / ly)`, vanishing on the walls.
pub fn vortex_velocity(grid: Grid, amp: f64) -> MacVelocity {
    MacVelocity::from_stream_fn(grid, |x, y| {
        amp * (PI * x / grid.lx).sin().powi(2) * (PI * y / grid.ly).sin().powi(2)
    })
}
