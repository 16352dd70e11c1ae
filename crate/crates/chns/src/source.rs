//! External nutrient source `S(x, t)`.

use crate::grid::{Grid, ScalarField};

/// Nutrient source specification, evaluated at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// Spatial Gaussian bump, optionally decaying exponentially in time
    /// (`t_decay <= 0` means constant in time).
    GaussianBump {
        amplitude: f64,
        x0: f64,
        y0: f64,
        sigma: f64,
        t_decay: f64,
    },
    /// Spatially uniform value tabulated over time, linearly interpolated;
    /// constant extrapolation outside the table.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl SourceSpec {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            SourceSpec::Zero => 0.0,
            SourceSpec::Constant { value } => *value,
            SourceSpec::GaussianBump {
                amplitude,
                x0,
                y0,
                sigma,
                t_decay,
            } => {
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                let spatial = amplitude * (-r2 / (2.0 * sigma * sigma)).exp();
                if *t_decay > 0.0 {
                    spatial * (-t / t_decay).exp()
                } else {
                    spatial
                }
            }
            SourceSpec::Tabulated { times, values } => {
                debug_assert!(times.len() == values.len() && !times.is_empty());
                if t <= times[0] {
                    return values[0];
                }
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let k = times.partition_point(|&tk| tk <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] * (1.0 - w) + values[k + 1] * w
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceSpec::Zero)
    }

    /// Sample onto cell centers at time `t`.
    pub fn field(&self, grid: Grid, t: f64) -> ScalarField {
        match self {
            SourceSpec::Zero => ScalarField::zeros(grid),
            SourceSpec::Constant { value } => ScalarField::constant(grid, *value),
            _ => ScalarField::from_fn(grid, |x, y| self.eval(x, y, t)),
        }
    }
}
