//! Time-dependent laser profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear function through `(t, value)` knots, constant outside
/// the knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::argument("piecewise-linear profile needs at least one knot"));
        }
        if knots.windows(2).any(|w| !(w[1].0 >= w[0].0)) {
            return Err(Error::argument("profile knots must have non-decreasing times"));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::argument("profile knots must be finite"));
        }
        Ok(PiecewiseLinear { knots })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseLinear {
            knots: vec![(0.0, value)],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        k[k.len() - 1].1
    }
}

/// Omega(t), Delta(t) over `[0, total_time]` plus the times at which states
/// are emitted. Times in us, frequencies in MHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProfile {
    pub total_time: f64,
    pub omega: PiecewiseLinear,
    pub delta: PiecewiseLinear,
    pub checkpoints: Vec<f64>,
}

impl SweepProfile {
    /// Linear detuning ramp from `delta_start` to `delta_end`; Rabi frequency
    /// ramped `0 -> omega_peak` over the first 10% of the sweep, held, and
    /// ramped back to zero over the last 10%. `n_checkpoints` evenly spaced
    /// times including both ends.
    pub fn trapezoid(
        total_time: f64,
        omega_peak: f64,
        delta_start: f64,
        delta_end: f64,
        n_checkpoints: usize,
    ) -> Self {
        let ramp = 0.1 * total_time;
        let checkpoints = evenly_spaced(total_time, n_checkpoints);
        SweepProfile {
            total_time,
            omega: PiecewiseLinear {
                knots: vec![
                    (0.0, 0.0),
                    (ramp, omega_peak),
                    (total_time - ramp, omega_peak),
                    (total_time, 0.0),
                ],
            },
            delta: PiecewiseLinear {
                knots: vec![(0.0, delta_start), (total_time, delta_end)],
            },
            checkpoints,
        }
    }

    /// `delta(t) = delta`, `omega(t) = omega` for the whole interval.
    pub fn constant(total_time: f64, omega: f64, delta: f64, checkpoints: Vec<f64>) -> Self {
        SweepProfile {
            total_time,
            omega: PiecewiseLinear::constant(omega),
            delta: PiecewiseLinear::constant(delta),
            checkpoints,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time > 0.0) || !self.total_time.is_finite() {
            return Err(Error::argument("sweep total_time must be positive"));
        }
        PiecewiseLinear::new(self.omega.knots.clone())?;
        PiecewiseLinear::new(self.delta.knots.clone())?;
        if self.checkpoints.is_empty() {
            return Err(Error::argument("sweep needs at least one checkpoint"));
        }
        if self.checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::argument("checkpoints must be sorted"));
        }
        if self
            .checkpoints
            .iter()
            .any(|&t| !(0.0..=self.total_time).contains(&t))
        {
            return Err(Error::argument("checkpoints must lie inside [0, total_time]"));
        }
        Ok(())
    }
}

impl Default for SweepProfile {
    fn default() -> Self {
        SweepProfile::trapezoid(3.4, 2.0, -10.0, 10.0, 15)
    }
}

pub fn evenly_spaced(total: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![total],
        _ => (0..n).map(|k| total * k as f64 / (n - 1) as f64).collect(),
    }
}
