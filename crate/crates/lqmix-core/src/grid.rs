//! Uniform time grid shared by the Riccati solvers, the mean-field ODE and
//! the simulator.

use serde::{Deserialize, Serialize};

/// Uniform grid t_0 = 0 < t_1 < ... < t_M = horizon with step `dt = horizon / steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Self {
        assert!(horizon > 0.0 && steps > 0, "grid requires horizon > 0 and steps > 0");
        Self { horizon, steps }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Number of grid points (steps + 1).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Refine by an integer factor (same horizon, `factor`× more steps).
    pub fn refine(&self, factor: usize) -> Self {
        Self::new(self.horizon, self.steps * factor)
    }

    /// Clamp `t` to [0, horizon] and return the surrounding cell index and
    /// the interpolation weight within it.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.horizon);
        let s = t / self.dt();
        let k = (s.floor() as usize).min(self.steps.saturating_sub(1));
        (k, s - k as f64)
    }
}
