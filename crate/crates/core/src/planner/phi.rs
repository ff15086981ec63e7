use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for deciding which interval a boundary value belongs to.
const BOUNDARY_EPS: f64 = 1e-9;

/// Uniform grid over `[0, threshold]` with an extra "exceeded" level.
///
/// Level `i` in `1..=n` covers `((i - 1) delta, i delta]`, with `0` folded
/// into level 1. Values above the threshold map to the exceeded level,
/// stored as index `n`; levels `1..=n` are stored as `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiGrid {
    pub delta: f64,
    pub threshold: f64,
    pub levels: usize,
}

impl PhiGrid {
    pub fn new(delta: f64, threshold: f64) -> Result<Self> {
        if !(delta > 0.0) || !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::Config(format!("bad grid delta={delta} threshold={threshold}")));
        }
        let ratio = threshold / delta;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-6 || n < 1.0 {
            return Err(Error::Config(format!(
                "threshold {threshold} is not a whole number of steps of {delta}"
            )));
        }
        Ok(PhiGrid { delta, threshold, levels: n as usize })
    }

    /// Number of stored indices including the exceeded level.
    pub fn len(&self) -> usize {
        self.levels + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn exceeded(&self) -> usize {
        self.levels
    }

    pub fn is_exceeded(&self, idx: usize) -> bool {
        idx == self.levels
    }

    /// Index of the level holding `phi`.
    pub fn discretize(&self, phi: f64) -> usize {
        if phi > self.threshold + BOUNDARY_EPS * self.delta {
            return self.levels;
        }
        if phi <= 0.0 {
            return 0;
        }
        let i = (phi / self.delta - BOUNDARY_EPS).ceil() as usize;
        i.clamp(1, self.levels) - 1
    }

    /// Representative value of a level (its midpoint); the threshold for
    /// the exceeded level.
    pub fn midpoint(&self, idx: usize) -> f64 {
        if idx >= self.levels {
            return f64::INFINITY;
        }
        (2 * idx + 1) as f64 * self.delta / 2.0
    }
}
