use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{
    build_hypotheses, check_stop, log_likelihood_ratio, update_discrimination, HypothesisChain, Observation,
    ObservationMode, TraceRow,
};
use crate::error::{Error, Result};
use crate::game::{Play, StateId};
use crate::perception::{fill_row, BsrAction, BsrModel, DeceptionTimeline, FillPolicy, HypergameBundle};
use crate::planner::{MacroAction, PhiGrid, PlannerConfig, SwitchPolicy};

/// How the simulated P2 tracks its statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectorModel {
    /// Level midpoints, exactly as the planner models the detector.
    #[default]
    Discretized,
    /// The continuous CUSUM statistic.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub learning_delay: usize,
    #[serde(default)]
    pub detector_model: DetectorModel,
    /// End the episode at detection, paying the discounted baseline.
    #[serde(default)]
    pub stop_at_detection: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { horizon: 200, learning_delay: 0, detector_model: DetectorModel::default(), stop_at_detection: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ReachedAsw1,
    ReachedAsw2,
    Detected,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub play: Play,
    pub trace: Vec<TraceRow>,
    pub switch_step: Option<usize>,
    pub detection_step: Option<usize>,
    pub outcome: Outcome,
    /// Realized discounted payoff, scaled like the planner's rewards.
    pub payoff: f64,
}

impl RolloutRecord {
    /// Detection before any deviation.
    pub fn is_false_alarm(&self) -> bool {
        match (self.detection_step, self.switch_step) {
            (Some(d), Some(s)) => d < s,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Everything needed to play P1's switching policy against P2's BSR model.
pub struct Simulator<'a> {
    bundle: &'a HypergameBundle,
    policy: &'a SwitchPolicy,
    grid: PhiGrid,
    planner: PlannerConfig,
    null: HypothesisChain,
    alt: HypothesisChain,
}

impl<'a> Simulator<'a> {
    pub fn new(bundle: &'a HypergameBundle, planner: &PlannerConfig, policy: &'a SwitchPolicy) -> Result<Self> {
        planner.detector.validate()?;
        let grid = planner.grid()?;
        if grid != policy.grid || policy.num_game_states != bundle.num_states() {
            return Err(Error::Precondition("policy does not match the planner grid".into()));
        }
        let (null, alt) = build_hypotheses(bundle, planner.detector.mode);
        Ok(Simulator { bundle, policy, grid, planner: planner.clone(), null, alt })
    }

    pub fn bundle(&self) -> &HypergameBundle {
        self.bundle
    }

    pub fn rollout(&self, s0: StateId, fill: &FillPolicy, cfg: &RolloutConfig, seed: u64, index: u64) -> Result<RolloutRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        self.rollout_with(s0, fill, cfg, &mut rng)
    }

    pub fn rollout_with<R: Rng>(&self, s0: StateId, fill: &FillPolicy, cfg: &RolloutConfig, rng: &mut R) -> Result<RolloutRecord> {
        if cfg.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let b = self.bundle;
        let d = &b.data;
        let g = &b.true_game;
        let gamma = b.gamma();
        let scale = self.planner.scale;
        let mut play = Play::new(s0);
        let mut trace = Vec::new();
        let mut timeline = DeceptionTimeline { switch: 0, detection_delay: None, learning_delay: cfg.learning_delay };
        let mut switch_step = None;
        let mut detection_step = None;
        let mut level = 0usize;
        let mut phi = 0.0f64;
        let mut s = s0;
        let mut disc = 1.0;
        let mut step = 0usize;
        let (outcome, payoff) = loop {
            if b.in_asw1(s) {
                break (Outcome::ReachedAsw1, disc * scale);
            }
            if b.in_asw2(s) {
                break (Outcome::ReachedAsw2, -disc * scale);
            }
            if detection_step.is_some() && cfg.stop_at_detection {
                break (Outcome::Detected, disc * d.baseline[s] * scale);
            }
            if step == cfg.horizon {
                break (Outcome::Horizon, 0.0);
            }
            if switch_step.is_none() && self.policy.action(s, level, false) == MacroAction::True {
                switch_step = Some(step);
                timeline.switch = step;
            }
            let p1 = if switch_step.is_some() { &d.p1_true } else { &d.p1_perceptual };
            let a = sample_index(p1.row(s), rng.gen()).ok_or(Error::UndefinedStrategy(s))?;
            // same rows as `complete_bsr`, without cloning the fill per step
            let row2 = match BsrModel::new(b, timeline).action_at(step, s) {
                BsrAction::Defined(row) => row,
                BsrAction::Undefined => fill_row(b, fill, s),
            };
            let bb = sample_index(&row2, rng.gen()).ok_or(Error::UndefinedStrategy(s))?;
            let next = g.sample_with(s, a, bb, rng)?;

            if switch_step.is_some() && detection_step.is_none() {
                let action1 = (self.planner.detector.mode == ObservationMode::StatesAndActions).then_some(a);
                let obs = Observation { from: s, action2: bb, to: next, action1 };
                let llr = log_likelihood_ratio(&self.null, &self.alt, &obs, self.planner.detector.zero_prob)?;
                let detected = match cfg.detector_model {
                    DetectorModel::Discretized => {
                        level = if llr == f64::INFINITY {
                            self.grid.exceeded()
                        } else {
                            self.grid.discretize((self.grid.midpoint(level) + llr).max(0.0))
                        };
                        phi = self.grid.midpoint(level);
                        self.grid.is_exceeded(level)
                    }
                    DetectorModel::Exact => {
                        phi = update_discrimination(phi, llr);
                        check_stop(phi, &self.planner.detector)
                    }
                };
                trace.push(TraceRow { step, obs, llr, phi, detected });
                if detected {
                    detection_step = Some(step + 1);
                    timeline.detection_delay = Some(step + 1 - timeline.switch);
                }
            }
            play.push(a, bb, next);
            s = next;
            disc *= gamma;
            step += 1;
        };
        Ok(RolloutRecord { play, trace, switch_step, detection_step, outcome, payoff })
    }
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn sample_index(row: &[f64], u: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

impl McEstimate {
    /// Normal-approximation half-width at the given quantile.
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.std_dev / (self.n as f64).sqrt()
    }

    /// 95% half-width.
    pub fn half_width95(&self) -> f64 {
        self.half_width(1.959963984540054)
    }
}

/// Mean realized payoff over `n` seeded rollouts. Rollout `i` uses stream
/// `i` of the generator seeded with `seed`, so the estimate does not depend
/// on the thread count.
pub fn monte_carlo_payoff(
    sim: &Simulator<'_>,
    s0: StateId,
    fill: &FillPolicy,
    cfg: &RolloutConfig,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 30 {
        return Err(Error::Precondition(format!("{n} rollouts are too few for a normal interval")));
    }
    let payoffs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| sim.rollout(s0, fill, cfg, seed, i).map(|r| r.payoff))
        .collect::<Result<_>>()?;
    let mean = payoffs.iter().sum::<f64>() / n as f64;
    let var = payoffs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(McEstimate { mean, std_dev: var.sqrt(), n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf() {
        let row = [0.0, 0.25, 0.0, 0.75];
        assert_eq!(sample_index(&row, 0.0), Some(1));
        assert_eq!(sample_index(&row, 0.2499), Some(1));
        assert_eq!(sample_index(&row, 0.25), Some(3));
        assert_eq!(sample_index(&row, 0.9999999), Some(3));
        assert_eq!(sample_index(&[0.0, 0.0], 0.5), None);
    }
}
