use serde::{Deserialize, Serialize};

use super::rollout::{DetectorModel, RolloutConfig};
use crate::detection::{DetectorConfig, ObservationMode, ZeroProbPolicy};
use crate::error::{Error, Result};
use crate::game::{ConcurrentGame, GameFile};
use crate::perception::{build_hypergame, FillPolicy, HypergameBundle};
use crate::planner::PlannerConfig;

/// Learning-phase behavior selectable from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FillChoice {
    #[default]
    KeepPerceptual,
    UniformRandom,
    TrueEquilibrium,
}

impl FillChoice {
    pub fn resolve(self, bundle: &HypergameBundle) -> FillPolicy {
        match self {
            FillChoice::KeepPerceptual => FillPolicy::KeepPerceptual,
            FillChoice::UniformRandom => FillPolicy::UniformRandom,
            FillChoice::TrueEquilibrium => FillPolicy::Fixed(bundle.data.p2_true.clone()),
        }
    }
}

fn default_gamma() -> f64 {
    0.95
}
fn default_delta() -> f64 {
    0.2
}
fn default_threshold() -> f64 {
    2.0
}
fn default_horizon() -> usize {
    200
}
fn default_rollouts() -> usize {
    1000
}
fn default_scale() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-6
}

/// One complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub game: GameFile,
    /// P1 actions P2 knows about; defaults to all but the builder's hidden
    /// actions.
    #[serde(default)]
    pub visible: Option<Vec<usize>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub mode: ObservationMode,
    #[serde(default)]
    pub zero_prob: ZeroProbPolicy,
    #[serde(default)]
    pub fill: FillChoice,
    #[serde(default)]
    pub learning_delay: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub detector_model: DetectorModel,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.rollouts == 0 {
            return Err(Error::Config("rollouts must be at least 1".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config("scale must be positive".into()));
        }
        Ok(())
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            delta: self.delta,
            detector: DetectorConfig { threshold: self.threshold, mode: self.mode, zero_prob: self.zero_prob },
            scale: self.scale,
        }
    }

    pub fn rollout(&self) -> RolloutConfig {
        RolloutConfig {
            horizon: self.horizon,
            learning_delay: self.learning_delay,
            detector_model: self.detector_model,
            stop_at_detection: false,
        }
    }

    /// Builds the game and its visible action set.
    pub fn load_game(&self) -> Result<(ConcurrentGame, Vec<usize>)> {
        let (mut game, hidden) = self.game.clone().into_game()?;
        game.set_discount(self.gamma);
        let visible = match &self.visible {
            Some(v) => v.clone(),
            None => (0..game.num_actions1()).filter(|a| !hidden.contains(a)).collect(),
        };
        Ok((game, visible))
    }

    pub fn build_bundle(&self) -> Result<HypergameBundle> {
        self.validate()?;
        let (game, visible) = self.load_game()?;
        build_hypergame(&game, &visible, self.gamma, self.tol.min(1e-12))
    }
}
