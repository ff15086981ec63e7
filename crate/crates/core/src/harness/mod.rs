//! Simulation and experiment reports.

mod reports;
mod rollout;
mod scenario;

pub use reports::{
    sensitivity_csv, sensitivity_sweep, strong_opponent_report, vod_heatmap, Heatmap, SensitivityRow,
    StrongOpponentReport, StrongOpponentRow,
};
pub use rollout::{monte_carlo_payoff, DetectorModel, McEstimate, Outcome, RolloutConfig, RolloutRecord, Simulator};
pub use scenario::{FillChoice, ScenarioConfig};
