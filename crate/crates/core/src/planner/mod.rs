//! Deciding when to reveal the hidden actions.

mod phi;
mod semi_mdp;

pub use phi::PhiGrid;
pub use semi_mdp::{
    build_semi_mdp, build_strong_opponent_mdp, evaluate_policy, solve_semi_mdp, value_of_deception, vod_table,
    DecisionState, MacroAction, MdpVariant, NatureState, PlannerConfig, SemiMdp, SemiMdpSolution, SwitchPolicy,
    VodReport, SINK,
};
