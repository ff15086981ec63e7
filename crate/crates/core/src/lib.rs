//! Planning action deception in two-player concurrent stochastic
//! reachability games.
//!
//! P1 holds an action that P2 does not know about. P2 plays an equilibrium
//! of the game it believes in while running a CUSUM test on what it sees;
//! once the test fires it switches to the true game. The planner decides
//! when P1 should start using its full action set, trading the payoff of
//! surprise against the risk of being found out.

pub mod error;
pub mod detection;
pub mod game;
pub mod harness;
pub mod perception;
pub mod planner;
pub mod solvers;

pub use error::{Error, Result};
