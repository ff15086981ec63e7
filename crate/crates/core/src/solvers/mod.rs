//! Qualitative and quantitative solvers for concurrent games.

mod asw;
mod matrix;
mod strategy;
mod zero_sum;

pub use asw::{check_asw_containment, compute_asw, AswSolution};
pub use matrix::{solve_matrix_game, MatrixGame, MatrixSolution};
pub use strategy::{GameTag, MixedStrategy, RegionSet};
pub(crate) use strategy::uniform_row;
pub(crate) use zero_sum::sweeps_for;
pub use zero_sum::{evaluate_profile, evaluate_signed_profile, solve_zero_sum, ZeroSumSolution};
