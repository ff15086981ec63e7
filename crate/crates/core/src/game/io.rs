//! JSON game description files.
//!
//! A file holds either an explicit kernel or a `grid` block that is expanded
//! with the soccer builder:
//!
//! ```json
//! { "grid": { "rows": 3, "cols": 5, "variant": "basic" } }
//! { "explicit": { "states": ["s0", "goal"], "actions1": ["a"], ... } }
//! ```
//!
//! Probabilities are written with the shortest representation that parses
//! back to the same `f64`, so explicit files round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_soccer_game, ConcurrentGame, Distribution, GridConfig, Player, StateId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub s: StateId,
    pub a: usize,
    pub b: usize,
    pub next: Vec<(StateId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitGame {
    pub states: Vec<String>,
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    pub initial: StateId,
    pub discount: f64,
    pub targets1: Vec<StateId>,
    pub targets2: Vec<StateId>,
    pub transitions: Vec<TransitionRow>,
    /// Layout metadata for games produced by the grid builder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameFile {
    Explicit(ExplicitGame),
    Grid(GridConfig),
}

impl GameFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Expands the file into a game and its hidden P1 actions. Explicit
    /// files carry no hidden-action information, so the list is empty.
    pub fn into_game(self) -> Result<(ConcurrentGame, Vec<usize>)> {
        match self {
            GameFile::Grid(cfg) => build_soccer_game(&cfg),
            GameFile::Explicit(e) => Ok((e.into_game()?, Vec::new())),
        }
    }
}

impl ExplicitGame {
    pub fn from_game(game: &ConcurrentGame) -> Self {
        let mut transitions = Vec::new();
        for s in 0..game.num_states() {
            for a in 0..game.num_actions1() {
                for b in 0..game.num_actions2() {
                    if let Some(d) = game.transition(s, a, b) {
                        transitions.push(TransitionRow { s, a, b, next: d.entries().to_vec() });
                    }
                }
            }
        }
        let members = |p: Player| {
            game.targets(p)
                .iter()
                .enumerate()
                .filter_map(|(s, &m)| m.then_some(s))
                .collect()
        };
        ExplicitGame {
            states: game.state_labels().to_vec(),
            actions1: game.actions1().to_vec(),
            actions2: game.actions2().to_vec(),
            initial: game.initial(),
            discount: game.discount(),
            targets1: members(Player::One),
            targets2: members(Player::Two),
            transitions,
            grid: game.grid().cloned(),
        }
    }

    pub fn into_game(self) -> Result<ConcurrentGame> {
        let n = self.states.len();
        let (n1, n2) = (self.actions1.len(), self.actions2.len());
        let mut game =
            ConcurrentGame::new(self.states, self.actions1, self.actions2, self.initial, self.discount);
        for row in self.transitions {
            if row.s >= n || row.a >= n1 || row.b >= n2 {
                return Err(Error::Config(format!(
                    "transition ({}, {}, {}) out of range",
                    row.s, row.a, row.b
                )));
            }
            game.set_transition(row.s, row.a, row.b, Distribution::new(row.next));
        }
        for (player, list) in [(Player::One, self.targets1), (Player::Two, self.targets2)] {
            for s in list {
                if s >= n {
                    return Err(Error::Config(format!("target state {s} out of range")));
                }
                game.set_target(player, s, true);
            }
        }
        game.set_grid(self.grid);
        Ok(game)
    }
}
