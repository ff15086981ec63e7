//! Gridworld soccer: two players, one ball, simultaneous moves.
//!
//! Rules:
//! - moves that leave the grid or hit a wall (or a hidden cell, for regular
//!   moves) leave the player where it was;
//! - if both players end on the same cell, or swap cells, the ball goes to
//!   P1 with probability `collision_ball_prob`;
//! - otherwise the ball stays with its holder;
//! - P1 wins holding the ball in the rightmost column, P2 wins holding the
//!   ball in the leftmost column.
//!
//! P1 additionally owns a hidden action. In the basic variant it moves two
//! cells down; in the bouncing variant it jumps across an adjacent hidden
//! cell, which is a wall for every regular move.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ConcurrentGame, Distribution, Player, StateId};
use crate::error::{Error, Result};

pub const ACTION_UP: usize = 0;
pub const ACTION_DOWN: usize = 1;
pub const ACTION_LEFT: usize = 2;
pub const ACTION_RIGHT: usize = 3;
pub const ACTION_HIDDEN: usize = 4;

const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell(pub usize, pub usize);

impl Cell {
    fn offset(self, dr: isize, dc: isize, rows: usize, cols: usize) -> Option<Cell> {
        let r = self.0 as isize + dr;
        let c = self.1 as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols)
            .then_some(Cell(r as usize, c as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridVariant {
    #[default]
    Basic,
    Bouncing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SoccerState {
    pub p1: Cell,
    pub p2: Cell,
    /// `true` when P1 holds the ball.
    pub ball: bool,
}

fn default_collision() -> f64 {
    0.5
}

fn default_discount() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default)]
    pub hidden_cells: Vec<Cell>,
    #[serde(default = "default_collision")]
    pub collision_ball_prob: f64,
    #[serde(default)]
    pub variant: GridVariant,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<SoccerState>,
}

impl GridConfig {
    /// The 3x5 field with the two-cells-down hidden move.
    pub fn basic() -> Self {
        GridConfig {
            rows: 3,
            cols: 5,
            walls: Vec::new(),
            hidden_cells: Vec::new(),
            collision_ball_prob: 0.5,
            variant: GridVariant::Basic,
            discount: default_discount(),
            start: Some(SoccerState { p1: Cell(1, 1), p2: Cell(1, 3), ball: true }),
        }
    }

    /// Approximate bouncing-wall arena: a wall block in the middle row
    /// splits the field into a top lane and a bottom corridor. The bottom
    /// corridor is closed by a hidden cell at (2,3) that only P1's hidden
    /// action can cross. The layout is approximate.
    pub fn bouncing_approx() -> Self {
        GridConfig {
            rows: 3,
            cols: 5,
            walls: vec![Cell(1, 1), Cell(1, 2), Cell(1, 3)],
            hidden_cells: vec![Cell(2, 3)],
            collision_ball_prob: 0.5,
            variant: GridVariant::Bouncing,
            discount: default_discount(),
            start: Some(SoccerState { p1: Cell(1, 0), p2: Cell(1, 4), ball: true }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols < 2 {
            return Err(Error::Config(format!("grid {}x{} too small", self.rows, self.cols)));
        }
        let inside = |c: &Cell| c.0 < self.rows && c.1 < self.cols;
        if let Some(c) = self.walls.iter().chain(&self.hidden_cells).find(|c| !inside(c)) {
            return Err(Error::Config(format!("cell {c:?} outside the grid")));
        }
        if !(0.0..=1.0).contains(&self.collision_ball_prob) {
            return Err(Error::Config(format!(
                "collision_ball_prob {} outside [0,1]",
                self.collision_ball_prob
            )));
        }
        if self.variant == GridVariant::Bouncing && self.hidden_cells.is_empty() {
            return Err(Error::Config("bouncing variant needs at least one hidden cell".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount {} outside (0,1]", self.discount)));
        }
        Ok(())
    }
}

/// Bijection between dense state indices and [`SoccerState`]s.
#[derive(Debug, Clone)]
pub struct SoccerIndex {
    cfg: GridConfig,
    cells: Vec<Cell>,
    cell_index: HashMap<Cell, usize>,
}

impl SoccerIndex {
    pub fn new(cfg: &GridConfig) -> Self {
        let mut cells = Vec::new();
        for r in 0..cfg.rows {
            for c in 0..cfg.cols {
                let cell = Cell(r, c);
                if !cfg.walls.contains(&cell) && !cfg.hidden_cells.contains(&cell) {
                    cells.push(cell);
                }
            }
        }
        let cell_index = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        SoccerIndex { cfg: cfg.clone(), cells, cell_index }
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    /// Cells a player may occupy, row-major.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn num_states(&self) -> usize {
        self.cells.len() * self.cells.len() * 2
    }

    pub fn encode(&self, st: &SoccerState) -> Option<StateId> {
        let i = *self.cell_index.get(&st.p1)?;
        let j = *self.cell_index.get(&st.p2)?;
        Some((i * self.cells.len() + j) * 2 + st.ball as usize)
    }

    pub fn decode(&self, s: StateId) -> SoccerState {
        let ball = s % 2 == 1;
        let pair = s / 2;
        let n = self.cells.len();
        SoccerState { p1: self.cells[pair / n], p2: self.cells[pair % n], ball }
    }

    fn is_free(&self, c: Cell) -> bool {
        self.cell_index.contains_key(&c)
    }

    fn regular_move(&self, from: Cell, action: usize) -> Cell {
        let (dr, dc) = MOVES[action];
        from.offset(dr, dc, self.cfg.rows, self.cfg.cols)
            .filter(|&c| self.is_free(c))
            .unwrap_or(from)
    }

    fn hidden_move(&self, from: Cell) -> Cell {
        let (rows, cols) = (self.cfg.rows, self.cfg.cols);
        match self.cfg.variant {
            GridVariant::Basic => from
                .offset(2, 0, rows, cols)
                .filter(|&c| self.is_free(c))
                .unwrap_or(from),
            GridVariant::Bouncing => MOVES
                .iter()
                .find_map(|&(dr, dc)| {
                    let over = from.offset(dr, dc, rows, cols)?;
                    if !self.cfg.hidden_cells.contains(&over) {
                        return None;
                    }
                    over.offset(dr, dc, rows, cols).filter(|&c| self.is_free(c))
                })
                .unwrap_or(from),
        }
    }

    fn p1_destination(&self, from: Cell, action: usize) -> Cell {
        if action == ACTION_HIDDEN {
            self.hidden_move(from)
        } else {
            self.regular_move(from, action)
        }
    }

    pub fn is_p1_goal(&self, st: &SoccerState) -> bool {
        st.ball && st.p1.1 == self.cfg.cols - 1
    }

    pub fn is_p2_goal(&self, st: &SoccerState) -> bool {
        !st.ball && st.p2.1 == 0
    }

    /// Outcome distribution of one joint move from a non-terminal state.
    pub fn step(&self, st: &SoccerState, a: usize, b: usize) -> Vec<(SoccerState, f64)> {
        let d1 = self.p1_destination(st.p1, a);
        let d2 = self.regular_move(st.p2, b);
        let swapped = st.p1 != st.p2 && d1 == st.p2 && d2 == st.p1;
        if d1 == d2 || swapped {
            let q = self.cfg.collision_ball_prob;
            vec![
                (SoccerState { p1: d1, p2: d2, ball: true }, q),
                (SoccerState { p1: d1, p2: d2, ball: false }, 1.0 - q),
            ]
        } else {
            vec![(SoccerState { p1: d1, p2: d2, ball: st.ball }, 1.0)]
        }
    }
}

fn cell_label(c: Cell) -> String {
    format!("({},{})", c.0, c.1)
}

/// Builds the true soccer game and returns it with the set of hidden P1
/// actions.
pub fn build_soccer_game(cfg: &GridConfig) -> Result<(ConcurrentGame, Vec<usize>)> {
    cfg.validate()?;
    let index = SoccerIndex::new(cfg);
    if index.cells().len() < 2 {
        return Err(Error::Config("grid needs at least two free cells".into()));
    }
    let labels = (0..index.num_states())
        .map(|s| {
            let st = index.decode(s);
            format!("{}{}{}", cell_label(st.p1), cell_label(st.p2), st.ball as u8)
        })
        .collect();
    let actions1 = ["U", "D", "L", "R", "H"].map(String::from).to_vec();
    let actions2 = ["U", "D", "L", "R"].map(String::from).to_vec();
    let start = cfg.start.unwrap_or(SoccerState {
        p1: index.cells()[0],
        p2: *index.cells().last().unwrap(),
        ball: true,
    });
    let initial = index
        .encode(&start)
        .ok_or_else(|| Error::Config(format!("start state {start:?} not on free cells")))?;

    let mut game = ConcurrentGame::new(labels, actions1, actions2, initial, cfg.discount);
    for s in 0..index.num_states() {
        let st = index.decode(s);
        let f1 = index.is_p1_goal(&st);
        let f2 = index.is_p2_goal(&st);
        game.set_target(Player::One, s, f1);
        game.set_target(Player::Two, s, f2);
        if f1 || f2 {
            game.make_absorbing(s);
            continue;
        }
        for a in 0..5 {
            for b in 0..4 {
                let outcomes = index
                    .step(&st, a, b)
                    .into_iter()
                    .map(|(next, p)| (index.encode(&next).expect("moves stay on free cells"), p))
                    .collect();
                game.set_transition(s, a, b, Distribution::new(outcomes));
            }
        }
    }
    game.set_grid(Some(cfg.clone()));
    Ok((game, vec![ACTION_HIDDEN]))
}
