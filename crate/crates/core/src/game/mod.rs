//! Concurrent stochastic games with reachability objectives.
//!
//! A [`ConcurrentGame`] stores a dense transition kernel indexed by
//! `(state, action1, action2)`. Entries may be undefined, which is how
//! restricted games (P2's perceptual game) are represented: the action
//! labels stay the same, only the transitions enabled by removed actions
//! disappear.

mod io;
mod soccer;
mod toy;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{ExplicitGame, GameFile, TransitionRow};
pub use toy::toy_deception_game;
pub use soccer::{
    build_soccer_game, Cell, GridConfig, GridVariant, SoccerIndex, SoccerState, ACTION_DOWN,
    ACTION_HIDDEN, ACTION_LEFT, ACTION_RIGHT, ACTION_UP,
};

pub type StateId = usize;

/// Probability mass tolerance used by every stochasticity check.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::One => write!(f, "P1"),
            Player::Two => write!(f, "P2"),
        }
    }
}

/// Sparse distribution over successor states, sorted by state with no
/// duplicate entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution(Vec<(StateId, f64)>);

impl Distribution {
    /// Builds a distribution, merging duplicate successors and dropping
    /// zero-mass entries.
    pub fn new(mut entries: Vec<(StateId, f64)>) -> Self {
        entries.sort_by_key(|&(s, _)| s);
        let mut merged: Vec<(StateId, f64)> = Vec::with_capacity(entries.len());
        for (s, p) in entries {
            match merged.last_mut() {
                Some((last, q)) if *last == s => *q += p,
                _ => merged.push((s, p)),
            }
        }
        merged.retain(|&(_, p)| p != 0.0);
        Distribution(merged)
    }

    pub fn point(s: StateId) -> Self {
        Distribution(vec![(s, 1.0)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.0.iter().copied()
    }

    pub fn entries(&self) -> &[(StateId, f64)] {
        &self.0
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.0
            .binary_search_by_key(&s, |&(t, _)| t)
            .map(|i| self.0[i].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|&(_, p)| p).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.0.iter().filter(|&&(_, p)| p > 0.0).map(|&(s, _)| s)
    }

    pub fn is_point_mass_on(&self, s: StateId) -> bool {
        self.0.len() == 1 && self.0[0].0 == s && (self.0[0].1 - 1.0).abs() <= PROB_TOL
    }

    /// Inverse-CDF draw given a uniform sample in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> StateId {
        let mut acc = 0.0;
        for &(s, p) in &self.0 {
            acc += p;
            if u < acc {
                return s;
            }
        }
        // rounding slack: fall back to the last state with positive mass
        self.0
            .iter()
            .rev()
            .find(|&&(_, p)| p > 0.0)
            .map(|&(s, _)| s)
            .expect("empty distribution")
    }
}

/// The tuple `(S, A1 x A2, P, s0, gamma, F1, F2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrentGame {
    state_labels: Vec<String>,
    actions1: Vec<String>,
    actions2: Vec<String>,
    kernel: Vec<Option<Distribution>>,
    initial: StateId,
    discount: f64,
    targets1: Vec<bool>,
    targets2: Vec<bool>,
    grid: Option<GridConfig>,
}

impl ConcurrentGame {
    /// Creates a game with an empty kernel. Transitions and targets are
    /// added with [`set_transition`](Self::set_transition) and
    /// [`set_target`](Self::set_target).
    pub fn new(
        state_labels: Vec<String>,
        actions1: Vec<String>,
        actions2: Vec<String>,
        initial: StateId,
        discount: f64,
    ) -> Self {
        let n = state_labels.len();
        let slots = n * actions1.len() * actions2.len();
        ConcurrentGame {
            state_labels,
            actions1,
            actions2,
            kernel: vec![None; slots],
            initial,
            discount,
            targets1: vec![false; n],
            targets2: vec![false; n],
            grid: None,
        }
    }

    /// Shorthand for anonymous states and actions, mostly for tests.
    pub fn with_sizes(states: usize, actions1: usize, actions2: usize, discount: f64) -> Self {
        Self::new(
            (0..states).map(|i| format!("s{i}")).collect(),
            (0..actions1).map(|i| format!("a{i}")).collect(),
            (0..actions2).map(|i| format!("b{i}")).collect(),
            0,
            discount,
        )
    }

    fn slot(&self, s: StateId, a: usize, b: usize) -> usize {
        (s * self.actions1.len() + a) * self.actions2.len() + b
    }

    pub fn set_transition(&mut self, s: StateId, a: usize, b: usize, dist: Distribution) {
        let i = self.slot(s, a, b);
        self.kernel[i] = Some(dist);
    }

    pub fn clear_transition(&mut self, s: StateId, a: usize, b: usize) {
        let i = self.slot(s, a, b);
        self.kernel[i] = None;
    }

    pub fn set_target(&mut self, player: Player, s: StateId, member: bool) {
        match player {
            Player::One => self.targets1[s] = member,
            Player::Two => self.targets2[s] = member,
        }
    }

    /// Makes `s` absorbing under every joint action.
    pub fn make_absorbing(&mut self, s: StateId) {
        for a in 0..self.actions1.len() {
            for b in 0..self.actions2.len() {
                self.set_transition(s, a, b, Distribution::point(s));
            }
        }
    }

    pub fn set_initial(&mut self, s: StateId) {
        self.initial = s;
    }

    pub fn set_discount(&mut self, discount: f64) {
        self.discount = discount;
    }

    pub(crate) fn set_grid(&mut self, grid: Option<GridConfig>) {
        self.grid = grid;
    }

    pub fn num_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn num_actions1(&self) -> usize {
        self.actions1.len()
    }

    pub fn num_actions2(&self) -> usize {
        self.actions2.len()
    }

    pub fn num_actions(&self, player: Player) -> usize {
        match player {
            Player::One => self.actions1.len(),
            Player::Two => self.actions2.len(),
        }
    }

    pub fn actions1(&self) -> &[String] {
        &self.actions1
    }

    pub fn actions2(&self) -> &[String] {
        &self.actions2
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn state_label(&self, s: StateId) -> &str {
        &self.state_labels[s]
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn grid(&self) -> Option<&GridConfig> {
        self.grid.as_ref()
    }

    pub fn targets(&self, player: Player) -> &[bool] {
        match player {
            Player::One => &self.targets1,
            Player::Two => &self.targets2,
        }
    }

    pub fn is_target(&self, player: Player, s: StateId) -> bool {
        self.targets(player)[s]
    }

    pub fn is_defined(&self, s: StateId, a: usize, b: usize) -> bool {
        self.kernel[self.slot(s, a, b)].is_some()
    }

    pub fn transition(&self, s: StateId, a: usize, b: usize) -> Option<&Distribution> {
        self.kernel[self.slot(s, a, b)].as_ref()
    }

    /// `P(. | s, (a, b))`, or an error where the kernel is undefined.
    pub fn successor_distribution(&self, s: StateId, a: usize, b: usize) -> Result<&Distribution> {
        if s >= self.num_states() || a >= self.actions1.len() || b >= self.actions2.len() {
            return Err(Error::UndefinedTransition {
                state: s,
                action1: a,
                action2: b,
            });
        }
        self.transition(s, a, b).ok_or(Error::UndefinedTransition {
            state: s,
            action1: a,
            action2: b,
        })
    }

    /// P1 actions defined against every P2 action at `s`.
    pub fn available_actions1(&self, s: StateId) -> Vec<usize> {
        (0..self.actions1.len())
            .filter(|&a| (0..self.actions2.len()).all(|b| self.is_defined(s, a, b)))
            .collect()
    }

    /// P2 actions defined against every available P1 action at `s`.
    pub fn available_actions2(&self, s: StateId) -> Vec<usize> {
        let avail1 = self.available_actions1(s);
        (0..self.actions2.len())
            .filter(|&b| avail1.iter().all(|&a| self.is_defined(s, a, b)))
            .collect()
    }

    pub fn available_actions(&self, player: Player, s: StateId) -> Vec<usize> {
        match player {
            Player::One => self.available_actions1(s),
            Player::Two => self.available_actions2(s),
        }
    }

    /// Successor distribution with actions given in `player`-relative order:
    /// `own` is the action of `player`, `opp` the opponent's.
    pub(crate) fn transition_for(
        &self,
        player: Player,
        s: StateId,
        own: usize,
        opp: usize,
    ) -> Option<&Distribution> {
        match player {
            Player::One => self.transition(s, own, opp),
            Player::Two => self.transition(s, opp, own),
        }
    }

    /// Draws a successor with the given generator.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        s: StateId,
        a: usize,
        b: usize,
        rng: &mut R,
    ) -> Result<StateId> {
        let dist = self.successor_distribution(s, a, b)?;
        Ok(dist.sample_with(rng.gen::<f64>()))
    }

    /// Draws a successor deterministically from a seed.
    pub fn sample_transition(&self, s: StateId, a: usize, b: usize, seed: u64) -> Result<StateId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(s, a, b, &mut rng)
    }

    pub fn action1_index(&self, name: &str) -> Option<usize> {
        self.actions1.iter().position(|n| n == name)
    }

    pub fn action2_index(&self, name: &str) -> Option<usize> {
        self.actions2.iter().position(|n| n == name)
    }
}

/// One invariant violation found by [`validate_game`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    RowSum {
        state: StateId,
        action1: usize,
        action2: usize,
        sum: f64,
    },
    NegativeProbability {
        state: StateId,
        action1: usize,
        action2: usize,
        successor: StateId,
        prob: f64,
    },
    SuccessorOutOfRange {
        state: StateId,
        action1: usize,
        action2: usize,
        successor: StateId,
    },
    TargetOverlap {
        state: StateId,
    },
    NonAbsorbingTarget {
        state: StateId,
        action1: usize,
        action2: usize,
    },
    NoAvailableAction {
        state: StateId,
        player: Player,
    },
    DiscountOutOfRange {
        discount: f64,
    },
    InitialOutOfRange {
        initial: StateId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action1, action2, sum } => write!(
                f,
                "row ({state}, {action1}, {action2}) sums to {sum}"
            ),
            Violation::NegativeProbability { state, action1, action2, successor, prob } => write!(
                f,
                "row ({state}, {action1}, {action2}) has negative mass {prob} on {successor}"
            ),
            Violation::SuccessorOutOfRange { state, action1, action2, successor } => write!(
                f,
                "row ({state}, {action1}, {action2}) points to unknown state {successor}"
            ),
            Violation::TargetOverlap { state } => write!(f, "state {state} is in both F1 and F2"),
            Violation::NonAbsorbingTarget { state, action1, action2 } => write!(
                f,
                "target state {state} is not absorbing under ({action1}, {action2})"
            ),
            Violation::NoAvailableAction { state, player } => {
                write!(f, "state {state} has no available action for {player}")
            }
            Violation::DiscountOutOfRange { discount } => {
                write!(f, "discount {discount} outside (0, 1]")
            }
            Violation::InitialOutOfRange { initial } => {
                write!(f, "initial state {initial} out of range")
            }
        }
    }
}

/// Checks every game invariant. An empty report means the game is
/// well-formed.
pub fn validate_game(game: &ConcurrentGame) -> Vec<Violation> {
    let mut report = Vec::new();
    let n = game.num_states();
    if !(game.discount > 0.0 && game.discount <= 1.0) {
        report.push(Violation::DiscountOutOfRange { discount: game.discount });
    }
    if game.initial >= n {
        report.push(Violation::InitialOutOfRange { initial: game.initial });
    }
    for s in 0..n {
        if game.targets1[s] && game.targets2[s] {
            report.push(Violation::TargetOverlap { state: s });
        }
        let is_target = game.targets1[s] || game.targets2[s];
        for a in 0..game.num_actions1() {
            for b in 0..game.num_actions2() {
                let Some(dist) = game.transition(s, a, b) else { continue };
                let mut sum = 0.0;
                for &(t, p) in dist.entries() {
                    if t >= n {
                        report.push(Violation::SuccessorOutOfRange {
                            state: s,
                            action1: a,
                            action2: b,
                            successor: t,
                        });
                    }
                    if p < 0.0 || p.is_nan() {
                        report.push(Violation::NegativeProbability {
                            state: s,
                            action1: a,
                            action2: b,
                            successor: t,
                            prob: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    report.push(Violation::RowSum { state: s, action1: a, action2: b, sum });
                }
                if is_target && !dist.is_point_mass_on(s) {
                    report.push(Violation::NonAbsorbingTarget { state: s, action1: a, action2: b });
                }
            }
        }
        if game.available_actions1(s).is_empty() {
            report.push(Violation::NoAvailableAction { state: s, player: Player::One });
        } else if game.available_actions2(s).is_empty() {
            report.push(Violation::NoAvailableAction { state: s, player: Player::Two });
        }
    }
    report
}

/// A finite play prefix `s0 (a0,b0) s1 (a1,b1) ... sn`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Play {
    states: Vec<StateId>,
    actions: Vec<(usize, usize)>,
}

impl Play {
    pub fn new(start: StateId) -> Self {
        Play { states: vec![start], actions: Vec::new() }
    }

    pub fn push(&mut self, a: usize, b: usize, next: StateId) {
        self.actions.push((a, b));
        self.states.push(next);
    }

    /// Number of transitions taken so far.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn actions(&self) -> &[(usize, usize)] {
        &self.actions
    }

    pub fn last_state(&self) -> StateId {
        *self.states.last().expect("play has a start state")
    }

    /// Checks that every step has positive kernel probability.
    pub fn is_consistent_with(&self, game: &ConcurrentGame) -> bool {
        self.actions.iter().enumerate().all(|(i, &(a, b))| {
            game.transition(self.states[i], a, b)
                .map(|d| d.prob(self.states[i + 1]) > 0.0)
                .unwrap_or(false)
        })
    }
}
