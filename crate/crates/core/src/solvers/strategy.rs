use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::game::{ConcurrentGame, Player, StateId, PROB_TOL};

/// Which game a region or strategy was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameTag {
    TrueGame,
    Perceptual,
}

/// A set of states, serialized as a `0`/`1` bitstring in state order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSet {
    pub player: Player,
    pub game: GameTag,
    #[serde(serialize_with = "bits_out", deserialize_with = "bits_in")]
    pub members: Vec<bool>,
}

fn bits_out<S: Serializer>(bits: &[bool], ser: S) -> std::result::Result<S::Ok, S::Error> {
    let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    ser.serialize_str(&s)
}

fn bits_in<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<bool>, D::Error> {
    let s = String::deserialize(de)?;
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(serde::de::Error::custom(format!("bad bit {other:?}"))),
        })
        .collect()
}

impl RegionSet {
    pub fn empty(player: Player, game: GameTag, n: usize) -> Self {
        RegionSet { player, game, members: vec![false; n] }
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.members[s]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_states(&self) -> usize {
        self.members.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.members.iter().enumerate().filter_map(|(s, &m)| m.then_some(s))
    }

    pub fn is_subset_of(&self, other: &RegionSet) -> bool {
        self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }
}

/// Memoryless randomized strategy: one distribution over the owner's
/// actions per state. An empty row means the strategy is undefined there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub num_actions: usize,
    pub rows: Vec<Vec<f64>>,
}

impl MixedStrategy {
    pub fn undefined(num_states: usize, num_actions: usize) -> Self {
        MixedStrategy { num_actions, rows: vec![Vec::new(); num_states] }
    }

    /// Uniform over the player's available actions at every state.
    pub fn uniform_available(game: &ConcurrentGame, player: Player) -> Self {
        let k = game.num_actions(player);
        let rows = (0..game.num_states())
            .map(|s| uniform_row(k, &game.available_actions(player, s)))
            .collect();
        MixedStrategy { num_actions: k, rows }
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.rows[s]
    }

    pub fn is_defined(&self, s: StateId) -> bool {
        !self.rows[s].is_empty()
    }

    pub fn prob(&self, s: StateId, action: usize) -> f64 {
        self.rows[s].get(action).copied().unwrap_or(0.0)
    }

    pub fn set_row(&mut self, s: StateId, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.num_actions);
        self.rows[s] = row;
    }

    /// `(action, prob)` pairs with positive probability.
    pub fn support(&self, s: StateId) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[s].iter().copied().enumerate().filter(|&(_, p)| p > 0.0)
    }

    /// Checks row sums and that mass sits only on available actions.
    pub fn check(&self, game: &ConcurrentGame, player: Player) -> Result<()> {
        if self.num_actions != game.num_actions(player) || self.rows.len() != game.num_states() {
            return Err(Error::Dimension("strategy shape does not match game".into()));
        }
        for (s, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Dimension(format!("row {s} is not a distribution")));
            }
            let avail = game.available_actions(player, s);
            if let Some((a, _)) = row.iter().enumerate().find(|&(a, &p)| p > 0.0 && !avail.contains(&a)) {
                return Err(Error::Dimension(format!(
                    "row {s} puts mass on unavailable action {a}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn uniform_row(num_actions: usize, support: &[usize]) -> Vec<f64> {
    let mut row = vec![0.0; num_actions];
    if support.is_empty() {
        return row;
    }
    let p = 1.0 / support.len() as f64;
    for &a in support {
        row[a] = p;
    }
    row
}
