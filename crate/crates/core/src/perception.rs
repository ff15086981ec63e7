//! What P2 believes, and how P2 behaves while it believes it.
//!
//! P2 perceives a restricted game in which the hidden P1 actions do not
//! exist. The [`HypergameBundle`] collects every region, strategy and value
//! needed downstream for both the true and the perceived game.
//! [`BsrModel`] describes P2's play over time: perceived equilibrium until
//! detection, an unspecified learning phase, then the true equilibrium.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::{ConcurrentGame, ExplicitGame, Play, Player, StateId};
use crate::solvers::{
    check_asw_containment, compute_asw, evaluate_profile, evaluate_signed_profile, solve_zero_sum,
    uniform_row, AswSolution, GameTag, MixedStrategy,
};

/// Restricts P1 to `visible`: every kernel entry using another P1 action
/// becomes undefined. Idempotent.
pub fn derive_perceptual_game(game: &ConcurrentGame, visible: &[usize]) -> Result<ConcurrentGame> {
    let n1 = game.num_actions1();
    if visible.is_empty() {
        return Err(Error::Config("visible action set is empty".into()));
    }
    if let Some(&a) = visible.iter().find(|&&a| a >= n1) {
        return Err(Error::Config(format!("visible action {a} out of range")));
    }
    let mut g = game.clone();
    for s in 0..g.num_states() {
        for a in (0..n1).filter(|a| !visible.contains(a)) {
            for b in 0..g.num_actions2() {
                g.clear_transition(s, a, b);
            }
        }
        if g.available_actions1(s).is_empty() {
            return Err(Error::DeadState { state: s, player: Player::One });
        }
    }
    Ok(g)
}

/// Hex SHA-256 of the canonical explicit encoding of a game.
pub fn game_hash(game: &ConcurrentGame) -> String {
    let bytes = serde_json::to_vec(&ExplicitGame::from_game(game)).expect("game serializes");
    content_hash(&bytes)
}

/// Hex SHA-256 of raw bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Solutions of the true and the perceived game.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergameBundle {
    pub true_game: ConcurrentGame,
    pub perceptual_game: ConcurrentGame,
    pub data: BundleData,
}

/// Serializable part of a bundle; games are referenced by hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleData {
    pub true_game_hash: String,
    pub perceptual_game_hash: String,
    pub visible: Vec<usize>,
    pub gamma: f64,
    pub tol: f64,
    pub asw1: AswSolution,
    pub asw2: AswSolution,
    pub asw1_perceptual: AswSolution,
    pub asw2_perceptual: AswSolution,
    /// Composite equilibrium strategies of the true game.
    pub p1_true: MixedStrategy,
    pub p2_true: MixedStrategy,
    /// Composite equilibrium strategies of the perceived game.
    pub p1_perceptual: MixedStrategy,
    pub p2_perceptual: MixedStrategy,
    /// Zero-sum value of the true game (`+1`/`-1` on the regions).
    pub value: Vec<f64>,
    pub value_perceptual: Vec<f64>,
    /// Discounted probability of entering each player's region under the
    /// true equilibrium.
    pub reach1: Vec<f64>,
    pub reach2: Vec<f64>,
    /// Signed profile evaluation of the true equilibrium; the payoff P1
    /// expects once P2 plays the true game.
    pub baseline: Vec<f64>,
}

impl HypergameBundle {
    pub fn gamma(&self) -> f64 {
        self.data.gamma
    }

    pub fn num_states(&self) -> usize {
        self.true_game.num_states()
    }

    pub fn in_asw1(&self, s: StateId) -> bool {
        self.data.asw1.region.contains(s)
    }

    pub fn in_asw2(&self, s: StateId) -> bool {
        self.data.asw2.region.contains(s)
    }

    /// Whether `s` lies in either true almost-sure region.
    pub fn is_decided(&self, s: StateId) -> bool {
        self.in_asw1(s) || self.in_asw2(s)
    }

    pub fn hidden_actions(&self) -> Vec<usize> {
        (0..self.true_game.num_actions1()).filter(|a| !self.data.visible.contains(a)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.data)?)?;
        Ok(())
    }

    /// Reattaches serialized solutions to the game they were computed for.
    pub fn load(path: &Path, true_game: ConcurrentGame) -> Result<Self> {
        let data: BundleData = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_data(data, true_game)
    }

    pub fn from_data(data: BundleData, true_game: ConcurrentGame) -> Result<Self> {
        if game_hash(&true_game) != data.true_game_hash {
            return Err(Error::Precondition("bundle was solved for a different game".into()));
        }
        let perceptual_game = derive_perceptual_game(&true_game, &data.visible)?;
        if game_hash(&perceptual_game) != data.perceptual_game_hash {
            return Err(Error::Precondition("perceived game hash mismatch".into()));
        }
        Ok(HypergameBundle { true_game, perceptual_game, data })
    }
}

/// Solves both games.
///
/// Fails with [`Error::ContainmentViolation`] if P2's true region is not
/// contained in its perceived region, which would mean the restriction
/// helped P1.
pub fn build_hypergame(
    game: &ConcurrentGame,
    visible: &[usize],
    gamma: f64,
    tol: f64,
) -> Result<HypergameBundle> {
    let perceptual = derive_perceptual_game(game, visible)?;
    let asw1 = compute_asw(game, Player::One, GameTag::TrueGame)?;
    let asw2 = compute_asw(game, Player::Two, GameTag::TrueGame)?;
    let asw1p = compute_asw(&perceptual, Player::One, GameTag::Perceptual)?;
    let asw2p = compute_asw(&perceptual, Player::Two, GameTag::Perceptual)?;
    if !check_asw_containment(&asw2.region, &asw2p.region)? {
        let s = asw2.region.iter().find(|&s| !asw2p.region.contains(s)).unwrap_or(0);
        return Err(Error::ContainmentViolation(s));
    }
    let zs = solve_zero_sum(game, &asw1, &asw2, gamma, tol)?;
    let zsp = solve_zero_sum(&perceptual, &asw1p, &asw2p, gamma, tol)?;
    let (p1, p2) = (zs.strategy1, zs.strategy2);
    let reach1 = evaluate_profile(game, &p1, &p2, &asw1.region, gamma, tol)?;
    let reach2 = evaluate_profile(game, &p1, &p2, &asw2.region, gamma, tol)?;
    let baseline = evaluate_signed_profile(game, &p1, &p2, &asw1.region, &asw2.region, gamma, tol)?;
    let data = BundleData {
        true_game_hash: game_hash(game),
        perceptual_game_hash: game_hash(&perceptual),
        visible: visible.to_vec(),
        gamma,
        tol,
        asw1,
        asw2,
        asw1_perceptual: asw1p,
        asw2_perceptual: asw2p,
        p1_true: p1,
        p2_true: p2,
        p1_perceptual: zsp.strategy1,
        p2_perceptual: zsp.strategy2,
        value: zs.values,
        value_perceptual: zsp.values,
        reach1,
        reach2,
        baseline,
    };
    Ok(HypergameBundle { true_game: game.clone(), perceptual_game: perceptual, data })
}

/// Timeline of one deception episode, in game steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeceptionTimeline {
    /// Step at which P1 first uses its full action set.
    pub switch: usize,
    /// Steps from the switch until the test fires; `None` while undetected.
    pub detection_delay: Option<usize>,
    /// Steps P2 needs to move to the true equilibrium after detection.
    pub learning_delay: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perceptual,
    Learning,
    True,
}

impl DeceptionTimeline {
    pub fn detection_step(&self) -> Option<usize> {
        self.detection_delay.map(|k| self.switch + k)
    }

    /// P2's phase at step `i`: perceived play through the detection step,
    /// learning for the next `learning_delay` steps, then true play.
    pub fn phase(&self, i: usize) -> Phase {
        match self.detection_step() {
            None => Phase::Perceptual,
            Some(n) if i <= n => Phase::Perceptual,
            Some(n) if i <= n + self.learning_delay => Phase::Learning,
            Some(_) => Phase::True,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BsrAction {
    Defined(Vec<f64>),
    Undefined,
}

/// P2's behaviorally subjectively rational strategy, partially defined.
#[derive(Debug, Clone)]
pub struct BsrModel<'a> {
    pub bundle: &'a HypergameBundle,
    pub timeline: DeceptionTimeline,
}

impl<'a> BsrModel<'a> {
    pub fn new(bundle: &'a HypergameBundle, timeline: DeceptionTimeline) -> Self {
        BsrModel { bundle, timeline }
    }

    /// Mixed action after `history`; the current step is `history.len()`.
    pub fn action(&self, history: &Play) -> BsrAction {
        self.action_at(history.len(), history.last_state())
    }

    pub fn action_at(&self, step: usize, s: StateId) -> BsrAction {
        let d = &self.bundle.data;
        match self.timeline.phase(step) {
            Phase::Perceptual => BsrAction::Defined(d.p2_perceptual.row(s).to_vec()),
            Phase::Learning => BsrAction::Undefined,
            Phase::True => BsrAction::Defined(d.p2_true.row(s).to_vec()),
        }
    }
}

/// How P2 plays during the learning phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Keep the perceived equilibrium.
    KeepPerceptual,
    /// Uniform over actions available in the true game.
    UniformRandom,
    /// An explicit memoryless strategy.
    Fixed(MixedStrategy),
}

/// A BSR model made total by a fill policy.
#[derive(Debug, Clone)]
pub struct BsrCompletion<'a> {
    pub model: BsrModel<'a>,
    pub fill: FillPolicy,
}

pub fn complete_bsr<'a>(model: BsrModel<'a>, fill: FillPolicy) -> BsrCompletion<'a> {
    BsrCompletion { model, fill }
}

impl BsrCompletion<'_> {
    pub fn action(&self, history: &Play) -> Vec<f64> {
        self.action_at(history.len(), history.last_state())
    }

    pub fn action_at(&self, step: usize, s: StateId) -> Vec<f64> {
        match self.model.action_at(step, s) {
            BsrAction::Defined(row) => row,
            BsrAction::Undefined => fill_row(self.model.bundle, &self.fill, s),
        }
    }
}

pub(crate) fn fill_row(bundle: &HypergameBundle, fill: &FillPolicy, s: StateId) -> Vec<f64> {
    let g = &bundle.true_game;
    match fill {
        FillPolicy::KeepPerceptual => bundle.data.p2_perceptual.row(s).to_vec(),
        FillPolicy::UniformRandom => uniform_row(g.num_actions2(), &g.available_actions2(s)),
        FillPolicy::Fixed(st) => st.row(s).to_vec(),
    }
}

/// Learning-phase behaviors used to probe the payoff bound.
pub fn adversarial_menu(bundle: &HypergameBundle) -> Vec<FillPolicy> {
    vec![
        FillPolicy::KeepPerceptual,
        FillPolicy::UniformRandom,
        FillPolicy::Fixed(bundle.data.p2_true.clone()),
    ]
}

/// Checks that P2's perceived play never puts mass on P2 actions that the
/// true game leaves undefined at `s`.
pub fn bsr_is_consistent(bundle: &HypergameBundle) -> Result<()> {
    let g = &bundle.true_game;
    let p2 = &bundle.data.p2_perceptual;
    for s in 0..g.num_states() {
        let avail = g.available_actions2(s);
        if p2.support(s).any(|(b, _)| !avail.contains(&b)) {
            return Err(Error::Precondition(format!(
                "perceived strategy uses an action unavailable at state {s}"
            )));
        }
    }
    Ok(())
}
