//! The switching problem as a finite MDP.
//!
//! Decision states are `(s, level, flag)`: the game state, the discretized
//! detector statistic and whether P1 has already switched. P1 picks a
//! macro-action (keep playing the perceived equilibrium, or play the true
//! one); nature then resolves both players' actions and the successor.
//! Nature states `(s, level, flag, a, b)` are materialized only when some
//! decision reaches them with positive probability.
//!
//! Rewards are paid on nature states and only at the end of an episode:
//! `+1` or `-1` once play sits in a true almost-sure region, and the
//! baseline equilibrium payoff once the detector has fired.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phi::PhiGrid;
use crate::detection::{build_hypotheses, log_likelihood_ratio, DetectorConfig, Observation, ObservationMode};
use crate::error::{Error, Result};
use crate::game::StateId;
use crate::perception::HypergameBundle;
use crate::solvers::sweeps_for;

/// Index of the episode-ending sink among successors.
pub const SINK: u32 = u32::MAX;

/// Relative margin by which switching must beat waiting to be chosen.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroAction {
    /// Keep to the perceived equilibrium.
    Perceptual,
    /// Use the true equilibrium, hidden actions included.
    True,
}

impl MacroAction {
    fn index(self) -> usize {
        match self {
            MacroAction::Perceptual => 0,
            MacroAction::True => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpVariant {
    /// P2 detects through the CUSUM test.
    Deception,
    /// P2 recognizes the true game the moment P1 switches.
    StrongOpponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub delta: f64,
    pub detector: DetectorConfig,
    /// Multiplies every reward (1 or 100 in reports).
    pub scale: f64,
}

impl PlannerConfig {
    pub fn new(delta: f64, threshold: f64) -> Self {
        PlannerConfig { delta, detector: DetectorConfig::new(threshold), scale: 1.0 }
    }

    pub fn grid(&self) -> Result<PhiGrid> {
        PhiGrid::new(self.delta, self.detector.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionState {
    pub state: StateId,
    pub level: usize,
    pub switched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NatureState {
    pub state: StateId,
    pub level: usize,
    pub switched: bool,
    /// Joint action; `None` for episode-ending states.
    pub actions: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiMdp {
    pub grid: PhiGrid,
    pub gamma: f64,
    pub scale: f64,
    pub variant: MdpVariant,
    pub num_game_states: usize,
    pub nature: Vec<NatureState>,
    pub nature_reward: Vec<f64>,
    nature_start: Vec<usize>,
    nature_edges: Vec<(u32, f64)>,
    /// CSR over `decision * 2 + macro`; an empty range means unavailable.
    decision_start: Vec<usize>,
    decision_edges: Vec<(u32, f64)>,
}

impl SemiMdp {
    pub fn num_decisions(&self) -> usize {
        self.num_game_states * self.grid.len() * 2
    }

    pub fn num_nature(&self) -> usize {
        self.nature.len()
    }

    pub fn decision_index(&self, s: StateId, level: usize, switched: bool) -> usize {
        decision_index(self.grid.len(), s, level, switched)
    }

    pub fn decision_state(&self, d: usize) -> DecisionState {
        let switched = d % 2 == 1;
        let rest = d / 2;
        DecisionState { state: rest / self.grid.len(), level: rest % self.grid.len(), switched }
    }

    /// Initial decision state for a game state: nothing observed, not
    /// switched.
    pub fn root(&self, s: StateId) -> usize {
        self.decision_index(s, 0, false)
    }

    pub fn macro_edges(&self, d: usize, m: MacroAction) -> &[(u32, f64)] {
        let k = d * 2 + m.index();
        &self.decision_edges[self.decision_start[k]..self.decision_start[k + 1]]
    }

    pub fn is_available(&self, d: usize, m: MacroAction) -> bool {
        !self.macro_edges(d, m).is_empty()
    }

    pub fn nature_edges(&self, n: usize) -> &[(u32, f64)] {
        &self.nature_edges[self.nature_start[n]..self.nature_start[n + 1]]
    }

    /// Largest absolute one-step reward.
    pub fn max_reward(&self) -> f64 {
        self.nature_reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    fn nature_values(&self, vd: &[f64]) -> Vec<f64> {
        (0..self.nature.len())
            .into_par_iter()
            .map(|n| {
                let cont: f64 = self
                    .nature_edges(n)
                    .iter()
                    .map(|&(t, p)| if t == SINK { 0.0 } else { p * vd[t as usize] })
                    .sum();
                self.nature_reward[n] + self.gamma * cont
            })
            .collect()
    }

    fn q(&self, vn: &[f64], d: usize, m: MacroAction) -> Option<f64> {
        let e = self.macro_edges(d, m);
        (!e.is_empty()).then(|| e.iter().map(|&(n, p)| p * vn[n as usize]).sum())
    }
}

fn decision_index(levels: usize, s: StateId, level: usize, switched: bool) -> usize {
    (s * levels + level) * 2 + usize::from(switched)
}

pub fn build_semi_mdp(bundle: &HypergameBundle, cfg: &PlannerConfig) -> Result<SemiMdp> {
    build(bundle, cfg, MdpVariant::Deception)
}

/// Same state space, but switching ends the episode with the baseline
/// payoff: P2 is assumed to see through the switch at once.
pub fn build_strong_opponent_mdp(bundle: &HypergameBundle, cfg: &PlannerConfig) -> Result<SemiMdp> {
    build(bundle, cfg, MdpVariant::StrongOpponent)
}

struct Builder<'a> {
    bundle: &'a HypergameBundle,
    grid: PhiGrid,
    scale: f64,
    n1: usize,
    n2: usize,
    /// Dense key -> nature index.
    lookup: Vec<u32>,
    nature: Vec<NatureState>,
    queue: VecDeque<usize>,
    seen: Vec<bool>,
}

impl Builder<'_> {
    fn slots(&self) -> usize {
        self.n1 * self.n2 + 1
    }

    fn nature_id(&mut self, d: usize, actions: Option<(usize, usize)>) -> u32 {
        let slot = match actions {
            Some((a, b)) => a * self.n2 + b,
            None => self.n1 * self.n2,
        };
        let key = d * self.slots() + slot;
        if self.lookup[key] == SINK {
            let ds = decision_of(self.grid.len(), d);
            self.lookup[key] = self.nature.len() as u32;
            self.nature.push(NatureState { state: ds.state, level: ds.level, switched: ds.switched, actions });
        }
        self.lookup[key]
    }

    fn visit(&mut self, d: usize) {
        if !self.seen[d] {
            self.seen[d] = true;
            self.queue.push_back(d);
        }
    }

    /// Whether a decision state ends the episode.
    fn terminal(&self, ds: &DecisionState) -> bool {
        self.bundle.is_decided(ds.state) || self.grid.is_exceeded(ds.level)
    }
}

fn decision_of(levels: usize, d: usize) -> DecisionState {
    let rest = d / 2;
    DecisionState { state: rest / levels, level: rest % levels, switched: d % 2 == 1 }
}

fn build(bundle: &HypergameBundle, cfg: &PlannerConfig, variant: MdpVariant) -> Result<SemiMdp> {
    cfg.detector.validate()?;
    let grid = cfg.grid()?;
    let gamma = bundle.gamma();
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("discount {gamma} must lie in (0, 1)")));
    }
    search(bundle, cfg, variant, grid)
}

/// Builds the reachable MDP with a forward search from every root.
fn search(bundle: &HypergameBundle, cfg: &PlannerConfig, variant: MdpVariant, grid: PhiGrid) -> Result<SemiMdp> {
    let g = &bundle.true_game;
    let gp = &bundle.perceptual_game;
    let d = &bundle.data;
    let n = g.num_states();
    let (n1, n2) = (g.num_actions1(), g.num_actions2());
    let levels = grid.len();
    let num_dec = n * levels * 2;
    let (null, alt) = build_hypotheses(bundle, cfg.detector.mode);
    let gamma = bundle.gamma();

    let mut b = Builder {
        bundle,
        grid,
        scale: cfg.scale,
        n1,
        n2,
        lookup: vec![SINK; num_dec * (n1 * n2 + 1)],
        nature: Vec::new(),
        queue: VecDeque::new(),
        seen: vec![false; num_dec],
    };
    let mut dec_lists: Vec<[Vec<(u32, f64)>; 2]> = vec![[Vec::new(), Vec::new()]; num_dec];
    let mut nat_lists: Vec<(f64, Vec<(u32, f64)>)> = Vec::new();
    for s in 0..n {
        b.visit(decision_index(levels, s, 0, false));
    }
    let mut expanded = 0usize;
    loop {
        let Some(di) = b.queue.pop_front() else {
            if expanded == b.nature.len() {
                break;
            }
            // expand pending nature states; may enqueue decisions
            while expanded < b.nature.len() {
                let ns = b.nature[expanded];
                let entry = expand_nature(&mut b, &ns, gp, &null, &alt, cfg)?;
                nat_lists.push(entry);
                expanded += 1;
            }
            continue;
        };
        let ds = decision_of(levels, di);
        let s = ds.state;
        if b.terminal(&ds) {
            let id = b.nature_id(di, None);
            dec_lists[di][1] = vec![(id, 1.0)];
            if !ds.switched {
                dec_lists[di][0] = vec![(id, 1.0)];
            }
            continue;
        }
        let p2 = d.p2_perceptual.row(s);
        if p2.is_empty() {
            return Err(Error::UndefinedStrategy(s));
        }
        for m in [MacroAction::Perceptual, MacroAction::True] {
            if ds.switched && m == MacroAction::Perceptual {
                continue;
            }
            let p1 = match m {
                MacroAction::Perceptual => &d.p1_perceptual,
                MacroAction::True => &d.p1_true,
            };
            if !p1.is_defined(s) {
                return Err(Error::UndefinedStrategy(s));
            }
            let target = decision_index(levels, s, ds.level, m == MacroAction::True);
            if m == MacroAction::True && !ds.switched && variant == MdpVariant::StrongOpponent {
                let id = b.nature_id(target, None);
                dec_lists[di][1] = vec![(id, 1.0)];
                continue;
            }
            let mut list = Vec::new();
            for (a, pa) in p1.support(s) {
                for (bb, pb) in p2.iter().copied().enumerate().filter(|e| e.1 > 0.0) {
                    list.push((b.nature_id(target, Some((a, bb))), pa * pb));
                }
            }
            dec_lists[di][m.index()] = list;
        }
    }
    let mut decision_start = Vec::with_capacity(num_dec * 2 + 1);
    let mut decision_edges = Vec::new();
    decision_start.push(0);
    for lists in dec_lists {
        for l in lists {
            decision_edges.extend(l);
            decision_start.push(decision_edges.len());
        }
    }
    let mut nature_start = Vec::with_capacity(nat_lists.len() + 1);
    let mut nature_edges = Vec::new();
    let mut nature_reward = Vec::with_capacity(nat_lists.len());
    nature_start.push(0);
    for (r, l) in nat_lists {
        nature_reward.push(r);
        nature_edges.extend(l);
        nature_start.push(nature_edges.len());
    }
    Ok(SemiMdp {
        grid,
        gamma,
        scale: cfg.scale,
        variant,
        num_game_states: n,
        nature: b.nature,
        nature_reward,
        nature_start,
        nature_edges,
        decision_start,
        decision_edges,
    })
}

fn expand_nature(
    b: &mut Builder<'_>,
    ns: &NatureState,
    perceptual: &crate::game::ConcurrentGame,
    null: &crate::detection::HypothesisChain,
    alt: &crate::detection::HypothesisChain,
    cfg: &PlannerConfig,
) -> Result<(f64, Vec<(u32, f64)>)> {
    let bundle = b.bundle;
    let s = ns.state;
    let levels = b.grid.len();
    let Some((a, bb)) = ns.actions else {
        let r = if bundle.in_asw1(s) {
            1.0
        } else if bundle.in_asw2(s) {
            -1.0
        } else {
            bundle.data.baseline[s]
        };
        return Ok((r * b.scale, Vec::new()));
    };
    let mut edges = Vec::new();
    if !ns.switched {
        let dist = perceptual.successor_distribution(s, a, bb)?;
        for (t, p) in dist.iter() {
            let di = decision_index(levels, t, ns.level, false);
            b.visit(di);
            edges.push((di as u32, p));
        }
    } else {
        let dist = bundle.true_game.successor_distribution(s, a, bb)?;
        let mid = b.grid.midpoint(ns.level);
        for (t, p) in dist.iter() {
            let action1 = (cfg.detector.mode == ObservationMode::StatesAndActions).then_some(a);
            let obs = Observation { from: s, action2: bb, to: t, action1 };
            let llr = log_likelihood_ratio(null, alt, &obs, cfg.detector.zero_prob)?;
            let level = if llr == f64::INFINITY {
                b.grid.exceeded()
            } else {
                b.grid.discretize((mid + llr).max(0.0))
            };
            let di = decision_index(levels, t, level, true);
            b.visit(di);
            edges.push((di as u32, p));
        }
    }
    // successors sharing a decision state are merged
    edges.sort_by_key(|e| e.0);
    edges.dedup_by(|x, y| {
        if x.0 == y.0 {
            y.1 += x.1;
            true
        } else {
            false
        }
    });
    Ok((0.0, edges))
}

/// P1's choice at every decision state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPolicy {
    pub grid: PhiGrid,
    pub num_game_states: usize,
    pub actions: Vec<MacroAction>,
}

impl SwitchPolicy {
    pub fn action(&self, s: StateId, level: usize, switched: bool) -> MacroAction {
        if switched {
            return MacroAction::True;
        }
        self.actions[decision_index(self.grid.len(), s, level, false)]
    }

    /// Always keep to the perceived equilibrium.
    pub fn never_switch(mdp: &SemiMdp) -> Self {
        let mut actions = vec![MacroAction::Perceptual; mdp.num_decisions()];
        for (d, a) in actions.iter_mut().enumerate() {
            if d % 2 == 1 {
                *a = MacroAction::True;
            }
        }
        SwitchPolicy { grid: mdp.grid, num_game_states: mdp.num_game_states, actions }
    }

    /// Re-expresses the policy on another grid: each target level takes
    /// the choice made at the level containing its midpoint.
    pub fn transfer(&self, grid: PhiGrid) -> SwitchPolicy {
        let n = self.num_game_states;
        let mut actions = Vec::with_capacity(n * grid.len() * 2);
        for s in 0..n {
            for l in 0..grid.len() {
                let src = if grid.is_exceeded(l) {
                    self.grid.exceeded()
                } else {
                    self.grid.discretize(grid.midpoint(l))
                };
                actions.push(self.action(s, src, false));
                actions.push(MacroAction::True);
            }
        }
        SwitchPolicy { grid, num_game_states: n, actions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiMdpSolution {
    pub decision_values: Vec<f64>,
    pub nature_values: Vec<f64>,
    pub policy: SwitchPolicy,
    pub iterations: usize,
    pub residual: f64,
}

impl SemiMdpSolution {
    pub fn value(&self, mdp: &SemiMdp, s: StateId, level: usize, switched: bool) -> f64 {
        self.decision_values[mdp.decision_index(s, level, switched)]
    }

    pub fn root_value(&self, mdp: &SemiMdp, s: StateId) -> f64 {
        self.decision_values[mdp.root(s)]
    }
}

/// Value iteration on decision states until the sup-norm change drops to
/// `tol`. Ties between the macros go to waiting.
pub fn solve_semi_mdp(mdp: &SemiMdp, tol: f64) -> Result<SemiMdpSolution> {
    let nd = mdp.num_decisions();
    let mut vd = vec![0.0; nd];
    let max_iter = 2 * sweeps_for(mdp.gamma, mdp.max_reward().max(1.0), tol) + 100;
    let mut iterations = 0;
    let residual = loop {
        let vn = mdp.nature_values(&vd);
        let next: Vec<f64> = (0..nd)
            .into_par_iter()
            .map(|d| greedy(mdp, &vn, d).1)
            .collect();
        let res = next.iter().zip(&vd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        vd = next;
        iterations += 1;
        if res <= tol {
            break res;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations, residual: res, tol });
        }
    };
    let vn = mdp.nature_values(&vd);
    let actions = (0..nd)
        .map(|d| if d % 2 == 1 { MacroAction::True } else { greedy(mdp, &vn, d).0 })
        .collect();
    let policy = SwitchPolicy { grid: mdp.grid, num_game_states: mdp.num_game_states, actions };
    Ok(SemiMdpSolution { decision_values: vd, nature_values: vn, policy, iterations, residual })
}

fn greedy(mdp: &SemiMdp, vn: &[f64], d: usize) -> (MacroAction, f64) {
    let wait = mdp.q(vn, d, MacroAction::Perceptual);
    let go = mdp.q(vn, d, MacroAction::True);
    match (wait, go) {
        (Some(w), Some(g)) if g > w + TIE_EPS * w.abs().max(mdp.scale) => (MacroAction::True, g),
        (Some(w), _) => (MacroAction::Perceptual, w),
        (None, Some(g)) => (MacroAction::True, g),
        (None, None) => (MacroAction::Perceptual, 0.0),
    }
}

/// Values of a fixed policy, with the sweep count fixed in advance so that
/// policies agreeing on the reachable states get identical values.
pub fn evaluate_policy(mdp: &SemiMdp, policy: &SwitchPolicy, tol: f64) -> Result<Vec<f64>> {
    if policy.grid != mdp.grid || policy.num_game_states != mdp.num_game_states {
        return Err(Error::Dimension("policy was made for a different grid".into()));
    }
    let nd = mdp.num_decisions();
    let k = sweeps_for(mdp.gamma, mdp.max_reward(), tol);
    let mut vd = vec![0.0; nd];
    for _ in 0..k {
        let vn = mdp.nature_values(&vd);
        vd = (0..nd)
            .into_par_iter()
            .map(|d| {
                let ds = mdp.decision_state(d);
                let m = policy.action(ds.state, ds.level, ds.switched);
                mdp.q(&vn, d, m).or_else(|| mdp.q(&vn, d, MacroAction::Perceptual)).unwrap_or(0.0)
            })
            .collect();
    }
    Ok(vd)
}

/// Gain from deceiving at one state, in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VodReport {
    pub state: StateId,
    pub planner_value: f64,
    pub baseline: f64,
    pub value_of_deception: f64,
}

pub fn value_of_deception(
    mdp: &SemiMdp,
    sol: &SemiMdpSolution,
    bundle: &HypergameBundle,
    s: StateId,
) -> Result<VodReport> {
    if bundle.is_decided(s) {
        return Err(Error::OutOfScope(s));
    }
    let planner_value = sol.root_value(mdp, s);
    let baseline = bundle.data.baseline[s] * mdp.scale;
    Ok(VodReport { state: s, planner_value, baseline, value_of_deception: planner_value - baseline })
}

/// Reports for every state outside both true regions.
pub fn vod_table(mdp: &SemiMdp, sol: &SemiMdpSolution, bundle: &HypergameBundle) -> Vec<VodReport> {
    (0..bundle.num_states())
        .filter(|&s| !bundle.is_decided(s))
        .map(|s| value_of_deception(mdp, sol, bundle, s).expect("undecided state"))
        .collect()
}
