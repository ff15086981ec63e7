//! Discounted zero-sum values outside the almost-sure regions, and policy
//! evaluation for fixed profiles.
//!
//! Entering P1's region pays `+1`, entering P2's pays `-1`, both discounted
//! by the number of steps taken, and play stops there. The stage game at a
//! state `s` outside both regions is
//!
//! `Q(a, b) = gamma * sum_t P(t | s, a, b) * (r(t) + V(t))`
//!
//! with `V = 0` and `r = +-1` on the regions. Sweeps are Jacobi-style so the
//! result does not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::asw::AswSolution;
use super::matrix::{solve_matrix_game, MatrixGame};
use super::strategy::{uniform_row, MixedStrategy, RegionSet};
use crate::error::{Error, Result};
use crate::game::{ConcurrentGame, Player, StateId};

/// Gap tolerance for stage-game solves.
const STAGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSumSolution {
    /// P1's value; `+1` on P1's region and `-1` on P2's.
    pub values: Vec<f64>,
    /// Equilibrium strategies outside the regions, the almost-sure
    /// strategies inside the owner's region, and uniform play inside the
    /// opponent's region.
    pub strategy1: MixedStrategy,
    pub strategy2: MixedStrategy,
    pub iterations: usize,
    /// Sup-norm change per sweep.
    pub residuals: Vec<f64>,
}

fn check_discount(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("discount {gamma} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_region(game: &ConcurrentGame, r: &RegionSet, player: Player) -> Result<()> {
    if r.num_states() != game.num_states() {
        return Err(Error::RegionMismatch(format!(
            "region has {} states, game has {}",
            r.num_states(),
            game.num_states()
        )));
    }
    if r.player != player {
        return Err(Error::RegionMismatch(format!("expected a region of {player}")));
    }
    Ok(())
}

/// Sweeps needed so that `gamma^k * scale / (1 - gamma) <= tol`.
pub(crate) fn sweeps_for(gamma: f64, scale: f64, tol: f64) -> usize {
    if scale <= 0.0 {
        return 1;
    }
    let k = (tol * (1.0 - gamma) / scale).ln() / gamma.ln();
    k.ceil().max(1.0) as usize
}

pub fn solve_zero_sum(
    game: &ConcurrentGame,
    asw1: &AswSolution,
    asw2: &AswSolution,
    gamma: f64,
    tol: f64,
) -> Result<ZeroSumSolution> {
    check_discount(gamma)?;
    check_region(game, &asw1.region, Player::One)?;
    check_region(game, &asw2.region, Player::Two)?;
    let n = game.num_states();
    let (r1, r2) = (&asw1.region.members, &asw2.region.members);
    let active: Vec<StateId> = (0..n).filter(|&s| !r1[s] && !r2[s]).collect();
    let stages: Vec<Stage> = active.iter().map(|&s| Stage::new(game, s)).collect();
    for st in &stages {
        if st.rows.is_empty() || st.cols.is_empty() {
            let player = if st.rows.is_empty() { Player::One } else { Player::Two };
            return Err(Error::DeadState { state: st.s, player });
        }
    }
    let reward = |t: StateId| {
        if r1[t] {
            1.0
        } else if r2[t] {
            -1.0
        } else {
            0.0
        }
    };

    let mut v = vec![0.0; n];
    for s in 0..n {
        v[s] = reward(s);
    }
    // continuation value: 0 inside the regions, V elsewhere
    let cont = |v: &[f64], t: StateId| if r1[t] || r2[t] { 0.0 } else { v[t] };

    let max_iter = 2 * sweeps_for(gamma, 1.0, tol) + 100;
    let mut residuals = Vec::new();
    let mut iterations = 0;
    loop {
        let next: Vec<f64> = stages
            .par_iter()
            .map(|st| {
                let m = st.matrix(game, gamma, |t| reward(t) + cont(&v, t))?;
                Ok(solve_matrix_game(&m, STAGE_TOL)?.value)
            })
            .collect::<Result<_>>()?;
        let mut res = 0.0f64;
        for (st, x) in stages.iter().zip(next) {
            res = res.max((x - v[st.s]).abs());
            v[st.s] = x;
        }
        residuals.push(res);
        iterations += 1;
        if res <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations, residual: res, tol });
        }
    }

    let mut strategy1 = MixedStrategy::undefined(n, game.num_actions1());
    let mut strategy2 = MixedStrategy::undefined(n, game.num_actions2());
    let solved: Vec<_> = stages
        .par_iter()
        .map(|st| {
            let m = st.matrix(game, gamma, |t| reward(t) + cont(&v, t))?;
            Ok(solve_matrix_game(&m, STAGE_TOL)?)
        })
        .collect::<Result<_>>()?;
    for (st, sol) in stages.iter().zip(solved) {
        let mut x = vec![0.0; game.num_actions1()];
        for (i, &a) in st.rows.iter().enumerate() {
            x[a] = sol.row_strategy[i];
        }
        let mut y = vec![0.0; game.num_actions2()];
        for (j, &b) in st.cols.iter().enumerate() {
            y[b] = sol.col_strategy[j];
        }
        strategy1.set_row(st.s, x);
        strategy2.set_row(st.s, y);
    }
    for s in 0..n {
        if r1[s] {
            strategy1.set_row(s, asw1.strategy.row(s).to_vec());
            strategy2.set_row(s, uniform_row(game.num_actions2(), &game.available_actions2(s)));
        } else if r2[s] {
            strategy2.set_row(s, asw2.strategy.row(s).to_vec());
            strategy1.set_row(s, uniform_row(game.num_actions1(), &game.available_actions1(s)));
        }
    }
    Ok(ZeroSumSolution { values: v, strategy1, strategy2, iterations, residuals })
}

struct Stage {
    s: StateId,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Stage {
    fn new(game: &ConcurrentGame, s: StateId) -> Self {
        Stage { s, rows: game.available_actions1(s), cols: game.available_actions2(s) }
    }

    fn matrix(&self, game: &ConcurrentGame, gamma: f64, w: impl Fn(StateId) -> f64) -> Result<MatrixGame> {
        let mut data = Vec::with_capacity(self.rows.len() * self.cols.len());
        for &a in &self.rows {
            for &b in &self.cols {
                let d = game.successor_distribution(self.s, a, b)?;
                data.push(gamma * d.iter().map(|(t, p)| p * w(t)).sum::<f64>());
            }
        }
        MatrixGame::new(self.rows.len(), self.cols.len(), data)
    }
}

/// Expected discounted reward `gamma^tau` for first entering `target` under a
/// fixed profile; zero on `target` itself.
pub fn evaluate_profile(
    game: &ConcurrentGame,
    strategy1: &MixedStrategy,
    strategy2: &MixedStrategy,
    target: &RegionSet,
    gamma: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let t = &target.members;
    evaluate_chain(game, strategy1, strategy2, gamma, tol, |s| t[s].then_some(1.0))
}

/// Signed variant: `+gamma^tau` on entering `plus`, `-gamma^tau` on
/// entering `minus`. At an equilibrium profile this reproduces P1's
/// zero-sum value outside the regions.
pub fn evaluate_signed_profile(
    game: &ConcurrentGame,
    strategy1: &MixedStrategy,
    strategy2: &MixedStrategy,
    plus: &RegionSet,
    minus: &RegionSet,
    gamma: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let (p, m) = (&plus.members, &minus.members);
    evaluate_chain(game, strategy1, strategy2, gamma, tol, |s| {
        if p[s] {
            Some(1.0)
        } else if m[s] {
            Some(-1.0)
        } else {
            None
        }
    })
}

fn evaluate_chain(
    game: &ConcurrentGame,
    strategy1: &MixedStrategy,
    strategy2: &MixedStrategy,
    gamma: f64,
    tol: f64,
    terminal: impl Fn(StateId) -> Option<f64> + Sync,
) -> Result<Vec<f64>> {
    check_discount(gamma)?;
    let n = game.num_states();
    if strategy1.rows.len() != n || strategy2.rows.len() != n {
        return Err(Error::Dimension("strategy shape does not match game".into()));
    }
    // one-step expected immediate reward and continuation weights per state
    let mut rows: Vec<(f64, Vec<(StateId, f64)>)> = Vec::with_capacity(n);
    for s in 0..n {
        if terminal(s).is_some() {
            rows.push((0.0, Vec::new()));
            continue;
        }
        if !strategy1.is_defined(s) {
            return Err(Error::UndefinedStrategy(s));
        }
        if !strategy2.is_defined(s) {
            return Err(Error::UndefinedStrategy(s));
        }
        let mut imm = 0.0;
        let mut cont: Vec<(StateId, f64)> = Vec::new();
        for (a, pa) in strategy1.support(s) {
            for (b, pb) in strategy2.support(s) {
                let d = game.successor_distribution(s, a, b)?;
                for (t, p) in d.iter() {
                    let w = pa * pb * p;
                    match terminal(t) {
                        Some(r) => imm += w * r,
                        None => cont.push((t, w)),
                    }
                }
            }
        }
        cont.sort_by_key(|e| e.0);
        cont.dedup_by(|x, y| {
            if x.0 == y.0 {
                y.1 += x.1;
                true
            } else {
                false
            }
        });
        rows.push((gamma * imm, cont));
    }
    let k = sweeps_for(gamma, 1.0, tol);
    let mut v = vec![0.0; n];
    for _ in 0..k {
        v = rows
            .par_iter()
            .map(|(imm, cont)| imm + gamma * cont.iter().map(|&(t, w)| w * v[t]).sum::<f64>())
            .collect();
    }
    Ok(v)
}
