//! Almost-sure winning regions for reachability objectives.
//!
//! The region is the greatest fixpoint `Y` of `Y = mu X. F | Apre(Y, X)`,
//! where a state is in `Apre(Y, X)` when some nonempty set of the player's
//! actions keeps play inside `Y` against every opponent action and reaches
//! `X` with positive probability. Candidate supports are tried in increasing
//! bitmask order, so the witness stored for the strategy is deterministic.

use serde::{Deserialize, Serialize};

use super::strategy::{uniform_row, GameTag, MixedStrategy, RegionSet};
use crate::error::{Error, Result};
use crate::game::{ConcurrentGame, Player, StateId};

/// Region plus a memoryless strategy that wins almost surely from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AswSolution {
    pub region: RegionSet,
    pub strategy: MixedStrategy,
}

struct StateData {
    own: Vec<usize>,
    opp: Vec<usize>,
    /// Masks over `own` positions, in increasing order.
    masks: Vec<u32>,
}

/// Computes the almost-sure winning region of `player` towards its targets.
pub fn compute_asw(game: &ConcurrentGame, player: Player, tag: GameTag) -> Result<AswSolution> {
    let n = game.num_states();
    let k = game.num_actions(player);
    if k > 31 {
        return Err(Error::Dimension(format!("{k} actions exceed the support enumeration limit")));
    }
    let data: Vec<StateData> = (0..n)
        .map(|s| {
            let own = game.available_actions(player, s);
            let opp = game.available_actions(player.other(), s);
            let masks = (1u32..(1u32 << own.len())).collect();
            StateData { own, opp, masks }
        })
        .collect();
    let targets = game.targets(player);

    let mut y = vec![true; n];
    loop {
        let x = least_fixpoint(game, player, &data, targets, &y, None);
        if x == y {
            break;
        }
        y = x;
    }

    let mut witness = vec![0u32; n];
    least_fixpoint(game, player, &data, targets, &y, Some(&mut witness));

    let mut strategy = MixedStrategy::undefined(n, k);
    for s in 0..n {
        let d = &data[s];
        let support: Vec<usize> = if y[s] && !targets[s] {
            d.own.iter().enumerate().filter(|(i, _)| witness[s] >> i & 1 == 1).map(|(_, &a)| a).collect()
        } else {
            d.own.clone()
        };
        strategy.set_row(s, uniform_row(k, &support));
    }
    Ok(AswSolution { region: RegionSet { player, game: tag, members: y }, strategy })
}

fn least_fixpoint(
    game: &ConcurrentGame,
    player: Player,
    data: &[StateData],
    targets: &[bool],
    y: &[bool],
    mut witness: Option<&mut Vec<u32>>,
) -> Vec<bool> {
    let n = y.len();
    let mut x: Vec<bool> = (0..n).map(|s| targets[s] && y[s]).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !y[s] || x[s] {
                continue;
            }
            if let Some(mask) = apre_witness(game, player, &data[s], s, y, &x) {
                x[s] = true;
                changed = true;
                if let Some(w) = witness.as_deref_mut() {
                    w[s] = mask;
                }
            }
        }
        if !changed {
            return x;
        }
    }
}

fn apre_witness(
    game: &ConcurrentGame,
    player: Player,
    d: &StateData,
    s: StateId,
    y: &[bool],
    x: &[bool],
) -> Option<u32> {
    d.masks.iter().copied().find(|&mask| {
        d.opp.iter().all(|&o| {
            let mut safe = true;
            let mut progress = false;
            for (i, &a) in d.own.iter().enumerate() {
                if mask >> i & 1 == 0 {
                    continue;
                }
                let Some(dist) = game.transition_for(player, s, a, o) else {
                    safe = false;
                    break;
                };
                for t in dist.support() {
                    safe &= y[t];
                    progress |= x[t];
                }
            }
            safe && progress
        })
    })
}

/// Sanity check: a player's region in the true game must lie
/// inside its region in the game it perceives.
pub fn check_asw_containment(inner: &RegionSet, outer: &RegionSet) -> Result<bool> {
    if inner.num_states() != outer.num_states() {
        return Err(Error::RegionMismatch(format!(
            "{} vs {} states",
            inner.num_states(),
            outer.num_states()
        )));
    }
    if inner.player != outer.player {
        return Err(Error::RegionMismatch("regions belong to different players".into()));
    }
    Ok(inner.is_subset_of(outer))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::game::Distribution;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn region(game: &ConcurrentGame, p: Player) -> Vec<bool> {
        compute_asw(game, p, GameTag::TrueGame).unwrap().region.members
    }

    /// s0 --(any)--> 50/50 {s0, goal}: P1 wins a.s. by waiting.
    #[test]
    fn waiting_wins_almost_surely() {
        let mut g = ConcurrentGame::with_sizes(2, 1, 1, 0.9);
        g.set_transition(0, 0, 0, Distribution::new(vec![(0, 0.5), (1, 0.5)]));
        g.make_absorbing(1);
        g.set_target(Player::One, 1, true);
        assert_eq!(region(&g, Player::One), vec![true, true]);
    }

    /// Hide-or-run: P1 picks hide or run, P2 picks wait or throw. Running
    /// against a throw loses; hiding against a wait stays put. P1 can win
    /// only with positive, not unit, probability.
    #[test]
    fn hide_or_run_is_not_almost_sure() {
        let mut g = ConcurrentGame::with_sizes(3, 2, 2, 0.9);
        let (start, home, lost) = (0, 1, 2);
        g.set_transition(start, 0, 0, Distribution::point(start));
        g.set_transition(start, 0, 1, Distribution::point(home));
        g.set_transition(start, 1, 0, Distribution::point(home));
        g.set_transition(start, 1, 1, Distribution::point(lost));
        g.make_absorbing(home);
        g.make_absorbing(lost);
        g.set_target(Player::One, home, true);
        let r = region(&g, Player::One);
        assert!(!r[start]);
        assert!(r[home]);
    }

    #[test]
    fn strategy_is_uniform_over_witness() {
        // action 1 loses for sure, action 0 wins: the witness is {0}
        let mut g = ConcurrentGame::with_sizes(3, 2, 1, 0.9);
        g.set_transition(0, 0, 0, Distribution::point(1));
        g.set_transition(0, 1, 0, Distribution::point(2));
        g.make_absorbing(1);
        g.make_absorbing(2);
        g.set_target(Player::One, 1, true);
        let sol = compute_asw(&g, Player::One, GameTag::TrueGame).unwrap();
        assert_eq!(sol.strategy.row(0), &[1.0, 0.0]);
        assert!(!sol.region.contains(2));
    }

    /// Brute force: P1 memoryless supports against P2 pure memoryless
    /// strategies, with almost-sure reachability decided on the induced
    /// finite chain by graph search.
    fn oracle(g: &ConcurrentGame, p: Player) -> Vec<bool> {
        let n = g.num_states();
        let own: Vec<Vec<usize>> = (0..n).map(|s| g.available_actions(p, s)).collect();
        let opp: Vec<Vec<usize>> = (0..n).map(|s| g.available_actions(p.other(), s)).collect();
        let f = g.targets(p);
        let mut best = vec![false; n];
        let own_counts: Vec<usize> = own.iter().map(|v| (1usize << v.len()) - 1).collect();
        let opp_counts: Vec<usize> = opp.iter().map(Vec::len).collect();
        for_each_choice(&own_counts, &mut |sup: &[usize]| {
            let mut win = vec![true; n];
            for_each_choice(&opp_counts, &mut |pure: &[usize]| {
                // edges of the chain
                let succ = |s: StateId| -> Vec<StateId> {
                    let mut out = Vec::new();
                    if f[s] {
                        return out;
                    }
                    let mask = sup[s] + 1;
                    let o = opp[s][pure[s]];
                    for (i, &a) in own[s].iter().enumerate() {
                        if mask >> i & 1 == 1 {
                            out.extend(g.transition_for(p, s, a, o).unwrap().support());
                        }
                    }
                    out
                };
                // can reach F
                let mut good: Vec<bool> = f.to_vec();
                loop {
                    let mut ch = false;
                    for s in 0..n {
                        if !good[s] && succ(s).iter().any(|&t| good[t]) {
                            good[s] = true;
                            ch = true;
                        }
                    }
                    if !ch {
                        break;
                    }
                }
                // a.s. iff every reachable state can still reach F
                for s0 in 0..n {
                    let mut seen = vec![false; n];
                    let mut stack = vec![s0];
                    seen[s0] = true;
                    let mut ok = true;
                    while let Some(s) = stack.pop() {
                        ok &= good[s];
                        for t in succ(s) {
                            if !seen[t] {
                                seen[t] = true;
                                stack.push(t);
                            }
                        }
                    }
                    win[s0] &= ok;
                }
            });
            for s in 0..n {
                best[s] |= win[s];
            }
        });
        best
    }

    fn for_each_choice(counts: &[usize], f: &mut dyn FnMut(&[usize])) {
        let mut idx = vec![0usize; counts.len()];
        if counts.iter().any(|&c| c == 0) {
            return;
        }
        loop {
            f(&idx);
            let mut i = 0;
            loop {
                if i == counts.len() {
                    return;
                }
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    pub(crate) fn random_game_for_tests(seed: u64, n: usize, n1: usize, n2: usize) -> ConcurrentGame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = ConcurrentGame::with_sizes(n, n1, n2, 0.9);
        let (w, l) = (n - 2, n - 1);
        for s in 0..n - 2 {
            for a in 0..n1 {
                for b in 0..n2 {
                    let k = rng.gen_range(1..=2);
                    let entries = (0..k).map(|_| (rng.gen_range(0..n), rng.gen_range(0.1..1.0))).collect::<Vec<_>>();
                    let total: f64 = entries.iter().map(|e| e.1).sum();
                    g.set_transition(s, a, b, Distribution::new(entries.into_iter().map(|(t, p)| (t, p / total)).collect()));
                }
            }
        }
        g.make_absorbing(w);
        g.make_absorbing(l);
        g.set_target(Player::One, w, true);
        g.set_target(Player::Two, l, true);
        g
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force(seed in any::<u64>(), n in 3usize..=5) {
            let g = random_game_for_tests(seed, n, 2, 2);
            for p in [Player::One, Player::Two] {
                prop_assert_eq!(region(&g, p), oracle(&g, p));
            }
        }

        #[test]
        fn regions_are_disjoint(seed in any::<u64>()) {
            let g = random_game_for_tests(seed, 5, 2, 3);
            let r1 = region(&g, Player::One);
            let r2 = region(&g, Player::Two);
            prop_assert!(r1.iter().zip(&r2).all(|(&a, &b)| !(a && b)));
        }

        #[test]
        fn hiding_a_p1_action_only_grows_p2_region(seed in any::<u64>()) {
            let g = random_game_for_tests(seed, 5, 3, 2);
            let before = region(&g, Player::Two);
            let mut h = g.clone();
            for s in 0..h.num_states() {
                if !h.is_target(Player::One, s) && !h.is_target(Player::Two, s) {
                    for b in 0..2 {
                        h.clear_transition(s, 2, b);
                    }
                }
            }
            let after = region(&h, Player::Two);
            prop_assert!(before.iter().zip(&after).all(|(&b, &a)| !b || a));
        }
    }
}
