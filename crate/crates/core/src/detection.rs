//! P2's change detector.
//!
//! Two Markov chains describe what P2 can observe given its own action: the
//! null chain assumes P1 plays the perceived equilibrium in the perceived
//! game, the alternative assumes P1 plays the true equilibrium. Each
//! observation contributes `ln(Pr_alt / Pr_null)`; the CUSUM statistic is
//! `phi' = max(phi + llr, 0)` and the test fires once `phi >= threshold`.
//!
//! Log-likelihood ratios live on the extended reals and use `f64`
//! infinities: an observation impossible under the null but possible under
//! the alternative is `+inf` (immediate detection).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::StateId;
use crate::perception::HypergameBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// P2 sees states and its own actions.
    #[default]
    StatesOnly,
    /// P2 additionally sees P1's action after the fact.
    StatesAndActions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeroProbPolicy {
    /// Zero null probability detects at once; zero alternative probability
    /// resets the statistic.
    #[default]
    ImmediateDetect,
    /// Floor both probabilities at the given value.
    Clamp(f64),
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    #[serde(default)]
    pub mode: ObservationMode,
    #[serde(default)]
    pub zero_prob: ZeroProbPolicy,
}

impl DetectorConfig {
    pub fn new(threshold: f64) -> Self {
        DetectorConfig { threshold, mode: ObservationMode::default(), zero_prob: ZeroProbPolicy::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!("threshold {} must be positive", self.threshold)));
        }
        if let ZeroProbPolicy::Clamp(e) = self.zero_prob {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("clamp floor {e} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// One step of what P2 sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub from: StateId,
    pub action2: usize,
    pub to: StateId,
    /// P1's action, used only in [`ObservationMode::StatesAndActions`].
    pub action1: Option<usize>,
}

/// Observation probabilities `Pr(outcome | s, b)` under one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisChain {
    pub mode: ObservationMode,
    num_actions2: usize,
    /// Indexed by `s * |A2| + b`; entries `(action1 or usize::MAX, next, p)`
    /// sorted by outcome.
    rows: Vec<Vec<(usize, StateId, f64)>>,
}

const NO_ACTION: usize = usize::MAX;

impl HypothesisChain {
    fn build(
        bundle: &HypergameBundle,
        mode: ObservationMode,
        game: &crate::game::ConcurrentGame,
        p1: &crate::solvers::MixedStrategy,
    ) -> Self {
        let n = game.num_states();
        let n2 = game.num_actions2();
        let true_game = &bundle.true_game;
        let mut rows = Vec::with_capacity(n * n2);
        for s in 0..n {
            for b in 0..n2 {
                let mut out: Vec<(usize, StateId, f64)> = Vec::new();
                for (a, pa) in p1.support(s) {
                    // hidden actions carry no mass under the null chain
                    let Some(d) = game.transition(s, a, b) else { continue };
                    debug_assert!(true_game.transition(s, a, b).is_some());
                    let key = match mode {
                        ObservationMode::StatesOnly => NO_ACTION,
                        ObservationMode::StatesAndActions => a,
                    };
                    for (t, p) in d.iter() {
                        out.push((key, t, pa * p));
                    }
                }
                out.sort_by_key(|e| (e.0, e.1));
                out.dedup_by(|x, y| {
                    if x.0 == y.0 && x.1 == y.1 {
                        y.2 += x.2;
                        true
                    } else {
                        false
                    }
                });
                rows.push(out);
            }
        }
        HypothesisChain { mode, num_actions2: n2, rows }
    }

    pub fn prob(&self, obs: &Observation) -> f64 {
        let key = match self.mode {
            ObservationMode::StatesOnly => NO_ACTION,
            ObservationMode::StatesAndActions => obs.action1.unwrap_or(NO_ACTION),
        };
        let row = &self.rows[obs.from * self.num_actions2 + obs.action2];
        row.binary_search_by_key(&(key, obs.to), |e| (e.0, e.1)).map_or(0.0, |i| row[i].2)
    }

    /// Outcomes with positive probability from `(s, b)`.
    pub fn outcomes(&self, s: StateId, b: usize) -> impl Iterator<Item = (Option<usize>, StateId, f64)> + '_ {
        self.rows[s * self.num_actions2 + b]
            .iter()
            .map(|&(a, t, p)| ((a != NO_ACTION).then_some(a), t, p))
    }
}

/// Null chain (perceived equilibrium in the perceived game, as P2 believes)
/// and alternative chain (true equilibrium in the true game).
pub fn build_hypotheses(bundle: &HypergameBundle, mode: ObservationMode) -> (HypothesisChain, HypothesisChain) {
    let d = &bundle.data;
    let null = HypothesisChain::build(bundle, mode, &bundle.perceptual_game, &d.p1_perceptual);
    let alt = HypothesisChain::build(bundle, mode, &bundle.true_game, &d.p1_true);
    (null, alt)
}

/// `ln(Pr_alt / Pr_null)` for one observation.
pub fn log_likelihood_ratio(
    null: &HypothesisChain,
    alt: &HypothesisChain,
    obs: &Observation,
    policy: ZeroProbPolicy,
) -> Result<f64> {
    let p0 = null.prob(obs);
    let p1 = alt.prob(obs);
    llr_from_probs(p0, p1, policy).ok_or(Error::ImpossibleObservation {
        from: obs.from,
        action2: obs.action2,
        to: obs.to,
    })
}

pub(crate) fn llr_from_probs(p0: f64, p1: f64, policy: ZeroProbPolicy) -> Option<f64> {
    match policy {
        ZeroProbPolicy::Clamp(eps) => {
            if p0 == 0.0 && p1 == 0.0 {
                return None;
            }
            Some((p1.max(eps) / p0.max(eps)).ln())
        }
        ZeroProbPolicy::ImmediateDetect => match (p0 > 0.0, p1 > 0.0) {
            (true, true) => Some((p1 / p0).ln()),
            (false, true) => Some(f64::INFINITY),
            (true, false) => Some(f64::NEG_INFINITY),
            (false, false) => None,
        },
    }
}

/// One CUSUM step. A statistic at `+inf` stays there.
pub fn update_discrimination(phi: f64, llr: f64) -> f64 {
    if phi == f64::INFINITY {
        return phi;
    }
    (phi + llr).max(0.0)
}

/// Statistic recomputed from scratch: the largest suffix sum of the
/// log-likelihood ratios, where the empty suffix counts as zero.
pub fn batch_discrimination(llrs: &[f64]) -> f64 {
    if llrs.contains(&f64::INFINITY) {
        return f64::INFINITY;
    }
    let mut best = 0.0f64;
    for k in 0..llrs.len() {
        let sum: f64 = llrs[k..].iter().sum();
        best = best.max(sum);
    }
    best
}

pub fn check_stop(phi: f64, cfg: &DetectorConfig) -> bool {
    phi >= cfg.threshold
}

/// One row of a detector trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub obs: Observation,
    pub llr: f64,
    pub phi: f64,
    pub detected: bool,
}

/// Writes a detector trace as CSV. Floats use the shortest representation
/// that parses back exactly, so traces replay bit for bit.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "step,from,action2,to,action1,llr,phi,detected")?;
    for r in rows {
        let a = r.obs.action1.map_or(String::new(), |a| a.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{:?},{:?},{}",
            r.step, r.obs.from, r.obs.action2, r.obs.to, a, r.llr, r.phi, r.detected
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fold(llrs: &[f64]) -> f64 {
        llrs.iter().fold(0.0, |phi, &l| update_discrimination(phi, l))
    }

    #[test]
    fn suffix_maximum() {
        // suffix sums: 2-3+... the best suffix is [3] -> 3
        assert_eq!(batch_discrimination(&[-2.0, 3.0]), 3.0);
        assert_eq!(fold(&[-2.0, 3.0]), 3.0);
        assert_eq!(batch_discrimination(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(batch_discrimination(&[]), 0.0);
    }

    #[test]
    fn negative_step_resets() {
        assert_eq!(update_discrimination(1.5, -2.0), 0.0);
        assert_eq!(update_discrimination(0.5, f64::NEG_INFINITY), 0.0);
        assert_eq!(update_discrimination(0.5, f64::INFINITY), f64::INFINITY);
        assert_eq!(update_discrimination(f64::INFINITY, f64::NEG_INFINITY), f64::INFINITY);
    }

    #[test]
    fn llr_edge_cases() {
        let id = ZeroProbPolicy::ImmediateDetect;
        assert_eq!(llr_from_probs(0.0, 0.3, id), Some(f64::INFINITY));
        assert_eq!(llr_from_probs(0.3, 0.0, id), Some(f64::NEG_INFINITY));
        assert_eq!(llr_from_probs(0.0, 0.0, id), None);
        assert_eq!(llr_from_probs(0.25, 0.25, id), Some(0.0));
        let c = llr_from_probs(0.0, 0.5, ZeroProbPolicy::Clamp(1e-6)).unwrap();
        assert!((c - (0.5f64 / 1e-6).ln()).abs() < 1e-12);
        assert!(check_stop(f64::INFINITY, &DetectorConfig::new(2.0)));
        assert!(check_stop(2.0, &DetectorConfig::new(2.0)));
        assert!(!check_stop(1.999, &DetectorConfig::new(2.0)));
    }

    #[test]
    fn trace_csv_replays_exactly() {
        let obs = Observation { from: 1, action2: 2, to: 3, action1: None };
        let phi = 0.1 + 0.2;
        let rows = [TraceRow { step: 0, obs, llr: phi, phi, detected: false }];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let field = text.lines().nth(1).unwrap().split(',').nth(6).unwrap();
        assert_eq!(field.parse::<f64>().unwrap(), phi);
    }

    fn llr_strategy() -> impl Strategy<Value = f64> {
        prop_oneof![
            8 => -5.0f64..5.0,
            1 => Just(f64::NEG_INFINITY),
            1 => Just(f64::INFINITY),
        ]
    }

    proptest! {
        #[test]
        fn incremental_equals_batch(llrs in proptest::collection::vec(llr_strategy(), 0..60)) {
            let a = fold(&llrs);
            let b = batch_discrimination(&llrs);
            if a.is_infinite() || b.is_infinite() {
                prop_assert_eq!(a, b);
            } else {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn statistic_is_nonnegative(llrs in proptest::collection::vec(llr_strategy(), 0..60)) {
            let mut phi = 0.0;
            for l in llrs {
                phi = update_discrimination(phi, l);
                prop_assert!(phi >= 0.0);
            }
        }

        #[test]
        fn shift_equivariance(
            llrs in proptest::collection::vec(-3.0f64..3.0, 1..40),
            c in 0.0f64..2.0,
        ) {
            // raising every step by c never lowers the statistic
            let up: Vec<f64> = llrs.iter().map(|l| l + c).collect();
            prop_assert!(fold(&up) + 1e-12 >= fold(&llrs));
        }
    }
}
