use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Cell, SoccerIndex, SoccerState, StateId};
use crate::perception::HypergameBundle;
use crate::planner::{
    build_semi_mdp, build_strong_opponent_mdp, evaluate_policy, solve_semi_mdp, value_of_deception, PlannerConfig,
    SemiMdp, SemiMdpSolution, SwitchPolicy,
};

/// VoD per (P1 cell, P2 cell) for one ball owner. Cells where the state is
/// already decided are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub p1_has_ball: bool,
    pub cells: Vec<Cell>,
    /// `values[i][j]`: P1 on `cells[i]`, P2 on `cells[j]`.
    pub values: Vec<Vec<Option<f64>>>,
    pub min: f64,
    pub max: f64,
}

pub fn vod_heatmap(
    bundle: &HypergameBundle,
    mdp: &SemiMdp,
    sol: &SemiMdpSolution,
    p1_has_ball: bool,
) -> Result<Heatmap> {
    let cfg = bundle.true_game.grid().ok_or(Error::NotGrid)?;
    let index = SoccerIndex::new(cfg);
    let cells = index.cells().to_vec();
    let mut values = Vec::with_capacity(cells.len());
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p1 in &cells {
        let mut row = Vec::with_capacity(cells.len());
        for &p2 in &cells {
            let s = index.encode(&SoccerState { p1, p2, ball: p1_has_ball }).expect("free cells");
            let v = if bundle.is_decided(s) {
                None
            } else {
                Some(value_of_deception(mdp, sol, bundle, s)?.value_of_deception)
            };
            if let Some(x) = v {
                min = min.min(x);
                max = max.max(x);
            }
            row.push(v);
        }
        values.push(row);
    }
    Ok(Heatmap { p1_has_ball, cells, values, min, max })
}

impl Heatmap {
    /// Rows are P1 cells, columns P2 cells; decided states are blank. The
    /// last line carries the min and max over the table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p1\\p2");
        for c in &self.cells {
            let _ = write!(out, ",\"({},{})\"", c.0, c.1);
        }
        out.push('\n');
        for (i, c) in self.cells.iter().enumerate() {
            let _ = write!(out, "\"({},{})\"", c.0, c.1);
            for v in &self.values[i] {
                match v {
                    Some(x) => {
                        let _ = write!(out, ",{x:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "# min,{:.6},max,{:.6}", self.min, self.max);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub threshold: f64,
    /// `max_s (u_ref(s) - u_i(s))` over undecided states.
    pub max_difference: f64,
    pub state: StateId,
    /// Reference-MDP value of the reference policy at `state`.
    pub original_value: f64,
    pub degradation_pct: f64,
}

/// Plays the reference policy against detectors with other thresholds.
///
/// The policy is solved at `base.detector.threshold` and mapped to each
/// other grid by level midpoints, then evaluated there.
pub fn sensitivity_sweep(
    bundle: &HypergameBundle,
    base: &PlannerConfig,
    thresholds: &[f64],
    tol: f64,
) -> Result<(SwitchPolicy, Vec<SensitivityRow>)> {
    let base_mdp = build_semi_mdp(bundle, base)?;
    let base_sol = solve_semi_mdp(&base_mdp, tol)?;
    let reference = evaluate_policy(&base_mdp, &base_sol.policy, tol)?;
    let mut rows = Vec::with_capacity(thresholds.len());
    for &c in thresholds {
        let mut cfg = base.clone();
        cfg.detector.threshold = c;
        let mdp = build_semi_mdp(bundle, &cfg)?;
        let policy = base_sol.policy.transfer(mdp.grid);
        let values = evaluate_policy(&mdp, &policy, tol)?;
        let mut best: Option<(StateId, f64)> = None;
        for s in (0..bundle.num_states()).filter(|&s| !bundle.is_decided(s)) {
            let diff = reference[base_mdp.root(s)] - values[mdp.root(s)];
            if best.is_none_or(|(_, m)| diff > m) {
                best = Some((s, diff));
            }
        }
        let (state, max_difference) = best.ok_or(Error::Precondition("every state is decided".into()))?;
        let original_value = reference[base_mdp.root(state)];
        let degradation_pct = if original_value != 0.0 { 100.0 * max_difference / original_value.abs() } else { 0.0 };
        rows.push(SensitivityRow { threshold: c, max_difference, state, original_value, degradation_pct });
    }
    Ok((base_sol.policy, rows))
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("threshold,max_difference,state,original_value,degradation_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{},{:.6},{:.4}",
            r.threshold, r.max_difference, r.state, r.original_value, r.degradation_pct
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongOpponentRow {
    pub state: StateId,
    /// Value of the deceptive policy in the realistic MDP.
    pub deceptive: f64,
    /// Value of the strong-opponent policy in the realistic MDP.
    pub strong: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongOpponentReport {
    pub rows: Vec<StrongOpponentRow>,
    pub min: f64,
    pub max: f64,
}

/// Compares the deceptive policy with the one planned against an opponent
/// that notices the switch at once, both scored in the realistic MDP.
pub fn strong_opponent_report(bundle: &HypergameBundle, cfg: &PlannerConfig, tol: f64) -> Result<StrongOpponentReport> {
    let real = build_semi_mdp(bundle, cfg)?;
    let real_sol = solve_semi_mdp(&real, tol)?;
    let strong = build_strong_opponent_mdp(bundle, cfg)?;
    let strong_sol = solve_semi_mdp(&strong, tol)?;
    let v_dec = evaluate_policy(&real, &real_sol.policy, tol)?;
    let v_so = evaluate_policy(&real, &strong_sol.policy, tol)?;
    let rows: Vec<StrongOpponentRow> = (0..bundle.num_states())
        .filter(|&s| !bundle.is_decided(s))
        .map(|s| {
            let (deceptive, strong) = (v_dec[real.root(s)], v_so[real.root(s)]);
            StrongOpponentRow { state: s, deceptive, strong, difference: deceptive - strong }
        })
        .collect();
    let min = rows.iter().map(|r| r.difference).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.difference).fold(f64::NEG_INFINITY, f64::max);
    Ok(StrongOpponentReport { rows, min, max })
}

impl StrongOpponentReport {
    pub fn to_csv(&self, bundle: &HypergameBundle) -> String {
        let mut out = String::from("state,label,deceptive,strong,difference\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},\"{}\",{:.6},{:.6},{:.6}",
                r.state,
                bundle.true_game.state_label(r.state),
                r.deceptive,
                r.strong,
                r.difference
            );
        }
        let _ = writeln!(out, "# min,{:.6},max,{:.6}", self.min, self.max);
        out
    }
}
