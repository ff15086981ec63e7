//! Acceptance suite. Runs every criterion, prints one verdict line each and
//! exits non-zero if a gating criterion fails.
//!
//! Criteria 8 to 10 compare against reference numbers that depend on
//! under-specified dynamics. Criterion 8 is reported only; the property
//! parts of 9 and 10 gate.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hypergame::detection::{batch_discrimination, update_discrimination};
use hypergame::game::{
    build_soccer_game, toy_deception_game, ConcurrentGame, Distribution, GridConfig, Player,
};
use hypergame::harness::{
    monte_carlo_payoff, sensitivity_sweep, strong_opponent_report, RolloutConfig, Simulator,
};
use hypergame::perception::{build_hypergame, derive_perceptual_game, FillPolicy, HypergameBundle};
use hypergame::planner::{
    build_semi_mdp, solve_semi_mdp, vod_table, MacroAction, PlannerConfig, SemiMdp, SINK,
};
use hypergame::solvers::{check_asw_containment, compute_asw, solve_matrix_game, GameTag, MatrixGame};

struct Verdict {
    pass: bool,
    gate: bool,
    detail: String,
}

fn gate(pass: bool, detail: String) -> Verdict {
    Verdict { pass, gate: true, detail }
}

fn soccer(cfg: &GridConfig) -> (ConcurrentGame, Vec<usize>) {
    build_soccer_game(cfg).expect("soccer builds")
}

/// Equilibrium tolerance. VoD can dip below zero by roughly this much over
/// `1 - gamma`, so it is kept far below the planner tolerances.
const BUNDLE_TOL: f64 = 1e-12;

fn soccer_bundle() -> HypergameBundle {
    let (g, hidden) = soccer(&GridConfig::basic());
    let visible: Vec<usize> = (0..g.num_actions1()).filter(|a| !hidden.contains(a)).collect();
    build_hypergame(&g, &visible, 0.95, BUNDLE_TOL).expect("bundle")
}

fn scaled(delta: f64, threshold: f64) -> PlannerConfig {
    let mut cfg = PlannerConfig::new(delta, threshold);
    cfg.scale = 100.0;
    cfg
}

// ---------------------------------------------------------------- 1

fn cusum_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut mismatch = 0usize;
    for trace in 0..1000 {
        let len = rng.gen_range(1..60);
        let llrs: Vec<f64> = (0..len)
            .map(|_| {
                if trace % 10 == 0 && rng.gen_bool(0.02) {
                    f64::INFINITY
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            })
            .collect();
        let mut phi = 0.0;
        for k in 1..=len {
            phi = update_discrimination(phi, llrs[k - 1]);
            let batch = batch_discrimination(&llrs[..k]);
            if phi.is_infinite() || batch.is_infinite() {
                if phi != batch {
                    mismatch += 1;
                }
            } else {
                worst = worst.max((phi - batch).abs());
            }
        }
    }
    gate(mismatch == 0 && worst <= 1e-9, format!("1000 traces, max |diff| {worst:.2e}, infinite mismatches {mismatch}"))
}

// ---------------------------------------------------------------- 2

fn matrix_games() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (r, c) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        let data: Vec<f64> = (0..r * c)
            .map(|_| if i % 4 == 0 { rng.gen_range(-2..=2) as f64 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let m = MatrixGame::new(r, c, data).unwrap();
        match solve_matrix_game(&m, 1e-9) {
            Ok(sol) => worst = worst.max(m.duality_gap(&sol.row_strategy, &sol.col_strategy)),
            Err(_) => worst = f64::INFINITY,
        }
    }
    let closed = [
        (vec![vec![2.0, 0.0], vec![1.0, 3.0]], 1.5),
        (vec![vec![1.0, -1.0], vec![-1.0, 1.0]], 0.0),
        (vec![vec![3.0, 1.0], vec![0.0, 2.0]], 1.5),
        (vec![vec![4.0, 2.0], vec![3.0, 1.0]], 2.0),
    ];
    let mut closed_err = 0.0f64;
    for (rows, v) in closed {
        let sol = solve_matrix_game(&MatrixGame::from_rows(&rows).unwrap(), 1e-9).unwrap();
        closed_err = closed_err.max((sol.value - v).abs());
    }
    gate(
        worst <= 1e-6 && closed_err <= 1e-6,
        format!("max gap {worst:.2e} over 1000 games, closed-form error {closed_err:.2e}"),
    )
}

// ---------------------------------------------------------------- 3

fn ladder() -> ConcurrentGame {
    // P1 climbs one rung per step whatever P2 does
    let k = 5;
    let mut g = ConcurrentGame::with_sizes(k + 1, 2, 2, 0.9);
    for s in 0..k {
        for a in 0..2 {
            for b in 0..2 {
                let next = if a == 0 { s + 1 } else { s };
                g.set_transition(s, a, b, Distribution::point(next));
            }
        }
    }
    g.make_absorbing(k);
    g.set_target(Player::One, k, true);
    g
}

fn hide_or_run() -> ConcurrentGame {
    // states: home, safe, wet; P1 hide/run, P2 wait/throw
    let mut g = ConcurrentGame::with_sizes(3, 2, 2, 0.9);
    g.set_transition(0, 0, 0, Distribution::point(0));
    g.set_transition(0, 0, 1, Distribution::point(0));
    g.set_transition(0, 1, 0, Distribution::point(1));
    g.set_transition(0, 1, 1, Distribution::point(2));
    g.make_absorbing(1);
    g.make_absorbing(2);
    g.set_target(Player::One, 1, true);
    g.set_target(Player::Two, 2, true);
    g
}

fn random_game(rng: &mut ChaCha8Rng) -> ConcurrentGame {
    let n = rng.gen_range(3..9);
    let (n1, n2) = (rng.gen_range(2..5), rng.gen_range(1..4));
    let mut g = ConcurrentGame::with_sizes(n, n1, n2, 0.9);
    for s in 0..n - 2 {
        for a in 0..n1 {
            for b in 0..n2 {
                let k = rng.gen_range(1..=3);
                let mut entries: Vec<(usize, f64)> = (0..k).map(|_| (rng.gen_range(0..n), rng.gen_range(0.1..1.0))).collect();
                let total: f64 = entries.iter().map(|e| e.1).sum();
                entries.iter_mut().for_each(|e| e.1 /= total);
                g.set_transition(s, a, b, Distribution::new(entries));
            }
        }
    }
    g.make_absorbing(n - 2);
    g.make_absorbing(n - 1);
    g.set_target(Player::One, n - 2, true);
    g.set_target(Player::Two, n - 1, true);
    g
}

fn asw_oracles() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    let g = ladder();
    let w = compute_asw(&g, Player::One, GameTag::TrueGame).unwrap();
    let ladder_ok = (0..g.num_states()).all(|s| w.region.contains(s));
    ok &= ladder_ok;
    notes.push(format!("ladder {}", if ladder_ok { "ok" } else { "wrong" }));

    let g = hide_or_run();
    let w1 = compute_asw(&g, Player::One, GameTag::TrueGame).unwrap();
    let w2 = compute_asw(&g, Player::Two, GameTag::TrueGame).unwrap();
    let hr_ok = !w1.region.contains(0) && !w2.region.contains(0) && w1.region.contains(1) && w2.region.contains(2);
    ok &= hr_ok;
    notes.push(format!("hide-or-run {}", if hr_ok { "ok" } else { "wrong" }));

    let mut contained = 0usize;
    let mut targets_ok = true;
    let (bg, bh) = soccer(&GridConfig::basic());
    let (cg, ch) = soccer(&GridConfig::bouncing_approx());
    let mut cases: Vec<(ConcurrentGame, Vec<usize>)> = vec![(bg, bh), (cg, ch)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let g = random_game(&mut rng);
        let n1 = g.num_actions1();
        let mut visible: Vec<usize> = (0..n1).filter(|_| rng.gen_bool(0.6)).collect();
        if visible.is_empty() {
            visible.push(rng.gen_range(0..n1));
        }
        let hidden = (0..n1).filter(|a| !visible.contains(a)).collect();
        cases.push((g, hidden));
    }
    let total = cases.len();
    for (g, hidden) in &cases {
        let visible: Vec<usize> = (0..g.num_actions1()).filter(|a| !hidden.contains(a)).collect();
        let gp = derive_perceptual_game(g, &visible).unwrap();
        let w2 = compute_asw(g, Player::Two, GameTag::TrueGame).unwrap();
        let w2p = compute_asw(&gp, Player::Two, GameTag::Perceptual).unwrap();
        let w1 = compute_asw(g, Player::One, GameTag::TrueGame).unwrap();
        targets_ok &= (0..g.num_states())
            .all(|s| (!g.is_target(Player::One, s) || w1.region.contains(s)) && (!g.is_target(Player::Two, s) || w2.region.contains(s)));
        if check_asw_containment(&w2.region, &w2p.region).unwrap() {
            contained += 1;
        }
    }
    ok &= targets_ok && contained == total;
    notes.push(format!("targets contained {targets_ok}, P2 region grows in {contained}/{total} restricted games"));
    gate(ok, notes.join(", "))
}

// ---------------------------------------------------------------- 4

fn structural_scan(mdp: &SemiMdp, bundle: &HypergameBundle) -> Result<usize, String> {
    let mut checked = 0usize;
    for d in 0..mdp.num_decisions() {
        let ds = mdp.decision_state(d);
        let terminal = bundle.is_decided(ds.state) || mdp.grid.is_exceeded(ds.level);
        for m in [MacroAction::Perceptual, MacroAction::True] {
            let e = mdp.macro_edges(d, m);
            if e.is_empty() {
                if ds.switched && m == MacroAction::Perceptual {
                    continue;
                }
                // decision never reached from any root
                continue;
            }
            if ds.switched && m == MacroAction::Perceptual {
                return Err(format!("decision {d} can unswitch"));
            }
            let sum: f64 = e.iter().map(|x| x.1).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("decision {d} row sums to {sum}"));
            }
            for &(n, _) in e {
                let ns = mdp.nature[n as usize];
                if terminal && ns.actions.is_some() {
                    return Err(format!("terminal decision {d} continues"));
                }
                if ns.actions.is_some() && ns.switched != (ds.switched || m == MacroAction::True) {
                    return Err(format!("decision {d} breaks flag monotonicity"));
                }
            }
            checked += 1;
        }
    }
    for n in 0..mdp.num_nature() {
        let ns = mdp.nature[n];
        let e = mdp.nature_edges(n);
        if ns.actions.is_none() {
            if !e.is_empty() {
                return Err(format!("terminal nature {n} has successors"));
            }
            continue;
        }
        let sum: f64 = e.iter().map(|x| x.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("nature {n} row sums to {sum}"));
        }
        for &(t, _) in e {
            if t == SINK {
                return Err(format!("nature {n} routes to the sink mid-episode"));
            }
            let ts = mdp.decision_state(t as usize);
            if ts.switched != ns.switched {
                return Err(format!("nature {n} changes the flag"));
            }
            if !ns.switched && ts.level != ns.level {
                return Err(format!("nature {n} moves the statistic before the switch"));
            }
        }
        if mdp.nature_reward[n] != 0.0 {
            return Err(format!("nature {n} pays mid-episode"));
        }
        checked += 1;
    }
    Ok(checked)
}

fn semi_mdp_invariants(bundle: &HypergameBundle) -> Verdict {
    let mdp = build_semi_mdp(bundle, &scaled(0.2, 2.0)).unwrap();
    let expected = bundle.num_states() * 11 * 2;
    match structural_scan(&mdp, bundle) {
        Ok(rows) => gate(
            mdp.num_decisions() == expected,
            format!("{} decision states, {} nature states, {rows} rows scanned", mdp.num_decisions(), mdp.num_nature()),
        ),
        Err(e) => gate(false, e),
    }
}

// ---------------------------------------------------------------- 5

/// Backward induction over explicit histories of the toy game.
struct ToyOracle {
    gamma: f64,
    delta: f64,
    threshold: f64,
    p1_true: Vec<f64>,
    p1_perceptual: Vec<f64>,
    p2: Vec<f64>,
    baseline: f64,
    game: ConcurrentGame,
}

impl ToyOracle {
    fn outcome(&self, a: usize, b: usize) -> Vec<(usize, f64)> {
        self.game.transition(0, a, b).unwrap().entries().to_vec()
    }

    fn likelihood(&self, p1: &[f64], b: usize, t: usize) -> f64 {
        (0..p1.len()).map(|a| p1[a] * self.game.transition(0, a, b).unwrap().prob(t)).sum()
    }

    /// Level index of a statistic, `None` once past the threshold.
    fn level(&self, phi: f64) -> Option<usize> {
        if phi > self.threshold + 1e-9 {
            return None;
        }
        let k = (phi / self.delta - 1e-9).ceil().max(1.0) as usize;
        Some(k - 1)
    }

    fn terminal(&self, t: usize) -> Option<f64> {
        match t {
            1 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    fn value(&self, depth: usize, level: Option<usize>, switched: bool) -> f64 {
        if switched && level.is_none() {
            return self.baseline;
        }
        if depth == 0 {
            return 0.0;
        }
        let go = self.expand(depth, level.unwrap(), true);
        if switched {
            return go;
        }
        go.max(self.expand(depth, level.unwrap(), false))
    }

    fn expand(&self, depth: usize, level: usize, switched: bool) -> f64 {
        let p1 = if switched { &self.p1_true } else { &self.p1_perceptual };
        let mut total = 0.0;
        for (a, &pa) in p1.iter().enumerate().filter(|e| *e.1 > 0.0) {
            for (b, &pb) in self.p2.iter().enumerate().filter(|e| *e.1 > 0.0) {
                for (t, pt) in self.outcome(a, b) {
                    let cont = match self.terminal(t) {
                        Some(r) => r,
                        None if !switched => self.value(depth - 1, Some(level), false),
                        None => {
                            let null = self.likelihood(&self.p1_perceptual, b, t);
                            let alt = self.likelihood(&self.p1_true, b, t);
                            let next = if null == 0.0 {
                                None
                            } else {
                                let mid = (2 * level + 1) as f64 * self.delta / 2.0;
                                self.level((mid + (alt / null).ln()).max(0.0))
                            };
                            self.value(depth - 1, next, true)
                        }
                    };
                    total += pa * pb * pt * self.gamma * cont;
                }
            }
        }
        total
    }
}

fn toy_oracle() -> Verdict {
    let gamma = 0.9;
    let (g, hidden) = toy_deception_game(gamma);
    let visible: Vec<usize> = (0..g.num_actions1()).filter(|a| !hidden.contains(a)).collect();
    let bundle = build_hypergame(&g, &visible, gamma, 1e-12).unwrap();
    let cfg = PlannerConfig::new(0.2, 2.0);
    let mdp = build_semi_mdp(&bundle, &cfg).unwrap();
    let sol = solve_semi_mdp(&mdp, 1e-10).unwrap();
    let d = &bundle.data;
    let oracle = ToyOracle {
        gamma,
        delta: 0.2,
        threshold: 2.0,
        p1_true: d.p1_true.row(0).to_vec(),
        p1_perceptual: d.p1_perceptual.row(0).to_vec(),
        p2: d.p2_perceptual.row(0).to_vec(),
        baseline: d.baseline[0],
        game: g,
    };
    // gamma^120 < 4e-6 bounds the truncation error
    let expected = oracle.value(120, Some(0), false);
    let got = sol.root_value(&mdp, 0);
    gate((got - expected).abs() <= 1e-3, format!("planner {got:.6}, enumeration {expected:.6}"))
}

// ---------------------------------------------------------------- 6

fn payoff_lower_bound(bundle: &HypergameBundle) -> Verdict {
    let cfg = scaled(0.2, 2.0);
    let mdp = build_semi_mdp(bundle, &cfg).unwrap();
    let sol = solve_semi_mdp(&mdp, 1e-6).unwrap();
    let sim = Simulator::new(bundle, &cfg, &sol.policy).unwrap();
    let undecided: Vec<usize> = (0..bundle.num_states()).filter(|&s| !bundle.is_decided(s)).collect();
    let step = (undecided.len() / 20).max(1);
    let states: Vec<usize> = undecided.iter().copied().step_by(step).take(20).collect();
    let rc = RolloutConfig { horizon: 400, learning_delay: 3, ..Default::default() };
    let fills = [
        ("keep_perceptual", FillPolicy::KeepPerceptual),
        ("uniform_random", FillPolicy::UniformRandom),
        ("fixed_true", FillPolicy::Fixed(bundle.data.p2_true.clone())),
    ];
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for (_, fill) in &fills {
        for (i, &s) in states.iter().enumerate() {
            let est = monte_carlo_payoff(&sim, s, fill, &rc, 10_000, 1000 + i as u64).unwrap();
            let slack = est.mean - (sol.root_value(&mdp, s) - est.half_width95());
            worst = worst.min(slack);
            // deterministic starts give zero spread, so allow rounding
            if slack < -1e-9 {
                violations += 1;
            }
        }
    }
    gate(
        violations == 0 && states.len() >= 20,
        format!(
            "{} states x {} completions x 1e4 rollouts, violations {violations}, min slack {worst:.3}",
            states.len(),
            fills.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn vod_sanity(bundle: &HypergameBundle) -> Verdict {
    let tol = 1e-9;
    let (g, _) = soccer(&GridConfig::basic());
    let all: Vec<usize> = (0..g.num_actions1()).collect();
    let full = build_hypergame(&g, &all, 0.95, BUNDLE_TOL).unwrap();
    let cfg = scaled(0.2, 2.0);
    let m = build_semi_mdp(&full, &cfg).unwrap();
    let sol = solve_semi_mdp(&m, tol).unwrap();
    let full_max = vod_table(&m, &sol, &full).iter().fold(0.0f64, |a, r| a.max(r.value_of_deception.abs()));

    let m = build_semi_mdp(bundle, &cfg).unwrap();
    let sol = solve_semi_mdp(&m, tol).unwrap();
    let table = vod_table(&m, &sol, bundle);
    let min = table.iter().map(|r| r.value_of_deception).fold(f64::INFINITY, f64::min);
    let max = table.iter().map(|r| r.value_of_deception).fold(f64::NEG_INFINITY, f64::max);
    // value iteration and the equilibrium solve each leave an error of
    // their tolerance over 1 - gamma, in scaled units
    let slack = cfg.scale * (2.0 * tol + BUNDLE_TOL) / (1.0 - 0.95);
    gate(
        full_max <= slack && min.abs() <= slack && max > 0.0,
        format!("nothing hidden: max |VoD| {full_max:.1e}; hidden action: min {min:.2e}, max {max:.3} (x100)"),
    )
}

// ---------------------------------------------------------------- 8

fn max_vod(bundle: &HypergameBundle) -> Verdict {
    let t = Instant::now();
    let cfg = scaled(0.2, 2.0);
    let m = build_semi_mdp(bundle, &cfg).unwrap();
    let sol = solve_semi_mdp(&m, 0.1).unwrap();
    let table = vod_table(&m, &sol, bundle);
    let (best, max) = table
        .iter()
        .map(|r| (r.state, r.value_of_deception))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let g = &bundle.true_game;
    let mean = |ball: char| {
        let v: Vec<f64> =
            table.iter().filter(|r| g.state_label(r.state).ends_with(ball)).map(|r| r.value_of_deception).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (p1_ball, p2_ball) = (mean('1'), mean('0'));
    let elapsed = t.elapsed();
    let pass = (50.0..=90.0).contains(&max) && p2_ball > p1_ball && elapsed < Duration::from_secs(300);
    Verdict {
        pass,
        gate: false,
        detail: format!(
            "max VoD {max:.3} at {} (reference 72.289, band [50, 90]); mean VoD P2 ball {p2_ball:.3} vs P1 ball {p1_ball:.3}; {:.2}s",
            g.state_label(best),
            elapsed.as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------- 9

fn strong_opponent(bundle: &HypergameBundle) -> Verdict {
    let tol = 0.1;
    let r = strong_opponent_report(bundle, &scaled(0.2, 2.0), tol).unwrap();
    // both policies are scored by the same truncated evaluation; a policy
    // that is optimal only for the infinite horizon can trail by this much
    let slack = 2.0 * tol / (1.0 - 0.95);
    let all_nonneg = r.rows.iter().all(|x| x.difference >= -slack);
    let negatives = r.rows.iter().filter(|x| x.difference < 0.0).count();
    gate(
        r.min.abs() <= slack && all_nonneg,
        format!(
            "min {:.3e}, max {:.3} (reference 46.564), {negatives} of {} rows below zero",
            r.min,
            r.max,
            r.rows.len()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn sensitivity(bundle: &HypergameBundle) -> Verdict {
    let reference = [2.235, 3.529, 3.464, 3.403];
    let (_, rows) = sensitivity_sweep(bundle, &scaled(0.2, 2.0), &[1.0, 5.0, 8.0, 12.0], 0.1).unwrap();
    let pass = rows.iter().all(|r| (-1e-6..=10.0).contains(&r.degradation_pct));
    let cells: Vec<String> = rows
        .iter()
        .zip(reference)
        .map(|(r, p)| format!("c={}: {:.3} vs {p}, {:.4}%", r.threshold, r.max_difference, r.degradation_pct))
        .collect();
    gate(pass, cells.join("; "))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let bundle = soccer_bundle();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        (1, "CUSUM equivalence", Box::new(cusum_equivalence)),
        (2, "matrix games", Box::new(matrix_games)),
        (3, "ASW oracles", Box::new(asw_oracles)),
        (4, "semi-MDP invariants", Box::new(|| semi_mdp_invariants(&bundle))),
        (5, "toy DP oracle", Box::new(toy_oracle)),
        (6, "empirical lower bound", Box::new(|| payoff_lower_bound(&bundle))),
        (7, "VoD sanity", Box::new(|| vod_sanity(&bundle))),
        (8, "maximal VoD", Box::new(|| max_vod(&bundle))),
        (9, "strong opponent", Box::new(|| strong_opponent(&bundle))),
        (10, "sensitivity", Box::new(|| sensitivity(&bundle))),
    ];
    let mut failed_gate = false;
    for (id, name, run) in criteria {
        let t = Instant::now();
        let v = run();
        let verdict = if v.pass { "PASS" } else { "FAIL" };
        let kind = if v.gate { "" } else { " [reported]" };
        println!("criterion {id:>2} {verdict}{kind} {name} ({:.2}s): {}", t.elapsed().as_secs_f64(), v.detail);
        failed_gate |= v.gate && !v.pass;
    }
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if failed_gate {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
