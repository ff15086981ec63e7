use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use hypergame::detection::write_trace_csv;
use hypergame::game::{build_soccer_game, toy_deception_game, ConcurrentGame, ExplicitGame, GameFile, GridConfig, Player};
use hypergame::harness::{
    monte_carlo_payoff, sensitivity_csv, sensitivity_sweep, strong_opponent_report, vod_heatmap, FillChoice,
    RolloutConfig, Simulator,
};
use hypergame::perception::{build_hypergame, content_hash, game_hash};
use hypergame::planner::{
    build_semi_mdp, evaluate_policy, solve_semi_mdp, vod_table, PlannerConfig,
    SwitchPolicy,
};
use hypergame::solvers::{compute_asw, GameTag};

/// Equilibrium tolerance used for every bundle the CLI builds.
const BUNDLE_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "hypergame", version, about = "Action-deception planning in concurrent reachability games")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize)]
struct Common {
    /// Game JSON file, or one of the built-ins `soccer-basic`,
    /// `soccer-bouncing`, `toy`.
    #[arg(long, global = true, default_value = "soccer-basic")]
    game: String,
    /// Comma-separated P1 actions known to P2 (indices or names). Defaults
    /// to every action the game does not mark hidden.
    #[arg(long, global = true)]
    visible: Option<String>,
    #[arg(long, global = true, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, global = true, default_value_t = 0.2)]
    delta: f64,
    /// Detection threshold.
    #[arg(long, global = true, default_value_t = 2.0)]
    cgamma: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    scale: f64,
    /// Bellman residual at which value iteration stops.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1000)]
    rollouts: usize,
    #[arg(long, global = true, default_value_t = 200)]
    horizon: usize,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Almost-sure winning regions in the true and perceived games.
    SolveAsw,
    /// Equilibria of both games and the full bundle.
    SolveNe,
    /// Builds the switching MDP and reports its size.
    BuildSemimdp,
    /// Solves the switching MDP; writes the policy and values of deception.
    Plan,
    /// Scores a saved policy in the MDP built from the current flags.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
    },
    /// VoD tables over player positions (grid games only).
    Heatmap,
    /// Plays the policy planned at `--cgamma` against other thresholds.
    Sensitivity {
        #[arg(long, value_delimiter = ',', default_value = "1,5,8,12")]
        thresholds: Vec<f64>,
    },
    /// Compares with the policy planned against an instant detector.
    StrongOpponent,
    /// Monte Carlo rollouts of the planned policy.
    Simulate {
        /// Start state (index or label); the game's initial state by default.
        #[arg(long)]
        state: Option<String>,
        #[arg(long, value_enum, default_value = "keep-perceptual")]
        fill: Fill,
        #[arg(long, default_value_t = 0)]
        learning_delay: usize,
    },
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Fill {
    KeepPerceptual,
    UniformRandom,
    TrueEquilibrium,
}

impl From<Fill> for FillChoice {
    fn from(f: Fill) -> Self {
        match f {
            Fill::KeepPerceptual => FillChoice::KeepPerceptual,
            Fill::UniformRandom => FillChoice::UniformRandom,
            Fill::TrueEquilibrium => FillChoice::TrueEquilibrium,
        }
    }
}

/// A loaded game plus where it came from.
struct Loaded {
    game: ConcurrentGame,
    hidden: Vec<usize>,
    source_hash: String,
}

fn load_game(spec: &str, gamma: f64) -> Result<Loaded> {
    let (mut game, hidden, source_hash) = match spec {
        "soccer-basic" | "soccer-bouncing" => {
            let cfg = if spec == "soccer-basic" { GridConfig::basic() } else { GridConfig::bouncing_approx() };
            let bytes = serde_json::to_vec(&cfg)?;
            let (g, h) = build_soccer_game(&cfg)?;
            (g, h, content_hash(&bytes))
        }
        "toy" => {
            let (g, h) = toy_deception_game(gamma);
            let hash = content_hash(&serde_json::to_vec(&ExplicitGame::from_game(&g))?);
            (g, h, hash)
        }
        path => {
            let bytes = fs::read(path).with_context(|| format!("reading {path}"))?;
            let file: GameFile = serde_json::from_slice(&bytes).with_context(|| format!("parsing {path}"))?;
            let (g, h) = file.into_game()?;
            (g, h, content_hash(&bytes))
        }
    };
    game.set_discount(gamma);
    Ok(Loaded { game, hidden, source_hash })
}

fn parse_visible(spec: Option<&str>, game: &ConcurrentGame, hidden: &[usize]) -> Result<Vec<usize>> {
    let Some(spec) = spec else {
        return Ok((0..game.num_actions1()).filter(|a| !hidden.contains(a)).collect());
    };
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let a = match tok.parse::<usize>() {
            Ok(i) => i,
            Err(_) => game.action1_index(tok).with_context(|| format!("unknown P1 action {tok}"))?,
        };
        out.push(a);
    }
    Ok(out)
}

fn parse_state(spec: &str, game: &ConcurrentGame) -> Result<usize> {
    if let Ok(i) = spec.parse::<usize>() {
        if i < game.num_states() {
            return Ok(i);
        }
    }
    match game.state_labels().iter().position(|l| l == spec) {
        Some(s) => Ok(s),
        None => bail!("unknown state {spec}"),
    }
}

struct Run {
    out: PathBuf,
    outputs: Vec<(String, String)>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push((name.to_string(), content_hash(contents)));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)?.as_bytes())
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    let started = Instant::now();
    let loaded = load_game(&c.game, c.gamma)?;
    let visible = parse_visible(c.visible.as_deref(), &loaded.game, &loaded.hidden)?;
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let mut run = Run { out: c.out.clone(), outputs: Vec::new() };

    let mut planner = PlannerConfig::new(c.delta, c.cgamma);
    planner.scale = c.scale;
    let game = &loaded.game;
    let mut extra_inputs = Vec::new();

    match &cli.command {
        Command::SolveAsw => {
            let gp = hypergame::perception::derive_perceptual_game(game, &visible)?;
            let mut regions = serde_json::Map::new();
            for (name, g, tag) in [("true", game, GameTag::TrueGame), ("perceptual", &gp, GameTag::Perceptual)] {
                for p in [Player::One, Player::Two] {
                    let sol = compute_asw(g, p, tag)?;
                    println!("{name} game, {p:?}: {} states almost surely won", sol.region.len());
                    regions.insert(format!("{name}_{p:?}").to_lowercase(), serde_json::to_value(&sol)?);
                }
            }
            run.write_json("asw.json", &regions)?;
        }
        Command::SolveNe => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let s0 = game.initial();
            println!(
                "initial state {}: true value {:.6}, perceived value {:.6}",
                game.state_label(s0),
                bundle.data.value[s0],
                bundle.data.value_perceptual[s0]
            );
            let mut csv = String::from("state,label,value,value_perceptual,reach1,reach2,baseline\n");
            let d = &bundle.data;
            for s in 0..bundle.num_states() {
                csv += &format!(
                    "{s},\"{}\",{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                    game.state_label(s),
                    d.value[s],
                    d.value_perceptual[s],
                    d.reach1[s],
                    d.reach2[s],
                    d.baseline[s]
                );
            }
            run.write("values.csv", csv.as_bytes())?;
            run.write("bundle.json", serde_json::to_string(&bundle.data)?.as_bytes())?;
        }
        Command::BuildSemimdp => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let mdp = build_semi_mdp(&bundle, &planner)?;
            println!("{} decision states, {} nature states", mdp.num_decisions(), mdp.num_nature());
            run.write("semimdp.json", serde_json::to_string(&mdp)?.as_bytes())?;
        }
        Command::Plan => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let mdp = build_semi_mdp(&bundle, &planner)?;
            let sol = solve_semi_mdp(&mdp, c.tol)?;
            let table = vod_table(&mdp, &sol, &bundle);
            let mut csv = String::from("state,label,planner_value,baseline,value_of_deception,first_move\n");
            for r in &table {
                csv += &format!(
                    "{},\"{}\",{:.6},{:.6},{:.6},{:?}\n",
                    r.state,
                    game.state_label(r.state),
                    r.planner_value,
                    r.baseline,
                    r.value_of_deception,
                    sol.policy.action(r.state, 0, false)
                );
            }
            let max = table.iter().map(|r| r.value_of_deception).fold(f64::NEG_INFINITY, f64::max);
            println!("converged in {} sweeps (residual {:.2e}); max VoD {max:.4}", sol.iterations, sol.residual);
            run.write("vod.csv", csv.as_bytes())?;
            run.write_json("policy.json", &sol.policy)?;
            run.write_json("values.json", &sol.decision_values)?;
        }
        Command::Evaluate { policy } => {
            let bytes = fs::read(policy).with_context(|| format!("reading {}", policy.display()))?;
            extra_inputs.push(("policy".to_string(), content_hash(&bytes)));
            let policy: SwitchPolicy = serde_json::from_slice(&bytes)?;
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let mdp = build_semi_mdp(&bundle, &planner)?;
            let policy = if policy.grid == mdp.grid { policy } else { policy.transfer(mdp.grid) };
            let values = evaluate_policy(&mdp, &policy, c.tol)?;
            let mut csv = String::from("state,label,value\n");
            for s in (0..bundle.num_states()).filter(|&s| !bundle.is_decided(s)) {
                csv += &format!("{s},\"{}\",{:.6}\n", game.state_label(s), values[mdp.root(s)]);
            }
            run.write("evaluation.csv", csv.as_bytes())?;
        }
        Command::Heatmap => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let mdp = build_semi_mdp(&bundle, &planner)?;
            let sol = solve_semi_mdp(&mdp, c.tol)?;
            for (ball, name) in [(true, "heatmap_p1_ball.csv"), (false, "heatmap_p2_ball.csv")] {
                let h = vod_heatmap(&bundle, &mdp, &sol, ball)?;
                println!("{name}: min {:.4}, max {:.4}", h.min, h.max);
                run.write(name, h.to_csv().as_bytes())?;
            }
        }
        Command::Sensitivity { thresholds } => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let (_, rows) = sensitivity_sweep(&bundle, &planner, thresholds, c.tol)?;
            for r in &rows {
                println!("c={}: max loss {:.4} at {} ({:.3}%)", r.threshold, r.max_difference, game.state_label(r.state), r.degradation_pct);
            }
            run.write("sensitivity.csv", sensitivity_csv(&rows).as_bytes())?;
        }
        Command::StrongOpponent => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let report = strong_opponent_report(&bundle, &planner, c.tol)?;
            println!("difference min {:.4}, max {:.4}", report.min, report.max);
            run.write("strong_opponent.csv", report.to_csv(&bundle).as_bytes())?;
        }
        Command::Simulate { state, fill, learning_delay } => {
            let bundle = build_hypergame(game, &visible, c.gamma, BUNDLE_TOL)?;
            let s0 = match state {
                Some(s) => parse_state(s, game)?,
                None => game.initial(),
            };
            let mdp = build_semi_mdp(&bundle, &planner)?;
            let sol = solve_semi_mdp(&mdp, c.tol)?;
            let sim = Simulator::new(&bundle, &planner, &sol.policy)?;
            let fill_policy = FillChoice::from(*fill).resolve(&bundle);
            let rc = RolloutConfig { horizon: c.horizon, learning_delay: *learning_delay, ..Default::default() };
            let est = monte_carlo_payoff(&sim, s0, &fill_policy, &rc, c.rollouts, c.seed)?;
            let planned = if bundle.is_decided(s0) { None } else { Some(sol.root_value(&mdp, s0)) };
            println!(
                "{} rollouts from {}: mean payoff {:.4} +/- {:.4}, planner value {}",
                est.n,
                game.state_label(s0),
                est.mean,
                est.half_width95(),
                planned.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
            let first = sim.rollout(s0, &fill_policy, &rc, c.seed, 0)?;
            let mut trace = Vec::new();
            write_trace_csv(&mut trace, &first.trace)?;
            run.write("trace.csv", &trace)?;
            run.write_json("simulation.json", &json!({ "estimate": est, "planner_value": planned, "first_rollout": first }))?;
        }
    }

    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": { "common": c, "command": &cli.command, "visible_resolved": visible, "bundle_tol": BUNDLE_TOL },
        "inputs": {
            "game_source": loaded.source_hash,
            "game": game_hash(game),
            "extra": extra_inputs.into_iter().collect::<std::collections::BTreeMap<_, _>>(),
        },
        "outputs": run.outputs.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect::<Vec<_>>(),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
    });
    let name = serde_json::to_value(&cli.command)?["command"].as_str().unwrap_or("run").to_string();
    let path: &Path = &c.out;
    fs::write(path.join(format!("manifest-{name}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
