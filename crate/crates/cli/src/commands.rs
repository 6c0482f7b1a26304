use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use arena_core::agents::{AgentResources, AgentSpec};
use arena_core::analysis::{self, collect_debate_logs, detect_strong_consistency, DebateLog};
use arena_core::config::{self, BiasConfig, EvalConfig, SimulateConfig, SweepConfig};
use arena_core::dataset::{self, AccuracyReport, DatasetSpec, SampleRecord};
use arena_core::game::{ChompOrientation, GameKind, GameState, PlayConvention};
use arena_core::prompting::Catalog;
use arena_core::reasoners::{ReasonerConfig, ReasonerKind};
use arena_core::simulator::{self, run_match, EpisodeConfig, WinRateReport, TRANSCRIPTS_FILE};
use arena_core::solver::{self, OptimalPlay, SolveError, Solver};
use arena_core::store::{self, RunManifest};
use serde::Serialize;
use serde_json::{json, Value};

use crate::backend::BackendArgs;
use crate::{
    BiasArgs, Cli, Command, DatasetEvalArgs, DatasetGenArgs, ReportArgs, SimulateArgs, SolveArgs, SweepArgs,
};

pub fn parse_orientation(s: &str) -> Result<ChompOrientation, String> {
    serde_json::from_value(Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown orientation `{s}`; use top_left, top_right, bottom_left or bottom_right"))
}

pub fn agent_spec(name: &str, model: Option<&str>) -> Result<AgentSpec> {
    Ok(match name {
        "oracle" => AgentSpec::Oracle,
        "random" => AgentSpec::Random,
        other => {
            let kind: ReasonerKind = other.parse().map_err(|e: String| anyhow!(e))?;
            let mut cfg = ReasonerConfig::new(kind);
            if let Some(m) = model {
                cfg.model_id = m.to_string();
            }
            AgentSpec::Llm(cfg)
        }
    })
}

fn load_catalog(templates: Option<&Path>) -> Result<Arc<Catalog>> {
    Ok(Arc::new(match templates {
        Some(dir) => Catalog::load_dir(dir)?,
        None => Catalog::builtin(),
    }))
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, out: Option<PathBuf>, config: &impl Serialize, catalog: &Catalog, seeds: Vec<u64>) -> Result<Run> {
        let manifest = RunManifest::new(command, serde_json::to_value(config)?, catalog.hash(), seeds);
        let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{command}-{}", &manifest.run_id[..8])));
        std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
        Ok(Run { dir, manifest })
    }

    fn with_backend(&mut self, b: &BackendArgs) {
        self.manifest.backend = Some(b.kind());
        self.manifest.fixtures_dir = b.fixtures.as_ref().map(|p| p.display().to_string());
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| path.display().to_string())
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn finish(&self) -> Result<()> {
        self.manifest.write(&self.dir)?;
        Ok(())
    }
}

fn resources(spec_needs: bool, backend: &BackendArgs, catalog: Arc<Catalog>) -> Result<AgentResources> {
    Ok(AgentResources { catalog, backend: if spec_needs { Some(backend.build()?) } else { None } })
}

pub fn run(cli: Cli) -> Result<Value> {
    let templates = cli.templates.as_deref();
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::KaylesAudit { n_max } => Ok(serde_json::to_value(solver::kayles_audit(n_max)?)?),
        Command::DatasetGen(a) => dataset_gen(a, templates),
        Command::DatasetEval(a) => dataset_eval(a, templates),
        Command::Simulate(a) => simulate(a, templates),
        Command::BiasAnalyze(a) => bias_analyze(a, templates),
        Command::SweepTemp(a) => sweep_temp(a, templates),
        Command::Report(a) => report(a),
        Command::Presets => Ok(serde_json::to_value(simulator::presets())?),
    }
}

fn solve_state(a: &SolveArgs) -> Result<GameState> {
    use arena_core::game::{parse_fibonacci, parse_kayles, parse_nim};
    if let Some(text) = &a.state {
        return serde_json::from_str(text).context("--state");
    }
    let game = a.game.context("give --game or --state")?;
    let state = match game {
        GameKind::Nim => {
            let piles = a.piles.as_deref().context("nim needs --piles")?;
            let largest = piles.split(',').filter_map(|p| p.trim().parse::<u32>().ok()).max().unwrap_or(1);
            parse_nim(piles, a.max_take.unwrap_or(largest.max(1)))?
        }
        GameKind::Fibonacci => parse_fibonacci(&a.remaining.context("fibonacci needs --remaining")?.to_string(), a.cap)?,
        GameKind::Kayles => parse_kayles(a.rows.as_deref().context("kayles needs --rows")?)?,
        GameKind::Chomp => {
            let grid = a.grid.as_deref().context("chomp needs --grid ROWSxCOLS")?;
            let (r, c) = grid.split_once(['x', 'X']).context("--grid must look like 5x5")?;
            GameState::chomp_full(r.trim().parse()?, c.trim().parse()?)
        }
    };
    Ok(state)
}

fn solve(a: SolveArgs) -> Result<Value> {
    let state = solve_state(&a)?;
    state.validate()?;
    let convention = a.convention.unwrap_or(if state.kind() == GameKind::Chomp {
        PlayConvention::Poison
    } else {
        PlayConvention::Normal
    });
    state.check_convention(convention)?;
    let mut solver = Solver::default();
    let label = solver.label_minimax(&state, convention)?;
    let grundy = match solver.grundy_for(&state, convention) {
        Ok(g) => Some(g.0),
        Err(SolveError::NotNormalPlay(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let optimal = if state.is_terminal() { None } else { Some(solver.optimal_moves(&state, convention)?) };
    let moves_text: Vec<String> = optimal.as_ref().map(|o| o.moves().iter().map(|m| m.to_string()).collect()).unwrap_or_default();
    let mut out = json!({
        "state": state,
        "describe": state.describe(),
        "convention": convention,
        "label": label,
        "grundy": grundy,
        "optimal": optimal,
        "optimal_text": moves_text,
    });
    match &state {
        GameState::Nim(n) => out["nim_sum"] = json!(solver::nim_sum(&n.piles).0),
        GameState::Fibonacci(f) => out["zeckendorf"] = json!(solver::zeckendorf(f.remaining as u64)),
        GameState::Chomp(_) => out["render"] = json!(state.render(a.orientation)),
        GameState::Kayles(_) => {}
    }
    if matches!(optimal, Some(OptimalPlay::Losing { .. })) {
        out["note"] = json!("losing position: the listed move is the deterministic fallback");
    }
    Ok(out)
}

fn dataset_spec(config: Option<&Path>, seed: Option<u64>, include_losing: bool) -> Result<DatasetSpec> {
    match config {
        Some(p) => config::load(p).map_err(|e| anyhow!(e)),
        None => {
            let mut s = DatasetSpec::default();
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s.include_losing = include_losing;
            Ok(s)
        }
    }
}

fn counts(samples: &[SampleRecord]) -> Value {
    let mut m = serde_json::Map::new();
    for g in [GameKind::Nim, GameKind::Fibonacci, GameKind::Chomp, GameKind::Kayles] {
        m.insert(g.to_string(), json!(samples.iter().filter(|s| s.game == g).count()));
    }
    Value::Object(m)
}

fn dataset_gen(a: DatasetGenArgs, templates: Option<&Path>) -> Result<Value> {
    let spec = dataset_spec(a.config.as_deref(), a.flags.seed, a.flags.include_losing)?;
    let catalog = load_catalog(templates)?;
    let samples = dataset::generate_dataset(&spec)?;
    let mut run = Run::start("dataset-gen", a.out, &spec, &catalog, vec![spec.seed])?;
    let text = dataset::dataset_jsonl(&samples);
    run.manifest.dataset_hash = Some(store::sha256_hex(text.as_bytes()));
    run.write("dataset.jsonl", &text)?;
    run.finish()?;
    Ok(json!({
        "run_dir": run.dir,
        "dataset": run.dir.join("dataset.jsonl"),
        "dataset_hash": run.manifest.dataset_hash,
        "counts": counts(&samples),
    }))
}

fn load_or_generate(path: Option<&Path>, spec: &DatasetSpec) -> Result<Vec<SampleRecord>> {
    match path {
        Some(p) => Ok(store::read_jsonl(p)?),
        None => Ok(dataset::generate_dataset(spec)?),
    }
}

fn dataset_eval(a: DatasetEvalArgs, templates: Option<&Path>) -> Result<Value> {
    let cfg: EvalConfig = match &a.config {
        Some(p) => config::load(p).map_err(|e| anyhow!(e))?,
        None => {
            let mut c = EvalConfig::default();
            if let Some(name) = &a.flags.agent {
                c.agent = agent_spec(name, a.flags.model.as_deref())?;
            } else if let (Some(m), AgentSpec::Llm(r)) = (&a.flags.model, &mut c.agent) {
                r.model_id = m.clone();
            }
            if let Some(r) = a.flags.repeats {
                c.n_repeats = r;
            }
            if let Some(s) = a.flags.seed {
                c.seed = s;
            }
            c
        }
    };
    let catalog = load_catalog(templates)?;
    let samples = load_or_generate(a.dataset.as_deref(), &cfg.dataset)?;
    let res = resources(cfg.agent.needs_backend(), &a.backend, catalog.clone())?;
    let report = dataset::evaluate(&cfg.agent, &samples, cfg.n_repeats, cfg.seed, &res)?;
    let mut run = Run::start("dataset-eval", a.out, &cfg, &catalog, vec![cfg.seed])?;
    run.with_backend(&a.backend);
    run.manifest.dataset_hash = Some(report.dataset_hash.clone());
    run.write_json("report.json", &report)?;
    run.write("accuracy.csv", &analysis::accuracy_table_csv(std::slice::from_ref(&report)))?;
    run.finish()?;
    Ok(json!({
        "run_dir": run.dir,
        "agent": report.agent,
        "n_repeats": report.n_repeats,
        "n_failures": report.n_failures,
        "accuracy": report.per_game.iter().map(|g| (g.game.to_string(), json!({"mean": g.mean, "std": g.std}))).collect::<serde_json::Map<_, _>>(),
    }))
}

fn simulate(a: SimulateArgs, templates: Option<&Path>) -> Result<Value> {
    let cfg: SimulateConfig = match &a.config {
        Some(p) => config::load(p).map_err(|e| anyhow!(e))?,
        None => {
            let f = &a.flags;
            let mut c = SimulateConfig::default();
            if let Some(p) = &f.preset {
                c.preset = p.clone();
            }
            if let Some(name) = &f.agent {
                c.agent = agent_spec(name, f.model.as_deref())?;
            }
            if let Some(name) = &f.opponent {
                c.opponent = agent_spec(name, f.opponent_model.as_deref())?;
            }
            c.episodes = f.episodes.unwrap_or(c.episodes);
            c.seed = f.seed.unwrap_or(c.seed);
            c.workers = f.workers.unwrap_or(c.workers);
            c.max_plies = f.max_plies.or(c.max_plies);
            c
        }
    };
    let preset = simulator::preset(&cfg.preset).with_context(|| {
        let names: Vec<&str> = simulator::presets().iter().map(|p| p.name.as_str()).collect();
        format!("unknown preset `{}`; known: {}", cfg.preset, names.join(", "))
    })?;
    let mut episode = EpisodeConfig::from_preset(preset, cfg.agent.clone(), cfg.opponent.clone());
    episode.max_plies = cfg.max_plies;
    let catalog = load_catalog(templates)?;
    let res = resources(cfg.agent.needs_backend() || cfg.opponent.needs_backend(), &a.backend, catalog.clone())?;
    let m = run_match(&episode, cfg.episodes, cfg.seed, cfg.workers, &res)?;
    let seeds = (0..cfg.episodes).map(|i| cfg.seed.wrapping_add(i)).collect();
    let mut run = Run::start("simulate", a.out, &cfg, &catalog, seeds)?;
    run.with_backend(&a.backend);
    run.write("episodes.jsonl", &store::to_jsonl(&m.records))?;
    run.write(TRANSCRIPTS_FILE, &store::to_jsonl(&m.transcripts))?;
    run.write_json("report.json", &m.report)?;
    run.write("win_rates.csv", &analysis::win_rate_table_csv(std::slice::from_ref(&m.report)))?;
    run.finish()?;
    let r = &m.report;
    Ok(json!({
        "run_dir": run.dir,
        "preset": r.config_ref,
        "agent": r.agent,
        "opponent": r.opponent,
        "n": r.n,
        "wins": r.wins,
        "forfeits": r.forfeits,
        "ply_caps": r.ply_caps,
        "win_rate": r.win_rate,
        "mean_plies": r.mean_plies,
    }))
}

fn bias_analyze(a: BiasArgs, templates: Option<&Path>) -> Result<Value> {
    let cfg: BiasConfig = match &a.config {
        Some(p) => config::load(p).map_err(|e| anyhow!(e))?,
        None => BiasConfig::default(),
    };
    cfg.state.validate()?;
    cfg.state.check_convention(cfg.convention)?;
    let catalog = load_catalog(templates)?;
    let logs: Vec<DebateLog> = match &a.logs {
        Some(p) => store::read_jsonl(p)?,
        None => {
            let backend = a.backend.build()?;
            collect_debate_logs(&cfg.reasoner, &catalog, &backend, &cfg.state, cfg.convention, cfg.orientation, cfg.n_debates)?
        }
    };
    let optimal = match Solver::default().optimal_moves(&cfg.state, cfg.convention)? {
        OptimalPlay::Winning { moves } => moves,
        OptimalPlay::Losing { .. } => Vec::new(),
    };
    let shift = analysis::measure_debate_bias_shift(&logs, &optimal, cfg.mode)?;
    let pre = detect_strong_consistency(&shift.pre, cfg.threshold)?;
    let post = detect_strong_consistency(&shift.post, cfg.threshold)?;
    let curve = analysis::optimal_decline_curve(&logs, &optimal)?;
    let summary = json!({
        "state": cfg.state.describe(),
        "n_debates": logs.len(),
        "optimal_actions": optimal,
        "pre_consistency": pre,
        "post_consistency": post,
        "bias_shift": shift,
        "decline_curve": curve,
    });

    let mut run = Run::start("bias-analyze", a.out, &cfg, &catalog, vec![cfg.reasoner.seed])?;
    if a.logs.is_none() {
        run.with_backend(&a.backend);
    }
    run.write("debate_logs.jsonl", &store::to_jsonl(&logs))?;
    run.write_json("report.json", &summary)?;
    run.write("bias_table.csv", &analysis::bias_table_csv(&[(cfg.state.describe(), shift.clone())]))?;
    run.write("distribution.csv", &analysis::distribution_csv(&shift))?;
    run.write("decline.csv", &analysis::decline_curve_csv(&curve))?;
    run.finish()?;
    Ok(json!({
        "run_dir": run.dir,
        "pre_mode": pre.mode_action.to_string(),
        "pre_mode_frequency": pre.mode_frequency,
        "pre_flagged": pre.flagged,
        "post_mode_frequency": shift.post_mode_frequency,
        "delta_mode": shift.delta_mode,
        "delta_optimal": shift.delta_optimal,
        "decline_curve": curve,
    }))
}

fn sweep_temp(a: SweepArgs, templates: Option<&Path>) -> Result<Value> {
    let cfg: SweepConfig = match &a.config {
        Some(p) => config::load(p).map_err(|e| anyhow!(e))?,
        None => SweepConfig::default(),
    };
    let catalog = load_catalog(templates)?;
    let samples = load_or_generate(a.dataset.as_deref(), &cfg.dataset)?;
    let res = resources(true, &a.backend, catalog.clone())?;
    let report = analysis::temperature_sweep(&cfg.reasoner, &samples, &cfg.temps, cfg.n_repeats, cfg.seed, &res)?;
    let mut run = Run::start("sweep-temp", a.out, &cfg, &catalog, vec![cfg.seed])?;
    run.with_backend(&a.backend);
    run.manifest.dataset_hash = Some(dataset::dataset_hash(&samples));
    run.write_json("report.json", &report)?;
    run.write("sweep.csv", &analysis::sweep_csv(&report))?;
    run.finish()?;
    Ok(json!({
        "run_dir": run.dir,
        "points": report.points.iter().map(|p| json!({"temperature": p.temperature, "mean": p.mean, "ci_half_width": p.ci_half_width})).collect::<Vec<_>>(),
    }))
}

fn report(a: ReportArgs) -> Result<Value> {
    let mut wins: Vec<WinRateReport> = Vec::new();
    let mut accs: Vec<AccuracyReport> = Vec::new();
    for input in &a.inputs {
        let path = if input.is_dir() { input.join("report.json") } else { input.clone() };
        let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        if let Ok(r) = serde_json::from_str::<WinRateReport>(&text) {
            wins.push(r);
        } else if let Ok(r) = serde_json::from_str::<AccuracyReport>(&text) {
            accs.push(r);
        } else {
            bail!("{}: not a win-rate or accuracy report", path.display());
        }
    }
    let rows = analysis::aggregate_win_rates(&wins);
    let win_csv = analysis::win_rate_table_csv(&wins);
    let acc_csv = analysis::accuracy_table_csv(&accs);
    let mut out = json!({"win_rates": rows, "n_accuracy_reports": accs.len()});
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
        std::fs::write(dir.join("win_rates.csv"), &win_csv)?;
        std::fs::write(dir.join("accuracy.csv"), &acc_csv)?;
        std::fs::write(dir.join("aggregate.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
        out["out_dir"] = json!(dir);
    } else {
        out["win_rates_csv"] = json!(win_csv);
        out["accuracy_csv"] = json!(acc_csv);
    }
    Ok(out)
}
