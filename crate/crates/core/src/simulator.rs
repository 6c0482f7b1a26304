//! Turn-based two-agent episodes and seeded matches over the simulator
//! presets.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{build_agent, AgentError, AgentResources, AgentSpec, MissingBackend, MoveDiagnostics, Observation, Seat};
use crate::game::{ChompOrientation, GameError, GameKind, GameState, Move, PlayConvention, Winner};
use crate::gateway::ChatExchange;
use crate::reasoners::{ReasonerConfig, ReasonerKind};
use crate::seeds;
use crate::store::Record;

/// Model the presets name as the default opponent.
pub const DEFAULT_OPPONENT_MODEL: &str = "gpt-4o-2024-08-06";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub game: GameKind,
    pub variant: String,
    pub initial_state: GameState,
    pub convention: PlayConvention,
    pub orientation: ChompOrientation,
    pub first_player: Seat,
}

pub fn presets() -> &'static [Preset] {
    static PRESETS: OnceLock<Vec<Preset>> = OnceLock::new();
    PRESETS.get_or_init(|| {
        let list: Vec<Preset> =
            serde_json::from_str(include_str!("../assets/presets.json")).expect("presets file is valid");
        for p in &list {
            p.initial_state.validate().expect("preset state is valid");
            p.initial_state.check_convention(p.convention).expect("preset convention fits the game");
        }
        list
    })
}

pub fn preset(name: &str) -> Option<&'static Preset> {
    presets().iter().find(|p| p.name == name)
}

/// ReAct prompting on the preset opponent model.
pub fn default_opponent() -> AgentSpec {
    AgentSpec::Llm(ReasonerConfig {
        model_id: DEFAULT_OPPONENT_MODEL.into(),
        ..ReasonerConfig::new(ReasonerKind::React)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub config_ref: String,
    pub game: GameKind,
    pub variant: String,
    pub initial_state: GameState,
    pub convention: PlayConvention,
    #[serde(default)]
    pub orientation: ChompOrientation,
    pub first_player: Seat,
    pub agent: AgentSpec,
    pub opponent: AgentSpec,
    /// Defaults to four times the initial material.
    #[serde(default)]
    pub max_plies: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn from_preset(p: &Preset, agent: AgentSpec, opponent: AgentSpec) -> Self {
        EpisodeConfig {
            config_ref: p.name.clone(),
            game: p.game,
            variant: p.variant.clone(),
            initial_state: p.initial_state.clone(),
            convention: p.convention,
            orientation: p.orientation,
            first_player: p.first_player,
            agent,
            opponent,
            max_plies: None,
            seed: 0,
        }
    }

    pub fn ply_limit(&self) -> u64 {
        self.max_plies.unwrap_or(4 * self.initial_state.material())
    }

    /// Same episode with the two seats exchanged.
    pub fn mirrored(&self) -> Self {
        EpisodeConfig {
            agent: self.opponent.clone(),
            opponent: self.agent.clone(),
            first_player: self.first_player.other(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.initial_state.validate().map_err(SimError::Game)?;
        self.initial_state.check_convention(self.convention).map_err(SimError::Game)?;
        if self.initial_state.kind() != self.game {
            return Err(SimError::Config(format!("game {} does not match the initial state", self.game)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AgentWin,
    AgentLoss,
    Forfeit,
    /// Ply backstop hit; scored as a loss for the agent.
    PlyCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlyRecord {
    pub ply: u64,
    pub seat: Seat,
    pub mv: Move,
    pub diagnostics: MoveDiagnostics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub round_actions: Vec<Vec<Option<Move>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_index: u64,
    pub seed: u64,
    pub config_ref: String,
    pub initial_state: GameState,
    pub convention: PlayConvention,
    pub first_player: Seat,
    pub agent: String,
    pub opponent: String,
    pub plies: Vec<PlyRecord>,
    pub final_state: GameState,
    pub outcome: Outcome,
    pub forfeit_by: Option<Seat>,
    pub forfeit_reason: Option<String>,
    pub transcripts_ref: String,
    pub n_exchanges: usize,
}

impl Record for EpisodeRecord {
    const RECORD_TYPE: &'static str = "episode";
}

impl EpisodeRecord {
    pub fn agent_won(&self) -> bool {
        match self.outcome {
            Outcome::AgentWin => true,
            Outcome::Forfeit => self.forfeit_by == Some(Seat::Opponent),
            Outcome::AgentLoss | Outcome::PlyCap => false,
        }
    }

    /// Replays the plies from the initial state and checks the final state.
    pub fn replay(&self) -> Result<GameState, GameError> {
        let mut state = self.initial_state.clone();
        for p in &self.plies {
            state = state.apply(&p.mv)?;
        }
        if state != self.final_state {
            return Err(GameError::InvalidState("replayed state differs from the recorded final state".into()));
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub episode_index: u64,
    pub ply: u64,
    pub seat: Seat,
    pub exchange: ChatExchange,
}

impl Record for TranscriptRecord {
    const RECORD_TYPE: &'static str = "transcript";
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    MissingBackend(#[from] MissingBackend),
    #[error("game: {0}")]
    Game(GameError),
    #[error("agent: {0}")]
    Agent(AgentError),
    #[error("config: {0}")]
    Config(String),
}

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";

/// Plays one episode. Seats alternate from `first_player`; the first mover's
/// agent draws its randomness from child seed 1 and the second mover's from
/// child seed 2, so mirrored configs replay identically.
pub fn run_episode(
    config: &EpisodeConfig,
    resources: &AgentResources,
    episode_index: u64,
) -> Result<(EpisodeRecord, Vec<TranscriptRecord>), SimError> {
    config.validate()?;
    let seed = config.seed;
    let first = config.first_player;
    let seat_seed = |seat: Seat| seeds::derive(seed, if seat == first { 1 } else { 2 });
    let mut agent = build_agent(&config.agent, resources, seat_seed(Seat::Agent))?;
    let mut opponent = build_agent(&config.opponent, resources, seat_seed(Seat::Opponent))?;
    let role = |seat: Seat| if seat == first { "Player 1" } else { "Player 2" };

    let mut state = config.initial_state.clone();
    let mut history: Vec<(Seat, Move)> = Vec::new();
    let mut plies = Vec::new();
    let mut transcripts = Vec::new();
    let mut mover = first;
    let mut outcome = None;
    let mut forfeit_by = None;
    let mut forfeit_reason = None;
    let limit = config.ply_limit();

    while !state.is_terminal() {
        if plies.len() as u64 >= limit {
            outcome = Some(Outcome::PlyCap);
            break;
        }
        let obs = Observation {
            state: state.clone(),
            convention: config.convention,
            move_history: history.clone(),
            role_name: role(mover).into(),
            game_config_ref: config.config_ref.clone(),
            orientation: config.orientation,
        };
        let ply = plies.len() as u64;
        let chooser = if mover == Seat::Agent { &mut agent } else { &mut opponent };
        let decision = match chooser.choose(&obs) {
            Ok(d) => d,
            Err(AgentError::Gateway { error, transcripts: partial }) => {
                transcripts.extend(partial.into_iter().map(|exchange| TranscriptRecord {
                    episode_index,
                    ply,
                    seat: mover,
                    exchange,
                }));
                outcome = Some(Outcome::Forfeit);
                forfeit_by = Some(mover);
                forfeit_reason = Some(error.to_string());
                break;
            }
            Err(e) => return Err(SimError::Agent(e)),
        };
        transcripts.extend(decision.transcripts.into_iter().map(|exchange| TranscriptRecord {
            episode_index,
            ply,
            seat: mover,
            exchange,
        }));
        state = state.apply(&decision.mv).map_err(SimError::Game)?;
        history.push((mover, decision.mv));
        plies.push(PlyRecord {
            ply,
            seat: mover,
            mv: decision.mv,
            diagnostics: decision.diagnostics,
            round_actions: decision.round_actions,
        });
        mover = mover.other();
    }

    let outcome = outcome.unwrap_or_else(|| {
        let last = plies.last().map(|p| p.seat).unwrap_or(first.other());
        let winner = match state.terminal_winner(config.convention) {
            Some(Winner::PreviousMover) => last,
            Some(Winner::PlayerToMove) => last.other(),
            None => unreachable!("loop ends on a terminal state"),
        };
        if winner == Seat::Agent {
            Outcome::AgentWin
        } else {
            Outcome::AgentLoss
        }
    });
    let record = EpisodeRecord {
        episode_index,
        seed,
        config_ref: config.config_ref.clone(),
        initial_state: config.initial_state.clone(),
        convention: config.convention,
        first_player: first,
        agent: config.agent.label(),
        opponent: config.opponent.label(),
        plies,
        final_state: state,
        outcome,
        forfeit_by,
        forfeit_reason,
        transcripts_ref: format!("{TRANSCRIPTS_FILE}#episode={episode_index}"),
        n_exchanges: transcripts.len(),
    };
    Ok((record, transcripts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub index: u64,
    pub seed: u64,
    pub outcome: Outcome,
    pub plies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateReport {
    pub config_ref: String,
    pub game: GameKind,
    pub variant: String,
    pub agent: String,
    pub opponent: String,
    pub n: usize,
    pub wins: usize,
    pub losses: usize,
    pub forfeits: usize,
    pub ply_caps: usize,
    pub win_rate: f64,
    pub mean_plies: f64,
    pub base_seed: u64,
    pub episodes: Vec<EpisodeSummary>,
}

impl WinRateReport {
    pub fn from_records(config: &EpisodeConfig, base_seed: u64, records: &[EpisodeRecord]) -> Self {
        let n = records.len();
        let wins = records.iter().filter(|r| r.agent_won()).count();
        let forfeits = records.iter().filter(|r| r.outcome == Outcome::Forfeit).count();
        let ply_caps = records.iter().filter(|r| r.outcome == Outcome::PlyCap).count();
        let total_plies: usize = records.iter().map(|r| r.plies.len()).sum();
        WinRateReport {
            config_ref: config.config_ref.clone(),
            game: config.game,
            variant: config.variant.clone(),
            agent: config.agent.label(),
            opponent: config.opponent.label(),
            n,
            wins,
            losses: n - wins,
            forfeits,
            ply_caps,
            win_rate: if n == 0 { 0.0 } else { wins as f64 / n as f64 },
            mean_plies: if n == 0 { 0.0 } else { total_plies as f64 / n as f64 },
            base_seed,
            episodes: records
                .iter()
                .map(|r| EpisodeSummary { index: r.episode_index, seed: r.seed, outcome: r.outcome, plies: r.plies.len() })
                .collect(),
        }
    }
}

pub struct MatchResult {
    pub report: WinRateReport,
    pub records: Vec<EpisodeRecord>,
    pub transcripts: Vec<TranscriptRecord>,
}

/// Runs `n_episodes` with seeds `base_seed + i` on `workers` threads. Results
/// are ordered by episode index whatever the completion order.
pub fn run_match(
    config: &EpisodeConfig,
    n_episodes: u64,
    base_seed: u64,
    workers: usize,
    resources: &AgentResources,
) -> Result<MatchResult, SimError> {
    if n_episodes == 0 {
        return Err(SimError::Config("n_episodes must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let results: Vec<Result<(EpisodeRecord, Vec<TranscriptRecord>), SimError>> = pool.install(|| {
        (0..n_episodes)
            .into_par_iter()
            .map(|i| {
                let cfg = EpisodeConfig { seed: base_seed.wrapping_add(i), ..config.clone() };
                run_episode(&cfg, resources, i)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    let mut transcripts = Vec::new();
    for r in results {
        let (rec, tr) = r?;
        records.push(rec);
        transcripts.extend(tr);
    }
    let report = WinRateReport::from_records(config, base_seed, &records);
    Ok(MatchResult { report, records, transcripts })
}
