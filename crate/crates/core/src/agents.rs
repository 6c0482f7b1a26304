//! Move selectors behind one interface: the solver oracle, a seeded uniform
//! random player, and LLM players backed by a reasoner pipeline.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{ChompOrientation, GameState, Move, PlayConvention};
use crate::gateway::{ChatBackend, ChatExchange, GatewayError};
use crate::prompting::{Catalog, PromptContext};
use crate::reasoners::{Reasoner, ReasonerConfig, ReasonerFailure};
use crate::seeds;
use crate::solver::{closed_form, OptimalPlay, SolveError, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seat {
    /// The agent under test.
    Agent,
    Opponent,
}

impl Seat {
    pub fn other(self) -> Seat {
        match self {
            Seat::Agent => Seat::Opponent,
            Seat::Opponent => Seat::Agent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub state: GameState,
    pub convention: PlayConvention,
    pub move_history: Vec<(Seat, Move)>,
    pub role_name: String,
    pub game_config_ref: String,
    #[serde(default)]
    pub orientation: ChompOrientation,
}

impl Observation {
    pub fn new(state: GameState, convention: PlayConvention) -> Self {
        Observation {
            state,
            convention,
            move_history: Vec::new(),
            role_name: "Player".into(),
            game_config_ref: String::new(),
            orientation: ChompOrientation::TopLeft,
        }
    }

    pub fn ply(&self) -> u64 {
        self.move_history.len() as u64
    }

    fn prompt_context(&self) -> PromptContext<'_> {
        PromptContext {
            state: &self.state,
            convention: self.convention,
            orientation: self.orientation,
            agent_name: &self.role_name,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveDiagnostics {
    /// Pipeline reruns after an unusable answer, plus in-pipeline resamples.
    pub parse_retries: u32,
    pub fallback_used: bool,
    /// The oracle moved from a position with no winning move.
    pub losing_position: bool,
    pub violations: Vec<String>,
    #[serde(default)]
    pub consensus_reached: Option<bool>,
    #[serde(default)]
    pub rounds_used: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveDecision {
    pub mv: Move,
    pub transcripts: Vec<ChatExchange>,
    pub diagnostics: MoveDiagnostics,
    /// Each round's decoded actions for debate pipelines.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub round_actions: Vec<Vec<Option<Move>>>,
}

impl MoveDecision {
    fn plain(mv: Move) -> Self {
        MoveDecision { mv, transcripts: Vec::new(), diagnostics: MoveDiagnostics::default(), round_actions: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("no move from a terminal state")]
    Terminal,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("gateway failure: {error}")]
    Gateway { error: GatewayError, transcripts: Vec<ChatExchange> },
}

pub trait Agent: Send {
    fn choose(&mut self, obs: &Observation) -> Result<MoveDecision, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentSpec {
    Oracle,
    Random,
    Llm(ReasonerConfig),
}

impl AgentSpec {
    pub fn label(&self) -> String {
        match self {
            AgentSpec::Oracle => "oracle".into(),
            AgentSpec::Random => "random".into(),
            AgentSpec::Llm(c) => format!("{}:{}", c.model_id, c.kind),
        }
    }

    pub fn needs_backend(&self) -> bool {
        matches!(self, AgentSpec::Llm(_))
    }
}

/// Plays a move from `optimal_moves`; from a losing position, the solver's
/// deterministic fallback.
pub struct OracleAgent {
    solver: Solver,
}

impl OracleAgent {
    pub fn new(solver: Solver) -> Self {
        OracleAgent { solver }
    }
}

impl Default for OracleAgent {
    fn default() -> Self {
        OracleAgent::new(Solver::default())
    }
}

impl Agent for OracleAgent {
    fn choose(&mut self, obs: &Observation) -> Result<MoveDecision, AgentError> {
        if obs.state.is_terminal() {
            return Err(AgentError::Terminal);
        }
        if let Some(mv) = large_square_opening(&obs.state) {
            return Ok(MoveDecision::plain(mv));
        }
        match self.solver.optimal_moves(&obs.state, obs.convention)? {
            OptimalPlay::Winning { moves } => Ok(MoveDecision::plain(moves[0])),
            OptimalPlay::Losing { fallback } => {
                let mut d = MoveDecision::plain(fallback);
                d.diagnostics.losing_position = true;
                Ok(d)
            }
        }
    }
}

/// Full Chomp squares above this side are played by the symmetric opening
/// instead of search.
pub const CHOMP_SEARCH_MAX_SIDE: u32 = 7;

fn large_square_opening(state: &GameState) -> Option<Move> {
    match state {
        GameState::Chomp(c)
            if c.n_rows == c.n_cols
                && c.n_rows > CHOMP_SEARCH_MAX_SIDE
                && c.col_heights.iter().all(|&h| h == c.n_rows) =>
        {
            Some(closed_form::chomp_square_opening(c.n_rows))
        }
        _ => None,
    }
}

/// Uniform over legal moves from its own seeded stream.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

fn pick(rng: &mut ChaCha8Rng, legal: &[Move]) -> Move {
    legal[rng.random_range(0..legal.len())]
}

impl Agent for RandomAgent {
    fn choose(&mut self, obs: &Observation) -> Result<MoveDecision, AgentError> {
        let legal = obs.state.legal_moves();
        if legal.is_empty() {
            return Err(AgentError::Terminal);
        }
        Ok(MoveDecision::plain(pick(&mut self.rng, &legal)))
    }
}

/// Extra pipeline runs after an unusable answer before falling back to a
/// random legal move.
pub const MAX_RESAMPLES: u32 = 3;

pub struct LlmAgent {
    config: ReasonerConfig,
    catalog: Arc<Catalog>,
    backend: Arc<dyn ChatBackend>,
    seed: u64,
    fallback_rng: ChaCha8Rng,
}

impl LlmAgent {
    pub fn new(config: ReasonerConfig, catalog: Arc<Catalog>, backend: Arc<dyn ChatBackend>, seed: u64) -> Self {
        LlmAgent {
            config,
            catalog,
            backend,
            seed,
            fallback_rng: ChaCha8Rng::seed_from_u64(seeds::derive(seed, u64::MAX)),
        }
    }
}

impl Agent for LlmAgent {
    fn choose(&mut self, obs: &Observation) -> Result<MoveDecision, AgentError> {
        let legal = obs.state.legal_moves();
        if legal.is_empty() {
            return Err(AgentError::Terminal);
        }
        let reasoner = Reasoner::new(&self.config, &self.catalog, self.backend.as_ref());
        let ctx = obs.prompt_context();
        let ply_seed = seeds::derive(self.seed, obs.ply());
        let mut transcripts = Vec::new();
        let mut diagnostics = MoveDiagnostics::default();
        for attempt in 0..=MAX_RESAMPLES {
            match reasoner.decide(&ctx, seeds::derive(ply_seed, attempt as u64)) {
                Ok(d) => {
                    transcripts.extend(d.transcripts);
                    diagnostics.parse_retries += d.parse_retries;
                    if obs.state.is_legal(&d.action) {
                        diagnostics.consensus_reached = Some(d.consensus_reached);
                        diagnostics.rounds_used = Some(d.rounds_used);
                        return Ok(MoveDecision { mv: d.action, transcripts, diagnostics, round_actions: d.round_actions });
                    }
                    diagnostics.violations.push(format!("illegal action {}", d.action));
                }
                Err(e) => {
                    transcripts.extend(e.transcripts);
                    if let ReasonerFailure::Gateway(error) = e.failure {
                        return Err(AgentError::Gateway { error, transcripts });
                    }
                    diagnostics.violations.push(e.failure.to_string());
                }
            }
            if attempt < MAX_RESAMPLES {
                diagnostics.parse_retries += 1;
            }
        }
        let mv = pick(&mut self.fallback_rng, &legal);
        tracing::warn!(%mv, violations = diagnostics.violations.len(), "no usable answer, playing a random legal move");
        diagnostics.fallback_used = true;
        Ok(MoveDecision { mv, transcripts, diagnostics, round_actions: Vec::new() })
    }
}

/// Shared resources for building LLM agents.
#[derive(Clone)]
pub struct AgentResources {
    pub catalog: Arc<Catalog>,
    pub backend: Option<Arc<dyn ChatBackend>>,
}

impl AgentResources {
    pub fn offline() -> Self {
        AgentResources { catalog: Arc::new(Catalog::builtin()), backend: None }
    }

    pub fn with_backend(backend: Arc<dyn ChatBackend>) -> Self {
        AgentResources { catalog: Arc::new(Catalog::builtin()), backend: Some(backend) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("agent `{0}` needs a chat backend")]
pub struct MissingBackend(pub String);

pub fn build_agent(spec: &AgentSpec, resources: &AgentResources, seed: u64) -> Result<Box<dyn Agent>, MissingBackend> {
    Ok(match spec {
        AgentSpec::Oracle => Box::new(OracleAgent::default()),
        AgentSpec::Random => Box::new(RandomAgent::new(seed)),
        AgentSpec::Llm(cfg) => {
            let backend = resources.backend.clone().ok_or_else(|| MissingBackend(spec.label()))?;
            Box::new(LlmAgent::new(cfg.clone(), resources.catalog.clone(), backend, seed))
        }
    })
}
