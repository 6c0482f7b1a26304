//! Exact impartial-game engines and solvers, plus LLM decision pipelines and
//! the tooling to benchmark them against each other.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod dataset;
pub mod game;
pub mod gateway;
pub mod prompting;
pub mod reasoners;
pub mod seeds;
pub mod simulator;
pub mod solver;
pub mod store;

pub use agents::{AgentResources, AgentSpec, Observation, Seat};
pub use analysis::{ActionDistribution, BiasShiftReport, DebateLog, PoolMode, StrongConsistencyReport, SweepReport};
pub use dataset::{AccuracyReport, DatasetSpec, SampleRecord};
pub use game::{ChompOrientation, GameKind, GameState, Move, PlayConvention};
pub use gateway::{BackendKind, ChatBackend, ReplayBackend, ScriptedBackend};
pub use prompting::Catalog;
pub use reasoners::{Decision, ReasonerConfig, ReasonerKind};
pub use simulator::{EpisodeConfig, EpisodeRecord, WinRateReport};
pub use solver::{GrundyValue, OptimalPlay, PositionLabel, Solver};
pub use store::RunManifest;
