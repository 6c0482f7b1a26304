//! One JSON document per run. Unknown keys are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::analysis::{PoolMode, CONSISTENCY_THRESHOLD, SWEEP_REPEATS, SWEEP_TEMPS};
use crate::dataset::DatasetSpec;
use crate::game::{ChompOrientation, GameState, PlayConvention};
use crate::reasoners::{ReasonerConfig, ReasonerKind};
use crate::simulator;

pub const DEFAULT_EPISODES: u64 = 50;
pub const DEFAULT_DEBATES: usize = 20;

fn dreamad() -> AgentSpec {
    AgentSpec::Llm(ReasonerConfig::new(ReasonerKind::Dreamad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub preset: String,
    pub agent: AgentSpec,
    pub opponent: AgentSpec,
    pub episodes: u64,
    pub seed: u64,
    pub workers: usize,
    pub max_plies: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            preset: "nim-normal".into(),
            agent: dreamad(),
            opponent: simulator::default_opponent(),
            episodes: DEFAULT_EPISODES,
            seed: 0,
            workers: 1,
            max_plies: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: DatasetSpec,
    pub agent: AgentSpec,
    pub n_repeats: u32,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { dataset: DatasetSpec::default(), agent: dreamad(), n_repeats: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub reasoner: ReasonerConfig,
    pub state: GameState,
    pub convention: PlayConvention,
    pub orientation: ChompOrientation,
    pub n_debates: usize,
    pub mode: PoolMode,
    pub threshold: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            reasoner: ReasonerConfig::new(ReasonerKind::Mad),
            state: GameState::fibonacci_opening(20),
            convention: PlayConvention::Normal,
            orientation: ChompOrientation::TopLeft,
            n_debates: DEFAULT_DEBATES,
            mode: PoolMode::Pooled,
            threshold: CONSISTENCY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub reasoner: ReasonerConfig,
    pub dataset: DatasetSpec,
    pub temps: Vec<f64>,
    pub n_repeats: u32,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            reasoner: ReasonerConfig::new(ReasonerKind::DreamadMinus),
            dataset: DatasetSpec::default(),
            temps: SWEEP_TEMPS.to_vec(),
            n_repeats: SWEEP_REPEATS,
            seed: 0,
        }
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
