use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use arena_core::gateway::{
    BackendKind, ChatBackend, ChatExchange, ChatRequest, GatewayError, LiveBackend, LiveConfig, ProviderPreset,
    RecordingBackend, ReplayBackend, ScriptedBackend,
};
use clap::{Args, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// Provider APIs; credentials from the environment.
    Live,
    /// Live calls (or --script replies), each saved as a fixture under --fixtures.
    Record,
    /// Answers from fixtures under --fixtures only.
    Replay,
    /// Answers from a JSON array of response strings in --script, in order.
    Scripted,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "live")]
    pub backend: BackendChoice,
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Requests per minute for each live provider.
    #[arg(long, default_value_t = 60)]
    pub rpm: usize,
}

/// Live backends per provider, created on first use so that a run only
/// needs credentials for the models it actually calls.
struct RoutedLive {
    rpm: usize,
    slots: Mutex<[Option<Arc<LiveBackend>>; 2]>,
}

impl RoutedLive {
    fn backend_for(&self, model_id: &str) -> Result<Arc<LiveBackend>, GatewayError> {
        let preset = ProviderPreset::for_model(model_id);
        let i = match preset {
            ProviderPreset::OpenAi => 0,
            ProviderPreset::Gemini => 1,
        };
        let mut slots = self.slots.lock().expect("backend slots");
        if let Some(b) = &slots[i] {
            return Ok(b.clone());
        }
        let b = Arc::new(LiveBackend::new(LiveConfig::from_env(preset, self.rpm)?)?);
        slots[i] = Some(b.clone());
        Ok(b)
    }
}

impl ChatBackend for RoutedLive {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        self.backend_for(&request.model_id)?.complete(request)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }
}

impl BackendArgs {
    pub fn build(&self) -> Result<Arc<dyn ChatBackend>> {
        let live = || RoutedLive { rpm: self.rpm, slots: Mutex::new([None, None]) };
        Ok(match self.backend {
            BackendChoice::Live => Arc::new(live()),
            BackendChoice::Record => {
                let dir = self.fixtures.clone().context("--backend record needs --fixtures")?;
                match &self.script {
                    Some(_) => Arc::new(RecordingBackend::new(self.scripted()?, dir)?),
                    None => Arc::new(RecordingBackend::new(live(), dir)?),
                }
            }
            BackendChoice::Replay => {
                let dir = self.fixtures.clone().context("--backend replay needs --fixtures")?;
                if !dir.is_dir() {
                    bail!("fixtures directory {} does not exist", dir.display());
                }
                Arc::new(ReplayBackend::new(dir))
            }
            BackendChoice::Scripted => Arc::new(self.scripted()?),
        })
    }

    fn scripted(&self) -> Result<ScriptedBackend> {
        let path = self.script.clone().context("a scripted backend needs --script")?;
        let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        let replies: Vec<String> =
            serde_json::from_str(&text).with_context(|| format!("{}: expected a JSON array of strings", path.display()))?;
        Ok(ScriptedBackend::queue(replies))
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            BackendChoice::Record if self.script.is_some() => BackendKind::Scripted,
            BackendChoice::Live | BackendChoice::Record => BackendKind::Live,
            BackendChoice::Replay => BackendKind::Replay,
            BackendChoice::Scripted => BackendKind::Scripted,
        }
    }
}
