//! Decision pipelines: single-call prompting styles, self-consistency,
//! self-refinement, multi-agent debate, and the elicitation + diversification
//! pipeline with and without debate.
//!
//! Every call goes through [`Session`], which derives a distinct seed per call
//! and keeps the ordered transcript.

mod debate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::Move;
use crate::gateway::{ChatBackend, ChatExchange, ChatMessage, ChatRequest, GatewayError, DEFAULT_MAX_TOKENS};
use crate::prompting::{
    self, parse_fields, parse_response, Catalog, ParseFailure, ParsedResponse, PromptContext, PromptError,
    PromptStyle,
};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerKind {
    Standard,
    React,
    Cot,
    SelfConsistency,
    SelfRefinement,
    Mad,
    Dreamad,
    DreamadMinus,
}

impl ReasonerKind {
    pub const ALL: [ReasonerKind; 8] = [
        ReasonerKind::Standard,
        ReasonerKind::React,
        ReasonerKind::Cot,
        ReasonerKind::SelfConsistency,
        ReasonerKind::SelfRefinement,
        ReasonerKind::Mad,
        ReasonerKind::Dreamad,
        ReasonerKind::DreamadMinus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasonerKind::Standard => "standard",
            ReasonerKind::React => "react",
            ReasonerKind::Cot => "cot",
            ReasonerKind::SelfConsistency => "self_consistency",
            ReasonerKind::SelfRefinement => "self_refinement",
            ReasonerKind::Mad => "mad",
            ReasonerKind::Dreamad => "dreamad",
            ReasonerKind::DreamadMinus => "dreamad_minus",
        }
    }
}

impl fmt::Display for ReasonerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReasonerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        ReasonerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| format!("unknown reasoner `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub kind: ReasonerKind,
    pub model_id: String,
    pub n_samples: u32,
    pub n_refine_steps: u32,
    pub n_debate_rounds: u32,
    pub n_debaters: u32,
    pub temp_decision: f64,
    pub temp_spke: f64,
    pub temp_diversify: f64,
    pub max_tokens: u32,
    /// Refuse fence-less replies instead of scanning for a bare object.
    pub strict_parse: bool,
    pub seed: u64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            kind: ReasonerKind::React,
            model_id: "gpt-4o-2024-08-06".into(),
            n_samples: 5,
            n_refine_steps: 3,
            n_debate_rounds: 3,
            n_debaters: 2,
            temp_decision: 0.7,
            temp_spke: 0.1,
            temp_diversify: 0.7,
            max_tokens: DEFAULT_MAX_TOKENS,
            strict_parse: false,
            seed: 0,
        }
    }
}

impl ReasonerConfig {
    pub fn new(kind: ReasonerKind) -> Self {
        ReasonerConfig { kind, ..ReasonerConfig::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let temps = [self.temp_decision, self.temp_spke, self.temp_diversify];
        if temps.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err("temperatures must lie in [0, 1]".into());
        }
        match self.kind {
            ReasonerKind::SelfConsistency if self.n_samples == 0 => Err("n_samples must be at least 1".into()),
            ReasonerKind::Mad | ReasonerKind::Dreamad if self.n_debaters < 2 => {
                Err("debate needs at least two debaters".into())
            }
            _ => Ok(()),
        }
    }

    /// Exchange count of a run without parse resamples. `rounds_used` matters
    /// only for the debate pipelines.
    pub fn expected_exchanges(&self, rounds_used: u32) -> usize {
        let n = self.n_debaters as usize;
        let r = rounds_used as usize;
        match self.kind {
            ReasonerKind::Standard | ReasonerKind::React | ReasonerKind::Cot => 1,
            ReasonerKind::SelfConsistency => self.n_samples as usize,
            ReasonerKind::SelfRefinement => 1 + 2 * self.n_refine_steps as usize,
            ReasonerKind::Mad => n * (1 + r),
            ReasonerKind::Dreamad => 3 * n + n * (1 + r) + 1,
            ReasonerKind::DreamadMinus => 4,
        }
    }
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Move,
    pub reasoning: Option<String>,
    pub transcripts: Vec<ChatExchange>,
    /// Debate rounds entered after the independent round 0.
    pub rounds_used: u32,
    pub consensus_reached: bool,
    /// Each debater's last decoded action (the single answer otherwise).
    pub per_agent_finals: Vec<Option<Move>>,
    /// Decoded actions indexed `[round][agent]`; samples for self-consistency,
    /// successive answers for self-refinement.
    pub round_actions: Vec<Vec<Option<Move>>>,
    pub tie_broken: bool,
    pub optimized_prompts: Vec<String>,
    /// In-pipeline resamples after unparseable answers.
    pub parse_retries: u32,
}

impl Decision {
    fn single(parsed: ParsedResponse) -> Decision {
        let action = parsed.action;
        Decision {
            action,
            reasoning: parsed.reasoning,
            transcripts: Vec::new(),
            rounds_used: 0,
            consensus_reached: true,
            per_agent_finals: vec![Some(action)],
            round_actions: vec![vec![Some(action)]],
            tie_broken: false,
            optimized_prompts: Vec::new(),
            parse_retries: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum ReasonerFailure {
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("unparseable answer: {0}")]
    Parse(ParseFailure),
    #[error("no sample produced a usable action")]
    AllSamplesFailed,
    #[error("stage `{stage}` failed: {message}")]
    StageFailed { stage: String, message: String },
    #[error("prompt: {message}")]
    Prompt { message: String },
}

/// Failure with every exchange made before it.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{failure}")]
pub struct ReasonerError {
    pub failure: ReasonerFailure,
    pub transcripts: Vec<ChatExchange>,
}

impl From<PromptError> for ReasonerFailure {
    fn from(e: PromptError) -> Self {
        ReasonerFailure::Prompt { message: e.to_string() }
    }
}

/// Call bookkeeping for one `decide`.
pub(crate) struct Session<'a> {
    backend: &'a dyn ChatBackend,
    config: &'a ReasonerConfig,
    seed: u64,
    calls: u64,
    pub(crate) transcripts: Vec<ChatExchange>,
    pub(crate) parse_retries: u32,
}

impl<'a> Session<'a> {
    fn new(backend: &'a dyn ChatBackend, config: &'a ReasonerConfig, seed: u64) -> Self {
        Session { backend, config, seed, calls: 0, transcripts: Vec::new(), parse_retries: 0 }
    }

    fn fail(self, failure: ReasonerFailure) -> ReasonerError {
        ReasonerError { failure, transcripts: self.transcripts }
    }

    pub(crate) fn call(&mut self, messages: &[ChatMessage], temperature: f64, tag: String) -> Result<String, ReasonerFailure> {
        let seed = seeds::derive(self.seed, self.calls);
        self.calls += 1;
        let mut req = ChatRequest::new(self.config.model_id.clone(), messages.to_vec(), temperature)
            .with_seed(seed)
            .with_tag(tag);
        req.max_tokens = self.config.max_tokens;
        let ex = self.backend.complete(&req).map_err(ReasonerFailure::Gateway)?;
        let text = ex.response_text.clone();
        self.transcripts.push(ex);
        Ok(text)
    }

    /// One call plus one resample when the reply does not parse. Returns the
    /// reply text and its parse (the second attempt's, if there was one).
    pub(crate) fn call_parsed(
        &mut self,
        ctx: &PromptContext<'_>,
        messages: &[ChatMessage],
        temperature: f64,
        tag: &str,
    ) -> Result<(String, Result<ParsedResponse, ParseFailure>), ReasonerFailure> {
        let mut text = self.call(messages, temperature, tag.to_string())?;
        let mut parsed = self.parse(ctx, &text);
        if parsed.is_err() {
            self.parse_retries += 1;
            text = self.call(messages, temperature, format!("{tag}/resample"))?;
            parsed = self.parse(ctx, &text);
        }
        Ok((text, parsed))
    }

    fn parse(&self, ctx: &PromptContext<'_>, text: &str) -> Result<ParsedResponse, ParseFailure> {
        parse_response(text, ctx.state, ctx.orientation, self.config.strict_parse)
    }

    /// A stage call whose reply must carry `fields`; one resample on a missing
    /// field.
    fn stage(
        &mut self,
        prompt: &str,
        fields: &[&str],
        temperature: f64,
        tag: &str,
    ) -> Result<BTreeMap<String, String>, ReasonerFailure> {
        let messages = [ChatMessage::user(prompt)];
        let text = self.call(&messages, temperature, tag.to_string())?;
        match parse_fields(&text, fields) {
            Ok(f) => Ok(f),
            Err(_) => {
                self.parse_retries += 1;
                let text = self.call(&messages, temperature, format!("{tag}/resample"))?;
                parse_fields(&text, fields)
                    .map_err(|e| ReasonerFailure::StageFailed { stage: tag.to_string(), message: e.to_string() })
            }
        }
    }
}

/// Content of the last fenced block of a reply, else the trimmed reply; used
/// when quoting one agent's answer to another.
pub(crate) fn answer_block(text: &str) -> String {
    let fences: Vec<usize> = text.match_indices("```").map(|(i, _)| i).collect();
    if fences.len() >= 2 {
        let (a, b) = (fences[fences.len() - 2], fences[fences.len() - 1]);
        let inner = &text[a + 3..b];
        let inner = match inner.find('\n') {
            Some(nl) if inner[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => &inner[nl + 1..],
            _ => inner,
        };
        return inner.trim().to_string();
    }
    text.trim().to_string()
}

/// Most frequent action; ties go to the tied action seen first. Returns the
/// action and whether a tie was broken.
pub fn mode_earliest(actions: &[Option<Move>]) -> Option<(Move, bool)> {
    let mut counts: Vec<(Move, usize)> = Vec::new();
    for a in actions.iter().flatten() {
        match counts.iter_mut().find(|(m, _)| m == a) {
            Some((_, c)) => *c += 1,
            None => counts.push((*a, 1)),
        }
    }
    let best = counts.iter().map(|&(_, c)| c).max()?;
    let tied = counts.iter().filter(|&&(_, c)| c == best).count();
    let winner = counts.iter().find(|&&(_, c)| c == best).map(|&(m, _)| m)?;
    Some((winner, tied > 1))
}

pub struct Reasoner<'a> {
    pub config: &'a ReasonerConfig,
    pub catalog: &'a Catalog,
    pub backend: &'a dyn ChatBackend,
}

impl<'a> Reasoner<'a> {
    pub fn new(config: &'a ReasonerConfig, catalog: &'a Catalog, backend: &'a dyn ChatBackend) -> Self {
        Reasoner { config, catalog, backend }
    }

    /// Runs the configured pipeline. `seed` should be unique per decision
    /// (episode and ply); it is mixed with the config seed.
    pub fn decide(&self, ctx: &PromptContext<'_>, seed: u64) -> Result<Decision, ReasonerError> {
        let seed = seeds::derive(self.config.seed, seed);
        let mut session = Session::new(self.backend, self.config, seed);
        let result = match self.config.kind {
            ReasonerKind::Standard => self.single(&mut session, ctx, PromptStyle::Standard),
            ReasonerKind::React => self.single(&mut session, ctx, PromptStyle::React),
            ReasonerKind::Cot => self.single(&mut session, ctx, PromptStyle::Cot),
            ReasonerKind::SelfConsistency => self.self_consistency(&mut session, ctx),
            ReasonerKind::SelfRefinement => self.self_refinement(&mut session, ctx),
            ReasonerKind::Mad => debate::mad(self, &mut session, ctx, None),
            ReasonerKind::Dreamad => debate::dreamad(self, &mut session, ctx),
            ReasonerKind::DreamadMinus => debate::dreamad_minus(self, &mut session, ctx),
        };
        match result {
            Ok(mut decision) => {
                decision.transcripts = std::mem::take(&mut session.transcripts);
                decision.parse_retries = session.parse_retries;
                Ok(decision)
            }
            Err(f) => Err(session.fail(f)),
        }
    }

    fn output_format(&self, ctx: &PromptContext<'_>, style: PromptStyle) -> Result<String, ReasonerFailure> {
        Ok(prompting::render_output_format(self.catalog, style, ctx.state, ctx.orientation)?)
    }

    /// One call; an unparseable reply is returned as an error for the agent's
    /// resample policy.
    fn single(&self, s: &mut Session<'_>, ctx: &PromptContext<'_>, style: PromptStyle) -> Result<Decision, ReasonerFailure> {
        let prompt = prompting::render_decision_prompt(self.catalog, ctx, style)?;
        let text = s.call(&[ChatMessage::user(prompt)], self.config.temp_decision, format!("{style}"))?;
        let parsed = s.parse(ctx, &text).map_err(ReasonerFailure::Parse)?;
        Ok(Decision::single(parsed))
    }

    fn self_consistency(&self, s: &mut Session<'_>, ctx: &PromptContext<'_>) -> Result<Decision, ReasonerFailure> {
        let prompt = prompting::render_decision_prompt(self.catalog, ctx, PromptStyle::React)?;
        let messages = [ChatMessage::user(prompt)];
        let mut samples = Vec::new();
        let mut reasons = Vec::new();
        for i in 0..self.config.n_samples {
            let text = s.call(&messages, self.config.temp_decision, format!("sample/{i}"))?;
            let parsed = s.parse(ctx, &text).ok();
            samples.push(parsed.as_ref().map(|p| p.action));
            reasons.push(parsed.and_then(|p| p.reasoning));
        }
        let (action, tie) = mode_earliest(&samples).ok_or(ReasonerFailure::AllSamplesFailed)?;
        let first = samples.iter().position(|a| *a == Some(action)).expect("mode was sampled");
        Ok(Decision {
            action,
            reasoning: reasons[first].clone(),
            transcripts: Vec::new(),
            rounds_used: 0,
            consensus_reached: samples.iter().all(|a| *a == Some(action)),
            per_agent_finals: vec![Some(action)],
            round_actions: vec![samples],
            tie_broken: tie,
            optimized_prompts: Vec::new(),
            parse_retries: 0,
        })
    }

    fn self_refinement(&self, s: &mut Session<'_>, ctx: &PromptContext<'_>) -> Result<Decision, ReasonerFailure> {
        let format = self.output_format(ctx, PromptStyle::React)?;
        let prompt = prompting::render_decision_prompt(self.catalog, ctx, PromptStyle::React)?;
        let mut messages = vec![ChatMessage::user(prompt)];
        let (text, mut parsed) = s.call_parsed(ctx, &messages, self.config.temp_decision, "refine/initial")?;
        messages.push(ChatMessage::assistant(text));
        let mut answers = vec![parsed.as_ref().ok().map(|p| p.action)];
        let feedback = self.catalog.render("refine/feedback", &prompting::Bindings::new())?;
        let revise = self.catalog.render("refine/revise", &prompting::bind(&[("output_format", &format)]))?;
        for step in 0..self.config.n_refine_steps {
            messages.push(ChatMessage::user(feedback.clone()));
            let critique = s.call(&messages, self.config.temp_decision, format!("refine/{step}/feedback"))?;
            messages.push(ChatMessage::assistant(critique));
            messages.push(ChatMessage::user(revise.clone()));
            let (text, p) = s.call_parsed(ctx, &messages, self.config.temp_decision, &format!("refine/{step}/revise"))?;
            messages.push(ChatMessage::assistant(text));
            answers.push(p.as_ref().ok().map(|p| p.action));
            // An unusable revision keeps the last good answer.
            if p.is_ok() || parsed.is_err() {
                parsed = p;
            }
        }
        let parsed = parsed.map_err(ReasonerFailure::Parse)?;
        Ok(Decision {
            action: parsed.action,
            reasoning: parsed.reasoning,
            transcripts: Vec::new(),
            rounds_used: 0,
            consensus_reached: true,
            per_agent_finals: vec![Some(parsed.action)],
            round_actions: answers.into_iter().map(|a| vec![a]).collect(),
            tie_broken: false,
            optimized_prompts: Vec::new(),
            parse_retries: 0,
        })
    }
}
