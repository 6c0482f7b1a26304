//! Strong-consistency and bias-shift measurements over debate logs,
//! temperature sweeps, and tabulation of run reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::agents::{AgentResources, AgentSpec};
use crate::dataset::{self, AccuracyReport, DatasetError, SampleRecord};
use crate::game::{ChompOrientation, GameKind, GameState, Move, PlayConvention};
use crate::gateway::ChatBackend;
use crate::prompting::{parse_response, Catalog, PromptContext};
use crate::reasoners::{Decision, ReasonerConfig, ReasonerError, ReasonerKind};
use crate::simulator::WinRateReport;
use crate::store::Record;

pub const CONSISTENCY_THRESHOLD: f64 = 0.5;
/// Below this many trials a consistency report carries a warning.
pub const SMALL_N: u64 = 10;
pub const SWEEP_TEMPS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const SWEEP_REPEATS: u32 = 15;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no decoded actions in {0}")]
    EmptyLogs(&'static str),
    #[error("temperature sweep needs a dreamad or dreamad_minus reasoner, got {0}")]
    WrongReasoner(ReasonerKind),
    #[error("{0}")]
    Dataset(String),
    #[error("debate {index}: {message}")]
    Debate { index: usize, message: String },
}

impl From<DatasetError> for AnalysisError {
    fn from(e: DatasetError) -> Self {
        AnalysisError::Dataset(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CountRepr {
    action: Move,
    count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DistRepr {
    counts: Vec<CountRepr>,
    n_total: u64,
    #[serde(default)]
    undecoded: u64,
}

/// Counts of decoded actions. Undecoded responses are tallied separately
/// and are not part of `n_total`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "DistRepr", try_from = "DistRepr")]
pub struct ActionDistribution {
    counts: BTreeMap<Move, u64>,
    n_total: u64,
    undecoded: u64,
}

impl From<ActionDistribution> for DistRepr {
    fn from(d: ActionDistribution) -> Self {
        DistRepr {
            counts: d.counts.into_iter().map(|(action, count)| CountRepr { action, count }).collect(),
            n_total: d.n_total,
            undecoded: d.undecoded,
        }
    }
}

impl TryFrom<DistRepr> for ActionDistribution {
    type Error = String;

    fn try_from(r: DistRepr) -> Result<Self, String> {
        let mut d = ActionDistribution { undecoded: r.undecoded, ..Default::default() };
        for c in r.counts {
            d.add_n(c.action, c.count);
        }
        if d.n_total != r.n_total {
            return Err(format!("counts sum to {}, n_total is {}", d.n_total, r.n_total));
        }
        Ok(d)
    }
}

impl ActionDistribution {
    pub fn from_actions<'a, I: IntoIterator<Item = &'a Option<Move>>>(actions: I) -> Self {
        let mut d = ActionDistribution::default();
        for a in actions {
            match a {
                Some(m) => d.add_n(*m, 1),
                None => d.undecoded += 1,
            }
        }
        d
    }

    pub fn from_counts<I: IntoIterator<Item = (Move, u64)>>(counts: I) -> Self {
        let mut d = ActionDistribution::default();
        for (m, c) in counts {
            d.add_n(m, c);
        }
        d
    }

    /// Parses each response text against `state`; unusable answers count as
    /// undecoded.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], state: &GameState, orientation: ChompOrientation) -> Self {
        let actions: Vec<Option<Move>> =
            texts.iter().map(|t| parse_response(t.as_ref(), state, orientation, false).ok().map(|p| p.action)).collect();
        Self::from_actions(&actions)
    }

    fn add_n(&mut self, m: Move, n: u64) {
        if n > 0 {
            *self.counts.entry(m).or_insert(0) += n;
            self.n_total += n;
        }
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn undecoded(&self) -> u64 {
        self.undecoded
    }

    pub fn count(&self, m: &Move) -> u64 {
        self.counts.get(m).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> impl Iterator<Item = (&Move, &u64)> {
        self.counts.iter()
    }

    pub fn frequency(&self, m: &Move) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.count(m) as f64 / self.n_total as f64
        }
    }

    pub fn frequency_of(&self, set: &[Move]) -> f64 {
        if self.n_total == 0 {
            return 0.0;
        }
        let hits: u64 = self.counts.iter().filter(|(m, _)| set.contains(m)).map(|(_, c)| c).sum();
        hits as f64 / self.n_total as f64
    }

    /// Most frequent action, smallest in sort order on ties, and whether a
    /// tie occurred.
    pub fn mode(&self) -> Option<(Move, bool)> {
        let best = *self.counts.values().max()?;
        let mut tied = self.counts.iter().filter(|(_, &c)| c == best).map(|(m, _)| *m);
        let first = tied.next()?;
        Some((first, tied.next().is_some()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongConsistencyReport {
    pub mode_action: Move,
    pub mode_frequency: f64,
    pub flagged: bool,
    pub threshold: f64,
    pub tie: bool,
    pub n_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Flags a distribution whose mode frequency strictly exceeds `threshold`.
pub fn detect_strong_consistency(
    dist: &ActionDistribution,
    threshold: f64,
) -> Result<StrongConsistencyReport, AnalysisError> {
    let (mode_action, tie) = dist.mode().ok_or(AnalysisError::EmptyLogs("distribution"))?;
    let mode_frequency = dist.frequency(&mode_action);
    let warning = (dist.n_total < SMALL_N).then(|| format!("only {} trials", dist.n_total));
    Ok(StrongConsistencyReport {
        mode_action,
        mode_frequency,
        flagged: mode_frequency > threshold,
        threshold,
        tie,
        n_total: dist.n_total,
        warning,
    })
}

/// Per-round answers of every debater in one debate. Round 0 holds the
/// independent answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateLog {
    #[serde(default)]
    pub state_ref: String,
    pub round_actions: Vec<Vec<Option<Move>>>,
}

impl Record for DebateLog {
    const RECORD_TYPE: &'static str = "debate_log";
}

impl DebateLog {
    pub fn from_decision(state_ref: &str, d: &Decision) -> Self {
        DebateLog { state_ref: state_ref.to_string(), round_actions: d.round_actions.clone() }
    }

    pub fn initial(&self) -> &[Option<Move>] {
        self.round_actions.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn finals(&self) -> &[Option<Move>] {
        self.round_actions.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Answers at `round`; a debate that stopped earlier keeps its last round.
    pub fn at_round(&self, round: usize) -> &[Option<Move>] {
        match self.round_actions.get(round) {
            Some(r) => r,
            None => self.finals(),
        }
    }
}

/// How trials are drawn from a set of debates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Every debater's initial answer is a pre trial and every final answer
    /// a post trial.
    #[default]
    Pooled,
    /// Only debaters with both an initial and a final decoded answer count,
    /// so pre and post cover the same trials.
    Paired,
}

pub fn pre_post(logs: &[DebateLog], mode: PoolMode) -> (Vec<Option<Move>>, Vec<Option<Move>>) {
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for log in logs {
        for (i, a) in log.initial().iter().enumerate() {
            let b = log.finals().get(i).copied().flatten();
            if mode == PoolMode::Paired && (a.is_none() || b.is_none()) {
                continue;
            }
            pre.push(*a);
            post.push(b);
        }
    }
    (pre, post)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasShiftReport {
    pub pre: ActionDistribution,
    pub post: ActionDistribution,
    pub pre_mode: Move,
    pub pre_mode_frequency: f64,
    pub post_mode_frequency: f64,
    /// Post minus pre frequency of the pre-debate mode action.
    pub delta_mode: f64,
    pub pre_optimal: f64,
    pub post_optimal: f64,
    pub delta_optimal: f64,
    pub optimal_actions: Vec<Move>,
    pub mode: PoolMode,
}

pub fn measure_bias_shift(
    pre_logs: &[Option<Move>],
    post_logs: &[Option<Move>],
    optimal_actions: &[Move],
) -> Result<BiasShiftReport, AnalysisError> {
    bias_shift(
        ActionDistribution::from_actions(pre_logs),
        ActionDistribution::from_actions(post_logs),
        optimal_actions,
        PoolMode::Pooled,
    )
}

pub fn measure_debate_bias_shift(
    logs: &[DebateLog],
    optimal_actions: &[Move],
    mode: PoolMode,
) -> Result<BiasShiftReport, AnalysisError> {
    let (pre, post) = pre_post(logs, mode);
    bias_shift(ActionDistribution::from_actions(&pre), ActionDistribution::from_actions(&post), optimal_actions, mode)
}

pub fn bias_shift(
    pre: ActionDistribution,
    post: ActionDistribution,
    optimal_actions: &[Move],
    mode: PoolMode,
) -> Result<BiasShiftReport, AnalysisError> {
    let (pre_mode, _) = pre.mode().ok_or(AnalysisError::EmptyLogs("pre-debate logs"))?;
    if post.n_total == 0 {
        return Err(AnalysisError::EmptyLogs("post-debate logs"));
    }
    let pre_mode_frequency = pre.frequency(&pre_mode);
    let post_mode_frequency = post.frequency(&pre_mode);
    let pre_optimal = pre.frequency_of(optimal_actions);
    let post_optimal = post.frequency_of(optimal_actions);
    Ok(BiasShiftReport {
        pre_mode,
        pre_mode_frequency,
        post_mode_frequency,
        delta_mode: post_mode_frequency - pre_mode_frequency,
        pre_optimal,
        post_optimal,
        delta_optimal: post_optimal - pre_optimal,
        optimal_actions: optimal_actions.to_vec(),
        pre,
        post,
        mode,
    })
}

/// Fraction of decoded answers that are optimal, per round index.
pub fn optimal_decline_curve(logs: &[DebateLog], optimal_actions: &[Move]) -> Result<Vec<f64>, AnalysisError> {
    let rounds = logs.iter().map(|l| l.round_actions.len()).max().unwrap_or(0);
    if rounds == 0 {
        return Err(AnalysisError::EmptyLogs("debate logs"));
    }
    (0..rounds)
        .map(|r| {
            let d = ActionDistribution::from_actions(logs.iter().flat_map(|l| l.at_round(r)));
            if d.n_total == 0 {
                Err(AnalysisError::EmptyLogs("debate round"))
            } else {
                Ok(d.frequency_of(optimal_actions))
            }
        })
        .collect()
}

/// Runs `n_debates` debates on one state and keeps their per-round answers.
/// Debate `i` uses seed `i`.
pub fn collect_debate_logs(
    config: &ReasonerConfig,
    catalog: &Catalog,
    backend: &dyn ChatBackend,
    state: &GameState,
    convention: PlayConvention,
    orientation: ChompOrientation,
    n_debates: usize,
) -> Result<Vec<DebateLog>, AnalysisError> {
    let reasoner = crate::reasoners::Reasoner::new(config, catalog, backend);
    let ctx = PromptContext { state, convention, orientation, agent_name: "Player" };
    let state_ref = state.describe();
    (0..n_debates)
        .map(|i| {
            reasoner
                .decide(&ctx, i as u64)
                .map(|d| DebateLog::from_decision(&state_ref, &d))
                .map_err(|e: ReasonerError| AnalysisError::Debate { index: i, message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub temperature: f64,
    pub mean: f64,
    /// Half width of the 95% Student-t interval; absent for one repeat.
    pub ci_half_width: Option<f64>,
    pub per_repeat: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub agent: String,
    pub n_repeats: u32,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

/// Half width of the 95% Student-t interval for the mean of `xs`.
pub fn t_interval_95(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let (_, sd) = dataset::mean_std(xs);
    let t = StudentsT::new(0.0, 1.0, (xs.len() - 1) as f64).expect("valid dof").inverse_cdf(0.975);
    Some(t * sd / (xs.len() as f64).sqrt())
}

fn repeat_accuracies(report: &AccuracyReport) -> Vec<f64> {
    let mut hits = vec![(0usize, 0usize); report.n_repeats as usize];
    for o in &report.outcomes {
        let h = &mut hits[o.repeat as usize];
        h.1 += 1;
        if o.correct {
            h.0 += 1;
        }
    }
    hits.into_iter().map(|(c, n)| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
}

/// Accuracy over the whole dataset at each temperature, applied to both
/// the knowledge and diversification stages.
pub fn temperature_sweep(
    config: &ReasonerConfig,
    samples: &[SampleRecord],
    temps: &[f64],
    n_repeats: u32,
    seed: u64,
    resources: &AgentResources,
) -> Result<SweepReport, AnalysisError> {
    if !matches!(config.kind, ReasonerKind::Dreamad | ReasonerKind::DreamadMinus) {
        return Err(AnalysisError::WrongReasoner(config.kind));
    }
    let mut points = Vec::new();
    for &t in temps {
        let cfg = ReasonerConfig { temp_spke: t, temp_diversify: t, ..config.clone() };
        let report = dataset::evaluate(&AgentSpec::Llm(cfg), samples, n_repeats, seed, resources)?;
        let per_repeat = repeat_accuracies(&report);
        let (mean, _) = dataset::mean_std(&per_repeat);
        let ci_half_width = t_interval_95(&per_repeat);
        points.push(SweepPoint {
            temperature: t,
            mean,
            ci_half_width,
            warning: ci_half_width.is_none().then(|| "single repeat: no interval".to_string()),
            per_repeat,
        });
    }
    Ok(SweepReport { agent: AgentSpec::Llm(config.clone()).label(), n_repeats: n_repeats.max(1), seed, points })
}

/// Win-rate reports combined by agent, game and variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateRow {
    pub agent: String,
    pub game: GameKind,
    pub variant: String,
    pub n: usize,
    pub wins: usize,
    pub win_rate: f64,
}

pub fn aggregate_win_rates(reports: &[WinRateReport]) -> Vec<WinRateRow> {
    let mut acc: BTreeMap<(String, GameKind, String), (usize, usize)> = BTreeMap::new();
    for r in reports {
        let e = acc.entry((r.agent.clone(), r.game, r.variant.clone())).or_default();
        e.0 += r.n;
        e.1 += r.wins;
    }
    acc.into_iter()
        .map(|((agent, game, variant), (n, wins))| WinRateRow {
            agent,
            game,
            variant,
            n,
            wins,
            win_rate: if n == 0 { 0.0 } else { wins as f64 / n as f64 },
        })
        .collect()
}

/// Column order of the win-rate table.
pub const WIN_RATE_COLUMNS: [(GameKind, &str); 8] = [
    (GameKind::Nim, "Normal"),
    (GameKind::Nim, "Misere"),
    (GameKind::Fibonacci, "Normal"),
    (GameKind::Fibonacci, "Misere"),
    (GameKind::Kayles, "Single Row"),
    (GameKind::Kayles, "2 Rows"),
    (GameKind::Chomp, "Rectangular"),
    (GameKind::Chomp, "Square"),
];

fn csv_string<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(f: F) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf8")
}

/// One row per agent, one column per game variant; empty cells where no run
/// exists.
pub fn win_rate_table_csv(reports: &[WinRateReport]) -> String {
    let rows = aggregate_win_rates(reports);
    let mut agents: Vec<&str> = rows.iter().map(|r| r.agent.as_str()).collect();
    agents.dedup();
    csv_string(|w| {
        let mut header = vec!["agent".to_string()];
        header.extend(WIN_RATE_COLUMNS.iter().map(|(g, v)| format!("{g} {v}")));
        w.write_record(&header)?;
        for a in agents {
            let mut rec = vec![a.to_string()];
            for (g, v) in WIN_RATE_COLUMNS {
                let cell = rows
                    .iter()
                    .find(|r| r.agent == a && r.game == g && r.variant == v)
                    .map(|r| format!("{:.3}", r.win_rate))
                    .unwrap_or_default();
                rec.push(cell);
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub const ACCURACY_COLUMNS: [GameKind; 4] = [GameKind::Nim, GameKind::Fibonacci, GameKind::Chomp, GameKind::Kayles];

/// One row per agent with mean and standard deviation per game.
pub fn accuracy_table_csv(reports: &[AccuracyReport]) -> String {
    csv_string(|w| {
        let mut header = vec!["agent".to_string()];
        for g in ACCURACY_COLUMNS {
            header.push(format!("{g}_mean"));
            header.push(format!("{g}_std"));
        }
        w.write_record(&header)?;
        for r in reports {
            let mut rec = vec![r.agent.clone()];
            for g in ACCURACY_COLUMNS {
                match r.game(g) {
                    Some(a) => {
                        rec.push(format!("{:.3}", a.mean));
                        rec.push(format!("{:.3}", a.std));
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// Two rows, before and after debate, with the frequency of each state's
/// pre-debate mode action.
pub fn bias_table_csv(columns: &[(String, BiasShiftReport)]) -> String {
    csv_string(|w| {
        let mut header = vec!["method".to_string()];
        header.extend(columns.iter().map(|(s, _)| s.clone()));
        w.write_record(&header)?;
        let mut pre = vec!["Standard".to_string()];
        pre.extend(columns.iter().map(|(_, r)| format!("{:.3}", r.pre_mode_frequency)));
        w.write_record(&pre)?;
        let mut post = vec!["+ After MAD".to_string()];
        post.extend(columns.iter().map(|(_, r)| format!("{:.3}", r.post_mode_frequency)));
        w.write_record(&post)
    })
}

/// Action counts before and after debate.
pub fn distribution_csv(report: &BiasShiftReport) -> String {
    csv_string(|w| {
        w.write_record(["phase", "action", "count", "frequency"])?;
        for (phase, d) in [("pre", &report.pre), ("post", &report.post)] {
            for (m, c) in d.counts() {
                w.write_record([phase.to_string(), m.to_string(), c.to_string(), format!("{:.4}", d.frequency(m))])?;
            }
        }
        Ok(())
    })
}

pub fn decline_curve_csv(curve: &[f64]) -> String {
    csv_string(|w| {
        w.write_record(["round", "optimal_fraction"])?;
        for (i, v) in curve.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:.4}")])?;
        }
        Ok(())
    })
}

pub fn sweep_csv(report: &SweepReport) -> String {
    csv_string(|w| {
        w.write_record(["temperature", "mean", "ci_low", "ci_high", "n_repeats"])?;
        for p in &report.points {
            let (lo, hi) = match p.ci_half_width {
                Some(h) => (format!("{:.4}", p.mean - h), format!("{:.4}", p.mean + h)),
                None => (String::new(), String::new()),
            };
            w.write_record([format!("{:.1}", p.temperature), format!("{:.4}", p.mean), lo, hi, p.per_repeat.len().to_string()])?;
        }
        Ok(())
    })
}
