//! Labeled decision states per game and accuracy evaluation of agents
//! against the solver's labels.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{build_agent, AgentError, AgentResources, AgentSpec, MissingBackend, Observation};
use crate::game::{ChompOrientation, GameKind, GameState, Move, PlayConvention};
use crate::seeds;
use crate::solver::{closed_form, OptimalPlay, PositionLabel, SolveError, Solver};
use crate::store::{self, Record};

pub const DEFAULT_DATASET_SEED: u64 = 20250214;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub nim: usize,
    pub fibonacci: usize,
    pub kayles: usize,
    pub chomp: usize,
    pub nim_max_take: u32,
    pub nim_max_pile: u32,
    pub fibonacci_max_remaining: u32,
    pub kayles_max_pins: usize,
    pub chomp_min_side: u32,
    pub chomp_max_side: u32,
    /// Largest square labeled by exhaustive minimax; larger ones use the
    /// symmetric opening.
    pub chomp_exhaustive_max: u32,
    pub include_losing: bool,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            nim: 20,
            fibonacci: 11,
            kayles: 18,
            chomp: 20,
            nim_max_take: 3,
            nim_max_pile: 30,
            fibonacci_max_remaining: 30,
            kayles_max_pins: 20,
            chomp_min_side: 2,
            chomp_max_side: 19,
            chomp_exhaustive_max: crate::agents::CHOMP_SEARCH_MAX_SIDE,
            include_losing: false,
            seed: DEFAULT_DATASET_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMethod {
    Exhaustive,
    Symmetry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub game: GameKind,
    pub variant: String,
    pub state: GameState,
    pub convention: PlayConvention,
    pub legal_actions: Vec<Move>,
    /// Winning moves; for a losing position, the solver's fallback alone.
    pub optimal_actions: Vec<Move>,
    pub losing_position: bool,
    pub label_method: LabelMethod,
    pub display_orientation: ChompOrientation,
}

impl Record for SampleRecord {
    const RECORD_TYPE: &'static str = "sample";
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("labeling {sample}: {source}")]
    Budget { sample: String, source: SolveError },
    #[error("{game}: only {available} candidate states for {wanted} samples")]
    NotEnoughStates { game: GameKind, wanted: usize, available: usize },
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    MissingBackend(#[from] MissingBackend),
}

fn label(
    solver: &mut Solver,
    id: String,
    state: GameState,
    convention: PlayConvention,
    orientation: ChompOrientation,
) -> Result<SampleRecord, DatasetError> {
    let legal_actions = state.legal_moves();
    let play = solver
        .optimal_moves(&state, convention)
        .map_err(|source| DatasetError::Budget { sample: id.clone(), source })?;
    let (optimal_actions, losing_position) = match play {
        OptimalPlay::Winning { moves } => (moves, false),
        OptimalPlay::Losing { fallback } => (vec![fallback], true),
    };
    Ok(SampleRecord {
        sample_id: id,
        game: state.kind(),
        variant: "Normal".into(),
        state,
        convention,
        legal_actions,
        optimal_actions,
        losing_position,
        label_method: LabelMethod::Exhaustive,
        display_orientation: orientation,
    })
}

/// Labels candidates in order, skipping losing positions unless asked, until
/// `wanted` samples are collected.
fn take_labeled(
    solver: &mut Solver,
    game: GameKind,
    candidates: Vec<(GameState, ChompOrientation)>,
    convention: PlayConvention,
    wanted: usize,
    include_losing: bool,
) -> Result<Vec<SampleRecord>, DatasetError> {
    let mut out = Vec::with_capacity(wanted);
    for (state, orientation) in candidates {
        if out.len() == wanted {
            break;
        }
        let id = format!("{}-{:03}", game.as_str(), out.len());
        let s = label(solver, id, state, convention, orientation)?;
        if s.losing_position && !include_losing {
            continue;
        }
        out.push(s);
    }
    if out.len() < wanted {
        return Err(DatasetError::NotEnoughStates { game, wanted, available: out.len() });
    }
    Ok(out)
}

/// Fibonacci states from the bias tables, `(remaining, cap)`.
pub const FIBONACCI_TABLE_STATES: [(u32, u32); 13] = [
    (20, 19),
    (12, 4),
    (7, 4),
    (15, 10),
    (16, 8),
    (7, 7),
    (18, 4),
    (12, 6),
    (10, 4),
    (7, 2),
    (15, 2),
    (4, 4),
    (15, 4),
];

fn fib_state(remaining: u32, cap: u32) -> GameState {
    if cap + 1 == remaining {
        GameState::fibonacci_opening(remaining)
    } else {
        GameState::fibonacci(remaining, cap)
    }
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<SampleRecord>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut solver = Solver::default();
    let tl = ChompOrientation::TopLeft;
    let mut out = Vec::new();

    let mut piles: Vec<u32> = (1..=spec.nim_max_pile).collect();
    piles.shuffle(&mut rng);
    let nim = piles.into_iter().map(|n| (GameState::nim(&[n], spec.nim_max_take), tl)).collect();
    out.extend(take_labeled(&mut solver, GameKind::Nim, nim, PlayConvention::Normal, spec.nim, spec.include_losing)?);

    let mut extra: Vec<(u32, u32)> = (2..=spec.fibonacci_max_remaining)
        .flat_map(|r| (1..r).map(move |c| (r, c)))
        .filter(|s| !FIBONACCI_TABLE_STATES.contains(s))
        .collect();
    extra.shuffle(&mut rng);
    let fib = FIBONACCI_TABLE_STATES
        .iter()
        .copied()
        .filter(|&(r, _)| r <= spec.fibonacci_max_remaining)
        .chain(extra)
        .map(|(r, c)| (fib_state(r, c), tl))
        .collect();
    out.extend(take_labeled(
        &mut solver,
        GameKind::Fibonacci,
        fib,
        PlayConvention::Normal,
        spec.fibonacci,
        spec.include_losing,
    )?);

    // Half single rows, half two-row splits.
    let max = spec.kayles_max_pins;
    let mut singles: Vec<Vec<usize>> = (3..=max).map(|n| vec![n]).collect();
    let mut pairs: Vec<Vec<usize>> =
        (1..=max).flat_map(|a| (a..=max - a).map(move |b| vec![a, b])).collect();
    singles.shuffle(&mut rng);
    pairs.shuffle(&mut rng);
    let n_single = spec.kayles / 2;
    let as_states = |rows: Vec<Vec<usize>>| rows.into_iter().map(|r| (GameState::kayles_rows(&r), tl)).collect();
    let mut kayles = take_labeled(
        &mut solver,
        GameKind::Kayles,
        as_states(singles),
        PlayConvention::Normal,
        n_single,
        spec.include_losing,
    )?;
    kayles.extend(take_labeled(
        &mut solver,
        GameKind::Kayles,
        as_states(pairs),
        PlayConvention::Normal,
        spec.kayles - n_single,
        spec.include_losing,
    )?);
    for (i, s) in kayles.iter_mut().enumerate() {
        s.sample_id = format!("kayles-{i:03}");
    }
    out.extend(kayles);

    out.extend(chomp_split(spec, &mut rng)?);
    Ok(out)
}

/// Every full square in range once; any remaining slots repeat small
/// squares under a different display orientation.
fn chomp_split(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Result<Vec<SampleRecord>, DatasetError> {
    let mut sides: Vec<(u32, ChompOrientation)> =
        (spec.chomp_min_side..=spec.chomp_max_side).map(|n| (n, ChompOrientation::TopLeft)).collect();
    sides.truncate(spec.chomp);
    let mut small: Vec<u32> =
        (spec.chomp_min_side..=spec.chomp_exhaustive_max.min(spec.chomp_max_side)).collect();
    small.shuffle(rng);
    let others = [ChompOrientation::TopRight, ChompOrientation::BottomLeft, ChompOrientation::BottomRight];
    let missing = spec.chomp - sides.len();
    if missing > small.len() * others.len() {
        return Err(DatasetError::NotEnoughStates {
            game: GameKind::Chomp,
            wanted: spec.chomp,
            available: sides.len() + small.len() * others.len(),
        });
    }
    for k in 0..missing {
        let o = *others.choose(rng).expect("nonempty");
        sides.push((small[k % small.len()], o));
    }

    let mut solver = Solver::default();
    let mut out = Vec::new();
    for (i, (n, orientation)) in sides.into_iter().enumerate() {
        let id = format!("chomp-{i:03}");
        let state = GameState::chomp_full(n, n);
        if n <= spec.chomp_exhaustive_max {
            out.push(label(&mut solver, id, state, PlayConvention::Poison, orientation)?);
        } else {
            out.push(SampleRecord {
                sample_id: id,
                game: GameKind::Chomp,
                variant: "Normal".into(),
                legal_actions: state.legal_moves(),
                state,
                convention: PlayConvention::Poison,
                optimal_actions: vec![closed_form::chomp_square_opening(n)],
                losing_position: false,
                label_method: LabelMethod::Symmetry,
                display_orientation: orientation,
            });
        }
    }
    Ok(out)
}

pub fn dataset_jsonl(samples: &[SampleRecord]) -> String {
    store::to_jsonl(samples)
}

pub fn dataset_hash(samples: &[SampleRecord]) -> String {
    store::sha256_hex(dataset_jsonl(samples).as_bytes())
}

/// Successor check for an exhaustive label: listed moves reach Loss
/// positions, every other legal move reaches a Win position.
pub fn cross_check(solver: &mut Solver, sample: &SampleRecord) -> Result<(), String> {
    if sample.label_method != LabelMethod::Exhaustive {
        return Ok(());
    }
    if sample.optimal_actions.is_empty() {
        return Err(format!("{}: no optimal actions", sample.sample_id));
    }
    for mv in &sample.legal_actions {
        let next = sample.state.apply(mv).map_err(|e| e.to_string())?;
        let child = solver.label_minimax(&next, sample.convention).map_err(|e| e.to_string())?;
        let listed = sample.optimal_actions.contains(mv);
        let expect_loss = listed && !sample.losing_position;
        if (child == PositionLabel::Loss) != expect_loss {
            return Err(format!("{}: move {mv} leads to {child:?} but listed={listed}", sample.sample_id));
        }
    }
    if sample.losing_position && !sample.legal_actions.contains(&sample.optimal_actions[0]) {
        return Err(format!("{}: fallback is not legal", sample.sample_id));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub repeat: u32,
    pub chosen: Option<Move>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameAccuracy {
    pub game: GameKind,
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation across repeats; 0 for a single repeat.
    pub std: f64,
    pub per_repeat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub agent: String,
    pub n_repeats: u32,
    pub seed: u64,
    pub dataset_hash: String,
    pub per_game: Vec<GameAccuracy>,
    pub n_failures: usize,
    pub outcomes: Vec<SampleOutcome>,
}

impl AccuracyReport {
    pub fn game(&self, game: GameKind) -> Option<&GameAccuracy> {
        self.per_game.iter().find(|g| g.game == game)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Poses every sample once per repeat. Sample `i` of repeat `r` gets agent
/// seed `derive(derive(seed, r), i)`; failures score as incorrect.
pub fn evaluate(
    spec: &AgentSpec,
    dataset: &[SampleRecord],
    n_repeats: u32,
    seed: u64,
    resources: &AgentResources,
) -> Result<AccuracyReport, DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    if spec.needs_backend() && resources.backend.is_none() {
        return Err(MissingBackend(spec.label()).into());
    }
    let tasks: Vec<(u32, usize)> = (0..n_repeats.max(1)).flat_map(|r| (0..dataset.len()).map(move |i| (r, i))).collect();
    let outcomes: Vec<SampleOutcome> = tasks
        .par_iter()
        .map(|&(r, i)| {
            let sample = &dataset[i];
            let agent_seed = seeds::derive(seeds::derive(seed, r as u64), i as u64);
            let result = build_agent(spec, resources, agent_seed).map_err(|e| e.to_string()).and_then(|mut a| {
                let mut obs = Observation::new(sample.state.clone(), sample.convention);
                obs.orientation = sample.display_orientation;
                obs.game_config_ref = sample.sample_id.clone();
                a.choose(&obs).map_err(|e: AgentError| e.to_string())
            });
            match result {
                Ok(d) => SampleOutcome {
                    sample_id: sample.sample_id.clone(),
                    repeat: r,
                    chosen: Some(d.mv),
                    correct: sample.optimal_actions.contains(&d.mv),
                    failure: None,
                },
                Err(e) => SampleOutcome { sample_id: sample.sample_id.clone(), repeat: r, chosen: None, correct: false, failure: Some(e) },
            }
        })
        .collect();

    let n_rep = n_repeats.max(1) as usize;
    let mut games: BTreeMap<GameKind, (usize, Vec<usize>)> = BTreeMap::new();
    for s in dataset {
        games.entry(s.game).or_insert_with(|| (0, vec![0; n_rep])).0 += 1;
    }
    for (o, &(r, i)) in outcomes.iter().zip(&tasks) {
        if o.correct {
            games.get_mut(&dataset[i].game).expect("game present").1[r as usize] += 1;
        }
    }
    let per_game = games
        .into_iter()
        .map(|(game, (n, hits))| {
            let per_repeat: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
            let (mean, std) = mean_std(&per_repeat);
            GameAccuracy { game, n_samples: n, mean, std, per_repeat }
        })
        .collect();
    Ok(AccuracyReport {
        agent: spec.label(),
        n_repeats: n_rep as u32,
        seed,
        dataset_hash: dataset_hash(dataset),
        per_game,
        n_failures: outcomes.iter().filter(|o| o.failure.is_some()).count(),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec { chomp_max_side: 9, chomp: 10, ..DatasetSpec::default() }
    }

    #[test]
    fn counts_and_exclusions() {
        let d = generate_dataset(&small_spec()).unwrap();
        let count = |g| d.iter().filter(|s| s.game == g).count();
        assert_eq!((count(GameKind::Nim), count(GameKind::Fibonacci), count(GameKind::Kayles), count(GameKind::Chomp)), (20, 11, 18, 10));
        for s in &d {
            assert!(!s.losing_position);
            assert!(s.optimal_actions.iter().all(|m| s.legal_actions.contains(m)));
            if let GameState::Nim(n) = &s.state {
                assert_ne!(n.piles[0] % 4, 0);
            }
        }
        let first_fib = d.iter().find(|s| s.game == GameKind::Fibonacci).unwrap();
        assert_eq!(first_fib.state, GameState::fibonacci_opening(20));
        assert!(first_fib.optimal_actions.contains(&Move::Fibonacci { count: 2 }));
        let ids: std::collections::HashSet<_> = d.iter().map(|s| &s.sample_id).collect();
        assert_eq!(ids.len(), d.len());
    }

    #[test]
    fn generation_is_reproducible() {
        let a = dataset_jsonl(&generate_dataset(&small_spec()).unwrap());
        let b = dataset_jsonl(&generate_dataset(&small_spec()).unwrap());
        assert_eq!(a, b);
        let c = dataset_jsonl(&generate_dataset(&DatasetSpec { seed: 1, ..small_spec() }).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn include_losing_keeps_fallback() {
        let spec = DatasetSpec { include_losing: true, nim: 30, ..small_spec() };
        let d = generate_dataset(&spec).unwrap();
        let losing: Vec<_> = d.iter().filter(|s| s.losing_position).collect();
        assert!(losing.iter().any(|s| s.game == GameKind::Nim));
        let mut solver = Solver::default();
        for s in &d {
            cross_check(&mut solver, s).unwrap();
        }
    }

    #[test]
    fn symmetry_labels_above_threshold() {
        let d = generate_dataset(&small_spec()).unwrap();
        for s in d.iter().filter(|s| s.game == GameKind::Chomp) {
            let GameState::Chomp(c) = &s.state else { unreachable!() };
            let method = if c.n_rows > 7 { LabelMethod::Symmetry } else { LabelMethod::Exhaustive };
            assert_eq!(s.label_method, method);
        }
    }

    #[test]
    fn oracle_scores_one() {
        let d = generate_dataset(&small_spec()).unwrap();
        let r = evaluate(&AgentSpec::Oracle, &d, 2, 0, &AgentResources::offline()).unwrap();
        for g in &r.per_game {
            assert_eq!((g.mean, g.std), (1.0, 0.0), "{:?}", g.game);
        }
    }

    #[test]
    fn mean_std_matches_hand_values() {
        assert_eq!(mean_std(&[1.0]), (1.0, 0.0));
        let (m, s) = mean_std(&[0.9, 1.0, 1.1]);
        assert!((m - 1.0).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
    }
}
