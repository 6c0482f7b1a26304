//! Exact game-value oracles.
//!
//! Ground truth is full enumeration: [`Solver::grundy`] computes memoized mex
//! values per independent component and combines them with XOR, and
//! [`Solver::label_minimax`] labels positions Win/Loss for any convention.
//! The closed forms in [`closed_form`] are accelerators that are checked
//! against these, never used in their place.

pub mod closed_form;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameState, Move, PlayConvention};

pub use closed_form::{
    chomp_square_opening, fibonacci_numbers, fibonacci_optimal_opening, is_fibonacci,
    kayles_audit, kayles_grundy_sequence, nim_pile_grundy, nim_sum, zeckendorf, KaylesAudit,
};

/// Memoized states before giving up.
pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

/// A nimber. Zero marks a loss for the player to move under normal play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GrundyValue(pub u32);

impl GrundyValue {
    pub fn is_losing(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Display for GrundyValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Outcome class for the player to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionLabel {
    Win,
    Loss,
}

/// Result of asking for the best moves from a position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OptimalPlay {
    /// Every move that leaves the opponent in a losing position.
    Winning { moves: Vec<Move> },
    /// No winning move exists; `fallback` is the first legal move in sort order.
    Losing { fallback: Move },
}

impl OptimalPlay {
    pub fn moves(&self) -> &[Move] {
        match self {
            OptimalPlay::Winning { moves } => moves,
            OptimalPlay::Losing { fallback } => std::slice::from_ref(fallback),
        }
    }

    pub fn is_losing(&self) -> bool {
        matches!(self, OptimalPlay::Losing { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("state space budget of {budget} nodes exhausted")]
    StateSpaceBudgetExceeded { budget: usize },
    #[error("grundy values are only defined for normal play, not {0}")]
    NotNormalPlay(PlayConvention),
    #[error("position is terminal; there is no move to choose")]
    Terminal,
}

/// Smallest nonnegative integer not in `values`.
pub fn mex<I: IntoIterator<Item = u32>>(values: I) -> u32 {
    let mut seen: Vec<bool> = Vec::new();
    for v in values {
        let v = v as usize;
        if v >= seen.len() {
            seen.resize(v + 1, false);
        }
        seen[v] = true;
    }
    seen.iter().position(|s| !s).unwrap_or(seen.len()) as u32
}

/// XOR of component values (disjunctive sum).
pub fn grundy_sum<I: IntoIterator<Item = GrundyValue>>(components: I) -> GrundyValue {
    GrundyValue(components.into_iter().fold(0, |acc, g| acc ^ g.0))
}

/// Splits a state into independent subgames: one per Nim pile, one per
/// maximal run of standing Kayles pins. Fibonacci and Chomp are indivisible.
pub fn decompose(state: &GameState) -> Vec<GameState> {
    match state {
        GameState::Nim(s) => s.piles.iter().map(|&p| GameState::nim(&[p], s.max_take)).collect(),
        GameState::Kayles(s) => s
            .rows
            .iter()
            .flat_map(|row| row.runs())
            .map(|len| GameState::kayles_rows(&[len]))
            .collect(),
        other => vec![other.clone()],
    }
}

/// Independent subgame key for Grundy memoization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Component {
    NimPile { size: u32, max_take: u32 },
    Fib { remaining: u32, cap: u32 },
    KaylesRun(u32),
    Chomp(Vec<u8>),
}

impl Component {
    fn successors(&self) -> Vec<Successor> {
        match self {
            Component::NimPile { size, max_take } => (1..=(*max_take).min(*size))
                .map(|t| Successor::One(Component::NimPile { size: size - t, max_take: *max_take }))
                .collect(),
            Component::Fib { remaining, cap } => (1..=(*cap).min(*remaining))
                .map(|t| {
                    let r = remaining - t;
                    Successor::One(Component::Fib { remaining: r, cap: (2 * t).min(r) })
                })
                .collect(),
            Component::KaylesRun(n) => {
                let n = *n;
                let mut out = Vec::new();
                for k in 1..=2u32.min(n) {
                    // Knocking k pins leaves a + b = n - k split on either side.
                    for a in 0..=(n - k) {
                        let b = n - k - a;
                        if a > b {
                            break;
                        }
                        out.push(Successor::Pair(Component::KaylesRun(a), Component::KaylesRun(b)));
                    }
                }
                out
            }
            Component::Chomp(h) => chomp_successors(h).into_iter().map(Successor::One).collect(),
        }
    }
}

enum Successor {
    One(Component),
    Pair(Component, Component),
}

fn trim_heights(mut h: Vec<u8>) -> Vec<u8> {
    while h.last() == Some(&0) {
        h.pop();
    }
    h
}

fn chomp_successors(h: &[u8]) -> Vec<Component> {
    let mut out = Vec::new();
    for col in 0..h.len() {
        for row in 0..h[col] {
            if row == 0 && col == 0 {
                continue;
            }
            let mut next = h.to_vec();
            for x in &mut next[col..] {
                *x = (*x).min(row);
            }
            out.push(Component::Chomp(trim_heights(next)));
        }
    }
    out
}

/// Canonical whole-position key for minimax. Equivalent positions (pile or
/// run order, trailing empty Chomp columns) share a key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Position {
    Nim { piles: Vec<u32>, max_take: u32 },
    Fib { remaining: u32, cap: u32 },
    Kayles(Vec<u32>),
    Chomp(Vec<u8>),
}

impl Position {
    fn of(state: &GameState) -> Position {
        match state {
            GameState::Nim(s) => {
                let mut piles: Vec<u32> = s.piles.iter().copied().filter(|&p| p > 0).collect();
                piles.sort_unstable();
                Position::Nim { piles, max_take: s.max_take }
            }
            GameState::Fibonacci(s) => {
                Position::Fib { remaining: s.remaining, cap: s.take_cap.min(s.remaining) }
            }
            GameState::Kayles(s) => {
                let mut runs: Vec<u32> =
                    s.rows.iter().flat_map(|r| r.runs()).map(|n| n as u32).collect();
                runs.sort_unstable();
                Position::Kayles(runs)
            }
            GameState::Chomp(s) => {
                Position::Chomp(trim_heights(s.col_heights.iter().map(|&h| h as u8).collect()))
            }
        }
    }

    fn successors(&self) -> Vec<Position> {
        match self {
            Position::Nim { piles, max_take } => {
                let mut out = Vec::new();
                for i in 0..piles.len() {
                    if i > 0 && piles[i] == piles[i - 1] {
                        continue;
                    }
                    for t in 1..=(*max_take).min(piles[i]) {
                        let mut next = piles.clone();
                        next[i] -= t;
                        next.retain(|&p| p > 0);
                        next.sort_unstable();
                        out.push(Position::Nim { piles: next, max_take: *max_take });
                    }
                }
                out
            }
            Position::Fib { remaining, cap } => (1..=(*cap).min(*remaining))
                .map(|t| {
                    let r = remaining - t;
                    Position::Fib { remaining: r, cap: (2 * t).min(r) }
                })
                .collect(),
            Position::Kayles(runs) => {
                let mut out = Vec::new();
                for i in 0..runs.len() {
                    if i > 0 && runs[i] == runs[i - 1] {
                        continue;
                    }
                    let n = runs[i];
                    for k in 1..=2u32.min(n) {
                        for a in 0..=(n - k) {
                            let b = n - k - a;
                            if a > b {
                                break;
                            }
                            let mut next: Vec<u32> = runs
                                .iter()
                                .enumerate()
                                .filter(|&(j, _)| j != i)
                                .map(|(_, &r)| r)
                                .collect();
                            next.extend([a, b].into_iter().filter(|&x| x > 0));
                            next.sort_unstable();
                            out.push(Position::Kayles(next));
                        }
                    }
                }
                out
            }
            Position::Chomp(h) => chomp_successors(h)
                .into_iter()
                .map(|c| match c {
                    Component::Chomp(h) => Position::Chomp(h),
                    _ => unreachable!(),
                })
                .collect(),
        }
    }
}

/// Memoizing solver. Instances are cheap; create one per worker.
#[derive(Debug)]
pub struct Solver {
    budget: usize,
    grundy_table: HashMap<Component, u32>,
    label_table: HashMap<(Position, PlayConvention), bool>,
    kayles_runs: Vec<u32>,
}

impl Default for Solver {
    fn default() -> Self {
        Solver::new(DEFAULT_NODE_BUDGET)
    }
}

impl Solver {
    pub fn new(budget: usize) -> Self {
        Solver {
            budget,
            grundy_table: HashMap::new(),
            label_table: HashMap::new(),
            kayles_runs: vec![0],
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Number of memoized entries across both transposition tables.
    pub fn nodes(&self) -> usize {
        self.grundy_table.len() + self.label_table.len() + self.kayles_runs.len()
    }

    pub fn clear(&mut self) {
        self.grundy_table.clear();
        self.label_table.clear();
        self.kayles_runs = vec![0];
    }

    fn check_budget(&self) -> Result<(), SolveError> {
        if self.nodes() > self.budget {
            Err(SolveError::StateSpaceBudgetExceeded { budget: self.budget })
        } else {
            Ok(())
        }
    }

    /// Grundy value of a normal-play position (Chomp's poison rule is normal
    /// play on the grid without the poison cell, so it is accepted too).
    pub fn grundy(&mut self, state: &GameState) -> Result<GrundyValue, SolveError> {
        let mut acc = 0;
        match state {
            GameState::Nim(s) => {
                for &p in &s.piles {
                    acc ^= self.component_grundy(Component::NimPile { size: p, max_take: s.max_take })?;
                }
            }
            GameState::Fibonacci(s) => {
                acc = self.component_grundy(Component::Fib {
                    remaining: s.remaining,
                    cap: s.take_cap.min(s.remaining),
                })?;
            }
            GameState::Kayles(s) => {
                for row in &s.rows {
                    for run in row.runs() {
                        acc ^= self.kayles_run_grundy(run as u32)?;
                    }
                }
            }
            GameState::Chomp(s) => {
                let h = trim_heights(s.col_heights.iter().map(|&h| h as u8).collect());
                acc = self.component_grundy(Component::Chomp(h))?;
            }
        }
        Ok(GrundyValue(acc))
    }

    /// Grundy value under an explicit convention; errors for misère.
    pub fn grundy_for(
        &mut self,
        state: &GameState,
        convention: PlayConvention,
    ) -> Result<GrundyValue, SolveError> {
        match convention {
            PlayConvention::Misere => Err(SolveError::NotNormalPlay(convention)),
            _ => self.grundy(state),
        }
    }

    /// Grundy values of single Kayles rows `0..=n`, by full enumeration of
    /// end, interior and pair removals.
    pub fn kayles_sequence(&mut self, n: u32) -> Result<Vec<u32>, SolveError> {
        self.kayles_run_grundy(n)?;
        Ok(self.kayles_runs[..=n as usize].to_vec())
    }

    fn kayles_run_grundy(&mut self, n: u32) -> Result<u32, SolveError> {
        while self.kayles_runs.len() <= n as usize {
            let len = self.kayles_runs.len() as u32;
            let values: Vec<u32> = Component::KaylesRun(len)
                .successors()
                .into_iter()
                .map(|s| match s {
                    Successor::Pair(Component::KaylesRun(a), Component::KaylesRun(b)) => {
                        self.kayles_runs[a as usize] ^ self.kayles_runs[b as usize]
                    }
                    _ => unreachable!(),
                })
                .collect();
            self.kayles_runs.push(mex(values));
            self.check_budget()?;
        }
        Ok(self.kayles_runs[n as usize])
    }

    /// Iterative memoized mex evaluation; avoids deep recursion on long piles.
    fn component_grundy(&mut self, root: Component) -> Result<u32, SolveError> {
        if let Component::KaylesRun(n) = root {
            return self.kayles_run_grundy(n);
        }
        if let Some(&g) = self.grundy_table.get(&root) {
            return Ok(g);
        }
        let mut stack: Vec<(Component, Vec<Component>)> = Vec::new();
        let children = single_successors(&root);
        stack.push((root.clone(), children));
        while let Some((_, children)) = stack.last() {
            if let Some(missing) = children.iter().find(|c| !self.grundy_table.contains_key(*c)) {
                let missing = missing.clone();
                let grandchildren = single_successors(&missing);
                stack.push((missing, grandchildren));
                continue;
            }
            let (node, children) = stack.pop().expect("stack is nonempty");
            let g = mex(children.iter().map(|c| self.grundy_table[c]));
            self.grundy_table.insert(node, g);
            self.check_budget()?;
        }
        Ok(self.grundy_table[&root])
    }

    /// Win/Loss label for the player to move, by memoized minimax.
    pub fn label_minimax(
        &mut self,
        state: &GameState,
        convention: PlayConvention,
    ) -> Result<PositionLabel, SolveError> {
        let win = self.position_wins(Position::of(state), convention)?;
        Ok(if win { PositionLabel::Win } else { PositionLabel::Loss })
    }

    fn terminal_wins(convention: PlayConvention) -> bool {
        // At a terminal position the mover has no move. Under misère the
        // previous player took the last object and lost.
        matches!(convention, PlayConvention::Misere)
    }

    fn position_wins(&mut self, root: Position, convention: PlayConvention) -> Result<bool, SolveError> {
        if let Some(&w) = self.label_table.get(&(root.clone(), convention)) {
            return Ok(w);
        }
        struct Frame {
            pos: Position,
            children: Vec<Position>,
            next: usize,
        }
        let children = root.successors();
        let mut stack = vec![Frame { pos: root.clone(), children, next: 0 }];
        while let Some(frame) = stack.last_mut() {
            if frame.children.is_empty() {
                let frame = stack.pop().expect("nonempty");
                self.label_table.insert((frame.pos, convention), Self::terminal_wins(convention));
                self.check_budget()?;
                continue;
            }
            let mut resolved = None;
            let mut descend = None;
            while frame.next < frame.children.len() {
                let child = &frame.children[frame.next];
                match self.label_table.get(&(child.clone(), convention)) {
                    Some(false) => {
                        resolved = Some(true);
                        break;
                    }
                    Some(true) => frame.next += 1,
                    None => {
                        descend = Some(child.clone());
                        break;
                    }
                }
            }
            if let Some(child) = descend {
                let children = child.successors();
                stack.push(Frame { pos: child, children, next: 0 });
                continue;
            }
            let wins = resolved.unwrap_or(false);
            let frame = stack.pop().expect("nonempty");
            self.label_table.insert((frame.pos, convention), wins);
            self.check_budget()?;
        }
        Ok(self.label_table[&(root, convention)])
    }

    /// All moves to losing successors, or the fallback when none exist.
    /// Normal play goes through Grundy values (with decomposition); misère
    /// and poison go through minimax labels.
    pub fn optimal_moves(
        &mut self,
        state: &GameState,
        convention: PlayConvention,
    ) -> Result<OptimalPlay, SolveError> {
        let legal = state.legal_moves();
        let Some(&fallback) = legal.first() else {
            return Err(SolveError::Terminal);
        };
        let mut winning = Vec::new();
        for mv in legal {
            let next = state.apply(&mv).expect("generated moves are legal");
            let losing_for_opponent = match convention {
                PlayConvention::Normal => self.grundy(&next)?.is_losing(),
                _ => self.label_minimax(&next, convention)? == PositionLabel::Loss,
            };
            if losing_for_opponent {
                winning.push(mv);
            }
        }
        if winning.is_empty() {
            Ok(OptimalPlay::Losing { fallback })
        } else {
            Ok(OptimalPlay::Winning { moves: winning })
        }
    }
}

fn single_successors(c: &Component) -> Vec<Component> {
    c.successors()
        .into_iter()
        .map(|s| match s {
            Successor::One(c) => c,
            Successor::Pair(..) => unreachable!("pairs only arise for kayles runs"),
        })
        .collect()
}
