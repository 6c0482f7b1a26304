//! Rules engines for single/multi-pile Nim, Fibonacci Nim, Kayles and Chomp.
//!
//! States are plain values. Every operation is pure, so states can be shared
//! freely between worker threads. Legal moves are always produced in a fixed
//! sorted order so that anything sampling from them is reproducible.

mod text;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use text::{
    parse_chomp, parse_fibonacci, parse_kayles, parse_nim, render_chomp, render_kayles,
    ChompOrientation, ParseError,
};

/// Which of the four games a state or move belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Nim,
    Fibonacci,
    Kayles,
    Chomp,
}

impl GameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GameKind::Nim => "nim",
            GameKind::Fibonacci => "fibonacci",
            GameKind::Kayles => "kayles",
            GameKind::Chomp => "chomp",
        }
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GameKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nim" => Ok(GameKind::Nim),
            "fibonacci" | "fib" => Ok(GameKind::Fibonacci),
            "kayles" => Ok(GameKind::Kayles),
            "chomp" => Ok(GameKind::Chomp),
            other => Err(format!("unknown game `{other}`")),
        }
    }
}

/// How the end of the game is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayConvention {
    /// The player who makes the last move wins.
    Normal,
    /// The player who makes the last move loses.
    Misere,
    /// The player forced to take the poison cell loses.
    Poison,
}

impl PlayConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            PlayConvention::Normal => "normal",
            PlayConvention::Misere => "misere",
            PlayConvention::Poison => "poison",
        }
    }
}

impl fmt::Display for PlayConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PlayConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(PlayConvention::Normal),
            "misere" | "misère" => Ok(PlayConvention::Misere),
            "poison" => Ok(PlayConvention::Poison),
            other => Err(format!("unknown convention `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NimState {
    pub piles: Vec<u32>,
    pub max_take: u32,
}

/// Fibonacci Nim: one pile, and the next mover may take between 1 and
/// `take_cap` stones. The opening cap is `remaining - 1`; afterwards it is
/// twice the previous take, clamped to what is left.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FibState {
    pub remaining: u32,
    pub take_cap: u32,
}

impl FibState {
    pub fn opening(remaining: u32) -> Self {
        FibState { remaining, take_cap: remaining.saturating_sub(1) }
    }

    pub fn is_opening_shape(&self) -> bool {
        self.take_cap + 1 == self.remaining
    }
}

/// One row of Kayles pins, `true` meaning the pin is still standing.
///
/// Serialized as a binary string (`"11011"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PinRow(pub Vec<bool>);

impl PinRow {
    pub fn full(len: usize) -> Self {
        PinRow(vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn standing(&self) -> usize {
        self.0.iter().filter(|p| **p).count()
    }

    /// Lengths of maximal runs of standing pins, left to right.
    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = 0;
        for &pin in &self.0 {
            if pin {
                current += 1;
            } else if current > 0 {
                runs.push(current);
                current = 0;
            }
        }
        if current > 0 {
            runs.push(current);
        }
        runs
    }

    pub fn to_bits(&self) -> String {
        self.0.iter().map(|p| if *p { '1' } else { '0' }).collect()
    }
}

impl Serialize for PinRow {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bits())
    }
}

impl<'de> Deserialize<'de> for PinRow {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(serde::de::Error::custom(format!("invalid pin character `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(PinRow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KaylesState {
    pub rows: Vec<PinRow>,
}

impl KaylesState {
    pub fn single(len: usize) -> Self {
        KaylesState { rows: vec![PinRow::full(len)] }
    }

    pub fn from_rows(lens: &[usize]) -> Self {
        KaylesState { rows: lens.iter().map(|&n| PinRow::full(n)).collect() }
    }
}

/// Chomp in canonical orientation: the poison cell is `(0, 0)` and column `c`
/// holds cells `(0..col_heights[c], c)`. Heights are nonincreasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChompState {
    pub col_heights: Vec<u32>,
    pub n_rows: u32,
    pub n_cols: u32,
}

impl ChompState {
    pub fn full(n_rows: u32, n_cols: u32) -> Self {
        ChompState { col_heights: vec![n_rows; n_cols as usize], n_rows, n_cols }
    }

    pub fn contains(&self, row: u32, col: u32) -> bool {
        self.col_heights.get(col as usize).is_some_and(|&h| row < h)
    }

    pub fn cells(&self) -> u32 {
        self.col_heights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum GameState {
    Nim(NimState),
    Fibonacci(FibState),
    Kayles(KaylesState),
    Chomp(ChompState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum Move {
    Nim { pile: usize, count: u32 },
    Fibonacci { count: u32 },
    /// Knock down `length` (1 or 2) adjacent pins starting at `start`.
    Kayles { row: usize, start: usize, length: u8 },
    /// Bite at canonical `(row, col)`, removing every cell `(r >= row, c >= col)`.
    Chomp { row: u32, col: u32 },
}

impl Move {
    pub fn kind(&self) -> GameKind {
        match self {
            Move::Nim { .. } => GameKind::Nim,
            Move::Fibonacci { .. } => GameKind::Fibonacci,
            Move::Kayles { .. } => GameKind::Kayles,
            Move::Chomp { .. } => GameKind::Chomp,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Move::Nim { pile, count } => write!(f, "take {count} from pile {pile}"),
            Move::Fibonacci { count } => write!(f, "take {count}"),
            Move::Kayles { row, start, length: 1 } => write!(f, "knock pin {start} in row {row}"),
            Move::Kayles { row, start, length } => {
                write!(f, "knock pins {start}-{} in row {row}", start + length as usize - 1)
            }
            Move::Chomp { row, col } => write!(f, "bite ({row}, {col})"),
        }
    }
}

/// The seat that moved last or is about to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    PreviousMover,
    PlayerToMove,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("illegal move {mv} in state {state}")]
    IllegalMove { mv: String, state: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("convention {convention} is not used by {game}")]
    IncompatibleConvention { game: GameKind, convention: PlayConvention },
}

impl GameState {
    pub fn kind(&self) -> GameKind {
        match self {
            GameState::Nim(_) => GameKind::Nim,
            GameState::Fibonacci(_) => GameKind::Fibonacci,
            GameState::Kayles(_) => GameKind::Kayles,
            GameState::Chomp(_) => GameKind::Chomp,
        }
    }

    pub fn nim(piles: &[u32], max_take: u32) -> Self {
        GameState::Nim(NimState { piles: piles.to_vec(), max_take })
    }

    pub fn fibonacci_opening(remaining: u32) -> Self {
        GameState::Fibonacci(FibState::opening(remaining))
    }

    pub fn fibonacci(remaining: u32, take_cap: u32) -> Self {
        GameState::Fibonacci(FibState { remaining, take_cap }).canonicalize()
    }

    pub fn kayles_rows(lens: &[usize]) -> Self {
        GameState::Kayles(KaylesState::from_rows(lens))
    }

    pub fn chomp_full(n_rows: u32, n_cols: u32) -> Self {
        GameState::Chomp(ChompState::full(n_rows, n_cols))
    }

    /// Checks the structural invariants of the state.
    pub fn validate(&self) -> Result<(), GameError> {
        match self {
            GameState::Nim(s) => {
                if s.max_take == 0 {
                    return Err(GameError::InvalidState("max_take must be at least 1".into()));
                }
                if s.piles.is_empty() {
                    return Err(GameError::InvalidState("nim needs at least one pile".into()));
                }
            }
            GameState::Fibonacci(s) => {
                if s.take_cap == 0 && s.remaining > 1 {
                    return Err(GameError::InvalidState("take_cap must be at least 1".into()));
                }
            }
            GameState::Kayles(s) => {
                if s.rows.is_empty() {
                    return Err(GameError::InvalidState("kayles needs at least one row".into()));
                }
            }
            GameState::Chomp(s) => {
                if s.col_heights.len() != s.n_cols as usize || s.n_cols == 0 {
                    return Err(GameError::InvalidState(
                        "column count does not match n_cols".into(),
                    ));
                }
                if s.col_heights[0] == 0 {
                    return Err(GameError::InvalidState("the poison cell is missing".into()));
                }
                if s.col_heights[0] > s.n_rows {
                    return Err(GameError::InvalidState("column taller than n_rows".into()));
                }
                if s.col_heights.windows(2).any(|w| w[1] > w[0]) {
                    return Err(GameError::InvalidState("column heights must be nonincreasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Normalizes representational slack: Fibonacci caps above the pile are
    /// clamped, Chomp heights are clipped to the grid and made nonincreasing.
    pub fn canonicalize(self) -> Self {
        match self {
            GameState::Fibonacci(mut s) => {
                s.take_cap = s.take_cap.min(s.remaining);
                GameState::Fibonacci(s)
            }
            GameState::Chomp(mut s) => {
                let mut ceiling = s.n_rows;
                for h in s.col_heights.iter_mut() {
                    *h = (*h).min(ceiling);
                    ceiling = *h;
                }
                GameState::Chomp(s)
            }
            other => other,
        }
    }

    pub fn supports(&self, convention: PlayConvention) -> bool {
        matches!(
            (self.kind(), convention),
            (GameKind::Nim, PlayConvention::Normal | PlayConvention::Misere)
                | (GameKind::Fibonacci, PlayConvention::Normal | PlayConvention::Misere)
                | (GameKind::Kayles, PlayConvention::Normal)
                | (GameKind::Chomp, PlayConvention::Poison)
        )
    }

    pub fn check_convention(&self, convention: PlayConvention) -> Result<(), GameError> {
        if self.supports(convention) {
            Ok(())
        } else {
            Err(GameError::IncompatibleConvention { game: self.kind(), convention })
        }
    }

    /// Total remaining material. Strictly decreases with every move.
    pub fn material(&self) -> u64 {
        match self {
            GameState::Nim(s) => s.piles.iter().map(|&p| p as u64).sum(),
            GameState::Fibonacci(s) => s.remaining as u64,
            GameState::Kayles(s) => s.rows.iter().map(|r| r.standing() as u64).sum(),
            GameState::Chomp(s) => s.cells() as u64,
        }
    }

    /// All legal moves in sorted order. Empty exactly when the state is terminal.
    pub fn legal_moves(&self) -> Vec<Move> {
        match self {
            GameState::Nim(s) => {
                let mut moves = Vec::new();
                for (pile, &n) in s.piles.iter().enumerate() {
                    for count in 1..=n.min(s.max_take) {
                        moves.push(Move::Nim { pile, count });
                    }
                }
                moves
            }
            GameState::Fibonacci(s) => {
                (1..=s.take_cap.min(s.remaining)).map(|count| Move::Fibonacci { count }).collect()
            }
            GameState::Kayles(s) => {
                let mut moves = Vec::new();
                for (row, pins) in s.rows.iter().enumerate() {
                    for start in 0..pins.len() {
                        if !pins.0[start] {
                            continue;
                        }
                        moves.push(Move::Kayles { row, start, length: 1 });
                        if start + 1 < pins.len() && pins.0[start + 1] {
                            moves.push(Move::Kayles { row, start, length: 2 });
                        }
                    }
                }
                moves
            }
            GameState::Chomp(s) => {
                let mut moves = Vec::new();
                for row in 0..s.n_rows {
                    for (col, &h) in s.col_heights.iter().enumerate() {
                        if row < h && (row, col) != (0, 0) {
                            moves.push(Move::Chomp { row, col: col as u32 });
                        }
                    }
                }
                moves
            }
        }
    }

    pub fn is_legal(&self, mv: &Move) -> bool {
        match (self, *mv) {
            (GameState::Nim(s), Move::Nim { pile, count }) => {
                count >= 1 && count <= s.max_take && s.piles.get(pile).is_some_and(|&n| count <= n)
            }
            (GameState::Fibonacci(s), Move::Fibonacci { count }) => {
                count >= 1 && count <= s.take_cap && count <= s.remaining
            }
            (GameState::Kayles(s), Move::Kayles { row, start, length }) => {
                let Some(pins) = s.rows.get(row) else { return false };
                (length == 1 || length == 2)
                    && start + length as usize <= pins.len()
                    && pins.0[start..start + length as usize].iter().all(|p| *p)
            }
            (GameState::Chomp(s), Move::Chomp { row, col }) => {
                (row, col) != (0, 0) && s.contains(row, col)
            }
            _ => false,
        }
    }

    /// Applies a legal move and returns the canonical successor.
    pub fn apply(&self, mv: &Move) -> Result<GameState, GameError> {
        if !self.is_legal(mv) {
            return Err(GameError::IllegalMove { mv: mv.to_string(), state: self.describe() });
        }
        let next = match (self, *mv) {
            (GameState::Nim(s), Move::Nim { pile, count }) => {
                let mut piles = s.piles.clone();
                piles[pile] -= count;
                GameState::Nim(NimState { piles, max_take: s.max_take })
            }
            (GameState::Fibonacci(s), Move::Fibonacci { count }) => {
                let remaining = s.remaining - count;
                GameState::Fibonacci(FibState {
                    remaining,
                    take_cap: (2 * count).min(remaining),
                })
            }
            (GameState::Kayles(s), Move::Kayles { row, start, length }) => {
                let mut rows = s.rows.clone();
                for pin in &mut rows[row].0[start..start + length as usize] {
                    *pin = false;
                }
                GameState::Kayles(KaylesState { rows })
            }
            (GameState::Chomp(s), Move::Chomp { row, col }) => {
                let mut col_heights = s.col_heights.clone();
                for h in &mut col_heights[col as usize..] {
                    *h = (*h).min(row);
                }
                GameState::Chomp(ChompState { col_heights, n_rows: s.n_rows, n_cols: s.n_cols })
            }
            _ => unreachable!("legality check covers mismatched kinds"),
        };
        Ok(next)
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            GameState::Nim(s) => s.piles.iter().all(|&p| p == 0),
            GameState::Fibonacci(s) => s.remaining == 0 || s.take_cap == 0,
            GameState::Kayles(s) => s.rows.iter().all(|r| r.standing() == 0),
            GameState::Chomp(s) => s.cells() <= 1,
        }
    }

    /// Who wins once a terminal state is reached.
    pub fn terminal_winner(&self, convention: PlayConvention) -> Option<Winner> {
        if !self.is_terminal() {
            return None;
        }
        Some(match convention {
            PlayConvention::Normal | PlayConvention::Poison => Winner::PreviousMover,
            PlayConvention::Misere => Winner::PlayerToMove,
        })
    }

    /// Compact one-line description, used in error messages and logs.
    pub fn describe(&self) -> String {
        match self {
            GameState::Nim(s) => {
                let piles: Vec<String> = s.piles.iter().map(u32::to_string).collect();
                format!("nim[{}] max {}", piles.join(","), s.max_take)
            }
            GameState::Fibonacci(s) => format!("fibonacci({}, {})", s.remaining, s.take_cap),
            GameState::Kayles(s) => format!("kayles {}", render_kayles(s)),
            GameState::Chomp(s) => {
                let h: Vec<String> = s.col_heights.iter().map(u32::to_string).collect();
                format!("chomp {}x{} heights [{}]", s.n_rows, s.n_cols, h.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nim_single_pile_moves() {
        let s = GameState::nim(&[5], 3);
        assert_eq!(
            s.legal_moves(),
            vec![
                Move::Nim { pile: 0, count: 1 },
                Move::Nim { pile: 0, count: 2 },
                Move::Nim { pile: 0, count: 3 }
            ]
        );
    }

    #[test]
    fn fibonacci_opening_moves() {
        let s = GameState::fibonacci_opening(20);
        let moves = s.legal_moves();
        assert_eq!(moves.len(), 19);
        assert_eq!(moves[0], Move::Fibonacci { count: 1 });
        assert_eq!(moves[18], Move::Fibonacci { count: 19 });
    }

    #[test]
    fn kayles_three_pin_moves() {
        let s = GameState::kayles_rows(&[3]);
        let moves = s.legal_moves();
        assert_eq!(moves.len(), 5);
        assert!(moves.contains(&Move::Kayles { row: 0, start: 0, length: 2 }));
        assert!(moves.contains(&Move::Kayles { row: 0, start: 1, length: 2 }));
        assert!(!moves.contains(&Move::Kayles { row: 0, start: 2, length: 2 }));
    }

    #[test]
    fn fibonacci_take_two_from_twenty() {
        let s = GameState::fibonacci_opening(20);
        let next = s.apply(&Move::Fibonacci { count: 2 }).unwrap();
        assert_eq!(next, GameState::Fibonacci(FibState { remaining: 18, take_cap: 4 }));
    }

    #[test]
    fn fibonacci_cap_clamps_to_remaining() {
        let s = GameState::fibonacci(10, 8);
        let next = s.apply(&Move::Fibonacci { count: 7 }).unwrap();
        assert_eq!(next, GameState::Fibonacci(FibState { remaining: 3, take_cap: 3 }));
    }

    #[test]
    fn nim_heap_example() {
        let s = GameState::nim(&[3, 4, 5], 5);
        let next = s.apply(&Move::Nim { pile: 2, count: 2 }).unwrap();
        assert_eq!(next, GameState::nim(&[3, 4, 3], 5));
    }

    #[test]
    fn chomp_bite_removes_upper_right_block() {
        let s = GameState::chomp_full(2, 3);
        let next = s.apply(&Move::Chomp { row: 1, col: 1 }).unwrap();
        let GameState::Chomp(c) = next else { panic!() };
        assert_eq!(c.col_heights, vec![2, 1, 1]);
        assert_eq!(c.cells(), 4);
    }

    #[test]
    fn illegal_moves_are_rejected() {
        let s = GameState::nim(&[2], 3);
        assert!(matches!(
            s.apply(&Move::Nim { pile: 0, count: 3 }),
            Err(GameError::IllegalMove { .. })
        ));
        let c = GameState::chomp_full(2, 2);
        assert!(c.apply(&Move::Chomp { row: 0, col: 0 }).is_err());
        assert!(c.apply(&Move::Fibonacci { count: 1 }).is_err());
    }

    #[test]
    fn terminal_outcomes() {
        let empty = GameState::nim(&[0], 3);
        assert!(empty.is_terminal());
        assert_eq!(empty.terminal_winner(PlayConvention::Normal), Some(Winner::PreviousMover));
        assert_eq!(empty.terminal_winner(PlayConvention::Misere), Some(Winner::PlayerToMove));

        let poison_only = GameState::Chomp(ChompState { col_heights: vec![1, 0], n_rows: 2, n_cols: 2 });
        assert!(poison_only.is_terminal());
        assert!(poison_only.legal_moves().is_empty());
        assert_eq!(poison_only.terminal_winner(PlayConvention::Poison), Some(Winner::PreviousMover));
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let s = GameState::Chomp(ChompState { col_heights: vec![2, 3, 1], n_rows: 2, n_cols: 3 });
        let once = s.canonicalize();
        assert_eq!(once.clone().canonicalize(), once);
        let f = GameState::Fibonacci(FibState { remaining: 3, take_cap: 10 }).canonicalize();
        assert_eq!(f, GameState::Fibonacci(FibState { remaining: 3, take_cap: 3 }));
    }

    #[test]
    fn validate_rejects_broken_states() {
        let bad = GameState::Chomp(ChompState { col_heights: vec![1, 2], n_rows: 2, n_cols: 2 });
        assert!(bad.validate().is_err());
        assert!(GameState::nim(&[3], 0).validate().is_err());
        assert!(GameState::chomp_full(5, 5).validate().is_ok());
    }

    #[test]
    fn conventions_per_game() {
        assert!(GameState::chomp_full(2, 2).supports(PlayConvention::Poison));
        assert!(!GameState::kayles_rows(&[3]).supports(PlayConvention::Misere));
        assert!(GameState::nim(&[3], 3).supports(PlayConvention::Misere));
    }
}
