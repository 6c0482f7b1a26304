//! Textual state forms used in prompts and datasets.
//!
//! Nim and Fibonacci states are plain integers, Kayles rows are binary
//! strings and Chomp grids are JSON matrices of 0/1 in a chosen display
//! orientation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChompState, FibState, GameState, KaylesState, NimState, PinRow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError { position, message: message.into() }
    }
}

/// Corner of the displayed grid that holds the poison cell.
///
/// Internally the poison is always at canonical `(0, 0)`; the orientation only
/// changes how rows and columns are numbered for display.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChompOrientation {
    #[default]
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl ChompOrientation {
    fn flips(self) -> (bool, bool) {
        match self {
            ChompOrientation::TopLeft => (false, false),
            ChompOrientation::TopRight => (false, true),
            ChompOrientation::BottomLeft => (true, false),
            ChompOrientation::BottomRight => (true, true),
        }
    }

    /// Maps a canonical cell to displayed `(row, col)`.
    pub fn to_display(self, state: &ChompState, row: u32, col: u32) -> (u32, u32) {
        let (flip_rows, flip_cols) = self.flips();
        let r = if flip_rows { state.n_rows - 1 - row } else { row };
        let c = if flip_cols { state.n_cols - 1 - col } else { col };
        (r, c)
    }

    /// Maps a displayed `(row, col)` back to canonical coordinates.
    /// Returns `None` for positions outside the grid.
    pub fn from_display(self, state: &ChompState, row: u32, col: u32) -> Option<(u32, u32)> {
        if row >= state.n_rows || col >= state.n_cols {
            return None;
        }
        // Both flips are involutions.
        Some(self.to_display(state, row, col))
    }

    pub fn corner_name(self) -> &'static str {
        match self {
            ChompOrientation::TopLeft => "top-left",
            ChompOrientation::TopRight => "top-right",
            ChompOrientation::BottomLeft => "bottom-left",
            ChompOrientation::BottomRight => "bottom-right",
        }
    }

    /// Directions, relative to the selected cell, of the block that is removed.
    pub fn removal_direction(self) -> &'static str {
        match self {
            ChompOrientation::TopLeft => "right and below",
            ChompOrientation::TopRight => "left and below",
            ChompOrientation::BottomLeft => "right and above",
            ChompOrientation::BottomRight => "left and above",
        }
    }
}

pub fn parse_nim(text: &str, max_take: u32) -> Result<GameState, ParseError> {
    let mut piles = Vec::new();
    let mut offset = 0;
    for part in text.split(',') {
        let trimmed = part.trim();
        let value = trimmed
            .parse::<u32>()
            .map_err(|_| ParseError::new(offset, format!("expected a pile size, found `{trimmed}`")))?;
        piles.push(value);
        offset += part.len() + 1;
    }
    if max_take == 0 {
        return Err(ParseError::new(0, "max_take must be at least 1"));
    }
    Ok(GameState::Nim(NimState { piles, max_take }))
}

pub fn parse_fibonacci(text: &str, take_cap: Option<u32>) -> Result<GameState, ParseError> {
    let trimmed = text.trim();
    let remaining = trimmed
        .parse::<u32>()
        .map_err(|_| ParseError::new(0, format!("expected a stone count, found `{trimmed}`")))?;
    let state = match take_cap {
        Some(cap) => FibState { remaining, take_cap: cap },
        None => FibState::opening(remaining),
    };
    Ok(GameState::Fibonacci(state).canonicalize())
}

/// Parses one or more binary rows separated by whitespace or `|`.
pub fn parse_kayles(text: &str) -> Result<GameState, ParseError> {
    let mut rows = Vec::new();
    let mut current = Vec::new();
    let mut in_row = false;
    for (i, ch) in text.char_indices() {
        match ch {
            '1' | '0' => {
                current.push(ch == '1');
                in_row = true;
            }
            c if c.is_whitespace() || c == '|' => {
                if in_row {
                    rows.push(PinRow(std::mem::take(&mut current)));
                    in_row = false;
                }
            }
            other => return Err(ParseError::new(i, format!("unexpected character `{other}`"))),
        }
    }
    if in_row {
        rows.push(PinRow(current));
    }
    if rows.is_empty() {
        return Err(ParseError::new(0, "no pin rows found"));
    }
    Ok(GameState::Kayles(KaylesState { rows }))
}

pub fn render_kayles(state: &KaylesState) -> String {
    state.rows.iter().map(PinRow::to_bits).collect::<Vec<_>>().join(" ")
}

/// Renders the grid row-major as a JSON matrix in display orientation.
pub fn render_chomp(state: &ChompState, orientation: ChompOrientation) -> String {
    let mut grid = vec![vec![0u8; state.n_cols as usize]; state.n_rows as usize];
    for col in 0..state.n_cols {
        for row in 0..state.col_heights[col as usize] {
            let (r, c) = orientation.to_display(state, row, col);
            grid[r as usize][c as usize] = 1;
        }
    }
    let rows: Vec<String> = grid
        .iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(u8::to_string).collect();
            format!("[{}]", cells.join(","))
        })
        .collect();
    format!("[{}]", rows.join(","))
}

/// Parses a displayed 0/1 matrix and maps it to canonical orientation.
/// The position in errors is the flattened cell index `row * n_cols + col`.
pub fn parse_chomp(text: &str, orientation: ChompOrientation) -> Result<GameState, ParseError> {
    let grid: Vec<Vec<u8>> = serde_json::from_str(text.trim())
        .map_err(|e| ParseError::new(e.column().saturating_sub(1), format!("not a 0/1 matrix: {e}")))?;
    let n_rows = grid.len();
    if n_rows == 0 {
        return Err(ParseError::new(0, "empty grid"));
    }
    let n_cols = grid[0].len();
    if n_cols == 0 {
        return Err(ParseError::new(0, "empty grid row"));
    }
    for (r, row) in grid.iter().enumerate() {
        if row.len() != n_cols {
            return Err(ParseError::new(r * n_cols, format!("row {r} has {} cells, expected {n_cols}", row.len())));
        }
        if let Some(c) = row.iter().position(|&v| v > 1) {
            return Err(ParseError::new(r * n_cols + c, "cells must be 0 or 1"));
        }
    }
    let shell = ChompState {
        col_heights: vec![0; n_cols],
        n_rows: n_rows as u32,
        n_cols: n_cols as u32,
    };
    let mut present = vec![vec![false; n_cols]; n_rows];
    for (r, row) in grid.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let (cr, cc) = orientation.to_display(&shell, r as u32, c as u32);
            present[cr as usize][cc as usize] = v == 1;
        }
    }
    let mut col_heights = Vec::with_capacity(n_cols);
    for c in 0..n_cols {
        let h = (0..n_rows).take_while(|&r| present[r][c]).count();
        if let Some(r) = (h..n_rows).find(|&r| present[r][c]) {
            let (dr, dc) = orientation.to_display(&shell, r as u32, c as u32);
            return Err(ParseError::new(
                dr as usize * n_cols + dc as usize,
                "cell is detached from the poison corner",
            ));
        }
        col_heights.push(h as u32);
    }
    if col_heights[0] == 0 {
        let (dr, dc) = orientation.to_display(&shell, 0, 0);
        return Err(ParseError::new(dr as usize * n_cols + dc as usize, "poison cell is missing"));
    }
    if let Some(c) = col_heights.windows(2).position(|w| w[1] > w[0]) {
        let (dr, dc) = orientation.to_display(&shell, col_heights[c], c as u32 + 1);
        return Err(ParseError::new(
            dr as usize * n_cols + dc as usize,
            "grid is not a valid chomp position",
        ));
    }
    Ok(GameState::Chomp(ChompState { col_heights, n_rows: n_rows as u32, n_cols: n_cols as u32 }))
}

impl GameState {
    /// Short state text as it appears in prompts.
    pub fn render(&self, orientation: ChompOrientation) -> String {
        match self {
            GameState::Nim(s) => {
                s.piles.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
            }
            GameState::Fibonacci(s) => s.remaining.to_string(),
            GameState::Kayles(s) => render_kayles(s),
            GameState::Chomp(s) => render_chomp(s, orientation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameState;
    use proptest::prelude::*;

    #[test]
    fn kayles_roundtrip_and_direct_read() {
        let s = parse_kayles("11011").unwrap();
        let GameState::Kayles(k) = &s else { panic!() };
        assert_eq!(k.rows[0].to_bits(), "11011");
        assert_eq!(render_kayles(k), "11011");
        let t = parse_kayles("110").unwrap();
        assert_eq!(t, GameState::Kayles(KaylesState { rows: vec![PinRow(vec![true, true, false])] }));
    }

    #[test]
    fn kayles_rejects_garbage_with_position() {
        let err = parse_kayles("1102").unwrap_err();
        assert_eq!(err.position, 3);
    }

    #[test]
    fn chomp_full_grid_renders_ones() {
        let GameState::Chomp(s) = GameState::chomp_full(2, 3) else { panic!() };
        assert_eq!(render_chomp(&s, ChompOrientation::TopLeft), "[[1,1,1],[1,1,1]]");
    }

    #[test]
    fn chomp_orientation_mapping() {
        let GameState::Chomp(s) = GameState::chomp_full(2, 3)
            .apply(&crate::game::Move::Chomp { row: 1, col: 1 })
            .unwrap()
        else {
            panic!()
        };
        assert_eq!(render_chomp(&s, ChompOrientation::TopLeft), "[[1,1,1],[1,0,0]]");
        assert_eq!(render_chomp(&s, ChompOrientation::TopRight), "[[1,1,1],[0,0,1]]");
        assert_eq!(render_chomp(&s, ChompOrientation::BottomLeft), "[[1,0,0],[1,1,1]]");
        assert_eq!(render_chomp(&s, ChompOrientation::BottomRight), "[[0,0,1],[1,1,1]]");
        for o in [
            ChompOrientation::TopLeft,
            ChompOrientation::TopRight,
            ChompOrientation::BottomLeft,
            ChompOrientation::BottomRight,
        ] {
            let back = parse_chomp(&render_chomp(&s, o), o).unwrap();
            assert_eq!(back, GameState::Chomp(s.clone()));
        }
    }

    #[test]
    fn chomp_rejects_detached_cells() {
        let err = parse_chomp("[[1,0,1],[1,1,0]]", ChompOrientation::TopLeft).unwrap_err();
        assert!(err.message.contains("not a valid") || err.message.contains("detached"));
        assert!(parse_chomp("[[0,1],[1,1]]", ChompOrientation::TopLeft).is_err());
        assert!(parse_chomp("[[1,2]]", ChompOrientation::TopLeft).is_err());
        assert!(parse_chomp("[[1,1],[1]]", ChompOrientation::TopLeft).is_err());
    }

    #[test]
    fn numeric_forms() {
        assert_eq!(parse_nim("3, 4,5", 3).unwrap(), GameState::nim(&[3, 4, 5], 3));
        assert_eq!(parse_fibonacci("20", None).unwrap(), GameState::fibonacci_opening(20));
        assert!(parse_nim("3,x", 3).unwrap_err().position > 0);
    }

    fn arb_chomp() -> impl Strategy<Value = ChompState> {
        (1u32..8, 1u32..8).prop_flat_map(|(rows, cols)| {
            proptest::collection::vec(0u32..=rows, cols as usize).prop_map(move |mut h| {
                h.sort_unstable_by(|a, b| b.cmp(a));
                h[0] = h[0].max(1);
                ChompState { col_heights: h, n_rows: rows, n_cols: cols }
            })
        })
    }

    fn arb_orientation() -> impl Strategy<Value = ChompOrientation> {
        prop_oneof![
            Just(ChompOrientation::TopLeft),
            Just(ChompOrientation::TopRight),
            Just(ChompOrientation::BottomLeft),
            Just(ChompOrientation::BottomRight),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn chomp_render_parse_roundtrip(s in arb_chomp(), o in arb_orientation()) {
            let text = render_chomp(&s, o);
            prop_assert_eq!(parse_chomp(&text, o).unwrap(), GameState::Chomp(s));
        }

        #[test]
        fn kayles_render_parse_roundtrip(rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 1..20), 1..4)) {
            let state = KaylesState { rows: rows.into_iter().map(PinRow).collect() };
            let text = render_kayles(&state);
            prop_assert_eq!(parse_kayles(&text).unwrap(), GameState::Kayles(state));
        }

        #[test]
        fn nim_render_parse_roundtrip(piles in proptest::collection::vec(0u32..200, 1..5), k in 1u32..6) {
            let state = GameState::nim(&piles, k);
            prop_assert_eq!(parse_nim(&state.render(ChompOrientation::TopLeft), k).unwrap(), state);
        }

        #[test]
        fn fibonacci_render_parse_roundtrip(rem in 2u32..500, cap_frac in 0.0f64..1.0) {
            let cap = 1 + ((rem - 1) as f64 * cap_frac) as u32;
            let state = GameState::fibonacci(rem, cap);
            prop_assert_eq!(parse_fibonacci(&state.render(ChompOrientation::TopLeft), Some(cap)).unwrap(), state);
        }
    }
}
