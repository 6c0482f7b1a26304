//! Structured-output extraction from model replies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::PromptError;
use crate::game::{ChompOrientation, GameState, Move};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseFailure {
    #[error("no code block in response")]
    NoCodeBlock,
    #[error("malformed json: {detail}")]
    MalformedJson { detail: String },
    #[error("json has no \"action\" field")]
    MissingAction,
    #[error("undecodable action: {detail}")]
    UndecodableAction { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub action: Move,
    /// The action exactly as it appeared in the reply.
    pub payload: Value,
    pub reasoning: Option<String>,
    pub raw: String,
}

/// Content of the last fenced code block. An unclosed final fence yields the
/// rest of the text (a truncated reply). The language tag line is dropped.
fn last_fenced_block(text: &str) -> Option<&str> {
    let fences: Vec<usize> = text.match_indices("```").map(|(i, _)| i).collect();
    if fences.is_empty() {
        return None;
    }
    let (open, close) = if fences.len() % 2 == 0 {
        (fences[fences.len() - 2], Some(fences[fences.len() - 1]))
    } else {
        (fences[fences.len() - 1], None)
    };
    let inner = &text[open + 3..close.unwrap_or(text.len())];
    // Drop an info string such as `json` on the opening line.
    let inner = match inner.find('\n') {
        Some(nl) if inner[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
            &inner[nl + 1..]
        }
        _ => inner,
    };
    Some(inner)
}

/// Removes `//` comments outside strings and trailing commas, and quotes bare
/// object keys such as `action:` or `game definition:`.
fn repair(src: &str) -> String {
    let mut no_comments = String::with_capacity(src.len());
    let mut chars = src.chars().peekable();
    let mut in_str = false;
    let mut escaped = false;
    while let Some(c) = chars.next() {
        if in_str {
            no_comments.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '/' && chars.peek() == Some(&'/') {
            for d in chars.by_ref() {
                if d == '\n' {
                    no_comments.push('\n');
                    break;
                }
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        no_comments.push(c);
    }
    static KEY: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    static TRAILING: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let key = KEY.get_or_init(|| regex::Regex::new(r#"([{,]\s*)([A-Za-z_][A-Za-z0-9_ ]*?)\s*:"#).unwrap());
    let trailing = TRAILING.get_or_init(|| regex::Regex::new(r",\s*([}\]])").unwrap());
    let quoted = key.replace_all(&no_comments, "$1\"$2\":");
    trailing.replace_all(&quoted, "$1").into_owned()
}

fn parse_object(src: &str) -> Result<Map<String, Value>, ParseFailure> {
    let direct = serde_json::from_str::<Value>(src.trim());
    let value = match direct {
        Ok(v) => v,
        Err(first) => serde_json::from_str::<Value>(repair(src).trim())
            .map_err(|_| ParseFailure::MalformedJson { detail: first.to_string() })?,
    };
    match value {
        Value::Object(m) => Ok(m),
        other => Err(ParseFailure::MalformedJson { detail: format!("expected an object, got {other}") }),
    }
}

/// End index (exclusive) of the balanced `{...}` starting at `start`.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Last top-level JSON object in free text, scanning forward.
fn scan_last_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut found = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = balanced_end(bytes, i) {
                if let Ok(m) = parse_object(&text[i..end]) {
                    found = Some(m);
                    i = end;
                    continue;
                }
            }
        }
        i += 1;
    }
    found
}

/// The JSON object a reply carries: the last fenced block, or with `strict`
/// off and no fence present, the last bare object in the text.
pub fn extract_json_block(text: &str, strict: bool) -> Result<Map<String, Value>, ParseFailure> {
    match last_fenced_block(text) {
        Some(block) => parse_object(block),
        None if strict => Err(ParseFailure::NoCodeBlock),
        None => scan_last_object(text).ok_or(ParseFailure::NoCodeBlock),
    }
}

fn as_u32(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                u32::try_from(u).ok()
            } else {
                n.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0 && *f <= u32::MAX as f64).map(|f| f as u32)
            }
        }
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn field<'a>(m: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    m.iter().find(|(k, _)| k.trim().eq_ignore_ascii_case(key)).map(|(_, v)| v)
}

fn undecodable(detail: impl Into<String>) -> ParseFailure {
    ParseFailure::UndecodableAction { detail: detail.into() }
}

fn pins_to_move(row: usize, pins: &[Value]) -> Result<Move, ParseFailure> {
    let idx: Vec<u32> = pins.iter().map(as_u32).collect::<Option<_>>().ok_or_else(|| undecodable("pin index is not a nonnegative integer"))?;
    match idx.as_slice() {
        [p] => Ok(Move::Kayles { row, start: *p as usize, length: 1 }),
        [a, b] if a.abs_diff(*b) == 1 => Ok(Move::Kayles { row, start: (*a).min(*b) as usize, length: 2 }),
        [_, _] => Err(undecodable("two pins that are not adjacent")),
        _ => Err(undecodable(format!("expected one or two pins, got {}", idx.len()))),
    }
}

/// Decodes an `action` payload into a legal move for `state`. Chomp
/// coordinates are read in the displayed orientation.
pub fn decode_action(payload: &Value, state: &GameState, orientation: ChompOrientation) -> Result<Move, ParseFailure> {
    let mv = match state {
        GameState::Nim(n) => {
            if let Some(count) = as_u32(payload) {
                if n.piles.len() != 1 {
                    return Err(undecodable("a bare count is ambiguous with several piles"));
                }
                Move::Nim { pile: 0, count }
            } else {
                let (pile, count) = match payload {
                    Value::Object(m) => (field(m, "pile").and_then(as_u32), field(m, "count").and_then(as_u32)),
                    Value::Array(a) if a.len() == 2 => (as_u32(&a[0]), as_u32(&a[1])),
                    _ => (None, None),
                };
                match (pile, count) {
                    (Some(pile), Some(count)) => Move::Nim { pile: pile as usize, count },
                    _ => return Err(undecodable(format!("not a nim action: {payload}"))),
                }
            }
        }
        GameState::Fibonacci(_) => {
            let count = as_u32(payload).ok_or_else(|| undecodable(format!("not a count: {payload}")))?;
            Move::Fibonacci { count }
        }
        GameState::Kayles(k) => match payload {
            Value::Array(pins) if k.rows.len() == 1 => pins_to_move(0, pins)?,
            v if k.rows.len() == 1 && as_u32(v).is_some() => pins_to_move(0, std::slice::from_ref(v))?,
            Value::Object(m) => {
                let row = field(m, "row").and_then(as_u32).ok_or_else(|| undecodable("missing row"))? as usize;
                let pins = match field(m, "pins") {
                    Some(Value::Array(p)) => p.clone(),
                    Some(v) if as_u32(v).is_some() => vec![v.clone()],
                    _ => return Err(undecodable("missing pins")),
                };
                pins_to_move(row, &pins)?
            }
            _ => return Err(undecodable(format!("not a kayles action: {payload}"))),
        },
        GameState::Chomp(c) => {
            let (row, col) = match payload {
                Value::Object(m) => (field(m, "row").and_then(as_u32), field(m, "col").and_then(as_u32)),
                Value::Array(a) if a.len() == 2 => (as_u32(&a[0]), as_u32(&a[1])),
                _ => (None, None),
            };
            let (Some(row), Some(col)) = (row, col) else {
                return Err(undecodable(format!("not a chomp position: {payload}")));
            };
            let (r, cc) = orientation
                .from_display(c, row, col)
                .ok_or_else(|| undecodable(format!("position ({row}, {col}) is off the grid")))?;
            Move::Chomp { row: r, col: cc }
        }
    };
    if state.is_legal(&mv) {
        Ok(mv)
    } else {
        Err(undecodable(format!("illegal move: {mv}")))
    }
}

/// Parses a decision reply for `state`.
pub fn parse_response(
    text: &str,
    state: &GameState,
    orientation: ChompOrientation,
    strict: bool,
) -> Result<ParsedResponse, ParseFailure> {
    let obj = extract_json_block(text, strict)?;
    let payload = field(&obj, "action").cloned().ok_or(ParseFailure::MissingAction)?;
    if payload.is_null() {
        return Err(ParseFailure::MissingAction);
    }
    let action = decode_action(&payload, state, orientation)?;
    let reasoning = field(&obj, "reasoning").map(|v| match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    });
    Ok(ParsedResponse { action, payload, reasoning, raw: text.to_string() })
}

/// Reads named string fields from a reply. Keys match with spaces or
/// underscores, ignoring case; empty values count as missing.
pub fn parse_fields(text: &str, keys: &[&str]) -> Result<BTreeMap<String, String>, PromptError> {
    let obj = extract_json_block(text, false).map_err(|_| {
        PromptError::MissingField(keys.first().copied().unwrap_or_default().to_string())
    })?;
    let norm = |s: &str| s.trim().to_ascii_lowercase().replace('_', " ");
    let mut out = BTreeMap::new();
    for &key in keys {
        let value = obj
            .iter()
            .find(|(k, _)| norm(k) == key)
            .map(|(_, v)| match v {
                Value::String(s) => s.trim().to_string(),
                Value::Null => String::new(),
                other => other.to_string(),
            })
            .filter(|v| !v.is_empty())
            .ok_or_else(|| PromptError::MissingField(key.to_string()))?;
        out.insert(key.to_string(), value);
    }
    Ok(out)
}
