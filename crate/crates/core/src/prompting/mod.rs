//! Prompt template catalog, game prompt assembly and response parsing.
//!
//! Templates are UTF-8 text files with a small front-matter block. The built-in
//! catalog is compiled in; a directory of overrides can be loaded instead.

mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{ChompOrientation, GameKind, GameState, PlayConvention};

pub use parse::{
    decode_action, extract_json_block, parse_fields, parse_response, ParseFailure, ParsedResponse,
};

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateStyle {
    Game,
    Standard,
    React,
    Cot,
    DreamadStage,
    Debate,
    Refine,
}

impl TemplateStyle {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "game" => TemplateStyle::Game,
            "standard" => TemplateStyle::Standard,
            "react" => TemplateStyle::React,
            "cot" => TemplateStyle::Cot,
            "dreamad_stage" => TemplateStyle::DreamadStage,
            "debate" => TemplateStyle::Debate,
            "refine" => TemplateStyle::Refine,
            _ => return None,
        })
    }
}

/// Where the wording comes from: the published prompt tables, or text authored
/// for this artifact where none was published.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSource {
    Published,
    Artifact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub style: TemplateStyle,
    /// `None` for templates shared by every game.
    pub game: Option<GameKind>,
    pub source: TemplateSource,
    pub version: u32,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for cap in placeholder_re().captures_iter(&self.body) {
            let name = cap[1].to_string();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    /// Substitutes every placeholder in a single pass. Bound values are not
    /// rescanned, so they may contain braces freely.
    pub fn render(&self, bindings: &Bindings) -> Result<String, PromptError> {
        let re = placeholder_re();
        let mut out = String::with_capacity(self.body.len() + 64);
        let mut last = 0;
        for cap in re.captures_iter(&self.body) {
            let whole = cap.get(0).expect("match");
            let name = &cap[1];
            let value = bindings.get(name).ok_or_else(|| PromptError::UnboundPlaceholder {
                template: self.id.clone(),
                name: name.to_string(),
            })?;
            out.push_str(&self.body[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` has unbound placeholder {{{name}}}")]
    UnboundPlaceholder { template: String, name: String },
    #[error("bad template file {file}: {message}")]
    BadTemplate { file: String, message: String },
    #[error("response is missing field `{0}`")]
    MissingField(String),
    #[error("io: {0}")]
    Io(String),
}

const BUILTIN: &[(&str, &str)] = &[
    ("game_nim.txt", include_str!("../../templates/game_nim.txt")),
    ("game_nim_misere.txt", include_str!("../../templates/game_nim_misere.txt")),
    ("game_nim_piles.txt", include_str!("../../templates/game_nim_piles.txt")),
    ("game_fibonacci.txt", include_str!("../../templates/game_fibonacci.txt")),
    ("game_fibonacci_misere.txt", include_str!("../../templates/game_fibonacci_misere.txt")),
    ("game_kayles.txt", include_str!("../../templates/game_kayles.txt")),
    ("game_kayles_rows.txt", include_str!("../../templates/game_kayles_rows.txt")),
    ("game_chomp.txt", include_str!("../../templates/game_chomp.txt")),
    ("format_standard.txt", include_str!("../../templates/format_standard.txt")),
    ("format_react.txt", include_str!("../../templates/format_react.txt")),
    ("suffix_cot.txt", include_str!("../../templates/suffix_cot.txt")),
    ("dreamad_reinterpret.txt", include_str!("../../templates/dreamad_reinterpret.txt")),
    ("dreamad_strategize.txt", include_str!("../../templates/dreamad_strategize.txt")),
    ("dreamad_diversify.txt", include_str!("../../templates/dreamad_diversify.txt")),
    ("debate_round.txt", include_str!("../../templates/debate_round.txt")),
    ("debate_post_refine.txt", include_str!("../../templates/debate_post_refine.txt")),
    ("refine_feedback.txt", include_str!("../../templates/refine_feedback.txt")),
    ("refine_revise.txt", include_str!("../../templates/refine_revise.txt")),
];

/// Parses one template file: `---` front-matter of `key: value` lines, then
/// the body. A single trailing newline is dropped from the body.
pub fn parse_template_file(file: &str, text: &str) -> Result<PromptTemplate, PromptError> {
    let bad = |message: &str| PromptError::BadTemplate { file: file.to_string(), message: message.to_string() };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rest = text.strip_prefix("---\n").ok_or_else(|| bad("missing front-matter"))?;
    let end = rest.find("\n---\n").ok_or_else(|| bad("unterminated front-matter"))?;
    let (header, body) = (&rest[..end], &rest[end + 5..]);
    let mut fields = BTreeMap::new();
    for line in header.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once(':').ok_or_else(|| bad("front-matter line without ':'"))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let id = fields.get("id").ok_or_else(|| bad("missing id"))?.clone();
    let style = fields
        .get("style")
        .and_then(|s| TemplateStyle::parse(s))
        .ok_or_else(|| bad("missing or unknown style"))?;
    let game = match fields.get("game").map(String::as_str) {
        None | Some("any") => None,
        Some(g) => Some(g.parse::<GameKind>().map_err(|_| bad("unknown game"))?),
    };
    let source = match fields.get("source").map(String::as_str) {
        Some("published") => TemplateSource::Published,
        Some("artifact") | None => TemplateSource::Artifact,
        Some(_) => return Err(bad("unknown source")),
    };
    let version = match fields.get("version") {
        Some(v) => v.parse().map_err(|_| bad("version is not an integer"))?,
        None => 1,
    };
    let body = body.strip_suffix('\n').unwrap_or(body).to_string();
    Ok(PromptTemplate { id, style, game, source, version, body })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Catalog {
    pub fn builtin() -> Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG
            .get_or_init(|| {
                let mut templates = BTreeMap::new();
                for (file, text) in BUILTIN {
                    let t = parse_template_file(file, text).expect("built-in templates are well formed");
                    templates.insert(t.id.clone(), t);
                }
                Catalog { templates }
            })
            .clone()
    }

    /// Loads every `*.txt` file in `dir`. Ids must be unique.
    pub fn load_dir(dir: &Path) -> Result<Catalog, PromptError> {
        let mut templates = BTreeMap::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| PromptError::Io(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let name = path.display().to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io(e.to_string()))?;
            let t = parse_template_file(&name, &text)?;
            if templates.contains_key(&t.id) {
                return Err(PromptError::BadTemplate { file: name, message: format!("duplicate id {}", t.id) });
            }
            templates.insert(t.id.clone(), t);
        }
        Ok(Catalog { templates })
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates.get(id).ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, id: &str, bindings: &Bindings) -> Result<String, PromptError> {
        self.get(id)?.render(bindings)
    }

    /// Hex SHA-256 over every template's metadata and body, in id order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in self.templates.values() {
            let game = t.game.map(|g| g.as_str()).unwrap_or("any");
            h.update(format!("{}\n{:?}\n{}\n{:?}\n{}\n", t.id, t.style, game, t.source, t.version));
            h.update(t.body.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::builtin()
    }
}

/// Output styles for single-call decision prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Standard,
    React,
    Cot,
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStyle::Standard => "standard",
            PromptStyle::React => "react",
            PromptStyle::Cot => "cot",
        })
    }
}

/// Everything a prompt needs to describe one decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext<'a> {
    pub state: &'a GameState,
    pub convention: PlayConvention,
    pub orientation: ChompOrientation,
    pub agent_name: &'a str,
}

/// The `action:` line of the output schema: a type word and the constraint
/// sentence that follows it.
pub fn action_schema(state: &GameState, orientation: ChompOrientation) -> (String, String) {
    match state {
        GameState::Nim(n) if n.piles.len() == 1 => {
            let hi = n.max_take.min(n.piles[0]).max(1);
            ("integer".into(), format!("Only integer between 1 and {hi}."))
        }
        GameState::Nim(n) => (
            "object".into(),
            format!(
                "Only an object {{\"pile\": pile index from 0 to {}, \"count\": integer between 1 and {}}}.",
                n.piles.len().saturating_sub(1),
                n.max_take
            ),
        ),
        GameState::Fibonacci(f) => {
            ("integer".into(), format!("Only integer between 1 and {}.", f.take_cap.min(f.remaining).max(1)))
        }
        GameState::Kayles(k) if k.rows.len() == 1 => (
            "list of integers".into(),
            "Only a list holding one pin index, or two adjacent pin indices, counted from 0 at the left of the binary string, e.g. [3] or [3, 4].".into(),
        ),
        GameState::Kayles(k) => (
            "object".into(),
            format!(
                "Only an object {{\"row\": row index from 0 to {}, \"pins\": list of one pin index or two adjacent pin indices in that row, counted from 0}}.",
                k.rows.len() - 1
            ),
        ),
        GameState::Chomp(c) => {
            let _ = orientation;
            (
                "object".into(),
                format!(
                    "Only an object {{\"row\": integer between 0 and {}, \"col\": integer between 0 and {}}} naming a position that is still available.",
                    c.n_rows.saturating_sub(1),
                    c.n_cols.saturating_sub(1)
                ),
            )
        }
    }
}

/// Template id and bindings for the game description part of a prompt.
pub fn game_bindings(ctx: &PromptContext<'_>) -> (&'static str, Bindings) {
    let mut b = Bindings::new();
    b.insert("agent_name".into(), ctx.agent_name.to_string());
    let misere = ctx.convention == PlayConvention::Misere;
    let id = match ctx.state {
        GameState::Nim(n) if n.piles.len() == 1 => {
            b.insert("max_take".into(), n.max_take.to_string());
            b.insert("remaining_items".into(), n.piles[0].to_string());
            if misere { "game/nim_misere" } else { "game/nim" }
        }
        GameState::Nim(n) => {
            b.insert("max_take".into(), n.max_take.to_string());
            b.insert("pile_count".into(), n.piles.len().to_string());
            let piles: Vec<String> = n.piles.iter().map(u32::to_string).collect();
            b.insert("remaining_items".into(), format!("[{}]", piles.join(", ")));
            b.insert(
                "objective".into(),
                if misere {
                    "Your goal is to win the game by forcing your opponent to take the last item. The person who takes the last item loses."
                } else {
                    "Your goal is to win the game by taking all remaining items on your turn, leaving no items for your opponent. The person who takes the last item wins."
                }
                .into(),
            );
            "game/nim_piles"
        }
        GameState::Fibonacci(f) => {
            b.insert("remaining_items".into(), f.remaining.to_string());
            b.insert("max_take".into(), f.take_cap.min(f.remaining).to_string());
            let turn = if f.is_opening_shape() {
                "You are the first player. ".to_string()
            } else {
                format!("Your opponent just took {} or more stones, so you may take at most {}. ", f.take_cap.div_ceil(2), f.take_cap)
            };
            b.insert("turn_context".into(), turn);
            if misere { "game/fibonacci_misere" } else { "game/fibonacci" }
        }
        GameState::Kayles(k) if k.rows.len() == 1 => {
            b.insert("remaining_pins".into(), k.rows[0].to_bits());
            "game/kayles"
        }
        GameState::Kayles(k) => {
            b.insert("row_count".into(), k.rows.len().to_string());
            let rows: Vec<String> =
                k.rows.iter().enumerate().map(|(i, r)| format!("Row {i}: {}", r.to_bits())).collect();
            b.insert("remaining_pins".into(), rows.join("\n"));
            "game/kayles_rows"
        }
        GameState::Chomp(c) => {
            let (pr, pc) = ctx.orientation.to_display(c, 0, 0);
            b.insert("poison_corner".into(), ctx.orientation.corner_name().into());
            b.insert("poison_position".into(), format!("({pr}, {pc})"));
            let shape = if c.n_rows == c.n_cols {
                "square".to_string()
            } else {
                format!("{} x {} rectangular", c.n_rows, c.n_cols)
            };
            b.insert("grid_shape".into(), shape);
            b.insert("removal_direction".into(), ctx.orientation.removal_direction().into());
            b.insert("remaining_grid".into(), ctx.state.render(ctx.orientation));
            "game/chomp"
        }
    };
    (id, b)
}

/// Game description without an output block.
pub fn render_game(catalog: &Catalog, ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    let (id, bindings) = game_bindings(ctx);
    catalog.render(id, &bindings)
}

/// The output-format block for `style` (CoT uses the ReAct block).
pub fn render_output_format(
    catalog: &Catalog,
    style: PromptStyle,
    state: &GameState,
    orientation: ChompOrientation,
) -> Result<String, PromptError> {
    let (action_type, action_constraint) = action_schema(state, orientation);
    let mut b = Bindings::new();
    b.insert("action_type".into(), action_type);
    b.insert("action_constraint".into(), action_constraint);
    let id = match style {
        PromptStyle::Standard => "format/standard",
        PromptStyle::React | PromptStyle::Cot => "format/react",
    };
    catalog.render(id, &b)
}

/// Full single-call decision prompt: game description, output block and, for
/// CoT, the step-by-step suffix.
pub fn render_decision_prompt(
    catalog: &Catalog,
    ctx: &PromptContext<'_>,
    style: PromptStyle,
) -> Result<String, PromptError> {
    let mut text = render_game(catalog, ctx)?;
    text.push('\n');
    text.push_str(&render_output_format(catalog, style, ctx.state, ctx.orientation)?);
    if style == PromptStyle::Cot {
        text.push('\n');
        text.push_str(&catalog.render("suffix/cot", &Bindings::new())?);
    }
    Ok(text)
}

/// Stage 1a prompt: reinterpretation of the game description.
pub fn render_reinterpret(catalog: &Catalog, game_prompt: &str) -> Result<String, PromptError> {
    catalog.render("dreamad/reinterpret", &bind(&[("current_state", game_prompt)]))
}

pub const REINTERPRET_FIELDS: [&str; 3] = ["game definition", "winning condition", "move constraints"];
pub const STRATEGY_FIELDS: [&str; 3] = ["state evaluation", "winning strategy", "endgame tactics"];
pub const DIVERSIFY_FIELDS: [&str; 1] = ["optimized prompt"];

/// Stage 1b prompt. `game_info` holds the three reinterpretation fields.
pub fn render_strategize(
    catalog: &Catalog,
    game_info: &BTreeMap<String, String>,
    state_short: &str,
) -> Result<String, PromptError> {
    let mut b = Bindings::new();
    for key in REINTERPRET_FIELDS {
        let v = game_info.get(key).ok_or_else(|| PromptError::MissingField(key.to_string()))?;
        b.insert(key.replace(' ', "_"), v.clone());
    }
    b.insert("current_state_short".into(), state_short.to_string());
    catalog.render("dreamad/strategize", &b)
}

/// Stage 2 prompt: rewrite `initial_prompt` using the strategy fields.
pub fn render_diversify(
    catalog: &Catalog,
    initial_prompt: &str,
    game_info: &BTreeMap<String, String>,
    strategy: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    let mut b = Bindings::new();
    b.insert("initial_prompt".into(), initial_prompt.to_string());
    let def = game_info
        .get("game definition")
        .ok_or_else(|| PromptError::MissingField("game definition".into()))?;
    b.insert("game_definition".into(), def.clone());
    for key in STRATEGY_FIELDS {
        let v = strategy.get(key).ok_or_else(|| PromptError::MissingField(key.to_string()))?;
        b.insert(key.replace(' ', "_"), v.clone());
    }
    catalog.render("dreamad/diversify", &b)
}

/// Short state line for the strategy stage, e.g. `20 stones remaining`.
pub fn short_state(state: &GameState, orientation: ChompOrientation) -> String {
    match state {
        GameState::Nim(n) if n.piles.len() == 1 => format!("{} items remaining", n.piles[0]),
        GameState::Nim(n) => format!("piles {:?}", n.piles),
        GameState::Fibonacci(f) => format!("{} stones remaining, take at most {}", f.remaining, f.take_cap),
        GameState::Kayles(_) => format!("pins {}", state.render(orientation)),
        GameState::Chomp(_) => format!("grid {}", state.render(orientation)),
    }
}

/// Debate follow-up prompt quoting the other agents' latest JSON answers.
pub fn render_debate_round(
    catalog: &Catalog,
    other_answers: &[String],
    output_format: &str,
) -> Result<String, PromptError> {
    let quoted: Vec<String> = other_answers
        .iter()
        .map(|a| format!("Another agent answered:\n```json\n{}\n```", a.trim()))
        .collect();
    catalog.render(
        "debate/round",
        &bind(&[("other_answers", &quoted.join("\n")), ("output_format", output_format)]),
    )
}

pub fn render_post_debate_refine(
    catalog: &Catalog,
    consensus_answer: &str,
    output_format: &str,
) -> Result<String, PromptError> {
    catalog.render(
        "debate/post_refine",
        &bind(&[("consensus_answer", consensus_answer.trim()), ("output_format", output_format)]),
    )
}

pub fn bind(pairs: &[(&str, &str)]) -> Bindings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
