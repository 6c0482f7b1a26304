use crate::game::Move;
use crate::gateway::ChatMessage;
use crate::prompting::{self, PromptContext, PromptStyle, DIVERSIFY_FIELDS, REINTERPRET_FIELDS, STRATEGY_FIELDS};

use super::{answer_block, mode_earliest, Decision, Reasoner, ReasonerFailure, Session};

struct Debate {
    decision: Decision,
    conversations: Vec<Vec<ChatMessage>>,
    latest_text: Vec<String>,
}

fn all_agree(actions: &[Option<Move>]) -> bool {
    actions.first().is_some_and(|a| a.is_some() && actions.iter().all(|b| b == a))
}

/// Round 0 answers independently; each later round shows every debater the
/// others' latest answers. Stops as soon as all decoded actions agree.
fn run_debate(
    r: &Reasoner<'_>,
    s: &mut Session<'_>,
    ctx: &PromptContext<'_>,
    first_prompts: Vec<String>,
) -> Result<Debate, ReasonerFailure> {
    let cfg = r.config;
    let format = r.output_format(ctx, PromptStyle::React)?;
    let mut conversations: Vec<Vec<ChatMessage>> =
        first_prompts.into_iter().map(|p| vec![ChatMessage::user(p)]).collect();
    let n = conversations.len();
    let mut latest_text = vec![String::new(); n];
    let mut latest: Vec<Option<Move>> = vec![None; n];
    let mut reasons: Vec<Option<String>> = vec![None; n];
    let mut round_actions = Vec::new();

    for (i, conv) in conversations.iter_mut().enumerate() {
        let (text, parsed) = s.call_parsed(ctx, conv, cfg.temp_decision, &format!("debate/0/agent{i}"))?;
        latest_text[i] = answer_block(&text);
        conv.push(ChatMessage::assistant(text));
        if let Ok(p) = parsed {
            latest[i] = Some(p.action);
            reasons[i] = p.reasoning;
        }
    }
    round_actions.push(latest.clone());

    let mut rounds_used = 0;
    let mut consensus = all_agree(&latest);
    while !consensus && rounds_used < cfg.n_debate_rounds {
        rounds_used += 1;
        let snapshot = latest_text.clone();
        let mut next = latest.clone();
        for (i, conv) in conversations.iter_mut().enumerate() {
            let others: Vec<String> =
                snapshot.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| t.clone()).collect();
            let prompt = prompting::render_debate_round(r.catalog, &others, &format)?;
            conv.push(ChatMessage::user(prompt));
            let (text, parsed) =
                s.call_parsed(ctx, conv, cfg.temp_decision, &format!("debate/{rounds_used}/agent{i}"))?;
            latest_text[i] = answer_block(&text);
            conv.push(ChatMessage::assistant(text));
            // A debater with no usable answer this round keeps its previous one.
            if let Ok(p) = parsed {
                next[i] = Some(p.action);
                reasons[i] = p.reasoning;
            }
        }
        latest = next;
        round_actions.push(latest.clone());
        consensus = all_agree(&latest);
    }

    let (action, tie_broken) = if consensus {
        (latest[0].expect("consensus on a decoded action"), false)
    } else {
        mode_earliest(&latest).ok_or(ReasonerFailure::AllSamplesFailed)?
    };
    let speaker = latest.iter().position(|a| *a == Some(action)).expect("final action was answered");
    let decision = Decision {
        action,
        reasoning: reasons[speaker].clone(),
        transcripts: Vec::new(),
        rounds_used,
        consensus_reached: consensus,
        per_agent_finals: latest,
        round_actions,
        tie_broken,
        optimized_prompts: Vec::new(),
        parse_retries: 0,
    };
    Ok(Debate { decision, conversations, latest_text })
}

pub(super) fn mad(
    r: &Reasoner<'_>,
    s: &mut Session<'_>,
    ctx: &PromptContext<'_>,
    first_prompts: Option<Vec<String>>,
) -> Result<Decision, ReasonerFailure> {
    let prompts = match first_prompts {
        Some(p) => p,
        None => {
            let p = prompting::render_decision_prompt(r.catalog, ctx, PromptStyle::React)?;
            vec![p; r.config.n_debaters as usize]
        }
    };
    Ok(run_debate(r, s, ctx, prompts)?.decision)
}

/// Reinterpretation, strategy formulation and diversification for one
/// debater. Returns that debater's optimized prompt.
fn elicit(r: &Reasoner<'_>, s: &mut Session<'_>, ctx: &PromptContext<'_>, agent: u32) -> Result<String, ReasonerFailure> {
    let cfg = r.config;
    let game_text = prompting::render_game(r.catalog, ctx)?;
    let short = prompting::short_state(ctx.state, ctx.orientation);
    let info = s.stage(
        &prompting::render_reinterpret(r.catalog, &game_text)?,
        &REINTERPRET_FIELDS,
        cfg.temp_spke,
        &format!("dreamad/agent{agent}/reinterpret"),
    )?;
    let strategy = s.stage(
        &prompting::render_strategize(r.catalog, &info, &short)?,
        &STRATEGY_FIELDS,
        cfg.temp_spke,
        &format!("dreamad/agent{agent}/strategize"),
    )?;
    let optimized = s.stage(
        &prompting::render_diversify(r.catalog, &game_text, &info, &strategy)?,
        &DIVERSIFY_FIELDS,
        cfg.temp_diversify,
        &format!("dreamad/agent{agent}/diversify"),
    )?;
    Ok(optimized["optimized prompt"].clone())
}

fn with_format(r: &Reasoner<'_>, ctx: &PromptContext<'_>, optimized: &str) -> Result<String, ReasonerFailure> {
    Ok(format!("{optimized}\n{}", r.output_format(ctx, PromptStyle::React)?))
}

pub(super) fn dreamad(r: &Reasoner<'_>, s: &mut Session<'_>, ctx: &PromptContext<'_>) -> Result<Decision, ReasonerFailure> {
    let mut optimized = Vec::new();
    for agent in 0..r.config.n_debaters {
        optimized.push(elicit(r, s, ctx, agent)?);
    }
    let prompts = optimized.iter().map(|o| with_format(r, ctx, o)).collect::<Result<Vec<_>, _>>()?;
    let Debate { mut decision, mut conversations, latest_text } = run_debate(r, s, ctx, prompts)?;

    // Post-debate refinement by the first debater holding the debate's answer.
    let speaker = decision.per_agent_finals.iter().position(|a| *a == Some(decision.action)).unwrap_or(0);
    let format = r.output_format(ctx, PromptStyle::React)?;
    let prompt = prompting::render_post_debate_refine(r.catalog, &latest_text[speaker], &format)?;
    let conv = &mut conversations[speaker];
    conv.push(ChatMessage::user(prompt));
    let (_, parsed) = s.call_parsed(ctx, conv, r.config.temp_spke, "dreamad/refine")?;
    if let Ok(p) = parsed {
        decision.action = p.action;
        decision.reasoning = p.reasoning;
    }
    decision.optimized_prompts = optimized;
    Ok(decision)
}

pub(super) fn dreamad_minus(
    r: &Reasoner<'_>,
    s: &mut Session<'_>,
    ctx: &PromptContext<'_>,
) -> Result<Decision, ReasonerFailure> {
    let optimized = elicit(r, s, ctx, 0)?;
    let prompt = with_format(r, ctx, &optimized)?;
    let (_, parsed) = s.call_parsed(ctx, &[ChatMessage::user(prompt)], r.config.temp_decision, "dreamad/decide")?;
    let parsed = parsed.map_err(ReasonerFailure::Parse)?;
    let mut d = Decision::single(parsed);
    d.optimized_prompts = vec![optimized];
    Ok(d)
}
