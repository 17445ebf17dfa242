//! The five expansion actions: prompt assembly, the LLM call, and parsing
//! the reply into a [`HeuristicArtifact`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{Dialect, HeuristicArtifact};
use crate::cognition::CognitiveGuidance;
use crate::exec::template::TemplateDocument;
use crate::llm::{ChatRequest, LlmError, LoggedBackend, GENERATION_TEMPERATURE};
use crate::prompts::{self, bullet_list, fmt_reward, show_artifact};
use crate::tree::{NodeId, Origin};
use crate::Problem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    I,
    Em1,
    Em2,
    M1,
    M2,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [ActionKind::I, ActionKind::Em1, ActionKind::Em2, ActionKind::M1, ActionKind::M2];

    /// Script and transcript tag.
    pub fn tag(self) -> &'static str {
        self.origin().as_str()
    }

    pub fn origin(self) -> Origin {
        match self {
            ActionKind::I => Origin::I,
            ActionKind::Em1 => Origin::Em1,
            ActionKind::Em2 => Origin::Em2,
            ActionKind::M1 => Origin::M1,
            ActionKind::M2 => Origin::M2,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action '{s}' (expected one of i, em1, em2, m1, m2)"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no-description")]
    NoDescription,
    #[error("no-code")]
    NoCode,
    #[error("unknown-dialect: '{0}'")]
    UnknownDialect(String),
    #[error("bad-template: {0}")]
    BadTemplate(String),
}

impl ParseError {
    /// Stable short code for logs.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::NoDescription => "no-description",
            ParseError::NoCode => "no-code",
            ParseError::UnknownDialect(_) => "unknown-dialect",
            ParseError::BadTemplate(_) => "bad-template",
        }
    }
}

/// Where a reply is headed: which problem it must fit and which fence name
/// marks external code.
#[derive(Clone, Copy, Debug)]
pub struct ParseContext<'a> {
    pub problem: Problem,
    pub code_dialect: &'a str,
}

struct Fence<'a> {
    info: &'a str,
    body: String,
}

/// Splits text into prose (outside fences) and the first fenced block.
fn scan(text: &str) -> (String, Option<Fence<'_>>) {
    let mut prose = String::new();
    let mut first: Option<Fence> = None;
    let mut open: Option<(&str, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match open.as_mut() {
            Some((info, body)) => {
                if trimmed.starts_with("```") {
                    if first.is_none() {
                        first = Some(Fence { info, body: body.join("\n") });
                    }
                    open = None;
                } else {
                    body.push(line);
                }
            }
            None => {
                if let Some(info) = trimmed.strip_prefix("```") {
                    open = Some((info.trim(), Vec::new()));
                } else {
                    prose.push_str(line);
                    prose.push('\n');
                }
            }
        }
    }
    (prose, first)
}

/// First balanced `{...}` block in `prose`, without the outer braces.
fn first_braced(prose: &str) -> Option<&str> {
    let start = prose.find('{')?;
    let mut depth = 0usize;
    for (i, c) in prose[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&prose[start + 1..start + i]);
                }
            }
            _ => {}
        }
    }
    None
}

pub fn parse_response(text: &str, ctx: &ParseContext<'_>) -> Result<HeuristicArtifact, ParseError> {
    let (prose, fence) = scan(text);
    let description = first_braced(&prose).map(str::trim).filter(|d| !d.is_empty()).ok_or(ParseError::NoDescription)?;
    let fence = fence.ok_or(ParseError::NoCode)?;
    if fence.body.trim().is_empty() {
        return Err(ParseError::NoCode);
    }
    let dialect = if fence.info.eq_ignore_ascii_case("template") {
        Dialect::Template
    } else if fence.info.eq_ignore_ascii_case(ctx.code_dialect) {
        Dialect::ExternalCode
    } else {
        return Err(ParseError::UnknownDialect(fence.info.to_string()));
    };
    if dialect == Dialect::Template {
        let doc = TemplateDocument::parse(&fence.body).map_err(|e| ParseError::BadTemplate(e.0))?;
        if !doc.supports(ctx.problem) {
            return Err(ParseError::BadTemplate(format!("template '{}' does not apply to {}", doc.id.name(), ctx.problem)));
        }
    }
    Ok(HeuristicArtifact::new(description, dialect, fence.body, ctx.problem.signature_kind()))
}

/// An evaluated heuristic as it appears in prompts.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub node: NodeId,
    pub artifact: HeuristicArtifact,
    pub reward: f64,
}

/// Result of one generation request.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub action: ActionKind,
    pub artifact: Option<HeuristicArtifact>,
    /// Parse failure code of the final attempt, when no artifact came back.
    pub failure: Option<String>,
    pub retried: bool,
}

/// Shared inputs for every action.
pub struct ActionEnv<'a> {
    pub backend: &'a LoggedBackend,
    pub problem: Problem,
    pub code_dialect: &'a str,
    pub char_budget: usize,
    pub system: String,
}

impl<'a> ActionEnv<'a> {
    pub fn new(backend: &'a LoggedBackend, problem: Problem, code_dialect: &'a str, char_budget: usize) -> Self {
        Self { backend, problem, code_dialect, char_budget, system: prompts::system_prompt(problem, code_dialect) }
    }

    fn ctx(&self) -> ParseContext<'a> {
        ParseContext { problem: self.problem, code_dialect: self.code_dialect }
    }

    fn show(&self, s: &Scored) -> String {
        show_artifact(&s.artifact, self.code_dialect)
    }

    /// One call plus at most one format-reminder retry. Backend errors are
    /// returned; unusable replies yield a `Generated` without artifact.
    pub fn generate(&self, action: ActionKind, user: String) -> Result<Generated, LlmError> {
        let user = prompts::truncate_to_budget(&user, self.char_budget);
        let req = ChatRequest::new(action.tag(), self.system.clone(), user.clone(), GENERATION_TEMPERATURE);
        let first = self.backend.chat(&req)?;
        let err = match parse_response(&first, &self.ctx()) {
            Ok(a) => return Ok(Generated { action, artifact: Some(a), failure: None, retried: false }),
            Err(e) => e,
        };
        tracing::debug!(action = %action, error = %err, "unparseable reply, retrying once");
        let retry_user = prompts::truncate_to_budget(&format!("{user}{}", prompts::FORMAT_REMINDER), self.char_budget);
        let retry = ChatRequest::new(action.tag(), self.system.clone(), retry_user, GENERATION_TEMPERATURE);
        let second = self.backend.chat(&retry)?;
        Ok(match parse_response(&second, &self.ctx()) {
            Ok(a) => Generated { action, artifact: Some(a), failure: None, retried: true },
            Err(e) => Generated { action, artifact: None, failure: Some(e.code().to_string()), retried: true },
        })
    }
}

fn vars<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    BTreeMap::from(pairs)
}

fn render(template: &str, v: &BTreeMap<&str, String>) -> String {
    prompts::render(template, v).expect("asset placeholders are covered by the action")
}

/// `n` initialization calls, personas assigned round-robin.
pub fn action_i(env: &ActionEnv<'_>, seed: &HeuristicArtifact, personas: &[String], n: usize) -> Result<Vec<Generated>, LlmError> {
    let fallback = [String::new()];
    let personas = if personas.is_empty() { &fallback[..] } else { personas };
    (0..n)
        .map(|k| {
            let user = render(
                prompts::INIT,
                &vars([("persona", personas[k % personas.len()].clone()), ("seed", show_artifact(seed, env.code_dialect))]),
            );
            env.generate(ActionKind::I, user)
        })
        .collect()
}

/// Sliding pairs over `s` rank-ordered members: (0,1), (1,2), ... wrapping.
pub fn em1_pairs(s: usize, m: usize) -> Vec<(usize, usize)> {
    if s == 0 {
        return Vec::new();
    }
    (0..m).map(|k| (k % s, (k + 1) % s)).collect()
}

pub fn em1_prompt(env: &ActionEnv<'_>, a: &Scored, b: &Scored, guidance: Option<&CognitiveGuidance>) -> String {
    let g = guidance.cloned().unwrap_or_default();
    render(
        prompts::EM1,
        &vars([
            ("reward_a", fmt_reward(a.reward)),
            ("heuristic_a", env.show(a)),
            ("reward_b", fmt_reward(b.reward)),
            ("heuristic_b", env.show(b)),
            ("recommendations", bullet_list(&g.recommendations)),
            ("avoidances", bullet_list(&g.avoidances)),
        ]),
    )
}

/// `m` contrastive generations over the rank-ordered candidate set. A
/// single-member set is paired with the global best. Replayed backends run
/// sequentially so queue order is reproducible; live backends run up to the
/// backend's in-flight bound concurrently. Results are in pair order.
pub fn action_em1(
    env: &ActionEnv<'_>,
    ranked: &[Scored],
    global_best: &Scored,
    guidance: Option<&CognitiveGuidance>,
    m: usize,
) -> Result<Vec<Generated>, LlmError> {
    let mut members: Vec<&Scored> = ranked.iter().collect();
    if members.len() == 1 {
        members.push(global_best);
    }
    let prompts: Vec<String> =
        em1_pairs(members.len(), m).into_iter().map(|(i, j)| em1_prompt(env, members[i], members[j], guidance)).collect();
    if env.backend.cursor().is_some() || env.backend.max_in_flight() == 1 {
        return prompts.into_iter().map(|p| env.generate(ActionKind::Em1, p)).collect();
    }
    let results: Vec<Result<Generated, LlmError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = prompts.into_iter().map(|p| scope.spawn(move || env.generate(ActionKind::Em1, p))).collect();
        handles.into_iter().map(|h| h.join().expect("em1 worker panicked")).collect()
    });
    results.into_iter().collect()
}

pub fn em2_prompt(env: &ActionEnv<'_>, best: &Scored, guidance: Option<&CognitiveGuidance>) -> String {
    let g = guidance.cloned().unwrap_or_default();
    render(
        prompts::EM2,
        &vars([
            ("reward", fmt_reward(best.reward)),
            ("heuristic", env.show(best)),
            ("keywords", if g.keywords.is_empty() { "(none)".into() } else { g.keywords.join(", ") }),
            ("recommendations", bullet_list(&g.recommendations)),
            ("avoidances", bullet_list(&g.avoidances)),
            ("explanations", bullet_list(&g.explanations)),
        ]),
    )
}

pub fn action_em2(env: &ActionEnv<'_>, best: &Scored, guidance: Option<&CognitiveGuidance>) -> Result<Generated, LlmError> {
    env.generate(ActionKind::Em2, em2_prompt(env, best, guidance))
}

pub fn mutation_prompt(env: &ActionEnv<'_>, kind: ActionKind, node: &Scored) -> String {
    let template = if kind == ActionKind::M2 { prompts::M2 } else { prompts::M1 };
    render(template, &vars([("reward", fmt_reward(node.reward)), ("heuristic", env.show(node))]))
}

pub fn action_m1(env: &ActionEnv<'_>, node: &Scored) -> Result<Generated, LlmError> {
    env.generate(ActionKind::M1, mutation_prompt(env, ActionKind::M1, node))
}

pub fn action_m2(env: &ActionEnv<'_>, node: &Scored) -> Result<Generated, LlmError> {
    env.generate(ActionKind::M2, mutation_prompt(env, ActionKind::M2, node))
}
