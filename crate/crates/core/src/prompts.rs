//! Prompt assets and rendering.
//!
//! Templates use `{{name}}` placeholders. Substitution is a single pass, so
//! braces inside inserted code are never reinterpreted.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::artifact::{HeuristicArtifact, SignatureKind};
use crate::exec::template::TemplateId;
use crate::Problem;

pub const SYSTEM: &str = include_str!("../assets/prompts/system.txt");
pub const INIT: &str = include_str!("../assets/prompts/i.txt");
pub const EM1: &str = include_str!("../assets/prompts/em1.txt");
pub const EM2: &str = include_str!("../assets/prompts/em2.txt");
pub const M1: &str = include_str!("../assets/prompts/m1.txt");
pub const M2: &str = include_str!("../assets/prompts/m2.txt");
pub const RAPID_PAIR: &str = include_str!("../assets/prompts/rapid_pair.txt");
pub const RAPID_SYNTH: &str = include_str!("../assets/prompts/rapid_synth.txt");
pub const COMPLEX: &str = include_str!("../assets/prompts/complex.txt");
pub const FORMAT_REMINDER: &str = include_str!("../assets/prompts/format_reminder.txt");
const PERSONAS: &str = include_str!("../assets/prompts/personas.txt");

/// Default upper bound on a rendered user prompt, in characters.
pub const DEFAULT_CHAR_BUDGET: usize = 16_000;
const TRUNCATION_MARK: &str = "\n[truncated]";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("no value for placeholder '{0}'")]
    Missing(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

/// The shipped persona roster for initialization prompts.
pub fn default_personas() -> Vec<String> {
    PERSONAS.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or(PromptError::Unterminated(offset + open))?;
        let name = after[..close].trim();
        let value = vars.get(name).ok_or_else(|| PromptError::Missing(name.to_string()))?;
        out.push_str(value);
        let consumed = open + 2 + close + 2;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Cuts `text` to at most `budget` characters, marking the cut.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    if text.chars().count() <= budget {
        return text.to_string();
    }
    let keep = budget.saturating_sub(TRUNCATION_MARK.chars().count());
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(TRUNCATION_MARK);
    out.chars().take(budget).collect()
}

/// Renders with a growing number of dropped knowledge records until the
/// result fits, then truncates as a last resort. `build(k)` must render the
/// prompt with the `k` oldest records removed.
pub fn fit_with_knowledge(
    budget: usize,
    n_records: usize,
    mut build: impl FnMut(usize) -> Result<String, PromptError>,
) -> Result<String, PromptError> {
    for dropped in 0..=n_records {
        let text = build(dropped)?;
        if text.chars().count() <= budget || dropped == n_records {
            return Ok(truncate_to_budget(&text, budget));
        }
    }
    unreachable!("loop returns on its last pass")
}

/// Formats a reward for prompts with enough digits to tell heuristics apart.
pub fn fmt_reward(r: f64) -> String {
    format!("{r:.6}")
}

/// An artifact as shown to the model: description in braces plus its code.
pub fn show_artifact(artifact: &HeuristicArtifact, code_dialect: &str) -> String {
    artifact.render(code_dialect).trim_end().to_string()
}

pub fn bullet_list(items: &[String]) -> String {
    if items.is_empty() {
        return "(none)".into();
    }
    items.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")
}

/// Task statement for the system prompt: what the heuristic computes, how it
/// is used, and both accepted dialects.
pub fn problem_brief(problem: Problem, code_dialect: &str) -> String {
    let task = match problem {
        Problem::Op => "Orienteering problem: starting and ending at the depot, visit nodes in the unit square to collect as much prize as possible without exceeding the maximum tour length. Ant colony optimization builds routes with probabilities proportional to pheromone times your heuristic matrix eta[i][j] (attractiveness of moving from i to j).",
        Problem::Cvrp => "Capacitated vehicle routing: serve every customer's demand from the depot with vehicles of fixed capacity, minimizing total distance. Ant colony optimization builds routes with probabilities proportional to pheromone times your heuristic matrix eta[i][j].",
        Problem::Mkp => "Multiple knapsack with m constraints: choose items maximizing total value while every constraint's weighted load stays within its capacity. Ant colony optimization picks items with probabilities proportional to pheromone times your per-item attractiveness eta[i].",
        Problem::Tsp => "Traveling salesman: find the shortest closed tour through all cities. Guided local search runs 2-opt and penalizes tour edges whose indicator eta[i][j] / (1 + penalty) is largest, so your matrix says which edges are bad to keep.",
        Problem::Kp => "0/1 knapsack: choose items maximizing total value within the capacity. A construction loop repeatedly asks your scorer for one score per item and adds the feasible item with the highest score.",
    };
    let mut out = format!("{task}\n\nTemplate documents (fence name \"template\") are TOML with an `id` and numeric parameters:\n");
    for id in TemplateId::for_problem(problem) {
        let params: Vec<String> = id.params().iter().map(|p| format!("{} in [{}, {}], default {}", p.name, p.min, p.max, p.default)).collect();
        let _ = writeln!(out, "- id = \"{}\": {} ({})", id.name(), id.formula(), params.join("; "));
    }
    let code_contract = match problem.signature_kind() {
        SignatureKind::EdgeMatrix => "define `heuristic(instance)` returning an N x N list of non-negative numbers; `instance` holds the problem fields plus `distances`",
        SignatureKind::ItemVector => "define `heuristic(instance)` returning one non-negative number per item; `instance` has `values`, `weights` (m rows) and `capacities`",
        SignatureKind::StepScorer => "define `score(state)` returning one number per item; `state` has `values`, `weights`, `capacity`, `remaining_capacity` and `selected`",
    };
    let _ = write!(out, "\nCode (fence name \"{code_dialect}\"): {code_contract}.");
    out
}

pub fn system_prompt(problem: Problem, code_dialect: &str) -> String {
    let vars = BTreeMap::from([("problem_brief", problem_brief(problem, code_dialect)), ("code_dialect", code_dialect.to_string())]);
    render(SYSTEM, &vars).expect("system asset placeholders are fixed")
}
