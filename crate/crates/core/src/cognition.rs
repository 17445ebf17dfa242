//! Cognitive guidance: candidate-set sampling, rapid and complex cognition,
//! and consistency-based routing of experience into knowledge bases.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::Scored;
use crate::llm::{ChatRequest, LlmError, LoggedBackend, COGNITION_TEMPERATURE};
use crate::prompts::{self, bullet_list, fmt_reward, show_artifact};
use crate::tree::NodeId;

/// Default tolerance for "the global best changed".
pub const CKV_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CognitionError {
    #[error("cognition unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub cycle_index: u64,
    pub text: String,
    /// Digests of the candidate-set members the record was derived from.
    pub ccs_digest: Vec<String>,
    pub created_at_budget: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeKind {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub positive: VecDeque<ExperienceRecord>,
    pub negative: VecDeque<ExperienceRecord>,
    pub capacity: usize,
}

impl KnowledgeBase {
    pub fn new(capacity: usize) -> Self {
        Self { positive: VecDeque::new(), negative: VecDeque::new(), capacity }
    }

    pub fn push(&mut self, kind: KnowledgeKind, record: ExperienceRecord) {
        let list = match kind {
            KnowledgeKind::Positive => &mut self.positive,
            KnowledgeKind::Negative => &mut self.negative,
        };
        list.push_back(record);
        while list.len() > self.capacity {
            list.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// K+ when the best reward moved by more than `epsilon`, K− otherwise.
pub fn ckv_route(record: ExperienceRecord, best_before: f64, best_after: f64, kb: &mut KnowledgeBase, epsilon: f64) -> KnowledgeKind {
    let kind = if (best_after - best_before).abs() > epsilon { KnowledgeKind::Positive } else { KnowledgeKind::Negative };
    kb.push(kind, record);
    kind
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CognitiveGuidance {
    pub keywords: Vec<String>,
    pub recommendations: Vec<String>,
    pub avoidances: Vec<String>,
    pub explanations: Vec<String>,
}

impl CognitiveGuidance {
    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty() && self.recommendations.is_empty() && self.avoidances.is_empty() && self.explanations.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Keywords,
    Recommendations,
    Avoid,
    Explanations,
}

fn section_label(line: &str) -> Option<(Section, &str)> {
    let (head, rest) = line.split_once(':')?;
    let head = head.trim().trim_matches(|c| c == '*' || c == '#').trim().to_ascii_lowercase();
    let section = match head.as_str() {
        "keywords" | "keyword" => Section::Keywords,
        "recommendations" | "recommendation" => Section::Recommendations,
        "avoid" | "avoidances" | "avoidance" | "avoidance cues" => Section::Avoid,
        "explanations" | "explanation" => Section::Explanations,
        _ => return None,
    };
    Some((section, rest.trim()))
}

fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    let t = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")).or_else(|| t.strip_prefix("• ")).unwrap_or(t);
    // Numbered items: "1. text" or "2) text".
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let after = &t[digits..];
        if let Some(rest) = after.strip_prefix(". ").or_else(|| after.strip_prefix(") ")) {
            return rest.trim();
        }
    }
    t.trim()
}

/// Parses labeled sections. Missing sections stay empty; `None` when no
/// section has content.
pub fn parse_guidance(text: &str) -> Option<CognitiveGuidance> {
    let mut g = CognitiveGuidance::default();
    let mut current: Option<Section> = None;
    let add = |g: &mut CognitiveGuidance, section: Section, item: &str| {
        let item = strip_bullet(item);
        if item.is_empty() {
            return;
        }
        match section {
            Section::Keywords => {
                g.keywords.extend(item.split(',').map(str::trim).filter(|k| !k.is_empty()).map(String::from))
            }
            Section::Recommendations => g.recommendations.push(item.to_string()),
            Section::Avoid => g.avoidances.push(item.to_string()),
            Section::Explanations => g.explanations.push(item.to_string()),
        }
    };
    for line in text.lines() {
        if let Some((section, inline)) = section_label(line) {
            current = Some(section);
            add(&mut g, section, inline);
        } else if let Some(section) = current {
            add(&mut g, section, line);
        }
    }
    (!g.is_empty()).then_some(g)
}

/// Normalized rank weights `1/(r + 1 + N)` for 1-based ranks.
pub fn elite_weights(ranks: &[usize], n: usize) -> Vec<f64> {
    let raw: Vec<f64> = ranks.iter().map(|&r| 1.0 / (r as f64 + 1.0 + n as f64)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub uct_member: NodeId,
    /// Sampled elites in draw order with their 1-based ranks.
    pub elite_members: Vec<(NodeId, usize)>,
}

impl CandidateSet {
    pub fn members(&self) -> Vec<NodeId> {
        std::iter::once(self.uct_member).chain(self.elite_members.iter().map(|&(n, _)| n)).collect()
    }

    pub fn len(&self) -> usize {
        1 + self.elite_members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Draws `min(real_m, |elites|)` elites without replacement (each draw
/// renormalizes over what is left), then drops the UCT node if drawn.
/// `elites` is best-first, so position `k` has rank `k + 1`.
pub fn build_ccs(uct_node: NodeId, elites: &[NodeId], real_m: usize, rng: &mut ChaCha8Rng) -> CandidateSet {
    let n = elites.len();
    let mut pool: Vec<(NodeId, usize)> = elites.iter().enumerate().map(|(k, &id)| (id, k + 1)).collect();
    let mut weights: Vec<f64> = pool.iter().map(|&(_, r)| 1.0 / (r as f64 + 1.0 + n as f64)).collect();
    let mut drawn = Vec::new();
    for _ in 0..real_m.min(n) {
        let total: f64 = weights.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, &w) in weights.iter().enumerate() {
            if x < w {
                pick = k;
                break;
            }
            x -= w;
        }
        drawn.push(pool.remove(pick));
        weights.remove(pick);
    }
    drawn.retain(|&(id, _)| id != uct_node);
    CandidateSet { uct_member: uct_node, elite_members: drawn }
}

/// Orders members best-first (ties by node id).
pub fn rank_members(members: &mut [Scored]) {
    members.sort_by(|a, b| b.reward.total_cmp(&a.reward).then(a.node.cmp(&b.node)));
}

fn chat(backend: &LoggedBackend, tag: &str, user: String) -> Result<String, LlmError> {
    backend.chat(&ChatRequest::new(tag, cognition_system(), user, COGNITION_TEMPERATURE))
}

fn cognition_system() -> String {
    "You analyze heuristics for combinatorial optimization and report concise, actionable findings.".to_string()
}

/// Adjacent-pair comparisons in rank order followed by one synthesis call.
/// `members` must already be ranked.
pub fn rapid_cognition(
    members: &[Scored],
    backend: &LoggedBackend,
    code_dialect: &str,
    char_budget: usize,
    cycle_index: u64,
    t: u64,
) -> Result<ExperienceRecord, CognitionError> {
    if members.is_empty() {
        return Err(CognitionError::Unavailable("empty candidate set".into()));
    }
    let pair_prompts: Vec<String> = members
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let v = BTreeMap::from([
                ("rank_a", (k + 1).to_string()),
                ("reward_a", fmt_reward(w[0].reward)),
                ("heuristic_a", show_artifact(&w[0].artifact, code_dialect)),
                ("rank_b", (k + 2).to_string()),
                ("reward_b", fmt_reward(w[1].reward)),
                ("heuristic_b", show_artifact(&w[1].artifact, code_dialect)),
            ]);
            prompts::truncate_to_budget(&prompts::render(prompts::RAPID_PAIR, &v).expect("fixed placeholders"), char_budget)
        })
        .collect();
    let analyses: Vec<String> = if backend.cursor().is_some() || backend.max_in_flight() == 1 {
        pair_prompts.into_iter().map(|p| chat(backend, "rapid-pair", p)).collect::<Result<_, _>>()?
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = pair_prompts.into_iter().map(|p| scope.spawn(move || chat(backend, "rapid-pair", p))).collect();
            handles.into_iter().map(|h| h.join().expect("cognition worker panicked")).collect::<Result<Vec<_>, _>>()
        })?
    };
    let ranking = members
        .iter()
        .enumerate()
        .map(|(k, m)| format!("{}. reward {} [{}]\n{}", k + 1, fmt_reward(m.reward), m.artifact.short_digest(), show_artifact(&m.artifact, code_dialect)))
        .collect::<Vec<_>>()
        .join("\n\n");
    let analyses_text = if analyses.is_empty() {
        "(only one heuristic, no comparisons)".to_string()
    } else {
        analyses.iter().enumerate().map(|(k, a)| format!("{}-vs-{}: {}", k + 1, k + 2, a.trim())).collect::<Vec<_>>().join("\n")
    };
    let v = BTreeMap::from([("ranking", ranking), ("analyses", analyses_text)]);
    let user = prompts::truncate_to_budget(&prompts::render(prompts::RAPID_SYNTH, &v).expect("fixed placeholders"), char_budget);
    let text = chat(backend, "rapid-synth", user)?.trim().to_string();
    if text.is_empty() {
        return Err(CognitionError::Unavailable("empty synthesis".into()));
    }
    Ok(ExperienceRecord {
        cycle_index,
        text,
        ccs_digest: members.iter().map(|m| m.artifact.digest.clone()).collect(),
        created_at_budget: t,
    })
}

/// Fuses `e_k` with the newest `g_pos`/`g_neg` knowledge records into
/// structured guidance. One format-reminder retry on an unparseable reply.
pub fn complex_cognition(
    e_k: &ExperienceRecord,
    kb: &KnowledgeBase,
    g_pos: usize,
    g_neg: usize,
    backend: &LoggedBackend,
    char_budget: usize,
) -> Result<CognitiveGuidance, CognitionError> {
    let pos: Vec<&ExperienceRecord> = kb.positive.iter().rev().take(g_pos).rev().collect();
    let neg: Vec<&ExperienceRecord> = kb.negative.iter().rev().take(g_neg).rev().collect();
    // Oldest first, across both lists, is the drop order under the budget.
    let mut by_age: Vec<&ExperienceRecord> = pos.iter().chain(neg.iter()).copied().collect();
    by_age.sort_by_key(|r| (r.cycle_index, r.created_at_budget));
    let build = |dropped: usize| {
        let gone = &by_age[..dropped];
        let keep = |list: &[&ExperienceRecord]| -> Vec<String> {
            list.iter().filter(|r| !gone.iter().any(|g| std::ptr::eq(*g, **r))).map(|r| r.text.clone()).collect()
        };
        let v = BTreeMap::from([
            ("experience", e_k.text.clone()),
            ("positive", bullet_list(&keep(&pos))),
            ("negative", bullet_list(&keep(&neg))),
        ]);
        prompts::render(prompts::COMPLEX, &v)
    };
    let user = prompts::fit_with_knowledge(char_budget, by_age.len(), build).expect("fixed placeholders");
    if let Some(g) = parse_guidance(&chat(backend, "complex", user.clone())?) {
        return Ok(g);
    }
    let retry = prompts::truncate_to_budget(&format!("{user}{}", prompts::FORMAT_REMINDER), char_budget);
    parse_guidance(&chat(backend, "complex", retry)?)
        .ok_or_else(|| CognitionError::Unavailable("guidance reply had no labeled sections".into()))
}
