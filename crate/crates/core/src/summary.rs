//! Read-only summaries of a run directory: the best-reward trajectory as
//! CSV, per-action effectiveness, and the knowledge base.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::actions::ActionKind;
use crate::cognition::{ExperienceRecord, KnowledgeBase};
use crate::orchestrator::report::{read_jsonl, trajectory_from_events, RunDir};
use crate::orchestrator::{EvalEvent, EventStatus};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActionStats {
    pub evaluations: u64,
    pub accepted: u64,
    pub failed: u64,
    pub duplicates: u64,
    pub new_global_best: u64,
}

/// `t,best_reward` rows, one per event once a best exists.
pub fn trajectory_csv(events: &[EvalEvent]) -> String {
    let mut out = String::from("t,best_reward\n");
    for p in trajectory_from_events(events) {
        let _ = writeln!(out, "{},{}", p.t, p.best_reward);
    }
    out
}

pub fn action_stats(events: &[EvalEvent]) -> BTreeMap<ActionKind, ActionStats> {
    let mut table: BTreeMap<ActionKind, ActionStats> = BTreeMap::new();
    for e in events {
        let s = table.entry(e.action).or_default();
        s.evaluations += 1;
        match e.status {
            EventStatus::Ok => s.accepted += 1,
            EventStatus::Duplicate => s.duplicates += 1,
            EventStatus::Error | EventStatus::Timeout | EventStatus::NoArtifact => s.failed += 1,
        }
        s.new_global_best += u64::from(e.new_global_best);
    }
    table
}

pub fn action_table(events: &[EvalEvent]) -> String {
    let mut out = format!("{:<6} {:>6} {:>8} {:>6} {:>6} {:>8}\n", "action", "evals", "accepted", "failed", "dupes", "new_best");
    for (a, s) in action_stats(events) {
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>8} {:>6} {:>6} {:>8}",
            a.tag(),
            s.evaluations,
            s.accepted,
            s.failed,
            s.duplicates,
            s.new_global_best
        );
    }
    out
}

#[derive(Deserialize)]
struct KnowledgeFile {
    knowledge: KnowledgeBase,
    experiences: Vec<ExperienceRecord>,
}

fn first_line(text: &str, max: usize) -> String {
    let line = text.lines().next().unwrap_or("").trim();
    if line.chars().count() > max {
        format!("{}...", line.chars().take(max).collect::<String>())
    } else {
        line.to_string()
    }
}

pub fn knowledge_summary(kb: &KnowledgeBase, experiences: &[ExperienceRecord]) -> String {
    let mut out = format!(
        "experiences: {}\npositive: {}\nnegative: {}\n",
        experiences.len(),
        kb.positive.len(),
        kb.negative.len()
    );
    for (label, list) in [("+", &kb.positive), ("-", &kb.negative)] {
        for r in list {
            let _ = writeln!(out, "{label} cycle {:>3} t={:>5} {}", r.cycle_index, r.created_at_budget, first_line(&r.text, 80));
        }
    }
    out
}

/// Renders the full report for a run directory without writing to it.
pub fn render_run_dir(root: &Path) -> Result<String, String> {
    let dir = RunDir::new(root);
    let path = dir.events();
    let events: Vec<EvalEvent> = read_jsonl(&path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    if events.is_empty() {
        return Err(format!("{} has no events", path.display()));
    }
    let path = dir.knowledge();
    let text = std::fs::read_to_string(&path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let kf: KnowledgeFile = serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()))?;
    let mut out = String::new();
    out.push_str("# trajectory\n");
    out.push_str(&trajectory_csv(&events));
    out.push_str("\n# actions\n");
    out.push_str(&action_table(&events));
    out.push_str("\n# knowledge\n");
    out.push_str(&knowledge_summary(&kf.knowledge, &kf.experiences));
    Ok(out)
}
