//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cogmcts::actions::ActionKind;
use cogmcts::llm::scripted::SyntheticScript;
use cogmcts::llm::{BackendConfig, ScriptEntry};
use cogmcts::{Problem, RunConfig};

/// The end-to-end setup: KP, 16 instances of 50 items, 8 initial
/// heuristics, budget 64, thinking cycle 2.
pub fn e2e_config(script: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.problem = Problem::Kp;
    cfg.seed = 7;
    cfg.dataset.n_instances = 16;
    cfg.dataset.n = 50;
    cfg.dataset.seed = 11;
    cfg.search.n_init = 8;
    cfg.search.budget = 64;
    cfg.search.thinking_cycle = 2;
    cfg.backend = BackendConfig::scripted(script);
    cfg
}

pub fn script_entries(problem: Problem, seed: u64) -> Vec<ScriptEntry> {
    SyntheticScript::new(problem, seed, 60).build()
}

pub fn write_script(path: &Path, entries: &[ScriptEntry]) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(entries).unwrap()).unwrap();
    path.to_path_buf()
}

/// Keeps only the first `keep` entries of `tag`.
pub fn truncate_tag(entries: &[ScriptEntry], tag: &str, keep: usize) -> Vec<ScriptEntry> {
    let mut seen = 0;
    entries
        .iter()
        .filter(|e| {
            if e.tag != tag {
                return true;
            }
            seen += 1;
            seen <= keep
        })
        .cloned()
        .collect()
}

pub fn ablated(mut cfg: RunConfig) -> RunConfig {
    cfg.disabled_actions = vec![ActionKind::Em1, ActionKind::Em2];
    cfg
}

/// Tags of the calls recorded in a run directory's transcript.
pub fn transcript_tags(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("transcript.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["tag"].as_str().unwrap().to_string())
        .collect()
}
