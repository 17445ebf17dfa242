//! Run records: evaluation events, the final report, checkpoints, and the
//! on-disk run directory layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actions::ActionKind;
use crate::artifact::HeuristicArtifact;
use crate::cognition::{ExperienceRecord, KnowledgeBase};
use crate::digest::json_digest;
use crate::exec::EvalStatus;
use crate::llm::TranscriptEntry;
use crate::tree::{NodeId, QualityBounds, TreeSnapshot};
use crate::Problem;

use super::config::RunConfig;
use super::RunState;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Widening,
    Main,
}

/// Outcome of one budget unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventStatus {
    Ok,
    Error,
    Timeout,
    NoArtifact,
    Duplicate,
}

impl From<EvalStatus> for EventStatus {
    fn from(s: EvalStatus) -> Self {
        match s {
            EvalStatus::Ok => EventStatus::Ok,
            EvalStatus::Error => EventStatus::Error,
            EvalStatus::Timeout => EventStatus::Timeout,
        }
    }
}

/// One evaluation attempt. `t` is the budget used after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEvent {
    pub t: u64,
    pub iteration: Option<u64>,
    pub phase: Phase,
    pub action: ActionKind,
    pub status: EventStatus,
    pub node: Option<NodeId>,
    pub parent: NodeId,
    pub reward: Option<f64>,
    pub digest: Option<String>,
    pub message: Option<String>,
    pub lambda: f64,
    pub bounds: QualityBounds,
    /// Global-best reward after this event.
    pub best_reward: Option<f64>,
    pub new_global_best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: u64,
    pub best_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestHeuristic {
    pub node: NodeId,
    pub reward: f64,
    pub artifact: HeuristicArtifact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub problem: Problem,
    pub dataset_digest: String,
    /// Greedy-construct reward on the same dataset (KP only).
    pub baseline_reward: Option<f64>,
    pub best: BestHeuristic,
    pub t: u64,
    pub n_init: u64,
    pub iterations: u64,
    pub widenings: u64,
    pub fanout_sum: u64,
    /// Thinking cycles whose cognition step failed and ran unguided.
    pub cognition_failures: u64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub events: Vec<EvalEvent>,
    pub tree: TreeSnapshot,
    pub knowledge: KnowledgeBase,
    pub experiences: Vec<ExperienceRecord>,
    /// SHA-256 over every field above; wall-clock data is kept elsewhere.
    pub digest: String,
}

impl RunReport {
    pub fn compute_digest(&self) -> String {
        let mut copy = self.clone();
        copy.digest.clear();
        json_digest(&copy)
    }
}

/// Best-reward series derived from events: one point per event once a best
/// exists.
pub fn trajectory_from_events(events: &[EvalEvent]) -> Vec<TrajectoryPoint> {
    events.iter().filter_map(|e| e.best_reward.map(|b| TrajectoryPoint { t: e.t, best_reward: b })).collect()
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: RunConfig,
    pub dataset_digest: String,
    pub state: RunState,
    pub backend_cursor: Option<BTreeMap<String, usize>>,
    pub transcript_len: usize,
}

/// File names inside a run directory.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.toml")
    }
    pub fn metadata(&self) -> PathBuf {
        self.path("metadata.json")
    }
    pub fn events(&self) -> PathBuf {
        self.path("events.jsonl")
    }
    pub fn transcript(&self) -> PathBuf {
        self.path("transcript.jsonl")
    }
    pub fn tree(&self) -> PathBuf {
        self.path("tree.json")
    }
    pub fn best_artifact(&self) -> PathBuf {
        self.path("best_artifact.txt")
    }
    pub fn knowledge(&self) -> PathBuf {
        self.path("knowledge.json")
    }
    pub fn report(&self) -> PathBuf {
        self.path("report.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.path("checkpoint.json")
    }
}

/// Writes via a temporary file so readers never see a partial document.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(std::io::Error::other)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    for item in items {
        let mut line = serde_json::to_vec(item).map_err(std::io::Error::other)?;
        line.push(b'\n');
        f.write_all(&line)?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}

/// Reads the first `n` transcript entries (the part covered by a checkpoint).
pub fn read_transcript_prefix(path: &Path, n: usize) -> std::io::Result<Vec<TranscriptEntry>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut all: Vec<TranscriptEntry> = read_jsonl(path)?;
    if all.len() < n {
        return Err(std::io::Error::other(format!("transcript has {} entries, checkpoint expects {n}", all.len())));
    }
    all.truncate(n);
    Ok(all)
}
