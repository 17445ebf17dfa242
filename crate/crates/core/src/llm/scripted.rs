//! Deterministic replay backend.
//!
//! A script is a JSON array of `{"tag": ..., "text": ...}` records. Each tag
//! has its own queue, consumed in file order, so fixtures survive prompt
//! wording changes.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, LlmError};
use crate::artifact::{Dialect, HeuristicArtifact};
use crate::exec::template::{TemplateDocument, TemplateId};
use crate::Problem;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: String,
    pub text: String,
}

impl ScriptEntry {
    pub fn new(tag: &str, text: impl Into<String>) -> Self {
        Self { tag: tag.to_string(), text: text.into() }
    }
}

struct Replay {
    queues: BTreeMap<String, Vec<String>>,
    cursor: BTreeMap<String, usize>,
}

pub struct ScriptedBackend {
    state: Mutex<Replay>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let mut queues: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for e in entries {
            queues.entry(e.tag).or_default().push(e.text);
        }
        Self { state: Mutex::new(Replay { queues, cursor: BTreeMap::new() }) }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("reading script {}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("parsing script {}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut st = self.state.lock().expect("script state poisoned");
        let pos = st.cursor.get(&req.tag).copied().unwrap_or(0);
        let text = st
            .queues
            .get(&req.tag)
            .and_then(|q| q.get(pos))
            .cloned()
            .ok_or_else(|| LlmError::Fixture(format!("no scripted response left for tag '{}' (position {pos})", req.tag)))?;
        st.cursor.insert(req.tag.clone(), pos + 1);
        Ok(text)
    }

    fn cursor(&self) -> Option<BTreeMap<String, usize>> {
        Some(self.state.lock().expect("script state poisoned").cursor.clone())
    }

    fn restore_cursor(&self, cursor: &BTreeMap<String, usize>) -> Result<(), LlmError> {
        let mut st = self.state.lock().expect("script state poisoned");
        for (tag, &pos) in cursor {
            let len = st.queues.get(tag).map_or(0, Vec::len);
            if pos > len {
                return Err(LlmError::Fixture(format!("cursor {pos} for tag '{tag}' is past the script end ({len})")));
            }
        }
        st.cursor = cursor.clone();
        Ok(())
    }
}

/// Generation tags, in the order scripts list them.
pub const GENERATION_TAGS: [&str; 5] = ["i", "em1", "em2", "m1", "m2"];
pub const COGNITION_TAGS: [&str; 3] = ["rapid-pair", "rapid-synth", "complex"];

/// Builds a synthetic script of template-dialect responses for `problem`.
///
/// The first `i` response is the registry default for the problem (for KP,
/// the exact greedy-construct heuristic). Later responses draw parameters
/// near the defaults.
#[derive(Clone, Debug)]
pub struct SyntheticScript {
    pub problem: Problem,
    pub seed: u64,
    pub per_tag: usize,
    /// Every k-th generation response (per tag) is malformed.
    pub malformed_every: Option<usize>,
}

impl SyntheticScript {
    pub fn new(problem: Problem, seed: u64, per_tag: usize) -> Self {
        Self { problem, seed, per_tag, malformed_every: None }
    }

    pub fn build(&self) -> Vec<ScriptEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let templates = TemplateId::for_problem(self.problem);
        let mut out = Vec::new();
        for tag in GENERATION_TAGS {
            for k in 0..self.per_tag {
                if self.malformed_every.is_some_and(|m| m > 0 && (k + 1) % m == 0) {
                    out.push(ScriptEntry::new(tag, "I could not come up with anything this time."));
                    continue;
                }
                let doc = if tag == "i" && k == 0 {
                    TemplateDocument::new(templates[0], &[]).expect("defaults are in range")
                } else {
                    random_document(&mut rng, &templates)
                };
                let art = HeuristicArtifact::new(
                    format!("{} variant {k} proposed for {tag}", doc.id.name()),
                    Dialect::Template,
                    doc.to_text(),
                    doc.id.signature_kind(),
                );
                out.push(ScriptEntry::new(tag, art.render("python")));
            }
        }
        for k in 0..self.per_tag {
            out.push(ScriptEntry::new(
                "rapid-pair",
                format!("Comparison {k}: the stronger heuristic weighs the dominant term more heavily."),
            ));
        }
        for k in 0..self.per_tag {
            out.push(ScriptEntry::new(
                "rapid-synth",
                format!("Experience {k}: exponents near one on the primary ratio work best; extreme values hurt."),
            ));
        }
        for k in 0..self.per_tag {
            out.push(ScriptEntry::new(
                "complex",
                format!(
                    "Keywords: ratio, exponent, balance {k}\n\
                     Recommendations:\n- keep the primary exponent close to 1\n- try small secondary terms\n\
                     Avoid:\n- exponents above 3\n\
                     Explanations:\n- large exponents amplify noise in the instance data"
                ),
            ));
        }
        out
    }
}

fn random_document(rng: &mut ChaCha8Rng, templates: &[TemplateId]) -> TemplateDocument {
    let id = templates[rng.gen_range(0..templates.len())];
    let overrides: Vec<(&str, f64)> = id
        .params()
        .iter()
        .map(|p| {
            let lo = (p.default - 0.5).max(p.min);
            let hi = (p.default + 0.5).min(p.max);
            let v: f64 = rng.gen_range(lo..=hi);
            (p.name, (v * 100.0).round() / 100.0)
        })
        .collect();
    TemplateDocument::new(id, &overrides).expect("sampled inside the declared ranges")
}
