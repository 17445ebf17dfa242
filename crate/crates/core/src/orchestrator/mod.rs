//! The search loop: initialization, UCT descent with progressive widening,
//! thinking cycles, expansion, and run-directory persistence.

pub mod config;
pub mod elite;
pub mod report;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{self, ActionEnv, Generated, Scored};
use crate::artifact::{Dialect, HeuristicArtifact};
use crate::cognition::{
    build_ccs, ckv_route, complex_cognition, rank_members, rapid_cognition, CognitiveGuidance, ExperienceRecord,
    KnowledgeBase,
};
use crate::cop::baseline::baseline_gc;
use crate::cop::{Dataset, FrameworkParams, Problem};
use crate::digest::json_digest;
use crate::exec::template::{TemplateDocument, TemplateId};
use crate::exec::HeuristicExecutor;
use crate::llm::{build_backend, BackendConfig, LlmError, LoggedBackend};
use crate::prompts::default_personas;
use crate::tree::{lambda_decay, NodeId, QualityBounds, SearchTree};

pub use config::{DatasetConfig, Fanout, RunConfig, SearchConfig};
pub use elite::EliteSet;
pub use report::{
    BestHeuristic, Checkpoint, EvalEvent, EventStatus, Phase, RunDir, RunReport, TrajectoryPoint,
};

use report::{
    append_jsonl, read_transcript_prefix, trajectory_from_events, write_atomic, write_jsonl, CHECKPOINT_SCHEMA_VERSION,
    REPORT_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("run aborted at t={t}, iteration {iteration}: {reason}")]
    Aborted { t: u64, iteration: u64, reason: String },
    #[error("run directory error: {0}")]
    Io(String),
}

fn io_err(what: &str, path: &Path) -> impl FnOnce(std::io::Error) -> RunError {
    let context = format!("{what} {}", path.display());
    move |e| RunError::Io(format!("{context}: {e}"))
}

/// A thinking cycle in progress: its experience record and the best
/// reward before and after the guided evolution steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingCycle {
    pub record: ExperienceRecord,
    pub best_before: f64,
    pub best_after: Option<f64>,
}

/// Everything needed to continue a run from an iteration boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub t: u64,
    pub init_done: bool,
    /// Completed main iterations.
    pub iteration: u64,
    pub widenings: u64,
    pub cognition_failures: u64,
    pub tree: SearchTree,
    pub bounds: QualityBounds,
    pub elites: EliteSet,
    pub global_best: Option<(NodeId, f64)>,
    pub kb: KnowledgeBase,
    pub experiences: Vec<ExperienceRecord>,
    pub guidance: Option<CognitiveGuidance>,
    pub pending: Option<PendingCycle>,
    pub events: Vec<EvalEvent>,
}

impl RunState {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            t: 0,
            init_done: false,
            iteration: 0,
            widenings: 0,
            cognition_failures: 0,
            tree: SearchTree::new(cfg.search.max_depth, cfg.search.widening_factor),
            bounds: QualityBounds::default(),
            elites: EliteSet::new(cfg.search.elite_k),
            global_best: None,
            kb: KnowledgeBase::new(cfg.search.kb_capacity),
            experiences: Vec::new(),
            guidance: None,
            pending: None,
            events: Vec::new(),
        }
    }
}

/// The artifact shown to action i: the registry default for the problem.
pub fn seed_artifact(problem: Problem) -> HeuristicArtifact {
    let id = TemplateId::for_problem(problem)[0];
    let doc = TemplateDocument::new(id, &[]).expect("defaults are in range");
    HeuristicArtifact::new(
        format!("Baseline {} heuristic with default parameters", id.name()),
        Dialect::Template,
        doc.to_text(),
        id.signature_kind(),
    )
}

fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (iteration.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    dataset: Dataset,
    dataset_digest: String,
    params: FrameworkParams,
    executor: HeuristicExecutor,
    backend: LoggedBackend,
    fanout: Fanout,
    personas: Vec<String>,
    seed: HeuristicArtifact,
    state: RunState,
    dir: Option<RunDir>,
    persisted_transcript: usize,
}

enum Step {
    Continue,
    Abort(LlmError),
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig, backend: LoggedBackend, dir: Option<RunDir>) -> Result<Self, RunError> {
        cfg.validate().map_err(RunError::Config)?;
        let dataset = cfg.load_dataset().map_err(RunError::Config)?;
        Ok(Self {
            dataset_digest: dataset.digest(),
            dataset,
            params: cfg.framework_params(),
            executor: HeuristicExecutor::new(cfg.executor.clone()),
            backend,
            fanout: cfg.effective_fanout(),
            personas: cfg.personas.clone().unwrap_or_else(default_personas),
            seed: seed_artifact(cfg.problem),
            state: RunState::new(cfg),
            dir,
            persisted_transcript: 0,
            cfg,
        })
    }

    fn env(&self) -> ActionEnv<'_> {
        ActionEnv::new(&self.backend, self.cfg.problem, &self.cfg.executor.code_dialect, self.cfg.search.char_budget)
    }

    fn lambda(&self) -> f64 {
        lambda_decay(self.state.t, self.cfg.search.budget, self.cfg.search.lambda0).expect("budget validated positive")
    }

    fn scored(&self, id: NodeId) -> Scored {
        let n = self.state.tree.node(id);
        Scored {
            node: id,
            artifact: n.artifact.clone().expect("non-root node has an artifact"),
            reward: n.reward.expect("non-root node has a reward"),
        }
    }

    fn best_reward(&self) -> f64 {
        self.state.global_best.map_or(f64::NEG_INFINITY, |(_, r)| r)
    }

    /// Spends one budget unit on `gen`: evaluates it and, if usable, attaches
    /// it under `parent`.
    fn consume(&mut self, gen: Generated, parent: NodeId, phase: Phase) -> Option<NodeId> {
        self.state.t += 1;
        let t = self.state.t;
        let iteration = (phase != Phase::Init).then_some(self.state.iteration);
        let mut event = EvalEvent {
            t,
            iteration,
            phase,
            action: gen.action,
            status: EventStatus::NoArtifact,
            node: None,
            parent,
            reward: None,
            digest: None,
            message: gen.failure.clone(),
            lambda: self.lambda(),
            bounds: self.state.bounds,
            best_reward: self.state.global_best.map(|(_, r)| r),
            new_global_best: false,
        };
        let Some(artifact) = gen.artifact else {
            self.state.events.push(event);
            return None;
        };
        event.digest = Some(artifact.digest.clone());
        if self.state.tree.contains_digest(&artifact.digest) {
            event.status = EventStatus::Duplicate;
            event.message = Some("payload already in the tree".into());
            self.state.events.push(event);
            return None;
        }
        let res = self.executor.evaluate(&artifact, &self.dataset, &self.params);
        event.status = res.status.into();
        event.message = res.message.clone();
        let reward = match res.reward {
            Some(r) if res.is_ok() && r.is_finite() => r,
            _ => {
                if event.status == EventStatus::Ok {
                    event.status = EventStatus::Error;
                    event.message = Some("non-finite reward".into());
                }
                self.state.events.push(event);
                return None;
            }
        };
        let node = self
            .state
            .tree
            .add_child(parent, artifact, gen.action.origin(), reward, t)
            .expect("parent depth checked by the caller");
        self.state.bounds = self.state.bounds.updated(&[reward]);
        self.state.elites.update(node, reward);
        if reward > self.best_reward() {
            self.state.global_best = Some((node, reward));
            event.new_global_best = true;
        }
        event.status = EventStatus::Ok;
        event.node = Some(node);
        event.reward = Some(reward);
        event.bounds = self.state.bounds;
        event.best_reward = Some(self.best_reward());
        self.state.events.push(event);
        Some(node)
    }

    fn init(&mut self) -> Step {
        let n = self.cfg.search.n_init;
        let gens = match actions::action_i(&self.env(), &self.seed, &self.personas, n) {
            Ok(g) => g,
            Err(e) => return Step::Abort(e),
        };
        let root = self.state.tree.root();
        for g in gens {
            if self.consume(g, root, Phase::Init).is_some() {
                self.state.tree.backpropagate(root, 1);
            }
        }
        self.state.init_done = true;
        Step::Continue
    }

    /// Adds one child to `node`: action i with a rotating persona at the
    /// root, mutation m1 elsewhere.
    fn widen(&mut self, node: NodeId) -> Result<(), LlmError> {
        let gen = if node == self.state.tree.root() {
            let persona = self.personas[(self.state.widenings as usize) % self.personas.len().max(1)].clone();
            actions::action_i(&self.env(), &self.seed, &[persona], 1)?.remove(0)
        } else {
            actions::action_m1(&self.env(), &self.scored(node))?
        };
        self.state.widenings += 1;
        if self.consume(gen, node, Phase::Widening).is_some() {
            self.state.tree.backpropagate(node, 1);
        }
        Ok(())
    }

    /// UCT descent from the root, widening eligible inner nodes on the way.
    /// Stops at a leaf or at depth H.
    fn descend(&mut self, lambda: f64) -> Result<NodeId, LlmError> {
        let root = self.state.tree.root();
        let mut cur = root;
        loop {
            let node = self.state.tree.node(cur);
            if cur != root && (node.is_leaf() || node.depth >= self.state.tree.max_depth()) {
                return Ok(cur);
            }
            if self.state.tree.widening_eligible(cur) {
                self.widen(cur)?;
            }
            cur = self.state.tree.best_child(cur, self.state.bounds, lambda).expect("inner node has children");
        }
    }

    fn cognition(&mut self, ranked: &[Scored]) {
        let k = self.state.iteration / self.cfg.search.thinking_cycle;
        let s = &self.cfg.search;
        let outcome = rapid_cognition(ranked, &self.backend, &self.cfg.executor.code_dialect, s.char_budget, k, self.state.t)
            .and_then(|rec| {
                let g = complex_cognition(&rec, &self.state.kb, s.g_pos, s.g_neg, &self.backend, s.char_budget);
                Ok((rec, g))
            });
        match outcome {
            Ok((rec, guidance)) => {
                self.state.guidance = match guidance {
                    Ok(g) => Some(g),
                    Err(e) => {
                        tracing::warn!(cycle = k, error = %e, "guidance unavailable, evolving without it");
                        self.state.cognition_failures += 1;
                        None
                    }
                };
                self.state.experiences.push(rec.clone());
                self.state.pending = Some(PendingCycle { record: rec, best_before: self.best_reward(), best_after: None });
            }
            Err(e) => {
                tracing::warn!(cycle = k, error = %e, "cognition failed, cycle runs unguided");
                self.state.cognition_failures += 1;
            }
        }
    }

    fn iterate(&mut self) -> Step {
        match self.iterate_inner() {
            Ok(()) => Step::Continue,
            Err(e) => Step::Abort(e),
        }
    }

    fn iterate_inner(&mut self) -> Result<(), LlmError> {
        let k = self.state.iteration;
        let c_t = self.cfg.search.thinking_cycle;
        let mut rng = iteration_rng(self.cfg.seed, k);
        let lambda = self.lambda();
        let selected = self.descend(lambda)?;
        let sel = self.state.tree.node(selected);
        let parent = if sel.depth >= self.state.tree.max_depth() { sel.parent.expect("non-root") } else { selected };

        let ccs = build_ccs(selected, &self.state.elites.ids(), self.cfg.search.real_m, &mut rng);
        let mut ranked: Vec<Scored> = ccs.members().into_iter().map(|id| self.scored(id)).collect();
        rank_members(&mut ranked);

        if k % c_t == 0 {
            self.state.guidance = None;
            self.state.pending = None;
            self.cognition(&ranked);
        }
        let guidance = self.state.guidance.clone();
        let best = self.scored(self.state.global_best.expect("tree is non-empty").0);

        let mut gens = Vec::new();
        if self.fanout.em1 > 0 {
            gens.extend(actions::action_em1(&self.env(), &ranked, &best, guidance.as_ref(), self.fanout.em1)?);
        }
        for _ in 0..self.fanout.em2 {
            gens.push(actions::action_em2(&self.env(), &ranked[0], guidance.as_ref())?);
        }
        let mut added = 0;
        for g in gens {
            added += u64::from(self.consume(g, parent, Phase::Main).is_some());
        }
        let after_em = self.best_reward();
        if let Some(p) = self.state.pending.as_mut() {
            p.best_after = Some(after_em);
        }

        let target = self.scored(selected);
        let mut gens = Vec::new();
        for _ in 0..self.fanout.m1 {
            gens.push(actions::action_m1(&self.env(), &target)?);
        }
        for _ in 0..self.fanout.m2 {
            gens.push(actions::action_m2(&self.env(), &target)?);
        }
        for g in gens {
            added += u64::from(self.consume(g, parent, Phase::Main).is_some());
        }
        self.state.tree.backpropagate(parent, added);
        self.state.iteration += 1;

        if (k + 1) % c_t == 0 {
            if let Some(p) = self.state.pending.take() {
                let after = p.best_after.unwrap_or(after_em);
                let kind = ckv_route(p.record, p.best_before, after, &mut self.state.kb, self.cfg.search.ckv_epsilon);
                tracing::debug!(cycle = k / c_t, ?kind, "experience routed");
            }
            self.state.guidance = None;
        }
        tracing::info!(
            iteration = k,
            t = self.state.t,
            best = self.best_reward(),
            nodes = self.state.tree.len(),
            "iteration done"
        );
        Ok(())
    }

    fn checkpoint(&mut self) -> Result<(), RunError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let transcript = self.backend.transcript();
        let path = dir.transcript();
        append_jsonl(&path, &transcript[self.persisted_transcript..]).map_err(io_err("appending", &path))?;
        self.persisted_transcript = transcript.len();
        let path = dir.events();
        write_jsonl(&path, &self.state.events).map_err(io_err("writing", &path))?;
        let path = dir.tree();
        write_json(&path, &self.state.tree.snapshot())?;
        let path = dir.knowledge();
        write_json(&path, &serde_json::json!({ "knowledge": self.state.kb, "experiences": self.state.experiences }))?;
        let cp = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: self.cfg.clone(),
            dataset_digest: self.dataset_digest.clone(),
            state: self.state.clone(),
            backend_cursor: self.backend.cursor(),
            transcript_len: self.persisted_transcript,
        };
        write_json(&dir.checkpoint(), &cp)
    }

    /// Persists the calls made since the last checkpoint, so an aborted run
    /// still shows what failed. Resume drops them again.
    fn flush_transcript(&mut self) {
        if let Some(dir) = &self.dir {
            let transcript = self.backend.transcript();
            let _ = append_jsonl(&dir.transcript(), &transcript[self.persisted_transcript..]);
            self.persisted_transcript = transcript.len();
        }
    }

    fn abort(&mut self, e: LlmError) -> RunError {
        self.flush_transcript();
        tracing::error!(t = self.state.t, iteration = self.state.iteration, error = %e, "aborting run");
        RunError::Aborted { t: self.state.t, iteration: self.state.iteration, reason: e.to_string() }
    }

    fn drive(&mut self) -> Result<RunReport, RunError> {
        let started = Instant::now();
        if !self.state.init_done {
            if let Step::Abort(e) = self.init() {
                return Err(self.abort(e));
            }
            if self.state.global_best.is_none() {
                self.checkpoint()?;
                return Err(RunError::Init(format!("none of the {} initial heuristics evaluated", self.cfg.search.n_init)));
            }
            self.checkpoint()?;
        }
        while self.state.t < self.cfg.search.budget {
            if let Step::Abort(e) = self.iterate() {
                return Err(self.abort(e));
            }
            self.checkpoint()?;
        }
        let n_init = self.cfg.search.n_init as u64;
        let fanout_sum = self.fanout.sum() as u64;
        debug_assert_eq!(self.state.t, n_init + self.state.widenings + self.state.iteration * fanout_sum);
        let report = self.report(n_init, fanout_sum)?;
        if let Some(dir) = &self.dir {
            write_json(&dir.report(), &report)?;
            let path = dir.best_artifact();
            write_atomic(&path, report.best.artifact.render(&self.cfg.executor.code_dialect).as_bytes())
                .map_err(io_err("writing", &path))?;
            update_metadata(dir, started.elapsed().as_secs_f64())?;
        }
        Ok(report)
    }

    fn report(&self, n_init: u64, fanout_sum: u64) -> Result<RunReport, RunError> {
        let (node, reward) = self.state.global_best.expect("init succeeded");
        let baseline_reward = if self.cfg.problem == Problem::Kp {
            let mean = baseline_gc(&self.dataset).map_err(|e| RunError::Config(e.to_string()))?;
            Some(self.cfg.problem.reward(mean))
        } else {
            None
        };
        let mut report = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            problem: self.cfg.problem,
            dataset_digest: self.dataset_digest.clone(),
            baseline_reward,
            best: BestHeuristic { node, reward, artifact: self.scored(node).artifact },
            t: self.state.t,
            n_init,
            iterations: self.state.iteration,
            widenings: self.state.widenings,
            fanout_sum,
            cognition_failures: self.state.cognition_failures,
            trajectory: trajectory_from_events(&self.state.events),
            events: self.state.events.clone(),
            tree: self.state.tree.snapshot(),
            knowledge: self.state.kb.clone(),
            experiences: self.state.experiences.clone(),
            digest: String::new(),
        };
        report.digest = report.compute_digest();
        Ok(report)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| RunError::Io(e.to_string()))?;
    write_atomic(path, &text).map_err(io_err("writing", path))
}

fn update_metadata(dir: &RunDir, elapsed_s: f64) -> Result<(), RunError> {
    let path = dir.metadata();
    let mut meta: serde_json::Value = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_else(|| serde_json::json!({}));
    meta["finished_at_unix"] = unix_now().into();
    let prior = meta["elapsed_s"].as_f64().unwrap_or(0.0);
    meta["elapsed_s"] = (prior + elapsed_s).into();
    write_json(&path, &meta)
}

fn prepare_dir(cfg: &RunConfig, out_dir: &Path, dataset_digest: &str) -> Result<RunDir, RunError> {
    std::fs::create_dir_all(out_dir).map_err(io_err("creating", out_dir))?;
    let dir = RunDir::new(out_dir);
    if dir.checkpoint().exists() {
        return Err(RunError::Config(format!("{} already holds a run; resume it or pick another directory", out_dir.display())));
    }
    let path = dir.config();
    write_atomic(&path, cfg.to_toml().as_bytes()).map_err(io_err("writing", &path))?;
    let meta = serde_json::json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "started_at_unix": unix_now(),
        "problem": cfg.problem,
        "dataset_digest": dataset_digest,
        "config_digest": json_digest(cfg),
    });
    write_json(&dir.metadata(), &meta)?;
    let path = dir.transcript();
    write_atomic(&path, b"").map_err(io_err("creating", &path))?;
    Ok(dir)
}

/// Runs a search in memory with the configured backend.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let backend = build_backend(&cfg.backend).map_err(|e| RunError::Config(e.to_string()))?;
    run_with_backend(cfg, backend, None)
}

/// Runs a search and records it in `out_dir`.
pub fn run_in(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let backend = build_backend(&cfg.backend).map_err(|e| RunError::Config(e.to_string()))?;
    run_with_backend(cfg, backend, Some(out_dir))
}

/// Runs a search with a caller-supplied backend, optionally recording it.
pub fn run_with_backend(cfg: &RunConfig, backend: LoggedBackend, out_dir: Option<&Path>) -> Result<RunReport, RunError> {
    let mut engine = Engine::new(cfg, backend, None)?;
    if let Some(out) = out_dir {
        engine.dir = Some(prepare_dir(cfg, out, &engine.dataset_digest)?);
        engine.checkpoint()?;
    }
    engine.drive()
}

/// Continues the run recorded in `out_dir` from its last checkpoint. A
/// backend override (for example a longer script) replaces the recorded
/// backend settings.
pub fn resume(out_dir: &Path, backend_override: Option<BackendConfig>) -> Result<RunReport, RunError> {
    let dir = RunDir::new(out_dir);
    let path = dir.checkpoint();
    let text = std::fs::read_to_string(&path).map_err(io_err("reading", &path))?;
    let mut cp: Checkpoint = serde_json::from_str(&text).map_err(|e| RunError::Io(format!("parsing checkpoint: {e}")))?;
    if cp.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(RunError::Io(format!("unsupported checkpoint schema {}", cp.schema_version)));
    }
    if let Some(b) = backend_override {
        cp.config.backend = b;
    }
    let backend = build_backend(&cp.config.backend).map_err(|e| RunError::Config(e.to_string()))?;
    if let Some(cursor) = &cp.backend_cursor {
        if backend.cursor().is_some() {
            backend.restore_cursor(cursor).map_err(|e| RunError::Config(e.to_string()))?;
        }
    }
    let path = dir.transcript();
    let prefix = read_transcript_prefix(&path, cp.transcript_len).map_err(io_err("reading", &path))?;
    write_jsonl(&path, &prefix).map_err(io_err("truncating", &path))?;
    backend.restore_transcript(prefix);

    let cfg = cp.config.clone();
    let mut engine = Engine::new(&cfg, backend, Some(dir))?;
    if engine.dataset_digest != cp.dataset_digest {
        return Err(RunError::Config(format!(
            "dataset digest {} differs from the checkpoint's {}",
            engine.dataset_digest, cp.dataset_digest
        )));
    }
    engine.state = cp.state;
    engine.persisted_transcript = cp.transcript_len;
    tracing::info!(t = engine.state.t, iteration = engine.state.iteration, "resuming run");
    engine.drive()
}
