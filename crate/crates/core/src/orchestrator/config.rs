//! Run configuration, loaded from TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::actions::ActionKind;
use crate::cop::{generate_instances, Dataset, FrameworkParams, SizeParams};
use crate::exec::ExecutorConfig;
use crate::llm::BackendConfig;
use crate::prompts::DEFAULT_CHAR_BUDGET;
use crate::Problem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_instances: usize,
    /// Items or customers per instance.
    pub n: usize,
    /// KP capacity or CVRP vehicle capacity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    /// MKP constraint count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// OP route-length budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<f64>,
    pub seed: u64,
    /// Load this dataset document instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_instances: 64, n: 50, capacity: None, m: None, max_len: None, seed: 2024, path: None }
    }
}

impl DatasetConfig {
    pub fn size_params(&self) -> SizeParams {
        SizeParams { n: self.n, capacity: self.capacity, m: self.m, max_len: self.max_len }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Initial heuristics generated by action i.
    pub n_init: usize,
    /// Evaluation budget T.
    pub budget: u64,
    /// Maximum tree depth H.
    pub max_depth: usize,
    pub lambda0: f64,
    /// Elites sampled into the candidate set.
    pub real_m: usize,
    pub elite_k: usize,
    /// Main iterations per thinking cycle.
    pub thinking_cycle: u64,
    pub widening_factor: f64,
    pub kb_capacity: usize,
    pub g_pos: usize,
    pub g_neg: usize,
    pub ckv_epsilon: f64,
    pub char_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            budget: 1000,
            max_depth: 10,
            lambda0: 0.1,
            real_m: 7,
            elite_k: 20,
            thinking_cycle: 2,
            widening_factor: 2.0,
            kb_capacity: 100,
            g_pos: 3,
            g_neg: 3,
            ckv_epsilon: crate::cognition::CKV_EPSILON,
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

/// Candidates requested per main iteration from each action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fanout {
    pub em1: usize,
    pub em2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl Default for Fanout {
    fn default() -> Self {
        Self { em1: 5, em2: 1, m1: 1, m2: 1 }
    }
}

impl Fanout {
    pub fn sum(&self) -> usize {
        self.em1 + self.em2 + self.m1 + self.m2
    }

    pub fn get(&self, action: ActionKind) -> usize {
        match action {
            ActionKind::I => 0,
            ActionKind::Em1 => self.em1,
            ActionKind::Em2 => self.em2,
            ActionKind::M1 => self.m1,
            ActionKind::M2 => self.m2,
        }
    }

    /// The fanout with `disabled` actions zeroed.
    pub fn without(mut self, disabled: &[ActionKind]) -> Self {
        for a in disabled {
            match a {
                ActionKind::Em1 => self.em1 = 0,
                ActionKind::Em2 => self.em2 = 0,
                ActionKind::M1 => self.m1 = 0,
                ActionKind::M2 => self.m2 = 0,
                ActionKind::I => {}
            }
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub seed: u64,
    /// Actions removed for ablation runs.
    pub disabled_actions: Vec<ActionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub personas: Option<Vec<String>>,
    pub dataset: DatasetConfig,
    pub search: SearchConfig,
    pub fanout: Fanout,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub framework: Option<FrameworkParams>,
    pub backend: BackendConfig,
    pub executor: ExecutorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Kp,
            seed: 0,
            disabled_actions: Vec::new(),
            personas: None,
            dataset: DatasetConfig::default(),
            search: SearchConfig::default(),
            fanout: Fanout::default(),
            framework: None,
            backend: BackendConfig::default(),
            executor: ExecutorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| format!("config parse: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn effective_fanout(&self) -> Fanout {
        self.fanout.without(&self.disabled_actions)
    }

    pub fn framework_params(&self) -> FrameworkParams {
        self.framework.clone().unwrap_or_else(|| FrameworkParams::default_for(self.problem))
    }

    pub fn validate(&self) -> Result<(), String> {
        let s = &self.search;
        if s.n_init == 0 {
            return Err("search.n_init must be at least 1".into());
        }
        if s.budget < s.n_init as u64 {
            return Err(format!("search.budget ({}) must be at least n_init ({})", s.budget, s.n_init));
        }
        if s.thinking_cycle == 0 {
            return Err("search.thinking_cycle must be at least 1".into());
        }
        if s.max_depth == 0 {
            return Err("search.max_depth must be at least 1".into());
        }
        if !(s.lambda0.is_finite() && s.lambda0 > 0.0) {
            return Err("search.lambda0 must be positive".into());
        }
        if !(s.widening_factor.is_finite() && s.widening_factor > 0.0) {
            return Err("search.widening_factor must be positive".into());
        }
        if s.elite_k == 0 || s.kb_capacity == 0 {
            return Err("search.elite_k and search.kb_capacity must be at least 1".into());
        }
        if !(s.ckv_epsilon.is_finite() && s.ckv_epsilon >= 0.0) {
            return Err("search.ckv_epsilon must be non-negative".into());
        }
        if s.char_budget < 256 {
            return Err("search.char_budget must be at least 256".into());
        }
        if self.effective_fanout().sum() == 0 {
            return Err("at least one of em1/em2/m1/m2 must have a positive fanout".into());
        }
        if self.disabled_actions.contains(&ActionKind::I) {
            return Err("action i cannot be disabled".into());
        }
        if self.dataset.path.is_none() && (self.dataset.n_instances == 0 || self.dataset.n == 0) {
            return Err("dataset.n_instances and dataset.n must be positive".into());
        }
        let fp = self.framework_params();
        fp.validate()?;
        if fp.framework() != self.problem.framework() {
            return Err(format!("framework parameters {:?} do not fit {}", fp.framework(), self.problem));
        }
        self.backend.validate().map_err(|e| e.to_string())?;
        self.executor.validate()?;
        Ok(())
    }

    /// Loads or generates the dataset this run evaluates on.
    pub fn load_dataset(&self) -> Result<Dataset, String> {
        let ds = match &self.dataset.path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("reading dataset {}: {e}", path.display()))?;
                Dataset::from_document_json(&text)?
            }
            None => generate_instances(self.problem, self.dataset.n_instances, &self.dataset.size_params(), self.dataset.seed),
        };
        if ds.problem != self.problem {
            return Err(format!("dataset is {}, run is {}", ds.problem, self.problem));
        }
        if ds.is_empty() {
            return Err("dataset has no instances".into());
        }
        Ok(ds)
    }
}
