//! Running heuristics against problem instances.
//!
//! Template artifacts are evaluated natively; external-code artifacts are sent
//! to a pool of sandbox worker processes. Either way the numeric output is
//! sanitized before it reaches a framework.

pub mod sandbox;
pub mod template;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::artifact::{Dialect, HeuristicArtifact, SignatureKind};
use crate::cop::construct::{kp_construct, KpState, StepScorer};
use crate::cop::{aco, gls, Dataset, FrameworkError, FrameworkParams, KpInstance, ProblemInstance, SquareMatrix};
use sandbox::{encode_number, remaining, SandboxError, SandboxPool, WorkerCommand};
use template::{RawOutput, TemplateDocument, TemplateError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    /// Wall-clock cap for one whole-dataset evaluation.
    pub timeout_s: f64,
    /// Fence name that marks external code, e.g. "python".
    pub code_dialect: String,
    pub sandbox_program: String,
    pub sandbox_args: Vec<String>,
    pub request_timeout_s: f64,
    pub cpu_limit_s: u64,
    pub mem_limit_mb: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            timeout_s: 60.0,
            code_dialect: "python".into(),
            sandbox_program: "python3".into(),
            sandbox_args: vec!["-m".into(), "cogmcts_sandbox".into()],
            request_timeout_s: 10.0,
            cpu_limit_s: 120,
            mem_limit_mb: 1024,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err("executor timeout_s must be positive".into());
        }
        if !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0) {
            return Err("executor request_timeout_s must be positive".into());
        }
        if self.code_dialect.trim().is_empty() || self.code_dialect == "template" {
            return Err("code_dialect must be a non-empty name other than 'template'".into());
        }
        Ok(())
    }

    fn worker_command(&self) -> WorkerCommand {
        WorkerCommand {
            program: self.sandbox_program.clone(),
            args: self.sandbox_args.clone(),
            request_timeout: Duration::from_secs_f64(self.request_timeout_s),
            cpu_limit_s: self.cpu_limit_s,
            mem_limit_mb: self.mem_limit_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error("output shape mismatch: {0}")]
    Shape(String),
    #[error("evaluation deadline exceeded")]
    Timeout,
}

impl ExecError {
    fn is_timeout(&self) -> bool {
        matches!(self, ExecError::Timeout | ExecError::Sandbox(SandboxError::Timeout))
    }
}

/// Sanitized heuristic output for ACO/GLS.
#[derive(Clone, Debug, PartialEq)]
pub enum HeuristicOutput {
    EdgeMatrix(SquareMatrix),
    ItemVector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecOutput {
    pub output: HeuristicOutput,
    /// Entries that were NaN, negative or infinite and got zeroed.
    pub repaired: usize,
    /// Everything was zero, so a uniform output of ones was substituted.
    pub substituted: bool,
}

/// Zeroes NaN, negative and infinite entries; if nothing positive remains,
/// fills with ones. Returns `(repaired, substituted)`.
pub fn sanitize(values: &mut [f64]) -> (usize, bool) {
    let mut repaired = 0;
    for v in values.iter_mut() {
        if !v.is_finite() || *v < 0.0 {
            *v = 0.0;
            repaired += 1;
        }
    }
    let substituted = values.iter().all(|&v| v == 0.0);
    if substituted {
        values.fill(1.0);
    }
    (repaired, substituted)
}

/// Step scores keep their sign (construction takes an argmax), but
/// non-finite scores become 0 and selected items are forced to `-inf`.
pub fn sanitize_scores(scores: &mut [f64], selected: &[bool]) -> usize {
    let mut repaired = 0;
    for (s, &sel) in scores.iter_mut().zip(selected) {
        if sel {
            *s = f64::NEG_INFINITY;
        } else if !s.is_finite() {
            *s = 0.0;
            repaired += 1;
        }
    }
    repaired
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Error,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub status: EvalStatus,
    /// Larger is better; present only when `status` is ok.
    pub reward: Option<f64>,
    /// Raw per-instance objectives in dataset order (ok only).
    pub objectives: Vec<f64>,
    pub elapsed_s: f64,
    /// Instances whose heuristic output needed repair or substitution.
    pub sanitized_instances: usize,
    pub message: Option<String>,
}

impl EvalResult {
    fn failed(err: &ExecError, elapsed: Duration) -> Self {
        Self {
            status: if err.is_timeout() { EvalStatus::Timeout } else { EvalStatus::Error },
            reward: None,
            objectives: Vec::new(),
            elapsed_s: elapsed.as_secs_f64(),
            sanitized_instances: 0,
            message: Some(err.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }
}

pub struct HeuristicExecutor {
    config: ExecutorConfig,
    pool: OnceLock<SandboxPool>,
}

impl HeuristicExecutor {
    pub fn new(config: ExecutorConfig) -> Self {
        Self { config, pool: OnceLock::new() }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    fn pool(&self) -> &SandboxPool {
        self.pool.get_or_init(|| SandboxPool::new(self.config.worker_command()))
    }

    fn check_signature(&self, artifact: &HeuristicArtifact, instance: &ProblemInstance) -> Result<(), ExecError> {
        let expected = instance.problem().signature_kind();
        if artifact.signature_kind != expected {
            return Err(ExecError::Signature(format!(
                "{} expects {}, artifact is {}",
                instance.problem(),
                expected.as_str(),
                artifact.signature_kind.as_str()
            )));
        }
        Ok(())
    }

    /// Edge matrix or item vector for `instance`, sanitized.
    pub fn exec_matrix(&self, artifact: &HeuristicArtifact, instance: &ProblemInstance) -> Result<ExecOutput, ExecError> {
        self.exec_matrix_until(artifact, instance, None)
    }

    fn exec_matrix_until(
        &self,
        artifact: &HeuristicArtifact,
        instance: &ProblemInstance,
        deadline: Option<Instant>,
    ) -> Result<ExecOutput, ExecError> {
        self.check_signature(artifact, instance)?;
        if artifact.signature_kind == SignatureKind::StepScorer {
            return Err(ExecError::Signature("step scorers do not produce a matrix".into()));
        }
        let n = instance.output_len();
        let raw = match artifact.dialect {
            Dialect::Template => TemplateDocument::parse(&artifact.payload)?.eval_output(instance)?,
            Dialect::ExternalCode => {
                let budget = match deadline {
                    Some(d) => Some(remaining(d).ok_or(ExecError::Timeout)?),
                    None => None,
                };
                let mut worker = self.pool().checkout()?;
                worker.load(&self.config.code_dialect, &artifact.payload, &artifact.digest, budget)?;
                let budget = match deadline {
                    Some(d) => Some(remaining(d).ok_or(ExecError::Timeout)?),
                    None => None,
                };
                let rows = worker.matrix(instance_payload(instance), budget)?;
                match artifact.signature_kind {
                    SignatureKind::EdgeMatrix => RawOutput::Matrix(
                        SquareMatrix::from_rows(&rows).ok_or_else(|| ExecError::Shape("rows are not square".into()))?,
                    ),
                    // Item vectors travel as a single row.
                    _ => RawOutput::Vector(rows.into_iter().next().unwrap_or_default()),
                }
            }
        };
        let (output, (repaired, substituted)) = match raw {
            RawOutput::Matrix(mut m) => {
                if m.n() != n {
                    return Err(ExecError::Shape(format!("matrix is {0}x{0}, instance needs {n}x{n}", m.n())));
                }
                let flags = sanitize(m.as_mut_slice());
                (HeuristicOutput::EdgeMatrix(m), flags)
            }
            RawOutput::Vector(mut v) => {
                if v.len() != n {
                    return Err(ExecError::Shape(format!("vector has {} entries, instance needs {n}", v.len())));
                }
                let flags = sanitize(&mut v);
                (HeuristicOutput::ItemVector(v), flags)
            }
        };
        Ok(ExecOutput { output, repaired, substituted })
    }

    /// A scoring session for one KP instance.
    pub fn open_step_scorer<'a>(
        &'a self,
        artifact: &'a HeuristicArtifact,
        instance: &'a KpInstance,
    ) -> Result<Box<dyn StepScorer + 'a>, ExecError> {
        self.open_step_scorer_until(artifact, instance, None)
    }

    fn open_step_scorer_until<'a>(
        &'a self,
        artifact: &'a HeuristicArtifact,
        instance: &'a KpInstance,
        deadline: Option<Instant>,
    ) -> Result<Box<dyn StepScorer + 'a>, ExecError> {
        if artifact.signature_kind != SignatureKind::StepScorer {
            return Err(ExecError::Signature(format!("KP expects step-scorer, artifact is {}", artifact.signature_kind.as_str())));
        }
        match artifact.dialect {
            Dialect::Template => {
                let doc = TemplateDocument::parse(&artifact.payload)?;
                if !doc.supports(crate::Problem::Kp) {
                    return Err(TemplateError(format!("template '{}' does not apply to kp", doc.id.name())).into());
                }
                Ok(Box::new(TemplateScorer { doc, instance, repaired: 0 }))
            }
            Dialect::ExternalCode => {
                let mut worker = self.pool().checkout()?;
                let budget = deadline.map(|d| remaining(d).ok_or(ExecError::Timeout)).transpose()?;
                worker.load(&self.config.code_dialect, &artifact.payload, &artifact.digest, budget)?;
                Ok(Box::new(SandboxScorer { worker, instance, deadline, repaired: 0 }))
            }
        }
    }

    /// Runs the problem's framework on every instance and reduces to a reward.
    pub fn evaluate(&self, artifact: &HeuristicArtifact, dataset: &Dataset, params: &FrameworkParams) -> EvalResult {
        let start = Instant::now();
        let deadline = start + Duration::from_secs_f64(self.config.timeout_s);
        let run = || -> Result<(Vec<f64>, usize), ExecError> {
            if dataset.is_empty() {
                return Err(FrameworkError::InvalidInstance("empty dataset".into()).into());
            }
            params.validate().map_err(FrameworkError::InvalidInstance)?;
            if params.framework() != dataset.problem.framework() {
                return Err(FrameworkError::Unsupported(format!("{:?} params for {}", params.framework(), dataset.problem)).into());
            }
            let per_instance: Vec<(f64, bool)> = dataset
                .instances
                .par_iter()
                .enumerate()
                .map(|(i, inst)| {
                    if Instant::now() >= deadline {
                        return Err(ExecError::Timeout);
                    }
                    self.solve_one(artifact, inst, &params.for_instance(i), deadline)
                })
                .collect::<Result<_, _>>()?;
            if Instant::now() >= deadline {
                return Err(ExecError::Timeout);
            }
            let sanitized = per_instance.iter().filter(|(_, s)| *s).count();
            Ok((per_instance.into_iter().map(|(o, _)| o).collect(), sanitized))
        };
        match run() {
            Ok((objectives, sanitized_instances)) => {
                let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
                EvalResult {
                    status: EvalStatus::Ok,
                    reward: Some(dataset.problem.reward(mean)),
                    objectives,
                    elapsed_s: start.elapsed().as_secs_f64(),
                    sanitized_instances,
                    message: None,
                }
            }
            Err(e) => EvalResult::failed(&e, start.elapsed()),
        }
    }

    /// Objective on one instance plus whether sanitation touched the output.
    fn solve_one(
        &self,
        artifact: &HeuristicArtifact,
        instance: &ProblemInstance,
        params: &FrameworkParams,
        deadline: Instant,
    ) -> Result<(f64, bool), ExecError> {
        instance.validate()?;
        if let (ProblemInstance::Kp(kp), FrameworkParams::Construction { .. }) = (instance, params) {
            let mut scorer = self.open_step_scorer_until(artifact, kp, Some(deadline))?;
            let sol = kp_construct(kp, scorer.as_mut()).map_err(|e| match e {
                FrameworkError::Scorer(msg) if msg == TIMEOUT_MARK => ExecError::Timeout,
                other => other.into(),
            })?;
            return Ok((sol.value, false));
        }
        let out = self.exec_matrix_until(artifact, instance, Some(deadline))?;
        let touched = out.repaired > 0 || out.substituted;
        let objective = match (instance, &out.output, params) {
            (ProblemInstance::Op(i), HeuristicOutput::EdgeMatrix(eta), FrameworkParams::Aco(p)) => {
                aco::solve_op(i, eta, p)?.best_objective
            }
            (ProblemInstance::Cvrp(i), HeuristicOutput::EdgeMatrix(eta), FrameworkParams::Aco(p)) => {
                aco::solve_cvrp(i, eta, p)?.best_objective
            }
            (ProblemInstance::Mkp(i), HeuristicOutput::ItemVector(eta), FrameworkParams::Aco(p)) => {
                aco::solve_mkp(i, eta, p)?.best_objective
            }
            (ProblemInstance::Tsp(i), HeuristicOutput::EdgeMatrix(ind), FrameworkParams::Gls(p)) => {
                gls::solve_tsp(i, ind, p)?.best_cost
            }
            (inst, _, p) => {
                return Err(FrameworkError::Unsupported(format!("{:?} framework for {}", p.framework(), inst.problem())).into())
            }
        };
        Ok((objective, touched))
    }
}

const TIMEOUT_MARK: &str = "deadline exceeded";

struct TemplateScorer<'a> {
    doc: TemplateDocument,
    instance: &'a KpInstance,
    repaired: usize,
}

impl StepScorer for TemplateScorer<'_> {
    fn score(&mut self, state: &KpState) -> Result<Vec<f64>, FrameworkError> {
        let mut s = self.doc.eval_scores(self.instance, state).map_err(|e| FrameworkError::Scorer(e.to_string()))?;
        self.repaired += sanitize_scores(&mut s, &state.selected);
        Ok(s)
    }
}

struct SandboxScorer<'a> {
    worker: sandbox::PooledWorker<'a>,
    instance: &'a KpInstance,
    deadline: Option<Instant>,
    repaired: usize,
}

impl StepScorer for SandboxScorer<'_> {
    fn score(&mut self, state: &KpState) -> Result<Vec<f64>, FrameworkError> {
        let budget = match self.deadline {
            Some(d) => Some(remaining(d).ok_or_else(|| FrameworkError::Scorer(TIMEOUT_MARK.into()))?),
            None => None,
        };
        let mut s = self.worker.score(state_payload(self.instance, state), budget).map_err(|e| match e {
            SandboxError::Timeout => FrameworkError::Scorer(TIMEOUT_MARK.into()),
            other => FrameworkError::Scorer(other.to_string()),
        })?;
        if s.len() != self.instance.values.len() {
            return Err(FrameworkError::Scorer(format!("{} scores for {} items", s.len(), self.instance.values.len())));
        }
        self.repaired += sanitize_scores(&mut s, &state.selected);
        Ok(s)
    }
}

/// Instance as sent to the worker: the serialized instance plus, for routing
/// problems, its distance matrix under `distances`.
pub fn instance_payload(instance: &ProblemInstance) -> Value {
    let mut v = serde_json::to_value(instance).expect("instances serialize");
    let d = match instance {
        ProblemInstance::Op(i) => Some(i.distances()),
        ProblemInstance::Cvrp(i) => Some(i.distances()),
        ProblemInstance::Tsp(i) => Some(i.distances()),
        _ => None,
    };
    if let (Some(d), Value::Object(map)) = (d, &mut v) {
        map.insert("distances".into(), json!(d.rows()));
    }
    v
}

pub fn state_payload(instance: &KpInstance, state: &KpState) -> Value {
    json!({
        "values": instance.values,
        "weights": instance.weights,
        "capacity": instance.capacity,
        "remaining_capacity": encode_number(state.remaining_capacity),
        "selected": state.selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cop::{generate_instances, Problem, SizeParams, TspInstance};
    use template::TemplateId;

    fn template_artifact(doc: &TemplateDocument) -> HeuristicArtifact {
        HeuristicArtifact::new("t", Dialect::Template, doc.to_text(), doc.id.signature_kind())
    }

    #[test]
    fn sanitize_rules() {
        let mut v = [1.0, f64::NAN, -2.0, f64::INFINITY];
        assert_eq!(sanitize(&mut v), (3, false));
        assert_eq!(v, [1.0, 0.0, 0.0, 0.0]);
        let mut z = [0.0, -1.0];
        assert_eq!(sanitize(&mut z), (1, true));
        assert_eq!(z, [1.0, 1.0]);
    }

    #[test]
    fn distance_power_zero_diagonal_stays_shaped() {
        let inst = ProblemInstance::Tsp(TspInstance { coords: vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]] });
        let doc = TemplateDocument::new(TemplateId::InverseDistance, &[]).unwrap();
        let out = HeuristicExecutor::new(ExecutorConfig::default()).exec_matrix(&template_artifact(&doc), &inst).unwrap();
        let HeuristicOutput::EdgeMatrix(m) = out.output else { panic!() };
        assert_eq!(m.n(), 3);
        assert!((m.get(1, 0) - 1.0 / (2.0 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn gc_template_matches_worked_example() {
        let ds = Dataset {
            problem: Problem::Kp,
            size: SizeParams::new(3),
            seed: 0,
            instances: vec![ProblemInstance::Kp(KpInstance {
                values: vec![1.0, 0.7, 0.7],
                weights: vec![0.5, 0.4, 0.4],
                capacity: 0.8,
            })],
        };
        let doc = TemplateDocument::new(TemplateId::ValueWeightRatio, &[]).unwrap();
        let r = HeuristicExecutor::new(ExecutorConfig::default()).evaluate(
            &template_artifact(&doc),
            &ds,
            &FrameworkParams::default_for(Problem::Kp),
        );
        assert_eq!(r.status, EvalStatus::Ok);
        assert!((r.reward.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_signature_is_an_error() {
        let ds = generate_instances(Problem::Tsp, 2, &SizeParams::new(6), 1);
        let doc = TemplateDocument::new(TemplateId::ValueWeightRatio, &[]).unwrap();
        let r = HeuristicExecutor::new(ExecutorConfig::default()).evaluate(
            &template_artifact(&doc),
            &ds,
            &FrameworkParams::default_for(Problem::Tsp),
        );
        assert_eq!(r.status, EvalStatus::Error);
        assert!(r.reward.is_none());
    }

    #[test]
    fn minimization_reward_is_negated_mean() {
        let ds = generate_instances(Problem::Tsp, 3, &SizeParams::new(8), 4);
        let doc = TemplateDocument::new(TemplateId::DistancePower, &[]).unwrap();
        let r = HeuristicExecutor::new(ExecutorConfig::default()).evaluate(
            &template_artifact(&doc),
            &ds,
            &FrameworkParams::default_for(Problem::Tsp),
        );
        let mean = r.objectives.iter().sum::<f64>() / 3.0;
        assert!(mean > 0.0);
        assert_eq!(r.reward, Some(-mean));
    }
}
