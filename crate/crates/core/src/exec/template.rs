//! The template dialect: a registry of parameterized heuristic formulas,
//! written as small TOML documents such as
//!
//! ```text
//! id = "value-weight-ratio"
//! alpha = 1.0
//! beta = 1.0
//! gamma = 0.0
//! ```
//!
//! Missing parameters take their defaults. With defaults, `value-weight-ratio`
//! is exactly the greedy-construct heuristic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::SignatureKind;
use crate::cop::construct::{KpState, SCORE_EPS};
use crate::cop::{KpInstance, Problem, ProblemInstance, SquareMatrix};

/// Fixed additive constant in every denominator.
pub const TEMPLATE_EPS: f64 = SCORE_EPS;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("bad template: {0}")]
pub struct TemplateError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    InverseDistance,
    DistancePower,
    PrizeDistanceRatio,
    Savings,
    ValueWeightRatio,
    DensityOverTightness,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    pub default: f64,
}

const fn exponent(name: &'static str) -> ParamSpec {
    ParamSpec { name, min: 0.0, max: 5.0, default: 1.0 }
}

const GAMMA: ParamSpec = ParamSpec { name: "gamma", min: -2.0, max: 2.0, default: 0.0 };

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::InverseDistance,
        TemplateId::DistancePower,
        TemplateId::PrizeDistanceRatio,
        TemplateId::Savings,
        TemplateId::ValueWeightRatio,
        TemplateId::DensityOverTightness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::InverseDistance => "inverse-distance",
            TemplateId::DistancePower => "distance-power",
            TemplateId::PrizeDistanceRatio => "prize-distance-ratio",
            TemplateId::Savings => "savings",
            TemplateId::ValueWeightRatio => "value-weight-ratio",
            TemplateId::DensityOverTightness => "density-over-tightness",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn signature_kind(self) -> SignatureKind {
        match self {
            TemplateId::ValueWeightRatio => SignatureKind::StepScorer,
            TemplateId::DensityOverTightness => SignatureKind::ItemVector,
            _ => SignatureKind::EdgeMatrix,
        }
    }

    pub fn problems(self) -> &'static [Problem] {
        match self {
            TemplateId::InverseDistance | TemplateId::DistancePower => &[Problem::Op, Problem::Cvrp, Problem::Tsp],
            TemplateId::PrizeDistanceRatio => &[Problem::Op],
            TemplateId::Savings => &[Problem::Cvrp],
            TemplateId::ValueWeightRatio => &[Problem::Kp],
            TemplateId::DensityOverTightness => &[Problem::Mkp],
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        const BETA: &[ParamSpec] = &[exponent("beta")];
        const ALPHA_BETA: &[ParamSpec] = &[exponent("alpha"), exponent("beta")];
        const RATIO: &[ParamSpec] = &[exponent("alpha"), exponent("beta"), GAMMA];
        match self {
            TemplateId::InverseDistance | TemplateId::DistancePower => BETA,
            TemplateId::PrizeDistanceRatio | TemplateId::Savings | TemplateId::DensityOverTightness => ALPHA_BETA,
            TemplateId::ValueWeightRatio => RATIO,
        }
    }

    /// Human-readable formula, used in prompts.
    pub fn formula(self) -> &'static str {
        match self {
            TemplateId::InverseDistance => "eta[i][j] = 1 / (d[i][j]^beta + 1e-6)",
            TemplateId::DistancePower => "eta[i][j] = d[i][j]^beta",
            TemplateId::PrizeDistanceRatio => "eta[i][j] = prize[j]^alpha / (d[i][j]^beta + 1e-6)",
            TemplateId::Savings => {
                "eta[i][j] = (1 + alpha * max(0, d[i][depot] + d[depot][j] - d[i][j])) / (d[i][j]^beta + 1e-6)"
            }
            TemplateId::ValueWeightRatio => "score[i] = value[i]^alpha / (weight[i]^beta + 1e-6) + gamma * value[i]",
            TemplateId::DensityOverTightness => {
                "eta[i] = value[i]^alpha / ((sum_k weight[k][i] / capacity[k])^beta + 1e-6)"
            }
        }
    }

    /// Registry entries usable for `problem`.
    pub fn for_problem(problem: Problem) -> Vec<TemplateId> {
        Self::ALL.into_iter().filter(|t| t.problems().contains(&problem)).collect()
    }
}

/// A validated template document with every parameter resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateDocument {
    pub id: TemplateId,
    pub params: BTreeMap<String, f64>,
}

impl TemplateDocument {
    /// Builds a document, filling unspecified parameters with defaults.
    pub fn new(id: TemplateId, overrides: &[(&str, f64)]) -> Result<Self, TemplateError> {
        let mut params: BTreeMap<String, f64> = id.params().iter().map(|p| (p.name.to_string(), p.default)).collect();
        for &(name, value) in overrides {
            let spec = id
                .params()
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| TemplateError(format!("template '{}' has no parameter '{name}'", id.name())))?;
            if !(value.is_finite() && value >= spec.min && value <= spec.max) {
                return Err(TemplateError(format!(
                    "parameter '{name}' = {value} outside [{}, {}]",
                    spec.min, spec.max
                )));
            }
            params.insert(name.to_string(), value);
        }
        Ok(Self { id, params })
    }

    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let table: toml::Table = text.parse().map_err(|e| TemplateError(format!("not a template document: {e}")))?;
        let id_name = table
            .get("id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| TemplateError("missing string field 'id'".into()))?;
        let id = TemplateId::from_name(id_name).ok_or_else(|| TemplateError(format!("unknown template id '{id_name}'")))?;
        let mut overrides = Vec::new();
        for (key, value) in &table {
            if key == "id" {
                continue;
            }
            let number = value
                .as_float()
                .or_else(|| value.as_integer().map(|i| i as f64))
                .ok_or_else(|| TemplateError(format!("parameter '{key}' is not a number")))?;
            overrides.push((key.as_str(), number));
        }
        Self::new(id, &overrides)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("id = \"{}\"\n", self.id.name());
        for spec in self.id.params() {
            let _ = writeln!(out, "{} = {:?}", spec.name, self.param(spec.name));
        }
        out
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn supports(&self, problem: Problem) -> bool {
        self.id.problems().contains(&problem)
    }

    /// Raw (unsanitized) output of an edge-matrix or item-vector template.
    pub fn eval_output(&self, instance: &ProblemInstance) -> Result<RawOutput, TemplateError> {
        if !self.supports(instance.problem()) {
            return Err(TemplateError(format!("template '{}' does not apply to {}", self.id.name(), instance.problem())));
        }
        let p = |name: &str| self.param(name);
        let out = match (self.id, instance) {
            (TemplateId::InverseDistance, inst) => {
                let d = distances(inst);
                RawOutput::Matrix(SquareMatrix::from_fn(d.n(), |i, j| 1.0 / (d.get(i, j).powf(p("beta")) + TEMPLATE_EPS)))
            }
            (TemplateId::DistancePower, inst) => {
                let d = distances(inst);
                RawOutput::Matrix(SquareMatrix::from_fn(d.n(), |i, j| d.get(i, j).powf(p("beta"))))
            }
            (TemplateId::PrizeDistanceRatio, ProblemInstance::Op(op)) => {
                let d = op.distances();
                RawOutput::Matrix(SquareMatrix::from_fn(d.n(), |i, j| {
                    op.prizes[j].powf(p("alpha")) / (d.get(i, j).powf(p("beta")) + TEMPLATE_EPS)
                }))
            }
            (TemplateId::Savings, ProblemInstance::Cvrp(c)) => {
                let d = c.distances();
                let o = c.depot;
                RawOutput::Matrix(SquareMatrix::from_fn(d.n(), |i, j| {
                    let saving = (d.get(i, o) + d.get(o, j) - d.get(i, j)).max(0.0);
                    (1.0 + p("alpha") * saving) / (d.get(i, j).powf(p("beta")) + TEMPLATE_EPS)
                }))
            }
            (TemplateId::DensityOverTightness, ProblemInstance::Mkp(m)) => RawOutput::Vector(
                (0..m.n_items())
                    .map(|i| {
                        let load: f64 = m.weights.iter().zip(&m.capacities).map(|(row, c)| row[i] / c).sum();
                        m.values[i].powf(p("alpha")) / (load.powf(p("beta")) + TEMPLATE_EPS)
                    })
                    .collect(),
            ),
            (TemplateId::ValueWeightRatio, _) => {
                return Err(TemplateError("value-weight-ratio is a step scorer, not a matrix".into()))
            }
            (id, inst) => return Err(TemplateError(format!("template '{}' does not apply to {}", id.name(), inst.problem()))),
        };
        Ok(out)
    }

    /// Step scores for a KP state; selected items get `-inf`.
    pub fn eval_scores(&self, kp: &KpInstance, state: &KpState) -> Result<Vec<f64>, TemplateError> {
        if self.id != TemplateId::ValueWeightRatio {
            return Err(TemplateError(format!("template '{}' is not a step scorer", self.id.name())));
        }
        let (a, b, g) = (self.param("alpha"), self.param("beta"), self.param("gamma"));
        Ok(kp
            .values
            .iter()
            .zip(&kp.weights)
            .zip(&state.selected)
            .map(|((v, w), &sel)| {
                if sel {
                    f64::NEG_INFINITY
                } else {
                    v.powf(a) / (w.powf(b) + TEMPLATE_EPS) + g * v
                }
            })
            .collect())
    }
}

fn distances(inst: &ProblemInstance) -> SquareMatrix {
    match inst {
        ProblemInstance::Op(i) => i.distances(),
        ProblemInstance::Cvrp(i) => i.distances(),
        ProblemInstance::Tsp(i) => i.distances(),
        // Guarded by `supports`.
        ProblemInstance::Mkp(_) | ProblemInstance::Kp(_) => SquareMatrix::filled(0, 0.0),
    }
}

/// Output of a matrix/vector heuristic before sanitation.
#[derive(Clone, Debug, PartialEq)]
pub enum RawOutput {
    Matrix(SquareMatrix),
    Vector(Vec<f64>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cop::TspInstance;

    #[test]
    fn inverse_distance_on_three_cities() {
        let inst = ProblemInstance::Tsp(TspInstance { coords: vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]] });
        let doc = TemplateDocument::new(TemplateId::InverseDistance, &[]).unwrap();
        let RawOutput::Matrix(m) = doc.eval_output(&inst).unwrap() else { panic!() };
        assert!((m.get(0, 1) - 0.5).abs() < 1e-6);
        assert!((m.get(0, 1) - 1.0 / (2.0 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn ratio_scores_and_mask() {
        let kp = KpInstance { values: vec![1.0, 0.7], weights: vec![0.5, 0.4], capacity: 1.0 };
        let doc = TemplateDocument::new(TemplateId::ValueWeightRatio, &[]).unwrap();
        let s = doc.eval_scores(&kp, &KpState { remaining_capacity: 1.0, selected: vec![false, false] }).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-5 && (s[1] - 1.75).abs() < 1e-5);
        let s = doc.eval_scores(&kp, &KpState { remaining_capacity: 0.5, selected: vec![true, false] }).unwrap();
        assert_eq!(s[0], f64::NEG_INFINITY);
    }

    #[test]
    fn text_round_trip() {
        let doc = TemplateDocument::new(TemplateId::ValueWeightRatio, &[("alpha", 1.25), ("gamma", -0.1)]).unwrap();
        assert_eq!(TemplateDocument::parse(&doc.to_text()).unwrap(), doc);
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(TemplateDocument::parse("id = \"nope\"").is_err());
        assert!(TemplateDocument::parse("id = \"savings\"\nalpha = 9.0").is_err());
        assert!(TemplateDocument::parse("id = \"savings\"\ndelta = 1.0").is_err());
        assert!(TemplateDocument::parse("alpha = 1.0").is_err());
        assert!(TemplateDocument::parse("id = \"savings\"\nalpha = 2").is_ok());
    }

    #[test]
    fn every_problem_has_a_template() {
        for problem in Problem::ALL {
            let ids = TemplateId::for_problem(problem);
            assert!(!ids.is_empty(), "{problem}");
            assert!(ids.iter().all(|t| t.signature_kind() == problem.signature_kind()));
        }
    }
}
