use serde::{Deserialize, Serialize};

use super::{FrameworkError, Problem, SquareMatrix};
use crate::digest::json_digest;

/// Orienteering instance. Node `depot` has no prize; a route leaves and
/// returns to it within `max_len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpInstance {
    pub coords: Vec<[f64; 2]>,
    pub prizes: Vec<f64>,
    pub max_len: f64,
    pub depot: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvrpInstance {
    pub coords: Vec<[f64; 2]>,
    pub demands: Vec<f64>,
    pub capacity: f64,
    pub depot: usize,
}

/// Multiple knapsack: `weights[k][i]` is item `i`'s load on constraint `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkpInstance {
    pub values: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub capacities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    pub coords: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpInstance {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemInstance {
    Op(OpInstance),
    Cvrp(CvrpInstance),
    Mkp(MkpInstance),
    Tsp(TspInstance),
    Kp(KpInstance),
}

impl OpInstance {
    pub fn distances(&self) -> SquareMatrix {
        SquareMatrix::euclidean(&self.coords)
    }
}

impl CvrpInstance {
    pub fn distances(&self) -> SquareMatrix {
        SquareMatrix::euclidean(&self.coords)
    }

    pub fn customers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.coords.len()).filter(move |&i| i != self.depot)
    }
}

impl TspInstance {
    pub fn distances(&self) -> SquareMatrix {
        SquareMatrix::euclidean(&self.coords)
    }
}

impl MkpInstance {
    pub fn n_items(&self) -> usize {
        self.values.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.capacities.len()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), FrameworkError> {
    if cond {
        Ok(())
    } else {
        Err(FrameworkError::InvalidInstance(msg()))
    }
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl ProblemInstance {
    pub fn problem(&self) -> Problem {
        match self {
            ProblemInstance::Op(_) => Problem::Op,
            ProblemInstance::Cvrp(_) => Problem::Cvrp,
            ProblemInstance::Mkp(_) => Problem::Mkp,
            ProblemInstance::Tsp(_) => Problem::Tsp,
            ProblemInstance::Kp(_) => Problem::Kp,
        }
    }

    /// Problem size: cities for TSP, items for KP/MKP, non-depot nodes for
    /// OP/CVRP.
    pub fn size(&self) -> usize {
        match self {
            ProblemInstance::Op(i) => i.coords.len().saturating_sub(1),
            ProblemInstance::Cvrp(i) => i.coords.len().saturating_sub(1),
            ProblemInstance::Mkp(i) => i.values.len(),
            ProblemInstance::Tsp(i) => i.coords.len(),
            ProblemInstance::Kp(i) => i.values.len(),
        }
    }

    /// Length of the heuristic output this instance expects (matrix side or
    /// vector length).
    pub fn output_len(&self) -> usize {
        match self {
            ProblemInstance::Op(i) => i.coords.len(),
            ProblemInstance::Cvrp(i) => i.coords.len(),
            ProblemInstance::Tsp(i) => i.coords.len(),
            ProblemInstance::Mkp(i) => i.values.len(),
            ProblemInstance::Kp(i) => i.values.len(),
        }
    }

    pub fn validate(&self) -> Result<(), FrameworkError> {
        check(self.size() > 0, || "instance has no items or customers".into())?;
        match self {
            ProblemInstance::Op(i) => {
                let n = i.coords.len();
                check(i.prizes.len() == n, || format!("{} prizes for {n} nodes", i.prizes.len()))?;
                check(i.depot < n, || "depot index out of range".into())?;
                check(i.max_len > 0.0 && i.max_len.is_finite(), || "max_len must be positive".into())?;
                check(all_finite(&i.prizes), || "non-finite prize".into())?;
            }
            ProblemInstance::Cvrp(i) => {
                let n = i.coords.len();
                check(i.demands.len() == n, || format!("{} demands for {n} nodes", i.demands.len()))?;
                check(i.depot < n, || "depot index out of range".into())?;
                check(i.capacity > 0.0 && i.capacity.is_finite(), || "capacity must be positive".into())?;
                check(i.demands.iter().all(|d| d.is_finite() && *d >= 0.0), || "bad demand".into())?;
            }
            ProblemInstance::Mkp(i) => {
                let n = i.values.len();
                check(!i.capacities.is_empty(), || "no constraints".into())?;
                check(i.weights.len() == i.capacities.len(), || "weights rows != capacities".into())?;
                check(i.weights.iter().all(|row| row.len() == n), || "weight row length != items".into())?;
                check(i.capacities.iter().all(|c| *c > 0.0 && c.is_finite()), || "capacity must be positive".into())?;
                check(all_finite(&i.values), || "non-finite value".into())?;
            }
            ProblemInstance::Tsp(_) => {}
            ProblemInstance::Kp(i) => {
                check(i.weights.len() == i.values.len(), || "weights and values differ in length".into())?;
                check(i.capacity > 0.0 && i.capacity.is_finite(), || "capacity must be positive".into())?;
                check(i.weights.iter().all(|w| w.is_finite() && *w >= 0.0), || "bad weight".into())?;
                check(all_finite(&i.values), || "non-finite value".into())?;
            }
        }
        Ok(())
    }
}

/// Size parameters of a generated dataset. Unset optional fields take the
/// per-problem defaults of the generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeParams {
    pub n: usize,
    /// KP capacity `W` or CVRP vehicle capacity `C`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    /// MKP constraint count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// OP route-length budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<f64>,
}

impl SizeParams {
    pub fn new(n: usize) -> Self {
        Self { n, ..Self::default() }
    }

    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }
}

/// A set of instances of one problem together with how it was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub problem: Problem,
    pub size: SizeParams,
    pub seed: u64,
    pub instances: Vec<ProblemInstance>,
}

/// On-disk dataset document: the dataset plus its digest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetDocument {
    pub digest: String,
    #[serde(flatten)]
    pub dataset: Dataset,
}

impl Dataset {
    /// SHA-256 over the JSON encoding of the instances.
    pub fn digest(&self) -> String {
        json_digest(&self.instances)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn to_document(&self) -> DatasetDocument {
        DatasetDocument { digest: self.digest(), dataset: self.clone() }
    }

    /// Parses a dataset document and checks its digest and instances.
    pub fn from_document_json(text: &str) -> Result<Self, String> {
        let doc: DatasetDocument = serde_json::from_str(text).map_err(|e| format!("dataset parse: {e}"))?;
        let actual = doc.dataset.digest();
        if actual != doc.digest {
            return Err(format!("dataset digest mismatch: file says {}, content is {actual}", doc.digest));
        }
        for (k, inst) in doc.dataset.instances.iter().enumerate() {
            if inst.problem() != doc.dataset.problem {
                return Err(format!("instance {k} is {} in a {} dataset", inst.problem(), doc.dataset.problem));
            }
            inst.validate().map_err(|e| format!("instance {k}: {e}"))?;
        }
        Ok(doc.dataset)
    }
}
