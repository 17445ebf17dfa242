//! Combinatorial optimization problems, instance generators, the three
//! solving frameworks, exact small-instance oracles and baselines.

pub mod aco;
pub mod baseline;
pub mod construct;
pub mod generate;
pub mod gls;
pub mod instance;
pub mod matrix;
pub mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::generate_instances;
pub use instance::{
    CvrpInstance, Dataset, KpInstance, MkpInstance, OpInstance, ProblemInstance, SizeParams,
    TspInstance,
};
pub use matrix::SquareMatrix;

use crate::artifact::SignatureKind;

/// Feasibility slack shared by every framework and oracle, so a route the
/// solver accepts is never rejected by the oracle on rounding noise.
pub const FEAS_EPS: f64 = 1e-9;

/// The five supported problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    /// Orienteering problem (ACO).
    Op,
    /// Capacitated vehicle routing (ACO).
    Cvrp,
    /// Multiple-constraint knapsack (ACO).
    Mkp,
    /// Travelling salesman (GLS).
    Tsp,
    /// 0/1 knapsack (step-by-step construction).
    Kp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Aco,
    Gls,
    Construction,
}

impl Problem {
    pub const ALL: [Problem; 5] = [Problem::Op, Problem::Cvrp, Problem::Mkp, Problem::Tsp, Problem::Kp];

    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Op => "op",
            Problem::Cvrp => "cvrp",
            Problem::Mkp => "mkp",
            Problem::Tsp => "tsp",
            Problem::Kp => "kp",
        }
    }

    pub fn sense(self) -> Sense {
        match self {
            Problem::Cvrp | Problem::Tsp => Sense::Minimize,
            Problem::Op | Problem::Mkp | Problem::Kp => Sense::Maximize,
        }
    }

    pub fn framework(self) -> Framework {
        match self {
            Problem::Op | Problem::Cvrp | Problem::Mkp => Framework::Aco,
            Problem::Tsp => Framework::Gls,
            Problem::Kp => Framework::Construction,
        }
    }

    pub fn signature_kind(self) -> SignatureKind {
        match self {
            Problem::Op | Problem::Cvrp | Problem::Tsp => SignatureKind::EdgeMatrix,
            Problem::Mkp => SignatureKind::ItemVector,
            Problem::Kp => SignatureKind::StepScorer,
        }
    }

    /// Maps a mean objective to a reward: larger is always better.
    pub fn reward(self, mean_objective: f64) -> f64 {
        match self.sense() {
            Sense::Maximize => mean_objective,
            Sense::Minimize => -mean_objective,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "op" => Ok(Problem::Op),
            "cvrp" => Ok(Problem::Cvrp),
            "mkp" => Ok(Problem::Mkp),
            "tsp" => Ok(Problem::Tsp),
            "kp" => Ok(Problem::Kp),
            other => Err(format!("unknown problem '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameworkError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("instance has no feasible solution: {0}")]
    Infeasible(String),
    #[error("heuristic output does not match the instance: {0}")]
    ShapeMismatch(String),
    #[error("step scorer failed: {0}")]
    Scorer(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Framework hyperparameters, one variant per framework.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "framework", rename_all = "lowercase")]
pub enum FrameworkParams {
    Aco(aco::AcoParams),
    Gls(gls::GlsParams),
    Construction { seed: u64 },
}

impl FrameworkParams {
    /// Desk-scale defaults following the per-problem training settings.
    pub fn default_for(problem: Problem) -> Self {
        match problem {
            Problem::Op => FrameworkParams::Aco(aco::AcoParams {
                n_ants: 20,
                n_iterations: 50,
                ..aco::AcoParams::default()
            }),
            Problem::Mkp => FrameworkParams::Aco(aco::AcoParams {
                n_ants: 10,
                n_iterations: 50,
                ..aco::AcoParams::default()
            }),
            Problem::Cvrp => FrameworkParams::Aco(aco::AcoParams {
                n_ants: 30,
                n_iterations: 100,
                ..aco::AcoParams::default()
            }),
            Problem::Tsp => FrameworkParams::Gls(gls::GlsParams::default()),
            Problem::Kp => FrameworkParams::Construction { seed: 0 },
        }
    }

    pub fn framework(&self) -> Framework {
        match self {
            FrameworkParams::Aco(_) => Framework::Aco,
            FrameworkParams::Gls(_) => Framework::Gls,
            FrameworkParams::Construction { .. } => Framework::Construction,
        }
    }

    /// Copy of the parameters with the RNG seed offset for instance `index`.
    pub fn for_instance(&self, index: usize) -> Self {
        let bump = |seed: u64| seed.wrapping_add(index as u64);
        match self {
            FrameworkParams::Aco(p) => FrameworkParams::Aco(aco::AcoParams { seed: bump(p.seed), ..p.clone() }),
            FrameworkParams::Gls(p) => FrameworkParams::Gls(gls::GlsParams { seed: bump(p.seed), ..p.clone() }),
            FrameworkParams::Construction { seed } => FrameworkParams::Construction { seed: bump(*seed) },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            FrameworkParams::Aco(p) => p.validate(),
            FrameworkParams::Gls(p) => p.validate(),
            FrameworkParams::Construction { .. } => Ok(()),
        }
    }
}
