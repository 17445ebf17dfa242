//! Hand-designed baselines.

use rayon::prelude::*;

use super::construct::{kp_construct, RatioScorer};
use super::instance::{Dataset, ProblemInstance};
use super::FrameworkError;

/// Greedy construct: value-to-weight ratio construction on every KP instance.
/// Returns the per-instance objectives in dataset order.
pub fn greedy_construct_objectives(dataset: &Dataset) -> Result<Vec<f64>, FrameworkError> {
    dataset
        .instances
        .par_iter()
        .map(|inst| match inst {
            ProblemInstance::Kp(kp) => kp_construct(kp, &mut RatioScorer { instance: kp }).map(|s| s.value),
            other => Err(FrameworkError::Unsupported(format!("greedy construct needs KP, got {}", other.problem()))),
        })
        .collect()
}

/// Mean greedy-construct objective over a KP dataset.
pub fn baseline_gc(dataset: &Dataset) -> Result<f64, FrameworkError> {
    let objs = greedy_construct_objectives(dataset)?;
    if objs.is_empty() {
        return Err(FrameworkError::InvalidInstance("empty dataset".into()));
    }
    Ok(objs.iter().sum::<f64>() / objs.len() as f64)
}
