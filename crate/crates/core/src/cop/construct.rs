//! Step-by-step construction for the 0/1 knapsack.

use super::instance::KpInstance;
use super::FrameworkError;

/// Additive constant in ratio-style scores; matches the template registry.
pub const SCORE_EPS: f64 = 1e-6;

/// Construction state handed to a scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct KpState {
    pub remaining_capacity: f64,
    pub selected: Vec<bool>,
}

/// Scores the items of a knapsack instance at each construction step.
///
/// Implementations return one score per item; already-selected items must be
/// reported as `f64::NEG_INFINITY`.
pub trait StepScorer {
    fn score(&mut self, state: &KpState) -> Result<Vec<f64>, FrameworkError>;
}

/// Greedy construct scorer `v_i / (w_i + eps)`.
pub struct RatioScorer<'a> {
    pub instance: &'a KpInstance,
}

impl StepScorer for RatioScorer<'_> {
    fn score(&mut self, state: &KpState) -> Result<Vec<f64>, FrameworkError> {
        Ok(self
            .instance
            .values
            .iter()
            .zip(&self.instance.weights)
            .zip(&state.selected)
            .map(|((v, w), &sel)| if sel { f64::NEG_INFINITY } else { v / (w + SCORE_EPS) })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpSolution {
    pub value: f64,
    pub selected: Vec<bool>,
}

pub fn kp_feasible(inst: &KpInstance, selected: &[bool]) -> bool {
    let load: f64 = inst.weights.iter().zip(selected).filter(|(_, &s)| s).map(|(w, _)| w).sum();
    selected.len() == inst.weights.len() && load <= inst.capacity
}

/// Adds the feasible item with the highest score (lowest index on ties)
/// until nothing fits.
pub fn kp_construct(inst: &KpInstance, scorer: &mut dyn StepScorer) -> Result<KpSolution, FrameworkError> {
    let n = inst.values.len();
    let mut state = KpState { remaining_capacity: inst.capacity, selected: vec![false; n] };
    let mut value = 0.0;
    loop {
        let scores = scorer.score(&state)?;
        if scores.len() != n {
            return Err(FrameworkError::Scorer(format!("scorer returned {} scores for {n} items", scores.len())));
        }
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if state.selected[i] || inst.weights[i] > state.remaining_capacity || scores[i].is_nan() {
                continue;
            }
            if scores[i] == f64::NEG_INFINITY {
                continue;
            }
            if pick.map_or(true, |p| scores[i] > scores[p]) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        state.selected[i] = true;
        state.remaining_capacity -= inst.weights[i];
        value += inst.values[i];
    }
    Ok(KpSolution { value, selected: state.selected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> KpInstance {
        KpInstance { values: vec![1.0, 0.7, 0.7], weights: vec![0.5, 0.4, 0.4], capacity: 0.8 }
    }

    #[test]
    fn greedy_trace_on_three_items() {
        // Ratios 2.0, 1.75, 1.75: item 0 first, then neither 0.4 fits in 0.3.
        let inst = tiny();
        let sol = kp_construct(&inst, &mut RatioScorer { instance: &inst }).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert_eq!(sol.selected, vec![true, false, false]);
    }

    #[test]
    fn everything_fits() {
        let inst = KpInstance { capacity: 10.0, ..tiny() };
        let sol = kp_construct(&inst, &mut RatioScorer { instance: &inst }).unwrap();
        assert!((sol.value - 2.4).abs() < 1e-12);
    }

    #[test]
    fn nothing_fits() {
        let inst = KpInstance { capacity: 0.3, ..tiny() };
        let sol = kp_construct(&inst, &mut RatioScorer { instance: &inst }).unwrap();
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let inst = KpInstance { values: vec![1.0, 1.0], weights: vec![0.5, 0.5], capacity: 0.6 };
        let sol = kp_construct(&inst, &mut RatioScorer { instance: &inst }).unwrap();
        assert_eq!(sol.selected, vec![true, false]);
    }

    struct Failing;
    impl StepScorer for Failing {
        fn score(&mut self, _: &KpState) -> Result<Vec<f64>, FrameworkError> {
            Err(FrameworkError::Scorer("boom".into()))
        }
    }

    #[test]
    fn scorer_failure_fails_construction() {
        assert!(kp_construct(&tiny(), &mut Failing).is_err());
    }
}
