//! Guided local search for the TSP.
//!
//! Starts from a nearest-neighbour tour and alternates 2-opt descent on the
//! penalty-augmented cost `d_ij + lambda * penalty_ij` with a penalty step
//! that bumps the tour edges of maximal utility `eta_ij / (1 + penalty_ij)`.
//! The heuristic matrix `eta` is the penalty indicator.

use serde::{Deserialize, Serialize};

use super::instance::TspInstance;
use super::{FrameworkError, SquareMatrix};

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlsParams {
    pub penalty_rounds: usize,
    pub lambda_factor: f64,
    /// Selects the nearest-neighbour start city (`seed mod n`).
    pub seed: u64,
}

impl Default for GlsParams {
    fn default() -> Self {
        Self { penalty_rounds: 100, lambda_factor: 0.1, seed: 0 }
    }
}

impl GlsParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda_factor >= 0.0 && self.lambda_factor.is_finite()) {
            return Err(format!("GLS lambda_factor must be non-negative, got {}", self.lambda_factor));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlsOutcome {
    pub best_cost: f64,
    pub best_tour: Vec<usize>,
    /// Best true cost after the initial descent and after each penalty round.
    pub history: Vec<f64>,
}

/// Length of the closed tour.
pub fn tour_length(d: &SquareMatrix, tour: &[usize]) -> f64 {
    if tour.len() < 2 {
        return 0.0;
    }
    let n = tour.len();
    (0..n).map(|k| d.get(tour[k], tour[(k + 1) % n])).sum()
}

pub fn is_hamiltonian(tour: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    tour.len() == n && tour.iter().all(|&c| c < n && !std::mem::replace(&mut seen[c], true))
}

/// Greedy nearest-neighbour tour from `start`; ties go to the lowest index.
pub fn nearest_neighbor_tour(d: &SquareMatrix, start: usize) -> Vec<usize> {
    let n = d.n();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut next = None;
        let mut best = f64::INFINITY;
        for j in 0..n {
            if !visited[j] && d.get(cur, j) < best {
                best = d.get(cur, j);
                next = Some(j);
            }
        }
        let j = next.expect("unvisited city remains");
        visited[j] = true;
        tour.push(j);
        cur = j;
    }
    tour
}

/// Best-improvement 2-opt until no move improves `cost` by more than a
/// rounding epsilon.
pub fn two_opt_descent(tour: &mut [usize], cost: impl Fn(usize, usize) -> f64) {
    let n = tour.len();
    if n < 4 {
        return;
    }
    loop {
        let mut best_delta = -IMPROVEMENT_EPS;
        let mut best_move = None;
        for i in 0..n - 1 {
            let (a, b) = (tour[i], tour[i + 1]);
            let cab = cost(a, b);
            // j = n-1 with i = 0 would reverse the whole tour.
            let j_end = if i == 0 { n - 1 } else { n };
            for j in i + 2..j_end {
                let (c, e) = (tour[j], tour[(j + 1) % n]);
                let delta = cost(a, c) + cost(b, e) - cab - cost(c, e);
                if delta < best_delta {
                    best_delta = delta;
                    best_move = Some((i, j));
                }
            }
        }
        match best_move {
            Some((i, j)) => tour[i + 1..=j].reverse(),
            None => return,
        }
    }
}

fn permutations_best(d: &SquareMatrix) -> (f64, Vec<usize>) {
    // n < 4: every Hamiltonian cycle has the same length.
    let tour: Vec<usize> = (0..d.n()).collect();
    (tour_length(d, &tour), tour)
}

/// Plain 2-opt local optimum from the same start tour GLS uses.
pub fn two_opt_only(inst: &TspInstance, seed: u64) -> Result<GlsOutcome, FrameworkError> {
    solve_tsp(inst, &SquareMatrix::filled(inst.coords.len(), 1.0), &GlsParams { penalty_rounds: 0, lambda_factor: 0.0, seed })
}

pub fn solve_tsp(inst: &TspInstance, indicator: &SquareMatrix, p: &GlsParams) -> Result<GlsOutcome, FrameworkError> {
    let n = inst.coords.len();
    if n == 0 {
        return Err(FrameworkError::InvalidInstance("TSP with no cities".into()));
    }
    if indicator.n() != n {
        return Err(FrameworkError::ShapeMismatch(format!("indicator is {0}x{0}, instance has {n} cities", indicator.n())));
    }
    let d = inst.distances();
    if n < 4 {
        let (cost, tour) = permutations_best(&d);
        return Ok(GlsOutcome { best_cost: cost, best_tour: tour, history: vec![cost] });
    }

    let mut tour = nearest_neighbor_tour(&d, (p.seed % n as u64) as usize);
    two_opt_descent(&mut tour, |i, j| d.get(i, j));
    let mut best_cost = tour_length(&d, &tour);
    let mut best_tour = tour.clone();
    let mut history = vec![best_cost];
    let mut penalty = SquareMatrix::filled(n, 0.0);

    for _ in 0..p.penalty_rounds {
        // Penalize the tour edges of maximal utility.
        let edges: Vec<(usize, usize)> = (0..n).map(|k| (tour[k], tour[(k + 1) % n])).collect();
        let utility: Vec<f64> = edges.iter().map(|&(i, j)| indicator.get(i, j) / (1.0 + penalty.get(i, j))).collect();
        let max_u = utility.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (e, &u) in edges.iter().zip(&utility) {
            if u >= max_u - IMPROVEMENT_EPS {
                let v = penalty.get(e.0, e.1) + 1.0;
                penalty.set(e.0, e.1, v);
                penalty.set(e.1, e.0, v);
            }
        }
        let lambda = p.lambda_factor * tour_length(&d, &tour) / n as f64;
        two_opt_descent(&mut tour, |i, j| d.get(i, j) + lambda * penalty.get(i, j));
        let cost = tour_length(&d, &tour);
        if cost < best_cost {
            best_cost = cost;
            best_tour.clone_from(&tour);
        }
        history.push(best_cost);
    }
    Ok(GlsOutcome { best_cost, best_tour, history })
}
