//! Ant colony optimization for OP, CVRP and MKP.
//!
//! Pheromone starts at 1. Each iteration every ant builds a feasible solution,
//! picking the next component with probability proportional to
//! `tau^alpha * eta^beta` over the feasible set. Pheromone then evaporates by
//! `rho` and the best ant of the iteration deposits its objective (maximization)
//! or the inverse of its cost (minimization) on the components it used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{CvrpInstance, MkpInstance, OpInstance};
use super::{FrameworkError, SquareMatrix, FEAS_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcoParams {
    pub n_ants: usize,
    pub n_iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for AcoParams {
    fn default() -> Self {
        Self { n_ants: 20, n_iterations: 50, alpha: 1.0, beta: 1.0, rho: 0.1, seed: 0 }
    }
}

impl AcoParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_ants == 0 || self.n_iterations == 0 {
            return Err("ACO needs at least one ant and one iteration".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(format!("ACO rho must lie in (0,1), got {}", self.rho));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err("ACO exponents must be finite".into());
        }
        Ok(())
    }
}

/// Best solution found plus the best-so-far objective after each iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct AcoOutcome {
    pub best_objective: f64,
    /// OP/CVRP: node sequence starting and ending at the depot.
    /// MKP: selected item indices in pick order.
    pub best_solution: Vec<usize>,
    pub history: Vec<f64>,
}

fn roulette(rng: &mut ChaCha8Rng, candidates: &[usize], weights: &mut Vec<f64>, weight: impl Fn(usize) -> f64) -> usize {
    weights.clear();
    weights.extend(candidates.iter().map(|&c| weight(c)));
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return candidates[rng.gen_range(0..candidates.len())];
    }
    let mut r = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        r -= w;
        if r < 0.0 {
            return candidates[k];
        }
    }
    *candidates.last().expect("non-empty candidate list")
}

fn attractiveness(tau: &[f64], eta: &[f64], p: &AcoParams) -> Vec<f64> {
    tau.iter()
        .zip(eta)
        .map(|(&t, &e)| {
            let a = t.powf(p.alpha) * e.powf(p.beta);
            if a.is_finite() {
                a
            } else {
                0.0
            }
        })
        .collect()
}

fn check_matrix(eta: &SquareMatrix, n: usize) -> Result<(), FrameworkError> {
    if eta.n() != n {
        return Err(FrameworkError::ShapeMismatch(format!("heuristic matrix is {0}x{0}, instance has {n} nodes", eta.n())));
    }
    Ok(())
}

fn route_length(d: &SquareMatrix, route: &[usize]) -> f64 {
    route.windows(2).map(|w| d.get(w[0], w[1])).sum()
}

fn deposit_route(tau: &mut SquareMatrix, route: &[usize], amount: f64) {
    for w in route.windows(2) {
        let v = tau.get(w[0], w[1]) + amount;
        tau.set(w[0], w[1], v);
        tau.set(w[1], w[0], v);
    }
}

/// True when `route` starts and ends at the depot, visits each customer at
/// most once and stays within `max_len`.
pub fn op_route_feasible(inst: &OpInstance, route: &[usize]) -> bool {
    let d = inst.distances();
    let n = inst.coords.len();
    if route.len() < 2 || route[0] != inst.depot || *route.last().unwrap() != inst.depot {
        return false;
    }
    let mut seen = vec![false; n];
    for &v in &route[1..route.len() - 1] {
        if v >= n || v == inst.depot || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    route_length(&d, route) <= inst.max_len + FEAS_EPS
}

pub fn op_prize(inst: &OpInstance, route: &[usize]) -> f64 {
    route.iter().filter(|&&v| v != inst.depot).map(|&v| inst.prizes[v]).sum()
}

/// True when every customer is visited exactly once and every depot-to-depot
/// segment respects the vehicle capacity.
pub fn cvrp_routes_feasible(inst: &CvrpInstance, tour: &[usize]) -> bool {
    let n = inst.coords.len();
    if tour.len() < 2 || tour[0] != inst.depot || *tour.last().unwrap() != inst.depot {
        return false;
    }
    let mut seen = vec![false; n];
    let mut load = 0.0;
    for &v in tour {
        if v >= n {
            return false;
        }
        if v == inst.depot {
            load = 0.0;
            continue;
        }
        if seen[v] {
            return false;
        }
        seen[v] = true;
        load += inst.demands[v];
        if load > inst.capacity + FEAS_EPS {
            return false;
        }
    }
    inst.customers().all(|c| seen[c])
}

pub fn cvrp_cost(inst: &CvrpInstance, tour: &[usize]) -> f64 {
    route_length(&inst.distances(), tour)
}

pub fn mkp_feasible(inst: &MkpInstance, items: &[usize]) -> bool {
    let mut seen = vec![false; inst.n_items()];
    for &i in items {
        if i >= inst.n_items() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    inst.weights.iter().zip(&inst.capacities).all(|(row, cap)| {
        let load: f64 = items.iter().map(|&i| row[i]).sum();
        load <= cap + FEAS_EPS
    })
}

/// Orienteering: maximize collected prize.
pub fn solve_op(inst: &OpInstance, eta: &SquareMatrix, p: &AcoParams) -> Result<AcoOutcome, FrameworkError> {
    let n = inst.coords.len();
    check_matrix(eta, n)?;
    let d = inst.distances();
    let depot = inst.depot;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut tau = SquareMatrix::filled(n, 1.0);
    let mut best = AcoOutcome { best_objective: 0.0, best_solution: vec![depot, depot], history: Vec::new() };
    let mut cands = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);

    for _ in 0..p.n_iterations {
        let attract = attractiveness(tau.as_slice(), eta.as_slice(), p);
        let mut iter_best: Option<(f64, Vec<usize>)> = None;
        for _ in 0..p.n_ants {
            let mut visited = vec![false; n];
            visited[depot] = true;
            let mut route = vec![depot];
            let (mut cur, mut len, mut prize) = (depot, 0.0, 0.0);
            loop {
                cands.clear();
                cands.extend((0..n).filter(|&j| {
                    !visited[j] && len + d.get(cur, j) + d.get(j, depot) <= inst.max_len + FEAS_EPS
                }));
                if cands.is_empty() {
                    break;
                }
                let next = roulette(&mut rng, &cands, &mut scratch, |j| attract[cur * n + j]);
                visited[next] = true;
                len += d.get(cur, next);
                prize += inst.prizes[next];
                route.push(next);
                cur = next;
            }
            route.push(depot);
            if iter_best.as_ref().map_or(true, |(b, _)| prize > *b) {
                iter_best = Some((prize, route));
            }
        }
        let (obj, route) = iter_best.expect("at least one ant");
        for t in tau.as_mut_slice() {
            *t *= 1.0 - p.rho;
        }
        if obj > 0.0 {
            deposit_route(&mut tau, &route, obj);
        }
        if obj > best.best_objective {
            best.best_objective = obj;
            best.best_solution = route;
        }
        best.history.push(best.best_objective);
    }
    Ok(best)
}

/// CVRP: minimize total distance. Ants may return to the depot early; they
/// must return when no unvisited customer fits the remaining load.
pub fn solve_cvrp(inst: &CvrpInstance, eta: &SquareMatrix, p: &AcoParams) -> Result<AcoOutcome, FrameworkError> {
    let n = inst.coords.len();
    check_matrix(eta, n)?;
    if let Some(c) = inst.customers().find(|&c| inst.demands[c] > inst.capacity + FEAS_EPS) {
        return Err(FrameworkError::Infeasible(format!(
            "customer {c} demand {} exceeds capacity {}",
            inst.demands[c], inst.capacity
        )));
    }
    let d = inst.distances();
    let depot = inst.depot;
    let n_customers = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut tau = SquareMatrix::filled(n, 1.0);
    let mut best = AcoOutcome { best_objective: f64::INFINITY, best_solution: Vec::new(), history: Vec::new() };
    let mut cands = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);

    for _ in 0..p.n_iterations {
        let attract = attractiveness(tau.as_slice(), eta.as_slice(), p);
        let mut iter_best: Option<(f64, Vec<usize>)> = None;
        for _ in 0..p.n_ants {
            let mut visited = vec![false; n];
            visited[depot] = true;
            let mut tour = vec![depot];
            let (mut cur, mut load, mut served) = (depot, inst.capacity, 0usize);
            while served < n_customers {
                cands.clear();
                cands.extend((0..n).filter(|&j| !visited[j] && inst.demands[j] <= load + FEAS_EPS));
                let next = if cands.is_empty() {
                    depot
                } else {
                    if cur != depot {
                        cands.push(depot);
                    }
                    roulette(&mut rng, &cands, &mut scratch, |j| attract[cur * n + j])
                };
                if next == depot {
                    load = inst.capacity;
                } else {
                    visited[next] = true;
                    load -= inst.demands[next];
                    served += 1;
                }
                tour.push(next);
                cur = next;
            }
            if cur != depot {
                tour.push(depot);
            }
            let cost = route_length(&d, &tour);
            if iter_best.as_ref().map_or(true, |(b, _)| cost < *b) {
                iter_best = Some((cost, tour));
            }
        }
        let (obj, tour) = iter_best.expect("at least one ant");
        for t in tau.as_mut_slice() {
            *t *= 1.0 - p.rho;
        }
        if obj > 0.0 {
            deposit_route(&mut tau, &tour, 1.0 / obj);
        }
        if obj < best.best_objective {
            best.best_objective = obj;
            best.best_solution = tour;
        }
        best.history.push(best.best_objective);
    }
    Ok(best)
}

/// MKP: maximize packed value under every constraint, with a per-item
/// heuristic vector and per-item pheromone.
pub fn solve_mkp(inst: &MkpInstance, eta: &[f64], p: &AcoParams) -> Result<AcoOutcome, FrameworkError> {
    let n = inst.n_items();
    if eta.len() != n {
        return Err(FrameworkError::ShapeMismatch(format!("heuristic vector has {} entries, instance has {n} items", eta.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut tau = vec![1.0; n];
    let mut best = AcoOutcome { best_objective: 0.0, best_solution: Vec::new(), history: Vec::new() };
    let mut cands = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);

    for _ in 0..p.n_iterations {
        let attract = attractiveness(&tau, eta, p);
        let mut iter_best: Option<(f64, Vec<usize>)> = None;
        for _ in 0..p.n_ants {
            let mut residual = inst.capacities.clone();
            let mut chosen = vec![false; n];
            let mut picked = Vec::new();
            let mut value = 0.0;
            loop {
                cands.clear();
                cands.extend((0..n).filter(|&i| {
                    !chosen[i] && inst.weights.iter().zip(&residual).all(|(row, r)| row[i] <= r + FEAS_EPS)
                }));
                if cands.is_empty() {
                    break;
                }
                let item = roulette(&mut rng, &cands, &mut scratch, |i| attract[i]);
                chosen[item] = true;
                for (row, r) in inst.weights.iter().zip(residual.iter_mut()) {
                    *r -= row[item];
                }
                value += inst.values[item];
                picked.push(item);
            }
            if iter_best.as_ref().map_or(true, |(b, _)| value > *b) {
                iter_best = Some((value, picked));
            }
        }
        let (obj, picked) = iter_best.expect("at least one ant");
        for t in tau.iter_mut() {
            *t *= 1.0 - p.rho;
        }
        for &i in &picked {
            tau[i] += obj;
        }
        if obj > best.best_objective {
            best.best_objective = obj;
            best.best_solution = picked;
        }
        best.history.push(best.best_objective);
    }
    Ok(best)
}
