//! Exact optima for small instances.
//!
//! KP is solved by dynamic programming over weights floored onto a
//! `KP_SCALE` grid. Flooring relaxes every constraint, so the DP value is an
//! upper bound on the true optimum; a solution it accepts can overshoot the
//! real capacity by less than `n · KP_SCALE`. The routing problems and MKP
//! are solved exactly by subset dynamic programming for at most
//! `MAX_EXACT_SIZE` customers or items.

use super::instance::*;
use super::{FrameworkError, Sense, SquareMatrix, FEAS_EPS};

pub const KP_SCALE: f64 = 1e-4;
pub const MAX_EXACT_SIZE: usize = 12;

pub fn oracle_exact(inst: &ProblemInstance) -> Result<f64, FrameworkError> {
    inst.validate()?;
    match inst {
        ProblemInstance::Kp(i) => Ok(kp_dp(i)),
        ProblemInstance::Tsp(i) => tsp_exact(i),
        ProblemInstance::Op(i) => op_exact(i),
        ProblemInstance::Cvrp(i) => cvrp_exact(i),
        ProblemInstance::Mkp(i) => mkp_exact(i),
    }
}

/// Relative distance of `objective` from `optimum`, non-negative when the
/// oracle dominates.
pub fn relative_gap(sense: Sense, objective: f64, optimum: f64) -> f64 {
    let diff = match sense {
        Sense::Maximize => optimum - objective,
        Sense::Minimize => objective - optimum,
    };
    diff / optimum.abs().max(f64::MIN_POSITIVE)
}

/// Whether `oracle_exact` supports this instance.
pub fn oracle_available(inst: &ProblemInstance) -> bool {
    matches!(inst, ProblemInstance::Kp(_)) || inst.size() <= MAX_EXACT_SIZE
}

fn size_guard(n: usize) -> Result<(), FrameworkError> {
    if n > MAX_EXACT_SIZE {
        Err(FrameworkError::Unsupported(format!("exact search limited to {MAX_EXACT_SIZE} nodes, got {n}")))
    } else {
        Ok(())
    }
}

pub fn kp_dp(inst: &KpInstance) -> f64 {
    let cap = (inst.capacity / KP_SCALE + 1e-9).floor() as usize;
    let mut prev = vec![0.0f64; cap + 1];
    let mut next = vec![0.0f64; cap + 1];
    for (&v, &w) in inst.values.iter().zip(&inst.weights) {
        let units = (w / KP_SCALE).floor() as usize;
        if units > cap || v <= 0.0 {
            continue;
        }
        next[..units].copy_from_slice(&prev[..units]);
        let (keep, take) = (&prev[units..], &prev[..=cap - units]);
        for ((out, &a), &b) in next[units..].iter_mut().zip(keep).zip(take) {
            *out = a.max(b + v);
        }
        std::mem::swap(&mut prev, &mut next);
    }
    prev[cap]
}

/// `paths[mask][j]`: shortest path from `start` through the nodes of `mask`
/// (bit k = `nodes[k]`) ending at `nodes[j]`, with `j` in `mask`.
fn held_karp_paths(d: &SquareMatrix, start: usize, nodes: &[usize]) -> Vec<Vec<f64>> {
    let k = nodes.len();
    let full = 1usize << k;
    let mut paths = vec![vec![f64::INFINITY; k]; full];
    for j in 0..k {
        paths[1 << j][j] = d.get(start, nodes[j]);
    }
    for mask in 1..full {
        for j in 0..k {
            let here = paths[mask][j];
            if mask & (1 << j) == 0 || !here.is_finite() {
                continue;
            }
            for t in 0..k {
                if mask & (1 << t) != 0 {
                    continue;
                }
                let cand = here + d.get(nodes[j], nodes[t]);
                let slot = &mut paths[mask | (1 << t)][t];
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
    }
    paths
}

/// Shortest closed tour from `start` through each subset of `nodes`.
fn subset_tours(d: &SquareMatrix, start: usize, nodes: &[usize]) -> Vec<f64> {
    let paths = held_karp_paths(d, start, nodes);
    let mut tours = vec![f64::INFINITY; paths.len()];
    tours[0] = 0.0;
    for (mask, row) in paths.iter().enumerate().skip(1) {
        tours[mask] = (0..nodes.len())
            .filter(|&j| mask & (1 << j) != 0)
            .map(|j| row[j] + d.get(nodes[j], start))
            .fold(f64::INFINITY, f64::min);
    }
    tours
}

pub fn tsp_exact(inst: &TspInstance) -> Result<f64, FrameworkError> {
    let n = inst.coords.len();
    size_guard(n)?;
    let d = inst.distances();
    if n <= 1 {
        return Ok(0.0);
    }
    let rest: Vec<usize> = (1..n).collect();
    Ok(*subset_tours(&d, 0, &rest).last().unwrap())
}

pub fn op_exact(inst: &OpInstance) -> Result<f64, FrameworkError> {
    let customers: Vec<usize> = (0..inst.coords.len()).filter(|&i| i != inst.depot).collect();
    size_guard(customers.len())?;
    let d = inst.distances();
    let paths = held_karp_paths(&d, inst.depot, &customers);
    let mut best = 0.0f64;
    for (mask, row) in paths.iter().enumerate().skip(1) {
        let feasible = (0..customers.len())
            .filter(|&j| mask & (1 << j) != 0)
            .any(|j| row[j] + d.get(customers[j], inst.depot) <= inst.max_len + FEAS_EPS);
        if feasible {
            let prize: f64 = (0..customers.len()).filter(|&j| mask & (1 << j) != 0).map(|j| inst.prizes[customers[j]]).sum();
            best = best.max(prize);
        }
    }
    Ok(best)
}

pub fn cvrp_exact(inst: &CvrpInstance) -> Result<f64, FrameworkError> {
    let customers: Vec<usize> = inst.customers().collect();
    let k = customers.len();
    size_guard(k)?;
    let d = inst.distances();
    let tours = subset_tours(&d, inst.depot, &customers);
    let full = (1usize << k) - 1;
    let demand = |mask: usize| -> f64 { (0..k).filter(|&j| mask & (1 << j) != 0).map(|j| inst.demands[customers[j]]).sum() };
    let route_ok: Vec<bool> = (0..=full).map(|m| demand(m) <= inst.capacity + FEAS_EPS).collect();
    // best[S]: cheapest set of routes covering exactly S.
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for s in 1..=full {
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        // Enumerate routes T = low ∪ sub for sub ⊆ rest.
        let mut sub = rest;
        loop {
            let t = sub | low;
            if route_ok[t] {
                let c = tours[t] + best[s ^ t];
                if c < best[s] {
                    best[s] = c;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    if best[full].is_finite() {
        Ok(best[full])
    } else {
        Err(FrameworkError::Infeasible("some customer demand exceeds capacity".into()))
    }
}

pub fn mkp_exact(inst: &MkpInstance) -> Result<f64, FrameworkError> {
    let n = inst.n_items();
    size_guard(n)?;
    let mut best = 0.0f64;
    for mask in 0usize..(1 << n) {
        let fits = inst.weights.iter().zip(&inst.capacities).all(|(row, cap)| {
            (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| row[i]).sum::<f64>() <= cap + FEAS_EPS
        });
        if fits {
            let v: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| inst.values[i]).sum();
            best = best.max(v);
        }
    }
    Ok(best)
}
