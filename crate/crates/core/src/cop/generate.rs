//! Seeded instance generators.
//!
//! Distributions: coordinates uniform in the unit square; KP weights and
//! values uniform in [0, 1]; OP prizes uniform in [0, 1]; CVRP demands
//! uniform integers in [1, 9]; MKP values and weights uniform in [0, 1] with
//! capacities at half of each constraint's row sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::instance::*;
use super::Problem;

pub const MKP_TIGHTNESS: f64 = 0.5;
pub const CVRP_DEFAULT_CAPACITY: f64 = 50.0;
pub const MKP_DEFAULT_M: usize = 5;

/// Default KP capacity: 12.5 for 50 items, 25 otherwise.
pub fn default_kp_capacity(n: usize) -> f64 {
    if n <= 50 {
        12.5
    } else {
        25.0
    }
}

/// Default OP route budget `2·sqrt(n/50)`.
pub fn default_op_max_len(n: usize) -> f64 {
    2.0 * (n as f64 / 50.0).sqrt()
}

fn point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.gen::<f64>(), rng.gen::<f64>()]
}

/// Generates `n_instances` instances of `problem`; identical arguments give
/// identical datasets.
pub fn generate_instances(problem: Problem, n_instances: usize, size: &SizeParams, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size.n;
    let instances = (0..n_instances)
        .map(|_| match problem {
            Problem::Kp => {
                let weights = (0..n).map(|_| rng.gen::<f64>()).collect();
                let values = (0..n).map(|_| rng.gen::<f64>()).collect();
                let capacity = size.capacity.unwrap_or_else(|| default_kp_capacity(n));
                ProblemInstance::Kp(KpInstance { values, weights, capacity })
            }
            Problem::Tsp => ProblemInstance::Tsp(TspInstance { coords: (0..n).map(|_| point(&mut rng)).collect() }),
            Problem::Op => {
                let coords = (0..=n).map(|_| point(&mut rng)).collect();
                let prizes = std::iter::once(0.0).chain((0..n).map(|_| rng.gen::<f64>())).collect();
                let max_len = size.max_len.unwrap_or_else(|| default_op_max_len(n));
                ProblemInstance::Op(OpInstance { coords, prizes, max_len, depot: 0 })
            }
            Problem::Cvrp => {
                let coords = (0..=n).map(|_| point(&mut rng)).collect();
                let demands = std::iter::once(0.0)
                    .chain((0..n).map(|_| rng.gen_range(1..=9) as f64))
                    .collect();
                let capacity = size.capacity.unwrap_or(CVRP_DEFAULT_CAPACITY);
                ProblemInstance::Cvrp(CvrpInstance { coords, demands, capacity, depot: 0 })
            }
            Problem::Mkp => {
                let m = size.m.unwrap_or(MKP_DEFAULT_M);
                let values = (0..n).map(|_| rng.gen::<f64>()).collect();
                let weights: Vec<Vec<f64>> =
                    (0..m).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
                let capacities = weights.iter().map(|row| MKP_TIGHTNESS * row.iter().sum::<f64>()).collect();
                ProblemInstance::Mkp(MkpInstance { values, weights, capacities })
            }
        })
        .collect();
    Dataset { problem, size: size.clone(), seed, instances }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kp_table3_shape() {
        let ds = generate_instances(Problem::Kp, 1000, &SizeParams::new(50).with_capacity(12.5), 7);
        assert_eq!(ds.len(), 1000);
        for inst in &ds.instances {
            let ProblemInstance::Kp(kp) = inst else { panic!("not kp") };
            assert_eq!(kp.values.len(), 50);
            assert_eq!(kp.capacity, 12.5);
            assert!(kp.weights.iter().chain(&kp.values).all(|x| (0.0..1.0).contains(x)));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for problem in Problem::ALL {
            let size = SizeParams::new(12);
            let a = generate_instances(problem, 4, &size, 99);
            let b = generate_instances(problem, 4, &size, 99);
            assert_eq!(a.digest(), b.digest(), "{problem}");
            let c = generate_instances(problem, 4, &size, 100);
            assert_ne!(a.digest(), c.digest(), "{problem}");
            for inst in &a.instances {
                inst.validate().unwrap();
            }
        }
    }

    #[test]
    fn mkp_weight_matrix_is_m_by_n() {
        let ds = generate_instances(Problem::Mkp, 2, &SizeParams::new(100).with_m(5), 1);
        let ProblemInstance::Mkp(mkp) = &ds.instances[0] else { panic!() };
        assert_eq!(mkp.weights.len(), 5);
        assert!(mkp.weights.iter().all(|row| row.len() == 100));
        for (row, cap) in mkp.weights.iter().zip(&mkp.capacities) {
            assert!((cap - 0.5 * row.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn cvrp_demands_are_small_integers() {
        let ds = generate_instances(Problem::Cvrp, 3, &SizeParams::new(20), 5);
        let ProblemInstance::Cvrp(c) = &ds.instances[0] else { panic!() };
        assert_eq!(c.demands[0], 0.0);
        assert!(c.demands[1..].iter().all(|d| d.fract() == 0.0 && (1.0..=9.0).contains(d)));
        assert_eq!(c.capacity, 50.0);
    }
}
