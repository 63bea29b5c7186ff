//! Direct simulation of ABLQ with the linear query `ψ(x) = x` and the three
//! batch samplers. `None` records are zeroed out and contribute 0.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::chunk_rng;
use crate::accounting::Mechanism;
use crate::error::{check_positive, AccountingError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AblqRun {
    /// `g_t = Σ_{i ∈ S_t} x_i + N(0, σ²)`.
    pub outputs: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

fn check_dataset(dataset: &[Option<f64>]) -> Result<()> {
    for x in dataset.iter().flatten() {
        if !(x.abs() <= 1.0) {
            return Err(AccountingError::InvalidParameter {
                name: "dataset",
                value: *x,
                reason: "records must lie in [-1, 1]",
            });
        }
    }
    Ok(())
}

/// One run of ABLQ under `sampler`.
pub fn simulate_ablq_run(
    sampler: Mechanism,
    dataset: &[Option<f64>],
    batch_size: usize,
    steps: usize,
    sigma: f64,
    seed: u64,
) -> Result<AblqRun> {
    check_positive("sigma", sigma)?;
    check_dataset(dataset)?;
    if batch_size == 0 || steps == 0 {
        return Err(AccountingError::InvalidParameter {
            name: "batch_size",
            value: batch_size.min(steps) as f64,
            reason: "batch size and steps must be positive",
        });
    }
    let n = dataset.len();
    let value = |i: usize| dataset[i].unwrap_or(0.0);
    let mut rng = chunk_rng(seed, 0);
    let batches: Vec<Vec<usize>> = match sampler {
        Mechanism::Deterministic | Mechanism::Shuffle => {
            if n != batch_size * steps {
                return Err(AccountingError::ShapeViolation { n, required: batch_size * steps });
            }
            let mut order: Vec<usize> = (0..n).collect();
            if sampler == Mechanism::Shuffle {
                order.shuffle(&mut rng);
            }
            order.chunks(batch_size).map(<[usize]>::to_vec).collect()
        }
        Mechanism::Poisson => {
            if n == 0 {
                return Err(AccountingError::ShapeViolation { n, required: batch_size });
            }
            let p = (batch_size as f64 / n as f64).min(1.0);
            (0..steps)
                .map(|_| (0..n).filter(|_| rng.random::<f64>() < p).collect())
                .collect()
        }
    };
    let outputs = batches
        .iter()
        .map(|b| b.iter().map(|&i| value(i)).sum::<f64>() + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(AblqRun { outputs, batch_sizes: batches.iter().map(Vec::len).collect() })
}

/// The `T` noisy batch sums of one run.
pub fn simulate_ablq(
    sampler: Mechanism,
    dataset: &[Option<f64>],
    batch_size: usize,
    steps: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(simulate_ablq_run(sampler, dataset, batch_size, steps, sigma, seed)?.outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_blocks_without_noise() {
        let data: Vec<Option<f64>> = vec![Some(0.5), Some(-1.0), None, Some(0.25), Some(1.0), Some(1.0)];
        let g = simulate_ablq(Mechanism::Deterministic, &data, 2, 3, 1e-9, 1).unwrap();
        for (got, want) in g.iter().zip([-0.5, 0.25, 2.0]) {
            assert!((got - want).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_is_enforced() {
        let data = vec![Some(0.0); 7];
        for s in [Mechanism::Deterministic, Mechanism::Shuffle] {
            assert_eq!(
                simulate_ablq(s, &data, 2, 3, 1.0, 0),
                Err(AccountingError::ShapeViolation { n: 7, required: 6 })
            );
        }
        assert!(simulate_ablq(Mechanism::Poisson, &data, 2, 3, 1.0, 0).is_ok());
        assert!(simulate_ablq(Mechanism::Poisson, &[Some(1.5)], 1, 1, 1.0, 0).is_err());
    }

    #[test]
    fn shuffle_partitions_records() {
        let data: Vec<Option<f64>> = (0..12).map(|_| Some(1.0)).collect();
        let run = simulate_ablq_run(Mechanism::Shuffle, &data, 3, 4, 1e-9, 9).unwrap();
        assert_eq!(run.batch_sizes, vec![3; 4]);
        assert!(run.outputs.iter().all(|g| (g - 3.0).abs() < 1e-7));
    }
}
