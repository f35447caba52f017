//! Heterogeneity-aware incremental data partitioning (IDPA) and the uniform
//! baseline (UDPA), plus the corrected iteration budget.
//!
//! Samples are handed out in `A` batches of `floor(N/A)` (the final batch
//! also absorbs `N mod A`). The first batch splits proportionally to
//! advertised worker frequencies; later batches split by measured per-sample
//! times so that all workers finish an iteration together.

pub mod error;
mod idpa;
mod plan;

pub use error::PartitionError;
pub use idpa::{udpa_plan, IdpaPlanner, WorkerProfile};
pub use plan::PartitionPlan;

/// First-batch allocation, proportional to advertised frequencies: workers
/// 1..m-1 get floor(floor(N/A) * mu_j / sum(mu)); the last worker takes the
/// remainder.
pub fn initial_allocation(
    samples: u64,
    batches: u64,
    frequencies: &[f64],
) -> Result<Vec<u64>, PartitionError> {
    let m = frequencies.len();
    if m == 0 {
        return Err(PartitionError::Empty("worker"));
    }
    if batches == 0 {
        return Err(PartitionError::Empty("batch"));
    }
    if batches > samples {
        return Err(PartitionError::TooManyBatches { batches, samples });
    }
    for (j, mu) in frequencies.iter().enumerate() {
        if !(mu.is_finite() && *mu > 0.0) {
            return Err(PartitionError::BadFrequency(j));
        }
    }
    let pool = samples / batches;
    let total: f64 = frequencies.iter().sum();
    let mut out = Vec::with_capacity(m);
    let mut assigned = 0u64;
    for mu in &frequencies[..m - 1] {
        let share = ((pool as f64) * mu / total).floor() as u64;
        out.push(share);
        assigned += share;
    }
    out.push(pool - assigned);
    Ok(out)
}

/// Predicted duration of iteration `a` (arithmetic-mean form):
/// floor(N/A) * a * mean(t) / m.
pub fn predict_iteration_time(
    samples: u64,
    batches: u64,
    a: usize,
    mean_times: &[f64],
) -> Result<f64, PartitionError> {
    let m = mean_times.len();
    if m == 0 {
        return Err(PartitionError::Empty("worker"));
    }
    if a < 2 {
        return Err(PartitionError::BadBatchIndex(a));
    }
    for (j, t) in mean_times.iter().enumerate() {
        if !(t.is_finite() && *t > 0.0) {
            return Err(PartitionError::UnmeasuredWorker(j));
        }
    }
    let pool = (samples / batches) as f64;
    let mean: f64 = mean_times.iter().sum::<f64>() / m as f64;
    Ok(pool * a as f64 * mean / m as f64)
}

/// Batch `a` increments given a target per-iteration duration: workers
/// 1..m-1 aim for cumulative totals floor(T_a / t_j) (increments clamped at
/// zero when a worker slowed down); the last worker takes the batch
/// remainder. A negative remainder is clamped to zero and the excess removed
/// from the fastest workers first.
pub fn batch_allocation(
    samples: u64,
    batches: u64,
    a: usize,
    target_time: f64,
    mean_times: &[f64],
    prior_cumulative: &[u64],
) -> Result<Vec<u64>, PartitionError> {
    let m = mean_times.len();
    if m == 0 {
        return Err(PartitionError::Empty("worker"));
    }
    if prior_cumulative.len() != m {
        return Err(PartitionError::WrongWorkerCount {
            expected: m,
            got: prior_cumulative.len(),
        });
    }
    if a < 2 {
        return Err(PartitionError::BadBatchIndex(a));
    }
    for (j, t) in mean_times.iter().enumerate() {
        if !(t.is_finite() && *t > 0.0) {
            return Err(PartitionError::UnmeasuredWorker(j));
        }
    }
    let pool = samples / batches;
    let mut increments = Vec::with_capacity(m);
    let mut assigned = 0u64;
    for j in 0..m - 1 {
        let target = (target_time / mean_times[j]).floor() as u64;
        let inc = target.saturating_sub(prior_cumulative[j]);
        increments.push(inc);
        assigned += inc;
    }
    if assigned <= pool {
        increments.push(pool - assigned);
    } else {
        increments.push(0);
        let mut deficit = assigned - pool;
        // remove the overshoot from the fastest workers first
        let mut order: Vec<usize> = (0..m - 1).collect();
        order.sort_by(|&x, &y| {
            mean_times[x]
                .partial_cmp(&mean_times[y])
                .unwrap()
                .then(x.cmp(&y))
        });
        for j in order {
            if deficit == 0 {
                break;
            }
            let cut = increments[j].min(deficit);
            increments[j] -= cut;
            deficit -= cut;
        }
    }
    Ok(increments)
}

/// Corrected iteration budget: during the A partitioning batches each sample
/// is seen only (A+1)/2 times on average, so the remainder is
/// dK = floor(K - (A+1)/2) and the run executes K' = A + dK iterations in
/// total. (The sample count cancels out of the floor form.)
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationBudget {
    pub nominal: u64,
    pub batches: u64,
    pub remaining: u64,
    pub total: u64,
}

pub fn remaining_iterations(
    iterations: u64,
    batches: u64,
    _samples: u64,
) -> Result<IterationBudget, PartitionError> {
    if batches == 0 || batches >= iterations {
        return Err(PartitionError::BadIterationSplit {
            batches,
            iterations,
        });
    }
    let remaining = (2 * iterations - batches - 1) / 2;
    Ok(IterationBudget {
        nominal: iterations,
        batches,
        remaining,
        total: batches + remaining,
    })
}

/// Uniform baseline: floor(N/m) per worker, remainder to the last worker,
/// all in a single batch.
pub fn udpa_allocation(samples: u64, workers: usize) -> Result<Vec<u64>, PartitionError> {
    if workers == 0 {
        return Err(PartitionError::Empty("worker"));
    }
    let base = samples / workers as u64;
    let mut out = vec![base; workers];
    *out.last_mut().unwrap() += samples % workers as u64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_allocation_examples() {
        assert_eq!(
            initial_allocation(100, 4, &[2.0, 1.0]).unwrap(),
            vec![16, 9]
        );
        assert_eq!(
            initial_allocation(90, 3, &[1.0, 1.0, 2.0]).unwrap(),
            vec![7, 7, 16]
        );
        // equal frequencies dividing the pool exactly: equal split
        assert_eq!(
            initial_allocation(120, 3, &[1.5, 1.5, 1.5, 1.5]).unwrap(),
            vec![10, 10, 10, 10]
        );
    }

    #[test]
    fn initial_allocation_errors() {
        assert!(matches!(
            initial_allocation(10, 20, &[1.0]),
            Err(PartitionError::TooManyBatches { .. })
        ));
        assert!(matches!(
            initial_allocation(10, 2, &[1.0, 0.0]),
            Err(PartitionError::BadFrequency(1))
        ));
        assert!(matches!(
            initial_allocation(10, 2, &[]),
            Err(PartitionError::Empty("worker"))
        ));
    }

    #[test]
    fn predicted_time_examples() {
        assert_eq!(
            predict_iteration_time(100, 4, 2, &[1.0, 2.0]).unwrap(),
            37.5
        );
        assert_eq!(
            predict_iteration_time(100, 4, 3, &[1.0, 2.0]).unwrap(),
            56.25
        );
        // single node: pool * a
        assert_eq!(predict_iteration_time(100, 4, 3, &[1.0]).unwrap(), 75.0);
        assert!(predict_iteration_time(100, 4, 1, &[1.0]).is_err());
        assert!(predict_iteration_time(100, 4, 2, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn batch_allocation_worked_chain() {
        // T_2 and T_3 from the arithmetic prediction above
        let inc2 = batch_allocation(100, 4, 2, 37.5, &[1.0, 2.0], &[16, 9]).unwrap();
        assert_eq!(inc2, vec![21, 4]);
        let cum2 = vec![16 + 21, 9 + 4];
        assert_eq!(cum2, vec![37, 13]);
        let inc3 = batch_allocation(100, 4, 3, 56.25, &[1.0, 2.0], &cum2).unwrap();
        assert_eq!(inc3, vec![19, 6]);
        assert_eq!(vec![37 + 19, 13 + 6], vec![56, 19]);
    }

    #[test]
    fn batch_allocation_symmetry_and_clamping() {
        // equal times and equal priors: equal increments
        let inc = batch_allocation(120, 3, 2, 20.0, &[1.0; 4], &[10; 4]).unwrap();
        assert_eq!(inc, vec![10, 10, 10, 10]);
        // a worker that slowed down is clamped at zero, not negative
        let inc = batch_allocation(100, 4, 2, 10.0, &[1.0, 1.0], &[50, 0]).unwrap();
        assert_eq!(inc[0], 0);
        assert_eq!(inc.iter().sum::<u64>(), 25);
        // overshoot beyond the pool: last worker clamped, cut from fastest
        let inc = batch_allocation(100, 4, 2, 1000.0, &[1.0, 2.0, 4.0], &[0, 0, 0]).unwrap();
        assert_eq!(inc.iter().sum::<u64>(), 25);
        assert_eq!(inc[2], 0);
    }

    #[test]
    fn iteration_budget_examples() {
        let b = remaining_iterations(100, 10, 1000).unwrap();
        assert_eq!((b.remaining, b.total), (94, 104));
        let b = remaining_iterations(100, 4, 1000).unwrap();
        assert_eq!((b.remaining, b.total), (97, 101));
        let b = remaining_iterations(10, 3, 555).unwrap();
        assert_eq!((b.remaining, b.total), (8, 11));
        assert!(remaining_iterations(10, 10, 5).is_err());
        assert!(remaining_iterations(10, 0, 5).is_err());
    }

    #[test]
    fn iteration_budget_matches_floor_formula_up_to_200() {
        for k in 2..=200u64 {
            for a in 1..k {
                let b = remaining_iterations(k, a, 1).unwrap();
                let expected = (k as f64 - (a as f64 + 1.0) / 2.0).floor() as u64;
                assert_eq!(b.remaining, expected, "K={k} A={a}");
                assert_eq!(b.total, a + expected);
                if a >= 3 {
                    assert!(b.total > k);
                }
            }
        }
    }

    #[test]
    fn udpa_examples() {
        assert_eq!(udpa_allocation(100, 4).unwrap(), vec![25, 25, 25, 25]);
        assert_eq!(udpa_allocation(10, 3).unwrap(), vec![3, 3, 4]);
        assert_eq!(udpa_allocation(42, 1).unwrap(), vec![42]);
    }
}
