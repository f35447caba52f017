//! The incremental planner: one plan_step call per batch, fed by measured
//! iteration durations from the previous batch.

use crate::error::PartitionError;
use crate::plan::PartitionPlan;
use crate::{batch_allocation, initial_allocation};

/// Measured execution profile of one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerProfile {
    pub worker: usize,
    /// Advertised frequency used for the first batch.
    pub frequency: f64,
    /// Total measured iteration time so far.
    pub total_time: f64,
    /// Total sample visits those measurements cover (a sample trained in
    /// three iterations counts three times).
    pub total_visits: u64,
    /// Samples currently allocated to the worker.
    pub cumulative_samples: u64,
}

impl WorkerProfile {
    /// Mean per-sample time from cumulative totals; None until measured.
    pub fn mean_sample_time(&self) -> Option<f64> {
        if self.total_visits == 0 || !(self.total_time > 0.0) {
            None
        } else {
            Some(self.total_time / self.total_visits as f64)
        }
    }
}

/// Drives incremental partitioning: batch 1 splits by advertised frequency;
/// every later batch splits by measured per-sample times so that all workers
/// would finish an iteration at the same moment (targets floor(T*/t_j) with
/// T* the time-balanced fixed point of the current pool), with the final
/// batch absorbing the N mod A tail on the last worker.
#[derive(Debug, Clone)]
pub struct IdpaPlanner {
    samples: u64,
    batches: usize,
    profiles: Vec<WorkerProfile>,
    plan: PartitionPlan,
    next_batch: usize,
    cursor: u64,
}

impl IdpaPlanner {
    pub fn new(
        samples: u64,
        batches: usize,
        frequencies: &[f64],
    ) -> Result<Self, PartitionError> {
        let m = frequencies.len();
        if m == 0 {
            return Err(PartitionError::Empty("worker"));
        }
        if batches == 0 {
            return Err(PartitionError::Empty("batch"));
        }
        if (batches as u64) > samples {
            return Err(PartitionError::TooManyBatches {
                batches: batches as u64,
                samples,
            });
        }
        for (j, mu) in frequencies.iter().enumerate() {
            if !(mu.is_finite() && *mu > 0.0) {
                return Err(PartitionError::BadFrequency(j));
            }
        }
        Ok(Self {
            samples,
            batches,
            profiles: frequencies
                .iter()
                .enumerate()
                .map(|(worker, &frequency)| WorkerProfile {
                    worker,
                    frequency,
                    total_time: 0.0,
                    total_visits: 0,
                    cumulative_samples: 0,
                })
                .collect(),
            plan: PartitionPlan::empty(samples, m, batches),
            next_batch: 1,
            cursor: 0,
        })
    }

    pub fn workers(&self) -> usize {
        self.profiles.len()
    }

    pub fn next_batch(&self) -> usize {
        self.next_batch
    }

    pub fn is_complete(&self) -> bool {
        self.next_batch > self.batches
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn profiles(&self) -> &[WorkerProfile] {
        &self.profiles
    }

    /// Records measured durations of the previous iteration (training over
    /// each worker's current cumulative allocation).
    pub fn record_measurements(&mut self, durations: &[f64]) -> Result<(), PartitionError> {
        if durations.len() != self.profiles.len() {
            return Err(PartitionError::WrongWorkerCount {
                expected: self.profiles.len(),
                got: durations.len(),
            });
        }
        for (p, &t) in self.profiles.iter_mut().zip(durations) {
            if !(t.is_finite() && t >= 0.0) {
                return Err(PartitionError::UnmeasuredWorker(p.worker));
            }
            p.total_time += t;
            p.total_visits += p.cumulative_samples;
        }
        Ok(())
    }

    /// Cumulative-total estimate of each worker's per-sample time. Workers
    /// that have not trained anything yet (zero allocation so far) fall back
    /// to a frequency-scaled estimate derived from the measured workers.
    pub fn mean_times(&self) -> Result<Vec<f64>, PartitionError> {
        let measured: Vec<(f64, f64)> = self
            .profiles
            .iter()
            .filter_map(|p| p.mean_sample_time().map(|t| (t, p.frequency)))
            .collect();
        if measured.is_empty() {
            return Err(PartitionError::UnmeasuredWorker(0));
        }
        // per-sample time scales as 1/frequency among measured workers
        let scale: f64 =
            measured.iter().map(|(t, mu)| t * mu).sum::<f64>() / measured.len() as f64;
        Ok(self
            .profiles
            .iter()
            .map(|p| p.mean_sample_time().unwrap_or(scale / p.frequency))
            .collect())
    }

    /// Plans the next batch. Batch 1 needs no measurements; each later batch
    /// requires `record_measurements` to have been called since the previous
    /// step (measurements of the previous iteration).
    pub fn plan_step(&mut self) -> Result<Vec<u64>, PartitionError> {
        if self.is_complete() {
            return Err(PartitionError::BadBatchIndex(self.next_batch));
        }
        let a = self.next_batch;
        let m = self.profiles.len();
        let pool = self.samples / self.batches as u64;
        let mut increments = if a == 1 {
            let freqs: Vec<f64> = self.profiles.iter().map(|p| p.frequency).collect();
            initial_allocation(self.samples, self.batches as u64, &freqs)?
        } else {
            let times = self.mean_times()?;
            // time-balanced target: every worker finishes the pool of
            // floor(N/A)*a samples at the same moment
            let rate_sum: f64 = times.iter().map(|t| 1.0 / t).sum();
            let target_time = (pool * a as u64) as f64 / rate_sum;
            let prior: Vec<u64> = self.profiles.iter().map(|p| p.cumulative_samples).collect();
            batch_allocation(
                self.samples,
                self.batches as u64,
                a,
                target_time,
                &times,
                &prior,
            )?
        };
        // the final batch also hands the division remainder to the last worker
        if a == self.batches {
            let tail = self.samples % self.batches as u64;
            increments[m - 1] += tail;
        }
        let mut ranges = Vec::with_capacity(m);
        for (p, &inc) in self.profiles.iter_mut().zip(&increments) {
            ranges.push((self.cursor, self.cursor + inc));
            self.cursor += inc;
            p.cumulative_samples += inc;
        }
        self.plan.per_batch.push(increments.clone());
        self.plan.ranges.push(ranges);
        self.next_batch += 1;
        Ok(increments)
    }
}

/// A UDPA plan: everything allocated in one uniform batch.
pub fn udpa_plan(samples: u64, workers: usize) -> Result<PartitionPlan, PartitionError> {
    let alloc = crate::udpa_allocation(samples, workers)?;
    let mut ranges = Vec::with_capacity(workers);
    let mut cursor = 0u64;
    for &n in &alloc {
        ranges.push((cursor, cursor + n));
        cursor += n;
    }
    Ok(PartitionPlan {
        total_samples: samples,
        workers,
        batches: 1,
        per_batch: vec![alloc],
        ranges: vec![ranges],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_batch_reduces_to_initial_allocation() {
        let mut p = IdpaPlanner::new(100, 1, &[2.0, 1.0]).unwrap();
        let inc = p.plan_step().unwrap();
        // pool = 100, proportional split, remainder to worker 2
        assert_eq!(inc, vec![66, 34]);
        assert!(p.is_complete());
        assert_eq!(p.plan().cumulative().iter().sum::<u64>(), 100);
    }

    #[test]
    fn worked_four_batch_run_conserves_pool() {
        // exact simulated per-sample times (1, 2): measurements are
        // cumulative_samples * t_j after each iteration
        let mut p = IdpaPlanner::new(100, 4, &[2.0, 1.0]).unwrap();
        let times = [1.0, 2.0];
        for _ in 0..4 {
            if p.next_batch() > 1 {
                let m: Vec<f64> = p
                    .profiles()
                    .iter()
                    .zip(times)
                    .map(|(prof, t)| prof.cumulative_samples as f64 * t)
                    .collect();
                p.record_measurements(&m).unwrap();
            }
            let inc = p.plan_step().unwrap();
            assert_eq!(inc.iter().sum::<u64>(), 25);
        }
        assert_eq!(p.plan().cumulative().iter().sum::<u64>(), 100);
        // balanced target: allocations track speeds (1, 0.5) -> (2/3, 1/3)
        let cum = p.plan().cumulative();
        assert!((cum[0] as f64 - 66.6).abs() < 8.0, "cum {cum:?}");
    }

    #[test]
    fn homogeneous_times_converge_to_equal_split() {
        let mut p = IdpaPlanner::new(120, 3, &[1.0; 4]).unwrap();
        for _ in 0..3 {
            if p.next_batch() > 1 {
                let m: Vec<f64> = p
                    .profiles()
                    .iter()
                    .map(|prof| prof.cumulative_samples as f64)
                    .collect();
                p.record_measurements(&m).unwrap();
            }
            p.plan_step().unwrap();
        }
        let cum = p.plan().cumulative();
        let ideal = 120 / 4;
        for c in cum {
            assert!((c as i64 - ideal as i64).abs() <= 1, "allocation {c}");
        }
    }

    #[test]
    fn missing_measurements_rejected() {
        let mut p = IdpaPlanner::new(100, 2, &[1.0, 1.0]).unwrap();
        p.plan_step().unwrap();
        assert!(matches!(
            p.plan_step(),
            Err(PartitionError::UnmeasuredWorker(_))
        ));
    }

    #[test]
    fn tail_goes_to_last_worker_in_final_batch() {
        let mut p = IdpaPlanner::new(103, 2, &[1.0, 1.0]).unwrap();
        p.plan_step().unwrap();
        p.record_measurements(&[51.0, 51.0]).unwrap();
        let inc = p.plan_step().unwrap();
        // final batch: pool 51 plus tail 1
        assert_eq!(inc.iter().sum::<u64>(), 52);
        assert_eq!(p.plan().cumulative().iter().sum::<u64>(), 103);
    }

    #[test]
    fn udpa_plan_covers_everything_in_one_batch() {
        let plan = udpa_plan(10, 3).unwrap();
        assert_eq!(plan.per_batch, vec![vec![3, 3, 4]]);
        assert_eq!(plan.ranges, vec![vec![(0, 3), (3, 6), (6, 10)]]);
    }
}
