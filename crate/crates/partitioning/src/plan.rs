//! The concrete allocation record: per-batch counts and sample index ranges.

use std::io::Write;

/// Per-batch, per-worker sample allocations with concrete index ranges into
/// the (seeded, pre-shuffled) sample order. Ranges are half-open and
/// pairwise disjoint; together they cover exactly the allocated indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub total_samples: u64,
    pub workers: usize,
    pub batches: usize,
    /// per_batch[a][j] = samples newly allocated to worker j in batch a.
    pub per_batch: Vec<Vec<u64>>,
    /// ranges[a][j] = half-open index range backing per_batch[a][j].
    pub ranges: Vec<Vec<(u64, u64)>>,
}

impl PartitionPlan {
    pub fn empty(total_samples: u64, workers: usize, batches: usize) -> Self {
        Self {
            total_samples,
            workers,
            batches,
            per_batch: Vec::new(),
            ranges: Vec::new(),
        }
    }

    /// Cumulative allocation per worker over the batches planned so far.
    pub fn cumulative(&self) -> Vec<u64> {
        let mut cum = vec![0u64; self.workers];
        for batch in &self.per_batch {
            for (j, n) in batch.iter().enumerate() {
                cum[j] += n;
            }
        }
        cum
    }

    /// All index ranges owned by one worker, in allocation order.
    pub fn worker_ranges(&self, worker: usize) -> Vec<(u64, u64)> {
        self.ranges
            .iter()
            .map(|batch| batch[worker])
            .filter(|(s, e)| e > s)
            .collect()
    }

    /// One CSV row per (batch, worker): batch,worker,n_j_a,range_start,range_end.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "batch,worker,n_j_a,range_start,range_end")?;
        for (a, (batch, ranges)) in self.per_batch.iter().zip(&self.ranges).enumerate() {
            for (j, (n, (start, end))) in batch.iter().zip(ranges).enumerate() {
                writeln!(out, "{},{},{},{},{}", a + 1, j, n, start, end)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_and_cumulative() {
        let plan = PartitionPlan {
            total_samples: 10,
            workers: 2,
            batches: 2,
            per_batch: vec![vec![3, 2], vec![4, 1]],
            ranges: vec![vec![(0, 3), (3, 5)], vec![(5, 9), (9, 10)]],
        };
        assert_eq!(plan.cumulative(), vec![7, 3]);
        assert_eq!(plan.worker_ranges(0), vec![(0, 3), (5, 9)]);
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "batch,worker,n_j_a,range_start,range_end\n\
             1,0,3,0,3\n1,1,2,3,5\n2,0,4,5,9\n2,1,1,9,10\n"
        );
    }
}
