//! Ring buffer of recent global versions plus the per-worker base table
//! needed to evaluate stale submissions.

use std::collections::{BTreeMap, VecDeque};

use nn_core::ParameterSetF64;

/// Holds the last `capacity` global versions so that an asynchronous update
/// can reference the base its worker trained from, and tracks the last base
/// version each worker submitted against.
#[derive(Debug, Clone)]
pub struct VersionStore {
    capacity: usize,
    ring: VecDeque<(u64, ParameterSetF64)>,
    last_base: BTreeMap<usize, u64>,
}

impl VersionStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            ring: VecDeque::new(),
            last_base: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, version: u64, params: ParameterSetF64) {
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back((version, params));
    }

    pub fn get(&self, version: u64) -> Option<&ParameterSetF64> {
        self.ring
            .iter()
            .find(|(v, _)| *v == version)
            .map(|(_, p)| p)
    }

    pub fn oldest_version(&self) -> Option<u64> {
        self.ring.front().map(|(v, _)| *v)
    }

    /// Remembers the base version of a worker's accepted submission.
    pub fn record_base(&mut self, worker: usize, base: u64) {
        self.last_base.insert(worker, base);
    }

    /// Last-known base versions of every worker other than `worker`;
    /// workers that never submitted are excluded.
    pub fn peer_bases(&self, worker: usize) -> Vec<u64> {
        self.last_base
            .iter()
            .filter(|(w, _)| **w != worker)
            .map(|(_, v)| *v)
            .collect()
    }
}
