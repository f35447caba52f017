//! The parameter-server update engine, transport-free.
//!
//! Exactly one submission mutates the global state at a time (the caller
//! serializes `handle_submission`); reads of the latest version always see a
//! complete set.

use nn_core::ParameterSetF64;

use crate::error::SyncError;
use crate::store::VersionStore;
use crate::{agwu_update, attenuation_factor, sgwu_update, UpdateMessage, UpdateRecord, VersionedWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sgwu,
    Agwu,
}

/// What the server decided about one submission.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerResponse {
    /// SGWU: buffered until all workers of the epoch have arrived.
    Buffered,
    /// A new global version was created (broadcast under SGWU, direct reply
    /// under AGWU).
    Merged(VersionedWeights),
    /// The submission's base version fell out of the store; the worker must
    /// resynchronize on the latest version. Nothing was merged.
    Resync(VersionedWeights),
}

#[derive(Debug, Clone)]
pub struct ParameterServer {
    strategy: Strategy,
    workers: usize,
    global: VersionedWeights,
    store: VersionStore,
    buffer: Vec<Option<(ParameterSetF64, f64)>>,
    records: Vec<UpdateRecord>,
    transfers: u64,
}

impl ParameterServer {
    /// Creates the server around the seeded initial global set W^(0).
    /// The default store capacity is 4 versions per worker.
    pub fn new(
        strategy: Strategy,
        workers: usize,
        initial: ParameterSetF64,
        store_capacity: Option<usize>,
    ) -> Self {
        let capacity = store_capacity.unwrap_or(4 * workers.max(1));
        let mut store = VersionStore::new(capacity);
        store.push(0, initial.clone());
        Self {
            strategy,
            workers,
            global: VersionedWeights {
                version: 0,
                params: initial,
            },
            store,
            buffer: vec![None; workers],
            records: Vec::new(),
            transfers: 0,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn latest(&self) -> &VersionedWeights {
        &self.global
    }

    /// Per-update metrics records accumulated so far.
    pub fn records(&self) -> &[UpdateRecord] {
        &self.records
    }

    /// Weight-set transfers seen so far (each handled submission counts the
    /// uplink; the paired downlink is counted when the caller shares the
    /// response).
    pub fn transfers(&self) -> u64 {
        self.transfers
    }

    pub fn count_share(&mut self, n: u64) {
        self.transfers += n;
    }

    /// Applies one submission under the configured strategy. `wall_time` is
    /// the cluster clock stamped into the metrics records.
    pub fn handle_submission(
        &mut self,
        msg: UpdateMessage,
        wall_time: f64,
    ) -> Result<ServerResponse, SyncError> {
        if msg.worker >= self.workers {
            return Err(SyncError::UnknownWorker(msg.worker));
        }
        self.transfers += 1;
        match self.strategy {
            Strategy::Sgwu => self.handle_sgwu(msg, wall_time),
            Strategy::Agwu => self.handle_agwu(msg, wall_time),
        }
    }

    fn handle_sgwu(
        &mut self,
        msg: UpdateMessage,
        wall_time: f64,
    ) -> Result<ServerResponse, SyncError> {
        self.buffer[msg.worker] = Some((msg.params, msg.accuracy));
        if self.buffer.iter().any(Option::is_none) {
            return Ok(ServerResponse::Buffered);
        }
        let locals: Vec<(ParameterSetF64, f64)> =
            self.buffer.iter_mut().map(|slot| slot.take().unwrap()).collect();
        let merged = sgwu_update(&locals)?;
        let version = self.global.version + 1;
        let total_q: f64 = locals.iter().map(|(_, q)| q).sum();
        for (worker, (params, q)) in locals.iter().enumerate() {
            let weight = if total_q > 0.0 {
                q / total_q
            } else {
                1.0 / self.workers as f64
            };
            self.records.push(UpdateRecord {
                version,
                worker,
                base_version: self.global.version,
                gamma: weight,
                q: *q,
                delta_norm: params.delta_norm(&self.global.params)?,
                wall_time,
            });
        }
        self.global = VersionedWeights {
            version,
            params: merged,
        };
        self.store.push(version, self.global.params.clone());
        Ok(ServerResponse::Merged(self.global.clone()))
    }

    fn handle_agwu(
        &mut self,
        msg: UpdateMessage,
        wall_time: f64,
    ) -> Result<ServerResponse, SyncError> {
        let base = match self.store.get(msg.base_version) {
            Some(b) => b.clone(),
            None => return Ok(ServerResponse::Resync(self.global.clone())),
        };
        let latest = self.global.version;
        let peers = self.store.peer_bases(msg.worker);
        // With no peer submissions the incremental form degenerates to full
        // adoption of the local set (matching the synchronous merge with
        // m = 1), so a lone worker reproduces plain sequential SGD bit for
        // bit. Assigned directly: g + 1*(l - g) would round.
        let (next, gamma) = if peers.is_empty() {
            (msg.params.clone(), 1.0)
        } else {
            let gamma = attenuation_factor(msg.base_version, latest, &peers);
            (
                agwu_update(&self.global.params, &base, &msg.params, gamma, msg.accuracy)?,
                gamma,
            )
        };
        let version = latest + 1;
        self.records.push(UpdateRecord {
            version,
            worker: msg.worker,
            base_version: msg.base_version,
            gamma,
            q: msg.accuracy,
            delta_norm: msg.params.delta_norm(&base)?,
            wall_time,
        });
        self.global = VersionedWeights {
            version,
            params: next,
        };
        self.store.push(version, self.global.params.clone());
        self.store.record_base(msg.worker, msg.base_version);
        Ok(ServerResponse::Merged(self.global.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nn_core::{LayerLayout, ParameterSet};

    fn p(v: f64) -> ParameterSetF64 {
        ParameterSet::new(
            vec![v],
            vec![LayerLayout::Dense {
                fan_out: 1,
                fan_in: 0,
            }],
        )
        .unwrap()
    }

    fn msg(worker: usize, base: u64, value: f64, q: f64) -> UpdateMessage {
        UpdateMessage {
            worker,
            base_version: base,
            params: p(value),
            accuracy: q,
            local_iteration: 1,
        }
    }

    #[test]
    fn sgwu_barrier_buffers_until_all_arrive() {
        let mut server = ParameterServer::new(Strategy::Sgwu, 2, p(0.0), None);
        let r = server.handle_submission(msg(0, 0, 1.0, 0.8), 1.0).unwrap();
        assert_eq!(r, ServerResponse::Buffered);
        assert_eq!(server.latest().version, 0);
        let r = server.handle_submission(msg(1, 0, 3.0, 0.2), 2.0).unwrap();
        match r {
            ServerResponse::Merged(v) => {
                assert_eq!(v.version, 1);
                assert!((v.params.values()[0] - 1.4).abs() < 1e-15);
            }
            other => panic!("expected merge, got {other:?}"),
        }
    }

    #[test]
    fn agwu_every_submission_advances_one_version() {
        let mut server = ParameterServer::new(Strategy::Agwu, 2, p(2.0), None);
        let r = server.handle_submission(msg(0, 0, 3.0, 0.8), 1.0).unwrap();
        match r {
            ServerResponse::Merged(v) => {
                assert_eq!(v.version, 1);
                // first-ever update with no peers: full adoption
                assert_eq!(v.params.values(), &[3.0]);
            }
            other => panic!("expected merge, got {other:?}"),
        }
        let r = server.handle_submission(msg(1, 0, 4.0, 0.5), 2.0).unwrap();
        match r {
            ServerResponse::Merged(v) => {
                assert_eq!(v.version, 2);
                // gamma = e^(0/1)/e^(0/1) = 1 against peer base 0
                let expected = 3.0 + 1.0 * 0.5 * (4.0 - 2.0);
                assert!((v.params.values()[0] - expected).abs() < 1e-12);
            }
            other => panic!("expected merge, got {other:?}"),
        }
        assert_eq!(server.records().len(), 2);
    }

    #[test]
    fn agwu_stale_base_triggers_resync_without_new_version() {
        let mut server = ParameterServer::new(Strategy::Agwu, 2, p(0.0), Some(2));
        for i in 0..4 {
            server
                .handle_submission(msg(0, i, i as f64 + 1.0, 0.5), i as f64)
                .unwrap();
        }
        let latest = server.latest().version;
        // base 0 fell out of the 2-slot ring long ago
        let r = server.handle_submission(msg(1, 0, 9.0, 0.5), 9.0).unwrap();
        match r {
            ServerResponse::Resync(v) => assert_eq!(v.version, latest),
            other => panic!("expected resync, got {other:?}"),
        }
        assert_eq!(server.latest().version, latest);
    }

    #[test]
    fn version_sequence_is_gap_free() {
        let mut server = ParameterServer::new(Strategy::Agwu, 3, p(0.0), None);
        let mut expected = 0;
        for round in 0..5u64 {
            for w in 0..3usize {
                let base = server.latest().version;
                let r = server
                    .handle_submission(msg(w, base, round as f64, 0.5), round as f64)
                    .unwrap();
                expected += 1;
                match r {
                    ServerResponse::Merged(v) => assert_eq!(v.version, expected),
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
    }

    #[test]
    fn unknown_worker_rejected() {
        let mut server = ParameterServer::new(Strategy::Sgwu, 2, p(0.0), None);
        assert!(matches!(
            server.handle_submission(msg(5, 0, 1.0, 0.5), 0.0),
            Err(SyncError::UnknownWorker(5))
        ));
    }
}
