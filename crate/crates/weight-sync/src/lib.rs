//! Global weight update strategies: synchronous accuracy-weighted averaging
//! (SGWU) and asynchronous staleness-attenuated incremental updates (AGWU),
//! plus synchronization-wait and communication cost accounting.

pub mod error;
mod server;
mod store;

use serde::Serialize;
use std::io::Write;

pub use error::SyncError;
pub use server::{ParameterServer, ServerResponse, Strategy};
pub use store::VersionStore;

use nn_core::ParameterSetF64;

/// A global weight set with its monotonically increasing version number.
/// Version 0 is the seeded initial set.
#[derive(Debug, Clone, PartialEq)]
pub struct VersionedWeights {
    pub version: u64,
    pub params: ParameterSetF64,
}

/// One worker's end-of-iteration submission.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMessage {
    pub worker: usize,
    /// Global version this local set was trained from.
    pub base_version: u64,
    pub params: ParameterSetF64,
    /// Validation accuracy of the local model, in [0, 1].
    pub accuracy: f64,
    /// The worker's own iteration counter.
    pub local_iteration: u64,
}

/// Synchronous merge: element-wise convex combination of the local sets
/// weighted by their accuracies (uniform fallback when all accuracies are
/// zero).
pub fn sgwu_update(locals: &[(ParameterSetF64, f64)]) -> Result<ParameterSetF64, SyncError> {
    if locals.is_empty() {
        return Err(SyncError::NoLocals);
    }
    let layout = locals[0].0.layout().to_vec();
    let len = locals[0].0.len();
    for (j, (params, _)) in locals.iter().enumerate() {
        if params.layout() != layout.as_slice() || params.len() != len {
            return Err(SyncError::LayoutMismatch(j));
        }
    }
    let total_q: f64 = locals.iter().map(|(_, q)| q).sum();
    let uniform = 1.0 / locals.len() as f64;
    let mut merged = vec![0.0f64; len];
    for (params, q) in locals {
        let weight = if total_q > 0.0 { q / total_q } else { uniform };
        for (acc, v) in merged.iter_mut().zip(params.values()) {
            *acc += v * weight;
        }
    }
    Ok(ParameterSetF64::new(merged, layout).expect("layout checked above"))
}

/// Accumulated straggler wait under barrier merging: for every iteration row,
/// each worker waits for the slowest worker of that row.
pub fn sync_wait_time(durations: &[Vec<f64>]) -> Result<f64, SyncError> {
    let m = durations.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for (row_idx, row) in durations.iter().enumerate() {
        if row.len() != m {
            return Err(SyncError::RaggedMatrix(row_idx));
        }
        let mut max = 0.0f64;
        for (worker, &t) in row.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(SyncError::BadDuration {
                    row: row_idx,
                    worker,
                });
            }
            max = max.max(t);
        }
        for &t in row {
            total += max - t;
        }
    }
    Ok(total)
}

/// Time attenuation factor of a submission based on global version `base`,
/// when the latest version is `latest` and the other workers' last-known
/// base versions are `peer_bases`: e^(base/latest) normalized over the
/// peers. Degenerate cases (first-ever update, no peers) weigh 1.
pub fn attenuation_factor(base: u64, latest: u64, peer_bases: &[u64]) -> f64 {
    if latest == 0 || peer_bases.is_empty() {
        return 1.0;
    }
    let denom: f64 = peer_bases
        .iter()
        .map(|&k| (k as f64 / latest as f64).exp())
        .sum();
    (base as f64 / latest as f64).exp() / denom
}

/// Incremental asynchronous update: global <- global + gamma * Q * (local -
/// base). Exposed as a pure function; [`ParameterServer`] drives it with the
/// version store.
pub fn agwu_update(
    global: &ParameterSetF64,
    base: &ParameterSetF64,
    local: &ParameterSetF64,
    gamma: f64,
    accuracy: f64,
) -> Result<ParameterSetF64, SyncError> {
    if base.layout() != global.layout() || local.layout() != global.layout() {
        return Err(SyncError::LayoutMismatch(0));
    }
    let scale = gamma * accuracy;
    let values = global
        .values()
        .iter()
        .zip(local.values().iter().zip(base.values()))
        .map(|(g, (l, b))| g + scale * (l - b))
        .collect();
    Ok(ParameterSetF64::new(values, global.layout().to_vec()).expect("layout checked above"))
}

/// Total weight-set transfers of a complete run: two per worker-iteration
/// (submit and share), scaled by the unit cost.
pub fn comm_cost(workers: u64, iterations: u64, unit_cost: u64) -> u64 {
    2 * unit_cost * workers * iterations
}

/// Validation accuracy of a parameter set on the shared validation slice.
pub fn evaluate_local_accuracy(
    network: &nn_core::NetworkF64,
    params: &ParameterSetF64,
    validation: &[(nn_core::Tensor3F64, usize)],
) -> Result<f64, SyncError> {
    if validation.is_empty() {
        return Err(SyncError::EmptyValidation);
    }
    Ok(nn_core::evaluate_with_params(network, params, validation)?.accuracy)
}

/// One line of the per-update metrics stream.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct UpdateRecord {
    pub version: u64,
    pub worker: usize,
    pub base_version: u64,
    pub gamma: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub delta_norm: f64,
    pub wall_time: f64,
}

/// Appends one JSON-lines record.
pub fn write_update_record<W: Write>(mut out: W, record: &UpdateRecord) -> Result<(), SyncError> {
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(out, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nn_core::{LayerLayout, ParameterSet};

    fn scalar_params(v: f64) -> ParameterSetF64 {
        ParameterSet::new(
            vec![v],
            vec![LayerLayout::Dense {
                fan_out: 1,
                fan_in: 0,
            }],
        )
        .unwrap()
    }

    fn params(values: Vec<f64>) -> ParameterSetF64 {
        let n = values.len();
        ParameterSet::new(
            values,
            vec![LayerLayout::Dense {
                fan_out: n,
                fan_in: 0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn sgwu_examples() {
        // scalar locals W = (1, 3) with Q = (0.8, 0.2)
        let merged = sgwu_update(&[(scalar_params(1.0), 0.8), (scalar_params(3.0), 0.2)]).unwrap();
        assert!((merged.values()[0] - 1.4).abs() < 1e-15);
        // identical locals: identity
        let merged = sgwu_update(&[
            (params(vec![2.0, -1.0]), 0.3),
            (params(vec![2.0, -1.0]), 0.9),
        ])
        .unwrap();
        assert_eq!(merged.values(), &[2.0, -1.0]);
        // single worker: passthrough regardless of accuracy
        let merged = sgwu_update(&[(params(vec![5.0, 7.0]), 0.123)]).unwrap();
        assert_eq!(merged.values(), &[5.0, 7.0]);
    }

    #[test]
    fn sgwu_zero_accuracies_fall_back_to_uniform() {
        let merged = sgwu_update(&[(scalar_params(1.0), 0.0), (scalar_params(3.0), 0.0)]).unwrap();
        assert_eq!(merged.values(), &[2.0]);
    }

    #[test]
    fn sgwu_convexity_and_scale_invariance() {
        let locals = vec![
            (params(vec![1.0, -2.0, 0.5]), 0.25),
            (params(vec![3.0, 0.0, 0.75]), 0.5),
            (params(vec![2.0, -1.0, 0.25]), 0.125),
        ];
        let merged = sgwu_update(&locals).unwrap();
        for i in 0..3 {
            let lo = locals
                .iter()
                .map(|(p, _)| p.values()[i])
                .fold(f64::MAX, f64::min);
            let hi = locals
                .iter()
                .map(|(p, _)| p.values()[i])
                .fold(f64::MIN, f64::max);
            assert!(merged.values()[i] >= lo && merged.values()[i] <= hi);
        }
        let scaled: Vec<_> = locals.iter().map(|(p, q)| (p.clone(), q * 7.5)).collect();
        assert_eq!(sgwu_update(&scaled).unwrap().values(), merged.values());
    }

    #[test]
    fn sync_wait_examples() {
        assert_eq!(sync_wait_time(&[vec![3.0, 5.0]]).unwrap(), 2.0);
        assert_eq!(sync_wait_time(&[vec![4.0, 4.0, 4.0]]).unwrap(), 0.0);
        assert_eq!(
            sync_wait_time(&[vec![1.0, 2.0, 3.0], vec![3.0, 3.0, 3.0]]).unwrap(),
            3.0
        );
        assert!(matches!(
            sync_wait_time(&[vec![1.0, 2.0], vec![1.0]]),
            Err(SyncError::RaggedMatrix(1))
        ));
        assert!(sync_wait_time(&[vec![1.0, -2.0]]).is_err());
    }

    #[test]
    fn attenuation_examples() {
        let g = attenuation_factor(2, 4, &[4]);
        assert!((g - (0.5f64.exp() / 1.0f64.exp())).abs() < 1e-15);
        assert!((g - 0.6065306597126334).abs() < 1e-12);
        // one peer with the same base: exponents cancel
        assert_eq!(attenuation_factor(3, 7, &[3]), 1.0);
        let g = attenuation_factor(1, 2, &[1, 2]);
        let expected = 0.5f64.exp() / (0.5f64.exp() + 1.0f64.exp());
        assert!((g - expected).abs() < 1e-15);
        assert!((g - 0.37754066879814546).abs() < 1e-12);
    }

    #[test]
    fn attenuation_degenerate_cases_and_monotonicity() {
        assert_eq!(attenuation_factor(0, 0, &[]), 1.0);
        assert_eq!(attenuation_factor(5, 9, &[]), 1.0);
        // fresher bases weigh strictly more
        let peers = [2, 5, 7];
        let mut last = 0.0;
        for k in 1..=9 {
            let g = attenuation_factor(k, 9, &peers);
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn agwu_scalar_example() {
        let next = agwu_update(
            &scalar_params(2.0),
            &scalar_params(2.5),
            &scalar_params(3.0),
            0.5,
            0.8,
        )
        .unwrap();
        assert!((next.values()[0] - 2.2).abs() < 1e-15);
        // zero increment and zero accuracy leave the global untouched
        let same = agwu_update(
            &scalar_params(2.0),
            &scalar_params(2.5),
            &scalar_params(2.5),
            0.5,
            0.8,
        )
        .unwrap();
        assert_eq!(same.values(), &[2.0]);
        let same = agwu_update(
            &scalar_params(2.0),
            &scalar_params(2.5),
            &scalar_params(3.0),
            0.5,
            0.0,
        )
        .unwrap();
        assert_eq!(same.values(), &[2.0]);
    }

    #[test]
    fn comm_cost_examples() {
        assert_eq!(comm_cost(2, 3, 1), 12);
        assert_eq!(comm_cost(5, 0, 1), 0);
        assert_eq!(comm_cost(30, 100, 1), 6000);
    }

    #[test]
    fn update_record_serialization() {
        let record = UpdateRecord {
            version: 3,
            worker: 1,
            base_version: 2,
            gamma: 0.5,
            q: 0.75,
            delta_norm: 1.25,
            wall_time: 10.0,
        };
        let mut buf = Vec::new();
        write_update_record(&mut buf, &record).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"version\":3,\"worker\":1,\"base_version\":2,\"gamma\":0.5,\"Q\":0.75,\"delta_norm\":1.25,\"wall_time\":10.0}\n"
        );
    }
}
