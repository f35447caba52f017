//! Central-difference verification of every trainable parameter.

use cluster_runtime::Sample;
use nn_core::{NetworkF64, ParameterSetF64};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub parameters: usize,
    pub samples: usize,
    pub max_rel_error: f64,
    pub worst_param: usize,
    /// Parameters exceeding the tolerance, with their relative errors.
    pub failures: Vec<(usize, f64)>,
}

impl GradCheckOutcome {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

fn loss_for(
    network: &NetworkF64,
    params: &ParameterSetF64,
    x: &nn_core::Tensor3F64,
    target: &[f64],
) -> Result<f64, CliError> {
    let mut net = network.clone();
    nn_core::apply(params, &mut net)?;
    let trace = net.forward(x)?;
    Ok(nn_core::loss_squared_error(target, &trace.output_vec())?)
}

/// Compares the analytic gradient of every parameter against central finite
/// differences on each sample. `corrupt` injects an offset into one analytic
/// component (a test hook proving the checker localizes faults).
pub fn gradient_check(
    network: &NetworkF64,
    samples: &[Sample],
    classes: usize,
    step: f64,
    tolerance: f64,
    corrupt: Option<usize>,
) -> Result<GradCheckOutcome, CliError> {
    let base = nn_core::flatten(network);
    let mut outcome = GradCheckOutcome {
        parameters: base.len(),
        samples: samples.len(),
        max_rel_error: 0.0,
        worst_param: 0,
        failures: Vec::new(),
    };
    for (x, label) in samples {
        let target = nn_core::one_hot::<f64>(*label, classes);
        let trace = network.forward(x)?;
        let deltas = nn_core::backward_pass(network, &trace, &target)?;
        let mut grads = nn_core::param_gradients(network, &trace, &deltas)?;
        if let Some(k) = corrupt {
            grads.values_mut()[k] += 0.5;
        }
        for k in 0..base.len() {
            let analytic = grads.values()[k];
            if !analytic.is_finite() {
                outcome.failures.push((k, f64::INFINITY));
                outcome.max_rel_error = f64::INFINITY;
                outcome.worst_param = k;
                continue;
            }
            let mut up = base.clone();
            up.values_mut()[k] += step;
            let mut down = base.clone();
            down.values_mut()[k] -= step;
            let fd = (loss_for(network, &up, x, &target)?
                - loss_for(network, &down, x, &target)?)
                / (2.0 * step);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            if rel > outcome.max_rel_error {
                outcome.max_rel_error = rel;
                outcome.worst_param = k;
            }
            if rel > tolerance {
                outcome.failures.push((k, rel));
            }
        }
    }
    Ok(outcome)
}
