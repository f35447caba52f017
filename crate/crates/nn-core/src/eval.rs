//! Classification metrics: argmax accuracy and macro one-vs-rest AUC.

use crate::error::NnError;
use crate::network::Network;
use crate::params::{apply, ParameterSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub auc: f64,
}

/// Index of the first maximal element.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in scores.iter().enumerate() {
        if *v > scores[best] {
            best = i;
        }
    }
    best
}

/// Rank AUC for one class by brute-force pair counting; tied pairs score 0.5.
fn auc_one_class(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut wins = 0.0f64;
    for (sp, &p) in scores.iter().zip(positives) {
        if !p {
            continue;
        }
        for (sn, &q) in scores.iter().zip(positives) {
            if q {
                continue;
            }
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    Some(wins / (n_pos * n_neg) as f64)
}

/// Macro-averaged one-vs-rest AUC over a score table (one score row per
/// sample). Classes without both a positive and a negative sample are
/// skipped; with no scorable class the AUC is 0.5.
pub fn macro_ovr_auc(score_rows: &[Vec<f64>], labels: &[usize], classes: usize) -> f64 {
    let mut acc = 0.0;
    let mut counted = 0usize;
    for class in 0..classes {
        let scores: Vec<f64> = score_rows.iter().map(|r| r[class]).collect();
        let positives: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        if let Some(a) = auc_one_class(&scores, &positives) {
            acc += a;
            counted += 1;
        }
    }
    if counted == 0 {
        0.5
    } else {
        acc / counted as f64
    }
}

/// Runs the network over a dataset and reports accuracy and macro AUC.
/// The class count is the network's output width.
pub fn evaluate<T: Scalar>(
    network: &Network<T>,
    dataset: &[(Tensor3<T>, usize)],
) -> Result<EvalMetrics, NnError> {
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut score_rows: Vec<Vec<f64>> = Vec::with_capacity(dataset.len());
    let mut labels: Vec<usize> = Vec::with_capacity(dataset.len());
    let mut correct = 0usize;
    let mut classes = 0usize;
    for (x, label) in dataset {
        let trace = network.forward(x)?;
        let scores: Vec<f64> = trace.output_vec().iter().map(|v| v.as_f64()).collect();
        classes = scores.len();
        if *label >= classes {
            return Err(NnError::LabelOutOfRange {
                label: *label,
                classes,
            });
        }
        if argmax(&scores) == *label {
            correct += 1;
        }
        score_rows.push(scores);
        labels.push(*label);
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / dataset.len() as f64,
        auc: macro_ovr_auc(&score_rows, &labels, classes),
    })
}

/// Evaluates after swapping in the given parameters on a copy of the network.
pub fn evaluate_with_params<T: Scalar>(
    network: &Network<T>,
    params: &ParameterSet<T>,
    dataset: &[(Tensor3<T>, usize)],
) -> Result<EvalMetrics, NnError> {
    let mut net = network.clone();
    apply(params, &mut net)?;
    evaluate(&net, dataset)
}
