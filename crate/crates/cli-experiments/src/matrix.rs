//! The strategy-comparison matrix: every requested (strategy x partition)
//! combination runs with the shared seed; each combination emits a
//! JSON-lines metrics file and together they feed one plot-ready summary CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use cluster_runtime::{run_training, strategy_name, RunReport, Sample};
use nn_core::NetworkF64;

use crate::error::CliError;
use crate::expconfig::ExperimentConfig;

#[derive(Debug)]
pub struct MatrixOutcome {
    pub metric_files: Vec<PathBuf>,
    pub summary: PathBuf,
    pub completed: usize,
    pub failed: usize,
    pub reports: Vec<RunReport>,
}

pub const SUMMARY_HEADER: &str =
    "epoch,strategy,partition,makespan,sync_wait,comm_units,balance,accuracy,auc";

/// Runs the configured combinations; an aborted run is recorded as a failed
/// summary row and the remaining combinations continue.
pub fn run_experiment_matrix(
    config: &ExperimentConfig,
    samples: &[Sample],
    network: &NetworkF64,
    eval_set: Option<&[Sample]>,
) -> Result<MatrixOutcome, CliError> {
    std::fs::create_dir_all(&config.out)?;
    let summary_path = config.out.join("summary.csv");
    let mut summary = BufWriter::new(File::create(&summary_path)?);
    writeln!(summary, "{SUMMARY_HEADER}")?;

    let mut outcome = MatrixOutcome {
        metric_files: Vec::new(),
        summary: summary_path.clone(),
        completed: 0,
        failed: 0,
        reports: Vec::new(),
    };
    for &strategy in &config.strategies {
        for &partition in &config.partitions {
            let cluster = config.cluster_config(strategy, partition);
            let tag = format!("{}_{partition}", strategy_name(strategy));
            match run_training(&cluster, samples, network, eval_set) {
                Ok(report) => {
                    let metrics_path = config.out.join(format!("metrics_{tag}.jsonl"));
                    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
                    report.write_metrics_jsonl(&mut metrics)?;
                    metrics.flush()?;
                    let updates_path = config.out.join(format!("updates_{tag}.jsonl"));
                    let mut updates = BufWriter::new(File::create(&updates_path)?);
                    for record in &report.update_records {
                        weight_sync::write_update_record(&mut updates, record)
                            .map_err(cluster_runtime::RuntimeError::Sync)?;
                    }
                    updates.flush()?;
                    for e in &report.epochs {
                        writeln!(
                            summary,
                            "{},{},{},{},{},{},{},{},{}",
                            e.epoch,
                            strategy_name(strategy),
                            partition,
                            e.makespan,
                            e.sync_wait,
                            e.comm_units,
                            e.balance,
                            e.accuracy,
                            e.auc
                        )?;
                    }
                    outcome.metric_files.push(metrics_path);
                    outcome.metric_files.push(updates_path);
                    outcome.completed += 1;
                    outcome.reports.push(report);
                }
                Err(err) => {
                    writeln!(
                        summary,
                        "failed,{},{partition},,,,,,{}",
                        strategy_name(strategy),
                        err.to_string().replace(',', ";")
                    )?;
                    outcome.failed += 1;
                }
            }
        }
    }
    summary.flush()?;
    Ok(outcome)
}
