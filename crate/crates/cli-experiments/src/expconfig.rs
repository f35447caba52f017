//! Flat key=value configuration with CLI flag overrides.
//!
//! Every key can appear in the config file (one `key = value` per line,
//! `#` comments) and as a `--key value` flag; flags win. Unknown keys are
//! rejected by name.

use std::path::{Path, PathBuf};

use cluster_runtime::{ClusterConfig, PartitionStrategy, Strategy, TransportMode};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportChoice {
    InProcess,
    Framed,
    Tcp,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub workers: usize,
    pub strategies: Vec<Strategy>,
    pub partitions: Vec<PartitionStrategy>,
    pub batches: u64,
    pub iterations: u64,
    pub threads: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub unit_comm_cost: u64,
    pub slowdowns: Vec<f64>,
    pub preset: String,
    pub scale: f64,
    pub learning_rate: f64,
    pub transport: TransportChoice,
    pub listen: Option<String>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub csv_height: usize,
    pub csv_width: usize,
    pub label_col: Option<usize>,
    pub validation_limit: usize,
    pub samples: usize,
    pub classes: usize,
    pub timeline: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            strategies: vec![Strategy::Agwu],
            partitions: vec![PartitionStrategy::Idpa],
            batches: 4,
            iterations: 10,
            threads: 1,
            seed: 42,
            out: PathBuf::from("out"),
            unit_comm_cost: 1,
            slowdowns: Vec::new(),
            preset: "case1".to_string(),
            scale: 0.25,
            learning_rate: 0.5,
            transport: TransportChoice::InProcess,
            listen: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            csv: None,
            csv_height: 28,
            csv_width: 28,
            label_col: None,
            validation_limit: 1000,
            samples: 2000,
            classes: 10,
            timeline: None,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "workers",
    "strategy",
    "partition",
    "batches",
    "iterations",
    "threads",
    "seed",
    "out",
    "c_w",
    "slowdowns",
    "preset",
    "scale",
    "learning_rate",
    "transport",
    "listen",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "csv",
    "csv_height",
    "csv_width",
    "label_col",
    "validation_limit",
    "samples",
    "classes",
    "timeline",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: "not a number".to_string(),
    })
}

impl ExperimentConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "workers" => self.workers = parse_num(key, value)?,
            "strategy" => {
                self.strategies = match value.to_ascii_lowercase().as_str() {
                    "sgwu" => vec![Strategy::Sgwu],
                    "agwu" => vec![Strategy::Agwu],
                    "both" => vec![Strategy::Agwu, Strategy::Sgwu],
                    _ => {
                        return Err(CliError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            reason: "expected sgwu, agwu, or both".to_string(),
                        })
                    }
                }
            }
            "partition" => {
                self.partitions = match value.to_ascii_lowercase().as_str() {
                    "idpa" => vec![PartitionStrategy::Idpa],
                    "udpa" => vec![PartitionStrategy::Udpa],
                    "both" => vec![PartitionStrategy::Idpa, PartitionStrategy::Udpa],
                    _ => {
                        return Err(CliError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            reason: "expected idpa, udpa, or both".to_string(),
                        })
                    }
                }
            }
            "batches" => self.batches = parse_num(key, value)?,
            "iterations" => self.iterations = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "c_w" => self.unit_comm_cost = parse_num(key, value)?,
            "slowdowns" => {
                self.slowdowns = value
                    .split(',')
                    .map(|v| parse_num::<f64>(key, v.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "preset" => self.preset = value.to_string(),
            "scale" => self.scale = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "transport" => {
                self.transport = match value.to_ascii_lowercase().as_str() {
                    "inprocess" | "in-process" => TransportChoice::InProcess,
                    "framed" => TransportChoice::Framed,
                    "tcp" => TransportChoice::Tcp,
                    _ => {
                        return Err(CliError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            reason: "expected inprocess, framed, or tcp".to_string(),
                        })
                    }
                }
            }
            "listen" => self.listen = Some(value.to_string()),
            "train_images" => self.train_images = Some(PathBuf::from(value)),
            "train_labels" => self.train_labels = Some(PathBuf::from(value)),
            "test_images" => self.test_images = Some(PathBuf::from(value)),
            "test_labels" => self.test_labels = Some(PathBuf::from(value)),
            "csv" => self.csv = Some(PathBuf::from(value)),
            "csv_height" => self.csv_height = parse_num(key, value)?,
            "csv_width" => self.csv_width = parse_num(key, value)?,
            "label_col" => self.label_col = Some(parse_num(key, value)?),
            "validation_limit" => self.validation_limit = parse_num(key, value)?,
            "samples" => self.samples = parse_num(key, value)?,
            "classes" => self.classes = parse_num(key, value)?,
            "timeline" => self.timeline = Some(PathBuf::from(value)),
            other => return Err(CliError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Full validation with every default filled in.
    pub fn validate(&mut self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Validation("workers must be >= 1".to_string()));
        }
        if self.slowdowns.is_empty() {
            self.slowdowns = vec![1.0; self.workers];
        }
        if self.slowdowns.len() != self.workers {
            return Err(CliError::Validation(format!(
                "{} slowdown factors for {} workers",
                self.slowdowns.len(),
                self.workers
            )));
        }
        if self.slowdowns.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(CliError::Validation(
                "slowdown factors must be positive".to_string(),
            ));
        }
        if self.threads == 0 {
            return Err(CliError::Validation("threads must be >= 1".to_string()));
        }
        if self.iterations == 0 {
            return Err(CliError::Validation("iterations must be >= 1".to_string()));
        }
        if self.partitions.contains(&PartitionStrategy::Idpa) && self.batches >= self.iterations {
            return Err(CliError::Validation(format!(
                "incremental partitioning requires batches < iterations (A < K); got batches={} iterations={}",
                self.batches, self.iterations
            )));
        }
        crate::presets::preset(&self.preset)?;
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CliError::Validation("scale must be positive".to_string()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CliError::Validation(
                "learning_rate must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn cluster_config(
        &self,
        strategy: Strategy,
        partition: PartitionStrategy,
    ) -> ClusterConfig {
        ClusterConfig {
            workers: self.workers,
            strategy,
            partition,
            batches: self.batches,
            iterations: self.iterations,
            slowdown_factors: self.slowdowns.clone(),
            pool_size: self.threads,
            seed: self.seed,
            unit_comm_cost: self.unit_comm_cost,
            store_capacity: None,
            validation_limit: self.validation_limit,
            transport: match self.transport {
                TransportChoice::Framed => TransportMode::Framed,
                _ => TransportMode::InProcess,
            },
        }
    }
}

/// Parses the config file (if any) and applies flag overrides, in that
/// order. Flags are (key, value) pairs with the leading dashes stripped.
pub fn parse_config(
    path: Option<&Path>,
    flags: &[(String, String)],
) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)?;
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::BadConfigLine {
                    line: line_no + 1,
                    text: raw.to_string(),
                });
            };
            config.apply(key.trim(), value.trim())?;
        }
    }
    for (key, value) in flags {
        config.apply(key.trim(), value.trim())?;
    }
    config.validate()?;
    Ok(config)
}

/// Splits raw CLI arguments into `--key value` pairs, normalizing dashes to
/// underscores. `--config` is extracted separately.
pub fn split_flags(args: &[String]) -> Result<(Option<PathBuf>, Vec<(String, String)>), CliError> {
    let mut config_path = None;
    let mut flags = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let Some(key) = arg.strip_prefix("--") else {
            return Err(CliError::Validation(format!(
                "unexpected argument {arg:?}; flags look like --key value"
            )));
        };
        let Some(value) = args.get(i + 1) else {
            return Err(CliError::Validation(format!("flag --{key} needs a value")));
        };
        let normalized = key.replace('-', "_");
        if normalized == "config" {
            config_path = Some(PathBuf::from(value));
        } else {
            if !KNOWN_KEYS.contains(&normalized.as_str()) {
                return Err(CliError::UnknownKey(normalized));
            }
            flags.push((normalized, value.clone()));
        }
        i += 2;
    }
    Ok((config_path, flags))
}

/// All keys accepted in config files and as flags.
pub fn known_keys() -> &'static [&'static str] {
    KNOWN_KEYS
}
