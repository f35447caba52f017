//! bpt-cnn: bi-layered parallel CNN training harness.
//!
//! Subcommands: train, simulate, matrix, gradcheck, inspect-plan, synth-data.
//! Every configuration key works both in a `--config` file (key = value
//! lines) and as a `--key value` flag; flags win.
//! Exit codes: 0 success, 1 validation error, 2 runtime failure,
//! 3 gradient-check failure.

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use cli_experiments::dataset::DatasetHandle;
use cli_experiments::{
    build_network, generate_synthetic_glyphs, gradient_check, load_csv_dataset, load_idx_dataset,
    parse_config, preset, run_experiment_matrix, split_flags, write_idx_dataset, CliError,
    ExperimentConfig, TransportChoice,
};
use cluster_runtime::{run_training, run_training_tcp, strategy_name, RunReport, Sample};
use inner_parallel::{assign_priorities, build_task_dag, schedule_tasks, write_timeline_csv, Phase};
use nn_core::NetworkF64;

const USAGE: &str = "\
bpt-cnn <command> [--config FILE] [--key value ...]

commands:
  train         real training over loopback sockets (wall-clock metrics)
  simulate      one deterministic simulated-time cluster run
  matrix        strategy x partition comparison grid with a summary CSV
  gradcheck     finite-difference check of every parameter of a preset
  inspect-plan  print the incremental partition plan as CSV
  synth-data    write a synthetic glyph dataset as IDX files

common flags (every config key is also a flag):
  --workers N --strategy sgwu|agwu|both --partition idpa|udpa|both
  --batches A --iterations K --threads P --seed S --out DIR
  --slowdowns 1,1,2,4 --preset case1..case7 --scale F --learning_rate F
  --train_images PATH --train_labels PATH --test_images PATH --test_labels PATH
  --csv PATH --csv_height H --csv_width W --label_col I
  --transport inprocess|framed|tcp --listen ADDR:PORT --timeline PATH
  --samples N --classes C --c_w N --validation_limit N
";

fn load_dataset(config: &ExperimentConfig) -> Result<DatasetHandle, CliError> {
    if let (Some(images), Some(labels)) = (&config.train_images, &config.train_labels) {
        return load_idx_dataset(images, labels);
    }
    if let Some(csv) = &config.csv {
        return load_csv_dataset(csv, config.label_col, config.csv_height, config.csv_width);
    }
    Err(CliError::Validation(
        "no dataset configured: set train_images/train_labels or csv (or generate one with synth-data)"
            .to_string(),
    ))
}

fn load_eval_set(config: &ExperimentConfig) -> Result<Option<Vec<Sample>>, CliError> {
    if let (Some(images), Some(labels)) = (&config.test_images, &config.test_labels) {
        Ok(Some(load_idx_dataset(images, labels)?.samples))
    } else {
        Ok(None)
    }
}

fn network_for(config: &ExperimentConfig, dataset: &DatasetHandle) -> Result<NetworkF64, CliError> {
    let shape = dataset
        .shape()
        .ok_or_else(|| CliError::Validation("dataset is empty".to_string()))?;
    let spec = preset(&config.preset)?;
    build_network(
        &spec,
        shape,
        dataset.classes.max(2),
        config.scale,
        config.learning_rate,
        config.seed,
    )
}

fn write_run_outputs(
    config: &ExperimentConfig,
    report: &RunReport,
    tag: &str,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out)?;
    let metrics_path = config.out.join(format!("metrics_{tag}.jsonl"));
    let mut metrics = std::fs::File::create(&metrics_path)?;
    report.write_metrics_jsonl(&mut metrics)?;
    let updates_path = config.out.join(format!("updates_{tag}.jsonl"));
    let mut updates = std::fs::File::create(&updates_path)?;
    for record in &report.update_records {
        weight_sync::write_update_record(&mut updates, record)
            .map_err(cluster_runtime::RuntimeError::Sync)?;
    }
    let plan_path = config.out.join(format!("plan_{tag}.csv"));
    let mut plan = std::fs::File::create(&plan_path)?;
    report.partition_plan.write_csv(&mut plan)?;
    let ckpt_path = config.out.join(format!("weights_{tag}.bptw"));
    nn_core::checkpoint::save(&ckpt_path, &report.final_weights.params)?;
    println!(
        "{tag}: {} epochs, makespan {:.1}, sync wait {:.1}, transfers {}, final accuracy {:.4}",
        report.epochs.len(),
        report.makespan,
        report.total_sync_wait,
        report.transfers,
        report.epochs.last().map(|e| e.accuracy).unwrap_or(0.0),
    );
    println!(
        "wrote {}, {}, {}, {}",
        metrics_path.display(),
        updates_path.display(),
        plan_path.display(),
        ckpt_path.display()
    );
    Ok(())
}

fn emit_timeline(
    config: &ExperimentConfig,
    network: &NetworkF64,
    shape: (usize, usize, usize),
    path: &Path,
) -> Result<(), CliError> {
    let mut dag = build_task_dag(network, shape, Phase::Forward)?;
    assign_priorities(&mut dag)?;
    let assignment = schedule_tasks(&dag, config.threads)?;
    let mut out = std::fs::File::create(path)?;
    write_timeline_csv(&dag, &assignment, &mut out)?;
    println!("wrote task timeline {}", path.display());
    Ok(())
}

fn cmd_simulate(config: &ExperimentConfig) -> Result<(), CliError> {
    let dataset = load_dataset(config)?;
    let eval = load_eval_set(config)?;
    let network = network_for(config, &dataset)?;
    let strategy = config.strategies[0];
    let partition = config.partitions[0];
    let cluster = config.cluster_config(strategy, partition);
    let report = run_training(&cluster, &dataset.samples, &network, eval.as_deref())?;
    let tag = format!("{}_{partition}", strategy_name(strategy));
    write_run_outputs(config, &report, &tag)?;
    if let Some(timeline) = &config.timeline {
        emit_timeline(config, &network, dataset.shape().unwrap(), timeline)?;
    }
    Ok(())
}

fn cmd_train(config: &ExperimentConfig) -> Result<(), CliError> {
    let dataset = load_dataset(config)?;
    let eval = load_eval_set(config)?;
    let network = network_for(config, &dataset)?;
    let strategy = config.strategies[0];
    let partition = config.partitions[0];
    let cluster = config.cluster_config(strategy, partition);
    let report = match config.transport {
        TransportChoice::Tcp => run_training_tcp(
            &cluster,
            &dataset.samples,
            &network,
            eval.as_deref(),
            config.listen.as_deref(),
        )?,
        _ => run_training(&cluster, &dataset.samples, &network, eval.as_deref())?,
    };
    let tag = format!("{}_{partition}_train", strategy_name(strategy));
    write_run_outputs(config, &report, &tag)
}

fn cmd_matrix(config: &ExperimentConfig) -> Result<(), CliError> {
    let dataset = load_dataset(config)?;
    let eval = load_eval_set(config)?;
    let network = network_for(config, &dataset)?;
    let outcome = run_experiment_matrix(config, &dataset.samples, &network, eval.as_deref())?;
    println!(
        "matrix: {} run(s) completed, {} failed; summary {}",
        outcome.completed,
        outcome.failed,
        outcome.summary.display()
    );
    if outcome.failed > 0 {
        return Err(CliError::Runtime(cluster_runtime::RuntimeError::BadConfig(
            format!("{} matrix run(s) failed; see summary", outcome.failed),
        )));
    }
    Ok(())
}

fn cmd_gradcheck(config: &ExperimentConfig) -> Result<(), CliError> {
    // a down-scaled preset on a small input keeps the full-parameter sweep
    // inside seconds
    let spec = preset(&config.preset)?;
    let classes = 4usize;
    let shape = (1usize, 8usize, 8usize);
    let network = build_network(
        &spec,
        shape,
        classes,
        (config.scale).min(0.05),
        config.learning_rate,
        config.seed,
    )?;
    let data = generate_synthetic_glyphs(4, classes, shape.1, shape.2, config.seed);
    let outcome = gradient_check(&network, &data.samples, classes, 1e-5, 1e-6, None)?;
    println!(
        "gradcheck {}: {} parameters x {} samples, max relative error {:.3e} (parameter {})",
        config.preset,
        outcome.parameters,
        outcome.samples,
        outcome.max_rel_error,
        outcome.worst_param
    );
    if outcome.pass() {
        println!("gradcheck PASS at 1e-6");
        Ok(())
    } else {
        Err(CliError::GradCheckFailed {
            max: outcome.max_rel_error,
            at: outcome.worst_param,
        })
    }
}

fn cmd_inspect_plan(config: &ExperimentConfig) -> Result<(), CliError> {
    // plan over the configured sample count (or the configured dataset) with
    // frequency-implied stationary speeds
    let n = match (&config.train_images, &config.csv) {
        (Some(_), _) | (_, Some(_)) => load_dataset(config)?.len() as u64,
        _ => config.samples as u64,
    };
    let freqs: Vec<f64> = config.slowdowns.iter().map(|f| 1.0 / f).collect();
    let mut planner = partitioning::IdpaPlanner::new(n, config.batches as usize, &freqs)?;
    while !planner.is_complete() {
        if planner.next_batch() > 1 {
            let durations: Vec<f64> = planner
                .profiles()
                .iter()
                .zip(&config.slowdowns)
                .map(|(p, s)| p.cumulative_samples as f64 * s)
                .collect();
            planner.record_measurements(&durations)?;
        }
        planner.plan_step()?;
    }
    let mut out = std::io::stdout().lock();
    planner.plan().write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_synth_data(config: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out)?;
    let train = generate_synthetic_glyphs(config.samples, config.classes, 28, 28, config.seed);
    let test = generate_synthetic_glyphs(
        (config.samples / 4).max(1),
        config.classes,
        28,
        28,
        config.seed.wrapping_add(0x7e57),
    );
    let paths = [
        config.out.join("train-images.idx"),
        config.out.join("train-labels.idx"),
        config.out.join("test-images.idx"),
        config.out.join("test-labels.idx"),
    ];
    write_idx_dataset(&paths[0], &paths[1], &train.samples)?;
    write_idx_dataset(&paths[2], &paths[3], &test.samples)?;
    println!(
        "wrote {} train and {} test samples ({} classes) under {}",
        train.len(),
        test.len(),
        config.classes,
        config.out.display()
    );
    Ok(())
}

fn run() -> Result<(), CliError> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = args.first() else {
        eprint!("{USAGE}");
        return Err(CliError::Validation("missing command".to_string()));
    };
    let (config_path, flags) = split_flags(&args[1..])?;
    let config = parse_config(config_path.as_deref(), &flags)?;
    match command.as_str() {
        "train" => cmd_train(&config),
        "simulate" => cmd_simulate(&config),
        "matrix" => cmd_matrix(&config),
        "gradcheck" => cmd_gradcheck(&config),
        "inspect-plan" => cmd_inspect_plan(&config),
        "synth-data" => cmd_synth_data(&config),
        other => {
            eprint!("{USAGE}");
            Err(CliError::Validation(format!("unknown command {other:?}")))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
