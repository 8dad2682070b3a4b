use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use inhibited_softmax::checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
use inhibited_softmax::experiments::{
    ablation_csv, ood_csv, perf_csv, run_ablation, run_ood_experiment, run_predictive_performance, run_train,
    run_wrong_prediction_experiment, run_xor_heatmap, train_csv, wrongpred_csv, ExperimentConfig,
};
use inhibited_softmax::{Error, Result};

/// Inhibited Softmax uncertainty experiments.
#[derive(Debug, Parser)]
#[command(name = "issm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the configured network and save a checkpoint.
    Train,
    /// Out-of-distribution detection (ood.csv).
    EvalOod,
    /// Wrong-prediction detection (wrongpred.csv).
    WrongPred,
    /// Accuracy and negative log-likelihood (perf.csv).
    Perf,
    /// Uncertainty heatmap of an XOR-trained network (heatmap.csv, heatmap.pgm).
    Heatmap,
    /// Regulariser, activation and weight-decay sweeps (ablation.csv).
    Ablate,
    /// Print a checkpoint summary.
    InspectCheckpoint {
        path: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None if matches!(cli.command, Command::Heatmap) => ExperimentConfig::xor_default(),
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let net = load_checkpoint(path)?;
    let spec = net.spec();
    println!("version: {CHECKPOINT_VERSION}");
    println!("widths: {:?}", spec.layer_widths);
    println!("head: {:?}", spec.head);
    println!(
        "activations: hidden {}, penultimate {}",
        spec.hidden_activation.name(),
        spec.penultimate_activation.name()
    );
    println!(
        "loss: lambda {}, weight_decay {}",
        spec.loss.evidence_lambda, spec.loss.weight_decay
    );
    println!("dropout: {}", spec.dropout_rate);
    for (i, layer) in net.layers().iter().enumerate() {
        println!(
            "layer {i}: {}x{}{}",
            layer.in_dim(),
            layer.out_dim(),
            if layer.has_bias() { " + bias" } else { "" }
        );
    }
    println!("parameters: {}", net.param_count());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::InspectCheckpoint { path } = &cli.command {
        return inspect(path);
    }
    let cfg = load_config(cli)?;
    let out = cfg.out_dir.as_path();
    match cli.command {
        Command::Train => {
            let trained = run_train(&cfg)?;
            write(out, "train.csv", train_csv(&trained.loss_history))?;
            let path = out.join("checkpoint.json");
            save_checkpoint(&trained.network, &path)?;
            println!("wrote {}", path.display());
        }
        Command::EvalOod => write(out, "ood.csv", ood_csv(&run_ood_experiment(&cfg)?))?,
        Command::WrongPred => write(out, "wrongpred.csv", wrongpred_csv(&run_wrong_prediction_experiment(&cfg)?))?,
        Command::Perf => write(out, "perf.csv", perf_csv(&run_predictive_performance(&cfg)?))?,
        Command::Heatmap => {
            let h = run_xor_heatmap(&cfg)?;
            write(out, "heatmap.csv", h.to_csv())?;
            write(out, "heatmap.pgm", h.to_pgm())?;
        }
        Command::Ablate => write(out, "ablation.csv", ablation_csv(&run_ablation(&cfg)?))?,
        Command::InspectCheckpoint { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
