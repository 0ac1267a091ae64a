use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use neural_mpc::config;
use neural_mpc::neural::io::write_model;
use neural_mpc::neural::{train_residual, Activation, TrainConfig, TrainReport};
use neural_mpc::ResidualDataset;

use crate::settings::load_or;
use crate::{CliError, CliResult, Outcome, Seeded};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset written by `collect`.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Training settings [default: configs/train.toml].
    #[arg(long, value_name = "TOML")]
    pub config: Option<PathBuf>,
    /// Hidden layers, e.g. `3x32` or `64,32`.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out/train")]
    pub out: PathBuf,
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    Activation::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub train: TrainConfig,
    pub data: PathBuf,
}

impl Seeded for TrainRun {
    fn seed(&self) -> u64 {
        self.train.seed
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> CliResult<TrainRun> {
        let mut train: TrainConfig = load_or(self.config.as_deref(), config::TRAIN, "train.toml")?;
        if let Some(a) = &self.arch {
            train.arch = a.clone();
        }
        if let Some(a) = self.activation {
            train.activation = a;
        }
        if let Some(lr) = self.learning_rate {
            train.learning_rate = lr;
        }
        if let Some(e) = self.max_epochs {
            train.max_epochs = e;
        }
        if let Some(s) = self.seed {
            train.seed = s;
        }
        train.validate()?;
        Ok(TrainRun {
            train,
            data: self.data.clone(),
        })
    }
}

/// Load the dataset, split it with the training seed and train.
pub fn train_on(run: &TrainRun) -> CliResult<TrainReport> {
    let ds = ResidualDataset::read(&run.data)
        .map_err(|e| CliError::usage(format!("cannot load dataset {}: {e}", run.data.display())))?
        .with_split(run.train.validation_fraction, run.train.seed)?;
    Ok(train_residual(&ds, &run.train)?)
}

pub fn execute(run: &TrainRun, out: &Path) -> CliResult<Outcome> {
    let report = train_on(run)?;
    let extra = serde_json::json!({
        "arch": run.train.arch,
        "best_epoch": report.best_epoch,
        "best_val_mse": report.best_val_mse,
        "epochs_run": report.log.len(),
        "stopped_early": report.stopped_early,
        "seed": run.train.seed,
    });
    write_model(&report.model, &out.join("model.bin"), extra)?;
    report.write_log_csv(&out.join("train_log.csv"))?;
    println!(
        "{} ({} parameters): best validation MSE {:.4e} at epoch {} of {}",
        report.model.arch_name(),
        report.model.param_count(),
        report.best_val_mse,
        report.best_epoch,
        report.log.len()
    );
    Ok(Outcome {
        inputs: vec![run.data.clone()],
        outputs: ["model.bin", "model.bin.json", "train_log.csv"].map(PathBuf::from).to_vec(),
    })
}
