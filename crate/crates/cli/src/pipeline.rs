//! Data preparation and model fitting shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;
use stockcast::datapipe::{
    clean, count_missing, fit_scale, read_csv_path, shuffle_samples, train_count, window_close, OhlcSeries,
    SplitPair, WindowConfig, WindowedDataset,
};
use stockcast::tensor::RngState;
use stockcast::training::{evaluate, train, EvalReport, OptimizerKind, OptimizerState, TrainConfig, TrainHistory};
use stockcast::zoo::{build_cnn_lstm, build_lstm_baseline, CnnLstmConfig, LstmBaselineConfig, ModelMeta, Network};

use crate::CliError;

/// RNG stream of the pre-split sample shuffle.
const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Ticker; resolves to `<data-dir>/<SYMBOL>.csv` when --csv is absent.
    #[arg(long)]
    pub symbol: Option<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
}

impl DataArgs {
    pub fn path(&self) -> Result<PathBuf, CliError> {
        match (&self.csv, &self.symbol) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(s)) => Ok(self.data_dir.join(format!("{s}.csv"))),
            (None, None) => Err(CliError::input(anyhow::anyhow!("one of --csv or --symbol is required"))),
        }
    }

    pub fn load(&self) -> Result<OhlcSeries, CliError> {
        let path = self.path()?;
        let import = read_csv_path(&path).with_context(|| format!("reading {}", path.display()))?;
        if import.dropped_undated > 0 {
            log::warn!("dropped {} rows without a date", import.dropped_undated);
        }
        Ok(import.series)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 4)]
    pub outer_steps: usize,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    /// Chronological train fraction.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    /// Shuffle samples before the split.
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl WindowArgs {
    pub fn config(&self) -> WindowConfig {
        WindowConfig {
            window: self.window,
            outer_steps: self.outer_steps,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    CnnLstm,
    Lstm,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::CnnLstm => "cnn-lstm",
            Arch::Lstm => "lstm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = Optimizer::Adam)]
    pub optimizer: Optimizer,
    /// Skip missing-value imputation.
    #[arg(long)]
    pub no_clean: bool,
}

impl TrainArgs {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn optimizer(&self) -> OptimizerState {
        let kind = match self.optimizer {
            Optimizer::Adam => OptimizerKind::Adam,
            Optimizer::Sgd => OptimizerKind::Sgd,
        };
        OptimizerState::new(kind, self.lr)
    }
}

pub struct Prepared {
    pub imputed: usize,
    pub dataset: WindowedDataset,
    pub split: SplitPair,
}

/// Cleans (unless disabled), windows, optionally shuffles, then splits and
/// scales on the training partition.
pub fn prepare(series: &OhlcSeries, w: &WindowArgs, clean_missing: bool) -> Result<Prepared, CliError> {
    let imputed = count_missing(series).total();
    let series = if clean_missing {
        clean(series).context("cleaning")?
    } else {
        series.clone()
    };
    let cfg = w.config();
    let mut dataset = window_close(&series, cfg).context("windowing")?;
    if w.shuffle {
        dataset = shuffle_samples(&dataset, &mut RngState::with_stream(w.seed, SHUFFLE_STREAM))?;
    }
    let split = fit_scale(&dataset, w.ratio).context("splitting")?;
    Ok(Prepared {
        imputed,
        dataset,
        split,
    })
}

/// Re-derives the scaled test (or full) partition a model was trained with.
pub fn partition_for(series: &OhlcSeries, meta: &ModelMeta, test_only: bool) -> Result<WindowedDataset, CliError> {
    let series = clean(series).context("cleaning")?;
    let mut dataset = window_close(&series, meta.window).context("windowing with the model's window config")?;
    if meta.shuffled {
        dataset = shuffle_samples(&dataset, &mut RngState::with_stream(meta.seed, SHUFFLE_STREAM))?;
    }
    if !test_only {
        return Ok(dataset);
    }
    let n = dataset.len();
    let n_train = train_count(n, meta.split_ratio);
    if n_train >= n {
        return Err(CliError::input(anyhow::anyhow!(
            "no test samples: {n} windows at ratio {}",
            meta.split_ratio
        )));
    }
    Ok(dataset.subset(&(n_train..n).collect::<Vec<_>>())?)
}

pub fn build_model(arch: Arch, w: &WindowArgs) -> Result<Network, CliError> {
    let mut rng = RngState::new(w.seed);
    let net = match arch {
        Arch::CnnLstm => build_cnn_lstm(
            &CnnLstmConfig {
                window: w.window,
                outer_steps: w.outer_steps,
                ..CnnLstmConfig::default()
            },
            &mut rng,
        ),
        Arch::Lstm => build_lstm_baseline(
            &LstmBaselineConfig {
                window: w.window,
                ..LstmBaselineConfig::default()
            },
            &mut rng,
        ),
    };
    Ok(net?)
}

pub struct Fitted {
    pub net: Network,
    pub history: TrainHistory,
    pub report: EvalReport,
    pub meta: ModelMeta,
}

pub fn fit(arch: Arch, prepared: &Prepared, w: &WindowArgs, t: &TrainArgs) -> Result<Fitted, CliError> {
    let mut net = build_model(arch, w)?;
    let mut opt = t.optimizer();
    let history = train(&mut net, &prepared.split.train, &t.train_config(w.seed), &mut opt)?;
    let report = evaluate(&net, &prepared.split.test)?;
    let meta = ModelMeta {
        model: arch.name().into(),
        seed: w.seed,
        epochs_run: history.len(),
        dataset_fingerprint: prepared.dataset.fingerprint(),
        window: w.config(),
        split_ratio: w.ratio,
        shuffled: w.shuffle,
    };
    Ok(Fitted {
        net,
        history,
        report,
        meta,
    })
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}
