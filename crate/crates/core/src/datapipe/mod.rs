//! OHLC ingestion, cleaning, exploratory features and supervised windowing.

mod features;
mod ohlc;
mod window;

use chrono::NaiveDate;
use thiserror::Error;

use crate::tensor::TensorError;

pub use features::{clean, count_missing, daily_return, moving_average, MissingCounts};
pub use ohlc::{read_csv, read_csv_path, write_csv, Column, CsvImport, OhlcRecord, OhlcSeries, CSV_HEADER};
pub use window::{
    fit_scale, shuffle_samples, train_count, window_close, MinMaxScaler, SplitPair, WindowConfig,
    WindowedDataset,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("csv line {line}: {detail}")]
    Csv { line: usize, detail: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(String),
    #[error("dates must be strictly increasing (offending date {0})")]
    DateOrder(NaiveDate),
    #[error("column `{0}` has no values")]
    AllMissing(&'static str),
    #[error("column `{column}` is missing a value at row {row}")]
    MissingValue { column: &'static str, row: usize },
    #[error("series too short: need {needed} rows, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("nonpositive close price at row {row}")]
    NonPositivePrice { row: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("split leaves an empty partition")]
    EmptyPartition,
    #[error("degenerate scaler: min {min}, max {max}")]
    DegenerateScaler { min: f64, max: f64 },
    #[error("dataset is already scaled")]
    AlreadyScaled,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::{OhlcRecord, OhlcSeries};
    use chrono::NaiveDate;

    /// Daily series with the given closes; other prices fixed at 1.
    pub fn series_of(closes: &[Option<f64>]) -> OhlcSeries {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let records = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| OhlcRecord {
                date: start + chrono::Days::new(i as u64),
                open: Some(1.0),
                high: Some(1.0),
                low: Some(1.0),
                close: c,
                volume: None,
            })
            .collect();
        OhlcSeries::new("T", records).unwrap()
    }
}
