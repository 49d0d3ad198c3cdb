use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Column, DataError, OhlcSeries};
use crate::tensor::{RngState, Tensor};

/// Affine map onto `[0, 1]` fit on training values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn new(min: f64, max: f64) -> Result<Self, DataError> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(DataError::DegenerateScaler { min, max });
        }
        Ok(MinMaxScaler { min, max })
    }

    /// Fits on the finite entries of `values`.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<Self, DataError> {
        let (min, max) = values
            .into_iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self::new(min, max)
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }
}

/// How a close series is cut into supervised samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Input length in days.
    pub window: usize,
    /// Number of subsequences the window is split into.
    pub outer_steps: usize,
    /// Days between the window's last value and the target.
    pub horizon: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window: 100,
            outer_steps: 4,
            horizon: 1,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.window == 0 || self.outer_steps == 0 || self.horizon == 0 {
            return Err(DataError::InvalidWindow(format!(
                "window, outer_steps and horizon must be >= 1 (got {self:?})"
            )));
        }
        if !self.window.is_multiple_of(self.outer_steps) {
            return Err(DataError::InvalidWindow(format!(
                "window {} is not divisible by outer_steps {}",
                self.window, self.outer_steps
            )));
        }
        Ok(())
    }

    pub fn inner_steps(&self) -> usize {
        self.window / self.outer_steps
    }

    /// `n - window - horizon + 1`, or `None` when the series is too short.
    pub fn sample_count(&self, n: usize) -> Option<usize> {
        (n + 1).checked_sub(self.window + self.horizon).filter(|&c| c > 0)
    }
}

/// Supervised samples: `inputs` `[n, ...sample]` and scalar `targets` `[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    inputs: Tensor,
    targets: Tensor,
    scaler: Option<MinMaxScaler>,
    config: Option<WindowConfig>,
    /// Source row of each target in the series it was cut from.
    target_rows: Vec<usize>,
}

impl WindowedDataset {
    /// Wraps arbitrary supervised data (no windowing provenance, unscaled).
    pub fn from_parts(inputs: Tensor, targets: Tensor) -> Result<Self, DataError> {
        let n = inputs.dims()[0];
        if targets.dims() != [n] {
            return Err(DataError::InvalidWindow(format!(
                "targets {:?} do not match {n} samples",
                targets.dims()
            )));
        }
        Ok(WindowedDataset {
            inputs,
            targets,
            scaler: None,
            config: None,
            target_rows: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    pub fn scaler(&self) -> Option<&MinMaxScaler> {
        self.scaler.as_ref()
    }

    pub fn config(&self) -> Option<&WindowConfig> {
        self.config.as_ref()
    }

    pub fn target_rows(&self) -> &[usize] {
        &self.target_rows
    }

    pub fn sample_dims(&self) -> &[usize] {
        &self.inputs.dims()[1..]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if indices.is_empty() {
            return Err(DataError::EmptyPartition);
        }
        Ok(WindowedDataset {
            inputs: self.inputs.gather_rows(indices)?,
            targets: self.targets.gather_rows(indices)?,
            scaler: self.scaler,
            config: self.config,
            target_rows: indices.iter().map(|&i| self.target_rows[i]).collect(),
        })
    }

    /// Applies an existing scaler to an unscaled dataset.
    pub fn scaled_with(&self, scaler: MinMaxScaler) -> Result<Self, DataError> {
        if self.scaler.is_some() {
            return Err(DataError::AlreadyScaled);
        }
        Ok(WindowedDataset {
            inputs: self.inputs.map(|v| scaler.transform(v)),
            targets: self.targets.map(|v| scaler.transform(v)),
            scaler: Some(scaler),
            config: self.config,
            target_rows: self.target_rows.clone(),
        })
    }

    /// SHA-256 over the input and target bits, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self.inputs.data().iter().chain(self.targets.data()) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Sliding stride-1 windows over the close column, each reshaped to
/// `[outer_steps, window / outer_steps, 1]`. Values stay in price space.
pub fn window_close(series: &OhlcSeries, config: WindowConfig) -> Result<WindowedDataset, DataError> {
    config.validate()?;
    let closes = series.values(Column::Close)?;
    let count = config.sample_count(closes.len()).ok_or(DataError::TooShort {
        needed: config.window + config.horizon,
        got: closes.len(),
    })?;
    let mut inputs = Vec::with_capacity(count * config.window);
    let mut targets = Vec::with_capacity(count);
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        inputs.extend_from_slice(&closes[i..i + config.window]);
        let row = i + config.window + config.horizon - 1;
        targets.push(closes[row]);
        rows.push(row);
    }
    Ok(WindowedDataset {
        inputs: Tensor::from_vec(vec![count, config.outer_steps, config.inner_steps(), 1], inputs)?,
        targets: Tensor::from_vec(vec![count], targets)?,
        scaler: None,
        config: Some(config),
        target_rows: rows,
    })
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub ratio: f64,
}

/// `⌊ratio·n⌋`, tolerant of ratios like 0.29 that sit just below their
/// decimal value in binary.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Splits the first `⌊ratio·n⌋` samples off as training data, fits the scaler
/// on the training inputs and targets only, and scales both partitions.
pub fn fit_scale(dataset: &WindowedDataset, ratio: f64) -> Result<SplitPair, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    if dataset.scaler.is_some() {
        return Err(DataError::AlreadyScaled);
    }
    let n = dataset.len();
    let n_train = train_count(n, ratio);
    if n_train == 0 || n_train == n {
        return Err(DataError::EmptyPartition);
    }
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..n).collect();
    let train = dataset.subset(&train_idx)?;
    let test = dataset.subset(&test_idx)?;
    let scaler = MinMaxScaler::fit(train.inputs.data().iter().chain(train.targets.data()))?;
    Ok(SplitPair {
        train: train.scaled_with(scaler)?,
        test: test.scaled_with(scaler)?,
        ratio,
    })
}

/// Seeded Fisher–Yates permutation of the samples.
pub fn shuffle_samples(dataset: &WindowedDataset, rng: &mut RngState) -> Result<WindowedDataset, DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyPartition);
    }
    dataset.subset(&rng.permutation(dataset.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::testutil::series_of;
    use proptest::prelude::*;

    fn ramp(n: usize) -> OhlcSeries {
        series_of(&(0..n).map(|i| Some(100.0 + i as f64)).collect::<Vec<_>>())
    }

    #[test]
    fn sample_counts() {
        let cfg = WindowConfig::default();
        assert_eq!(window_close(&ramp(101), cfg).unwrap().len(), 1);
        assert_eq!(window_close(&ramp(200), cfg).unwrap().len(), 100);
        assert!(matches!(window_close(&ramp(100), cfg), Err(DataError::TooShort { .. })));
    }

    #[test]
    fn window_layout_and_target() {
        let cfg = WindowConfig { window: 4, outer_steps: 2, horizon: 2 };
        let ds = window_close(&ramp(10), cfg).unwrap();
        assert_eq!(ds.inputs().dims(), &[5, 2, 2, 1]);
        assert_eq!(&ds.inputs().data()[4..8], &[101.0, 102.0, 103.0, 104.0]);
        // sample 1 covers rows 1..5, horizon 2 -> row 6
        assert_eq!(ds.targets().data()[1], 106.0);
        assert_eq!(ds.target_rows()[1], 6);
    }

    #[test]
    fn divisibility_is_checked() {
        let cfg = WindowConfig { window: 10, outer_steps: 4, horizon: 1 };
        assert!(matches!(window_close(&ramp(50), cfg), Err(DataError::InvalidWindow(_))));
    }

    #[test]
    fn eighty_twenty_split() {
        let ds = window_close(&ramp(200), WindowConfig::default()).unwrap();
        let split = fit_scale(&ds, 0.8).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.test.len(), 20);
        assert_eq!(split.train.target_rows()[79] + 1, split.test.target_rows()[0]);
        let s = split.train.scaler().unwrap();
        assert_eq!((s.min, s.max), (100.0, 100.0 + 179.0));
        assert!(split.train.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(split.test.inputs().all_finite());
    }

    #[test]
    fn degenerate_values_rejected() {
        let flat = series_of(&[Some(3.0); 110]);
        let ds = window_close(&flat, WindowConfig::default()).unwrap();
        assert!(matches!(fit_scale(&ds, 0.8), Err(DataError::DegenerateScaler { .. })));
    }

    #[test]
    fn empty_partition_rejected() {
        let ds = window_close(&ramp(102), WindowConfig::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(matches!(fit_scale(&ds, 0.2), Err(DataError::EmptyPartition)));
        assert!(matches!(fit_scale(&ds, 1.0), Err(DataError::InvalidRatio(_))));
    }

    #[test]
    fn inverse_transform_recovers_targets() {
        let ds = window_close(&series_of(&(0..150).map(|i| Some(((i * 37) % 101) as f64 + 0.123)).collect::<Vec<_>>()), WindowConfig::default()).unwrap();
        let split = fit_scale(&ds, 0.8).unwrap();
        let s = split.train.scaler().unwrap();
        let raw = ds.targets().data();
        for (i, &t) in split.train.targets().data().iter().enumerate() {
            assert!((s.inverse(t) - raw[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn shuffle_properties() {
        let ds = window_close(&ramp(130), WindowConfig::default()).unwrap();
        let a = shuffle_samples(&ds, &mut RngState::new(9)).unwrap();
        let b = shuffle_samples(&ds, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
        let mut t: Vec<f64> = a.targets().data().to_vec();
        t.sort_by(f64::total_cmp);
        assert_eq!(t, ds.targets().data());
        let one = ds.subset(&[3]).unwrap();
        assert_eq!(shuffle_samples(&one, &mut RngState::new(1)).unwrap(), one);
    }

    proptest! {
        #[test]
        fn count_formula(n in 1usize..400, window in 1usize..60, horizon in 1usize..5) {
            let cfg = WindowConfig { window, outer_steps: 1, horizon };
            let got = window_close(&ramp(n), cfg).map(|d| d.len()).ok();
            let want = if n >= window + horizon { Some(n - window - horizon + 1) } else { None };
            prop_assert_eq!(got, want);
        }

        #[test]
        fn scaler_ignores_test_partition(pick in 0usize..10_000, value in -1e4f64..1e4) {
            let ds = window_close(&ramp(140), WindowConfig::default()).unwrap();
            let base = fit_scale(&ds, 0.8).unwrap();
            let n_train = base.train.len();
            let test_row = n_train + pick % (ds.len() - n_train);
            let mut mutated = ds.clone();
            mutated.inputs.data_mut()[test_row * 100 + pick % 100] = value;
            mutated.targets.data_mut()[test_row] = value;
            let other = fit_scale(&mutated, 0.8).unwrap();
            let (a, b) = (base.train.scaler().unwrap(), other.train.scaler().unwrap());
            prop_assert_eq!(a.min.to_bits(), b.min.to_bits());
            prop_assert_eq!(a.max.to_bits(), b.max.to_bits());
        }
    }
}
