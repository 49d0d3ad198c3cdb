use super::{Column, DataError, OhlcSeries};

/// Per-column count of values that `clean` would impute.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MissingCounts {
    pub open: usize,
    pub high: usize,
    pub low: usize,
    pub close: usize,
}

impl MissingCounts {
    pub fn total(&self) -> usize {
        self.open + self.high + self.low + self.close
    }

    fn slot(&mut self, column: Column) -> &mut usize {
        match column {
            Column::Open => &mut self.open,
            Column::High => &mut self.high,
            Column::Low => &mut self.low,
            Column::Close => &mut self.close,
        }
    }
}

fn is_missing(v: Option<f64>) -> bool {
    !v.is_some_and(f64::is_finite)
}

pub fn count_missing(series: &OhlcSeries) -> MissingCounts {
    let mut counts = MissingCounts::default();
    for column in Column::ALL {
        *counts.slot(column) = series.records().iter().filter(|r| is_missing(r.get(column))).count();
    }
    counts
}

/// Replaces every missing (or non-finite) price with the mean of the
/// column's present values.
pub fn clean(series: &OhlcSeries) -> Result<OhlcSeries, DataError> {
    if series.is_empty() {
        return Err(DataError::TooShort { needed: 1, got: 0 });
    }
    let mut out = series.clone();
    for column in Column::ALL {
        let present: Vec<f64> = series
            .records()
            .iter()
            .filter_map(|r| r.get(column).filter(|v| v.is_finite()))
            .collect();
        if present.is_empty() {
            return Err(DataError::AllMissing(column.name()));
        }
        if present.len() == series.len() {
            continue;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        for r in out.records_mut() {
            let slot = r.get_mut(column);
            if is_missing(*slot) {
                *slot = Some(mean);
            }
        }
    }
    Ok(out)
}

/// Trailing simple moving average; element `i` averages values `i..i+window`.
pub fn moving_average(series: &OhlcSeries, column: Column, window: usize) -> Result<Vec<f64>, DataError> {
    if window == 0 {
        return Err(DataError::InvalidWindow("moving-average window must be >= 1".into()));
    }
    let values = series.values(column)?;
    if values.len() < window {
        return Err(DataError::TooShort {
            needed: window,
            got: values.len(),
        });
    }
    Ok(values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect())
}

/// `close_t / close_{t-1} - 1`.
pub fn daily_return(series: &OhlcSeries) -> Result<Vec<f64>, DataError> {
    let closes = series.values(Column::Close)?;
    if closes.len() < 2 {
        return Err(DataError::TooShort {
            needed: 2,
            got: closes.len(),
        });
    }
    if let Some(row) = closes.iter().position(|&c| !(c > 0.0)) {
        return Err(DataError::NonPositivePrice { row });
    }
    Ok(closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::testutil::series_of;

    #[test]
    fn clean_without_gaps_is_identity() {
        let s = series_of(&[Some(1.0), Some(2.0)]);
        assert_eq!(clean(&s).unwrap(), s);
    }

    #[test]
    fn clean_imputes_column_mean() {
        let s = series_of(&[Some(10.0), None, Some(20.0)]);
        assert_eq!(count_missing(&s).close, 1);
        let c = clean(&s).unwrap();
        assert_eq!(c.values(Column::Close).unwrap(), vec![10.0, 15.0, 20.0]);
        assert_eq!(count_missing(&c).total(), 0);
    }

    #[test]
    fn clean_treats_nan_as_missing() {
        let s = series_of(&[Some(2.0), Some(f64::NAN), Some(4.0)]);
        assert_eq!(clean(&s).unwrap().values(Column::Close).unwrap(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn clean_rejects_all_missing_column() {
        let s = series_of(&[None, None]);
        assert!(matches!(clean(&s), Err(DataError::AllMissing("close"))));
    }

    #[test]
    fn clean_is_idempotent() {
        let s = series_of(&[Some(3.0), None, Some(5.0), None, Some(8.5)]);
        let once = clean(&s).unwrap();
        assert_eq!(clean(&once).unwrap(), once);
    }

    #[test]
    fn moving_average_cases() {
        let s = series_of(&[Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
        assert_eq!(moving_average(&s, Column::Close, 1).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(moving_average(&s, Column::Close, 3).unwrap(), vec![2.0, 3.0]);
        assert!(matches!(
            moving_average(&s, Column::Close, 5),
            Err(DataError::TooShort { .. })
        ));
        let flat = series_of(&[Some(7.0); 6]);
        assert!(moving_average(&flat, Column::Close, 4).unwrap().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn daily_return_cases() {
        let r = daily_return(&series_of(&[Some(100.0), Some(110.0)])).unwrap();
        assert!((r[0] - 0.10).abs() < 1e-15);
        assert_eq!(daily_return(&series_of(&[Some(5.0); 4])).unwrap(), vec![0.0; 3]);
        assert_eq!(daily_return(&series_of(&[Some(100.0), Some(50.0)])).unwrap(), vec![-0.5]);
        assert!(matches!(
            daily_return(&series_of(&[Some(1.0), Some(0.0)])),
            Err(DataError::NonPositivePrice { row: 1 })
        ));
    }
}
