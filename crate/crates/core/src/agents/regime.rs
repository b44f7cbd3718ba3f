//! Market regime labels from a trailing benchmark return.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::is_missing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    Bull,
    Bear,
    Sideways,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Bull, Regime::Bear, Regime::Sideways];

    /// Label for a trailing return against a symmetric threshold.
    pub fn from_trailing_return(ret: f64, tau: f64) -> Regime {
        if ret > tau {
            Regime::Bull
        } else if ret < -tau {
            Regime::Bear
        } else {
            Regime::Sideways
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Bull => "bull",
            Regime::Bear => "bear",
            Regime::Sideways => "sideways",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bull" => Ok(Regime::Bull),
            "bear" => Ok(Regime::Bear),
            "sideways" => Ok(Regime::Sideways),
            other => Err(format!("unknown regime {other:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("regime window must be positive")]
    Window,
    #[error("regime threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("benchmark has {len} points, needs more than the window {window}")]
    TooShort { len: usize, window: usize },
    #[error("benchmark has {values} values but {dates} dates")]
    Length { values: usize, dates: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub window: usize,
    pub threshold: f64,
}

impl Default for RegimeParams {
    fn default() -> Self {
        Self { window: 60, threshold: 0.05 }
    }
}

/// One label per date; `None` during the warmup window or when the benchmark is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketRegimeSeries {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<Option<Regime>>,
    pub params: RegimeParams,
}

impl MarketRegimeSeries {
    pub fn label_on(&self, date: NaiveDate) -> Option<Regime> {
        self.dates.binary_search(&date).ok().and_then(|i| self.labels[i])
    }

    /// Label of the last date at or before `date`.
    pub fn label_as_of(&self, date: NaiveDate) -> Option<Regime> {
        let i = self.dates.partition_point(|d| *d <= date);
        if i == 0 {
            None
        } else {
            self.labels[i - 1]
        }
    }
}

/// Labels each date Bull / Bear / Sideways from the trailing `window`-day benchmark return.
pub fn classify_regimes(
    dates: &[NaiveDate],
    benchmark: &[f64],
    params: RegimeParams,
) -> Result<MarketRegimeSeries, RegimeError> {
    if params.window == 0 {
        return Err(RegimeError::Window);
    }
    if !(params.threshold > 0.0) {
        return Err(RegimeError::Threshold(params.threshold));
    }
    if dates.len() != benchmark.len() {
        return Err(RegimeError::Length { values: benchmark.len(), dates: dates.len() });
    }
    if benchmark.len() <= params.window {
        return Err(RegimeError::TooShort { len: benchmark.len(), window: params.window });
    }
    let labels = (0..benchmark.len())
        .map(|t| {
            if t < params.window {
                return None;
            }
            let (then, now) = (benchmark[t - params.window], benchmark[t]);
            if is_missing(then) || is_missing(now) || then == 0.0 {
                return None;
            }
            Some(Regime::from_trailing_return(now / then - 1.0, params.threshold))
        })
        .collect();
    Ok(MarketRegimeSeries { dates: dates.to_vec(), labels, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn monotone_rise_is_bull() {
        let w = 10;
        let b: Vec<f64> = (0..=w).map(|i| 1.0 + 0.2 * i as f64 / w as f64).collect();
        let r = classify_regimes(&dates(b.len()), &b, RegimeParams { window: w, threshold: 0.05 }).unwrap();
        assert_eq!(r.labels[w], Some(Regime::Bull));
        assert!(r.labels[..w].iter().all(Option::is_none));
    }

    #[test]
    fn flat_is_sideways() {
        let b = vec![1.0; 30];
        let r = classify_regimes(&dates(30), &b, RegimeParams { window: 5, threshold: 0.01 }).unwrap();
        assert!(r.labels[5..].iter().all(|l| *l == Some(Regime::Sideways)));
    }

    #[test]
    fn bad_parameters() {
        let b = vec![1.0; 10];
        let d = dates(10);
        assert_eq!(classify_regimes(&d, &b, RegimeParams { window: 0, threshold: 0.1 }), Err(RegimeError::Window));
        assert!(matches!(
            classify_regimes(&d, &b, RegimeParams { window: 3, threshold: 0.0 }),
            Err(RegimeError::Threshold(_))
        ));
        assert!(matches!(
            classify_regimes(&d, &b, RegimeParams { window: 10, threshold: 0.1 }),
            Err(RegimeError::TooShort { .. })
        ));
    }

    #[test]
    fn sine_benchmark_matches_double_loop() {
        let n = 300;
        let b: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 / 17.0).sin()).collect();
        let params = RegimeParams { window: 20, threshold: 0.1 };
        let got = classify_regimes(&dates(n), &b, params).unwrap();
        for t in 0..n {
            let expected = if t < 20 {
                None
            } else {
                // trailing return by explicit product of daily gross returns
                let mut gross = 1.0;
                for s in t - 19..=t {
                    gross *= b[s] / b[s - 1];
                }
                let r = gross - 1.0;
                Some(if r > 0.1 {
                    Regime::Bull
                } else if r < -0.1 {
                    Regime::Bear
                } else {
                    Regime::Sideways
                })
            };
            assert_eq!(got.labels[t], expected, "t={t}");
        }
    }

    #[test]
    fn scale_free() {
        let n = 200;
        let b: Vec<f64> = (0..n).map(|i| 3.0 + (i as f64 / 9.0).cos()).collect();
        let scaled: Vec<f64> = b.iter().map(|x| x * 7.5).collect();
        let p = RegimeParams { window: 15, threshold: 0.05 };
        assert_eq!(
            classify_regimes(&dates(n), &b, p).unwrap().labels,
            classify_regimes(&dates(n), &scaled, p).unwrap().labels
        );
    }
}
