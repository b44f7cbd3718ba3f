use chrono::NaiveDate;
use thiserror::Error;

use crate::eval::AlphaSeries;
use crate::market::is_missing;

/// Dense row-major matrix of features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(cols: usize, data: Vec<f64>) -> Self {
        assert!(cols > 0 && data.len().is_multiple_of(cols), "data length must be a multiple of cols");
        Self { cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.cols).copied()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("no alphas")]
    NoAlphas,
    #[error("series {0:?} is not aligned with its target")]
    Misaligned(String),
    #[error("the {0} slice has no complete rows")]
    Empty(&'static str),
    #[error("feature {0:?} has zero variance on the training slice")]
    ZeroVariance(String),
    #[error("target has zero variance on the training slice")]
    ConstantTarget,
}

/// Per-column affine standardization fitted on the training slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.std[j]
    }
}

/// Pooled (date, ticker) rows for training and validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub alpha_ids: Vec<String>,
    pub x_train: FeatureMatrix,
    pub y_train: Vec<f64>,
    pub x_val: FeatureMatrix,
    pub y_val: Vec<f64>,
    pub features: Standardizer,
    /// Target mean and std on the training slice; targets are stored standardized.
    pub target: (f64, f64),
    pub train_rows: Vec<(NaiveDate, String)>,
}

struct Raw {
    x: Vec<f64>,
    y: Vec<f64>,
    keys: Vec<(NaiveDate, String)>,
}

/// Rows ordered by date then ticker where every alpha and the target are present.
fn collect(alphas: &[AlphaSeries], target: &AlphaSeries) -> Result<Raw, DatasetError> {
    for a in alphas {
        if !a.aligned_with(target) {
            return Err(DatasetError::Misaligned(a.id.clone()));
        }
    }
    let mut raw = Raw { x: Vec::new(), y: Vec::new(), keys: Vec::new() };
    let mut row = Vec::with_capacity(alphas.len());
    for t in 0..target.n_dates() {
        'ticker: for i in 0..target.n_tickers() {
            let y = target.get(i, t);
            if is_missing(y) {
                continue;
            }
            row.clear();
            for a in alphas {
                let v = a.get(i, t);
                if is_missing(v) {
                    continue 'ticker;
                }
                row.push(v);
            }
            raw.x.extend_from_slice(&row);
            raw.y.push(y);
            raw.keys.push((target.dates[t], target.tickers[i].clone()));
        }
    }
    Ok(raw)
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = if n > 1.0 { v.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Builds standardized feature matrices. Train statistics are reused for validation.
pub fn build_dataset(
    train_alphas: &[AlphaSeries],
    train_target: &AlphaSeries,
    val_alphas: &[AlphaSeries],
    val_target: &AlphaSeries,
) -> Result<Dataset, DatasetError> {
    let p = train_alphas.len();
    if p == 0 || val_alphas.len() != p {
        return Err(DatasetError::NoAlphas);
    }
    let train = collect(train_alphas, train_target)?;
    let val = collect(val_alphas, val_target)?;
    if train.y.is_empty() {
        return Err(DatasetError::Empty("train"));
    }
    if val.y.is_empty() {
        return Err(DatasetError::Empty("validation"));
    }
    let mut mean = Vec::with_capacity(p);
    let mut std = Vec::with_capacity(p);
    for (j, alpha) in train_alphas.iter().enumerate() {
        let (m, s) = mean_std(train.x.iter().skip(j).step_by(p).copied());
        if !(s > 0.0) || !s.is_finite() {
            return Err(DatasetError::ZeroVariance(alpha.id.clone()));
        }
        mean.push(m);
        std.push(s);
    }
    let (ym, ys) = mean_std(train.y.iter().copied());
    if !(ys > 0.0) {
        return Err(DatasetError::ConstantTarget);
    }
    let features = Standardizer { mean, std };
    let scale_x = |x: Vec<f64>| {
        let data = x.into_iter().enumerate().map(|(k, v)| features.apply(k % p, v)).collect();
        FeatureMatrix::new(p, data)
    };
    let scale_y = |y: Vec<f64>| y.into_iter().map(|v| (v - ym) / ys).collect::<Vec<_>>();
    Ok(Dataset {
        alpha_ids: train_alphas.iter().map(|a| a.id.clone()).collect(),
        x_train: scale_x(train.x),
        y_train: scale_y(train.y),
        x_val: scale_x(val.x),
        y_val: scale_y(val.y),
        features: features.clone(),
        target: (ym, ys),
        train_rows: train.keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{synth::business_days, MISSING};

    fn series(id: &str, nt: usize, nd: usize, f: impl Fn(usize, usize) -> f64) -> AlphaSeries {
        let dates = business_days(NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(), nd);
        let tickers = (0..nt).map(|i| format!("T{i}")).collect();
        let values = (0..nt).flat_map(|i| (0..nd).map(move |t| (i, t))).map(|(i, t)| f(i, t)).collect();
        AlphaSeries::new(id, dates, tickers, values, 0).unwrap()
    }

    #[test]
    fn hand_fixture_row_count() {
        // 2 alphas, 3 tickers, 10 days, one missing alpha cell: 30 - 1 rows.
        let a = series("a", 3, 10, |i, t| if (i, t) == (1, 4) { MISSING } else { (i * 10 + t) as f64 });
        let b = series("b", 3, 10, |i, t| ((i + 1) * (t + 2)) as f64);
        let y = series("y", 3, 10, |i, t| 0.01 * (i as f64 - t as f64));
        let ds = build_dataset(&[a.clone(), b.clone()], &y, &[a, b], &y).unwrap();
        assert_eq!(ds.x_train.n_rows(), 29);
        assert_eq!(ds.train_rows[0].1, "T0");
        assert!(!ds.train_rows.iter().any(|(d, t)| *d == y.dates[4] && t == "T1"));
    }

    #[test]
    fn constant_feature_rejected_by_name() {
        let a = series("flat", 3, 5, |_, _| 1.0);
        let y = series("y", 3, 5, |i, t| (i + t) as f64);
        assert_eq!(
            build_dataset(std::slice::from_ref(&a), &y, std::slice::from_ref(&a), &y).unwrap_err(),
            DatasetError::ZeroVariance("flat".into())
        );
    }

    #[test]
    fn validation_uses_train_statistics() {
        let a = series("a", 2, 6, |i, t| (i + t) as f64);
        let shifted = series("a", 2, 6, |i, t| (i + t) as f64 + 100.0);
        let y = series("y", 2, 6, |i, t| (i * t) as f64);
        let ds = build_dataset(&[a], &y, &[shifted], &y).unwrap();
        let val_mean = ds.x_val.column(0).sum::<f64>() / ds.x_val.n_rows() as f64;
        assert!(val_mean > 10.0, "validation must not be re-centered");
    }
}
