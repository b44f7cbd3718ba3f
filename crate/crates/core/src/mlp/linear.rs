use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{FeatureMatrix, MlpModel};
use crate::eval::{finite, AlphaSeries};
use crate::market::{is_missing, MISSING};

/// One weight per selected alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedAlphaWeights {
    pub alpha_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("feature covariance is singular (condition ratio {0:e})")]
    Singular(f64),
    #[error("need more rows ({rows}) than coefficients ({coefs})")]
    TooFewRows { rows: usize, coefs: usize },
    #[error("{weights} weights for {series} series")]
    Count { weights: usize, series: usize },
    #[error("series {0:?} is not aligned with the first series")]
    Misaligned(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("csv: {0}")]
    CsvIo(#[from] csv::Error),
}

pub const SINGULAR_RATIO: f64 = 1e-10;

/// Least-squares fit (with intercept) of the model's predictions on `x`; the slope
/// of each feature is that alpha's weight.
pub fn extract_weights(
    model: &MlpModel,
    x: &FeatureMatrix,
    alpha_ids: &[String],
) -> Result<CombinedAlphaWeights, WeightError> {
    let preds = model.predict(x);
    let (beta, intercept) = least_squares(x, &preds)?;
    Ok(CombinedAlphaWeights { alpha_ids: alpha_ids.to_vec(), weights: beta, intercept })
}

/// Solves `min ‖[1 X] b - y‖²` by SVD; returns slopes and intercept.
pub fn least_squares(x: &FeatureMatrix, y: &[f64]) -> Result<(Vec<f64>, f64), WeightError> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if n <= p {
        return Err(WeightError::TooFewRows { rows: n, coefs: p + 1 });
    }
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x.row(i)[j - 1] });
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = (s.max(), s.min());
    if !(smax > 0.0) || smin / smax < SINGULAR_RATIO {
        return Err(WeightError::Singular(if smax > 0.0 { smin / smax } else { 0.0 }));
    }
    let b = svd.solve(&DVector::from_column_slice(y), 0.0).map_err(|_| WeightError::Singular(smin / smax))?;
    Ok((b.iter().skip(1).copied().collect(), b[0]))
}

/// Pointwise `Σ w_j · α_j`; missing wherever any component is missing.
pub fn combine(weights: &[f64], series: &[AlphaSeries], id: &str) -> Result<AlphaSeries, WeightError> {
    if weights.len() != series.len() || series.is_empty() {
        return Err(WeightError::Count { weights: weights.len(), series: series.len() });
    }
    let first = &series[0];
    for s in series {
        if !s.aligned_with(first) {
            return Err(WeightError::Misaligned(s.id.clone()));
        }
    }
    let mut out = vec![0.0; first.values().len()];
    for (w, s) in weights.iter().zip(series) {
        for (o, v) in out.iter_mut().zip(s.values()) {
            *o += w * v;
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        if series.iter().any(|s| is_missing(s.values()[k])) {
            *o = MISSING;
        } else {
            *o = finite(*o);
        }
    }
    let warmup = series.iter().map(|s| s.warmup).max().unwrap_or(0);
    Ok(AlphaSeries::new(id, first.dates.clone(), first.tickers.clone(), out, warmup).expect("shape preserved"))
}

impl CombinedAlphaWeights {
    /// CSV `alpha,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), WeightError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "weight"])?;
        for (id, v) in self.alpha_ids.iter().zip(&self.weights) {
            w.write_record([id.as_str(), &format!("{v:?}")])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<CombinedAlphaWeights, WeightError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut ids = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 2 {
                return Err(WeightError::Csv { line, message: "expected alpha,weight".into() });
            }
            let v: f64 = rec[1]
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| WeightError::Csv { line, message: format!("bad weight {:?}", &rec[1]) })?;
            ids.push(rec[0].to_string());
            weights.push(v);
        }
        Ok(CombinedAlphaWeights { alpha_ids: ids, weights, intercept: 0.0 })
    }
}

/// Greedy subset of columns, in order, none of which is explained by the earlier kept
/// ones beyond `1 - tol` of its variance. Columns must be standardized.
pub fn independent_columns(x: &FeatureMatrix, tol: f64) -> Vec<usize> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if n < 2 {
        return Vec::new();
    }
    let corr = |i: usize, j: usize| x.column(i).zip(x.column(j)).map(|(a, b)| a * b).sum::<f64>() / (n - 1) as f64;
    let mut kept: Vec<usize> = Vec::new();
    // Rows of the Cholesky factor of the kept columns' correlation matrix.
    let mut chol: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let mut z = Vec::with_capacity(kept.len());
        for (r, &k) in kept.iter().enumerate() {
            let dot: f64 = (0..r).map(|c| chol[r][c] * z[c]).sum();
            z.push((corr(k, j) - dot) / chol[r][r]);
        }
        let resid = corr(j, j) - z.iter().map(|v| v * v).sum::<f64>();
        if resid > tol {
            z.push(resid.sqrt());
            chol.push(z);
            kept.push(j);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependent_columns_are_dropped() {
        // c = a + b (up to standardization), d is independent of all three.
        let rows: Vec<[f64; 4]> = (0..50)
            .map(|i| {
                let (a, b) = (((i * 7) % 11) as f64, ((i * 5) % 13) as f64);
                [a, b, a + b, ((i * i) % 17) as f64]
            })
            .collect();
        let mut cols = [[0.0; 50]; 4];
        for (i, r) in rows.iter().enumerate() {
            for j in 0..4 {
                cols[j][i] = r[j];
            }
        }
        for c in cols.iter_mut() {
            let m = c.iter().sum::<f64>() / 50.0;
            let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 49.0).sqrt();
            c.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        let data = (0..50).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| cols[j][i]).collect();
        let x = FeatureMatrix::new(4, data);
        assert_eq!(independent_columns(&x, 1e-6), vec![0, 1, 3]);
    }

    #[test]
    fn exact_line_is_recovered() {
        let data: Vec<f64> = (0..20).flat_map(|i| [i as f64, ((i * 7) % 5) as f64]).collect();
        let x = FeatureMatrix::new(2, data);
        let y: Vec<f64> = (0..20).map(|i| 0.5 + 2.0 * x.row(i)[0] - 3.0 * x.row(i)[1]).collect();
        let (b, c) = least_squares(&x, &y).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-10 && (b[1] + 3.0).abs() < 1e-10 && (c - 0.5).abs() < 1e-10);
    }

    #[test]
    fn collinear_features_are_singular() {
        let data: Vec<f64> = (0..10).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let x = FeatureMatrix::new(2, data);
        assert!(matches!(least_squares(&x, &[1.0; 10]), Err(WeightError::Singular(_))));
    }

    #[test]
    fn weights_csv_round_trip() {
        let w = CombinedAlphaWeights {
            alpha_ids: vec!["a,b".into(), "c".into()],
            weights: vec![0.1, -2.5],
            intercept: 0.0,
        };
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert_eq!(CombinedAlphaWeights::read_csv(&buf[..]).unwrap(), w);
    }
}
