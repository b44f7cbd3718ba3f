use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use thiserror::Error;

use crate::market::{is_missing, MISSING};

/// A (ticker × date) matrix of alpha values with missing markers.
#[derive(Debug, Clone)]
pub struct AlphaSeries {
    pub id: String,
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// `[ticker][date]` row-major.
    values: Vec<f64>,
    /// Leading dates that are missing by construction.
    pub warmup: usize,
}

impl PartialEq for AlphaSeries {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.dates == other.dates
            && self.tickers == other.tickers
            && self.warmup == other.warmup
            && self.bitwise_eq_values(other)
    }
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series shape mismatch: {0}")]
    Shape(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no rows")]
    Empty,
}

impl AlphaSeries {
    pub fn new(
        id: impl Into<String>,
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        mut values: Vec<f64>,
        warmup: usize,
    ) -> Result<Self, SeriesError> {
        if values.len() != dates.len() * tickers.len() {
            return Err(SeriesError::Shape(format!(
                "{} values for {} tickers x {} dates",
                values.len(),
                tickers.len(),
                dates.len()
            )));
        }
        for v in values.iter_mut() {
            if is_missing(*v) {
                *v = MISSING;
            }
        }
        Ok(Self { id: id.into(), dates, tickers, values, warmup })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, ticker: usize, date: usize) -> f64 {
        self.values[ticker * self.dates.len() + date]
    }

    pub fn row(&self, ticker: usize) -> &[f64] {
        let n = self.dates.len();
        &self.values[ticker * n..(ticker + 1) * n]
    }

    /// Values of every ticker on one date.
    pub fn column(&self, date: usize) -> Vec<f64> {
        (0..self.tickers.len()).map(|i| self.get(i, date)).collect()
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Same shape (dates and tickers) as `other`.
    pub fn aligned_with(&self, other: &AlphaSeries) -> bool {
        self.dates == other.dates && self.tickers == other.tickers
    }

    /// The sub-series covering `dates` (which must all be present and contiguous).
    pub fn restrict(&self, dates: &[NaiveDate]) -> Result<AlphaSeries, SeriesError> {
        let Some(first) = dates.first() else {
            return Err(SeriesError::Empty);
        };
        let start = self.date_index(*first).ok_or_else(|| SeriesError::Shape(format!("date {first} not in series")))?;
        let end = start + dates.len();
        if end > self.dates.len() || self.dates[start..end] != *dates {
            return Err(SeriesError::Shape("requested dates are not a contiguous window of the series".into()));
        }
        let n = self.dates.len();
        let mut values = Vec::with_capacity(self.tickers.len() * dates.len());
        for i in 0..self.tickers.len() {
            values.extend_from_slice(&self.values[i * n + start..i * n + end]);
        }
        Ok(AlphaSeries {
            id: self.id.clone(),
            dates: dates.to_vec(),
            tickers: self.tickers.clone(),
            values,
            warmup: self.warmup.saturating_sub(start),
        })
    }

    /// Applies `f` to every non-missing cell.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> AlphaSeries {
        let values = self.values.iter().map(|&v| if is_missing(v) { MISSING } else { finite(f(v)) }).collect();
        AlphaSeries { values, ..self.clone() }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub(crate) fn bitwise_eq_values(&self, other: &AlphaSeries) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (is_missing(*a) && is_missing(*b)) || a.to_bits() == b.to_bits())
    }

    /// CSV dump `date,ticker,value`, sorted by (date, ticker); missing values are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SeriesError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "ticker", "value"])?;
        for (t, date) in self.dates.iter().enumerate() {
            let d = date.format("%Y-%m-%d").to_string();
            for (i, ticker) in self.tickers.iter().enumerate() {
                let v = self.get(i, t);
                let value = if is_missing(v) { String::new() } else { format!("{v}") };
                w.write_record([d.as_str(), ticker, &value])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the `date,ticker,value` format back. Absent (date, ticker) pairs are missing.
    pub fn read_csv<R: Read>(id: &str, input: R) -> Result<AlphaSeries, SeriesError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        if header != ["date", "ticker", "value"] {
            return Err(SeriesError::Row { line: 1, message: format!("bad header {:?}", header.join(",")) });
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 3 {
                return Err(SeriesError::Row { line, message: "expected 3 columns".into() });
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| SeriesError::Row { line, message: format!("bad date: {e}") })?;
            let value = if rec[2].is_empty() {
                MISSING
            } else {
                rec[2]
                    .parse::<f64>()
                    .map_err(|_| SeriesError::Row { line, message: format!("bad value {:?}", &rec[2]) })?
            };
            if rec[1].is_empty() || !seen.insert((date, rec[1].to_string())) {
                return Err(SeriesError::Row { line, message: format!("empty or duplicate ticker {:?}", &rec[1]) });
            }
            rows.push((date, rec[1].to_string(), value));
        }
        if rows.is_empty() {
            return Err(SeriesError::Empty);
        }
        let dates: Vec<NaiveDate> = rows.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
        let tickers: Vec<String> = rows.iter().map(|r| r.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let di: HashMap<_, _> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let ti: HashMap<_, _> = tickers.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let n = dates.len();
        let mut values = vec![MISSING; n * tickers.len()];
        for (d, t, v) in rows {
            values[ti[&t] * n + di[&d]] = v;
        }
        AlphaSeries::new(id, dates, tickers, values, 0)
    }
}

#[inline]
pub(crate) fn finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        MISSING
    }
}
