//! Aligned (field × ticker × date) market panels.
//!
//! A [`MarketPanel`] is the single source of truth for every downstream stage.
//! Missing cells are stored as `NaN`; see [`MISSING`] and [`is_missing`].

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

/// Marker stored in every cell without a usable value.
pub const MISSING: f64 = f64::NAN;

/// Non-finite values are treated as missing everywhere in the crate.
#[inline]
pub fn is_missing(x: f64) -> bool {
    !x.is_finite()
}

/// Price fields checked by the OHLC consistency rule.
pub const PRICE_FIELDS: [&str; 5] = ["OPEN", "HIGH", "LOW", "CLOSE", "VWAP"];

/// Fields a plain OHLCV feed (and [`super::synth`]) supplies.
pub const BASE_FIELDS: [&str; 6] = ["OPEN", "HIGH", "LOW", "CLOSE", "VOLUME", "VWAP"];

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("dates must be strictly increasing (offending date {0})")]
    UnsortedDates(NaiveDate),
    #[error("tickers must be sorted and unique (offending ticker {0:?})")]
    UnsortedTickers(String),
    #[error("field {field:?} has {got} values, expected {expected}")]
    Shape { field: String, got: usize, expected: usize },
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("unknown ticker {0:?}")]
    UnknownTicker(String),
    #[error("panel has no dates")]
    Empty,
    #[error("split boundary {0} is outside the panel range")]
    BoundaryOutOfRange(NaiveDate),
    #[error("split boundaries must be ordered: {0} >= {1}")]
    BoundaryOrder(NaiveDate, NaiveDate),
    #[error("split would produce an empty {0} slice")]
    EmptySlice(&'static str),
    #[error("slice window {start}..{end} exceeds panel length {len}")]
    Window { start: usize, end: usize, len: usize },
}

/// Dense daily panel. Immutable after construction.
#[derive(Clone)]
pub struct MarketPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    fields: BTreeMap<String, Vec<f64>>,
}

impl fmt::Debug for MarketPanel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarketPanel")
            .field("dates", &self.dates.len())
            .field("tickers", &self.tickers)
            .field("fields", &self.fields.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Bitwise-aware equality: two missing cells compare equal.
impl PartialEq for MarketPanel {
    fn eq(&self, other: &Self) -> bool {
        self.dates == other.dates
            && self.tickers == other.tickers
            && self.fields.len() == other.fields.len()
            && self.fields.iter().zip(other.fields.iter()).all(|((ka, va), (kb, vb))| {
                ka == kb
                    && va
                        .iter()
                        .zip(vb.iter())
                        .all(|(a, b)| (is_missing(*a) && is_missing(*b)) || a.to_bits() == b.to_bits())
            })
    }
}

impl MarketPanel {
    /// Builds a panel from per-field buffers laid out `[ticker][date]`.
    ///
    /// Field names are upper-cased. Non-finite values are normalised to [`MISSING`].
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        fields: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, PanelError> {
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(PanelError::UnsortedDates(w[1]));
        }
        if let Some(w) = tickers.windows(2).find(|w| w[0] >= w[1]) {
            return Err(PanelError::UnsortedTickers(w[1].clone()));
        }
        let expected = dates.len() * tickers.len();
        let mut normalised = BTreeMap::new();
        for (name, mut values) in fields {
            if values.len() != expected {
                return Err(PanelError::Shape { field: name, got: values.len(), expected });
            }
            for v in values.iter_mut() {
                if is_missing(*v) {
                    *v = MISSING;
                }
            }
            normalised.insert(name.to_ascii_uppercase(), values);
        }
        Ok(Self { dates, tickers, fields: normalised })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.fields.contains_key(name)
    }

    /// Whole field buffer, `[ticker][date]` row-major.
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.get(name).map(Vec::as_slice)
    }

    /// One ticker's full history for a field.
    pub fn series(&self, field: &str, ticker: usize) -> Option<&[f64]> {
        let n = self.dates.len();
        self.fields.get(field).map(|v| &v[ticker * n..(ticker + 1) * n])
    }

    pub fn value(&self, field: &str, ticker: usize, date: usize) -> Option<f64> {
        self.fields.get(field).map(|v| v[ticker * self.dates.len() + date])
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.binary_search_by(|t| t.as_str().cmp(ticker)).ok()
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// The whole panel as a slice.
    pub fn full(&self) -> PanelSlice<'_> {
        PanelSlice { panel: self, start: 0, end: self.dates.len(), tickers: (0..self.tickers.len()).collect() }
    }

    /// A contiguous date window `[start, end)` over all tickers.
    pub fn window(&self, start: usize, end: usize) -> Result<PanelSlice<'_>, PanelError> {
        if start > end || end > self.dates.len() {
            return Err(PanelError::Window { start, end, len: self.dates.len() });
        }
        Ok(PanelSlice { panel: self, start, end, tickers: (0..self.tickers.len()).collect() })
    }

    /// Splits the panel into train / validation / test slices.
    ///
    /// `validation_start` is the first validation date and `test_start` the first test
    /// date; both must be panel dates (or fall inside the panel range, in which case the
    /// next trading date is used).
    pub fn split(
        &self,
        validation_start: NaiveDate,
        test_start: NaiveDate,
    ) -> Result<(PanelSlice<'_>, PanelSlice<'_>, PanelSlice<'_>), PanelError> {
        let (first, last) = match (self.dates.first(), self.dates.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(PanelError::Empty),
        };
        for b in [validation_start, test_start] {
            if b < first || b > last {
                return Err(PanelError::BoundaryOutOfRange(b));
            }
        }
        if validation_start > test_start {
            return Err(PanelError::BoundaryOrder(validation_start, test_start));
        }
        let v = self.dates.partition_point(|d| *d < validation_start);
        let t = self.dates.partition_point(|d| *d < test_start);
        if v == 0 {
            return Err(PanelError::EmptySlice("train"));
        }
        if v == t {
            return Err(PanelError::EmptySlice("validation"));
        }
        let n = self.dates.len();
        Ok((self.window(0, v)?, self.window(v, t)?, self.window(t, n)?))
    }

    /// Splits by date indices: `[0, a)`, `[a, b)`, `[b, n)`.
    pub fn split_at(&self, a: usize, b: usize) -> Result<(PanelSlice<'_>, PanelSlice<'_>, PanelSlice<'_>), PanelError> {
        let n = self.dates.len();
        if a == 0 || a > n || b > n {
            return Err(PanelError::Window { start: a, end: b, len: n });
        }
        if a >= b {
            return Err(PanelError::EmptySlice("validation"));
        }
        if b == n {
            return Err(PanelError::EmptySlice("test"));
        }
        Ok((self.window(0, a)?, self.window(a, b)?, self.window(b, n)?))
    }

    /// Equal-weight, daily-rebalanced index of CLOSE starting at 1.0.
    ///
    /// Each day's index return is the mean simple return over tickers with both closes
    /// present; days with none carry the level forward.
    pub fn equal_weight_index(&self) -> Option<Vec<f64>> {
        let close = self.field("CLOSE")?;
        let n = self.dates.len();
        let mut out = Vec::with_capacity(n);
        let mut level = 1.0;
        for t in 0..n {
            if t > 0 {
                let mut sum = 0.0;
                let mut count = 0usize;
                for i in 0..self.tickers.len() {
                    let (p0, p1) = (close[i * n + t - 1], close[i * n + t]);
                    if !is_missing(p0) && !is_missing(p1) && p0 != 0.0 {
                        sum += p1 / p0 - 1.0;
                        count += 1;
                    }
                }
                if count > 0 {
                    level *= 1.0 + sum / count as f64;
                }
            }
            out.push(level);
        }
        Some(out)
    }
}

/// A date window and ticker subset of a panel.
#[derive(Debug, Clone)]
pub struct PanelSlice<'a> {
    panel: &'a MarketPanel,
    start: usize,
    end: usize,
    tickers: Vec<usize>,
}

impl<'a> PanelSlice<'a> {
    pub fn panel(&self) -> &'a MarketPanel {
        self.panel
    }

    /// Restricts the slice to a subset of tickers (by name).
    pub fn with_tickers(mut self, names: &[&str]) -> Result<Self, PanelError> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let i = self.panel.ticker_index(name).ok_or_else(|| PanelError::UnknownTicker(name.to_string()))?;
            idx.push(i);
        }
        idx.sort_unstable();
        idx.dedup();
        self.tickers = idx;
        Ok(self)
    }

    pub fn date_range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn dates(&self) -> &'a [NaiveDate] {
        &self.panel.dates[self.start..self.end]
    }

    pub fn n_dates(&self) -> usize {
        self.end - self.start
    }

    pub fn ticker_indices(&self) -> &[usize] {
        &self.tickers
    }

    pub fn tickers(&self) -> Vec<String> {
        self.tickers.iter().map(|&i| self.panel.tickers[i].clone()).collect()
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.panel.has_field(name)
    }

    /// Copies a field into a dense `[ticker][date]` buffer covering the slice.
    pub fn field_matrix(&self, name: &str) -> Result<Vec<f64>, PanelError> {
        let n = self.panel.n_dates();
        let src = self.panel.field(name).ok_or_else(|| PanelError::UnknownField(name.into()))?;
        let mut out = Vec::with_capacity(self.tickers.len() * self.n_dates());
        for &i in &self.tickers {
            out.extend_from_slice(&src[i * n + self.start..i * n + self.end]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn panel(n: usize) -> MarketPanel {
        let dates: Vec<_> = (0..n).map(|i| d(2020, 1, 1) + chrono::Days::new(i as u64)).collect();
        let mut fields = BTreeMap::new();
        fields.insert("close".into(), (0..2 * n).map(|i| 100.0 + i as f64).collect());
        MarketPanel::new(dates, vec!["A".into(), "B".into()], fields).unwrap()
    }

    #[test]
    fn split_60_20_20() {
        let p = panel(100);
        let (tr, va, te) = p.split(p.dates()[60], p.dates()[80]).unwrap();
        assert_eq!((tr.n_dates(), va.n_dates(), te.n_dates()), (60, 20, 20));
        assert_eq!(tr.date_range().end, va.date_range().start);
        assert_eq!(va.date_range().end, te.date_range().start);
    }

    #[test]
    fn equal_boundaries_reject_empty_validation() {
        let p = panel(100);
        let b = p.dates()[50];
        assert!(matches!(p.split(b, b), Err(PanelError::EmptySlice("validation"))));
    }

    #[test]
    fn boundary_outside_range() {
        let p = panel(10);
        assert!(matches!(p.split(d(2019, 1, 1), p.dates()[5]), Err(PanelError::BoundaryOutOfRange(_))));
    }

    #[test]
    fn rejects_unsorted_dates_and_bad_shapes() {
        let mut fields = BTreeMap::new();
        fields.insert("CLOSE".into(), vec![1.0, 2.0]);
        assert!(MarketPanel::new(vec![d(2020, 1, 2), d(2020, 1, 1)], vec!["A".into()], fields.clone()).is_err());
        assert!(MarketPanel::new(vec![d(2020, 1, 1)], vec!["A".into()], fields).is_err());
    }

    #[test]
    fn field_names_are_uppercased_and_infinities_missing() {
        let mut fields = BTreeMap::new();
        fields.insert("Close".into(), vec![f64::INFINITY, 2.0]);
        let p = MarketPanel::new(vec![d(2020, 1, 1), d(2020, 1, 2)], vec!["A".into()], fields).unwrap();
        assert!(p.has_field("CLOSE"));
        assert!(is_missing(p.value("CLOSE", 0, 0).unwrap()));
    }

    #[test]
    fn equal_weight_index_averages_returns() {
        let dates = vec![d(2020, 1, 1), d(2020, 1, 2)];
        let mut fields = BTreeMap::new();
        fields.insert("CLOSE".into(), vec![100.0, 110.0, 50.0, 45.0]);
        let p = MarketPanel::new(dates, vec!["A".into(), "B".into()], fields).unwrap();
        let idx = p.equal_weight_index().unwrap();
        assert_eq!(idx[0], 1.0);
        assert!((idx[1] - 1.0).abs() < 1e-15);
    }
}
