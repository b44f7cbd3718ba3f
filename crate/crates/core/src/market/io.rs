//! CSV ingestion and dumping of panels.
//!
//! Two input layouts are accepted:
//!
//! * long form, header `date,ticker,field,value`;
//! * wide form, header `date,ticker,open,high,low,close,volume,vwap[,extra…]`.
//!
//! The dump format is always long form, sorted by (field, ticker, date), with an empty
//! value for missing cells. Values are written with the shortest representation that
//! parses back to the same `f64`, so `read(write(p)) == p` holds bit for bit.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use super::panel::{is_missing, MarketPanel, PanelError, BASE_FIELDS, MISSING};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("line {line}: duplicate entry for ticker {ticker:?} on {date}{}", field.as_ref().map(|f| format!(" field {f}")).unwrap_or_default())]
    Duplicate { line: u64, ticker: String, date: NaiveDate, field: Option<String> },
    #[error("no data rows")]
    NoRows,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Maps source column / field names onto canonical panel fields.
#[derive(Debug, Clone)]
pub struct PanelSchema {
    /// Lower-cased source name → canonical field name.
    pub aliases: HashMap<String, String>,
    /// Fields forward-filled per ticker between report dates.
    pub forward_fill: BTreeSet<String>,
}

/// Fundamental and macro fields referenced by the builtin catalog. They arrive on report
/// dates only and are carried forward at ingestion.
pub const FUNDAMENTAL_FIELDS: &[&str] = &[
    "EPS",
    "BOOK_VALUE",
    "DIVIDENDS",
    "SALES",
    "OPERATING_CASH_FLOW",
    "MARKET_CAP",
    "SHARES_OUTSTANDING",
    "TOTAL_DEBT",
    "TOTAL_EQUITY",
    "NET_INCOME",
    "EQUITY",
    "TOTAL_ASSETS",
    "GROSS_PROFIT",
    "REVENUE",
    "ENTERPRISE_VALUE",
    "EBITDA",
    "OPERATING_INCOME",
    "EBIT",
    "INTEREST_EXPENSE",
    "DIO",
    "DSO",
    "DPO",
    "CASH_FLOW",
    "ASSETS",
    "RETAINED_EARNINGS",
    "GDP",
    "CPI",
    "UNEMPLOYMENT_RATE",
    "INTEREST_RATE",
    "IPI",
    "RETAIL_SALES",
    "HOUSING_STARTS",
    "CCI",
    "EXPORTS",
    "IMPORTS",
    "FX_RESERVES",
];

impl Default for PanelSchema {
    fn default() -> Self {
        let aliases = [("adj_close", "CLOSE"), ("vol", "VOLUME"), ("amount", "AMOUNT")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        Self { aliases, forward_fill: FUNDAMENTAL_FIELDS.iter().map(|s| s.to_string()).collect() }
    }
}

impl PanelSchema {
    /// No aliases and no forward filling; the file is taken literally.
    pub fn literal() -> Self {
        Self { aliases: HashMap::new(), forward_fill: BTreeSet::new() }
    }

    fn canonical(&self, raw: &str) -> String {
        let key = raw.trim().to_ascii_lowercase();
        match self.aliases.get(&key) {
            Some(c) => c.to_ascii_uppercase(),
            None => key.to_ascii_uppercase(),
        }
    }
}

/// A row rejected by the price consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelWarning {
    pub date: NaiveDate,
    pub ticker: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadedPanel {
    pub panel: MarketPanel,
    pub warnings: Vec<PanelWarning>,
}

pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<LoadedPanel, LoadError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LoadError::Open { path: path.display().to_string(), source })?;
    read_panel(file, schema)
}

/// Parses a panel from any reader. Layout is detected from the header.
pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<LoadedPanel, LoadError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let cells = if header == ["date", "ticker", "field", "value"] {
        read_long(&mut rdr, schema)?
    } else {
        read_wide(&mut rdr, &header, schema)?
    };
    assemble(cells, schema)
}

type Cell = (NaiveDate, String, String, f64);

fn parse_date(s: &str, line: u64) -> Result<NaiveDate, LoadError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| LoadError::Row { line, message: format!("bad date {s:?}: {e}") })
}

fn parse_value(s: &str, line: u64) -> Result<f64, LoadError> {
    if s.is_empty() {
        return Ok(MISSING);
    }
    s.parse::<f64>().map_err(|_| LoadError::Row { line, message: format!("bad value {s:?}") })
}

fn read_long<R: Read>(rdr: &mut csv::Reader<R>, schema: &PanelSchema) -> Result<Vec<Cell>, LoadError> {
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(LoadError::Row { line, message: format!("expected 4 columns, found {}", rec.len()) });
        }
        let date = parse_date(&rec[0], line)?;
        let ticker = rec[1].to_string();
        if ticker.is_empty() {
            return Err(LoadError::Row { line, message: "empty ticker".into() });
        }
        let field = schema.canonical(&rec[2]);
        if field.is_empty() {
            return Err(LoadError::Row { line, message: "empty field name".into() });
        }
        let value = parse_value(&rec[3], line)?;
        if !seen.insert((date, ticker.clone(), field.clone())) {
            return Err(LoadError::Duplicate { line, ticker, date, field: Some(field) });
        }
        cells.push((date, ticker, field, value));
    }
    Ok(cells)
}

fn read_wide<R: Read>(
    rdr: &mut csv::Reader<R>,
    header: &[String],
    schema: &PanelSchema,
) -> Result<Vec<Cell>, LoadError> {
    if header.len() < 3 || header[0] != "date" || header[1] != "ticker" {
        return Err(LoadError::Header(format!(
            "expected `date,ticker,field,value` or `date,ticker,<fields…>`, got `{}`",
            header.join(",")
        )));
    }
    let fields: Vec<String> = header[2..].iter().map(|h| schema.canonical(h)).collect();
    let mut uniq = HashSet::new();
    for f in &fields {
        if f.is_empty() || !uniq.insert(f) {
            return Err(LoadError::Header(format!("empty or repeated column {f:?}")));
        }
    }
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(LoadError::Row {
                line,
                message: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        let date = parse_date(&rec[0], line)?;
        let ticker = rec[1].to_string();
        if ticker.is_empty() {
            return Err(LoadError::Row { line, message: "empty ticker".into() });
        }
        if !seen.insert((date, ticker.clone())) {
            return Err(LoadError::Duplicate { line, ticker, date, field: None });
        }
        for (j, f) in fields.iter().enumerate() {
            cells.push((date, ticker.clone(), f.clone(), parse_value(&rec[j + 2], line)?));
        }
    }
    Ok(cells)
}

fn assemble(cells: Vec<Cell>, schema: &PanelSchema) -> Result<LoadedPanel, LoadError> {
    if cells.is_empty() {
        return Err(LoadError::NoRows);
    }
    let dates: Vec<NaiveDate> = cells.iter().map(|c| c.0).collect::<BTreeSet<_>>().into_iter().collect();
    let tickers: Vec<String> = cells.iter().map(|c| c.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let n = dates.len();
    let date_ix: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let ticker_ix: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut fields: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (date, ticker, field, value) in &cells {
        let buf = fields.entry(field.clone()).or_insert_with(|| vec![MISSING; n * tickers.len()]);
        buf[ticker_ix[ticker.as_str()] * n + date_ix[date]] = *value;
    }

    for (name, buf) in fields.iter_mut() {
        if schema.forward_fill.contains(name) {
            for row in buf.chunks_mut(n) {
                let mut last = MISSING;
                for v in row.iter_mut() {
                    if is_missing(*v) {
                        *v = last;
                    } else {
                        last = *v;
                    }
                }
            }
        }
    }

    let warnings = enforce_price_rules(&mut fields, &dates, &tickers);
    let panel = MarketPanel::new(dates, tickers, fields)?;
    Ok(LoadedPanel { panel, warnings })
}

/// Marks rows violating OHLC consistency or a negative volume as missing across the
/// base fields and reports them.
fn enforce_price_rules(
    fields: &mut BTreeMap<String, Vec<f64>>,
    dates: &[NaiveDate],
    tickers: &[String],
) -> Vec<PanelWarning> {
    let n = dates.len();
    let get = |fields: &BTreeMap<String, Vec<f64>>, name: &str, k: usize| {
        fields.get(name).map(|v| v[k]).filter(|x| !is_missing(*x))
    };
    let mut warnings = Vec::new();
    for (i, ticker) in tickers.iter().enumerate() {
        for (t, date) in dates.iter().enumerate() {
            let k = i * n + t;
            let open = get(fields, "OPEN", k);
            let high = get(fields, "HIGH", k);
            let low = get(fields, "LOW", k);
            let close = get(fields, "CLOSE", k);
            let volume = get(fields, "VOLUME", k);
            let body: Vec<f64> = [open, close].into_iter().flatten().collect();
            let mut reasons = Vec::new();
            if let (Some(h), Some(l)) = (high, low) {
                if h < l {
                    reasons.push(format!("HIGH {h} < LOW {l}"));
                }
            }
            if let Some(l) = low {
                if body.iter().any(|&b| l > b) {
                    reasons.push(format!("LOW {l} above OPEN/CLOSE"));
                }
            }
            if let Some(h) = high {
                if body.iter().any(|&b| h < b) {
                    reasons.push(format!("HIGH {h} below OPEN/CLOSE"));
                }
            }
            if let Some(v) = volume {
                if v < 0.0 {
                    reasons.push(format!("VOLUME {v} negative"));
                }
            }
            if !reasons.is_empty() {
                for name in BASE_FIELDS {
                    if let Some(buf) = fields.get_mut(name) {
                        buf[k] = MISSING;
                    }
                }
                warnings.push(PanelWarning { date: *date, ticker: ticker.clone(), reason: reasons.join("; ") });
            }
        }
    }
    warnings
}

/// Writes the long-form dump, sorted by (field, ticker, date).
pub fn write_panel<W: Write>(panel: &MarketPanel, out: W) -> Result<(), LoadError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "ticker", "field", "value"])?;
    for field in panel.field_names() {
        let buf = panel.field(field).expect("listed field");
        for (i, ticker) in panel.tickers().iter().enumerate() {
            for (t, date) in panel.dates().iter().enumerate() {
                let v = buf[i * panel.n_dates() + t];
                let value = if is_missing(v) { String::new() } else { format!("{v}") };
                w.write_record([date.format("%Y-%m-%d").to_string().as_str(), ticker, field, &value])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(panel: &MarketPanel, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let file = File::create(path.as_ref())?;
    write_panel(panel, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedPanel, LoadError> {
        read_panel(text.as_bytes(), &PanelSchema::default())
    }

    #[test]
    fn wide_two_tickers_three_dates() {
        let csv = "date,ticker,open,high,low,close,volume,vwap\n\
                   2024-01-02,AAA,10,11,9,10.5,100,10.2\n\
                   2024-01-02,BBB,20,21,19,20.5,200,20.1\n\
                   2024-01-03,AAA,10.5,12,10,11,150,11\n\
                   2024-01-03,BBB,20.5,22,20,21,250,21\n\
                   2024-01-04,AAA,11,11.5,10.5,11.2,120,11.1\n\
                   2024-01-04,BBB,21,21.5,20.5,21.3,180,21.1\n";
        let p = load(csv).unwrap();
        assert!(p.warnings.is_empty());
        assert_eq!(p.panel.n_dates(), 3);
        assert_eq!(p.panel.n_tickers(), 2);
        assert_eq!(p.panel.value("CLOSE", 1, 2), Some(21.3));
    }

    #[test]
    fn missing_row_becomes_missing_marker() {
        let csv = "date,ticker,close\n2024-01-02,A,1\n2024-01-02,B,2\n2024-01-03,A,3\n";
        let p = load(csv).unwrap().panel;
        assert_eq!(p.value("CLOSE", 0, 1), Some(3.0));
        assert_eq!(p.value("CLOSE", 1, 0), Some(2.0));
        assert!(is_missing(p.value("CLOSE", 1, 1).unwrap()));
    }

    #[test]
    fn high_below_low_is_flagged_and_blanked() {
        // 5-row fixture; row 3 (B on 01-03) has HIGH < LOW.
        let csv = "date,ticker,open,high,low,close,volume\n\
                   2024-01-02,A,10,11,9,10,1\n\
                   2024-01-02,B,10,11,9,10,1\n\
                   2024-01-03,A,10,11,9,10,1\n\
                   2024-01-03,B,10,8,9,10,1\n\
                   2024-01-04,A,10,11,9,10,1\n";
        let p = load(csv).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.warnings[0].ticker, "B");
        assert_eq!(p.warnings[0].date, NaiveDate::from_ymd_opt(2024, 1, 3).unwrap());
        for f in ["OPEN", "HIGH", "LOW", "CLOSE", "VOLUME"] {
            assert!(is_missing(p.panel.value(f, 1, 1).unwrap()), "{f}");
            assert_eq!(p.panel.value(f, 0, 1).map(is_missing), Some(false));
        }
        // untouched neighbours
        assert_eq!(p.panel.value("HIGH", 1, 0), Some(11.0));
    }

    #[test]
    fn negative_volume_is_flagged() {
        let csv = "date,ticker,close,volume\n2024-01-02,A,1,-5\n";
        let p = load(csv).unwrap();
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn unparsable_row_reports_line() {
        let csv = "date,ticker,field,value\n2024-01-02,A,CLOSE,1\n2024-01-03,A,CLOSE,abc\n";
        match load(csv) {
            Err(LoadError::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ticker_date_rejected() {
        let csv = "date,ticker,close\n2024-01-02,A,1\n2024-01-02,A,2\n";
        assert!(matches!(load(csv), Err(LoadError::Duplicate { line: 3, .. })));
        let long = "date,ticker,field,value\n2024-01-02,A,CLOSE,1\n2024-01-02,A,close,2\n";
        assert!(matches!(load(long), Err(LoadError::Duplicate { .. })));
    }

    #[test]
    fn fundamentals_are_forward_filled() {
        let csv = "date,ticker,field,value\n\
                   2024-01-02,A,CLOSE,1\n2024-01-03,A,CLOSE,1\n2024-01-04,A,CLOSE,1\n\
                   2024-01-03,A,EPS,0.5\n";
        let p = load(csv).unwrap().panel;
        let eps = p.series("EPS", 0).unwrap();
        assert!(is_missing(eps[0]));
        assert_eq!(&eps[1..], &[0.5, 0.5]);
    }

    #[test]
    fn dump_is_sorted_and_round_trips() {
        let csv = "date,ticker,close,open\n2024-01-03,B,2,2\n2024-01-02,A,1.1,1\n2024-01-02,B,,2\n";
        let p = load(csv).unwrap().panel;
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "date,ticker,field,value");
        assert_eq!(lines[1], "2024-01-02,A,CLOSE,1.1");
        assert_eq!(lines[4], "2024-01-03,B,CLOSE,2");
        assert_eq!(lines[5], "2024-01-02,A,OPEN,1");
        let back = read_panel(buf.as_slice(), &PanelSchema::default()).unwrap().panel;
        assert_eq!(back, p);
    }

    #[test]
    fn empty_input_errors() {
        assert!(matches!(load("date,ticker,field,value\n"), Err(LoadError::NoRows)));
        assert!(matches!(load("foo,bar\n1,2\n"), Err(LoadError::Header(_))));
    }
}
