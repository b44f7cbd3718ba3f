use std::collections::BTreeMap;

use chrono::NaiveDate;
use log::info;
use thiserror::Error;

use crate::eval::AlphaSeries;
use crate::market::{is_missing, PanelSlice};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    pub k: usize,
    pub n: usize,
    /// Forward-return horizon used for the combined alpha's IC.
    pub horizon: usize,
    /// Proportional cost per side, in basis points of traded notional.
    pub cost_bps: f64,
    /// Annual risk-free rate.
    pub risk_free_rate: f64,
    pub trading_days_per_year: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { k: 13, n: 5, horizon: 1, cost_bps: 0.0, risk_free_rate: 0.0, trading_days_per_year: 252.0 }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.k == 0 || self.n == 0 || self.n > self.k {
            return Err(BacktestError::Config(format!("need 1 <= n <= k, got k={} n={}", self.k, self.n)));
        }
        if !(self.cost_bps >= 0.0 && self.cost_bps < 10_000.0) {
            return Err(BacktestError::Config(format!("cost_bps out of range: {}", self.cost_bps)));
        }
        if !(self.trading_days_per_year > 0.0) || !self.risk_free_rate.is_finite() {
            return Err(BacktestError::Config("bad annualization parameters".into()));
        }
        if self.horizon == 0 {
            return Err(BacktestError::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    fn cost(&self) -> f64 {
        self.cost_bps / 10_000.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BacktestError {
    #[error("invalid backtest config: {0}")]
    Config(String),
    #[error("universe has {tickers} tickers but k = {k}")]
    InsufficientUniverse { tickers: usize, k: usize },
    #[error("alpha series does not match the panel slice")]
    Misaligned,
    #[error("panel has no CLOSE field")]
    NoClose,
    #[error("need at least 2 net-worth points, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeKind {
    Buy,
    Sell,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeEvent {
    pub date: NaiveDate,
    pub kind: TradeKind,
    /// Empty for skip events.
    pub ticker: String,
    pub shares: f64,
    pub price: f64,
    pub cost: f64,
}

/// Portfolio after the day's trades.
#[derive(Debug, Clone, PartialEq)]
pub struct DayState {
    pub date: NaiveDate,
    pub cash: f64,
    /// Ticker index (into the slice) to share count.
    pub holdings: BTreeMap<usize, f64>,
    /// Price used to mark each ticker: today's close or the last one seen.
    pub marks: Vec<f64>,
    /// Value before trading at today's marks.
    pub pre_trade_value: f64,
    pub net_worth: f64,
    pub removals: usize,
    pub additions: usize,
    pub skipped: bool,
}

impl DayState {
    pub fn turnover(&self, k: usize) -> f64 {
        self.removals as f64 / k as f64
    }

    pub fn marked_value(&self) -> f64 {
        self.cash + self.holdings.iter().map(|(&i, &s)| s * self.marks[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRun {
    pub tickers: Vec<String>,
    pub days: Vec<DayState>,
    pub trades: Vec<TradeEvent>,
}

impl BacktestRun {
    pub fn net_worth(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.net_worth).collect()
    }

    pub fn skip_count(&self) -> usize {
        self.days.iter().filter(|d| d.skipped).count()
    }
}

/// Daily top-k / drop-n simulation, trading at each date's close.
///
/// Each date: rank tickers with both an alpha and a close (alpha descending, ticker
/// ascending). Incumbents outside the top k are sold worst-first, at most `n` per day;
/// held names without an alpha rank below every rankable one. Free slots are filled
/// from the best-ranked entrants, and all available cash is split evenly across the
/// names bought. Untouched incumbents keep their shares. The first build may buy up to
/// `k` names. Dates with fewer than `k` rankable tickers hold the portfolio and log a
/// skip.
pub fn run_backtest(
    alpha: &AlphaSeries,
    slice: &PanelSlice<'_>,
    config: &BacktestConfig,
) -> Result<BacktestRun, BacktestError> {
    config.validate()?;
    let tickers = slice.tickers();
    if tickers.len() < config.k {
        return Err(BacktestError::InsufficientUniverse { tickers: tickers.len(), k: config.k });
    }
    if alpha.dates != slice.dates() || alpha.tickers != tickers {
        return Err(BacktestError::Misaligned);
    }
    let close = slice.field_matrix("CLOSE").map_err(|_| BacktestError::NoClose)?;
    let (nt, nd) = (tickers.len(), slice.n_dates());
    let c = config.cost();

    let mut cash = 1.0;
    let mut holdings: BTreeMap<usize, f64> = BTreeMap::new();
    let mut marks = vec![f64::NAN; nt];
    let mut days = Vec::with_capacity(nd);
    let mut trades = Vec::new();

    for t in 0..nd {
        let date = slice.dates()[t];
        for i in 0..nt {
            let p = close[i * nd + t];
            if !is_missing(p) {
                marks[i] = p;
            }
        }
        let value = |cash: f64, h: &BTreeMap<usize, f64>| cash + h.iter().map(|(&i, &s)| s * marks[i]).sum::<f64>();
        let pre_trade_value = value(cash, &holdings);

        let mut rankable: Vec<usize> =
            (0..nt).filter(|&i| !is_missing(alpha.get(i, t)) && !is_missing(close[i * nd + t])).collect();
        if rankable.len() < config.k {
            info!("{date}: {} rankable tickers < k = {}, holding", rankable.len(), config.k);
            trades.push(TradeEvent {
                date,
                kind: TradeKind::Skip,
                ticker: String::new(),
                shares: 0.0,
                price: 0.0,
                cost: 0.0,
            });
            days.push(DayState {
                date,
                cash,
                holdings: holdings.clone(),
                marks: marks.clone(),
                pre_trade_value,
                net_worth: pre_trade_value,
                removals: 0,
                additions: 0,
                skipped: true,
            });
            continue;
        }
        rankable.sort_by(|&a, &b| alpha.get(b, t).total_cmp(&alpha.get(a, t)).then(a.cmp(&b)));
        let mut rank = vec![usize::MAX; nt];
        for (r, &i) in rankable.iter().enumerate() {
            rank[i] = r;
        }
        let in_target = |i: usize| rank[i] < config.k;

        // Worst first: unranked incumbents (by ticker), then by rank descending.
        let mut leaving: Vec<usize> = holdings.keys().copied().filter(|&i| !in_target(i)).collect();
        leaving.sort_by(|&a, &b| rank[b].cmp(&rank[a]).then(a.cmp(&b)));
        leaving.truncate(config.n);

        for &i in &leaving {
            let shares = holdings.remove(&i).expect("incumbent");
            let notional = shares * marks[i];
            cash += notional * (1.0 - c);
            trades.push(TradeEvent {
                date,
                kind: TradeKind::Sell,
                ticker: tickers[i].clone(),
                shares,
                price: marks[i],
                cost: notional * c,
            });
        }
        let free = config.k - holdings.len();
        let entering: Vec<usize> =
            rankable[..config.k].iter().copied().filter(|i| !holdings.contains_key(i)).take(free).collect();
        if !entering.is_empty() {
            let budget = cash / entering.len() as f64;
            for &i in &entering {
                let price = marks[i];
                let shares = budget / (price * (1.0 + c));
                holdings.insert(i, shares);
                trades.push(TradeEvent {
                    date,
                    kind: TradeKind::Buy,
                    ticker: tickers[i].clone(),
                    shares,
                    price,
                    cost: shares * price * c,
                });
            }
            cash = 0.0;
        }
        let net_worth = value(cash, &holdings);
        days.push(DayState {
            date,
            cash,
            holdings: holdings.clone(),
            marks: marks.clone(),
            pre_trade_value,
            net_worth,
            removals: leaving.len(),
            additions: entering.len(),
            skipped: false,
        });
    }
    Ok(BacktestRun { tickers, days, trades })
}
