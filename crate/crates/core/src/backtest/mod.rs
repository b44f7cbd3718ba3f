//! Top-k / drop-n portfolio simulation and performance metrics.

mod engine;
mod metrics;

use std::io::Write;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use engine::{run_backtest, BacktestConfig, BacktestError, BacktestRun, DayState, TradeEvent, TradeKind};
pub use metrics::{compute_metrics, daily_returns, max_drawdown, MetricBlock};

use crate::eval::AlphaSeries;
use crate::market::PanelSlice;

/// Sharpe ratios of `count` portfolios driven by seeded uniform-random alphas.
/// Undefined ratios count as 0.
pub fn random_baseline_sharpes(
    slice: &PanelSlice<'_>,
    config: &BacktestConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, BacktestError> {
    let dates = slice.dates().to_vec();
    let tickers = slice.tickers();
    (0..count)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
            let values = (0..dates.len() * tickers.len()).map(|_| rng.gen::<f64>()).collect();
            let alpha = AlphaSeries::new("random", dates.clone(), tickers.clone(), values, 0).expect("shape");
            let run = run_backtest(&alpha, slice, config)?;
            Ok(compute_metrics(&run.net_worth(), config)?.sharpe.unwrap_or(0.0))
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// CSV `date,net_worth,benchmark_net_worth,turnover,n_holdings`.
pub fn write_report<W: Write>(run: &BacktestRun, benchmark: &[f64], k: usize, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "net_worth", "benchmark_net_worth", "turnover", "n_holdings"])?;
    for (d, b) in run.days.iter().zip(benchmark) {
        w.write_record([
            d.date.format("%Y-%m-%d").to_string(),
            format!("{:?}", d.net_worth),
            format!("{b:?}"),
            format!("{:?}", d.turnover(k)),
            d.holdings.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `date,strategy,benchmark` for plotting.
pub fn write_plot_data<W: Write>(
    dates: &[NaiveDate],
    strategy: &[f64],
    benchmark: &[f64],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "strategy", "benchmark"])?;
    for ((d, s), b) in dates.iter().zip(strategy).zip(benchmark) {
        w.write_record([d.format("%Y-%m-%d").to_string(), format!("{s:?}"), format!("{b:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// One metrics row per named strategy; undefined values are empty.
pub fn write_metrics<W: Write>(rows: &[(&str, MetricBlock)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "cumulative_return",
        "annual_return",
        "sharpe",
        "sortino",
        "calmar",
        "volatility",
        "max_drawdown",
        "mean_ic",
    ])?;
    for (name, m) in rows {
        w.write_record([
            name.to_string(),
            format!("{:?}", m.cumulative_return),
            format!("{:?}", m.annual_return),
            opt(m.sharpe),
            opt(m.sortino),
            opt(m.calmar),
            format!("{:?}", m.volatility),
            format!("{:?}", m.max_drawdown),
            opt(m.mean_ic),
        ])?;
    }
    w.flush()?;
    Ok(())
}
