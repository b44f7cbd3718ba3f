use super::engine::{BacktestConfig, BacktestError};

/// Performance summary of one net-worth path. Ratios are `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricBlock {
    pub cumulative_return: f64,
    pub annual_return: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub calmar: Option<f64>,
    pub volatility: f64,
    pub max_drawdown: f64,
    pub mean_ic: Option<f64>,
}

pub fn daily_returns(nw: &[f64]) -> Vec<f64> {
    nw.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Largest fractional fall from a running peak.
pub fn max_drawdown(nw: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in nw {
        peak = peak.max(v);
        if peak > 0.0 {
            worst = worst.max((peak - v) / peak);
        }
    }
    worst
}

/// Return-based metrics; Sharpe, Sortino and volatility are annualized.
pub fn compute_metrics(nw: &[f64], config: &BacktestConfig) -> Result<MetricBlock, BacktestError> {
    if nw.len() < 2 {
        return Err(BacktestError::TooShort(nw.len()));
    }
    let days = config.trading_days_per_year;
    let r = daily_returns(nw);
    let n = r.len() as f64;
    let rf = config.risk_free_rate / days;
    let mean = r.iter().sum::<f64>() / n;
    let std = if r.len() > 1 { (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let excess = mean - rf;
    let sharpe = (std > 0.0).then(|| excess / std * days.sqrt());
    let downside: Vec<f64> = r.iter().copied().filter(|x| *x < 0.0).collect();
    let sortino = (!downside.is_empty()).then(|| {
        let dd = (downside.iter().map(|x| x * x).sum::<f64>() / downside.len() as f64).sqrt();
        excess / dd * days.sqrt()
    });
    let growth = nw[nw.len() - 1] / nw[0];
    let annual_return = growth.powf(days / n) - 1.0;
    let mdd = max_drawdown(nw);
    Ok(MetricBlock {
        cumulative_return: growth - 1.0,
        annual_return,
        sharpe,
        sortino,
        calmar: (mdd > 0.0).then(|| annual_return / mdd),
        volatility: std * days.sqrt(),
        max_drawdown: mdd,
        mean_ic: None,
    })
}
