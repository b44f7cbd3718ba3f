//! Seeded synthetic panels with an optional planted predictive field.
//!
//! Prices follow a random walk driven by a common market factor plus idiosyncratic
//! noise. The market factor drifts through alternating bull / sideways / bear
//! segments so regime classification has something to find. When a [`SignalSpec`] is
//! given, the named field at date `t` is correlated with every ticker's idiosyncratic
//! return from `t` to `t + 1` at the requested strength, so its cross-sectional IC
//! against one-day forward returns has the requested expectation.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::panel::{MarketPanel, PanelError};
use crate::agents::regime::{Regime, RegimeParams};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("signal correlation must lie strictly inside (-1, 1), got {0}")]
    Correlation(f64),
    #[error("need at least one ticker")]
    NoTickers,
    #[error("need at least two days, got {0}")]
    TooFewDays(usize),
    #[error("signal field {0:?} collides with a price field")]
    FieldName(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// A field planted to predict next-day returns.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub field: String,
    pub correlation: f64,
    /// When set, the field is predictive only on dates the equal-weight benchmark is in
    /// this regime (classified with `regime_params`), and pure noise otherwise.
    pub active_regime: Option<Regime>,
    pub regime_params: RegimeParams,
}

impl SignalSpec {
    pub fn new(correlation: f64) -> Self {
        Self { field: "SIGNAL".into(), correlation, active_regime: None, regime_params: RegimeParams::default() }
    }

    pub fn only_in(mut self, regime: Regime) -> Self {
        self.active_regime = Some(regime);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_tickers: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    /// Daily idiosyncratic return volatility.
    pub idio_vol: f64,
    /// Daily market-factor volatility.
    pub market_vol: f64,
    /// Absolute daily drift of the market factor in bull / bear segments.
    pub regime_drift: f64,
    /// Segment lengths are drawn uniformly from this inclusive range.
    pub segment_days: (usize, usize),
    pub signal: Option<SignalSpec>,
}

impl SynthSpec {
    pub fn new(seed: u64, n_tickers: usize, n_days: usize) -> Self {
        Self {
            seed,
            n_tickers,
            n_days,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            idio_vol: 0.02,
            market_vol: 0.008,
            regime_drift: 0.003,
            segment_days: (60, 120),
            signal: None,
        }
    }

    pub fn with_signal(mut self, signal: SignalSpec) -> Self {
        self.signal = Some(signal);
        self
    }

    pub fn generate(&self) -> Result<MarketPanel, SynthError> {
        generate(self)
    }
}

/// Convenience wrapper over [`SynthSpec`] with default dynamics.
pub fn synthesize_panel(
    seed: u64,
    n_tickers: usize,
    n_days: usize,
    signal: Option<SignalSpec>,
) -> Result<MarketPanel, SynthError> {
    let mut spec = SynthSpec::new(seed, n_tickers, n_days);
    spec.signal = signal;
    spec.generate()
}

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn generate(spec: &SynthSpec) -> Result<MarketPanel, SynthError> {
    if spec.n_tickers == 0 {
        return Err(SynthError::NoTickers);
    }
    if spec.n_days < 2 {
        return Err(SynthError::TooFewDays(spec.n_days));
    }
    if let Some(sig) = &spec.signal {
        if !(sig.correlation > -1.0 && sig.correlation < 1.0) {
            return Err(SynthError::Correlation(sig.correlation));
        }
        let upper = sig.field.to_ascii_uppercase();
        if crate::market::BASE_FIELDS.contains(&upper.as_str()) {
            return Err(SynthError::FieldName(sig.field.clone()));
        }
    }

    let (nt, nd) = (spec.n_tickers, spec.n_days);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Market drift schedule: bull, sideways, bear, sideways, ...
    let cycle = [spec.regime_drift, 0.0, -spec.regime_drift, 0.0];
    let mut drift = Vec::with_capacity(nd);
    let mut phase = rng.gen_range(0..cycle.len());
    while drift.len() < nd {
        let (lo, hi) = spec.segment_days;
        let len = rng.gen_range(lo.max(1)..=hi.max(lo.max(1)));
        drift.extend(std::iter::repeat_n(cycle[phase], len));
        phase = (phase + 1) % cycle.len();
    }
    drift.truncate(nd);

    let mut close = vec![0.0; nt * nd];
    let mut open = vec![0.0; nt * nd];
    let mut high = vec![0.0; nt * nd];
    let mut low = vec![0.0; nt * nd];
    let mut volume = vec![0.0; nt * nd];
    let mut signal = vec![0.0; nt * nd];
    let mut bench = vec![1.0; nd];

    for i in 0..nt {
        let p0 = 100.0 * (0.2 * normal(&mut rng)).exp();
        close[i * nd] = p0;
        open[i * nd] = p0;
    }

    let (c, c_perp) = match &spec.signal {
        Some(s) => (s.correlation, (1.0 - s.correlation * s.correlation).sqrt()),
        None => (0.0, 1.0),
    };

    for t in 0..nd {
        for i in 0..nt {
            signal[i * nd + t] = normal(&mut rng);
        }
        if t == 0 {
            continue;
        }
        let active = match &spec.signal {
            None => false,
            Some(s) => match s.active_regime {
                None => true,
                Some(target) => {
                    let w = s.regime_params.window;
                    // The regime at the signal date t-1, as the classifier will see it.
                    t > w
                        && Regime::from_trailing_return(
                            bench[t - 1] / bench[t - 1 - w] - 1.0,
                            s.regime_params.threshold,
                        ) == target
                }
            },
        };
        let m = drift[t] + spec.market_vol * normal(&mut rng);
        let mut ret_sum = 0.0;
        for i in 0..nt {
            let e = normal(&mut rng);
            let idio =
                if active { spec.idio_vol * (c * signal[i * nd + t - 1] + c_perp * e) } else { spec.idio_vol * e };
            let r = (m + idio).max(-0.9);
            let k = i * nd + t;
            let prev = close[k - 1];
            close[k] = prev * (1.0 + r);
            open[k] = prev * (1.0 + 0.3 * spec.idio_vol * normal(&mut rng));
            ret_sum += close[k] / prev - 1.0;
        }
        bench[t] = bench[t - 1] * (1.0 + ret_sum / nt as f64);
    }

    for k in 0..nt * nd {
        let body_hi = open[k].max(close[k]);
        let body_lo = open[k].min(close[k]);
        high[k] = body_hi * (1.0 + 0.005 * normal(&mut rng).abs());
        low[k] = body_lo * (1.0 - 0.005 * normal(&mut rng).abs());
        volume[k] = (13.8 + 0.3 * normal(&mut rng)).exp();
    }
    let vwap: Vec<f64> = (0..nt * nd).map(|k| (high[k] + low[k] + close[k]) / 3.0).collect();

    let mut fields = BTreeMap::new();
    fields.insert("OPEN".to_string(), open);
    fields.insert("HIGH".to_string(), high);
    fields.insert("LOW".to_string(), low);
    fields.insert("CLOSE".to_string(), close);
    fields.insert("VOLUME".to_string(), volume);
    fields.insert("VWAP".to_string(), vwap);
    if let Some(s) = &spec.signal {
        fields.insert(s.field.to_ascii_uppercase(), signal);
    }
    let width = nt.to_string().len().max(3);
    let tickers = (0..nt).map(|i| format!("T{i:0width$}")).collect();
    Ok(MarketPanel::new(business_days(spec.start, nd), tickers, fields)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{write_panel, PRICE_FIELDS};

    fn dump(p: &MarketPanel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_panel(p, &mut buf).unwrap();
        buf
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synthesize_panel(7, 5, 50, Some(SignalSpec::new(0.3))).unwrap();
        let b = synthesize_panel(7, 5, 50, Some(SignalSpec::new(0.3))).unwrap();
        assert_eq!(dump(&a), dump(&b));
        let c = synthesize_panel(8, 5, 50, Some(SignalSpec::new(0.3))).unwrap();
        assert_ne!(dump(&a), dump(&c));
    }

    #[test]
    fn ohlc_consistent_and_volume_positive() {
        let p = synthesize_panel(3, 4, 200, None).unwrap();
        let n = p.n_dates() * p.n_tickers();
        let (o, h, l, c) =
            (p.field("OPEN").unwrap(), p.field("HIGH").unwrap(), p.field("LOW").unwrap(), p.field("CLOSE").unwrap());
        for k in 0..n {
            assert!(l[k] <= o[k].min(c[k]) && h[k] >= o[k].max(c[k]));
        }
        assert!(p.field("VOLUME").unwrap().iter().all(|v| *v > 0.0));
        for f in PRICE_FIELDS {
            assert!(p.has_field(f));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(synthesize_panel(1, 2, 10, Some(SignalSpec::new(1.0))), Err(SynthError::Correlation(_))));
        assert!(matches!(synthesize_panel(1, 2, 10, Some(SignalSpec::new(-1.5))), Err(SynthError::Correlation(_))));
        assert!(matches!(synthesize_panel(1, 0, 10, None), Err(SynthError::NoTickers)));
        assert!(matches!(synthesize_panel(1, 2, 1, None), Err(SynthError::TooFewDays(1))));
    }

    #[test]
    fn weekdays_only() {
        let d = business_days(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), 10);
        assert!(d.iter().all(|x| !matches!(x.weekday(), Weekday::Sat | Weekday::Sun)));
        assert_eq!(d[0], NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        assert_eq!(d[1], NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
    }

    #[test]
    fn benchmark_matches_panel_index() {
        // The regime gate inside the generator must see the same index the classifier will.
        let spec = SynthSpec::new(11, 6, 150).with_signal(SignalSpec::new(0.5).only_in(Regime::Bear));
        let p = spec.generate().unwrap();
        let idx = p.equal_weight_index().unwrap();
        assert_eq!(idx.len(), 150);
        assert_eq!(idx[0], 1.0);
    }
}
