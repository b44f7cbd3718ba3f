//! Confidence (θ) and risk (ρ) scores from daily IC histories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ic::IcHistory;
use super::regime::{MarketRegimeSeries, Regime};
use crate::catalog::AlphaKey;

pub const DEFAULT_MIN_OBS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("only {count} {regime} dates with a defined IC, need {needed}")]
    Insufficient { regime: Regime, count: usize, needed: usize },
    #[error("no regime label at the scoring date")]
    NoCurrentRegime,
}

/// Advisory scores returned by an LLM for one alpha, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlmScore {
    pub confidence: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentScore {
    pub key: AlphaKey,
    pub theta: f64,
    pub rho: f64,
    /// `w_c * theta + w_r * rho` for the weights it was built with.
    pub final_score: f64,
    pub ic_by_regime: BTreeMap<Regime, f64>,
    pub n_obs: BTreeMap<Regime, usize>,
    pub llm: Option<LlmScore>,
}

impl AgentScore {
    pub fn new(key: AlphaKey, theta: f64, rho: f64, w_c: f64, w_r: f64) -> Self {
        Self {
            key,
            theta,
            rho,
            final_score: w_c * theta + w_r * rho,
            ic_by_regime: BTreeMap::new(),
            n_obs: BTreeMap::new(),
            llm: None,
        }
    }
}

/// Defined ICs on dates carrying `regime`.
fn regime_ics(ic: &IcHistory, regimes: &MarketRegimeSeries, regime: Regime) -> Vec<f64> {
    ic.defined().filter(|(d, _)| regimes.label_on(*d) == Some(regime)).map(|(_, v)| v).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// θ: mean daily IC over dates labeled `current`.
pub fn confidence_score(
    ic: &IcHistory,
    regimes: &MarketRegimeSeries,
    current: Regime,
    min_obs: usize,
) -> Result<f64, ScoreError> {
    let v = regime_ics(ic, regimes, current);
    if v.len() < min_obs.max(1) {
        return Err(ScoreError::Insufficient { regime: current, count: v.len(), needed: min_obs.max(1) });
    }
    Ok(mean(&v))
}

/// ρ: `0.5 * (1 + mean Bear IC) / (1 + sample std of all daily ICs)`, clamped to `[0, 1]`.
pub fn risk_score(ic: &IcHistory, regimes: &MarketRegimeSeries, min_obs: usize) -> Result<f64, ScoreError> {
    let bear = regime_ics(ic, regimes, Regime::Bear);
    if bear.len() < min_obs.max(1) {
        return Err(ScoreError::Insufficient { regime: Regime::Bear, count: bear.len(), needed: min_obs.max(1) });
    }
    let all: Vec<f64> = ic.defined().map(|(_, v)| v).collect();
    Ok((0.5 * (1.0 + mean(&bear)) / (1.0 + sample_std(&all))).clamp(0.0, 1.0))
}

/// Regime of the last labeled date in `ic`'s window.
pub fn current_regime(ic: &IcHistory, regimes: &MarketRegimeSeries) -> Result<Regime, ScoreError> {
    ic.dates.last().and_then(|d| regimes.label_as_of(*d)).ok_or(ScoreError::NoCurrentRegime)
}

/// θ, ρ and per-regime IC summaries for one alpha.
pub fn score_alpha(
    key: AlphaKey,
    ic: &IcHistory,
    regimes: &MarketRegimeSeries,
    current: Regime,
    min_obs: usize,
    w_c: f64,
    w_r: f64,
) -> Result<AgentScore, ScoreError> {
    let theta = confidence_score(ic, regimes, current, min_obs)?;
    let rho = risk_score(ic, regimes, min_obs)?;
    let mut score = AgentScore::new(key, theta, rho, w_c, w_r);
    for r in Regime::ALL {
        let v = regime_ics(ic, regimes, r);
        score.n_obs.insert(r, v.len());
        if !v.is_empty() {
            score.ic_by_regime.insert(r, mean(&v));
        }
    }
    Ok(score)
}
