//! Multi-agent factor evaluation: regimes, information coefficients, confidence and
//! risk scores, and category-based selection.

pub mod ic;
pub mod regime;
pub mod scoring;
pub mod selection;

pub use ic::{average_ranks, information_coefficient, AlignmentError, IcHistory, IcMethod, IcUndefined, MIN_IC_PAIRS};
pub use regime::{classify_regimes, MarketRegimeSeries, Regime, RegimeError, RegimeParams};
pub use scoring::{
    confidence_score, current_regime, risk_score, score_alpha, AgentScore, LlmScore, ScoreError, DEFAULT_MIN_OBS,
};
pub use selection::{
    select_alphas, ScoreOutcome, SelectedAlpha, Selection, SelectionConfig, SelectionError, SelectionStatus,
};
