//! Run configuration: a TOML file of flat `[section]` tables, overridable field by field.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::agents::{IcMethod, RegimeParams, SelectionConfig, DEFAULT_MIN_OBS};
use crate::backtest::BacktestConfig;
use crate::llm::RetryPolicy;
use crate::mlp::{TrainConfig, DEFAULT_HIDDEN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Syntax(String),
    #[error("config: {0}")]
    Invalid(String),
}

/// What to do when no alpha clears the selection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Continue with the per-category argmax set.
    Argmax,
    /// Stop the run at the selection stage.
    Fail,
}

impl std::str::FromStr for Fallback {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "argmax" => Ok(Fallback::Argmax),
            "fail" => Ok(Fallback::Fail),
            other => Err(format!("unknown fallback {other:?} (argmax|fail)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Http,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stub" => Ok(ProviderKind::Stub),
            "http" => Ok(ProviderKind::Http),
            other => Err(format!("unknown provider {other:?} (stub|http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub seed: u64,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Stub,
            seed: 0,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "ALPHAFORGE_API_KEY".into(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Train / validation / test split as fractions of the panel's dates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub validation_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { validation_fraction: 0.2, test_fraction: 0.2 }
    }
}

impl SplitConfig {
    /// Date indices `(a, b)` with train `[0, a)`, validation `[a, b)`, test `[b, n)`.
    pub fn boundaries(&self, n: usize) -> (usize, usize) {
        let b = ((n as f64) * (1.0 - self.test_fraction)).round() as usize;
        let a = ((n as f64) * (1.0 - self.test_fraction - self.validation_fraction)).round() as usize;
        (a, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub panel: PathBuf,
    /// `None` uses the builtin catalog.
    pub catalog: Option<PathBuf>,
    pub out: PathBuf,
    pub selection: SelectionConfig,
    pub min_obs: usize,
    pub ic_method: IcMethod,
    pub fallback: Fallback,
    pub regime: RegimeParams,
    pub train: TrainConfig,
    pub hidden: usize,
    pub backtest: BacktestConfig,
    pub split: SplitConfig,
    pub provider: ProviderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            panel: PathBuf::new(),
            catalog: None,
            out: PathBuf::from("out"),
            selection: SelectionConfig::default(),
            min_obs: DEFAULT_MIN_OBS,
            ic_method: IcMethod::Rank,
            fallback: Fallback::Argmax,
            regime: RegimeParams::default(),
            train: TrainConfig::default(),
            hidden: DEFAULT_HIDDEN,
            backtest: BacktestConfig::default(),
            split: SplitConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    paths: PathsSection,
    #[serde(default)]
    selection: SelectionSection,
    #[serde(default)]
    regime: RegimeSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    backtest: BacktestSection,
    #[serde(default)]
    split: SplitSection,
    #[serde(default)]
    llm: LlmSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    panel: Option<PathBuf>,
    catalog: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionSection {
    w_c: Option<f64>,
    w_r: Option<f64>,
    threshold: Option<f64>,
    shortlist: Option<usize>,
    llm_blend: Option<f64>,
    min_obs: Option<usize>,
    ic_method: Option<String>,
    fallback: Option<Fallback>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegimeSection {
    window: Option<usize>,
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    l2_lambda: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    hidden: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BacktestSection {
    k: Option<usize>,
    n: Option<usize>,
    horizon: Option<usize>,
    cost_bps: Option<f64>,
    risk_free_rate: Option<f64>,
    trading_days_per_year: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSection {
    validation_fraction: Option<f64>,
    test_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlmSection {
    provider: Option<ProviderKind>,
    seed: Option<u64>,
    endpoint: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    max_retries: Option<u32>,
    backoff_ms: Option<u64>,
    max_in_flight: Option<usize>,
    timeout_s: Option<u64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    /// Defaults overlaid with the values present in `text`.
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let f: FileConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
        let mut c = RunConfig::default();
        set(&mut c.panel, f.paths.panel);
        c.catalog = f.paths.catalog.or(c.catalog);
        set(&mut c.out, f.paths.out);

        let s = f.selection;
        set(&mut c.selection.w_c, s.w_c);
        set(&mut c.selection.w_r, s.w_r);
        set(&mut c.selection.threshold, s.threshold);
        set(&mut c.selection.per_category_shortlist, s.shortlist);
        set(&mut c.selection.llm_blend, s.llm_blend);
        set(&mut c.min_obs, s.min_obs);
        if let Some(m) = s.ic_method {
            c.ic_method = m.parse().map_err(ConfigError::Invalid)?;
        }
        set(&mut c.fallback, s.fallback);

        set(&mut c.regime.window, f.regime.window);
        set(&mut c.regime.threshold, f.regime.threshold);

        let t = f.train;
        set(&mut c.train.learning_rate, t.learning_rate);
        set(&mut c.train.batch_size, t.batch_size);
        set(&mut c.train.l2_lambda, t.l2_lambda);
        set(&mut c.train.max_epochs, t.max_epochs);
        set(&mut c.train.patience, t.patience);
        set(&mut c.train.seed, t.seed);
        set(&mut c.hidden, t.hidden);

        let b = f.backtest;
        set(&mut c.backtest.k, b.k);
        set(&mut c.backtest.n, b.n);
        set(&mut c.backtest.horizon, b.horizon);
        set(&mut c.backtest.cost_bps, b.cost_bps);
        set(&mut c.backtest.risk_free_rate, b.risk_free_rate);
        set(&mut c.backtest.trading_days_per_year, b.trading_days_per_year);

        set(&mut c.split.validation_fraction, f.split.validation_fraction);
        set(&mut c.split.test_fraction, f.split.test_fraction);

        let l = f.llm;
        let p = &mut c.provider;
        set(&mut p.kind, l.provider);
        set(&mut p.seed, l.seed);
        set(&mut p.endpoint, l.endpoint);
        set(&mut p.model, l.model);
        set(&mut p.api_key_env, l.api_key_env);
        set(&mut p.retry.max_retries, l.max_retries);
        set(&mut p.retry.base_delay, l.backoff_ms.map(Duration::from_millis));
        set(&mut p.max_in_flight, l.max_in_flight);
        set(&mut p.timeout, l.timeout_s.map(Duration::from_secs));
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        RunConfig::from_toml(&text)
    }

    /// Checks every sub-config and that the input files exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_params()?;
        if !self.panel.is_file() {
            return Err(ConfigError::Invalid(format!("panel file not found: {}", self.panel.display())));
        }
        if let Some(c) = &self.catalog {
            if !c.is_file() {
                return Err(ConfigError::Invalid(format!("catalog file not found: {}", c.display())));
            }
        }
        Ok(())
    }

    /// Checks every sub-config; paths are not touched.
    pub fn validate_params(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.selection.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.backtest.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.hidden == 0 {
            return bad("hidden width must be positive".into());
        }
        if self.regime.window == 0 || !(self.regime.threshold > 0.0) {
            return bad("regime window and threshold must be positive".into());
        }
        let (v, t) = (self.split.validation_fraction, self.split.test_fraction);
        if !(v > 0.0 && t > 0.0 && v + t < 1.0) {
            return bad(format!("split fractions must be positive with a non-empty train slice, got {v} / {t}"));
        }
        if self.provider.max_in_flight == 0 {
            return bad("llm max_in_flight must be positive".into());
        }
        Ok(())
    }
}
