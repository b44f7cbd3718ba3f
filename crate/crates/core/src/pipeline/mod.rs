//! End-to-end run: load, evaluate, score, select, train, combine, backtest, report.
//!
//! Each stage that produces an artifact writes it as soon as the stage finishes and
//! records itself in `MANIFEST`, so a failed run leaves a truthful partial directory.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

pub use config::{ConfigError, Fallback, ProviderConfig, ProviderKind, RunConfig, SplitConfig};

use crate::agents::{
    classify_regimes, current_regime, score_alpha, select_alphas, IcHistory, LlmScore, MarketRegimeSeries, Regime,
    ScoreOutcome, Selection, SelectionStatus,
};
use crate::backtest::{
    compute_metrics, run_backtest, write_metrics, write_plot_data, write_report, BacktestRun, MetricBlock,
};
use crate::catalog::{load_catalog, AlphaCatalog, AlphaKey};
use crate::eval::{evaluate_batch, forward_returns, AlphaSeries};
use crate::llm::{
    complete_many, render_prompt, HttpProvider, LlmResponse, PromptContext, Provider, StubProvider, Task,
};
use crate::market::{load_panel, MarketPanel, PanelSchema, PanelSlice};
use crate::mlp::{
    build_dataset, combine, extract_weights, independent_columns, train, CombinedAlphaWeights, Dataset, MlpModel,
    TrainOutcome,
};

/// Artifact files every successful run leaves in the output directory.
pub const ARTIFACTS: [&str; 6] = ["scores.csv", "weights.csv", "model.txt", "report.csv", "metrics.csv", "plot.csv"];
pub const MANIFEST: &str = "MANIFEST";

/// Alphas whose train-slice variance is explained beyond `1 - COLLINEAR_TOL` by
/// higher-ranked selections are dropped before training.
pub const COLLINEAR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Evaluate,
    Score,
    Llm,
    Select,
    Dataset,
    Train,
    Weights,
    Combine,
    Backtest,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Evaluate => "evaluate",
            Stage::Score => "score",
            Stage::Llm => "llm",
            Stage::Select => "select",
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Weights => "weights",
            Stage::Combine => "combine",
            Stage::Backtest => "backtest",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn perr(stage: Stage, e: impl fmt::Display) -> PipelineError {
    PipelineError { stage, message: e.to_string() }
}

/// Everything a run computed, for callers that want more than the artifact files.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// First validation and first test date index.
    pub split: (usize, usize),
    pub regimes: MarketRegimeSeries,
    pub current_regime: Regime,
    pub scores: BTreeMap<AlphaKey, ScoreOutcome>,
    pub selection: Selection,
    /// Alphas fed to the MLP, in selection order.
    pub used: Vec<AlphaKey>,
    pub fallback_used: bool,
    pub training: TrainOutcome,
    pub weights: CombinedAlphaWeights,
    /// Combined alpha on the test slice.
    pub combined: AlphaSeries,
    /// Daily IC of the combined alpha on the test slice.
    pub test_ic: IcHistory,
    pub run: BacktestRun,
    pub metrics: MetricBlock,
    pub benchmark_metrics: MetricBlock,
}

impl PipelineOutput {
    /// Mean test-slice IC of the combined alpha over dates labeled `regime`.
    pub fn regime_mean_ic(&self, regime: Regime) -> Option<f64> {
        let v: Vec<f64> = self
            .test_ic
            .defined()
            .filter(|(d, _)| self.regimes.label_on(*d) == Some(regime))
            .map(|(_, ic)| ic)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

struct Artifacts {
    dir: Option<PathBuf>,
    done: Vec<(Stage, Vec<&'static str>)>,
}

impl Artifacts {
    fn new(dir: Option<&Path>) -> Result<Self, PipelineError> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| perr(Stage::Load, e))?;
            for name in ARTIFACTS.iter().chain([&MANIFEST]) {
                let p = d.join(name);
                if p.exists() {
                    std::fs::remove_file(p).map_err(|e| perr(Stage::Load, e))?;
                }
            }
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), done: Vec::new() })
    }

    fn write(
        &self,
        stage: Stage,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<(), String>,
    ) -> Result<(), PipelineError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let err = |m: String| PipelineError { stage, message: format!("writing {name}: {m}") };
        let mut w = BufWriter::new(File::create(dir.join(name)).map_err(|e| err(e.to_string()))?);
        body(&mut w).map_err(err)?;
        w.flush().map_err(|e| err(e.to_string()))
    }

    fn complete(&mut self, stage: Stage, files: &[&'static str]) -> Result<(), PipelineError> {
        self.done.push((stage, files.to_vec()));
        let text: String = self
            .done
            .iter()
            .map(|(s, f)| if f.is_empty() { format!("{s}\n") } else { format!("{s}\t{}\n", f.join(",")) })
            .collect();
        self.write(stage, MANIFEST, |w| w.write_all(text.as_bytes()).map_err(|e| e.to_string()))
    }
}

/// Loads the configured inputs, then runs every stage into `config.out`.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    let loaded = load_panel(&config.panel, &PanelSchema::default()).map_err(|e| perr(Stage::Load, e))?;
    for w in &loaded.warnings {
        warn!("panel row {} {} dropped: {}", w.date, w.ticker, w.reason);
    }
    let catalog = match &config.catalog {
        Some(p) => load_catalog(p).map_err(|e| perr(Stage::Load, format!("{}: {e}", p.display())))?,
        None => AlphaCatalog::builtin(),
    };
    run_on(&loaded.panel, &catalog, config, Some(&config.out))
}

fn provider(config: &ProviderConfig) -> Result<Box<dyn Provider>, PipelineError> {
    Ok(match config.kind {
        ProviderKind::Stub => Box::new(StubProvider::new(config.seed)),
        ProviderKind::Http => Box::new(
            HttpProvider::new(&config.endpoint, &config.model, &config.api_key_env, config.timeout)
                .map_err(|e| perr(Stage::Llm, e))?,
        ),
    })
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

/// Catalog evaluated on the full panel and scored on the training slice.
#[derive(Debug, Clone)]
pub struct Scoring {
    /// First validation and first test date index.
    pub split: (usize, usize),
    pub series: BTreeMap<AlphaKey, AlphaSeries>,
    pub scores: BTreeMap<AlphaKey, ScoreOutcome>,
    /// Mean train-slice IC of every evaluated alpha.
    pub mean_ic: BTreeMap<AlphaKey, f64>,
    /// Equal-weight index over the whole panel.
    pub benchmark: Vec<f64>,
    pub regimes: MarketRegimeSeries,
    pub current_regime: Regime,
}

/// MLP fitted on a set of alphas and its linearization.
#[derive(Debug, Clone)]
pub struct Fit {
    /// Alphas actually used, after dropping collinear ones.
    pub used: Vec<AlphaKey>,
    pub dataset: Dataset,
    pub training: TrainOutcome,
    pub weights: CombinedAlphaWeights,
}

impl Fit {
    /// Weighted sum of the train-standardized alphas, restricted to `dates`.
    pub fn combine(
        &self,
        series: &BTreeMap<AlphaKey, AlphaSeries>,
        dates: &[NaiveDate],
    ) -> Result<AlphaSeries, PipelineError> {
        let standardized: Vec<AlphaSeries> =
            self.used.iter().enumerate().map(|(j, k)| series[k].map(|v| self.dataset.features.apply(j, v))).collect();
        combine(&self.weights.weights, &standardized, "COMBINED")
            .map_err(|e| perr(Stage::Combine, e))?
            .restrict(dates)
            .map_err(|e| perr(Stage::Combine, e))
    }
}

fn split<'a>(panel: &'a MarketPanel, config: &RunConfig) -> Result<[PanelSlice<'a>; 3], PipelineError> {
    let (a, b) = config.split.boundaries(panel.n_dates());
    let (tr, va, te) = panel.split_at(a, b).map_err(|e| perr(Stage::Load, e))?;
    Ok([tr, va, te])
}

/// Evaluates every entry whose fields exist in `panel`; the rest are reported as skipped.
pub fn evaluate_catalog(
    panel: &MarketPanel,
    catalog: &AlphaCatalog,
) -> (BTreeMap<AlphaKey, AlphaSeries>, BTreeMap<AlphaKey, ScoreOutcome>) {
    let full = panel.full();
    let mut series = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut runnable = Vec::new();
    for e in catalog.entries() {
        let missing: Vec<_> = e.meta().required_fields.iter().filter(|f| !full.has_field(f)).cloned().collect();
        if missing.is_empty() {
            runnable.push(e);
        } else {
            skipped.insert(e.key(), ScoreOutcome::Skipped(format!("missing fields {}", missing.join(" "))));
        }
    }
    let exprs: Vec<_> = runnable.iter().map(|e| e.expr().clone()).collect();
    for (e, r) in runnable.iter().zip(evaluate_batch(&exprs, &full)) {
        match r {
            Ok(s) => {
                series.insert(e.key(), s);
            }
            Err(err) => {
                skipped.insert(e.key(), ScoreOutcome::Skipped(err.to_string()));
            }
        }
    }
    (series, skipped)
}

/// Evaluates and scores `catalog`, blending in LLM advice when configured.
pub fn score_catalog(
    panel: &MarketPanel,
    catalog: &AlphaCatalog,
    config: &RunConfig,
) -> Result<Scoring, PipelineError> {
    config.validate_params().map_err(|e| perr(Stage::Load, e))?;
    score_stages(panel, catalog, config, &mut Artifacts::new(None)?)
}

fn score_stages(
    panel: &MarketPanel,
    catalog: &AlphaCatalog,
    config: &RunConfig,
    art: &mut Artifacts,
) -> Result<Scoring, PipelineError> {
    let [train_slice, ..] = split(panel, config)?;
    let (a, b) = config.split.boundaries(panel.n_dates());
    info!("split: train {a}, validation {}, test {} dates", b - a, panel.n_dates() - b);
    art.complete(Stage::Load, &[])?;

    // Evaluate on the full panel so validation and test rows keep their warmup history.
    let (series, mut scores) = evaluate_catalog(panel, catalog);
    if series.is_empty() {
        return Err(perr(Stage::Evaluate, "no catalog entry evaluates on this panel"));
    }
    let fwd_train = forward_returns(&train_slice, config.backtest.horizon).map_err(|e| perr(Stage::Evaluate, e))?;
    art.complete(Stage::Evaluate, &[])?;

    let bench = panel.equal_weight_index().ok_or_else(|| perr(Stage::Score, "panel has no CLOSE field"))?;
    let regimes = classify_regimes(panel.dates(), &bench, config.regime).map_err(|e| perr(Stage::Score, e))?;
    let train_dates = train_slice.dates();
    let last_train = *train_dates.last().expect("train slice is non-empty");
    let current = regimes
        .label_as_of(last_train)
        .ok_or_else(|| perr(Stage::Score, "no regime label at the end of the train slice"))?;
    info!("current regime as of {last_train}: {current}");
    let sel = config.selection;
    let scored: Vec<(AlphaKey, ScoreOutcome, Option<f64>)> = series
        .par_iter()
        .map(|(key, s)| {
            let tr = s.restrict(train_dates).expect("train dates are panel dates");
            let ic = IcHistory::compute(&tr, &fwd_train, config.ic_method).expect("aligned by construction");
            let outcome = match current_regime(&ic, &regimes)
                .and_then(|_| score_alpha(key.clone(), &ic, &regimes, current, config.min_obs, sel.w_c, sel.w_r))
            {
                Ok(s) => ScoreOutcome::Scored(s),
                Err(e) => ScoreOutcome::Skipped(e.to_string()),
            };
            (key.clone(), outcome, ic.mean())
        })
        .collect();
    let mut mean_ic = BTreeMap::new();
    for (key, outcome, mean) in scored {
        if let Some(m) = mean {
            mean_ic.insert(key.clone(), m);
        }
        scores.insert(key, outcome);
    }
    art.complete(Stage::Score, &[])?;

    if sel.llm_blend > 0.0 {
        attach_llm_scores(catalog, &mut scores, &mean_ic, &bench, a - 1, current, config)?;
        art.complete(Stage::Llm, &[])?;
    }
    Ok(Scoring { split: (a, b), series, scores, mean_ic, benchmark: bench, regimes, current_regime: current })
}

/// Selected alphas, or the per-category argmax set when nothing passed and the
/// fallback allows it. The flag reports whether the fallback was used.
pub fn chosen_alphas(selection: &Selection, config: &RunConfig) -> Result<(Vec<AlphaKey>, bool), PipelineError> {
    let fallback = selection.status == SelectionStatus::NothingPassed;
    let chosen = match (fallback, config.fallback) {
        (false, _) => &selection.selected,
        (true, Fallback::Argmax) => {
            warn!("no alpha passed the threshold {}; using the per-category argmax set", config.selection.threshold);
            &selection.argmax
        }
        (true, Fallback::Fail) => {
            return Err(perr(
                Stage::Select,
                format!("no alpha scored above the threshold {}", config.selection.threshold),
            ))
        }
    };
    if chosen.is_empty() {
        return Err(perr(Stage::Select, "no scored alpha to select"));
    }
    Ok((chosen.iter().map(|s| s.key.clone()).collect(), fallback))
}

/// Trains the MLP on `keys` over the train / validation slices and extracts weights.
pub fn fit_weights(
    panel: &MarketPanel,
    series: &BTreeMap<AlphaKey, AlphaSeries>,
    keys: &[AlphaKey],
    config: &RunConfig,
) -> Result<Fit, PipelineError> {
    config.validate_params().map_err(|e| perr(Stage::Load, e))?;
    fit_stages(panel, series, keys, config, &mut Artifacts::new(None)?)
}

fn fit_stages(
    panel: &MarketPanel,
    series: &BTreeMap<AlphaKey, AlphaSeries>,
    keys: &[AlphaKey],
    config: &RunConfig,
    art: &mut Artifacts,
) -> Result<Fit, PipelineError> {
    let [train_slice, val_slice, _] = split(panel, config)?;
    let fwd = |s: &PanelSlice<'_>| forward_returns(s, config.backtest.horizon).map_err(|e| perr(Stage::Dataset, e));
    let (fwd_train, fwd_val) = (fwd(&train_slice)?, fwd(&val_slice)?);
    let restrict = |keys: &[AlphaKey], dates| -> Result<Vec<AlphaSeries>, PipelineError> {
        keys.iter()
            .map(|k| {
                let s = series.get(k).ok_or_else(|| perr(Stage::Dataset, format!("no series for {k}")))?;
                s.restrict(dates).map_err(|e| perr(Stage::Dataset, e))
            })
            .collect()
    };
    let build = |keys: &[AlphaKey]| {
        build_dataset(&restrict(keys, train_slice.dates())?, &fwd_train, &restrict(keys, val_slice.dates())?, &fwd_val)
            .map_err(|e| perr(Stage::Dataset, e))
    };
    let mut used = keys.to_vec();
    let mut dataset = build(&used)?;
    // Collinear alphas make the weight fit singular; keep the first of each dependent group.
    let independent = independent_columns(&dataset.x_train, COLLINEAR_TOL);
    if independent.len() < used.len() {
        for (j, k) in used.iter().enumerate() {
            if !independent.contains(&j) {
                info!("{k} is collinear with higher-ranked selections; dropped");
            }
        }
        used = independent.iter().map(|&j| used[j].clone()).collect();
        dataset = build(&used)?;
    }
    info!("training on {} alphas", used.len());
    art.complete(Stage::Dataset, &[])?;

    let model = MlpModel::new(used.len(), config.hidden, config.train.seed).map_err(|e| perr(Stage::Train, e))?;
    let training = train(&model, &dataset.x_train, &dataset.y_train, &dataset.x_val, &dataset.y_val, &config.train)
        .map_err(|e| perr(Stage::Train, e))?;
    info!("training stopped with best epoch {}", training.best_epoch);
    let checkpoint = training.model.to_checkpoint();
    art.write(Stage::Train, "model.txt", |w| w.write_all(checkpoint.as_bytes()).map_err(|e| e.to_string()))?;
    art.complete(Stage::Train, &["model.txt"])?;

    let ids: Vec<String> = used.iter().map(ToString::to_string).collect();
    let weights = extract_weights(&training.model, &dataset.x_train, &ids).map_err(|e| perr(Stage::Weights, e))?;
    art.write(Stage::Weights, "weights.csv", |w| weights.write_csv(w).map_err(|e| e.to_string()))?;
    art.complete(Stage::Weights, &["weights.csv"])?;
    Ok(Fit { used, dataset, training, weights })
}

/// Runs every stage on an in-memory panel and catalog. Artifacts are written only
/// when `out` is given.
pub fn run_on(
    panel: &MarketPanel,
    catalog: &AlphaCatalog,
    config: &RunConfig,
    out: Option<&Path>,
) -> Result<PipelineOutput, PipelineError> {
    config.validate_params().map_err(|e| perr(Stage::Load, e))?;
    let mut art = Artifacts::new(out)?;
    let scoring = score_stages(panel, catalog, config, &mut art)?;

    let selection = select_alphas(catalog, &scoring.scores, &config.selection).map_err(|e| perr(Stage::Select, e))?;
    art.write(Stage::Select, "scores.csv", |w| {
        write_scores(w, catalog, &scoring.scores, &selection, &config.selection)
    })?;
    let (chosen, fallback_used) = chosen_alphas(&selection, config)?;
    art.complete(Stage::Select, &["scores.csv"])?;

    let fit = fit_stages(panel, &scoring.series, &chosen, config, &mut art)?;

    let [.., test_slice] = split(panel, config)?;
    let combined = fit.combine(&scoring.series, test_slice.dates())?;
    let fwd_test = forward_returns(&test_slice, config.backtest.horizon).map_err(|e| perr(Stage::Combine, e))?;
    let test_ic = IcHistory::compute(&combined, &fwd_test, config.ic_method).map_err(|e| perr(Stage::Combine, e))?;
    art.complete(Stage::Combine, &[])?;

    let run = run_backtest(&combined, &test_slice, &config.backtest).map_err(|e| perr(Stage::Backtest, e))?;
    if run.skip_count() > 0 {
        warn!("{} test days had fewer than k rankable tickers", run.skip_count());
    }
    let b = scoring.split.1;
    let bench_nw: Vec<f64> = scoring.benchmark[b..].iter().map(|v| v / scoring.benchmark[b]).collect();
    let nw = run.net_worth();
    art.write(Stage::Backtest, "report.csv", |w| {
        write_report(&run, &bench_nw, config.backtest.k, w).map_err(|e| e.to_string())
    })?;
    art.write(Stage::Backtest, "plot.csv", |w| {
        write_plot_data(test_slice.dates(), &nw, &bench_nw, w).map_err(|e| e.to_string())
    })?;
    art.complete(Stage::Backtest, &["report.csv", "plot.csv"])?;

    let mut metrics = compute_metrics(&nw, &config.backtest).map_err(|e| perr(Stage::Report, e))?;
    metrics.mean_ic = test_ic.mean();
    let benchmark_metrics = compute_metrics(&bench_nw, &config.backtest).map_err(|e| perr(Stage::Report, e))?;
    art.write(Stage::Report, "metrics.csv", |w| {
        write_metrics(&[("strategy", metrics), ("benchmark", benchmark_metrics)], w).map_err(|e| e.to_string())
    })?;
    art.complete(Stage::Report, &["metrics.csv"])?;

    Ok(PipelineOutput {
        split: scoring.split,
        regimes: scoring.regimes,
        current_regime: scoring.current_regime,
        scores: scoring.scores,
        selection,
        used: fit.used,
        fallback_used,
        training: fit.training,
        weights: fit.weights,
        combined,
        test_ic,
        run,
        metrics,
        benchmark_metrics,
    })
}

/// Asks the provider for advisory scores, one prompt per category.
fn attach_llm_scores(
    catalog: &AlphaCatalog,
    scores: &mut BTreeMap<AlphaKey, ScoreOutcome>,
    mean_ic: &BTreeMap<AlphaKey, f64>,
    bench: &[f64],
    last_train: usize,
    current: Regime,
    config: &RunConfig,
) -> Result<(), PipelineError> {
    let w = config.regime.window.min(last_train);
    let trailing = bench[last_train] / bench[last_train - w] - 1.0;
    let summary = format!("Equal-weight benchmark: {:+.2}% over the last {w} sessions ({current}).", 100.0 * trailing);
    let mut categories = Vec::new();
    let mut prompts = Vec::new();
    for cat in catalog.categories() {
        let rows: Vec<(String, f64)> = catalog
            .entries()
            .iter()
            .filter(|e| &e.category == cat && matches!(scores.get(&e.key()), Some(ScoreOutcome::Scored(_))))
            .map(|e| (e.name.clone(), mean_ic.get(&e.key()).copied().unwrap_or(0.0)))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let ctx = PromptContext {
            market_summary: summary.clone(),
            report_excerpts: vec![],
            factor_history: rows,
            task: Task::ScoreAlphas,
        };
        prompts.push(render_prompt(&ctx, Task::ScoreAlphas.template_id()).map_err(|e| perr(Stage::Llm, e))?);
        categories.push(cat.clone());
    }
    let p = provider(&config.provider)?;
    let answers = complete_many(p.as_ref(), &prompts, config.provider.retry, config.provider.max_in_flight);
    for (cat, answer) in categories.iter().zip(answers) {
        let resp: LlmResponse = answer.map_err(|e| perr(Stage::Llm, e))?;
        for item in resp.scores() {
            let key = AlphaKey::new(cat, &item.name);
            match scores.get_mut(&key) {
                Some(ScoreOutcome::Scored(s)) => {
                    s.llm = Some(LlmScore { confidence: item.confidence, risk: item.risk })
                }
                _ => warn!("{}: provider scored unknown alpha {:?}", p.name(), item.name),
            }
        }
    }
    Ok(())
}

/// CSV of every catalog entry with its scores and selection flags.
pub fn write_scores(
    w: &mut impl Write,
    catalog: &AlphaCatalog,
    scores: &BTreeMap<AlphaKey, ScoreOutcome>,
    selection: &Selection,
    cfg: &crate::agents::SelectionConfig,
) -> Result<(), String> {
    let mut out = csv::Writer::from_writer(w);
    let e = |e: csv::Error| e.to_string();
    out.write_record([
        "category",
        "name",
        "theta",
        "rho",
        "llm_confidence",
        "llm_risk",
        "final",
        "shortlisted",
        "selected",
        "note",
    ])
    .map_err(e)?;
    let argmax: BTreeSet<&AlphaKey> = selection.argmax.iter().map(|s| &s.key).collect();
    for entry in catalog.entries() {
        let key = entry.key();
        let row = match scores.get(&key) {
            Some(ScoreOutcome::Scored(s)) => {
                let (lc, lr) = s.llm.map(|l| (f(l.confidence), f(l.risk))).unwrap_or_default();
                let note = if argmax.contains(&key) { "category argmax" } else { "" };
                [
                    f(s.theta),
                    f(s.rho),
                    lc,
                    lr,
                    f(cfg.final_score(s)),
                    selection.shortlisted.contains(&key).to_string(),
                    selection.is_selected(&key).to_string(),
                    note.to_string(),
                ]
            }
            Some(ScoreOutcome::Skipped(why)) => [
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                "false".into(),
                why.clone(),
            ],
            None => continue,
        };
        let mut rec = vec![key.category.clone(), key.name.clone()];
        rec.extend(row);
        out.write_record(&rec).map_err(e)?;
    }
    out.flush().map_err(|e| e.to_string())
}
