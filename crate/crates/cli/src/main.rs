//! `alphaforge`: command-line front end for the alpha search pipeline.
//!
//! Exit codes: 0 success, 1 stage failure, 2 usage or configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alphaforge::agents::{select_alphas, Regime};
use alphaforge::backtest::{
    compute_metrics, run_backtest, write_metrics, write_plot_data, write_report, BacktestConfig,
};
use alphaforge::catalog::{load_catalog, AlphaCatalog};
use alphaforge::dsl::parse;
use alphaforge::eval::{evaluate, AlphaSeries};
use alphaforge::market::{load_panel, save_panel, MarketPanel, PanelSchema, SignalSpec, SynthSpec};
use alphaforge::pipeline::{
    chosen_alphas, evaluate_catalog, fit_weights, run_pipeline, score_catalog, write_scores, Fallback, ProviderKind,
    RunConfig, ARTIFACTS, MANIFEST,
};
use clap::{Args, Parser, Subcommand};
use log::warn;

#[derive(Parser)]
#[command(name = "alphaforge", version, about = "Formulaic alpha search, selection, weighting and backtesting")]
struct Cli {
    /// Worker threads for evaluation and scoring (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all artifacts under --out.
    Pipeline(RunArgs),
    /// Evaluate one expression over a panel and print the alpha series CSV.
    Eval {
        expression: String,
        #[arg(long)]
        panel: PathBuf,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the catalog and write scores.csv and selected.manifest under --out.
    Select(RunArgs),
    /// Fit the MLP on the alphas of a manifest; writes model.txt and weights.csv.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Manifest of the alphas to combine, e.g. selected.manifest from `select`.
        #[arg(long)]
        alphas: PathBuf,
    },
    /// Backtest an alpha series CSV; writes report.csv, plot.csv and metrics.csv.
    Backtest {
        #[arg(long)]
        panel: PathBuf,
        /// Alpha series CSV (`date,ticker,value`).
        #[arg(long)]
        alpha: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = BacktestConfig::default().k)]
        k: usize,
        #[arg(long, default_value_t = BacktestConfig::default().n)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        cost_bps: f64,
    },
    /// Inspect or check an alpha catalog manifest.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Write a seeded synthetic panel.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        tickers: usize,
        #[arg(long, default_value_t = 400)]
        days: usize,
        /// Plant a SIGNAL field with this correlation to next-day returns.
        #[arg(long)]
        signal: Option<f64>,
        /// Make the planted signal predictive only in this regime.
        #[arg(long, requires = "signal")]
        signal_regime: Option<Regime>,
    },
    /// Summarize the artifacts of a pipeline run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    /// List categories and entries.
    List {
        /// Manifest file (default: builtin catalog).
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Parse every row; with --panel, also evaluate every entry whose fields exist.
    Validate {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        panel: Option<PathBuf>,
    },
}

/// Run configuration: a TOML file plus per-field overrides. Flags win.
#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Manifest file (default: builtin catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the stub provider and the MLP initialization / shuffling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    w_c: Option<f64>,
    #[arg(long)]
    w_r: Option<f64>,
    #[arg(long)]
    llm_blend: Option<f64>,
    #[arg(long)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    fallback: Option<Fallback>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    cost_bps: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

/// Writes a line to stdout. A closed pipe (`| head`) ends the process quietly.
macro_rules! say {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

fn emit(text: &str) {
    if let Err(e) = io::stdout().lock().write_all(text.as_bytes()) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(1);
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn stage(name: &str, e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: format!("{name}: {e}") }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Pipeline(args) => cmd_pipeline(&args),
        Command::Eval { expression, panel, out } => cmd_eval(&expression, &panel, out.as_deref()),
        Command::Select(args) => cmd_select(&args),
        Command::Train { run, alphas } => cmd_train(&run, &alphas),
        Command::Backtest { panel, alpha, out, k, n, cost_bps } => {
            let cfg = BacktestConfig { k, n, cost_bps, ..Default::default() };
            cmd_backtest(&panel, &alpha, &out, &cfg)
        }
        Command::Catalog { action } => match action {
            CatalogAction::List { catalog } => cmd_catalog_list(catalog.as_deref()),
            CatalogAction::Validate { catalog, panel } => cmd_catalog_validate(catalog.as_deref(), panel.as_deref()),
        },
        Command::Synth { out, seed, tickers, days, signal, signal_regime } => {
            cmd_synth(&out, seed, tickers, days, signal, signal_regime)
        }
        Command::Report { out } => cmd_report(&out),
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.panel {
        c.panel = p.clone();
    }
    if args.catalog.is_some() {
        c.catalog = args.catalog.clone();
    }
    if let Some(o) = &args.out {
        c.out = o.clone();
    }
    if let Some(s) = args.seed {
        c.provider.seed = s;
        c.train.seed = s;
    }
    let sel = &mut c.selection;
    sel.threshold = args.threshold.unwrap_or(sel.threshold);
    sel.w_c = args.w_c.unwrap_or(sel.w_c);
    sel.w_r = args.w_r.unwrap_or(sel.w_r);
    sel.llm_blend = args.llm_blend.unwrap_or(sel.llm_blend);
    c.provider.kind = args.provider.unwrap_or(c.provider.kind);
    c.fallback = args.fallback.unwrap_or(c.fallback);
    let bt = &mut c.backtest;
    bt.horizon = args.horizon.unwrap_or(bt.horizon);
    bt.k = args.k.unwrap_or(bt.k);
    bt.n = args.n.unwrap_or(bt.n);
    bt.cost_bps = args.cost_bps.unwrap_or(bt.cost_bps);
    c.train.max_epochs = args.max_epochs.unwrap_or(c.train.max_epochs);
    c.train.patience = c.train.patience.min(c.train.max_epochs);
    if c.panel.as_os_str().is_empty() {
        return Err(usage("no panel given (--panel or [paths] panel)"));
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} file not found: {}", path.display())))
    }
}

fn read_panel(path: &Path) -> Result<MarketPanel, Failure> {
    require_file(path, "panel")?;
    let loaded =
        load_panel(path, &PanelSchema::default()).map_err(|e| stage("load", format!("{}: {e}", path.display())))?;
    for w in &loaded.warnings {
        warn!("panel row {} {} dropped: {}", w.date, w.ticker, w.reason);
    }
    Ok(loaded.panel)
}

fn read_catalog(path: Option<&Path>) -> Result<AlphaCatalog, Failure> {
    match path {
        None => Ok(AlphaCatalog::builtin()),
        Some(p) => {
            require_file(p, "catalog")?;
            load_catalog(p).map_err(|e| stage("catalog", format!("{}: {e}", p.display())))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("output directory {}: {e}", dir.display())))
}

fn cmd_pipeline(args: &RunArgs) -> CliResult {
    let cfg = resolve(args)?;
    ensure_dir(&cfg.out)?;
    let out = run_pipeline(&cfg).map_err(|e| stage("pipeline", e))?;
    let m = &out.metrics;
    say!(
        "selected {} alphas, trained on {}{}",
        out.selection.selected.len(),
        out.used.len(),
        if out.fallback_used { " (category argmax fallback)" } else { "" }
    );
    say!(
        "test: cumulative return {:.4}, sharpe {}, max drawdown {:.4}, mean IC {}",
        m.cumulative_return,
        fmt_opt(m.sharpe),
        m.max_drawdown,
        fmt_opt(m.mean_ic)
    );
    say!("artifacts in {}", cfg.out.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn cmd_eval(expression: &str, panel: &Path, out: Option<&Path>) -> CliResult {
    let expr = parse(expression).map_err(|e| usage(format!("expression: {e}")))?;
    let panel = read_panel(panel)?;
    let series = evaluate(&expr, &panel.full()).map_err(|e| stage("eval", e))?;
    match out {
        Some(p) => series.write_csv(create(p)?),
        None => {
            let mut buf = Vec::new();
            series.write_csv(&mut buf).map_err(|e| stage("eval", e))?;
            emit(&String::from_utf8_lossy(&buf));
            Ok(())
        }
    }
    .map_err(|e| stage("eval", e))
}

fn cmd_select(args: &RunArgs) -> CliResult {
    let cfg = resolve(args)?;
    ensure_dir(&cfg.out)?;
    let panel = read_panel(&cfg.panel)?;
    let catalog = read_catalog(cfg.catalog.as_deref())?;
    let scoring = score_catalog(&panel, &catalog, &cfg).map_err(|e| stage("select", e))?;
    let selection = select_alphas(&catalog, &scoring.scores, &cfg.selection).map_err(|e| stage("select", e))?;
    let mut w = create(&cfg.out.join("scores.csv"))?;
    write_scores(&mut w, &catalog, &scoring.scores, &selection, &cfg.selection).map_err(|e| stage("select", e))?;
    w.flush().map_err(|e| stage("select", e))?;
    let (chosen, fallback) = chosen_alphas(&selection, &cfg).map_err(|e| stage("select", e))?;
    let subset = catalog.subset(&chosen);
    subset.save(cfg.out.join("selected.manifest")).map_err(|e| stage("select", e))?;
    say!("current regime: {}", scoring.current_regime);
    for e in subset.entries() {
        say!("{}", e.key());
    }
    if fallback {
        say!("(nothing passed the threshold; category argmax set)");
    }
    Ok(())
}

fn cmd_train(args: &RunArgs, alphas: &Path) -> CliResult {
    let cfg = resolve(args)?;
    let panel = read_panel(&cfg.panel)?;
    let catalog = read_catalog(Some(alphas))?;
    let (series, skipped) = evaluate_catalog(&panel, &catalog);
    if let Some((k, why)) = skipped.iter().next() {
        return Err(stage("train", format!("{k} cannot be evaluated: {why:?}")));
    }
    let keys: Vec<_> = catalog.entries().iter().map(|e| e.key()).collect();
    let fit = fit_weights(&panel, &series, &keys, &cfg).map_err(|e| stage("train", e))?;
    let mut w = create(&cfg.out.join("model.txt"))?;
    w.write_all(fit.training.model.to_checkpoint().as_bytes()).map_err(|e| stage("train", e))?;
    w.flush().map_err(|e| stage("train", e))?;
    fit.weights.write_csv(create(&cfg.out.join("weights.csv"))?).map_err(|e| stage("train", e))?;
    say!("best epoch {} of {}", fit.training.best_epoch, fit.training.val_mse.len());
    for (id, wt) in fit.weights.alpha_ids.iter().zip(&fit.weights.weights) {
        say!("{wt:>12.6}  {id}");
    }
    Ok(())
}

fn cmd_backtest(panel_path: &Path, alpha_path: &Path, out: &Path, cfg: &BacktestConfig) -> CliResult {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let panel = read_panel(panel_path)?;
    require_file(alpha_path, "alpha")?;
    let file = File::open(alpha_path).map_err(|e| usage(format!("{}: {e}", alpha_path.display())))?;
    let alpha = AlphaSeries::read_csv("alpha", file)
        .map_err(|e| stage("backtest", format!("{}: {e}", alpha_path.display())))?;
    let (first, last) = match (alpha.dates.first(), alpha.dates.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(stage("backtest", "alpha series has no dates")),
    };
    let (start, end) = match (panel.date_index(first), panel.date_index(last)) {
        (Some(s), Some(e)) => (s, e + 1),
        _ => return Err(stage("backtest", "alpha dates are outside the panel")),
    };
    let names: Vec<&str> = alpha.tickers.iter().map(String::as_str).collect();
    let slice = panel.window(start, end).and_then(|s| s.with_tickers(&names)).map_err(|e| stage("backtest", e))?;
    let run = run_backtest(&alpha, &slice, cfg).map_err(|e| stage("backtest", e))?;
    let bench = panel.equal_weight_index().ok_or_else(|| stage("backtest", "panel has no CLOSE field"))?;
    let bench: Vec<f64> = bench[start..end].iter().map(|v| v / bench[start]).collect();
    let nw = run.net_worth();
    let write_err = |e: alphaforge::backtest::BacktestError| stage("backtest", e);
    let metrics = compute_metrics(&nw, cfg).map_err(write_err)?;
    let benchmark = compute_metrics(&bench, cfg).map_err(write_err)?;
    let csv_err = |e: csv::Error| stage("backtest", e);
    write_report(&run, &bench, cfg.k, create(&out.join("report.csv"))?).map_err(csv_err)?;
    write_plot_data(slice.dates(), &nw, &bench, create(&out.join("plot.csv"))?).map_err(csv_err)?;
    write_metrics(&[("strategy", metrics), ("benchmark", benchmark)], create(&out.join("metrics.csv"))?)
        .map_err(csv_err)?;
    if run.skip_count() > 0 {
        warn!("{} days had fewer than k = {} rankable tickers", run.skip_count(), cfg.k);
    }
    say!("cumulative return {:.4}, sharpe {}", metrics.cumulative_return, fmt_opt(metrics.sharpe));
    Ok(())
}

fn cmd_catalog_list(path: Option<&Path>) -> CliResult {
    let catalog = read_catalog(path)?;
    say!("catalog version {}, {} entries", catalog.version(), catalog.len());
    for cat in catalog.categories() {
        let entries = catalog.filter_by_category(cat).map_err(|e| stage("catalog", e))?;
        say!("{cat} ({})", entries.len());
        for e in entries {
            say!("  {} = {}", e.name, e.expression);
        }
    }
    Ok(())
}

fn cmd_catalog_validate(path: Option<&Path>, panel: Option<&Path>) -> CliResult {
    let catalog = read_catalog(path)?;
    say!("ok: {} entries in {} categories", catalog.len(), catalog.categories().len());
    for cat in catalog.categories() {
        let n = catalog.filter_by_category(cat).map_err(|e| stage("catalog", e))?.len();
        say!("  {cat}: {n}");
    }
    if let Some(p) = panel {
        let panel = read_panel(p)?;
        let (series, skipped) = evaluate_catalog(&panel, &catalog);
        let mut failed = 0;
        for (k, why) in &skipped {
            if let alphaforge::agents::ScoreOutcome::Skipped(msg) = why {
                if msg.starts_with("missing fields") {
                    say!("  skipped {k}: {msg}");
                } else {
                    failed += 1;
                    eprintln!("  failed {k}: {msg}");
                }
            }
        }
        say!("evaluated {} entries on {}", series.len(), p.display());
        if failed > 0 {
            return Err(stage("catalog", format!("{failed} entries failed to evaluate")));
        }
    }
    Ok(())
}

fn cmd_synth(
    out: &Path,
    seed: u64,
    tickers: usize,
    days: usize,
    signal: Option<f64>,
    regime: Option<Regime>,
) -> CliResult {
    let mut spec = SynthSpec::new(seed, tickers, days);
    if let Some(c) = signal {
        let mut s = SignalSpec::new(c);
        if let Some(r) = regime {
            s = s.only_in(r);
        }
        spec = spec.with_signal(s);
    }
    let panel = spec.generate().map_err(|e| usage(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    save_panel(&panel, out).map_err(|e| stage("synth", e))?;
    say!("wrote {} tickers x {} days to {}", panel.n_tickers(), panel.n_dates(), out.display());
    Ok(())
}

fn cmd_report(out: &Path) -> CliResult {
    let manifest = out.join(MANIFEST);
    require_file(&manifest, "MANIFEST")?;
    let text = std::fs::read_to_string(&manifest).map_err(|e| stage("report", e))?;
    say!(
        "completed stages: {}",
        text.lines().map(|l| l.split('\t').next().unwrap_or("")).collect::<Vec<_>>().join(", ")
    );
    let missing: Vec<_> = ARTIFACTS.iter().filter(|a| !out.join(a).is_file()).collect();
    if !missing.is_empty() {
        say!("missing artifacts: {}", missing.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "));
    }
    for (file, title) in [("metrics.csv", "metrics"), ("weights.csv", "weights")] {
        let path = out.join(file);
        if !path.is_file() {
            continue;
        }
        say!("\n{title}");
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| stage("report", e))?;
        let header = rdr.headers().map_err(|e| stage("report", e))?.clone();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| stage("report", e))?;
            let label = rec.get(0).unwrap_or("");
            let cells: Vec<String> = header.iter().zip(rec.iter()).skip(1).map(|(h, v)| format!("{h}={v}")).collect();
            say!("  {label}: {}", cells.join("  "));
        }
    }
    Ok(())
}
