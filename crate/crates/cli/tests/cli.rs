use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use alphaforge::dsl::parse;
use alphaforge::eval::evaluate;
use alphaforge::market::{load_panel, save_panel, PanelSchema, SignalSpec, SynthSpec};
use alphaforge::pipeline::{ARTIFACTS, MANIFEST};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alphaforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn synth_panel(dir: &Path, tickers: usize, days: usize) -> PathBuf {
    seeded_panel(dir, 11, tickers, days)
}

fn seeded_panel(dir: &Path, seed: u64, tickers: usize, days: usize) -> PathBuf {
    let p = dir.join("panel.csv");
    let panel = SynthSpec::new(seed, tickers, days).with_signal(SignalSpec::new(0.5)).generate().unwrap();
    save_panel(&panel, &p).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_catalog_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_panel(dir.path(), 8, 120);
    let missing = dir.path().join("no_such.manifest");
    let out = run(&["pipeline", "--panel", s(&panel), "--catalog", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains(s(&missing)), "stderr: {}", text(&out.stderr));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_panel_is_a_config_error_naming_the_path() {
    let out = run(&["eval", "CLOSE", "--panel", "/nonexistent/panel.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/nonexistent/panel.csv"));
}

#[test]
fn malformed_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[selection]\nthreshold = \"high\"\n").unwrap();
    let out = run(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let cfg2 = dir.path().join("unknown.toml");
    std::fs::write(&cfg2, "[selection]\ntreshold = 0.1\n").unwrap();
    let out = run(&["pipeline", "--config", s(&cfg2)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("treshold"), "stderr: {}", text(&out.stderr));
}

#[test]
fn catalog_validate_reports_every_category() {
    let out = run(&["catalog", "validate"]);
    assert!(out.status.success());
    let stdout = text(&out.stdout);
    assert!(stdout.contains("9 categories"), "{stdout}");
    for cat in [
        "Momentum",
        "Mean Reversion",
        "Volatility",
        "Fundamental",
        "Liquidity",
        "Quality",
        "Growth",
        "Technical",
        "Macro Economics",
    ] {
        assert!(stdout.lines().any(|l| l.trim_start().starts_with(&format!("{cat}:"))), "{cat} missing in {stdout}");
    }
}

#[test]
fn catalog_validate_rejects_bad_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("bad.manifest");
    std::fs::write(&m, "#@ version = 1\nMomentum | Broken | (CLOSE - | builtin | 1\n").unwrap();
    let out = run(&["catalog", "validate", "--catalog", s(&m)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_matches_library_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = synth_panel(dir.path(), 6, 60);
    let expr = "(CLOSE - DELAY(CLOSE, 14))";
    let out = run(&["eval", expr, "--panel", s(&panel_path)]);
    assert!(out.status.success(), "{}", text(&out.stderr));

    let panel = load_panel(&panel_path, &PanelSchema::default()).unwrap().panel;
    let series = evaluate(&parse(expr).unwrap(), &panel.full()).unwrap();
    let mut expected = Vec::new();
    series.write_csv(&mut expected).unwrap();
    assert_eq!(out.stdout, expected);
}

#[test]
fn eval_rejects_unparseable_expression() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = synth_panel(dir.path(), 4, 30);
    let out = run(&["eval", "DELAY(CLOSE,", "--panel", s(&panel_path)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn backtest_with_k_above_universe_fails() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_panel(dir.path(), 8, 80);
    let alpha = dir.path().join("alpha.csv");
    assert!(run(&["eval", "CLOSE", "--panel", s(&panel), "--out", s(&alpha)]).status.success());
    let out =
        run(&["backtest", "--panel", s(&panel), "--alpha", s(&alpha), "--out", s(&dir.path().join("bt")), "--k", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("k = 9"), "{}", text(&out.stderr));

    let ok = run(&[
        "backtest",
        "--panel",
        s(&panel),
        "--alpha",
        s(&alpha),
        "--out",
        s(&dir.path().join("bt")),
        "--k",
        "4",
        "--n",
        "2",
    ]);
    assert!(ok.status.success(), "{}", text(&ok.stderr));
    for f in ["report.csv", "plot.csv", "metrics.csv"] {
        assert!(dir.path().join("bt").join(f).is_file(), "{f}");
    }
}

fn pipeline(panel: &Path, out: &Path) -> Output {
    run(&["pipeline", "--panel", s(panel), "--out", s(out), "--llm-blend", "0.3", "--seed", "5"])
}

#[test]
fn pipeline_writes_all_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let panel = seeded_panel(dir.path(), 7, 20, 400);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = pipeline(&panel, &a);
    assert!(first.status.success(), "{}", text(&first.stderr));
    assert!(pipeline(&panel, &b).status.success());
    for name in ARTIFACTS.iter().chain([&MANIFEST]) {
        let x = std::fs::read(a.join(name)).unwrap_or_else(|_| panic!("{name} missing"));
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
    let report = run(&["report", "--out", s(&a)]);
    assert!(report.status.success());
    assert!(text(&report.stdout).contains("strategy:"));
}

#[test]
fn select_then_train_round_trips_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_panel(dir.path(), 10, 200);
    let out = dir.path().join("sel");
    let sel = run(&["select", "--panel", s(&panel), "--out", s(&out)]);
    assert!(sel.status.success(), "{}", text(&sel.stderr));
    let manifest = out.join("selected.manifest");
    assert!(out.join("scores.csv").is_file());
    let train = run(&["train", "--panel", s(&panel), "--alphas", s(&manifest), "--out", s(&out), "--max-epochs", "20"]);
    assert!(train.status.success(), "{}", text(&train.stderr));
    assert!(out.join("model.txt").is_file());
    assert!(out.join("weights.csv").is_file());
}

#[test]
fn stage_failure_keeps_partial_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_panel(dir.path(), 8, 160);
    let out_dir = dir.path().join("o");
    let out = run(&["pipeline", "--panel", s(&panel), "--out", s(&out_dir), "--k", "9", "--max-epochs", "20"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = text(&out.stderr);
    assert!(stderr.contains("stage backtest"), "{stderr}");
    let manifest = std::fs::read_to_string(out_dir.join(MANIFEST)).unwrap();
    let stages: Vec<&str> = manifest.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert!(stages.contains(&"train") && stages.contains(&"combine"), "{manifest}");
    assert!(!stages.contains(&"backtest"));
    assert!(out_dir.join("scores.csv").is_file());
    assert!(out_dir.join("weights.csv").is_file());
    assert!(!out_dir.join("report.csv").exists());
}

#[test]
fn unwritable_output_dir_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_panel(dir.path(), 8, 120);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&["pipeline", "--panel", s(&panel), "--out", s(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains(s(&blocker)), "{}", text(&out.stderr));
}
