use std::collections::BTreeMap;

use alphaforge::agents::{
    classify_regimes, information_coefficient, select_alphas, AgentScore, IcMethod, RegimeParams, ScoreOutcome,
    SelectionConfig,
};
use alphaforge::backtest::{compute_metrics, run_backtest, BacktestConfig};
use alphaforge::catalog::{load_catalog, parse_manifest, AlphaKey};
use alphaforge::dsl::{analyze, parse, print, Arg, BinaryOp, Expr, Func, UnaryOp, WindowArg};
use alphaforge::eval::{evaluate, AlphaSeries};
use alphaforge::market::{is_missing, synth::business_days, MarketPanel};
use alphaforge::mlp::{combine, MlpModel};
use chrono::NaiveDate;
use proptest::prelude::*;

const FIELDS: [&str; 6] = ["CLOSE", "OPEN", "HIGH", "LOW", "VOLUME", "VWAP"];

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..1000.0).prop_map(Expr::Literal),
        (0u32..50).prop_map(|v| Expr::Literal(v as f64)),
        prop::sample::select(FIELDS.to_vec()).prop_map(Expr::field),
    ]
}

fn call(func: Func, x: Expr, window: u32, with_optional: bool) -> Expr {
    let sig = func.signature();
    let mut args = Vec::new();
    if sig.exprs == 1 {
        args.push(Arg::Expr(x));
    }
    match sig.window {
        WindowArg::None => {}
        WindowArg::Required | WindowArg::Optional(Some(_)) => args.push(Arg::Window(window)),
        WindowArg::Optional(None) => {
            if with_optional {
                args.push(Arg::Window(window))
            }
        }
    }
    Expr::Call(func, args)
}

/// Trees in canonical parsed form, depth at most 6.
fn expr_tree() -> impl Strategy<Value = Expr> {
    let arith = prop::sample::select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Pow]);
    let cmp = prop::sample::select(vec![BinaryOp::Gt, BinaryOp::Lt, BinaryOp::Ge, BinaryOp::Le, BinaryOp::Eq]);
    leaf().prop_recursive(5, 48, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|x| Expr::Unary(UnaryOp::Neg, Box::new(x))),
            (arith.clone(), inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (prop::sample::select(Func::ALL.to_vec()), inner.clone(), 1u32..60, any::<bool>())
                .prop_map(|(f, x, w, opt)| call(f, x, w, opt)),
            (cmp.clone(), inner.clone(), inner.clone(), inner.clone(), inner).prop_map(|(op, a, b, x, y)| Expr::If(
                Box::new(Expr::binary(op, a, b)),
                Box::new(x),
                Box::new(y)
            )),
        ]
    })
}

fn dates(n: usize) -> Vec<NaiveDate> {
    business_days(NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(), n)
}

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("T{i:02}")).collect()
}

fn panel(fields: Vec<(&str, Vec<f64>)>, nt: usize, nd: usize) -> MarketPanel {
    let map: BTreeMap<String, Vec<f64>> = fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    MarketPanel::new(dates(nd), tickers(nt), map).unwrap()
}

fn series(values: Vec<f64>, nt: usize, nd: usize) -> AlphaSeries {
    AlphaSeries::new("s", dates(nd), tickers(nt), values, 0).unwrap()
}

/// Prices with roughly `pct_missing` percent missing cells.
fn maybe_missing(pct_missing: u32) -> impl Strategy<Value = f64> {
    prop_oneof![
        100 - pct_missing => 1.0f64..200.0,
        pct_missing => Just(f64::NAN),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn print_then_parse_is_identity(t in expr_tree()) {
        let text = print(&t);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(print(&back), text);
    }

    #[test]
    fn analyze_ignores_sibling_order(a in expr_tree(), b in expr_tree()) {
        let ab = analyze(&Expr::binary(BinaryOp::Add, a.clone(), b.clone()));
        let ba = analyze(&Expr::binary(BinaryOp::Add, b, a));
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn delay_composes(x in prop::collection::vec(maybe_missing(10), 3 * 40), a in 1u32..8, b in 1u32..8) {
        let p = panel(vec![("CLOSE", x)], 3, 40);
        let whole = evaluate(&parse(&format!("DELAY(CLOSE, {})", a + b)).unwrap(), &p.full()).unwrap();
        let nested = evaluate(&parse(&format!("DELAY(DELAY(CLOSE, {a}), {b})")).unwrap(), &p.full()).unwrap();
        for (u, v) in whole.values().iter().zip(nested.values()) {
            if !is_missing(*u) && !is_missing(*v) {
                prop_assert_eq!(u, v);
            }
        }
    }

    #[test]
    fn cs_rank_ignores_increasing_transforms(x in prop::collection::vec(maybe_missing(10), 6 * 12), shift in -5.0f64..5.0) {
        let y: Vec<f64> = x.iter().map(|v| (v / 50.0).exp() * 3.0 + shift).collect();
        let p = panel(vec![("A", x), ("B", y)], 6, 12);
        let ra = evaluate(&parse("CS_RANK(A)").unwrap(), &p.full()).unwrap();
        let rb = evaluate(&parse("CS_RANK(B)").unwrap(), &p.full()).unwrap();
        for (u, v) in ra.values().iter().zip(rb.values()) {
            prop_assert!(u == v || (u.is_nan() && v.is_nan()), "{} vs {}", u, v);
        }
    }

    #[test]
    fn time_series_warmup_is_missing(t in expr_tree(), close in prop::collection::vec(1.0f64..200.0, 2 * 80)) {
        let meta = analyze(&t);
        prop_assume!(meta.max_lookback < 80 && !meta.required_fields.iter().any(|f| f == "VWAP"));
        let mut fields = vec![];
        for f in ["CLOSE", "OPEN", "HIGH", "LOW", "VOLUME"] {
            fields.push((f, close.clone()));
        }
        let p = panel(fields, 2, 80);
        if let Ok(s) = evaluate(&t, &p.full()) {
            for i in 0..2 {
                prop_assert!(s.row(i)[..meta.max_lookback].iter().all(|v| is_missing(*v)));
            }
        }
    }

    #[test]
    fn ic_is_bounded(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..50)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        for m in [IcMethod::Pearson, IcMethod::Rank] {
            if let Ok(ic) = information_coefficient(&x, &y, m) {
                prop_assert!((-1.0..=1.0).contains(&ic));
            }
        }
    }

    #[test]
    fn argmax_survives_positive_scaling(
        scores in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..20),
        c in 0.01f64..20.0,
        w_c in 0.0f64..=1.0,
    ) {
        let text: String = (0..scores.len()).map(|i| format!("Cat{} | a{i} | CLOSE\n", i % 3)).collect();
        let catalog = parse_manifest(&text).unwrap();
        let cfg = SelectionConfig { w_c, w_r: 1.0 - w_c, threshold: 0.3, per_category_shortlist: 20, llm_blend: 0.0 };
        let book = |k: f64| -> BTreeMap<AlphaKey, ScoreOutcome> {
            catalog.entries().iter().zip(&scores).map(|(e, (t, r))| {
                (e.key(), ScoreOutcome::Scored(AgentScore::new(e.key(), t * k, r * k, cfg.w_c, cfg.w_r)))
            }).collect()
        };
        let a = select_alphas(&catalog, &book(1.0), &cfg).unwrap();
        let b = select_alphas(&catalog, &book(c), &cfg).unwrap();
        let keys = |s: &alphaforge::agents::Selection| s.argmax.iter().map(|x| x.key.clone()).collect::<Vec<_>>();
        prop_assert_eq!(keys(&a), keys(&b));
    }

    #[test]
    fn final_score_is_weighted_sum(t in -1.0f64..1.0, r in 0.0f64..1.0, w_c in 0.0f64..=1.0) {
        let s = AgentScore::new(AlphaKey::new("C", "a"), t, r, w_c, 1.0 - w_c);
        prop_assert!((s.final_score - (w_c * t + (1.0 - w_c) * r)).abs() < 1e-15);
    }

    #[test]
    fn combine_is_linear(
        v1 in prop::collection::vec(maybe_missing(5), 4 * 10),
        v2 in prop::collection::vec(maybe_missing(5), 4 * 10),
        w1 in prop::collection::vec(-2.0f64..2.0, 2),
        w2 in prop::collection::vec(-2.0f64..2.0, 2),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let s = [series(v1, 4, 10), series(v2, 4, 10)];
        let mixed: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let lhs = combine(&mixed, &s, "l").unwrap();
        let c1 = combine(&w1, &s, "1").unwrap();
        let c2 = combine(&w2, &s, "2").unwrap();
        for k in 0..lhs.values().len() {
            let (l, r) = (lhs.values()[k], a * c1.values()[k] + b * c2.values()[k]);
            prop_assert_eq!(is_missing(l), is_missing(r));
            if !is_missing(l) {
                prop_assert!((l - r).abs() <= 1e-9 * (1.0 + r.abs()), "{} vs {}", l, r);
            }
        }
    }

    #[test]
    fn metrics_ignore_price_scale(steps in prop::collection::vec(-0.05f64..0.05, 30..120), c in 0.01f64..100.0) {
        let mut nw = vec![1.0];
        for s in &steps {
            nw.push(nw.last().unwrap() * (1.0 + s));
        }
        let scaled: Vec<f64> = nw.iter().map(|v| v * c).collect();
        let cfg = BacktestConfig::default();
        let (a, b) = (compute_metrics(&nw, &cfg).unwrap(), compute_metrics(&scaled, &cfg).unwrap());
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
        prop_assert!(close(a.cumulative_return, b.cumulative_return));
        prop_assert!(close(a.annual_return, b.annual_return));
        prop_assert!(close(a.volatility, b.volatility));
        prop_assert!(close(a.max_drawdown, b.max_drawdown));
        prop_assert!(close(a.sharpe.unwrap_or(0.0), b.sharpe.unwrap_or(0.0)));
        prop_assert!(close(a.sortino.unwrap_or(0.0), b.sortino.unwrap_or(0.0)));
    }

    #[test]
    fn backtest_ignores_price_scale_and_monotone_alpha_transforms(
        close in prop::collection::vec(5.0f64..50.0, 5 * 30),
        alpha in prop::collection::vec(-1.0f64..1.0, 5 * 30),
        c in 0.1f64..10.0,
        k in 1usize..=5,
    ) {
        let cfg = BacktestConfig { k, n: k.min(2), ..Default::default() };
        let p1 = panel(vec![("CLOSE", close.clone())], 5, 30);
        let p2 = panel(vec![("CLOSE", close.iter().map(|v| v * c).collect())], 5, 30);
        let a1 = series(alpha.clone(), 5, 30);
        let a2 = series(alpha.iter().map(|v| v.powi(3) * 4.0 + 1.0).collect(), 5, 30);
        let r1 = run_backtest(&a1, &p1.full(), &cfg).unwrap();
        let r2 = run_backtest(&a2, &p2.full(), &cfg).unwrap();
        for (d1, d2) in r1.days.iter().zip(&r2.days) {
            prop_assert_eq!(d1.holdings.keys().collect::<Vec<_>>(), d2.holdings.keys().collect::<Vec<_>>());
            prop_assert!((d1.net_worth - d2.net_worth).abs() <= 1e-9 * d1.net_worth);
            prop_assert!(d1.removals + d1.additions <= 2 * cfg.n || d1.additions == k);
        }
    }

    #[test]
    fn regimes_ignore_benchmark_scale(steps in prop::collection::vec(-0.03f64..0.03, 80..200), c in 0.01f64..100.0) {
        let mut bench = vec![100.0];
        for s in &steps {
            bench.push(bench.last().unwrap() * (1.0 + s));
        }
        let d = dates(bench.len());
        let params = RegimeParams { window: 20, threshold: 0.05 };
        let a = classify_regimes(&d, &bench, params).unwrap();
        let scaled: Vec<f64> = bench.iter().map(|v| v * c).collect();
        let b = classify_regimes(&d, &scaled, params).unwrap();
        // Labels may only differ where the trailing return sits on a threshold up to rounding.
        for t in 20..bench.len() {
            let r = bench[t] / bench[t - 20] - 1.0;
            if (r.abs() - 0.05).abs() > 1e-12 {
                prop_assert_eq!(a.labels[t], b.labels[t]);
            }
        }
    }

    #[test]
    fn catalog_survives_save_and_load(
        rows in prop::collection::btree_map(
            ("[A-Z][a-z]{0,6}", "[A-Za-z][A-Za-z0-9]{0,6}( [a-z0-9]{1,4})?"),
            (expr_tree(), prop::sample::select(vec!["builtin", "llm", "user"])),
            1..12,
        ),
    ) {
        let text: String = rows
            .iter()
            .map(|((c, n), (e, p))| format!("{c} | {n} | {} | {p} | 1\n", print(e)))
            .collect();
        let catalog = parse_manifest(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.manifest");
        catalog.save(&path).unwrap();
        let loaded = load_catalog(&path).unwrap();
        prop_assert_eq!(loaded, catalog);
    }

    #[test]
    fn checkpoint_round_trips(n_in in 1usize..6, hidden in 1usize..8, seed in any::<u64>()) {
        let m = MlpModel::new(n_in, hidden, seed).unwrap();
        prop_assert_eq!(MlpModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }
}
