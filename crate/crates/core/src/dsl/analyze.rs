use std::collections::BTreeSet;

use super::ast::{Arg, Expr, Func};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprKind {
    /// Per-ticker expression (including pointwise ones with zero lookback).
    TimeSeries,
    CrossSection,
    Mixed,
}

/// Static facts about an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprMeta {
    pub required_fields: BTreeSet<String>,
    /// Leading dates whose output is necessarily missing.
    pub max_lookback: usize,
    pub kind: ExprKind,
}

pub fn analyze(expr: &Expr) -> ExprMeta {
    let mut fields = BTreeSet::new();
    let (mut ts, mut cs) = (false, false);
    let max_lookback = walk(expr, &mut fields, &mut ts, &mut cs);
    let kind = match (ts, cs) {
        (false, true) => ExprKind::CrossSection,
        (true, true) => ExprKind::Mixed,
        _ => ExprKind::TimeSeries,
    };
    ExprMeta { required_fields: fields, max_lookback, kind }
}

/// Lookback contributed by a call on top of its argument's lookback.
pub(crate) fn window_depth(func: Func, window: Option<u32>) -> usize {
    let w = window.unwrap_or(0) as usize;
    match func {
        Func::Delay => w,
        Func::Sma | Func::Mean | Func::Ema | Func::Std | Func::Var | Func::Min | Func::Max | Func::MeanDev => {
            w.saturating_sub(1)
        }
        Func::Sum => w.saturating_sub(1),
        Func::Rsi | Func::Atr => w,
        Func::Abs | Func::Sign | Func::Log | Func::Sqrt | Func::CsRank | Func::CsZscore => 0,
    }
}

fn walk(expr: &Expr, fields: &mut BTreeSet<String>, ts: &mut bool, cs: &mut bool) -> usize {
    match expr {
        Expr::Literal(_) => 0,
        Expr::Field(name) => {
            fields.insert(name.clone());
            0
        }
        Expr::Unary(_, x) => walk(x, fields, ts, cs),
        Expr::Binary(_, l, r) => walk(l, fields, ts, cs).max(walk(r, fields, ts, cs)),
        Expr::If(c, a, b) => {
            let lc = walk(c, fields, ts, cs);
            let la = walk(a, fields, ts, cs);
            let lb = walk(b, fields, ts, cs);
            lc.max(la).max(lb)
        }
        Expr::Call(func, args) => {
            *ts |= func.is_time_series();
            *cs |= func.is_cross_section();
            match func {
                Func::Rsi => {
                    fields.insert("CLOSE".into());
                }
                Func::Atr => {
                    fields.extend(["HIGH", "LOW", "CLOSE"].map(String::from));
                }
                _ => {}
            }
            let mut inner = 0;
            let mut window = None;
            for a in args {
                match a {
                    Arg::Expr(e) => inner = inner.max(walk(e, fields, ts, cs)),
                    Arg::Window(w) => window = Some(*w),
                }
            }
            inner + window_depth(*func, window)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn meta(s: &str) -> ExprMeta {
        analyze(&parse(s).unwrap())
    }

    #[test]
    fn dpo_lookback_is_twenty() {
        let m = meta("(CLOSE - DELAY(SMA(CLOSE, 14), 7))");
        assert_eq!(m.max_lookback, 20);
        assert_eq!(m.required_fields, BTreeSet::from(["CLOSE".to_string()]));
        assert_eq!(m.kind, ExprKind::TimeSeries);
    }

    #[test]
    fn leaf_and_pointwise() {
        assert_eq!(meta("CLOSE").max_lookback, 0);
        let pe = meta("CLOSE / EPS");
        assert_eq!(pe.max_lookback, 0);
        assert_eq!(pe.required_fields, BTreeSet::from(["CLOSE".to_string(), "EPS".to_string()]));
    }

    #[test]
    fn kinds() {
        let m = meta("CS_RANK(CLOSE)");
        assert_eq!((m.kind, m.max_lookback), (ExprKind::CrossSection, 0));
        assert_eq!(meta("CS_RANK(DELAY(CLOSE, 2))").kind, ExprKind::Mixed);
    }

    #[test]
    fn indicator_fields_and_depths() {
        let rsi = meta("RSI");
        assert_eq!(rsi.max_lookback, 14);
        assert!(rsi.required_fields.contains("CLOSE"));
        let atr = meta("ATR(10)");
        assert_eq!(atr.max_lookback, 10);
        assert_eq!(atr.required_fields.len(), 3);
        assert_eq!(meta("EMA(CLOSE, 20)").max_lookback, 19);
        assert_eq!(meta("SUM(VOLUME)").max_lookback, 0);
        assert_eq!(meta("IF(DELAY(CLOSE, 3) > 0, SMA(CLOSE, 5), 0)").max_lookback, 4);
    }

    #[test]
    fn idempotent_and_sibling_order_free() {
        let a = parse("SMA(CLOSE, 5) + DELAY(VOLUME, 9)").unwrap();
        let b = parse("DELAY(VOLUME, 9) + SMA(CLOSE, 5)").unwrap();
        assert_eq!(analyze(&a), analyze(&b));
        assert_eq!(analyze(&a), analyze(&parse(&a.to_string()).unwrap()));
    }
}
