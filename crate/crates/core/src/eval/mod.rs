//! Evaluation of alpha expressions over panel slices.
//!
//! Each AST node is computed as a whole `[ticker][date]` matrix: pointwise nodes zip
//! their operands, time-series nodes sweep each ticker row, cross-section nodes sweep
//! each date column. After evaluation every date before the expression's static
//! lookback is forced to missing, so the warmup region is identical for all branches
//! of an `IF`.

mod kernels;
mod series;

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{analyze, Arg, BinaryOp, Expr, Func, UnaryOp};
use crate::market::{is_missing, PanelSlice, MISSING};

pub use kernels::Rolling;
pub(crate) use series::finite;
pub use series::{AlphaSeries, SeriesError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("expression needs field {0:?}, which the panel does not provide")]
    MissingField(String),
    #[error("expression needs {lookback} warmup dates but the slice has only {dates}")]
    WindowTooLong { lookback: usize, dates: usize },
    #[error("slice has no tickers")]
    NoTickers,
    #[error("forward-return horizon must be at least 1")]
    ZeroHorizon,
    #[error("horizon {horizon} does not fit in {dates} dates")]
    HorizonTooLong { horizon: usize, dates: usize },
}

struct Ctx<'s, 'p> {
    slice: &'s PanelSlice<'p>,
    nt: usize,
    nd: usize,
}

type Mat = Vec<f64>;

/// Evaluates `expr` on every (ticker, date) cell of `slice`.
pub fn evaluate(expr: &Expr, slice: &PanelSlice<'_>) -> Result<AlphaSeries, EvalError> {
    let meta = analyze(expr);
    for f in &meta.required_fields {
        if !slice.has_field(f) {
            return Err(EvalError::MissingField(f.clone()));
        }
    }
    let (nt, nd) = (slice.ticker_indices().len(), slice.n_dates());
    if nt == 0 {
        return Err(EvalError::NoTickers);
    }
    if nd <= meta.max_lookback {
        return Err(EvalError::WindowTooLong { lookback: meta.max_lookback, dates: nd });
    }
    let ctx = Ctx { slice, nt, nd };
    let mut values = ctx.eval(expr)?;
    let warmup = meta.max_lookback;
    for row in values.chunks_mut(nd) {
        row[..warmup].fill(MISSING);
    }
    Ok(AlphaSeries::new(expr.to_string(), slice.dates().to_vec(), slice.tickers(), values, warmup)
        .expect("evaluator preserves shape"))
}

/// Evaluates each expression independently; results keep input order and one failure
/// does not affect the others.
pub fn evaluate_batch(exprs: &[Expr], slice: &PanelSlice<'_>) -> Vec<Result<AlphaSeries, EvalError>> {
    exprs.par_iter().map(|e| evaluate(e, slice)).collect()
}

/// `CLOSE[t + h] / CLOSE[t] - 1` within the slice; the last `h` dates are missing.
pub fn forward_returns(slice: &PanelSlice<'_>, horizon: usize) -> Result<AlphaSeries, EvalError> {
    if horizon == 0 {
        return Err(EvalError::ZeroHorizon);
    }
    let nd = slice.n_dates();
    if horizon >= nd {
        return Err(EvalError::HorizonTooLong { horizon, dates: nd });
    }
    let close = slice.field_matrix("CLOSE").map_err(|_| EvalError::MissingField("CLOSE".into()))?;
    let mut out = vec![MISSING; close.len()];
    for (src, dst) in close.chunks(nd).zip(out.chunks_mut(nd)) {
        for t in 0..nd - horizon {
            dst[t] = finite(src[t + horizon] / src[t] - 1.0);
        }
    }
    Ok(AlphaSeries::new(format!("FWD_RET_{horizon}"), slice.dates().to_vec(), slice.tickers(), out, 0)
        .expect("shape preserved"))
}

impl Ctx<'_, '_> {
    fn eval(&self, e: &Expr) -> Result<Mat, EvalError> {
        Ok(match e {
            Expr::Literal(v) => vec![*v; self.nt * self.nd],
            Expr::Field(name) => self.slice.field_matrix(name).map_err(|_| EvalError::MissingField(name.clone()))?,
            Expr::Unary(UnaryOp::Neg, x) => {
                let mut m = self.eval(x)?;
                m.iter_mut().for_each(|v| *v = -*v);
                m
            }
            Expr::Binary(op, l, r) => {
                let mut a = self.eval(l)?;
                let b = self.eval(r)?;
                for (x, &y) in a.iter_mut().zip(&b) {
                    *x = binary(*op, *x, y);
                }
                a
            }
            Expr::If(c, a, b) => {
                let c = self.eval(c)?;
                let mut a = self.eval(a)?;
                let b = self.eval(b)?;
                for ((x, &y), &cond) in a.iter_mut().zip(&b).zip(&c) {
                    *x = if is_missing(cond) {
                        MISSING
                    } else if cond != 0.0 {
                        *x
                    } else {
                        y
                    };
                }
                a
            }
            Expr::Call(func, args) => self.call(*func, args)?,
        })
    }

    fn call(&self, func: Func, args: &[Arg]) -> Result<Mat, EvalError> {
        let window = args.iter().find_map(|a| match a {
            Arg::Window(w) => Some(*w as usize),
            Arg::Expr(_) => None,
        });
        let operand = args.iter().find_map(|a| match a {
            Arg::Expr(e) => Some(e),
            Arg::Window(_) => None,
        });
        let x = match operand {
            Some(e) => Some(self.eval(e)?),
            None => None,
        };
        let n = window.unwrap_or(0);
        let rolling =
            |stat| self.per_ticker(x.as_deref().expect("checked by parser"), |r, o| kernels::rolling(r, n, stat, o));
        Ok(match func {
            Func::Delay => self.per_ticker(x.as_deref().expect("arg"), |r, o| kernels::delay(r, n, o)),
            Func::Sma | Func::Mean => rolling(Rolling::Mean),
            Func::Std => rolling(Rolling::Std),
            Func::Var => rolling(Rolling::Var),
            Func::Min => rolling(Rolling::Min),
            Func::Max => rolling(Rolling::Max),
            Func::MeanDev => rolling(Rolling::MeanDev),
            Func::Sum => match window {
                Some(_) => rolling(Rolling::Sum),
                None => self.per_ticker(x.as_deref().expect("arg"), kernels::cumulative_sum),
            },
            Func::Ema => self.per_ticker(x.as_deref().expect("arg"), |r, o| kernels::ema(r, n, o)),
            Func::Abs => pointwise(x.expect("arg"), f64::abs),
            Func::Sign => pointwise(x.expect("arg"), |v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Func::Log => pointwise(x.expect("arg"), |v| if v > 0.0 { v.ln() } else { MISSING }),
            Func::Sqrt => pointwise(x.expect("arg"), |v| if v >= 0.0 { v.sqrt() } else { MISSING }),
            Func::Rsi => {
                let close = self.field("CLOSE")?;
                self.per_ticker(&close, |r, o| kernels::rsi(r, n, o))
            }
            Func::Atr => {
                let (h, l, c) = (self.field("HIGH")?, self.field("LOW")?, self.field("CLOSE")?);
                let nd = self.nd;
                let mut out = vec![MISSING; h.len()];
                for i in 0..self.nt {
                    let s = i * nd..(i + 1) * nd;
                    kernels::atr(&h[s.clone()], &l[s.clone()], &c[s.clone()], n, &mut out[s]);
                }
                out
            }
            Func::CsRank => self.per_date(&x.expect("arg"), kernels::cs_rank),
            Func::CsZscore => self.per_date(&x.expect("arg"), kernels::cs_zscore),
        })
    }

    fn field(&self, name: &str) -> Result<Mat, EvalError> {
        self.slice.field_matrix(name).map_err(|_| EvalError::MissingField(name.into()))
    }

    fn per_ticker(&self, x: &[f64], f: impl Fn(&[f64], &mut [f64])) -> Mat {
        let mut out = vec![MISSING; x.len()];
        for (src, dst) in x.chunks(self.nd).zip(out.chunks_mut(self.nd)) {
            f(src, dst);
        }
        out
    }

    fn per_date(&self, x: &[f64], f: impl Fn(&[f64], &mut [f64])) -> Mat {
        let (nt, nd) = (self.nt, self.nd);
        let mut out = vec![MISSING; x.len()];
        let mut col = vec![0.0; nt];
        let mut res = vec![0.0; nt];
        for t in 0..nd {
            for i in 0..nt {
                col[i] = x[i * nd + t];
            }
            f(&col, &mut res);
            for i in 0..nt {
                out[i * nd + t] = res[i];
            }
        }
        out
    }
}

fn pointwise(mut m: Mat, f: impl Fn(f64) -> f64) -> Mat {
    for v in m.iter_mut() {
        *v = if is_missing(*v) { MISSING } else { finite(f(*v)) };
    }
    m
}

fn binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    if is_missing(a) || is_missing(b) {
        return MISSING;
    }
    let flag = |c: bool| if c { 1.0 } else { 0.0 };
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                MISSING
            } else {
                a / b
            }
        }
        BinaryOp::Pow => a.powf(b),
        BinaryOp::Gt => flag(a > b),
        BinaryOp::Lt => flag(a < b),
        BinaryOp::Ge => flag(a >= b),
        BinaryOp::Le => flag(a <= b),
        BinaryOp::Eq => flag(a == b),
    };
    finite(v)
}
