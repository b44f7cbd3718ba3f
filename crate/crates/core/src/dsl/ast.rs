use std::fmt;

/// A formulaic alpha as an expression tree.
///
/// Trees produced by the parser never contain negative or non-finite literals (a
/// leading minus is always a [`UnaryOp::Neg`] node); [`fmt::Display`] relies on that
/// to make `parse(print(t)) == t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    Field(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Arg>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Expr(Expr),
    Window(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Gt => ">",
            BinaryOp::Lt => "<",
            BinaryOp::Ge => ">=",
            BinaryOp::Le => "<=",
            BinaryOp::Eq => "==",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinaryOp::Gt | BinaryOp::Lt | BinaryOp::Ge | BinaryOp::Le | BinaryOp::Eq)
    }
}

/// Registered functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Delay,
    Sma,
    Mean,
    Ema,
    Std,
    Var,
    Sum,
    Min,
    Max,
    MeanDev,
    Abs,
    Sign,
    Log,
    Sqrt,
    Rsi,
    Atr,
    CsRank,
    CsZscore,
}

/// How a function takes its trailing window argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowArg {
    None,
    Required,
    /// May be omitted; `Some(d)` fills in `d`, `None` keeps the call window-less.
    Optional(Option<u32>),
}

/// Name, number of expression arguments, and window handling.
#[derive(Debug, Clone, Copy)]
pub struct Signature {
    pub name: &'static str,
    pub exprs: usize,
    pub window: WindowArg,
}

impl Func {
    pub const ALL: [Func; 18] = [
        Func::Delay,
        Func::Sma,
        Func::Mean,
        Func::Ema,
        Func::Std,
        Func::Var,
        Func::Sum,
        Func::Min,
        Func::Max,
        Func::MeanDev,
        Func::Abs,
        Func::Sign,
        Func::Log,
        Func::Sqrt,
        Func::Rsi,
        Func::Atr,
        Func::CsRank,
        Func::CsZscore,
    ];

    pub fn signature(self) -> Signature {
        use WindowArg::{Optional, Required};
        let none = WindowArg::None;
        let (name, exprs, window) = match self {
            Func::Delay => ("DELAY", 1, Required),
            Func::Sma => ("SMA", 1, Required),
            Func::Mean => ("MEAN", 1, Required),
            Func::Ema => ("EMA", 1, Required),
            Func::Std => ("STD", 1, Optional(Some(20))),
            Func::Var => ("VAR", 1, Optional(Some(20))),
            Func::Sum => ("SUM", 1, Optional(Option::None)),
            Func::Min => ("MIN", 1, Required),
            Func::Max => ("MAX", 1, Required),
            Func::MeanDev => ("MEAN_DEV", 1, Required),
            Func::Abs => ("ABS", 1, none),
            Func::Sign => ("SIGN", 1, none),
            Func::Log => ("LOG", 1, none),
            Func::Sqrt => ("SQRT", 1, none),
            Func::Rsi => ("RSI", 0, Required),
            Func::Atr => ("ATR", 0, Required),
            Func::CsRank => ("CS_RANK", 1, none),
            Func::CsZscore => ("CS_ZSCORE", 1, none),
        };
        Signature { name, exprs, window }
    }

    pub fn name(self) -> &'static str {
        self.signature().name
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn is_cross_section(self) -> bool {
        matches!(self, Func::CsRank | Func::CsZscore)
    }

    /// Functions whose value at `t` depends on earlier dates.
    pub fn is_time_series(self) -> bool {
        matches!(
            self,
            Func::Delay
                | Func::Sma
                | Func::Mean
                | Func::Ema
                | Func::Std
                | Func::Var
                | Func::Sum
                | Func::Min
                | Func::Max
                | Func::MeanDev
                | Func::Rsi
                | Func::Atr
        )
    }
}

impl Expr {
    pub fn field(name: &str) -> Expr {
        Expr::Field(name.to_ascii_uppercase())
    }

    pub fn call(func: Func, args: Vec<Arg>) -> Expr {
        Expr::Call(func, args)
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// `func(x, window)` shorthand.
    pub fn rolling(func: Func, x: Expr, window: u32) -> Expr {
        Expr::Call(func, vec![Arg::Expr(x), Arg::Window(window)])
    }

    /// Depth of the tree; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Literal(_) | Expr::Field(_) => 1,
            Expr::Unary(_, x) => 1 + x.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
            Expr::If(c, a, b) => 1 + c.depth().max(a.depth()).max(b.depth()),
            Expr::Call(_, args) => {
                1 + args
                    .iter()
                    .map(|a| match a {
                        Arg::Expr(e) => e.depth(),
                        Arg::Window(_) => 1,
                    })
                    .max()
                    .unwrap_or(0)
            }
        }
    }
}

/// Canonical fully-parenthesized form.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Field(name) => f.write_str(name),
            Expr::Unary(UnaryOp::Neg, x) => write!(f, "(-{x})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::If(c, a, b) => write!(f, "IF({c}, {a}, {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match a {
                        Arg::Expr(e) => write!(f, "{e}")?,
                        Arg::Window(w) => write!(f, "{w}")?,
                    }
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical text of an expression; alias of `expr.to_string()`.
pub fn print(expr: &Expr) -> String {
    expr.to_string()
}
