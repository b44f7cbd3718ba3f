//! The formulaic alpha language.
//!
//! ```text
//! expr       = comparison ;                       (* comparisons only inside IF(cond, …) *)
//! comparison = additive [ ( ">" | "<" | ">=" | "<=" | "==" ) additive ] ;
//! additive   = term { ( "+" | "-" ) term } ;
//! term       = unary { ( "*" | "/" ) unary } ;
//! unary      = ( "-" | "+" ) unary | power ;
//! power      = primary [ "^" unary ] ;            (* right associative *)
//! primary    = number | "(" expr ")" | ident [ "(" [ expr { "," expr } ] ")" ] ;
//! number     = digit { digit } [ "." { digit } ] ;
//! ```
//!
//! Window arguments must be positive integer literals. `RSI`, `ATR`, `MACD`,
//! `UPPER_BAND`/`LOWER_BAND` (`BOLL_UP`/`BOLL_DOWN`), `TYPICAL_PRICE`, `RETURNS`
//! (`RETURN`) and `DRAWDOWN` may be written bare and are expanded at parse time.
//! Any other identifier not followed by `(` is a panel field.

mod analyze;
mod ast;
mod parser;

pub use analyze::{analyze, ExprKind, ExprMeta};
pub use ast::{print, Arg, BinaryOp, Expr, Func, Signature, UnaryOp, WindowArg};
pub use parser::{parse, ParseError, ParseErrorKind, MAX_DEPTH, MAX_WINDOW};
