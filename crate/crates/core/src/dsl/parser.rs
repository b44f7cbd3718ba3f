//! Lexer and recursive-descent parser.
//!
//! Precedence, loosest first: comparisons (IF conditions only), `+ -`, `* /`,
//! unary minus, `^` (right associative). Identifiers are case-insensitive and
//! canonicalised to upper case.

use std::fmt;

use super::ast::{Arg, BinaryOp, Expr, Func, UnaryOp, WindowArg};

/// Nesting limit; deeper input is rejected instead of risking the stack.
pub const MAX_DEPTH: usize = 128;
pub const MAX_WINDOW: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the source.
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken { found: String, expected: &'static str },
    UnexpectedEnd { expected: &'static str },
    UnknownFunction(String),
    Arity { function: &'static str, expected: String, found: usize },
    WindowExpected { function: &'static str },
    NonIntegerWindow(String),
    WindowOutOfRange(String),
    UnbalancedParen,
    ComparisonOutsideIf,
    MissingArguments(String),
    TooDeep,
    Empty,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: ", self.pos)?;
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found {found:?}")
            }
            ParseErrorKind::UnexpectedEnd { expected } => write!(f, "unexpected end of input, expected {expected}"),
            ParseErrorKind::UnknownFunction(n) => write!(f, "unknown function {n}"),
            ParseErrorKind::Arity { function, expected, found } => {
                write!(f, "{function} takes {expected} argument(s), found {found}")
            }
            ParseErrorKind::WindowExpected { function } => {
                write!(f, "{function} expects a window as its last argument")
            }
            ParseErrorKind::NonIntegerWindow(s) => write!(f, "window must be a positive integer literal, found {s}"),
            ParseErrorKind::WindowOutOfRange(s) => write!(f, "window {s} outside 1..={MAX_WINDOW}"),
            ParseErrorKind::UnbalancedParen => write!(f, "unbalanced parenthesis"),
            ParseErrorKind::ComparisonOutsideIf => write!(f, "comparison is only allowed in an IF condition"),
            ParseErrorKind::MissingArguments(n) => write!(f, "{n} needs arguments"),
            ParseErrorKind::TooDeep => write!(f, "expression nested deeper than {MAX_DEPTH}"),
            ParseErrorKind::Empty => write!(f, "empty expression"),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(s) | Tok::Ident(s) => s.clone(),
            Tok::Op(s) => s.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Comma => ",".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                if text == "." {
                    return Err(ParseError { pos: start, kind: ParseErrorKind::UnexpectedChar('.') });
                }
                out.push((start, Tok::Num(text.to_string())));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_ascii_uppercase())));
                continue;
            }
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b',' => out.push((start, Tok::Comma)),
            b'+' => out.push((start, Tok::Op("+"))),
            b'-' => out.push((start, Tok::Op("-"))),
            b'*' => out.push((start, Tok::Op("*"))),
            b'/' => out.push((start, Tok::Op("/"))),
            b'^' => out.push((start, Tok::Op("^"))),
            b'>' | b'<' | b'=' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'>', true) => ">=",
                    (b'>', false) => ">",
                    (b'<', true) => "<=",
                    (b'<', false) => "<",
                    (b'=', true) => "==",
                    _ => return Err(ParseError { pos: start, kind: ParseErrorKind::UnexpectedChar('=') }),
                };
                if two {
                    i += 1;
                }
                out.push((start, Tok::Op(op)));
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError { pos: start, kind: ParseErrorKind::UnexpectedChar(ch) });
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    depth: usize,
}

/// Parses an alpha expression.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(ParseError { pos: 0, kind: ParseErrorKind::Empty });
    }
    let mut p = Parser { toks, pos: 0, end: src.len(), depth: 0 };
    let expr = p.comparison(false)?;
    if let Some((at, tok)) = p.toks.get(p.pos) {
        let kind = if *tok == Tok::RParen {
            ParseErrorKind::UnbalancedParen
        } else {
            ParseErrorKind::UnexpectedToken { found: tok.describe(), expected: "operator or end of input" }
        };
        return Err(ParseError { pos: *at, kind });
    }
    Ok(expr)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { pos: self.here(), kind }
    }

    fn expect(&mut self, want: Tok, expected: &'static str) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, t)) if t == want => Ok(()),
            Some((at, t)) => {
                let kind = if want == Tok::RParen {
                    ParseErrorKind::UnbalancedParen
                } else {
                    ParseErrorKind::UnexpectedToken { found: t.describe(), expected }
                };
                Err(ParseError { pos: at, kind })
            }
            None if want == Tok::RParen => Err(self.err(ParseErrorKind::UnbalancedParen)),
            None => Err(self.err(ParseErrorKind::UnexpectedEnd { expected })),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn comparison(&mut self, allow_cmp: bool) -> Result<Expr, ParseError> {
        self.enter()?;
        let lhs = self.additive(allow_cmp)?;
        let op = match self.peek() {
            Some(Tok::Op(">")) => Some(BinaryOp::Gt),
            Some(Tok::Op("<")) => Some(BinaryOp::Lt),
            Some(Tok::Op(">=")) => Some(BinaryOp::Ge),
            Some(Tok::Op("<=")) => Some(BinaryOp::Le),
            Some(Tok::Op("==")) => Some(BinaryOp::Eq),
            _ => None,
        };
        let out = match op {
            None => lhs,
            Some(_) if !allow_cmp => return Err(self.err(ParseErrorKind::ComparisonOutsideIf)),
            Some(op) => {
                self.bump();
                let rhs = self.additive(allow_cmp)?;
                Expr::binary(op, lhs, rhs)
            }
        };
        self.depth -= 1;
        Ok(out)
    }

    fn additive(&mut self, allow_cmp: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative(allow_cmp)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op("+")) => BinaryOp::Add,
                Some(Tok::Op("-")) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative(allow_cmp)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self, allow_cmp: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(allow_cmp)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op("*")) => BinaryOp::Mul,
                Some(Tok::Op("/")) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary(allow_cmp)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self, allow_cmp: bool) -> Result<Expr, ParseError> {
        self.enter()?;
        let out = match self.peek() {
            Some(Tok::Op("-")) => {
                self.bump();
                Expr::Unary(UnaryOp::Neg, Box::new(self.unary(allow_cmp)?))
            }
            Some(Tok::Op("+")) => {
                self.bump();
                self.unary(allow_cmp)?
            }
            _ => self.power(allow_cmp)?,
        };
        self.depth -= 1;
        Ok(out)
    }

    /// `primary ('^' exponent)?` where the exponent may itself carry a unary sign,
    /// so `-x^2` is `-(x^2)` while `x^-2` is `x^(-2)`.
    fn power(&mut self, allow_cmp: bool) -> Result<Expr, ParseError> {
        let base = self.primary(allow_cmp)?;
        if let Some(Tok::Op("^")) = self.peek() {
            self.bump();
            let exp = self.unary(allow_cmp)?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self, allow_cmp: bool) -> Result<Expr, ParseError> {
        let at = self.here();
        match self.bump() {
            None => Err(self.err(ParseErrorKind::UnexpectedEnd { expected: "operand" })),
            Some((_, Tok::Num(text))) => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Expr::Literal(v)),
                _ => Err(ParseError {
                    pos: at,
                    kind: ParseErrorKind::UnexpectedToken { found: text, expected: "finite number" },
                }),
            },
            Some((_, Tok::LParen)) => {
                let inner = self.comparison(allow_cmp)?;
                self.expect(Tok::RParen, ")")?;
                Ok(inner)
            }
            Some((_, Tok::Ident(name))) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.bump();
                    self.call(&name, at)
                } else {
                    self.bare(&name, at)
                }
            }
            Some((pos, Tok::RParen)) => Err(ParseError { pos, kind: ParseErrorKind::UnbalancedParen }),
            Some((pos, t)) => Err(ParseError {
                pos,
                kind: ParseErrorKind::UnexpectedToken { found: t.describe(), expected: "operand" },
            }),
        }
    }

    /// Identifier not followed by `(`: a field, or one of the bare indicator macros.
    fn bare(&self, name: &str, at: usize) -> Result<Expr, ParseError> {
        if let Some(expr) = expand_macro(name, None) {
            return Ok(expr);
        }
        match Func::from_name(name) {
            Some(Func::Rsi) => Ok(Expr::Call(Func::Rsi, vec![Arg::Window(14)])),
            Some(Func::Atr) => Ok(Expr::Call(Func::Atr, vec![Arg::Window(14)])),
            Some(_) => Err(ParseError { pos: at, kind: ParseErrorKind::MissingArguments(name.into()) }),
            None if name == "IF" => Err(ParseError { pos: at, kind: ParseErrorKind::MissingArguments(name.into()) }),
            None => Ok(Expr::Field(name.to_string())),
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expr, ParseError> {
        // Raw argument list: expressions plus the source text of each for window checks.
        let mut raw: Vec<(usize, Expr, Option<String>)> = Vec::new();
        let is_if = name == "IF";
        if self.peek() != Some(&Tok::RParen) {
            loop {
                let start = self.here();
                let literal = match (self.toks.get(self.pos), self.toks.get(self.pos + 1)) {
                    (Some((_, Tok::Num(s))), Some((_, Tok::Comma | Tok::RParen))) => Some(s.clone()),
                    _ => None,
                };
                let allow = is_if && raw.is_empty();
                let e = self.comparison(allow)?;
                raw.push((start, e, literal));
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.bump();
                    }
                    _ => break,
                }
            }
        }
        self.expect(Tok::RParen, ")")?;

        if is_if {
            if raw.len() != 3 {
                return Err(ParseError {
                    pos: at,
                    kind: ParseErrorKind::Arity { function: "IF", expected: "3".into(), found: raw.len() },
                });
            }
            let mut it = raw.into_iter().map(|(_, e, _)| Box::new(e));
            let (c, a, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            return Ok(Expr::If(c, a, b));
        }

        if let Some(m) = macro_with_window(name) {
            if raw.len() != 1 {
                return Err(ParseError {
                    pos: at,
                    kind: ParseErrorKind::Arity { function: m, expected: "1".into(), found: raw.len() },
                });
            }
            let (pos, _, lit) = &raw[0];
            let w = window_value(*pos, lit.as_deref(), m)?;
            return Ok(expand_macro(name, Some(w)).expect("macro with window"));
        }

        let func = Func::from_name(name)
            .ok_or_else(|| ParseError { pos: at, kind: ParseErrorKind::UnknownFunction(name.to_string()) })?;
        let sig = func.signature();
        let (min, max) = match sig.window {
            WindowArg::None => (sig.exprs, sig.exprs),
            WindowArg::Required => (sig.exprs + 1, sig.exprs + 1),
            WindowArg::Optional(_) => (sig.exprs, sig.exprs + 1),
        };
        if raw.len() < min || raw.len() > max {
            let expected = if min == max { min.to_string() } else { format!("{min} or {max}") };
            return Err(ParseError {
                pos: at,
                kind: ParseErrorKind::Arity { function: sig.name, expected, found: raw.len() },
            });
        }
        let has_window = raw.len() > sig.exprs;
        let mut args = Vec::with_capacity(max);
        for (k, (pos, e, lit)) in raw.into_iter().enumerate() {
            if k < sig.exprs {
                args.push(Arg::Expr(e));
            } else {
                args.push(Arg::Window(window_value(pos, lit.as_deref(), sig.name)?));
            }
        }
        if !has_window {
            if let WindowArg::Optional(Some(default)) = sig.window {
                args.push(Arg::Window(default));
            }
        }
        Ok(Expr::Call(func, args))
    }
}

fn window_value(pos: usize, literal: Option<&str>, function: &'static str) -> Result<u32, ParseError> {
    let text = literal.ok_or(ParseError { pos, kind: ParseErrorKind::WindowExpected { function } })?;
    if !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseError { pos, kind: ParseErrorKind::NonIntegerWindow(text.to_string()) });
    }
    match text.parse::<u32>() {
        Ok(w) if (1..=MAX_WINDOW).contains(&w) => Ok(w),
        _ => Err(ParseError { pos, kind: ParseErrorKind::WindowOutOfRange(text.to_string()) }),
    }
}

fn macro_with_window(name: &str) -> Option<&'static str> {
    match name {
        "DRAWDOWN" => Some("DRAWDOWN"),
        _ => None,
    }
}

fn close() -> Expr {
    Expr::Field("CLOSE".into())
}

/// Named indicators that desugar into plain expressions.
fn expand_macro(name: &str, window: Option<u32>) -> Option<Expr> {
    use BinaryOp::*;
    let boll = |op: BinaryOp| {
        Expr::binary(
            op,
            Expr::rolling(Func::Sma, close(), 20),
            Expr::binary(Mul, Expr::Literal(2.0), Expr::rolling(Func::Std, close(), 20)),
        )
    };
    Some(match name {
        "MACD" => Expr::binary(Sub, Expr::rolling(Func::Ema, close(), 12), Expr::rolling(Func::Ema, close(), 26)),
        "BOLL_UP" | "UPPER_BAND" => boll(Add),
        "BOLL_DOWN" | "LOWER_BAND" => boll(Sub),
        "TYPICAL_PRICE" => Expr::binary(
            Div,
            Expr::binary(Add, Expr::binary(Add, Expr::field("HIGH"), Expr::field("LOW")), close()),
            Expr::Literal(3.0),
        ),
        "RETURNS" | "RETURN" => {
            Expr::binary(Sub, Expr::binary(Div, close(), Expr::rolling(Func::Delay, close(), 1)), Expr::Literal(1.0))
        }
        "DRAWDOWN" => Expr::binary(
            Sub,
            Expr::Literal(1.0),
            Expr::binary(Div, close(), Expr::rolling(Func::Max, close(), window.unwrap_or(14))),
        ),
        _ => return None,
    })
}
