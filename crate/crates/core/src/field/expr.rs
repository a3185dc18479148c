//! Expression grammar for external fields.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x'k | call | '(' expr ')'
//! call   := 'abs' '(' expr ')' | 'norm' '(' ')' | 'dist' '(' expr (',' expr)* ')'
//! ```
//!
//! `^` binds tighter than unary minus and associates to the right; the other
//! binary operators associate to the left. Coordinates are `x1 … xd`.
//! `norm()` is `|x|` and `dist(p1, …, pd)` is `|x - p|`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index.
    Coord(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Norm,
    Dist(Vec<Expr>),
}

/// A parsed field together with the ambient dimension it was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExpression", into = "RawExpression")]
pub struct FieldExpression {
    expr: Expr,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct RawExpression {
    source: String,
    dim: usize,
}

impl TryFrom<RawExpression> for FieldExpression {
    type Error = Error;
    fn try_from(r: RawExpression) -> Result<Self> {
        parse_field(&r.source, r.dim)
    }
}

impl From<FieldExpression> for RawExpression {
    fn from(f: FieldExpression) -> Self {
        RawExpression { source: f.to_string(), dim: f.dim }
    }
}

impl FieldExpression {
    pub fn new(expr: Expr, dim: usize) -> Self {
        Self { expr, dim }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(eval(&self.expr, x))
    }

    /// Value and ambient gradient by forward-mode differentiation.
    pub fn eval_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let d = eval_dual(&self.expr, x);
        Ok((d.v, d.g))
    }
}

impl fmt::Display for FieldExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(&self.expr, 0, f)
    }
}

fn eval(e: &Expr, x: &[f64]) -> f64 {
    match e {
        Expr::Num(v) => *v,
        Expr::Coord(k) => x[*k],
        Expr::Neg(a) => -eval(a, x),
        Expr::Bin(op, a, b) => {
            let (a, b) = (eval(a, x), eval(b, x));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => pow(a, b),
            }
        }
        Expr::Abs(a) => eval(a, x).abs(),
        Expr::Norm => math::norm(x),
        Expr::Dist(p) => {
            let s: f64 = p.iter().zip(x).map(|(pk, xk)| {
                let t = xk - eval(pk, x);
                t * t
            }).sum();
            math::sqrt(s)
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else {
        math::powf(a, b)
    }
}

struct Dual {
    v: f64,
    g: Vec<f64>,
}

impl Dual {
    fn constant(v: f64, d: usize) -> Self {
        Self { v, g: vec![0.0; d] }
    }

    fn is_constant(&self) -> bool {
        self.g.iter().all(|g| *g == 0.0)
    }
}

fn eval_dual(e: &Expr, x: &[f64]) -> Dual {
    let d = x.len();
    match e {
        Expr::Num(v) => Dual::constant(*v, d),
        Expr::Coord(k) => {
            let mut g = vec![0.0; d];
            g[*k] = 1.0;
            Dual { v: x[*k], g }
        }
        Expr::Neg(a) => {
            let a = eval_dual(a, x);
            Dual { v: -a.v, g: a.g.iter().map(|t| -t).collect() }
        }
        Expr::Bin(op, a, b) => {
            let a = eval_dual(a, x);
            let b = eval_dual(b, x);
            let (v, g): (f64, Vec<f64>) = match op {
                BinOp::Add => (a.v + b.v, a.g.iter().zip(&b.g).map(|(p, q)| p + q).collect()),
                BinOp::Sub => (a.v - b.v, a.g.iter().zip(&b.g).map(|(p, q)| p - q).collect()),
                BinOp::Mul => (a.v * b.v, a.g.iter().zip(&b.g).map(|(p, q)| p * b.v + a.v * q).collect()),
                BinOp::Div => (
                    a.v / b.v,
                    a.g.iter().zip(&b.g).map(|(p, q)| (p * b.v - a.v * q) / (b.v * b.v)).collect(),
                ),
                BinOp::Pow => {
                    let v = pow(a.v, b.v);
                    let da = if b.v == 0.0 { 0.0 } else { b.v * pow(a.v, b.v - 1.0) };
                    let db = if b.is_constant() { 0.0 } else { v * math::ln(a.v) };
                    (v, a.g.iter().zip(&b.g).map(|(p, q)| da * p + if db == 0.0 { 0.0 } else { db * q }).collect())
                }
            };
            Dual { v, g }
        }
        Expr::Abs(a) => {
            let a = eval_dual(a, x);
            let s = if a.v > 0.0 {
                1.0
            } else if a.v < 0.0 {
                -1.0
            } else {
                0.0
            };
            Dual { v: a.v.abs(), g: a.g.iter().map(|t| s * t).collect() }
        }
        Expr::Norm => {
            let r = math::norm(x);
            let g = if r > 0.0 { x.iter().map(|v| v / r).collect() } else { vec![0.0; d] };
            Dual { v: r, g }
        }
        Expr::Dist(p) => {
            let ps: Vec<Dual> = p.iter().map(|e| eval_dual(e, x)).collect();
            let diff: Vec<f64> = x.iter().zip(&ps).map(|(xk, pk)| xk - pk.v).collect();
            let r = math::norm(&diff);
            let mut g = vec![0.0; d];
            if r > 0.0 {
                for (k, pk) in ps.iter().enumerate() {
                    let c = diff[k] / r;
                    g[k] += c;
                    for (j, gj) in g.iter_mut().enumerate() {
                        *gj -= c * pk.g[j];
                    }
                }
            }
            Dual { v: r, g }
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Num(v) if v.is_sign_negative() => PREC_NEG,
        Expr::Neg(_) => PREC_NEG,
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Bin(BinOp::Pow, ..) => 4,
        _ => PREC_ATOM,
    }
}

fn write_expr(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = precedence(e);
    if p < min_prec {
        f.write_str("(")?;
        write_expr(e, 0, f)?;
        return f.write_str(")");
    }
    match e {
        Expr::Num(v) if v.is_sign_negative() => write!(f, "-{}", -v),
        Expr::Num(v) => write!(f, "{v}"),
        Expr::Coord(k) => write!(f, "x{}", k + 1),
        Expr::Neg(a) => {
            f.write_str("-")?;
            write_expr(a, PREC_NEG, f)
        }
        Expr::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", PREC_ADD, PREC_MUL),
                BinOp::Sub => (" - ", PREC_ADD, PREC_MUL),
                BinOp::Mul => ("*", PREC_MUL, PREC_NEG),
                BinOp::Div => ("/", PREC_MUL, PREC_NEG),
                BinOp::Pow => ("^", PREC_ATOM, PREC_NEG),
            };
            write_expr(a, lp, f)?;
            f.write_str(sym)?;
            write_expr(b, rp, f)
        }
        Expr::Abs(a) => {
            f.write_str("abs(")?;
            write_expr(a, 0, f)?;
            f.write_str(")")
        }
        Expr::Norm => f.write_str("norm()"),
        Expr::Dist(p) => {
            f.write_str("dist(")?;
            for (i, a) in p.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expr(a, 0, f)?;
            }
            f.write_str(")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax { offset, message: message.into() }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| syntax(start, format!("malformed number '{text}'")))?;
            if !v.is_finite() {
                return Err(syntax(start, format!("number '{text}' is out of range")));
            }
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].into()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(syntax(start, format!("unexpected character '{c}'"))),
            };
            out.push((tok, start));
            i += c.len_utf8();
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(&name, at),
            other => {
                self.pos -= usize::from(other != Tok::End);
                Err(syntax(at, format!("unexpected {}", describe(&other))))
            }
        }
    }

    fn ident(&mut self, name: &str, at: usize) -> Result<Expr> {
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let k: usize = rest.parse().map_err(|_| syntax(at, "coordinate index too large"))?;
                if k == 0 || k > self.dim {
                    return Err(syntax(at, format!("coordinate {name} out of range 1..={}", self.dim)));
                }
                return Ok(Expr::Coord(k - 1));
            }
        }
        let arity = match name {
            "abs" => 1,
            "norm" => 0,
            "dist" => self.dim,
            _ => return Err(syntax(at, format!("unknown identifier '{name}'"))),
        };
        self.expect(Tok::LParen, "'(' after function name")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            args.push(self.expr()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen, "')'")?;
        if args.len() != arity {
            return Err(syntax(at, format!("{name} takes {arity} argument(s), got {}", args.len())));
        }
        Ok(match name {
            "abs" => Expr::Abs(Box::new(args.pop().expect("arity 1"))),
            "norm" => Expr::Norm,
            _ => Expr::Dist(args),
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Op(c) => format!("'{c}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses a field expression over `x1 … x{dim}`.
pub fn parse_field(source: &str, dim: usize) -> Result<FieldExpression> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, dim };
    let expr = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.offset(), format!("unexpected {}", describe(p.peek()))));
    }
    Ok(FieldExpression { expr, dim })
}
