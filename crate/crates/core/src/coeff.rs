//! Coefficient expressions: a small precedence-climbing parser and evaluator.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    = term   { ("+" | "-") term } ;
//! term    = unary  { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;          (* right-associative *)
//! primary = number | ident | ident "(" expr { "," expr } ")" | "(" expr ")" ;
//! ident   = "x" | "y" | "z" | "pi" | function name ;
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)` and `1-2^2` is `-3`.
//! Functions: `sin cos exp log sqrt abs step` (one argument), `min max pow`
//! (two arguments). `step(t)` is 1 for `t >= 0` and 0 otherwise.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Step,
    Min,
    Max,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "step" => Func::Step,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Step => "step",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdent { pos: usize, name: String },
    #[error("function `{name}` at position {pos} takes {expected} argument(s), got {found}")]
    Arity { pos: usize, name: String, expected: usize, found: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownIdent { pos, .. }
            | ParseError::Arity { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("domain error in {what} at ({}, {})", .point[0], .point[1])]
pub struct EvalError {
    pub what: &'static str,
    pub point: [f64; 3],
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

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        let tok = match c {
            b'0'..=b'9' | b'.' => {
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                    self.pos += 1;
                }
                if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                    let mut k = self.pos + 1;
                    if k < self.src.len() && matches!(self.src[k], b'+' | b'-') {
                        k += 1;
                    }
                    if k < self.src.len() && self.src[k].is_ascii_digit() {
                        while k < self.src.len() && self.src[k].is_ascii_digit() {
                            k += 1;
                        }
                        self.pos = k;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            _ => {
                return Err(ParseError::Syntax { pos: start, msg: format!("unexpected character `{}`", c as char) })
            }
        };
        Ok((start, tok))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    peeked: (usize, Tok),
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(usize, Tok), ParseError> {
        let next = self.lex.next()?;
        Ok(std::mem::replace(&mut self.peeked, next))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let (pos, tok) = self.bump()?;
        if tok == want {
            Ok(())
        } else {
            Err(ParseError::Syntax { pos, msg: format!("expected {what}") })
        }
    }

    /// Binary operators at or above `min_prec`: `+ -` = 1, `* /` = 2.
    fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let (op, prec) = match self.peeked.1 {
                Tok::Op('+') => (BinOp::Add, 1),
                Tok::Op('-') => (BinOp::Sub, 1),
                Tok::Op('*') => (BinOp::Mul, 2),
                Tok::Op('/') => (BinOp::Div, 2),
                _ => break,
            };
            if prec < min_prec {
                break;
            }
            self.bump()?;
            let rhs = self.expr(prec + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peeked.1 == Tok::Op('-') {
            self.bump()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peeked.1 == Tok::Op('^') {
            self.bump()?;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (pos, tok) = self.bump()?;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr(0)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "z" => Ok(Expr::Var(Var::Z)),
                "pi" => Ok(Expr::Pi),
                _ => {
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownIdent { pos, name: name.clone() })?;
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.expr(0)?];
                    while self.peeked.1 == Tok::Comma {
                        self.bump()?;
                        args.push(self.expr(0)?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity { pos, name, expected: func.arity(), found: args.len() });
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            Tok::End => Err(ParseError::Syntax { pos, msg: "unexpected end of input".into() }),
            other => Err(ParseError::Syntax { pos, msg: format!("unexpected token {other:?}") }),
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut lex = Lexer { src: text.as_bytes(), pos: 0 };
    let first = lex.next()?;
    let mut p = Parser { lex, peeked: first };
    let e = p.expr(0)?;
    match p.peeked {
        (_, Tok::End) => Ok(e),
        (pos, _) => Err(ParseError::Syntax { pos, msg: "unexpected trailing input".into() }),
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn zero() -> Expr {
        Expr::Num(0.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    /// True if the expression mentions no spatial variable.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => true,
            Expr::Var(_) => false,
            Expr::Neg(a) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
            Expr::Call(_, args) => args.iter().all(Expr::is_constant),
        }
    }

    /// Literal zero after parsing (`0`, `-0`, `0.0`).
    pub fn is_literal_zero(&self) -> bool {
        match self {
            Expr::Num(v) => *v == 0.0,
            Expr::Neg(a) => a.is_literal_zero(),
            _ => false,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        self.eval3([p[0], p[1], 0.0])
    }

    pub fn eval3(&self, p: [f64; 3]) -> Result<f64, EvalError> {
        let err = |what| EvalError { what, point: p };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(Var::X) => p[0],
            Expr::Var(Var::Y) => p[1],
            Expr::Var(Var::Z) => p[2],
            Expr::Neg(a) => -a.eval3(p)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval3(p)?, b.eval3(p)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(err("division"));
                        }
                        a / b
                    }
                    BinOp::Pow => checked_pow(a, b).ok_or_else(|| err("^"))?,
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval3(p)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(err("log"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(err("sqrt"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Step => {
                        if a >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => a.min(args[1].eval3(p)?),
                    Func::Max => a.max(args[1].eval3(p)?),
                    Func::Pow => checked_pow(a, args[1].eval3(p)?).ok_or_else(|| err("pow"))?,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(match self {
                Expr::Call(f, _) => f.name(),
                _ => "arithmetic overflow",
            }))
        }
    }
}

fn checked_pow(a: f64, b: f64) -> Option<f64> {
    if a == 0.0 && b < 0.0 {
        return None;
    }
    if a < 0.0 && b.fract() != 0.0 {
        return None;
    }
    let v = if b == b.trunc() && b.abs() <= i32::MAX as f64 { a.powi(b as i32) } else { a.powf(b) };
    v.is_finite().then_some(v)
}

impl fmt::Display for Expr {
    /// Fully parenthesized, so that printing and re-parsing is the identity on ASTs.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::Z) => f.write_str("z"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{s}{b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

pub type Matrix2<T> = [[T; 2]; 2];

/// Evaluates a 2x2 matrix of expressions.
pub fn eval_matrix(a: &Matrix2<Expr>, p: [f64; 2]) -> Result<[[f64; 2]; 2], EvalError> {
    Ok([[a[0][0].eval(p)?, a[0][1].eval(p)?], [a[1][0].eval(p)?, a[1][1].eval(p)?]])
}

pub fn eval_vector(v: &[Expr; 2], p: [f64; 2]) -> Result<[f64; 2], EvalError> {
    Ok([v[0].eval(p)?, v[1].eval(p)?])
}

/// Smallest eigenvalue of the symmetric part `(A + A^T) / 2`.
pub fn min_sym_eigenvalue(a: [[f64; 2]; 2]) -> f64 {
    let (p, q, r) = (a[0][0], 0.5 * (a[0][1] + a[1][0]), a[1][1]);
    let mean = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    mean - rad
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub samples: usize,
    pub violations: usize,
    /// Smallest symmetric-part eigenvalue over the samples.
    pub min_eigenvalue: f64,
    pub max_abs_entry: f64,
    /// Sample attaining the worst (most violating) margin.
    pub worst_point: [f64; 2],
}

/// Checks `<A xi, xi> >= lambda |xi|^2` and `max |a_ij| <= M` at every sample.
/// Evaluation failures count as violations at that point.
pub fn check_ellipticity(a: &Matrix2<Expr>, lambda: f64, m_bound: f64, samples: &[[f64; 2]]) -> EllipticityReport {
    let mut rep = EllipticityReport {
        pass: true,
        samples: samples.len(),
        violations: 0,
        min_eigenvalue: f64::INFINITY,
        max_abs_entry: 0.0,
        worst_point: samples.first().copied().unwrap_or([0.0, 0.0]),
    };
    let mut worst_margin = f64::INFINITY;
    for &p in samples {
        let Ok(m) = eval_matrix(a, p) else {
            rep.violations += 1;
            rep.pass = false;
            worst_margin = f64::NEG_INFINITY;
            rep.worst_point = p;
            continue;
        };
        let eig = min_sym_eigenvalue(m);
        let entry = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
        rep.min_eigenvalue = rep.min_eigenvalue.min(eig);
        rep.max_abs_entry = rep.max_abs_entry.max(entry);
        let margin = (eig - lambda).min(m_bound - entry);
        if margin < worst_margin {
            worst_margin = margin;
            rep.worst_point = p;
        }
        if eig < lambda || entry > m_bound {
            rep.violations += 1;
            rep.pass = false;
        }
    }
    rep
}

fn default_exponent_p() -> f64 {
    4.0
}

fn default_exponent_q() -> f64 {
    2.0
}

fn zero_vec() -> [Expr; 2] {
    [Expr::zero(), Expr::zero()]
}

fn identity() -> Matrix2<Expr> {
    [[Expr::num(1.0), Expr::zero()], [Expr::zero(), Expr::num(1.0)]]
}

fn unit() -> f64 {
    1.0
}

/// Coefficients of `-div(A grad u) + <H, grad u> + c u = f - div F`, or of the
/// non-divergence operator `-trace(A D^2 u) + <H, grad u> + c u` when `drift`
/// holds the non-divergence drift and `div_a` the column divergence of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    #[serde(default = "identity")]
    pub a: Matrix2<Expr>,
    #[serde(default = "zero_vec")]
    pub drift: [Expr; 2],
    /// `(d1 a11 + d2 a21, d1 a12 + d2 a22)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub div_a: Option<[Expr; 2]>,
    #[serde(default = "Expr::zero")]
    pub c: Expr,
    #[serde(default = "Expr::zero")]
    pub f: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<[Expr; 2]>,
    #[serde(default = "unit")]
    pub lambda: f64,
    #[serde(default = "unit")]
    pub m_bound: f64,
    #[serde(default = "default_exponent_p")]
    pub p: f64,
    #[serde(default = "default_exponent_q")]
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Lower bound of `c`. Certificates call the same number gamma.
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "gamma")]
    pub alpha: Option<f64>,
    /// Scalar dominating `|H|`; defaults to the Euclidean norm of the drift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_bound: Option<Expr>,
}

impl Default for CoefficientSet {
    fn default() -> Self {
        CoefficientSet {
            a: identity(),
            drift: zero_vec(),
            div_a: None,
            c: Expr::zero(),
            f: Expr::zero(),
            flux: None,
            lambda: 1.0,
            m_bound: 1.0,
            p: default_exponent_p(),
            q: default_exponent_q(),
            s: None,
            theta: None,
            alpha: None,
            h_bound: None,
        }
    }
}

impl CoefficientSet {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0) {
            return Err(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.m_bound >= self.lambda) {
            return Err(format!("M = {} must be at least lambda = {}", self.m_bound, self.lambda));
        }
        if !(self.p > 2.0) {
            return Err(format!("p must exceed 2, got {}", self.p));
        }
        if !(self.q > 1.0) {
            return Err(format!("q must exceed 1, got {}", self.q));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(format!("alpha must be positive, got {a}"));
            }
        }
        Ok(())
    }

    pub fn has_flux(&self) -> bool {
        self.flux.as_ref().is_some_and(|f| !(f[0].is_literal_zero() && f[1].is_literal_zero()))
    }

    pub fn drift_is_zero(&self) -> bool {
        self.drift[0].is_literal_zero() && self.drift[1].is_literal_zero()
    }

    pub fn a_is_constant(&self) -> bool {
        self.a.iter().flatten().all(Expr::is_constant)
    }

    /// `h(x)`: the declared bound, or `|H(x)|`.
    pub fn h_value(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        match &self.h_bound {
            Some(h) => h.eval(p),
            None => {
                let d = eval_vector(&self.drift, p)?;
                Ok(d[0].hypot(d[1]))
            }
        }
    }
}
