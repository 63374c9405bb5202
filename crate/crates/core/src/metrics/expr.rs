//! Metric expression language.
//!
//! Arithmetic over metric/parameter names and decimal literals, plus
//! comparisons and boolean connectives for predicates. Precedence, from
//! tightest: unary minus, `* /`, `+ -`, comparisons, `!`, `&&`, `||`. All
//! binary operators are left-associative.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("name `{0}` not found")]
    NameNotFound(String),
    #[error("division by zero")]
    DivByZero,
    #[error("type error: {0}")]
    Type(String),
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Name(String),
    Neg(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Cmp(CmpOp),
    Not,
    And,
    Or,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| ExprError::Syntax {
        pos,
        msg: msg.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = bytes[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| err(start, &format!("malformed number `{text}`")))?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(bytes[start..i].iter().collect())));
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
            ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
            ('=', Some('=')) => (Tok::Cmp(CmpOp::Eq), 2),
            ('!', Some('=')) => (Tok::Cmp(CmpOp::Ne), 2),
            ('&', Some('&')) => (Tok::And, 2),
            ('|', Some('|')) => (Tok::Or, 2),
            ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
            ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
            ('≤', _) => (Tok::Cmp(CmpOp::Le), 1),
            ('≥', _) => (Tok::Cmp(CmpOp::Ge), 1),
            ('≠', _) => (Tok::Cmp(CmpOp::Ne), 1),
            ('!', _) => (Tok::Not, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            _ => return Err(err(start, &format!("unexpected character `{c}`"))),
        };
        out.push((start, tok));
        i += width;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn fail<T>(&self, msg: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.offset(),
            msg: msg.to_string(),
        })
    }

    fn or(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.not()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            lhs = Expr::And(Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Tok::Not) {
            self.bump();
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.add()?;
        while let Some(Tok::Cmp(op)) = self.peek() {
            let op = *op;
            self.bump();
            lhs = Expr::Cmp(op, Box::new(lhs), Box::new(self.add()?));
        }
        Ok(lhs)
    }

    fn add(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => ArithOp::Add,
                Some(Tok::Minus) => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(self.mul()?));
        }
    }

    fn mul(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => ArithOp::Mul,
                Some(Tok::Slash) => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Tok::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Num(_)) => match self.bump() {
                Some(Tok::Num(v)) => Ok(Expr::Num(v)),
                _ => unreachable!(),
            },
            Some(Tok::Ident(_)) => match self.bump() {
                Some(Tok::Ident(name)) => match name.as_str() {
                    "true" => Ok(Expr::Cmp(
                        CmpOp::Eq,
                        Box::new(Expr::Num(1.0)),
                        Box::new(Expr::Num(1.0)),
                    )),
                    "false" => Ok(Expr::Cmp(
                        CmpOp::Ne,
                        Box::new(Expr::Num(1.0)),
                        Box::new(Expr::Num(1.0)),
                    )),
                    _ => Ok(Expr::Name(name)),
                },
                _ => unreachable!(),
            },
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.fail("expected `)`");
                }
                self.bump();
                Ok(inner)
            }
            Some(_) => self.fail("expected a number, a name or `(`"),
            None => self.fail("unexpected end of expression"),
        }
    }
}

/// A parsed, reusable expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricExpr {
    source: String,
    root: Expr,
}

impl MetricExpr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let toks = lex(text)?;
        let mut p = Parser {
            toks,
            pos: 0,
            end: text.chars().count(),
        };
        let root = p.or()?;
        if p.pos < p.toks.len() {
            return p.fail("unexpected trailing input");
        }
        Ok(Self {
            source: text.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Free names, in first-occurrence order.
    pub fn names(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Num(_) => {}
                Expr::Name(n) => {
                    if !out.contains(&n.as_str()) {
                        out.push(n);
                    }
                }
                Expr::Neg(a) | Expr::Not(a) => walk(a, out),
                Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Value, ExprError> {
        eval(&self.root, lookup)
    }

    pub fn eval_number(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        match self.eval(lookup)? {
            Value::Num(v) => Ok(v),
            Value::Bool(_) => Err(ExprError::Type(format!(
                "`{}` is a predicate, a number was expected",
                self.source
            ))),
        }
    }

    pub fn eval_bool(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<bool, ExprError> {
        match self.eval(lookup)? {
            Value::Bool(b) => Ok(b),
            Value::Num(_) => Err(ExprError::Type(format!(
                "`{}` is numeric, a predicate was expected",
                self.source
            ))),
        }
    }
}

impl fmt::Display for MetricExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for MetricExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for MetricExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        MetricExpr::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn num(v: Value, what: &str) -> Result<f64, ExprError> {
    match v {
        Value::Num(x) => Ok(x),
        Value::Bool(_) => Err(ExprError::Type(format!("{what} expects numbers"))),
    }
}

fn boolean(v: Value, what: &str) -> Result<bool, ExprError> {
    match v {
        Value::Bool(b) => Ok(b),
        Value::Num(_) => Err(ExprError::Type(format!("{what} expects predicates"))),
    }
}

fn eval(e: &Expr, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Value, ExprError> {
    Ok(match e {
        Expr::Num(v) => Value::Num(*v),
        Expr::Name(n) => Value::Num(lookup(n).ok_or_else(|| ExprError::NameNotFound(n.clone()))?),
        Expr::Neg(a) => Value::Num(-num(eval(a, lookup)?, "unary `-`")?),
        Expr::Arith(op, a, b) => {
            let x = num(eval(a, lookup)?, "arithmetic")?;
            let y = num(eval(b, lookup)?, "arithmetic")?;
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y == 0.0 {
                        return Err(ExprError::DivByZero);
                    }
                    x / y
                }
            };
            if !r.is_finite() {
                return Err(ExprError::NonFinite);
            }
            Value::Num(r)
        }
        Expr::Cmp(op, a, b) => {
            let x = num(eval(a, lookup)?, "comparison")?;
            let y = num(eval(b, lookup)?, "comparison")?;
            Value::Bool(match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
            })
        }
        Expr::Not(a) => Value::Bool(!boolean(eval(a, lookup)?, "`!`")?),
        Expr::And(a, b) => {
            Value::Bool(boolean(eval(a, lookup)?, "`&&`")? && boolean(eval(b, lookup)?, "`&&`")?)
        }
        Expr::Or(a, b) => {
            Value::Bool(boolean(eval(a, lookup)?, "`||`")? || boolean(eval(b, lookup)?, "`||`")?)
        }
    })
}
