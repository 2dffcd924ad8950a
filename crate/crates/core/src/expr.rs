//! Arithmetic expressions over state variables `x1..xn` and named parameters.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ('-')? power
//! power  := atom ('^' factor)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! so `^` binds tighter than unary minus (`-x1^2` is `-(x1^2)`) and is right
//! associative. Functions come from a fixed table: `exp ln sin cos sqrt pow`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("non-finite value while evaluating `{expr}`")]
    NonFinite { expr: String },
    #[error("parameter `{0}` has no value")]
    MissingParam(String),
    #[error("state has {got} components, expression needs at least {need}")]
    Dimension { got: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }
}

/// Expression tree. Variables are stored zero-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Param(Arc<str>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str, dim: usize, params: &BTreeSet<String>) -> Result<Expr, ParseError> {
        let mut p = Parser { src, pos: 0, dim, params };
        p.skip_ws();
        if p.pos == src.len() {
            return Err(ParseError::Syntax { offset: 0, message: "empty expression".into() });
        }
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    /// Evaluates at state `x`; any non-finite intermediate is an error.
    pub fn eval(&self, x: &[f64], params: &Params) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => *x.get(*i).ok_or(EvalError::Dimension { got: x.len(), need: i + 1 })?,
            Expr::Param(name) => *params
                .get(name.as_ref())
                .ok_or_else(|| EvalError::MissingParam(name.to_string()))?,
            Expr::Neg(a) => -a.eval(x, params)?,
            Expr::Bin(op, a, b) => op.apply(a.eval(x, params)?, b.eval(x, params)?),
            Expr::Call(f, args) => {
                let a = args[0].eval(x, params)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => a.sqrt(),
                    Func::Pow => a.powf(args[1].eval(x, params)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { expr: self.to_string() })
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn depends_on(&self, i: usize) -> bool {
        match self {
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Var(j) => *j == i,
            Expr::Neg(a) => a.depends_on(i),
            Expr::Bin(_, a, b) => a.depends_on(i) || b.depends_on(i),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(i)),
        }
    }

    /// Largest variable index used, plus one.
    pub fn var_bound(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Param(_) => 0,
            Expr::Var(j) => j + 1,
            Expr::Neg(a) => a.var_bound(),
            Expr::Bin(_, a, b) => a.var_bound().max(b.var_bound()),
            Expr::Call(_, args) => args.iter().map(Expr::var_bound).max().unwrap_or(0),
        }
    }

    /// Replaces every parameter by its value and folds constants.
    pub fn bind(&self, params: &Params) -> Result<Expr, EvalError> {
        Ok(match self {
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Param(name) => Expr::Num(
                *params.get(name.as_ref()).ok_or_else(|| EvalError::MissingParam(name.to_string()))?,
            ),
            Expr::Neg(a) => neg(a.bind(params)?),
            Expr::Bin(op, a, b) => bin(*op, a.bind(params)?, b.bind(params)?),
            Expr::Call(f, args) => call(*f, args.iter().map(|a| a.bind(params)).collect::<Result<_, _>>()?),
        })
    }

    /// Symbolic partial derivative with respect to variable `i` (zero-based).
    pub fn diff(&self, i: usize) -> Expr {
        use BinOp::*;
        if !self.depends_on(i) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) | Expr::Param(_) => Expr::Num(0.0),
            Expr::Var(j) => Expr::Num(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(i)),
            Expr::Bin(Add, a, b) => bin(Add, a.diff(i), b.diff(i)),
            Expr::Bin(Sub, a, b) => bin(Sub, a.diff(i), b.diff(i)),
            Expr::Bin(Mul, a, b) => bin(
                Add,
                bin(Mul, a.diff(i), (**b).clone()),
                bin(Mul, (**a).clone(), b.diff(i)),
            ),
            Expr::Bin(Div, a, b) => bin(
                Div,
                bin(
                    Sub,
                    bin(Mul, a.diff(i), (**b).clone()),
                    bin(Mul, (**a).clone(), b.diff(i)),
                ),
                bin(Pow, (**b).clone(), Expr::Num(2.0)),
            ),
            Expr::Bin(Pow, a, b) => pow_rule(a, b, i),
            Expr::Call(f, args) => {
                let a = &args[0];
                let da = a.diff(i);
                match f {
                    Func::Exp => bin(Mul, da, self.clone()),
                    Func::Ln => bin(Div, da, a.clone()),
                    Func::Sin => bin(Mul, da, call(Func::Cos, vec![a.clone()])),
                    Func::Cos => neg(bin(Mul, da, call(Func::Sin, vec![a.clone()]))),
                    Func::Sqrt => bin(Div, da, bin(Mul, Expr::Num(2.0), self.clone())),
                    Func::Pow => pow_rule(a, &args[1], i),
                }
            }
        }
    }
}

fn pow_rule(a: &Expr, b: &Expr, i: usize) -> Expr {
    use BinOp::*;
    if !b.depends_on(i) {
        // d(a^b) = b * a^(b-1) * a'
        return bin(
            Mul,
            bin(Mul, b.clone(), bin(Pow, a.clone(), bin(Sub, b.clone(), Expr::Num(1.0)))),
            a.diff(i),
        );
    }
    // d(a^b) = a^b * (b' ln a + b a' / a)
    bin(
        Mul,
        bin(Pow, a.clone(), b.clone()),
        bin(
            Add,
            bin(Mul, b.diff(i), call(Func::Ln, vec![a.clone()])),
            bin(Div, bin(Mul, b.clone(), a.diff(i)), a.clone()),
        ),
    )
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

/// Builds a binary node, folding literal-only subtrees and the additive and
/// multiplicative identities.
fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    use BinOp::*;
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        let v = op.apply(x, y);
        if v.is_finite() {
            return Expr::Num(v);
        }
    }
    let is = |e: &Expr, v: f64| e.as_num() == Some(v);
    match op {
        Add if is(&a, 0.0) => b,
        Add | Sub if is(&b, 0.0) => a,
        Sub if is(&a, 0.0) => neg(b),
        Mul if is(&a, 0.0) || is(&b, 0.0) => Expr::Num(0.0),
        Mul if is(&a, 1.0) => b,
        Mul | Div if is(&b, 1.0) => a,
        Pow if is(&b, 1.0) => a,
        Pow if is(&b, 0.0) => Expr::Num(1.0),
        _ => Expr::Bin(op, Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, args: Vec<Expr>) -> Expr {
    let folded = match (f, args.as_slice()) {
        (Func::Pow, [Expr::Num(a), Expr::Num(b)]) => Some(a.powf(*b)),
        (Func::Exp, [Expr::Num(a)]) => Some(a.exp()),
        (Func::Ln, [Expr::Num(a)]) => Some(a.ln()),
        (Func::Sin, [Expr::Num(a)]) => Some(a.sin()),
        (Func::Cos, [Expr::Num(a)]) => Some(a.cos()),
        (Func::Sqrt, [Expr::Num(a)]) => Some(a.sqrt()),
        _ => None,
    };
    match folded {
        Some(v) if v.is_finite() => Expr::Num(v),
        _ => Expr::Call(f, args),
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        bin(BinOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        bin(BinOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        bin(BinOp::Mul, self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

/// Canonical printing: binary nodes fully parenthesised, negative literals
/// wrapped, floats in shortest round-trip form. Parsing the output yields an
/// equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    dim: usize,
    params: &'a BTreeSet<String>,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ParseError {
        ParseError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.power()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.factor()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mut look = self.pos + 1;
            if matches!(bytes.get(look), Some(b'+' | b'-')) {
                look += 1;
            }
            if matches!(bytes.get(look), Some(c) if c.is_ascii_digit()) {
                self.pos = look;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => Err(ParseError::Syntax { offset: start, message: format!("bad number `{text}`") }),
        }
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let func = Func::lookup(name).ok_or_else(|| ParseError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            })?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return Err(self.err("expected `)` after function arguments"));
            }
            if args.len() != func.arity() {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("{} takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
            if (1..=self.dim).contains(&idx) && !name[1..].starts_with('0') {
                return Ok(Expr::Var(idx - 1));
            }
        }
        if self.params.contains(name) {
            return Ok(Expr::Param(Arc::from(name)));
        }
        Err(ParseError::UnknownIdentifier { name: name.to_string(), offset: start })
    }
}
