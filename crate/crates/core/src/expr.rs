//! A tiny arithmetic expression language for user-defined drifts, bases and
//! disturbances.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 't' | 'pi' | 'x' '[' int ']' '[' int ']'
//!         | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp
//! ```
//!
//! `x[k][d]` is the `d`-th component of the `k`-th derivative block, both 1-based.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Time,
    Var { order: usize, dim: usize },
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    max_order: usize,
    max_dim: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            max_order: 0,
            max_dim: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self {
            source: source.to_string(),
            root,
            max_order: p.max_order,
            max_dim: p.max_dim,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Checks every `x[k][d]` reference fits an `n`×`p` state.
    pub fn check_dims(&self, n: usize, p: usize) -> Result<()> {
        if self.max_order > n || self.max_dim > p {
            return Err(Error::Expression(format!(
                "`{}` references x[{}][{}] but the state is {n} blocks of {p}",
                self.source, self.max_order, self.max_dim
            )));
        }
        Ok(())
    }

    /// Evaluates with `state` laid out block by block (`state[(k-1)*p + d-1]`).
    pub fn eval(&self, state: &[f64], p: usize, t: f64) -> f64 {
        eval(&self.root, state, p, t)
    }
}

fn eval(node: &Node, state: &[f64], p: usize, t: f64) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Time => t,
        Node::Var { order, dim } => state.get((order - 1) * p + (dim - 1)).copied().unwrap_or(f64::NAN),
        Node::Neg(a) => -eval(a, state, p, t),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, state, p, t), eval(b, state, p, t));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => {
                    if b.fract() == 0.0 && b.abs() <= 64.0 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, state, p, t);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    max_order: usize,
    max_dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expression(format!(
            "{msg} at offset {} in `{}`",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => Op::Add,
                Some(b'-') => Op::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => Op::Mul,
                Some(b'/') => Op::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn index(&mut self) -> Result<usize> {
        self.expect(b'[')?;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let idx: usize = std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&v| v >= 1)
            .ok_or_else(|| self.err("expected a 1-based index"))?;
        self.expect(b']')?;
        Ok(idx)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                match ident {
                    "t" => Ok(Node::Time),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "x" => {
                        let order = self.index()?;
                        let dim = self.index()?;
                        self.max_order = self.max_order.max(order);
                        self.max_dim = self.max_dim.max(dim);
                        Ok(Node::Var { order, dim })
                    }
                    "sin" | "cos" | "exp" => {
                        let f = match ident {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            _ => Func::Exp,
                        };
                        self.expect(b'(')?;
                        let arg = self.expr()?;
                        self.expect(b')')?;
                        Ok(Node::Call(f, Box::new(arg)))
                    }
                    other => {
                        self.pos = start;
                        Err(self.err(&format!("unknown identifier `{other}`")))
                    }
                }
            }
            _ => Err(self.err("expected a number, variable or `(`")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        std::str::from_utf8(&s[start..self.pos])
            .ok()
            .and_then(|v| v.parse::<f64>().ok())
            .map(Node::Num)
            .ok_or_else(|| self.err("malformed number"))
    }
}
