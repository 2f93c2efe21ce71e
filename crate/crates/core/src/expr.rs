//! A small expression language for user-supplied coefficient fields.
//!
//! Grammar (whitespace is ignored):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | 'x' | 'x1' .. 'xd' | 'r'
//!        | func '(' expr ')' | '(' expr ')' | '|' expr '|'
//! func  := log | ln | exp | sin | cos | tan | tanh | atan | sqrt | abs
//! ```
//!
//! `xi` is the i-th coordinate (1-based). `r` and `|x|` are the Euclidean
//! norm of the point. In dimension one a bare `x` is the coordinate itself;
//! in higher dimensions it may only appear as `|x|`. `^` is right
//! associative and binds tighter than unary minus, so `-x^2` is `-(x^2)`.
//!
//! Examples: `x/(2+x^2)*(0.3 + 2/log(2+x^2))`, `-x2`, `1 + 0.5*sin(|x|)^2`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Log,
    Exp,
    Sin,
    Cos,
    Tan,
    Tanh,
    Atan,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "log" | "ln" => Func::Log,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "atan" => Func::Atan,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Log => v.ln(),
            Func::Exp => v.exp(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Tanh => v.tanh(),
            Func::Atan => v.atan(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Coord(usize),
    Norm,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Coord(i) => x[*i],
            Node::Norm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Node::Neg(a) => -a.eval(x),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if b == b.trunc() && b.abs() <= 64.0 {
                            a.powi(b as i32)
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Node::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    fn uses_norm_or_abs(&self) -> bool {
        match self {
            Node::Const(_) | Node::Coord(_) => false,
            Node::Norm => true,
            Node::Neg(a) => a.uses_norm_or_abs(),
            Node::Bin(_, a, b) => a.uses_norm_or_abs() || b.uses_norm_or_abs(),
            Node::Call(f, a) => *f == Func::Abs || a.uses_norm_or_abs(),
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Node::Const(_) => true,
            Node::Coord(_) | Node::Norm => false,
            Node::Neg(a) | Node::Call(_, a) => a.is_constant(),
            Node::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

/// A parsed scalar expression in the coordinates of a point of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    dim: usize,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Expression {
                pos: 0,
                msg: "dimension must be positive".into(),
            });
        }
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            dim,
            end: source.len(),
        };
        let root = parser.expr()?;
        if let Some((tok, at)) = parser.tokens.get(parser.pos) {
            return Err(Error::Expression {
                pos: *at,
                msg: format!("unexpected {tok:?}"),
            });
        }
        Ok(Self {
            source: source.to_string(),
            dim,
            root,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.root.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the expression does not depend on the point.
    pub fn is_constant(&self) -> bool {
        self.root.is_constant()
    }

    /// True when the expression contains `|..|`, `abs` or `r`; such fields
    /// may be continuous without being differentiable.
    pub fn has_kinks(&self) -> bool {
        self.root.uses_norm_or_abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let v: f64 = text.parse().map_err(|_| Error::Expression {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^()|".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            return Err(Error::Expression {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn at(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            pos: self.at(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, sym: char) -> bool {
        if self.peek() == Some(&Tok::Sym(sym)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: char) -> Result<()> {
        if self.eat(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`"))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(Tok::Sym('|')) => {
                self.pos += 1;
                // `|x|` is the norm in any dimension.
                if self.peek() == Some(&Tok::Ident("x".into()))
                    && self.tokens.get(self.pos + 1).map(|(t, _)| t) == Some(&Tok::Sym('|'))
                {
                    self.pos += 2;
                    return Ok(Node::Norm);
                }
                let inner = self.expr()?;
                self.expect('|')?;
                Ok(Node::Call(Func::Abs, Box::new(inner)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.ident(&name)
            }
            Some(tok) => self.err(format!("unexpected {tok:?}")),
            None => self.err("unexpected end of expression"),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Node> {
        if let Some(func) = Func::from_name(name) {
            self.expect('(')?;
            let arg = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        match name {
            "pi" => Ok(Node::Const(std::f64::consts::PI)),
            "r" => Ok(Node::Norm),
            "x" if self.dim == 1 => Ok(Node::Coord(0)),
            "x" => {
                self.pos -= 1;
                self.err("bare `x` is only allowed in dimension 1; use x1.. or |x|")
            }
            _ => {
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx >= 1 && idx <= self.dim {
                        return Ok(Node::Coord(idx - 1));
                    }
                }
                self.pos -= 1;
                self.err(format!("unknown identifier `{name}`"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src, x.len()).unwrap().eval(x)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("-x^2", &[3.0]), -9.0);
        assert_eq!(ev("2^3^2", &[0.0]), 512.0);
        assert_eq!(ev("(1+2)*3", &[0.0]), 9.0);
        assert_eq!(ev("8/4/2", &[0.0]), 1.0);
    }

    #[test]
    fn coordinates_and_norm() {
        assert_eq!(ev("x1 - x2", &[5.0, 2.0]), 3.0);
        assert_eq!(ev("|x|", &[3.0, 4.0]), 5.0);
        assert_eq!(ev("r", &[3.0, 4.0]), 5.0);
        assert_eq!(ev("|x1 - 7|", &[3.0, 4.0]), 4.0);
        assert_eq!(ev("|x|", &[-2.0]), 2.0);
        assert_eq!(ev("| |x| - 6 |", &[3.0, 4.0]), 1.0);
    }

    #[test]
    fn functions() {
        let x = 1.3f64;
        let want = x / (2.0 + x * x) * (0.3 + 2.0 / (2.0 + x * x).ln());
        let got = ev("x/(2+x^2)*(0.3 + 2/log(2+x^2))", &[x]);
        assert!((got - want).abs() < 1e-15);
        assert!((ev("1 + 0.5*sin(|x|)^2", &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((ev("sqrt(4) + exp(0) + 1e-1", &[0.0]) - 3.1).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        match Expr::parse("x + y", 1) {
            Err(Error::Expression { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("x", 2).is_err());
        assert!(Expr::parse("x3", 2).is_err());
        assert!(Expr::parse("(1 + 2", 1).is_err());
        assert!(Expr::parse("1 2", 1).is_err());
        assert!(Expr::parse("sin x", 1).is_err());
        assert!(Expr::parse("", 1).is_err());
    }

    #[test]
    fn constness() {
        assert!(Expr::parse("2*pi", 3).unwrap().is_constant());
        assert!(!Expr::parse("x2", 3).unwrap().is_constant());
        assert!(Expr::parse("abs(x1)", 3).unwrap().has_kinks());
    }
}
