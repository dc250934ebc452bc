//! Scalar expressions of the time variable `t`.
//!
//! Matrix entries of time-varying systems are written as small arithmetic
//! expressions (`"-(sqrt(4+2*cos(2*t))^2)"`, `"0.5+0.5*sin(pi/2*t)"`). This
//! module holds the tokenizer, a recursive-descent parser and a tree-walking
//! evaluator.
//!
//! Precedence, from tightest to loosest: unary minus/plus, `^` (right
//! associative), `*` `/`, `+` `-` (both left associative). Unary minus binds
//! tighter than `^`, so `-2^2` is `4`; write `-(2^2)` for the other reading.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sqrt,
    Exp,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }
}

/// Parsed expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Pi,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Num(value)
    }

    /// True when the tree contains no reference to `t`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => true,
            Expr::Time => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, ExprError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(t)?,
            Expr::Binary(op, a, b) => {
                let lhs = a.eval(t)?;
                let rhs = b.eval(t)?;
                match op {
                    BinOp::Add => lhs + rhs,
                    BinOp::Sub => lhs - rhs,
                    BinOp::Mul => lhs * rhs,
                    BinOp::Div => {
                        if rhs == 0.0 {
                            return Err(self.domain_error("division by zero"));
                        }
                        lhs / rhs
                    }
                    BinOp::Pow => lhs.powf(rhs),
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain_error("square root of a negative number"));
                        }
                        x.sqrt()
                    }
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain_error("non-finite result"))
        }
    }

    fn domain_error(&self, reason: &str) -> ExprError {
        ExprError::Domain {
            subexpr: self.to_string(),
            reason: reason.to_string(),
        }
    }
}

// Fully parenthesised so that printing then re-parsing rebuilds the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Time => f.write_str("t"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn expected(&self, what: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            message: format!("expected {what}, found {}", self.peek().describe()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.power()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.unary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.power()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "t" => Ok(Expr::Time),
                    "pi" => Ok(Expr::Pi),
                    _ => {
                        let Some(func) = Func::from_name(&name) else {
                            return Err(ExprError::UnknownIdentifier { name, offset });
                        };
                        if *self.peek() != Tok::LParen {
                            return Err(self.expected(&format!("`(` after `{name}`")));
                        }
                        self.bump();
                        let arg = self.expr()?;
                        self.close_paren()?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                }
            }
            _ => Err(self.expected("a number, `t`, `pi`, a function call or `(`")),
        }
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.expected("`)`"))
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        toks: tokenize(source)?,
        pos: 0,
    };
    let expr = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.expected("an operator or end of input"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, t: f64) -> f64 {
        parse(src).unwrap().eval(t).unwrap()
    }

    #[test]
    fn coefficient_expressions() {
        assert_eq!(ev("sqrt(4+2*cos(2*t))", 0.0), 6f64.sqrt());
        assert!((ev("sqrt(4+2*cos(2*t))", 0.0) - 2.449489742783178).abs() < 1e-15);
        assert_eq!(ev("0.5+0.5*sin(pi/2*t)", 0.0), 0.5);
        assert_eq!(ev("t", 1.5), 1.5);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ev("2^3", 123.0), 8.0);
        assert_eq!(ev("-t*t", 3.0), -9.0);
        let k = ev("sqrt(4+2*cos(2*t))", 0.7);
        let direct = (4.0 + 2.0 * (1.4f64).cos()).sqrt();
        assert_eq!(k, direct);
        assert!((k * k - (4.0 + 2.0 * 1.4f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1+2*3", 0.0), 7.0);
        assert_eq!(ev("(1+2)*3", 0.0), 9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("8-4-2", 0.0), 2.0);
        assert_eq!(ev("-2^2", 0.0), 4.0);
        assert_eq!(ev("-(2^2)", 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("1.5e-3*2E2", 0.0), 1.5e-3 * 2e2);
    }

    #[test]
    fn errors() {
        match parse("1 + * 2") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse("2*x") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "x");
                assert_eq!(offset, 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("(1+2"), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("sin 2"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("3 $"), Err(ExprError::Syntax { offset: 2, .. })));

        let e = parse("1 + sqrt(t - 2)").unwrap();
        match e.eval(1.0) {
            Err(ExprError::Domain { subexpr, .. }) => assert_eq!(subexpr, "sqrt((t - 2.0))"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("1/(t-1)").unwrap().eval(1.0), Err(ExprError::Domain { .. })));
        assert!(parse("1/(t-1)").unwrap().eval(2.0).is_ok());
    }

    #[test]
    fn constant_detection() {
        assert!(parse("2*pi").unwrap().is_constant());
        assert!(!parse("2*cos(t)").unwrap().is_constant());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            (1e-9f64..1e-3).prop_map(Expr::Num),
            Just(Expr::Time),
            Just(Expr::Pi),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0..4usize).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k];
                    Expr::Binary(op, Box::new(a), Box::new(b))
                }),
                (inner.clone(), 0..6usize).prop_map(|(e, k)| {
                    let f = [Func::Sin, Func::Cos, Func::Tan, Func::Sqrt, Func::Exp, Func::Abs][k];
                    Expr::Call(f, Box::new(e))
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), ts in proptest::collection::vec(-10.0f64..10.0, 100)) {
            let reparsed = parse(&e.to_string()).unwrap();
            prop_assert_eq!(&reparsed, &e);
            for t in ts {
                match (e.eval(t), reparsed.eval(t)) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "divergent results {:?} vs {:?}", a, b),
                }
            }
        }
    }
}
