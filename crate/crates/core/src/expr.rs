//! Single-variable arithmetic expressions for coefficient input.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' unary)?          (right-associative)
//! primary := number | ident | ident '(' args ')' | '(' sum ')'
//! ```
//!
//! So `-x^2` is `-(x^2)` and `2^-1` is `2^(-1)`. Functions: `exp log sqrt abs
//! sin cos tanh` (one argument) and `min max pow` (two arguments).
//!
//! Expressions over several coordinates (drift components in dimension `d`)
//! are parsed with [`Expr::parse_multi`]; each identifier in the list binds one
//! slot of the evaluation vector.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("domain error: {0}")]
    Domain(String),
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tanh,
    Min,
    Max,
    Pow,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Sin,
        Func::Cos,
        Func::Tanh,
        Func::Min,
        Func::Max,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Expression tree node. Literals produced by the parser are always
/// non-negative; a leading minus is a [`Node::Neg`].
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with the names of its variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

impl Expr {
    /// Parses `text` as an expression in the single variable `var`.
    pub fn parse(text: &str, var: &str) -> Result<Expr, ExprError> {
        Expr::parse_multi(text, &[var])
    }

    /// Parses `text` with the given variable names, bound positionally at
    /// evaluation time.
    pub fn parse_multi(text: &str, vars: &[&str]) -> Result<Expr, ExprError> {
        if text.trim().is_empty() {
            return Err(ExprError::Syntax { pos: 0, message: "empty expression".into() });
        }
        let tokens = tokenize(text)?;
        let mut parser = Parser { tokens: &tokens, at: 0, vars };
        let root = parser.sum()?;
        match parser.peek() {
            (Tok::End, _) => {}
            (tok, pos) => {
                return Err(ExprError::Syntax {
                    pos,
                    message: format!("expected operator or end of input, found {tok}"),
                })
            }
        }
        Ok(Expr { root, vars: vars.iter().map(|s| s.to_string()).collect() })
    }

    pub fn constant(value: f64) -> Expr {
        Expr { root: Node::Num(value), vars: vec!["x".into()] }
    }

    pub fn from_node(root: Node, vars: Vec<String>) -> Expr {
        Expr { root, vars }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// `Some(v)` when the tree contains no variable reference.
    pub fn as_constant(&self) -> Option<f64> {
        fn has_var(n: &Node) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(_) => true,
                Node::Neg(a) => has_var(a),
                Node::Bin(_, a, b) => has_var(a) || has_var(b),
                Node::Call(_, args) => args.iter().any(has_var),
            }
        }
        if has_var(&self.root) {
            None
        } else {
            eval_node(&self.root, &[]).ok()
        }
    }

    /// Evaluates a single-variable expression.
    pub fn eval(&self, value: f64) -> Result<f64, ExprError> {
        eval_node(&self.root, std::slice::from_ref(&value))
    }

    /// Evaluates with one value per declared variable.
    pub fn eval_at(&self, values: &[f64]) -> Result<f64, ExprError> {
        if values.len() != self.vars.len() {
            return Err(ExprError::Domain(format!("expected {} coordinates, got {}", self.vars.len(), values.len())));
        }
        eval_node(&self.root, values)
    }
}

/// Free-function form of [`Expr::parse`].
pub fn parse_expr(text: &str, var_name: &str) -> Result<Expr, ExprError> {
    Expr::parse(text, var_name)
}

/// Free-function form of [`Expr::eval`].
pub fn eval_expr(e: &Expr, value: f64) -> Result<f64, ExprError> {
    e.eval(value)
}

fn domain(msg: impl Into<String>) -> ExprError {
    ExprError::Domain(msg.into())
}

fn finite(v: f64, what: &str) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(format!("{what} produced a non-finite value")))
    }
}

fn power(base: f64, exp: f64) -> Result<f64, ExprError> {
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(domain(format!("negative base {base} raised to non-integer exponent {exp}")));
    }
    if base == 0.0 && exp < 0.0 {
        return Err(domain("zero raised to a negative power"));
    }
    let v = if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 { base.powi(exp as i32) } else { base.powf(exp) };
    finite(v, "power")
}

fn eval_node(node: &Node, vars: &[f64]) -> Result<f64, ExprError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Var(i) => vars.get(*i).copied().ok_or_else(|| domain(format!("variable slot {i} is unbound"))),
        Node::Neg(a) => Ok(-eval_node(a, vars)?),
        Node::Bin(op, a, b) => {
            let x = eval_node(a, vars)?;
            let y = eval_node(b, vars)?;
            match op {
                BinOp::Add => finite(x + y, "addition"),
                BinOp::Sub => finite(x - y, "subtraction"),
                BinOp::Mul => finite(x * y, "multiplication"),
                BinOp::Div => {
                    if y == 0.0 {
                        Err(domain("division by zero"))
                    } else {
                        finite(x / y, "division")
                    }
                }
                BinOp::Pow => power(x, y),
            }
        }
        Node::Call(f, args) => {
            let x = eval_node(&args[0], vars)?;
            match f {
                Func::Exp => finite(x.exp(), "exp"),
                Func::Log => {
                    if x <= 0.0 {
                        Err(domain(format!("log of non-positive value {x}")))
                    } else {
                        Ok(x.ln())
                    }
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        Err(domain(format!("sqrt of negative value {x}")))
                    } else {
                        Ok(x.sqrt())
                    }
                }
                Func::Abs => Ok(x.abs()),
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
                Func::Tanh => Ok(x.tanh()),
                Func::Min => Ok(x.min(eval_node(&args[1], vars)?)),
                Func::Max => Ok(x.max(eval_node(&args[1], vars)?)),
                Func::Pow => power(x, eval_node(&args[1], vars)?),
            }
        }
    }
}

// Printing is fully parenthesized so that re-parsing reproduces the tree.
fn write_node(node: &Node, vars: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var(i) => match vars.get(*i) {
            Some(name) => f.write_str(name),
            None => write!(f, "${i}"),
        },
        Node::Neg(a) => {
            f.write_str("(-")?;
            write_node(a, vars, f)?;
            f.write_str(")")
        }
        Node::Bin(op, a, b) => {
            f.write_str("(")?;
            write_node(a, vars, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(b, vars, f)?;
            f.write_str(")")
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_node(a, vars, f)?;
            }
            f.write_str(")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, &self.vars, f)
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

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Op(c) => write!(f, "`{c}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'0'..=b'9' | b'.' => {
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
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| ExprError::Syntax { pos: start, message: format!("malformed number `{lit}`") })?;
                out.push((Tok::Num(v), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax { pos: i, message: format!("unexpected character `{ch}`") });
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(Tok, usize)],
    at: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> (Tok, usize) {
        self.tokens[self.at].clone()
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(())
        } else {
            Err(ExprError::Syntax { pos, message: format!("expected {what}, found {tok}") })
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek().0 {
            Tok::Op('-') => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek().0 == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(slot) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(slot));
                }
                let Some(func) = Func::lookup(&name) else {
                    return Err(ExprError::UnknownIdentifier { name, pos });
                };
                self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                let mut args = vec![self.sum()?];
                while self.peek().0 == Tok::Comma {
                    self.bump();
                    args.push(self.sum()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                if args.len() != func.arity() {
                    return Err(ExprError::Syntax {
                        pos,
                        message: format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
                    });
                }
                Ok(Node::Call(func, args))
            }
            other => {
                Err(ExprError::Syntax { pos, message: format!("expected number, identifier or `(`, found {other}") })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, x: f64) -> Result<f64, ExprError> {
        Expr::parse(text, "x")?.eval(x)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*x", 1.0).unwrap(), 5.0);
        assert_eq!(ev("-x^2", 3.0).unwrap(), -9.0);
        assert_eq!(ev("2^3^2", 0.0).unwrap(), 512.0);
        assert_eq!(ev("2^-1", 0.0).unwrap(), 0.5);
        assert_eq!(ev("10-4-3", 0.0).unwrap(), 3.0);
        assert_eq!(ev("8/4/2", 0.0).unwrap(), 1.0);
    }

    #[test]
    fn functions() {
        assert_eq!(ev("exp(-x^2)", 0.0).unwrap(), 1.0);
        assert_eq!(ev("min(1, x)", 3.0).unwrap(), 1.0);
        assert_eq!(ev("max(1, x)", 3.0).unwrap(), 3.0);
        assert_eq!(ev("pow(x, 2)", -3.0).unwrap(), 9.0);
        assert_eq!(ev("abs(x)", -3.0).unwrap(), 3.0);
        assert!(ev("2*exp(1-r^4)/2", 1.0).is_err());
        let e = Expr::parse("2*exp(1-r^4)/2", "r").unwrap();
        assert_eq!(e.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn odd_power_of_negative() {
        assert_eq!(ev("x^3", -2.0).unwrap(), -8.0);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(ev("1.5e3", 0.0).unwrap(), 1500.0);
        assert_eq!(ev("2E-2*x", 1.0).unwrap(), 0.02);
        assert_eq!(ev(".5", 0.0).unwrap(), 0.5);
    }

    #[test]
    fn unbalanced_paren_reports_end_of_input() {
        let err = Expr::parse("min(1, r", "r").unwrap_err();
        match err {
            ExprError::Syntax { pos, .. } => assert_eq!(pos, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            Expr::parse("y+1", "x"),
            Err(ExprError::UnknownIdentifier { ref name, pos: 0 }) if name == "y"
        ));
        assert!(matches!(Expr::parse("gamma(x)", "x"), Err(ExprError::UnknownIdentifier { .. })));
    }

    #[test]
    fn wrong_arity_is_syntax_error() {
        assert!(matches!(Expr::parse("exp(x, 1)", "x"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(ev("1/x", 0.0), Err(ExprError::Domain(_))));
        assert!(matches!(ev("log(x)", 0.0), Err(ExprError::Domain(_))));
        assert!(matches!(ev("sqrt(x)", -1.0), Err(ExprError::Domain(_))));
        assert!(matches!(ev("x^0.5", -1.0), Err(ExprError::Domain(_))));
        assert!(matches!(ev("exp(x)", 1000.0), Err(ExprError::Domain(_))));
    }

    #[test]
    fn multi_variable() {
        let e = Expr::parse_multi("-x1^3 + x2", &["x1", "x2"]).unwrap();
        assert_eq!(e.eval_at(&[2.0, 1.0]).unwrap(), -7.0);
        assert!(e.eval_at(&[1.0]).is_err());
    }

    #[test]
    fn display_reparses() {
        let e = Expr::parse("-x^2 + 3*exp(-x)/max(x, 1e-3)", "x").unwrap();
        let again = Expr::parse(&e.to_string(), "x").unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn constants() {
        assert_eq!(Expr::parse("2*3", "x").unwrap().as_constant(), Some(6.0));
        assert_eq!(Expr::parse("2*x", "x").unwrap().as_constant(), None);
    }
}
