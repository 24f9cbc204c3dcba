//! A small arithmetic expression language for nonlinearities, kernels and
//! vector fields.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := expr ('+' | '-') expr          left-assoc
//!          | expr ('*' | '/') expr          left-assoc
//!          | '-' expr                       prefix
//!          | expr '^' expr                  right-assoc
//!          | number | variable | '(' expr ')'
//!          | func '(' expr ')'              sin cos abs sqrt cbrt exp
//!          | ('min' | 'max') '(' expr ',' expr ')'
//!          | 'piecewise' '(' var ';' lo ',' hi ':' expr (';' lo ',' hi ':' expr)* ')'
//! ```
//!
//! Piecewise guards are half-open intervals `[lo, hi)` that must tile
//! `[0, inf)` in order; the last upper bound is written `inf`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("invalid number literal {0:?}")]
    BadNumber(String),
    #[error("unexpected {found}, expected {expected}")]
    Unexpected { found: String, expected: &'static str },
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("malformed piecewise guards: {0}")]
    BadPiecewise(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error in {op} at {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("non-finite result {0}")]
    NonFinite(f64),
    #[error("negative value {value} where a nonnegative one is required")]
    Negative { value: f64 },
    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sin,
    Cos,
    Sqrt,
    Cbrt,
    Exp,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => UnaryOp::Abs,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "sqrt" => UnaryOp::Sqrt,
            "cbrt" => UnaryOp::Cbrt,
            "exp" => UnaryOp::Exp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Abs => "abs",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Cbrt => "cbrt",
            UnaryOp::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub body: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Piecewise { var: usize, pieces: Vec<Piece> },
}

/// A parsed expression together with its variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

/// Left and right pieces disagree at a breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityWarning {
    pub var: String,
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

/// Absolute jump at a piecewise breakpoint above which a warning fires.
pub const CONTINUITY_TOL: f64 = 1e-9;

pub const NONLINEARITY_VARS: [&str; 2] = ["u1", "u2"];

impl Expr {
    /// Parses a nonlinearity in `u1`, `u2`.
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        Self::parse_with_vars(src, &NONLINEARITY_VARS)
    }

    pub fn parse_with_vars(src: &str, vars: &[&str]) -> Result<Self, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, vars, src_len: src.len() };
        let root = p.expr(0)?;
        p.expect_end()?;
        Ok(Self { root, vars: vars.iter().map(|s| s.to_string()).collect() })
    }

    pub fn from_node(root: Node, vars: &[&str]) -> Self {
        Self { root, vars: vars.iter().map(|s| s.to_string()).collect() }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Evaluates at `args` (one per variable). Fails on any non-finite
    /// intermediate or result.
    pub fn evaluate(&self, args: &[f64]) -> Result<f64, EvalError> {
        if args.len() != self.vars.len() {
            return Err(EvalError::Arity { expected: self.vars.len(), got: args.len() });
        }
        eval_node(&self.root, args)
    }

    /// Nonlinearity evaluation: inputs are `(u1, u2)` and the value must be
    /// finite and nonnegative.
    pub fn eval(&self, u1: f64, u2: f64) -> Result<f64, EvalError> {
        let v = match self.vars.len() {
            1 => self.evaluate(&[u1])?,
            _ => self.evaluate(&[u1, u2])?,
        };
        if v < 0.0 {
            return Err(EvalError::Negative { value: v });
        }
        Ok(v)
    }

    /// Breakpoints where adjacent pieces differ by more than [`CONTINUITY_TOL`].
    ///
    /// Pieces that depend on other variables are compared at a few sample
    /// values of those variables.
    pub fn continuity_warnings(&self) -> Vec<ContinuityWarning> {
        let mut out = Vec::new();
        collect_warnings(&self.root, &self.vars, &mut out);
        out
    }

    /// Fully parenthesised source that reparses to the same tree.
    pub fn render(&self) -> String {
        let mut s = String::new();
        render_node(&self.root, &self.vars, &mut s);
        s
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn checked(op: &'static str, arg: f64, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else if v.is_nan() {
        Err(EvalError::Domain { op, arg })
    } else {
        Err(EvalError::NonFinite(v))
    }
}

fn eval_node(node: &Node, args: &[f64]) -> Result<f64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var(i) => {
            let v = args[*i];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(EvalError::NonFinite(v))
            }
        }
        Node::Unary(op, x) => {
            let x = eval_node(x, args)?;
            match op {
                UnaryOp::Neg => Ok(-x),
                UnaryOp::Abs => Ok(x.abs()),
                UnaryOp::Sin => checked("sin", x, x.sin()),
                UnaryOp::Cos => checked("cos", x, x.cos()),
                UnaryOp::Cbrt => Ok(x.cbrt()),
                UnaryOp::Exp => checked("exp", x, x.exp()),
                UnaryOp::Sqrt => {
                    if x < 0.0 {
                        Err(EvalError::Domain { op: "sqrt", arg: x })
                    } else {
                        Ok(x.sqrt())
                    }
                }
            }
        }
        Node::Binary(op, l, r) => {
            let a = eval_node(l, args)?;
            let b = eval_node(r, args)?;
            match op {
                BinaryOp::Add => checked("+", a, a + b),
                BinaryOp::Sub => checked("-", a, a - b),
                BinaryOp::Mul => checked("*", a, a * b),
                BinaryOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        checked("/", a, a / b)
                    }
                }
                BinaryOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    let v = if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    };
                    checked("^", a, v)
                }
                BinaryOp::Min => Ok(a.min(b)),
                BinaryOp::Max => Ok(a.max(b)),
            }
        }
        Node::Piecewise { var, pieces } => {
            let x = args[*var];
            if x.is_nan() {
                return Err(EvalError::NonFinite(x));
            }
            let piece = pieces
                .iter()
                .find(|p| x < p.hi)
                .unwrap_or_else(|| pieces.last().expect("piecewise has pieces"));
            eval_node(&piece.body, args)
        }
    }
}

fn collect_warnings(node: &Node, vars: &[String], out: &mut Vec<ContinuityWarning>) {
    match node {
        Node::Const(_) | Node::Var(_) => {}
        Node::Unary(_, x) => collect_warnings(x, vars, out),
        Node::Binary(_, l, r) => {
            collect_warnings(l, vars, out);
            collect_warnings(r, vars, out);
        }
        Node::Piecewise { var, pieces } => {
            for p in pieces {
                collect_warnings(&p.body, vars, out);
            }
            const SAMPLES: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 10.0];
            for pair in pieces.windows(2) {
                let at = pair[0].hi;
                let mut args = vec![0.0; vars.len()];
                'samples: for &other in &SAMPLES {
                    for (k, a) in args.iter_mut().enumerate() {
                        *a = if k == *var { at } else { other };
                    }
                    let (Ok(left), Ok(right)) =
                        (eval_node(&pair[0].body, &args), eval_node(&pair[1].body, &args))
                    else {
                        continue;
                    };
                    if (left - right).abs() > CONTINUITY_TOL {
                        out.push(ContinuityWarning { var: vars[*var].clone(), at, left, right });
                        break 'samples;
                    }
                    if vars.len() == 1 {
                        break;
                    }
                }
            }
        }
    }
}

fn render_number(x: f64, out: &mut String) {
    if x.is_infinite() {
        out.push_str("inf");
    } else {
        out.push_str(&format!("{x}"));
    }
}

fn render_node(node: &Node, vars: &[String], out: &mut String) {
    match node {
        Node::Const(c) => {
            if *c < 0.0 {
                out.push_str("(-");
                render_number(-c, out);
                out.push(')');
            } else {
                render_number(*c, out);
            }
        }
        Node::Var(i) => out.push_str(&vars[*i]),
        Node::Unary(UnaryOp::Neg, x) => {
            out.push_str("(-");
            render_node(x, vars, out);
            out.push(')');
        }
        Node::Unary(op, x) => {
            out.push_str(op.name());
            out.push('(');
            render_node(x, vars, out);
            out.push(')');
        }
        Node::Binary(op @ (BinaryOp::Min | BinaryOp::Max), l, r) => {
            out.push_str(op.symbol());
            out.push('(');
            render_node(l, vars, out);
            out.push_str(", ");
            render_node(r, vars, out);
            out.push(')');
        }
        Node::Binary(op, l, r) => {
            out.push('(');
            render_node(l, vars, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render_node(r, vars, out);
            out.push(')');
        }
        Node::Piecewise { var, pieces } => {
            out.push_str("piecewise(");
            out.push_str(&vars[*var]);
            for p in pieces {
                out.push_str("; ");
                render_number(p.lo, out);
                out.push_str(", ");
                render_number(p.hi, out);
                out.push_str(": ");
                render_node(&p.body, vars, out);
            }
            out.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Sym(c) => write!(f, "{c:?}"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
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
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber(text.to_string()),
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^(),;:".contains(&c) {
            out.push((i, Tok::Sym(c as char)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError { offset: i, kind: ParseErrorKind::UnexpectedChar(ch) });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a [&'a str],
    src_len: usize,
}

const PREFIX_NEG_BP: u8 = 5;

fn infix_bp(c: char) -> Option<(u8, u8, BinaryOp)> {
    Some(match c {
        '+' => (1, 2, BinaryOp::Add),
        '-' => (1, 2, BinaryOp::Sub),
        '*' => (3, 4, BinaryOp::Mul),
        '/' => (3, 4, BinaryOp::Div),
        '^' => (7, 6, BinaryOp::Pow),
        _ => return None,
    })
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.src_len, |(o, _)| *o)
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let found = self.peek().map_or_else(|| "end of input".to_string(), |t| t.to_string());
        ParseError { offset: self.offset(), kind: ParseErrorKind::Unexpected { found, expected } }
    }

    fn expect_sym(&mut self, c: char, expected: &'static str) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.unexpected("an operator or end of input"))
        }
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| *v == name)
    }

    fn expr(&mut self, min_bp: u8) -> Result<Node, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let Some(Tok::Sym(c)) = self.peek() else { break };
            let Some((lbp, rbp, op)) = infix_bp(*c) else { break };
            if lbp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(rbp)?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Node::Const(x))
            }
            Some(Tok::Sym('-')) => {
                self.pos += 1;
                let operand = self.expr(PREFIX_NEG_BP)?;
                Ok(Node::Unary(UnaryOp::Neg, Box::new(operand)))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr(0)?;
                self.expect_sym(')', "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.identifier(name, offset)
            }
            _ => Err(self.unexpected("an operand")),
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Node, ParseError> {
        if let Some(i) = self.var_index(&name) {
            return Ok(Node::Var(i));
        }
        if let Some(op) = UnaryOp::from_name(&name) {
            self.expect_sym('(', "'(' after function name")?;
            let arg = self.expr(0)?;
            self.expect_sym(')', "')'")?;
            return Ok(Node::Unary(op, Box::new(arg)));
        }
        match name.as_str() {
            "min" | "max" => {
                let op = if name == "min" { BinaryOp::Min } else { BinaryOp::Max };
                self.expect_sym('(', "'(' after function name")?;
                let a = self.expr(0)?;
                self.expect_sym(',', "','")?;
                let b = self.expr(0)?;
                self.expect_sym(')', "')'")?;
                Ok(Node::Binary(op, Box::new(a), Box::new(b)))
            }
            "piecewise" => self.piecewise(offset),
            _ => Err(ParseError { offset, kind: ParseErrorKind::UnknownIdentifier(name) }),
        }
    }

    fn bound(&mut self) -> Result<f64, ParseError> {
        let value = match self.peek() {
            Some(Tok::Num(x)) => *x,
            Some(Tok::Ident(s)) if s == "inf" => f64::INFINITY,
            _ => return Err(self.unexpected("a guard bound (number or inf)")),
        };
        self.pos += 1;
        Ok(value)
    }

    fn piecewise(&mut self, offset: usize) -> Result<Node, ParseError> {
        self.expect_sym('(', "'(' after piecewise")?;
        let var_offset = self.offset();
        let var = match self.peek().cloned() {
            Some(Tok::Ident(v)) => {
                self.pos += 1;
                self.var_index(&v).ok_or(ParseError {
                    offset: var_offset,
                    kind: ParseErrorKind::UnknownIdentifier(v),
                })?
            }
            _ => return Err(self.unexpected("the guarded variable")),
        };
        let mut pieces = Vec::new();
        while self.peek() == Some(&Tok::Sym(';')) {
            self.pos += 1;
            let lo = self.bound()?;
            self.expect_sym(',', "','")?;
            let hi = self.bound()?;
            self.expect_sym(':', "':'")?;
            let body = self.expr(0)?;
            pieces.push(Piece { lo, hi, body });
        }
        self.expect_sym(')', "';' or ')'")?;
        validate_guards(&pieces).map_err(|msg| ParseError { offset, kind: ParseErrorKind::BadPiecewise(msg) })?;
        Ok(Node::Piecewise { var, pieces })
    }
}

fn validate_guards(pieces: &[Piece]) -> Result<(), String> {
    let (Some(first), Some(last)) = (pieces.first(), pieces.last()) else {
        return Err("at least one piece is required".into());
    };
    if first.lo != 0.0 {
        return Err(format!("first guard must start at 0, starts at {}", first.lo));
    }
    if last.hi != f64::INFINITY {
        return Err(format!("last guard must end at inf, ends at {}", last.hi));
    }
    for (k, p) in pieces.iter().enumerate() {
        if !(p.lo < p.hi) {
            return Err(format!("guard {k} is empty: [{}, {})", p.lo, p.hi));
        }
        if k > 0 && pieces[k - 1].hi != p.lo {
            return Err(format!(
                "guards {} and {k} do not meet: {} vs {}",
                k - 1,
                pieces[k - 1].hi,
                p.lo
            ));
        }
    }
    Ok(())
}
