//! One-variable arithmetic expressions: the concrete form taken by the
//! model parameters c(x), d(x) and by countable-index generator rules.
//!
//! Grammar (tightest first): `^` (right-associative), unary `-`, `*` `/`,
//! `+` `-`, all binary operators left-associative at equal precedence.
//! Function calls are `name(arg)` with names exp, log, abs, sqrt. The only
//! variable is `x`, or `i` in index-rule context.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ExprAST {
    Constant(f64),
    Variable,
    Unary(UnaryOp, Box<ExprAST>),
    Binary(BinaryOp, Box<ExprAST>, Box<ExprAST>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Abs,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parse with variable name `x`.
pub fn parse_expr(text: &str) -> Result<ExprAST> {
    Parser::new(text, "x")?.parse()
}

/// Parse an index rule, whose variable is named `i`.
pub fn parse_index_expr(text: &str) -> Result<ExprAST> {
    Parser::new(text, "i")?.parse()
}

/// Evaluate at `value` in IEEE double precision.
pub fn eval_expr(ast: &ExprAST, value: f64) -> Result<f64> {
    match ast {
        ExprAST::Constant(c) => Ok(*c),
        ExprAST::Variable => Ok(value),
        ExprAST::Unary(op, child) => {
            let v = eval_expr(child, value)?;
            let out = match op {
                UnaryOp::Neg => -v,
                UnaryOp::Exp => v.exp(),
                UnaryOp::Log => {
                    if v <= 0.0 {
                        return Err(domain(ast, format!("log of non-positive value {v}")));
                    }
                    v.ln()
                }
                UnaryOp::Abs => v.abs(),
                UnaryOp::Sqrt => {
                    if v < 0.0 {
                        return Err(domain(ast, format!("sqrt of negative value {v}")));
                    }
                    v.sqrt()
                }
            };
            finite_or_domain(ast, out)
        }
        ExprAST::Binary(op, left, right) => {
            let l = eval_expr(left, value)?;
            let r = eval_expr(right, value)?;
            let out = match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => {
                    if r == 0.0 {
                        return Err(domain(ast, "division by zero".to_string()));
                    }
                    l / r
                }
                BinaryOp::Pow => {
                    if l == 0.0 && r < 0.0 {
                        return Err(domain(ast, "zero raised to a negative power".to_string()));
                    }
                    let p = l.powf(r);
                    if p.is_nan() {
                        return Err(domain(
                            ast,
                            format!("fractional power of negative base {l}"),
                        ));
                    }
                    p
                }
            };
            finite_or_domain(ast, out)
        }
    }
}

fn finite_or_domain(ast: &ExprAST, v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(domain(ast, "result is NaN".to_string()))
    } else {
        Ok(v)
    }
}

fn domain(ast: &ExprAST, detail: String) -> Error {
    Error::DomainError {
        subexpr: print_expr(ast),
        detail,
    }
}

/// Print in canonical form; parsing the output yields a structurally
/// identical tree for any parser-produced input.
pub fn print_expr(ast: &ExprAST) -> String {
    let mut out = String::new();
    write_prec(ast, 0, &mut out);
    out
}

impl fmt::Display for ExprAST {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

// precedence levels: 1 add/sub, 2 mul/div, 3 unary minus, 4 pow, 5 atom
fn write_prec(ast: &ExprAST, min_prec: u8, out: &mut String) {
    let prec = match ast {
        ExprAST::Constant(_) | ExprAST::Variable => 5,
        ExprAST::Unary(UnaryOp::Neg, _) => 3,
        ExprAST::Unary(_, _) => 5,
        ExprAST::Binary(BinaryOp::Pow, _, _) => 4,
        ExprAST::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        ExprAST::Binary(_, _, _) => 1,
    };
    let needs_parens = prec < min_prec;
    if needs_parens {
        out.push('(');
    }
    match ast {
        ExprAST::Constant(c) => {
            // Display for f64 is the shortest representation that parses
            // back to the same bits
            out.push_str(&format!("{c}"));
        }
        ExprAST::Variable => out.push('x'),
        ExprAST::Unary(UnaryOp::Neg, child) => {
            out.push('-');
            write_prec(child, 3, out);
        }
        ExprAST::Unary(op, child) => {
            out.push_str(match op {
                UnaryOp::Exp => "exp",
                UnaryOp::Log => "log",
                UnaryOp::Abs => "abs",
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Neg => unreachable!(),
            });
            out.push('(');
            write_prec(child, 0, out);
            out.push(')');
        }
        ExprAST::Binary(op, left, right) => {
            let (sym, lp, rp) = match op {
                BinaryOp::Add => ("+", 1, 2),
                BinaryOp::Sub => ("-", 1, 2),
                BinaryOp::Mul => ("*", 2, 3),
                BinaryOp::Div => ("/", 2, 3),
                // pow is right-associative and binds above unary minus:
                // left operand must be an atom-level expression, the right
                // may be a unary chain
                BinaryOp::Pow => ("^", 5, 3),
            };
            write_prec(left, lp, out);
            out.push_str(sym);
            write_prec(right, rp, out);
        }
    }
    if needs_parens {
        out.push(')');
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
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

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Number(n) => format!("number {n}"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::End => "end of input".into(),
        }
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>, // token + 1-based character position
    pos: usize,
    var_name: String,
}

impl Parser {
    fn new(text: &str, variable: &str) -> Result<Self> {
        let tokens = lex(text)?;
        Ok(Self {
            tokens,
            pos: 0,
            var_name: variable.to_string(),
        })
    }

    fn parse(mut self) -> Result<ExprAST> {
        let e = self.parse_add()?;
        let (tok, at) = self.peek();
        if tok != Token::End {
            return Err(syntax(at, "end of input or operator", &tok));
        }
        Ok(e)
    }

    fn peek(&self) -> (Token, usize) {
        self.tokens[self.pos].clone()
    }

    fn bump(&mut self) -> (Token, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn parse_add(&mut self) -> Result<ExprAST> {
        let mut left = self.parse_mul()?;
        loop {
            match self.peek().0 {
                Token::Plus => {
                    self.bump();
                    let right = self.parse_mul()?;
                    left = ExprAST::Binary(BinaryOp::Add, Box::new(left), Box::new(right));
                }
                Token::Minus => {
                    self.bump();
                    let right = self.parse_mul()?;
                    left = ExprAST::Binary(BinaryOp::Sub, Box::new(left), Box::new(right));
                }
                _ => return Ok(left),
            }
        }
    }

    fn parse_mul(&mut self) -> Result<ExprAST> {
        let mut left = self.parse_unary()?;
        loop {
            match self.peek().0 {
                Token::Star => {
                    self.bump();
                    let right = self.parse_unary()?;
                    left = ExprAST::Binary(BinaryOp::Mul, Box::new(left), Box::new(right));
                }
                Token::Slash => {
                    self.bump();
                    let right = self.parse_unary()?;
                    left = ExprAST::Binary(BinaryOp::Div, Box::new(left), Box::new(right));
                }
                _ => return Ok(left),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<ExprAST> {
        if self.peek().0 == Token::Minus {
            self.bump();
            let child = self.parse_unary()?;
            return Ok(ExprAST::Unary(UnaryOp::Neg, Box::new(child)));
        }
        self.parse_pow()
    }

    fn parse_pow(&mut self) -> Result<ExprAST> {
        let base = self.parse_atom()?;
        if self.peek().0 == Token::Caret {
            self.bump();
            // right-associative; exponent admits a leading unary minus
            let exponent = self.parse_unary()?;
            return Ok(ExprAST::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<ExprAST> {
        let (tok, at) = self.bump();
        match tok {
            Token::Number(n) => Ok(ExprAST::Constant(n)),
            Token::Ident(name) => {
                if name == self.var_name {
                    return Ok(ExprAST::Variable);
                }
                let op = match name.as_str() {
                    "exp" => UnaryOp::Exp,
                    "log" => UnaryOp::Log,
                    "abs" => UnaryOp::Abs,
                    "sqrt" => UnaryOp::Sqrt,
                    _ => {
                        return Err(syntax(
                            at,
                            &format!("variable `{}` or function name", self.var_name),
                            &Token::Ident(name),
                        ))
                    }
                };
                let (open, oat) = self.bump();
                if open != Token::LParen {
                    return Err(syntax(oat, "`(` after function name", &open));
                }
                let arg = self.parse_add()?;
                let (close, cat) = self.bump();
                if close != Token::RParen {
                    return Err(syntax(cat, "`)`", &close));
                }
                Ok(ExprAST::Unary(op, Box::new(arg)))
            }
            Token::LParen => {
                let inner = self.parse_add()?;
                let (close, cat) = self.bump();
                if close != Token::RParen {
                    return Err(syntax(cat, "`)`", &close));
                }
                Ok(inner)
            }
            other => Err(syntax(at, "number, variable, function, or `(`", &other)),
        }
    }
}

fn syntax(position: usize, expected: &str, found: &Token) -> Error {
    Error::SyntaxError {
        position,
        expected: expected.to_string(),
        found: found.describe(),
    }
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let at = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                tokens.push((Token::Plus, at));
                i += 1;
            }
            '-' => {
                tokens.push((Token::Minus, at));
                i += 1;
            }
            '*' => {
                tokens.push((Token::Star, at));
                i += 1;
            }
            '/' => {
                tokens.push((Token::Slash, at));
                i += 1;
            }
            '^' => {
                tokens.push((Token::Caret, at));
                i += 1;
            }
            '(' => {
                tokens.push((Token::LParen, at));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, at));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mark = i;
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    if i < chars.len() && chars[i].is_ascii_digit() {
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        // not an exponent after all (e.g. `2e` or `2e+x`)
                        i = mark;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let n: f64 = s.parse().map_err(|_| Error::SyntaxError {
                    position: start + 1,
                    expected: "numeric literal".to_string(),
                    found: format!("`{s}`"),
                })?;
                tokens.push((Token::Number(n), start + 1));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                tokens.push((Token::Ident(s), start + 1));
            }
            other => {
                return Err(Error::SyntaxError {
                    position: at,
                    expected: "token".to_string(),
                    found: format!("`{other}`"),
                })
            }
        }
    }
    tokens.push((Token::End, chars.len() + 1));
    Ok(tokens)
}
