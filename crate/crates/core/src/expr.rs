//! Token stream and expression trees for the SystemVerilog / Verilog subset
//! shared by the assertion parser, the policy IR, and the RTL generator.
//!
//! Expressions keep explicit parenthesis nodes so that printing a parsed
//! expression reproduces the source grouping. The printed form is the
//! canonical text stored in assertion and policy values.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    /// `$rose`, `$error`, ...
    SysIdent,
    /// Plain, sized (`32'h93000014`), unsized based (`'0`) or time (`1step`) literal.
    Number,
    Str,
    /// `slave['Crypto'].aw_addr`, normalized to single quotes.
    QualifiedRef,
    Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }

    pub fn is_ident(&self, name: &str) -> bool {
        self.kind == TokenKind::Ident && self.text == name
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at byte {pos}: {message}")]
pub struct LexError {
    pub pos: usize,
    pub message: String,
}

const OPERATORS: &[&str] = &[
    "<<<=", ">>>=", "|->", "|=>", "===", "!==", "<<<", ">>>", "##", "==", "!=", "<=", ">=", "&&",
    "||", "->", "<<", ">>", "::", "~&", "~|", "~^", "^~", "+:", "-:", "**", "(", ")", "[", "]",
    "{", "}", ";", ",", ":", ".", "@", "#", "!", "~", "&", "|", "^", "+", "-", "*", "/", "%",
    "<", ">", "=", "?",
];

/// Splits source text into tokens, dropping whitespace and comments.
pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(off) => i = i + 2 + off + 2,
                None => {
                    return Err(LexError { pos: i, message: "unterminated block comment".into() })
                }
            }
            continue;
        }
        let start = i;
        if c == b'"' {
            i += 1;
            let mut text = String::new();
            loop {
                match bytes.get(i) {
                    None => {
                        return Err(LexError { pos: start, message: "unterminated string".into() })
                    }
                    Some(b'"') => {
                        i += 1;
                        break;
                    }
                    Some(b'\\') if i + 1 < bytes.len() => {
                        text.push('\\');
                        let ch = src[i + 1..].chars().next().unwrap();
                        text.push(ch);
                        i += 1 + ch.len_utf8();
                    }
                    Some(_) => {
                        let ch = src[i..].chars().next().unwrap();
                        text.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token { kind: TokenKind::Str, text, start, end: i });
            continue;
        }
        if c == b'$' {
            i += 1;
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            if i == start + 1 {
                return Err(LexError { pos: start, message: "bare `$`".into() });
            }
            out.push(Token { kind: TokenKind::SysIdent, text: src[start..i].into(), start, end: i });
            continue;
        }
        if c == b'`' {
            // compiler directives and macro uses are outside the subset
            return Err(LexError { pos: start, message: "backtick directive or macro".into() });
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            let word = &src[start..i];
            if word == "slave" || word == "master" {
                if let Some((norm, len)) = qualified_suffix(&src[i..]) {
                    let end = i + len;
                    out.push(Token {
                        kind: TokenKind::QualifiedRef,
                        text: format!("{word}{norm}"),
                        start,
                        end,
                    });
                    i = end;
                    continue;
                }
            }
            out.push(Token { kind: TokenKind::Ident, text: word.into(), start, end: i });
            continue;
        }
        if c.is_ascii_digit() || (c == b'\'' && based_literal_len(&src[i..]).is_some()) {
            i += number_len(&src[i..]);
            out.push(Token { kind: TokenKind::Number, text: src[start..i].into(), start, end: i });
            continue;
        }
        match OPERATORS.iter().find(|op| src[i..].starts_with(**op)) {
            Some(op) => {
                i += op.len();
                out.push(Token { kind: TokenKind::Op, text: (*op).into(), start, end: i });
            }
            None => {
                let ch = src[i..].chars().next().unwrap();
                return Err(LexError { pos: i, message: format!("unexpected character `{ch}`") });
            }
        }
    }
    Ok(out)
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Matches `['Name'].signal` (opening quote may be a backtick) after `slave`/`master`.
fn qualified_suffix(rest: &str) -> Option<(String, usize)> {
    let b = rest.as_bytes();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < b.len() && b[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    if b.get(i) != Some(&b'[') {
        return None;
    }
    i += 1;
    skip_ws(&mut i);
    if !matches!(b.get(i), Some(b'\'') | Some(b'`')) {
        return None;
    }
    i += 1;
    let name_start = i;
    while i < b.len() && b[i] != b'\'' && b[i] != b'`' && b[i] != b']' && b[i] != b'\n' {
        i += 1;
    }
    if !matches!(b.get(i), Some(b'\'') | Some(b'`')) || i == name_start {
        return None;
    }
    let name = rest[name_start..i].trim().to_string();
    i += 1;
    skip_ws(&mut i);
    if b.get(i) != Some(&b']') {
        return None;
    }
    i += 1;
    skip_ws(&mut i);
    if b.get(i) != Some(&b'.') {
        return None;
    }
    i += 1;
    skip_ws(&mut i);
    let sig_start = i;
    if !b.get(i).is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_') {
        return None;
    }
    while i < b.len() && is_ident_char(b[i]) {
        i += 1;
    }
    let signal = &rest[sig_start..i];
    Some((format!("['{name}'].{signal}"), i))
}

fn based_literal_len(rest: &str) -> Option<usize> {
    let b = rest.as_bytes();
    if b.first() != Some(&b'\'') {
        return None;
    }
    let mut i = 1;
    if matches!(b.get(i), Some(b's') | Some(b'S')) {
        i += 1;
    }
    match b.get(i) {
        Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H') => {
            i += 1;
            let digits = i;
            while i < b.len() && (b[i].is_ascii_hexdigit() || matches!(b[i], b'_' | b'x' | b'X' | b'z' | b'Z' | b'?')) {
                i += 1;
            }
            (i > digits).then_some(i)
        }
        Some(b'0' | b'1' | b'x' | b'X' | b'z' | b'Z') if i == 1 => {
            let next = b.get(2);
            (!next.is_some_and(|c| is_ident_char(*c))).then_some(2)
        }
        _ => None,
    }
}

fn number_len(rest: &str) -> usize {
    let b = rest.as_bytes();
    let mut i = 0;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'_') {
        i += 1;
    }
    if let Some(len) = based_literal_len(&rest[i..]) {
        return i + len;
    }
    // time literal such as `1step` or `10ns`
    while i < b.len() && b[i].is_ascii_alphabetic() {
        i += 1;
    }
    i
}

/// Bit width and value of a sized literal such as `32'h93000014`.
pub fn sized_literal(text: &str) -> Option<(u32, u128)> {
    let (width, rest) = text.split_once('\'')?;
    let width: u32 = width.replace('_', "").parse().ok()?;
    let rest = rest.strip_prefix(['s', 'S']).unwrap_or(rest);
    let mut chars = rest.chars();
    let radix = match chars.next()?.to_ascii_lowercase() {
        'b' => 2,
        'o' => 8,
        'd' => 10,
        'h' => 16,
        _ => return None,
    };
    let digits: String = chars.filter(|c| *c != '_').collect();
    let value = u128::from_str_radix(&digits, radix).ok()?;
    Some((width, value))
}

/// Width of a literal: explicit width when sized, otherwise `None`.
pub fn literal_width(text: &str) -> Option<u32> {
    sized_literal(text).map(|(w, _)| w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    BitNot,
    Neg,
    Plus,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

impl UnaryOp {
    pub fn as_str(self) -> &'static str {
        match self {
            UnaryOp::Not => "!",
            UnaryOp::BitNot => "~",
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXnor => "~^",
        }
    }

    fn from_token(tok: &Token) -> Option<UnaryOp> {
        if tok.kind != TokenKind::Op {
            return None;
        }
        Some(match tok.text.as_str() {
            "!" => UnaryOp::Not,
            "~" => UnaryOp::BitNot,
            "-" => UnaryOp::Neg,
            "+" => UnaryOp::Plus,
            "&" => UnaryOp::RedAnd,
            "|" => UnaryOp::RedOr,
            "^" => UnaryOp::RedXor,
            "~&" => UnaryOp::RedNand,
            "~|" => UnaryOp::RedNor,
            "~^" | "^~" => UnaryOp::RedXnor,
            _ => return None,
        })
    }
}

/// Binary operators, lowest binding first.
const BINARY_LEVELS: &[&[&str]] = &[
    &["->"],
    &["||"],
    &["&&"],
    &["|"],
    &["^", "~^", "^~"],
    &["&"],
    &["==", "!=", "===", "!=="],
    &["<", "<=", ">", ">="],
    &["<<", ">>", "<<<", ">>>"],
    &["+", "-"],
    &["*", "/", "%"],
    &["**"],
];

fn binary_level(op: &str) -> Option<usize> {
    BINARY_LEVELS.iter().position(|lvl| lvl.contains(&op))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Ident(String),
    Qualified { scope: String, ip: String, signal: String },
    Number(String),
    Paren(Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(Box<Expr>, String, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    SysCall(String, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Slice(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Replicate(Box<Expr>, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expression error at byte {pos}: {message}")]
pub struct ExprError {
    pub pos: usize,
    pub message: String,
}

/// Recursive-descent expression parser over a token slice.
///
/// Parsing stops at the first token that cannot continue the expression,
/// so callers can embed expressions in larger grammars (`##`, `|->`, `;`).
pub struct ExprParser<'t> {
    toks: &'t [Token],
    pos: usize,
    eof_pos: usize,
}

impl<'t> ExprParser<'t> {
    pub fn new(toks: &'t [Token], eof_pos: usize) -> Self {
        ExprParser { toks, pos: 0, eof_pos }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.eof_pos, |t| t.start)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { pos: self.here(), message: message.into() })
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), ExprError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.err(format!("expected `{op}`"))
        }
    }

    pub fn parse_expr(&mut self) -> Result<Expr, ExprError> {
        let cond = self.parse_binary(0)?;
        if self.eat_op("?") {
            let then = self.parse_expr()?;
            self.expect_op(":")?;
            let other = self.parse_expr()?;
            return Ok(Expr::Ternary(Box::new(cond), Box::new(then), Box::new(other)));
        }
        Ok(cond)
    }

    fn parse_binary(&mut self, level: usize) -> Result<Expr, ExprError> {
        if level >= BINARY_LEVELS.len() {
            return self.parse_unary();
        }
        let mut lhs = self.parse_binary(level + 1)?;
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::Op || binary_level(&tok.text) != Some(level) {
                break;
            }
            let op = tok.text.clone();
            self.pos += 1;
            // `->` is right associative
            let rhs = if op == "->" { self.parse_binary(level)? } else { self.parse_binary(level + 1)? };
            lhs = Expr::Binary(Box::new(lhs), op, Box::new(rhs));
            if BINARY_LEVELS[level] == ["->"] {
                break;
            }
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(op) = self.peek().and_then(UnaryOp::from_token) {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Unary(op, Box::new(inner)));
        }
        let mut base = self.parse_primary()?;
        while self.peek().is_some_and(|t| t.is_op("[")) {
            self.pos += 1;
            let first = self.parse_expr()?;
            if self.eat_op(":") {
                let second = self.parse_expr()?;
                self.expect_op("]")?;
                base = Expr::Slice(Box::new(base), Box::new(first), Box::new(second));
            } else {
                self.expect_op("]")?;
                base = Expr::Index(Box::new(base), Box::new(first));
            }
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.peek() else {
            return self.err("expected expression, found end of input");
        };
        match tok.kind {
            TokenKind::Ident => {
                if is_reserved(&tok.text) {
                    return self.err(format!("expected expression, found keyword `{}`", tok.text));
                }
                self.pos += 1;
                Ok(Expr::Ident(tok.text.clone()))
            }
            TokenKind::QualifiedRef => {
                self.pos += 1;
                let (scope, ip, signal) = split_qualified(&tok.text)
                    .ok_or_else(|| ExprError { pos: tok.start, message: "bad qualified reference".into() })?;
                Ok(Expr::Qualified { scope, ip, signal })
            }
            TokenKind::Number => {
                self.pos += 1;
                Ok(Expr::Number(tok.text.clone()))
            }
            TokenKind::SysIdent => {
                self.pos += 1;
                let name = tok.text.clone();
                let mut args = Vec::new();
                if self.eat_op("(") && !self.eat_op(")") {
                    loop {
                        args.push(self.parse_expr()?);
                        if self.eat_op(")") {
                            break;
                        }
                        self.expect_op(",")?;
                    }
                }
                Ok(Expr::SysCall(name, args))
            }
            TokenKind::Op if tok.text == "(" => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect_op(")")?;
                Ok(Expr::Paren(Box::new(inner)))
            }
            TokenKind::Op if tok.text == "{" => {
                self.pos += 1;
                let first = self.parse_expr()?;
                if self.peek().is_some_and(|t| t.is_op("{")) {
                    self.pos += 1;
                    let mut items = vec![self.parse_expr()?];
                    while self.eat_op(",") {
                        items.push(self.parse_expr()?);
                    }
                    self.expect_op("}")?;
                    self.expect_op("}")?;
                    return Ok(Expr::Replicate(Box::new(first), items));
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    items.push(self.parse_expr()?);
                }
                self.expect_op("}")?;
                Ok(Expr::Concat(items))
            }
            _ => self.err(format!("expected expression, found `{}`", tok.text)),
        }
    }
}

/// Words that terminate an expression in the assertion grammar.
pub(crate) fn is_reserved(word: &str) -> bool {
    matches!(
        word,
        "property" | "endproperty" | "assert" | "else" | "module" | "endmodule" | "disable" | "iff"
            | "posedge" | "negedge" | "begin" | "end" | "if" | "always" | "assign" | "wire" | "reg"
            | "input" | "output" | "inout" | "localparam" | "parameter"
    )
}

fn split_qualified(text: &str) -> Option<(String, String, String)> {
    let (scope, rest) = text.split_once("['")?;
    let (ip, rest) = rest.split_once("']")?;
    let signal = rest.strip_prefix('.')?;
    Some((scope.to_string(), ip.to_string(), signal.to_string()))
}

/// Parses a complete expression; trailing tokens are an error.
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let toks = lex(text).map_err(|e| ExprError { pos: e.pos, message: e.message })?;
    let mut p = ExprParser::new(&toks, text.len());
    let e = p.parse_expr()?;
    if let Some(t) = toks.get(p.position()) {
        return Err(ExprError { pos: t.start, message: format!("unexpected `{}` after expression", t.text) });
    }
    Ok(e)
}

/// Canonical text of an expression.
pub fn canonical(text: &str) -> Result<String, ExprError> {
    parse_expr(text).map(|e| e.to_string())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Ident(s) | Expr::Number(s) => f.write_str(s),
            Expr::Qualified { scope, ip, signal } => write!(f, "{scope}['{ip}'].{signal}"),
            Expr::Paren(e) => write!(f, "({e})"),
            // a space keeps `~ &x` from relexing as `~&`
            Expr::Unary(op, e) if matches!(**e, Expr::Unary(..)) => write!(f, "{} {e}", op.as_str()),
            Expr::Unary(op, e) => write!(f, "{}{e}", op.as_str()),
            Expr::Binary(l, op, r) => write!(f, "{l} {op} {r}"),
            Expr::Ternary(c, t, e) => write!(f, "{c} ? {t} : {e}"),
            Expr::SysCall(name, args) => {
                f.write_str(name)?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    write_list(f, args)?;
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Index(b, i) => write!(f, "{b}[{i}]"),
            Expr::Slice(b, m, l) => write!(f, "{b}[{m}:{l}]"),
            Expr::Concat(items) => {
                f.write_str("{")?;
                write_list(f, items)?;
                f.write_str("}")
            }
            Expr::Replicate(n, items) => {
                write!(f, "{{{n}{{")?;
                write_list(f, items)?;
                f.write_str("}}")
            }
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

impl Expr {
    /// Visits every node, parents before children.
    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Ident(_) | Expr::Qualified { .. } | Expr::Number(_) => {}
            Expr::Paren(e) | Expr::Unary(_, e) => e.walk(visit),
            Expr::Binary(l, _, r) | Expr::Index(l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
            Expr::Ternary(a, b, c) | Expr::Slice(a, b, c) => {
                a.walk(visit);
                b.walk(visit);
                c.walk(visit);
            }
            Expr::SysCall(_, args) | Expr::Concat(args) => args.iter().for_each(|a| a.walk(visit)),
            Expr::Replicate(n, items) => {
                n.walk(visit);
                items.iter().for_each(|a| a.walk(visit));
            }
        }
    }

    /// Rebuilds the tree bottom-up through `map`.
    pub fn map(self, map: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            leaf @ (Expr::Ident(_) | Expr::Qualified { .. } | Expr::Number(_)) => leaf,
            Expr::Paren(e) => Expr::Paren(Box::new(e.map(map))),
            Expr::Unary(op, e) => Expr::Unary(op, Box::new(e.map(map))),
            Expr::Binary(l, op, r) => Expr::Binary(Box::new(l.map(map)), op, Box::new(r.map(map))),
            Expr::Ternary(a, b, c) => {
                Expr::Ternary(Box::new(a.map(map)), Box::new(b.map(map)), Box::new(c.map(map)))
            }
            Expr::SysCall(n, args) => Expr::SysCall(n, args.into_iter().map(|a| a.map(map)).collect()),
            Expr::Index(b, i) => Expr::Index(Box::new(b.map(map)), Box::new(i.map(map))),
            Expr::Slice(b, m, l) => {
                Expr::Slice(Box::new(b.map(map)), Box::new(m.map(map)), Box::new(l.map(map)))
            }
            Expr::Concat(items) => Expr::Concat(items.into_iter().map(|a| a.map(map)).collect()),
            Expr::Replicate(n, items) => {
                Expr::Replicate(Box::new(n.map(map)), items.into_iter().map(|a| a.map(map)).collect())
            }
        };
        map(rebuilt)
    }

    /// Plain identifiers referenced by the expression, in first-use order.
    pub fn identifiers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Ident(name) = e {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
        });
        out
    }

    /// Strips redundant outer parentheses.
    pub fn unparen(&self) -> &Expr {
        match self {
            Expr::Paren(inner) => inner.unparen(),
            other => other,
        }
    }
}

/// Joins tokens with canonical spacing; used for opaque text such as
/// module preamble items where no expression structure is needed.
pub fn join_tokens(toks: &[Token]) -> String {
    let mut out = String::new();
    let mut prev: Option<&Token> = None;
    let mut bracket_depth = 0usize;
    for tok in toks {
        if let Some(p) = prev {
            if needs_space(p, tok, bracket_depth) {
                out.push(' ');
            }
        }
        if tok.kind == TokenKind::Str {
            out.push('"');
            out.push_str(&tok.text);
            out.push('"');
        } else {
            out.push_str(&tok.text);
        }
        if tok.is_op("[") {
            bracket_depth += 1;
        } else if tok.is_op("]") {
            bracket_depth = bracket_depth.saturating_sub(1);
        }
        prev = Some(tok);
    }
    out
}

fn needs_space(prev: &Token, tok: &Token, bracket_depth: usize) -> bool {
    let p = prev.text.as_str();
    let t = tok.text.as_str();
    if prev.kind == TokenKind::Op && matches!(p, "(" | "[" | "{" | "@" | "#" | "!" | "~" | "." | "::") {
        return false;
    }
    if tok.kind == TokenKind::Op && matches!(t, ")" | "]" | "}" | "," | ";" | "." | "::") {
        return false;
    }
    if bracket_depth > 0 && (p == ":" || t == ":") {
        return false;
    }
    if t == "(" && matches!(prev.kind, TokenKind::Ident | TokenKind::SysIdent) && !is_reserved(p) {
        return false;
    }
    if t == "[" && (matches!(prev.kind, TokenKind::Ident | TokenKind::QualifiedRef) || p == "]") {
        return false;
    }
    if t == ":" && matches!(prev.kind, TokenKind::Ident) && bracket_depth == 0 {
        // labels: `a_label: assert ...`
        return false;
    }
    true
}
