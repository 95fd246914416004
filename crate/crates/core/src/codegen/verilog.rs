//! Self-check for generated RTL: a recursive-descent parser for the
//! synthesizable subset the generator emits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RtlArtifact;
use crate::expr::{lex, Expr, ExprParser, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Syntax,
    Unbalanced,
    SubsetViolation,
    Undeclared,
    Redeclared,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtlFinding {
    pub kind: FindingKind,
    pub line: usize,
    pub message: String,
}

pub fn validate_rtl(artifact: &RtlArtifact) -> Vec<RtlFinding> {
    validate_verilog(&artifact.to_verilog())
}

/// Checks block balance, the synthesizable subset (no `initial`, no `#`
/// delays, no system tasks) and declaration before use.
pub fn validate_verilog(text: &str) -> Vec<RtlFinding> {
    let line_of = |pos: usize| text[..pos.min(text.len())].matches('\n').count() + 1;
    let toks = match lex(text) {
        Ok(t) => t,
        Err(e) => return vec![RtlFinding { kind: FindingKind::Syntax, line: line_of(e.pos), message: e.message }],
    };
    let mut findings = balance(&toks, &line_of);
    if !findings.is_empty() {
        return findings;
    }
    let mut v = Validator { toks: &toks, pos: 0, eof: text.len(), decls: BTreeMap::new(), findings: Vec::new(), line_of: &line_of };
    if let Err(message) = v.source() {
        let at = v.toks.get(v.pos).map_or(text.len(), |t| t.start);
        v.findings.push(RtlFinding { kind: FindingKind::Syntax, line: line_of(at), message });
    }
    findings.append(&mut v.findings);
    findings
}

fn balance(toks: &[Token], line_of: &dyn Fn(usize) -> usize) -> Vec<RtlFinding> {
    let mut out = Vec::new();
    for (open, close) in [("begin", "end"), ("module", "endmodule")] {
        let mut depth = 0i64;
        for t in toks.iter().filter(|t| t.kind == TokenKind::Ident) {
            if t.text == open {
                depth += 1;
            } else if t.text == close {
                depth -= 1;
                if depth < 0 {
                    out.push(RtlFinding {
                        kind: FindingKind::Unbalanced,
                        line: line_of(t.start),
                        message: format!("`{close}` without matching `{open}`"),
                    });
                    depth = 0;
                }
            }
        }
        if depth > 0 {
            out.push(RtlFinding {
                kind: FindingKind::Unbalanced,
                line: line_of(toks.last().map_or(0, |t| t.end)),
                message: format!("{depth} unclosed `{open}`"),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decl {
    Port,
    Wire,
    Reg,
    Param,
}

struct Validator<'a> {
    toks: &'a [Token],
    pos: usize,
    eof: usize,
    decls: BTreeMap<String, Decl>,
    findings: Vec<RtlFinding>,
    line_of: &'a dyn Fn(usize) -> usize,
}

type R<T> = Result<T, String>;

impl Validator<'_> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_word(&self, w: &str) -> bool {
        self.peek().is_some_and(|t| t.is_ident(w))
    }

    fn peek_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn eat_word(&mut self, w: &str) -> bool {
        let hit = self.peek_word(w);
        self.pos += usize::from(hit);
        hit
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let hit = self.peek_op(op);
        self.pos += usize::from(hit);
        hit
    }

    fn expect_op(&mut self, op: &str) -> R<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(format!("expected `{op}`, found {}", self.describe()))
        }
    }

    fn expect_word(&mut self, w: &str) -> R<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(format!("expected `{w}`, found {}", self.describe()))
        }
    }

    fn describe(&self) -> String {
        self.peek().map_or("end of input".into(), |t| format!("`{}`", t.text))
    }

    fn ident(&mut self) -> R<(String, usize)> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                let out = (t.text.clone(), t.start);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn finding(&mut self, kind: FindingKind, at: usize, message: String) {
        let line = (self.line_of)(at);
        self.findings.push(RtlFinding { kind, line, message });
    }

    fn declare(&mut self, name: String, kind: Decl, at: usize) {
        if self.decls.insert(name.clone(), kind).is_some() {
            self.finding(FindingKind::Redeclared, at, format!("`{name}` declared twice"));
        }
    }

    fn use_name(&mut self, name: &str, at: usize) {
        if !self.decls.contains_key(name) {
            self.finding(FindingKind::Undeclared, at, format!("`{name}` used before declaration"));
        }
    }

    fn expr(&mut self) -> R<Expr> {
        let rest = &self.toks[self.pos..];
        let mut p = ExprParser::new(rest, self.eof);
        let e = p.parse_expr().map_err(|e| e.message)?;
        let used: Vec<&Token> = rest[..p.position()].iter().collect();
        self.pos += p.position();
        for t in used {
            match t.kind {
                TokenKind::Ident => {
                    let name = t.text.clone();
                    self.use_name(&name, t.start);
                }
                TokenKind::SysIdent => {
                    self.finding(FindingKind::SubsetViolation, t.start, format!("system function `{}`", t.text))
                }
                TokenKind::QualifiedRef => self.finding(FindingKind::Syntax, t.start, format!("`{}` is not Verilog", t.text)),
                _ => {}
            }
        }
        Ok(e)
    }

    fn range(&mut self) -> R<()> {
        if self.eat_op("[") {
            self.expr()?;
            self.expect_op(":")?;
            self.expr()?;
            self.expect_op("]")?;
        }
        Ok(())
    }

    fn source(&mut self) -> R<()> {
        while self.peek().is_some() {
            self.module()?;
        }
        Ok(())
    }

    fn module(&mut self) -> R<()> {
        self.expect_word("module")?;
        self.ident()?;
        self.decls.clear();
        if self.peek_op("#") {
            let at = self.peek().unwrap().start;
            self.finding(FindingKind::SubsetViolation, at, "module parameters are outside the generated subset".into());
            return Err("parameterized module".into());
        }
        self.expect_op("(")?;
        if !self.eat_op(")") {
            loop {
                self.port()?;
                if self.eat_op(")") {
                    break;
                }
                self.expect_op(",")?;
            }
        }
        self.expect_op(";")?;
        while !self.eat_word("endmodule") {
            if self.peek().is_none() {
                return Err("missing `endmodule`".into());
            }
            self.item()?;
        }
        Ok(())
    }

    fn port(&mut self) -> R<()> {
        let dir = self.ident()?.0;
        if !matches!(dir.as_str(), "input" | "output" | "inout") {
            return Err(format!("expected port direction, found `{dir}`"));
        }
        let _ = self.eat_word("wire") || self.eat_word("reg");
        self.range()?;
        let (name, at) = self.ident()?;
        self.declare(name, Decl::Port, at);
        Ok(())
    }

    fn item(&mut self) -> R<()> {
        let (word, at) = match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => (t.text.clone(), t.start),
            _ => return Err(format!("expected module item, found {}", self.describe())),
        };
        match word.as_str() {
            "wire" | "reg" => {
                self.pos += 1;
                self.range()?;
                loop {
                    let (name, at) = self.ident()?;
                    if self.eat_op("=") {
                        self.expr()?;
                    }
                    self.declare(name, if word == "wire" { Decl::Wire } else { Decl::Reg }, at);
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(";")
            }
            "localparam" => {
                self.pos += 1;
                self.range()?;
                loop {
                    let (name, at) = self.ident()?;
                    self.expect_op("=")?;
                    self.expr()?;
                    self.declare(name, Decl::Param, at);
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(";")
            }
            "assign" => {
                self.pos += 1;
                self.lvalue()?;
                self.expect_op("=")?;
                self.expr()?;
                self.expect_op(";")
            }
            "always" => {
                self.pos += 1;
                self.expect_op("@")?;
                self.expect_op("(")?;
                if !self.eat_op("*") {
                    loop {
                        let _ = self.eat_word("posedge") || self.eat_word("negedge");
                        let (name, at) = self.ident()?;
                        self.use_name(&name, at);
                        if !(self.eat_word("or") || self.eat_op(",")) {
                            break;
                        }
                    }
                }
                self.expect_op(")")?;
                self.statement()
            }
            "initial" | "final" => {
                self.pos += 1;
                self.finding(FindingKind::SubsetViolation, at, format!("`{word}` block"));
                self.statement()
            }
            _ => self.instance(),
        }
    }

    fn instance(&mut self) -> R<()> {
        self.ident()?;
        self.ident()?;
        self.expect_op("(")?;
        if !self.eat_op(")") {
            loop {
                self.expect_op(".")?;
                self.ident()?;
                self.expect_op("(")?;
                if !self.eat_op(")") {
                    self.expr()?;
                    self.expect_op(")")?;
                }
                if self.eat_op(")") {
                    break;
                }
                self.expect_op(",")?;
            }
        }
        self.expect_op(";")
    }

    fn lvalue(&mut self) -> R<()> {
        let (name, at) = self.ident()?;
        self.use_name(&name, at);
        if self.eat_op("[") {
            self.expr()?;
            if self.eat_op(":") {
                self.expr()?;
            }
            self.expect_op("]")?;
        }
        Ok(())
    }

    fn statement(&mut self) -> R<()> {
        let Some(t) = self.peek().cloned() else { return Err("expected statement, found end of input".into()) };
        if t.is_op("#") {
            self.finding(FindingKind::SubsetViolation, t.start, "`#` delay".into());
            self.pos += 1;
            self.expr()?;
            return self.statement();
        }
        if t.kind == TokenKind::SysIdent {
            self.finding(FindingKind::SubsetViolation, t.start, format!("system task `{}`", t.text));
            while !self.eat_op(";") {
                if self.peek().is_none() {
                    return Err("unterminated system task call".into());
                }
                self.pos += 1;
            }
            return Ok(());
        }
        if t.is_op(";") {
            self.pos += 1;
            return Ok(());
        }
        if t.kind != TokenKind::Ident {
            return Err(format!("expected statement, found `{}`", t.text));
        }
        match t.text.as_str() {
            "begin" => {
                self.pos += 1;
                while !self.eat_word("end") {
                    self.statement()?;
                }
                Ok(())
            }
            "if" => {
                self.pos += 1;
                self.expect_op("(")?;
                self.expr()?;
                self.expect_op(")")?;
                self.statement()?;
                if self.eat_word("else") {
                    self.statement()?;
                }
                Ok(())
            }
            "forever" | "while" | "repeat" | "fork" | "wait" => {
                self.finding(FindingKind::SubsetViolation, t.start, format!("`{}` statement", t.text));
                Err(format!("`{}` is outside the synthesizable subset", t.text))
            }
            _ => {
                self.lvalue()?;
                if !(self.eat_op("=") || self.eat_op("<=")) {
                    return Err(format!("expected `=` or `<=`, found {}", self.describe()));
                }
                self.expr()?;
                self.expect_op(";")
            }
        }
    }
}
