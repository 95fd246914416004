//! SystemVerilog assertion subset: AST, parser, renderer, linter, corrector
//! and offline templates.
//!
//! The accepted surface is a single named property with optional clocking
//! and `disable iff`, an optional `|->`/`|=>` implication over `##N`
//! sequences, and one labeled `assert property` with an optional
//! `else $severity("message")` action. Everything may sit inside a module
//! with ANSI ports; other module items are kept as opaque preamble text.

mod correct;
mod lint;
mod parser;
mod render;
mod template;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{lex, Expr, UnaryOp};
use crate::spec_model::Port;

pub use correct::{correct, Binding, BindingKind, CorrectionReport};
pub use lint::{keyword_fixes, lint, LintFinding, Rule};
pub use parser::{parse_assertion, parse_assertion_with_spans, Spans};
pub use render::render_assertion;
pub use template::instantiate_template;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SvaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { pos: usize, line: usize, column: usize, message: String, expected: Vec<String> },
    #[error("UVM class-based code is outside the supported assertion subset")]
    Uvm,
    #[error("text still fails to parse after automatic fixes: {0}")]
    Uncorrectable(String),
    #[error("no assertion template for violation type `{0}`")]
    NoTemplate(String),
    #[error("template needs {0}")]
    TemplateBinding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Posedge,
    Negedge,
}

impl Edge {
    pub fn as_str(self) -> &'static str {
        match self {
            Edge::Posedge => "posedge",
            Edge::Negedge => "negedge",
        }
    }

    pub fn parse(word: &str) -> Option<Edge> {
        match word {
            "posedge" => Some(Edge::Posedge),
            "negedge" => Some(Edge::Negedge),
            _ => None,
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockSpec {
    pub edge: Edge,
    pub signal: String,
    /// Set when the property names a clocking block (`@(cb)`); edge and
    /// signal are then resolved from that block's declaration.
    pub block: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImplicationOp {
    /// `|->`
    Overlapped,
    /// `|=>`
    NonOverlapped,
}

impl ImplicationOp {
    pub fn as_str(self) -> &'static str {
        match self {
            ImplicationOp::Overlapped => "|->",
            ImplicationOp::NonOverlapped => "|=>",
        }
    }
}

/// One sequence element, optionally preceded by `##delay`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqElem {
    pub delay: Option<u32>,
    pub expr: Expr,
}

impl SeqElem {
    pub fn new(expr: Expr) -> Self {
        SeqElem { delay: None, expr }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyExpr {
    Boolean(Expr),
    /// Delayed sequence without implication.
    Sequence(Vec<SeqElem>),
    Implication { antecedent: Vec<SeqElem>, op: ImplicationOp, consequent: Vec<SeqElem> },
}

impl PropertyExpr {
    pub fn is_sequential(&self) -> bool {
        !matches!(self, PropertyExpr::Boolean(_))
    }

    /// Every expression in source order.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            PropertyExpr::Boolean(e) => vec![e],
            PropertyExpr::Sequence(s) => s.iter().map(|x| &x.expr).collect(),
            PropertyExpr::Implication { antecedent, consequent, .. } => {
                antecedent.iter().chain(consequent).map(|x| &x.expr).collect()
            }
        }
    }

    fn map_exprs(self, f: &mut dyn FnMut(Expr) -> Expr) -> PropertyExpr {
        let seq = |s: Vec<SeqElem>, f: &mut dyn FnMut(Expr) -> Expr| {
            s.into_iter().map(|x| SeqElem { delay: x.delay, expr: f(x.expr) }).collect()
        };
        match self {
            PropertyExpr::Boolean(e) => PropertyExpr::Boolean(f(e)),
            PropertyExpr::Sequence(s) => PropertyExpr::Sequence(seq(s, f)),
            PropertyExpr::Implication { antecedent, op, consequent } => {
                let antecedent = seq(antecedent, f);
                PropertyExpr::Implication { antecedent, op, consequent: seq(consequent, f) }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Display,
    Info,
    Warning,
}

impl Severity {
    pub fn task(self) -> &'static str {
        match self {
            Severity::Error => "$error",
            Severity::Display => "$display",
            Severity::Info => "$info",
            Severity::Warning => "$warning",
        }
    }

    pub fn from_task(name: &str) -> Option<Severity> {
        match name {
            "$error" => Some(Severity::Error),
            "$display" => Some(Severity::Display),
            "$info" => Some(Severity::Info),
            "$warning" => Some(Severity::Warning),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub severity: Severity,
    /// Raw string-literal contents; `None` for a bare `$error;`.
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssertTarget {
    Named(String),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionUnit {
    pub module_name: Option<String>,
    pub ports: Vec<Port>,
    /// Other module items in canonical token spacing, one statement or
    /// clocking block each.
    pub preamble: Vec<String>,
    pub clocking: Option<ClockSpec>,
    pub disable_expr: Option<Expr>,
    pub property_name: String,
    pub property_body: PropertyExpr,
    pub assert_label: String,
    pub assert_target: AssertTarget,
    pub action: Option<Action>,
}

impl AssertionUnit {
    /// Reset implied by `disable iff`: `rst` is active high (posedge),
    /// `!rst_n` active low (negedge). Compound conditions imply none.
    pub fn reset(&self) -> Option<(Edge, String)> {
        match self.disable_expr.as_ref()?.unparen() {
            Expr::Ident(s) => Some((Edge::Posedge, s.clone())),
            Expr::Unary(UnaryOp::Not | UnaryOp::BitNot, inner) => match inner.unparen() {
                Expr::Ident(s) => Some((Edge::Negedge, s.clone())),
                _ => None,
            },
            _ => None,
        }
    }

    /// `localparam`/`parameter` assignments from the preamble, in order.
    pub fn localparams(&self) -> Vec<(String, Expr)> {
        self.preamble.iter().filter_map(|item| parse_localparam(item)).flatten().collect()
    }

    /// Identifiers declared by the unit itself: ports, parameters, clocking
    /// blocks and the property name.
    pub fn declared_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.ports.iter().map(|p| p.name.clone()).collect();
        out.extend(self.localparams().into_iter().map(|(n, _)| n));
        out.extend(self.preamble.iter().filter_map(|i| clocking_decl(i).map(|c| c.0)));
        out.push(self.property_name.clone());
        out
    }

    pub(crate) fn map_exprs(mut self, f: &mut dyn FnMut(Expr) -> Expr) -> AssertionUnit {
        self.disable_expr = self.disable_expr.map(&mut *f);
        self.property_body = self.property_body.map_exprs(f);
        if let AssertTarget::Expr(e) = self.assert_target {
            self.assert_target = AssertTarget::Expr(f(e));
        }
        self
    }
}

/// Parses `localparam [range] A = expr, B = expr;` into name/value pairs.
pub(crate) fn parse_localparam(item: &str) -> Option<Vec<(String, Expr)>> {
    let toks = lex(item).ok()?;
    let first = toks.first()?;
    if !(first.is_ident("localparam") || first.is_ident("parameter")) {
        return None;
    }
    let mut i = 1;
    if toks.get(i).is_some_and(|t| t.is_op("[")) {
        i = toks.iter().position(|t| t.is_op("]"))? + 1;
    }
    let mut out = Vec::new();
    loop {
        let name = toks.get(i).filter(|t| t.kind == crate::expr::TokenKind::Ident)?;
        if !toks.get(i + 1)?.is_op("=") {
            return None;
        }
        let rest = &toks[i + 2..];
        let mut p = crate::expr::ExprParser::new(rest, item.len());
        let value = p.parse_expr().ok()?;
        out.push((name.text.clone(), value));
        i += 2 + p.position();
        match toks.get(i) {
            Some(t) if t.is_op(",") => i += 1,
            Some(t) if t.is_op(";") => return Some(out),
            None => return Some(out),
            _ => return None,
        }
    }
}

/// `(name, edge, signal)` when the item declares a clocking block.
pub(crate) fn clocking_decl(item: &str) -> Option<(String, Edge, String)> {
    let toks = lex(item).ok()?;
    let mut i = 0;
    if toks.first()?.is_ident("default") {
        i = 1;
    }
    if !toks.get(i)?.is_ident("clocking") {
        return None;
    }
    let name = toks.get(i + 1)?.text.clone();
    if !toks.get(i + 2)?.is_op("@") || !toks.get(i + 3)?.is_op("(") {
        return None;
    }
    let edge = Edge::parse(&toks.get(i + 4)?.text)?;
    let mut j = i + 5;
    let paren = toks.get(j)?.is_op("(");
    if paren {
        j += 1;
    }
    let signal = toks.get(j)?.text.clone();
    Some((name, edge, signal))
}
