use std::ops::Range;

use regex::Regex;
use std::sync::OnceLock;

use super::{clocking_decl, Action, AssertTarget, AssertionUnit, ClockSpec, Edge, ImplicationOp, PropertyExpr, SeqElem, Severity, SvaError};
use crate::expr::{join_tokens, lex, ExprParser, Token, TokenKind};
use crate::spec_model::{Port, PortDirection};

/// Byte ranges of the parts lint rules point at.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Spans {
    pub property_body: Range<usize>,
    pub antecedent: Option<Range<usize>>,
    pub disable: Option<Range<usize>>,
    pub assert_target: Range<usize>,
    pub severity: Option<Range<usize>>,
}

pub fn parse_assertion(text: &str) -> Result<AssertionUnit, SvaError> {
    parse_assertion_with_spans(text).map(|(u, _)| u)
}

fn looks_like_uvm(text: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\bclass\s+\w+\s+extends\b|\buvm_\w+|`uvm").expect("valid regex"));
    re.is_match(text)
}

pub fn parse_assertion_with_spans(text: &str) -> Result<(AssertionUnit, Spans), SvaError> {
    if looks_like_uvm(text) {
        return Err(SvaError::Uvm);
    }
    let toks = lex(text).map_err(|e| syntax(text, e.pos, e.message, vec![]))?;
    let mut p = Parser { src: text, toks, pos: 0, spans: Spans::default() };
    let unit = p.unit()?;
    Ok((unit, p.spans))
}

fn syntax(src: &str, pos: usize, message: impl Into<String>, expected: Vec<String>) -> SvaError {
    let before = &src[..pos.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |nl| before[nl + 1..].chars().count()) + 1;
    SvaError::Syntax { pos, line, column, message: message.into(), expected }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    spans: Spans,
}

#[derive(Default)]
struct Pending {
    clocking: Option<ClockSpec>,
    disable_expr: Option<crate::expr::Expr>,
    property: Option<(String, PropertyExpr)>,
    assert: Option<(Option<String>, AssertTarget, Option<Action>)>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.toks.get(self.pos + n)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.src.len(), |t| t.start)
    }

    fn prev_end(&self) -> usize {
        self.pos.checked_sub(1).and_then(|i| self.toks.get(i)).map_or(0, |t| t.end)
    }

    fn err<T>(&self, message: impl Into<String>, expected: &[&str]) -> Result<T, SvaError> {
        let found = self.peek().map_or("end of input".to_string(), |t| format!("`{}`", t.text));
        let message = format!("{}, found {found}", message.into());
        Err(syntax(self.src, self.here(), message, expected.iter().map(|s| s.to_string()).collect()))
    }

    fn at_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_ident(kw))
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let hit = self.at_op(op);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.at_kw(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SvaError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.err(format!("expected `{op}`"), &[op])
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SvaError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"), &[kw])
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SvaError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident && !crate::expr::is_reserved(&t.text) => {
                let s = t.text.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err(format!("expected {what}"), &["identifier"]),
        }
    }

    fn expr(&mut self) -> Result<crate::expr::Expr, SvaError> {
        let mut p = ExprParser::new(&self.toks[self.pos..], self.src.len());
        let e = p.parse_expr().map_err(|e| syntax(self.src, e.pos, e.message, vec!["expression".into()]))?;
        self.pos += p.position();
        Ok(e)
    }

    fn unit(&mut self) -> Result<AssertionUnit, SvaError> {
        let mut module_name = None;
        let mut ports = Vec::new();
        if self.eat_kw("module") {
            module_name = Some(self.ident("module name")?);
            if self.at_op("#") {
                return self.err("module parameter lists are not supported", &["(", ";"]);
            }
            if self.eat_op("(") {
                ports = self.ports()?;
                self.expect_op(")")?;
            }
            self.expect_op(";")?;
        }
        let mut preamble = Vec::new();
        let mut pending = Pending::default();
        loop {
            match self.peek() {
                None if module_name.is_some() => return self.err("missing `endmodule`", &["endmodule"]),
                None => break,
                Some(t) if t.is_ident("endmodule") && module_name.is_some() => {
                    self.pos += 1;
                    if self.eat_op(":") {
                        self.ident("module label")?;
                    }
                    if self.peek().is_some() {
                        return self.err("unexpected text after `endmodule`", &["end of input"]);
                    }
                    break;
                }
                Some(t) if t.is_ident("property") => {
                    if pending.property.is_some() {
                        return self.err("only one property per assertion unit is supported", &["assert"]);
                    }
                    self.property(&preamble, &mut pending)?;
                }
                Some(t) if t.is_ident("assert") => self.assert(None, &mut pending)?,
                Some(t) if t.kind == TokenKind::Ident && self.peek_at(1).is_some_and(|n| n.is_op(":")) && self.peek_at(2).is_some_and(|n| n.is_ident("assert")) => {
                    let label = t.text.clone();
                    self.pos += 2;
                    self.assert(Some(label), &mut pending)?;
                }
                Some(t) if t.is_ident("clocking") || (t.is_ident("default") && self.peek_at(1).is_some_and(|n| n.is_ident("clocking"))) => {
                    preamble.push(self.clocking_block()?);
                }
                Some(t) if t.is_ident("sequence") || t.is_ident("class") || t.is_ident("initial") => {
                    return self.err(format!("`{}` is outside the supported subset", t.text), &["property", "assert"]);
                }
                Some(_) => preamble.push(self.generic_item()?),
            }
        }
        let Some((property_name, property_body)) = pending.property else {
            return self.err("no property declaration found", &["property"]);
        };
        let Some((label, target, action)) = pending.assert else {
            return self.err("no `assert property` statement found", &["assert"]);
        };
        if let AssertTarget::Named(n) = &target {
            if *n != property_name {
                return Err(syntax(self.src, self.spans.assert_target.start, format!("assert references unknown property `{n}`"), vec![property_name]));
            }
        }
        let assert_label = label.unwrap_or_else(|| format!("a_{}", property_name.strip_prefix("p_").unwrap_or(&property_name)));
        Ok(AssertionUnit {
            module_name,
            ports,
            preamble,
            clocking: pending.clocking,
            disable_expr: pending.disable_expr,
            property_name,
            property_body,
            assert_label,
            assert_target: target,
            action,
        })
    }

    fn ports(&mut self) -> Result<Vec<Port>, SvaError> {
        let mut ports: Vec<Port> = Vec::new();
        if self.at_op(")") {
            return Ok(ports);
        }
        let mut current: Option<(PortDirection, u32)> = None;
        loop {
            let dir = match self.peek() {
                Some(t) if t.is_ident("input") => Some(PortDirection::Input),
                Some(t) if t.is_ident("output") => Some(PortDirection::Output),
                Some(t) if t.is_ident("inout") => Some(PortDirection::Inout),
                _ => None,
            };
            if let Some(d) = dir {
                self.pos += 1;
                for kw in ["wire", "reg", "logic"] {
                    self.eat_kw(kw);
                }
                let width = if self.eat_op("[") { self.range_width()? } else { 1 };
                current = Some((d, width));
            }
            let Some((direction, width)) = current else {
                return self.err("expected port direction (non-ANSI port lists are not supported)", &["input", "output", "inout"]);
            };
            let name = self.ident("port name")?;
            if ports.iter().any(|p| p.name == name) {
                return self.err(format!("duplicate port `{name}`"), &[]);
            }
            ports.push(Port::new(direction, width, name));
            if !self.eat_op(",") {
                return Ok(ports);
            }
        }
    }

    fn range_width(&mut self) -> Result<u32, SvaError> {
        let num = |p: &mut Self| -> Result<u32, SvaError> {
            match p.peek() {
                Some(t) if t.kind == TokenKind::Number => match t.text.parse::<u32>() {
                    Ok(v) => {
                        p.pos += 1;
                        Ok(v)
                    }
                    Err(_) => p.err("expected a decimal bound", &["number"]),
                },
                _ => p.err("expected a constant range bound", &["number"]),
            }
        };
        let msb = num(self)?;
        self.expect_op(":")?;
        let lsb = num(self)?;
        self.expect_op("]")?;
        if lsb > msb {
            return self.err("descending port range expected", &[]);
        }
        Ok(msb - lsb + 1)
    }

    fn clocking_block(&mut self) -> Result<String, SvaError> {
        let start = self.pos;
        while !self.eat_kw("endclocking") {
            if self.peek().is_none() || self.at_kw("endmodule") {
                return self.err("unterminated clocking block", &["endclocking"]);
            }
            self.pos += 1;
        }
        if self.at_op(":") {
            self.pos += 1;
            self.ident("clocking block label")?;
        }
        let text = join_tokens(&self.toks[start..self.pos]);
        if clocking_decl(&text).is_none() {
            return Err(syntax(self.src, self.toks[start].start, "malformed clocking block header", vec!["@(posedge <clock>)".into()]));
        }
        Ok(text)
    }

    /// One opaque module item: tokens through `;`, with begin/end nesting.
    fn generic_item(&mut self) -> Result<String, SvaError> {
        let start = self.pos;
        let mut depth = 0usize;
        loop {
            match self.peek() {
                None => return self.err("unterminated module item", &[";"]),
                Some(t) if t.is_ident("endmodule") || t.is_ident("property") || t.is_ident("endproperty") => {
                    return self.err("unterminated module item", &[";"])
                }
                Some(t) if t.is_ident("begin") => depth += 1,
                Some(t) if t.is_ident("end") => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        self.pos += 1;
                        break;
                    }
                }
                Some(t) if t.is_op(";") && depth == 0 => {
                    self.pos += 1;
                    break;
                }
                _ => {}
            }
            self.pos += 1;
        }
        Ok(join_tokens(&self.toks[start..self.pos]))
    }

    fn property(&mut self, preamble: &[String], pending: &mut Pending) -> Result<(), SvaError> {
        self.expect_kw("property")?;
        let name = self.ident("property name")?;
        if self.at_op("(") {
            return self.err("property arguments are not supported", &[";"]);
        }
        self.expect_op(";")?;
        let body_start = self.here();
        if self.eat_op("@") {
            pending.clocking = Some(self.clock_event(preamble)?);
        }
        if self.at_kw("disable") {
            let start = self.here();
            self.pos += 1;
            self.expect_kw("iff")?;
            self.expect_op("(")?;
            let e = self.expr()?;
            self.expect_op(")")?;
            pending.disable_expr = Some(e);
            self.spans.disable = Some(start..self.prev_end());
        }
        let ante_start = self.here();
        let antecedent = self.sequence()?;
        let ante_end = self.prev_end();
        let op = if self.eat_op("|->") {
            Some(ImplicationOp::Overlapped)
        } else if self.eat_op("|=>") {
            Some(ImplicationOp::NonOverlapped)
        } else {
            None
        };
        let body = match op {
            Some(op) => {
                self.spans.antecedent = Some(ante_start..ante_end);
                let consequent = self.sequence()?;
                PropertyExpr::Implication { antecedent, op, consequent }
            }
            None if antecedent.len() == 1 && antecedent[0].delay.is_none() => {
                PropertyExpr::Boolean(antecedent.into_iter().next().expect("one element").expr)
            }
            None => PropertyExpr::Sequence(antecedent),
        };
        self.spans.property_body = body_start..self.prev_end();
        if !self.eat_op(";") {
            return self.err("expected end of property expression", &[";", "|->", "|=>", "##"]);
        }
        self.expect_kw("endproperty")?;
        if self.at_op(":") && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Ident && !t.is_ident("assert")) && !self.peek_at(2).is_some_and(|t| t.is_ident("assert")) {
            self.pos += 1;
            let label = self.ident("property label")?;
            if label != name {
                return self.err(format!("`endproperty : {label}` does not match `{name}`"), &[]);
            }
        }
        pending.property = Some((name, body));
        Ok(())
    }

    fn clock_event(&mut self, preamble: &[String]) -> Result<ClockSpec, SvaError> {
        self.expect_op("(")?;
        let spec = match self.peek().and_then(|t| Edge::parse(&t.text)) {
            Some(edge) => {
                self.pos += 1;
                let paren = self.eat_op("(");
                let signal = self.ident("clock signal")?;
                if paren {
                    self.expect_op(")")?;
                }
                ClockSpec { edge, signal, block: None }
            }
            None => {
                let name = self.ident("clock edge or clocking block name")?;
                let decl = preamble.iter().filter_map(|i| clocking_decl(i)).find(|c| c.0 == name);
                match decl {
                    Some((_, edge, signal)) => ClockSpec { edge, signal, block: Some(name) },
                    None => {
                        self.pos -= 1;
                        return self.err(format!("unknown clocking block `{name}`"), &["posedge", "negedge"]);
                    }
                }
            }
        };
        if !self.eat_op(")") {
            return self.err("multi-event clocking is not supported", &[")"]);
        }
        Ok(spec)
    }

    fn sequence(&mut self) -> Result<Vec<SeqElem>, SvaError> {
        let mut out = Vec::new();
        loop {
            let mut delay = None;
            if self.eat_op("##") {
                if self.at_op("[") {
                    return self.err("ranged cycle delays are not supported", &["number"]);
                }
                match self.peek().map(|t| (t.kind, t.text.parse::<u32>())) {
                    Some((TokenKind::Number, Ok(n))) => {
                        self.pos += 1;
                        delay = Some(n);
                    }
                    _ => return self.err("expected a cycle count after `##`", &["number"]),
                }
            }
            if self.peek().is_some_and(|t| t.is_ident("throughout") || t.is_ident("until") || t.is_ident("within")) {
                return self.err("sequence operators are not supported", &[]);
            }
            let expr = self.expr()?;
            out.push(SeqElem { delay, expr });
            if !self.at_op("##") {
                return Ok(out);
            }
        }
    }

    fn assert(&mut self, label: Option<String>, pending: &mut Pending) -> Result<(), SvaError> {
        if pending.assert.is_some() {
            return self.err("only one assert statement per assertion unit is supported", &["endmodule"]);
        }
        self.expect_kw("assert")?;
        self.expect_kw("property")?;
        self.expect_op("(")?;
        let start = self.here();
        let target = if self.peek().is_some_and(|t| t.kind == TokenKind::Ident) && self.peek_at(1).is_some_and(|t| t.is_op(")")) {
            let name = self.ident("property name")?;
            AssertTarget::Named(name)
        } else {
            if self.at_op("@") {
                return self.err("inline clocked properties are not supported; declare a named property", &["identifier"]);
            }
            AssertTarget::Expr(self.expr()?)
        };
        self.spans.assert_target = start..self.prev_end();
        self.expect_op(")")?;
        let mut action = None;
        if self.eat_kw("else") {
            let sev_start = self.here();
            let severity = match self.peek() {
                Some(t) if t.kind == TokenKind::SysIdent => Severity::from_task(&t.text),
                _ => None,
            };
            let Some(severity) = severity else {
                return self.err("expected a severity task", &["$error", "$display", "$info", "$warning"]);
            };
            self.pos += 1;
            self.spans.severity = Some(sev_start..self.prev_end());
            let mut message = None;
            if self.eat_op("(") {
                match self.peek() {
                    Some(t) if t.kind == TokenKind::Str => {
                        message = Some(t.text.clone());
                        self.pos += 1;
                    }
                    Some(t) if t.is_op(")") => {}
                    _ => return self.err("expected a message string", &["string"]),
                }
                if !self.eat_op(")") {
                    return self.err("formatted messages with arguments are not supported", &[")"]);
                }
            }
            action = Some(Action { severity, message });
        }
        self.expect_op(";")?;
        pending.assert = Some((label, target, action));
        Ok(())
    }
}
