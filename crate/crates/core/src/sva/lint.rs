use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::parser::parse_assertion_with_spans;
use super::{AssertionUnit, PropertyExpr};
use crate::expr::{join_tokens, lex, Expr, Token, TokenKind, UnaryOp};

const KEYWORD_FIXES: &str = include_str!("../../data/sva_keyword_fixes.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Text does not parse even after automatic fixes.
    R0,
    /// Near-miss keyword or system function.
    R1,
    /// Fused or misspelled `disable iff`.
    R2,
    /// Disable guard that switches the check off whenever it would fire.
    R3,
    /// Missing `@` before a clocking event.
    R4,
    /// Handshake checked without the initiating event.
    R5,
    /// `$info` where a violation should report `$error`.
    R6,
    /// Negated property in `assert property (!p)`.
    R7,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::R0 => "R0",
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
            Rule::R5 => "R5",
            Rule::R6 => "R6",
            Rule::R7 => "R7",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: Rule,
    /// Byte range in the linted text; empty for insertions.
    pub span: Range<usize>,
    pub message: String,
    /// Replacement text for `span`; `None` for advisory findings.
    pub fix: Option<String>,
}

/// `(misspelling, correction)` pairs for rule R1.
pub fn keyword_fixes() -> &'static [(String, String)] {
    static TABLE: OnceLock<Vec<(String, String)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        KEYWORD_FIXES
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once('\t'))
            .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
            .collect()
    })
}

fn matching_paren(toks: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate().skip(open) {
        if t.is_op("(") {
            depth += 1;
        } else if t.is_op(")") {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

/// Rules that work on tokens and carry fixes (R1, R2, R4, R6, R7).
pub(crate) fn token_findings(text: &str) -> Vec<LintFinding> {
    let Ok(toks) = lex(text) else { return Vec::new() };
    let mut out = Vec::new();
    let property_names: BTreeSet<&str> = toks
        .windows(2)
        .filter(|w| w[0].is_ident("property") && w[1].kind == TokenKind::Ident)
        .map(|w| w[1].text.as_str())
        .collect();
    let mut in_property = false;
    let mut i = 0;
    while i < toks.len() {
        let t = &toks[i];
        let prev = i.checked_sub(1).map(|p| &toks[p]);
        let next = toks.get(i + 1);
        if t.is_ident("property") && !prev.is_some_and(|p| p.is_ident("assert")) {
            in_property = true;
        } else if t.is_ident("endproperty") {
            in_property = false;
        }

        if matches!(t.kind, TokenKind::Ident | TokenKind::SysIdent) {
            if let Some((_, right)) = keyword_fixes().iter().find(|(wrong, _)| *wrong == t.text) {
                out.push(LintFinding {
                    rule: Rule::R1,
                    span: t.start..t.end,
                    message: format!("`{}` is not a SystemVerilog keyword; did you mean `{right}`?", t.text),
                    fix: Some(right.clone()),
                });
            }
        }

        let fused = matches!(t.text.as_str(), "disable_iff" | "disable_if" | "disableiff" | "disable_iif") && t.kind == TokenKind::Ident;
        let split = t.is_ident("disable") && next.is_some_and(|n| n.is_ident("if") || n.is_ident("if_f"));
        if fused || split {
            let paren_at = if fused { i + 1 } else { i + 2 };
            let close = toks.get(paren_at).filter(|p| p.is_op("(")).and_then(|_| matching_paren(&toks, paren_at));
            let (end, fix) = match close {
                Some(c) => (toks[c].end, format!("disable iff ({})", join_tokens(&toks[paren_at + 1..c]))),
                None => (toks[paren_at - 1].end, "disable iff".to_string()),
            };
            out.push(LintFinding {
                rule: Rule::R2,
                span: t.start..end,
                message: "malformed `disable iff`".into(),
                fix: Some(fix),
            });
        }

        if t.is_op("(") && next.is_some_and(|n| n.is_ident("posedge") || n.is_ident("negedge")) && !prev.is_some_and(|p| p.is_op("@")) {
            out.push(LintFinding {
                rule: Rule::R4,
                span: t.start..t.start,
                message: "clocking event is missing `@`".into(),
                fix: Some("@".into()),
            });
        }

        if t.kind == TokenKind::SysIdent && t.text == "$info" && (prev.is_some_and(|p| p.is_ident("else")) || in_property) {
            out.push(LintFinding {
                rule: Rule::R6,
                span: t.start..t.end,
                message: "a violated check should report with `$error`, not `$info`".into(),
                fix: Some("$error".into()),
            });
        }

        if t.is_ident("assert")
            && toks.get(i + 1).is_some_and(|n| n.is_ident("property"))
            && toks.get(i + 2).is_some_and(|n| n.is_op("("))
            && toks.get(i + 3).is_some_and(|n| n.is_op("!"))
            && toks.get(i + 4).is_some_and(|n| n.kind == TokenKind::Ident && property_names.contains(n.text.as_str()))
            && toks.get(i + 5).is_some_and(|n| n.is_op(")"))
        {
            let bang = &toks[i + 3];
            out.push(LintFinding {
                rule: Rule::R7,
                span: bang.start..bang.end,
                message: format!("asserting the negation of `{}` reports the wrong condition", toks[i + 4].text),
                fix: Some(String::new()),
            });
        }
        i += 1;
    }
    out
}

/// `(start, end, replacement length)` in the pre-edit text.
pub(crate) type Edit = (usize, usize, usize);

/// Applies non-overlapping fixes; returns the new text, the applied findings
/// and the edits performed.
pub(crate) fn apply_fixes(text: &str, findings: &[LintFinding]) -> (String, Vec<LintFinding>, Vec<Edit>) {
    let mut fixable: Vec<&LintFinding> = findings.iter().filter(|f| f.fix.is_some()).collect();
    fixable.sort_by_key(|f| (f.span.start, f.span.end));
    let mut out = String::with_capacity(text.len());
    let mut applied = Vec::new();
    let mut edits = Vec::new();
    let mut cursor = 0;
    for f in fixable {
        if f.span.start < cursor {
            continue;
        }
        let fix = f.fix.as_deref().unwrap_or_default();
        out.push_str(&text[cursor..f.span.start]);
        out.push_str(fix);
        cursor = f.span.end;
        edits.push((f.span.start, f.span.end, fix.len()));
        applied.push(f.clone());
    }
    out.push_str(&text[cursor..]);
    (out, applied, edits)
}

/// Runs token fixes until nothing changes (at most 10 passes).
pub(crate) fn fix_to_fixpoint(text: &str) -> (String, Vec<LintFinding>, Vec<Vec<Edit>>) {
    let mut current = text.to_string();
    let mut applied = Vec::new();
    let mut history = Vec::new();
    for _ in 0..10 {
        let findings = token_findings(&current);
        let (next, done, edits) = apply_fixes(&current, &findings);
        if done.is_empty() {
            break;
        }
        applied.extend(done);
        history.push(edits);
        current = next;
    }
    (current, applied, history)
}

fn map_back(pos: usize, edits: &[Edit]) -> usize {
    let mut shift: isize = 0;
    for &(start, end, new_len) in edits {
        let new_start = (start as isize + shift) as usize;
        if pos < new_start {
            break;
        }
        if pos < new_start + new_len {
            return start;
        }
        shift += new_len as isize - (end - start) as isize;
    }
    (pos as isize - shift).max(0) as usize
}

fn map_span(span: Range<usize>, history: &[Vec<Edit>]) -> Range<usize> {
    let (mut s, mut e) = (span.start, span.end);
    for edits in history.iter().rev() {
        s = map_back(s, edits);
        e = map_back(e, edits).max(s);
    }
    s..e
}

/// `(identifier, value)` literals of a conjunction (`&&`) or disjunction (`||`).
fn literals(e: &Expr, joiner: &str, out: &mut Vec<(String, bool)>) {
    match e.unparen() {
        Expr::Binary(l, op, r) if op == joiner || (joiner == "&&" && op == "&") || (joiner == "||" && op == "|") => {
            literals(l, joiner, out);
            literals(r, joiner, out);
        }
        Expr::Ident(x) => out.push((x.clone(), true)),
        Expr::Unary(UnaryOp::Not | UnaryOp::BitNot, inner) => {
            if let Expr::Ident(x) = inner.unparen() {
                out.push((x.clone(), false));
            }
        }
        Expr::SysCall(name, args) if args.len() == 1 && (name == "$rose" || name == "$fell") => {
            let mut inner = Vec::new();
            literals(&args[0], joiner, &mut inner);
            if name == "$fell" {
                inner.iter_mut().for_each(|l| l.1 = !l.1);
            }
            out.extend(inner);
        }
        _ => {}
    }
}

fn name_segments(name: &str) -> Vec<String> {
    name.to_ascii_lowercase().split('_').map(String::from).collect()
}

const HANDSHAKE: &[&str] = &["ready", "rdy", "ack", "done", "valid", "vld"];
const INITIATOR: &[&str] = &["start", "req", "request", "go", "en", "enable", "strt", "cyc", "stb"];

fn ast_findings(unit: &AssertionUnit, spans: &super::Spans) -> Vec<LintFinding> {
    let mut out = Vec::new();
    let required: Vec<&Expr> = match &unit.property_body {
        PropertyExpr::Boolean(e) => vec![e],
        PropertyExpr::Sequence(s) => s.iter().map(|x| &x.expr).collect(),
        PropertyExpr::Implication { antecedent, .. } => antecedent.iter().map(|x| &x.expr).collect(),
    };
    if let (Some(d), Some(span)) = (&unit.disable_expr, &spans.disable) {
        let mut disabling = Vec::new();
        literals(d, "||", &mut disabling);
        let mut needed = Vec::new();
        required.iter().for_each(|e| literals(e, "&&", &mut needed));
        if let Some((name, _)) = disabling.iter().find(|l| needed.contains(l)) {
            out.push(LintFinding {
                rule: Rule::R3,
                span: span.clone(),
                message: format!("`{name}` disables the assertion in exactly the state the property checks, so it never fires"),
                fix: None,
            });
        }
    }
    if let (PropertyExpr::Implication { antecedent, .. }, Some(span)) = (&unit.property_body, &spans.antecedent) {
        let names: Vec<String> = antecedent.iter().flat_map(|x| x.expr.identifiers()).collect();
        let has = |set: &[&str]| names.iter().any(|n| name_segments(n).iter().any(|s| set.contains(&s.as_str())));
        if has(HANDSHAKE) && !has(INITIATOR) {
            out.push(LintFinding {
                rule: Rule::R5,
                span: span.clone(),
                message: "antecedent checks a completion handshake without the event that starts the transfer".into(),
                fix: None,
            });
        }
    }
    out
}

/// Findings for all rules. Text that does not parse even after the
/// automatic fixes yields a single R0 finding.
pub fn lint(text: &str) -> Vec<LintFinding> {
    let first = token_findings(text);
    let (fixed, _, history) = fix_to_fixpoint(text);
    match parse_assertion_with_spans(&fixed) {
        Ok((unit, spans)) => {
            let mut out = first;
            for mut f in ast_findings(&unit, &spans) {
                f.span = map_span(f.span, &history);
                out.push(f);
            }
            out.sort_by_key(|f| (f.span.start, f.rule));
            out
        }
        Err(e) => vec![LintFinding { rule: Rule::R0, span: 0..text.len(), message: e.to_string(), fix: None }],
    }
}

pub(crate) fn advisories(unit: &AssertionUnit, spans: &super::Spans) -> Vec<LintFinding> {
    ast_findings(unit, spans)
}
