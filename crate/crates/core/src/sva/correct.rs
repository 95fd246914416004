use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lint::{advisories, fix_to_fixpoint, LintFinding};
use super::parser::parse_assertion_with_spans;
use super::render::render_assertion;
use super::{clocking_decl, parse_localparam, AssertionUnit, SvaError};
use crate::expr::{join_tokens, lex, sized_literal, Expr, TokenKind};
use crate::similarity::identifier_similarity;
use crate::spec_model::{AddressRange, IpBlock, SocSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingKind {
    AddressConstant,
    Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub kind: BindingKind,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionReport {
    pub text: String,
    pub unit: AssertionUnit,
    /// Fix-bearing findings that were applied, in application order.
    pub applied: Vec<LintFinding>,
    pub bindings: Vec<Binding>,
    /// Advisory findings on the corrected text, for human review.
    pub advisories: Vec<LintFinding>,
}

const MIN_NAME_SIMILARITY: f64 = 0.5;

/// Applies lint fixes to a fixpoint, then (with a target IP) binds address
/// constants and unknown signal names to the specification.
pub fn correct(text: &str, spec: &SocSpec, target_ip: Option<&IpBlock>) -> Result<CorrectionReport, SvaError> {
    let (fixed, applied, _) = fix_to_fixpoint(text);
    let (unit, _) = parse_assertion_with_spans(&fixed).map_err(|e| SvaError::Uncorrectable(e.to_string()))?;
    let (unit, bindings) = match target_ip {
        Some(ip) => bind(unit, spec, ip),
        None => (unit, Vec::new()),
    };
    let out = if !bindings.is_empty() {
        render_assertion(&unit)
    } else if !applied.is_empty() {
        fixed
    } else {
        text.to_string()
    };
    let (unit, spans) = parse_assertion_with_spans(&out).map_err(|e| SvaError::Uncorrectable(e.to_string()))?;
    let advisories = advisories(&unit, &spans);
    Ok(CorrectionReport { text: out, unit, applied, bindings, advisories })
}

fn is_address_name(name: &str) -> bool {
    name.to_ascii_lowercase().split('_').any(|s| matches!(s, "addr" | "adr" | "address"))
}

fn is_upper_bound_name(name: &str) -> bool {
    name.to_ascii_uppercase().split('_').any(|s| matches!(s, "END" | "HIGH" | "HI" | "MAX" | "LAST" | "LIMIT" | "TOP"))
}

fn format_literal(width: u32, value: u32) -> String {
    let digits = width.div_ceil(4).max(1) as usize;
    format!("{width}'h{value:0digits$X}")
}

/// Replacement for an address literal lying outside the IP's address range.
fn rebind_literal(text: &str, ip: &IpBlock, upper: bool) -> Option<String> {
    let (width, value) = sized_literal(text)?;
    if width > 32 || u32::try_from(value).is_ok_and(|v| ip.address_range.contains(v)) {
        return None;
    }
    let target: AddressRange = ip.protected_range.unwrap_or(ip.address_range);
    Some(format_literal(width.max(32), if upper { target.high } else { target.low }))
}

fn bind(unit: AssertionUnit, spec: &SocSpec, ip: &IpBlock) -> (AssertionUnit, Vec<Binding>) {
    let mut bindings = Vec::new();
    let mut unit = bind_addresses(unit, ip, &mut bindings);
    let renames = name_bindings(&unit, spec, ip);
    if !renames.is_empty() {
        for (from, to) in &renames {
            bindings.push(Binding { kind: BindingKind::Identifier, from: from.clone(), to: to.clone() });
        }
        unit = rename(unit, &renames);
    }
    (unit, bindings)
}

fn bind_addresses(mut unit: AssertionUnit, ip: &IpBlock, bindings: &mut Vec<Binding>) -> AssertionUnit {
    for item in unit.preamble.iter_mut() {
        let Some(params) = parse_localparam(item) else { continue };
        let Ok(mut toks) = lex(item) else { continue };
        let mut changed = false;
        for (name, value) in params {
            let Expr::Number(lit) = &value else { continue };
            if !is_address_name(&name) {
                continue;
            }
            let Some(new) = rebind_literal(lit, ip, is_upper_bound_name(&name)) else { continue };
            let at = toks.windows(3).position(|w| w[0].is_ident(&name) && w[1].is_op("=") && w[2].text == *lit);
            if let Some(i) = at {
                toks[i + 2].text = new.clone();
                bindings.push(Binding { kind: BindingKind::AddressConstant, from: format!("{name} = {lit}"), to: format!("{name} = {new}") });
                changed = true;
            }
        }
        if changed {
            *item = join_tokens(&toks);
        }
    }
    let mut found = Vec::new();
    let unit = unit.map_exprs(&mut |e| {
        e.map(&mut |node| {
            let Expr::Binary(l, op, r) = &node else { return node };
            if !matches!(op.as_str(), "<" | "<=" | ">" | ">=" | "==" | "!=" | "===" | "!==") {
                return node;
            }
            let (addr_left, lit) = match (l.unparen(), r.unparen()) {
                (Expr::Ident(n), Expr::Number(lit)) if is_address_name(n) => (true, lit.clone()),
                (Expr::Number(lit), Expr::Ident(n)) if is_address_name(n) => (false, lit.clone()),
                _ => return node,
            };
            let upper = matches!((addr_left, op.as_str()), (true, "<" | "<=") | (false, ">" | ">="));
            let Some(new) = rebind_literal(&lit, ip, upper) else { return node };
            found.push(Binding { kind: BindingKind::AddressConstant, from: lit, to: new.clone() });
            let (l, r) = if addr_left { (*l.clone(), Expr::Number(new)) } else { (Expr::Number(new), *r.clone()) };
            Expr::Binary(Box::new(l), op.clone(), Box::new(r))
        })
    });
    bindings.extend(found);
    unit
}

fn used_names(unit: &AssertionUnit) -> Vec<String> {
    let mut names: Vec<String> = unit.ports.iter().map(|p| p.name.clone()).collect();
    if let Some(c) = &unit.clocking {
        names.push(c.signal.clone());
    }
    let mut exprs: Vec<&Expr> = unit.property_body.exprs();
    exprs.extend(unit.disable_expr.iter());
    for e in exprs {
        for n in e.identifiers() {
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    names
}

fn name_bindings(unit: &AssertionUnit, spec: &SocSpec, ip: &IpBlock) -> BTreeMap<String, String> {
    let mut candidates: Vec<String> = ip.ports.iter().map(|p| p.name.clone()).collect();
    for s in &spec.bus_interface.signal_names {
        if !candidates.contains(s) {
            candidates.push(s.clone());
        }
    }
    let locals: Vec<String> = unit
        .localparams()
        .into_iter()
        .map(|(n, _)| n)
        .chain(unit.preamble.iter().filter_map(|i| clocking_decl(i).map(|c| c.0)))
        .chain([unit.property_name.clone()])
        .collect();
    let used = used_names(unit);
    let mut taken: Vec<String> = used.iter().filter(|n| candidates.contains(n)).cloned().collect();
    let mut out = BTreeMap::new();
    for name in &used {
        if candidates.contains(name) || locals.contains(name) {
            continue;
        }
        let mut best: Option<(&String, f64)> = None;
        for c in &candidates {
            let s = identifier_similarity(name, c);
            if s >= MIN_NAME_SIMILARITY && best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        if let Some((target, _)) = best {
            if !taken.contains(target) {
                taken.push(target.clone());
                out.insert(name.clone(), target.clone());
            }
        }
    }
    out
}

fn rename(mut unit: AssertionUnit, renames: &BTreeMap<String, String>) -> AssertionUnit {
    let swap = |s: &mut String| {
        if let Some(to) = renames.get(s.as_str()) {
            *s = to.clone();
        }
    };
    unit.ports.iter_mut().for_each(|p| swap(&mut p.name));
    if let Some(c) = unit.clocking.as_mut() {
        swap(&mut c.signal);
    }
    for item in unit.preamble.iter_mut() {
        if let Ok(mut toks) = lex(item) {
            let mut changed = false;
            for t in toks.iter_mut().filter(|t| t.kind == TokenKind::Ident) {
                if let Some(to) = renames.get(&t.text) {
                    t.text = to.clone();
                    changed = true;
                }
            }
            if changed {
                *item = join_tokens(&toks);
            }
        }
    }
    unit.map_exprs(&mut |e| {
        e.map(&mut |node| match node {
            Expr::Ident(n) => Expr::Ident(renames.get(&n).cloned().unwrap_or(n)),
            other => other,
        })
    })
}
