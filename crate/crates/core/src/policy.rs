//! Assertion to security policy translation.
//!
//! A policy is a `<predicate, timing, action>` triple. The predicate is an
//! alternating list of expression atoms and cycle-delay markers, the timing
//! carries clock, reset and operating mode, and the action is a list of
//! signal assignments applied when the predicate holds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwe_db::CweEntry;
use crate::expr::{join_tokens, lex, parse_expr, Expr, TokenKind};
use crate::spec_model::SocSpec;
use crate::sva::{AssertionUnit, Edge, ImplicationOp, PropertyExpr, SeqElem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("action parse error at byte {pos}: {message}")]
    Action { pos: usize, message: String },
    #[error("action is empty")]
    EmptyAction,
    #[error("property has no expressions")]
    EmptyProperty,
    #[error("unresolvable signal `{0}`: matches no IP port and no bus signal")]
    UnresolvableSignal(String),
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("policy document format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateAtom {
    Expression(Expr),
    /// `## n ##` marker, n >= 1.
    Delay(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSignal {
    pub edge: Edge,
    pub signal: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimingSpec {
    pub clock: Option<EdgeSignal>,
    pub reset: Option<EdgeSignal>,
    /// Operating mode: 0 user, 1 debug, others design-defined.
    pub mode: u32,
}

/// Assignment target: `slave['Name'].signal` or a bare signal name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalRef {
    Qualified { scope: String, ip: String, signal: String },
    Bare(String),
}

impl SignalRef {
    pub fn signal(&self) -> &str {
        match self {
            SignalRef::Qualified { signal, .. } | SignalRef::Bare(signal) => signal,
        }
    }

    pub fn ip(&self) -> Option<&str> {
        match self {
            SignalRef::Qualified { ip, .. } => Some(ip),
            SignalRef::Bare(_) => None,
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            SignalRef::Qualified { scope, ip, signal } => {
                Expr::Qualified { scope: scope.clone(), ip: ip.clone(), signal: signal.clone() }
            }
            SignalRef::Bare(s) => Expr::Ident(s.clone()),
        }
    }

    pub fn from_expr(e: &Expr) -> Option<SignalRef> {
        match e {
            Expr::Qualified { scope, ip, signal } => {
                Some(SignalRef::Qualified { scope: scope.clone(), ip: ip.clone(), signal: signal.clone() })
            }
            Expr::Ident(s) => Some(SignalRef::Bare(s.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for SignalRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_expr().fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalAssignment {
    pub target: SignalRef,
    pub value: Expr,
}

impl fmt::Display for SignalAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {};", self.target, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    BusLevel,
    IpLevel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityPolicy {
    pub predicate: Vec<PredicateAtom>,
    pub timing: TimingSpec,
    pub action: Vec<SignalAssignment>,
    pub source_cwe: Option<String>,
    /// Set by [`classify_placement`].
    pub placement: Option<Placement>,
}

impl SecurityPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let invalid = |m: &str| Err(PolicyError::Invalid(m.into()));
        if self.predicate.is_empty() {
            return invalid("predicate is empty");
        }
        for (i, atom) in self.predicate.iter().enumerate() {
            match (i % 2, atom) {
                (0, PredicateAtom::Expression(_)) => {}
                (1, PredicateAtom::Delay(n)) if *n >= 1 => {}
                (1, PredicateAtom::Delay(_)) => return invalid("delay markers need at least one cycle"),
                _ => return invalid("predicate must alternate expression and delay atoms"),
            }
        }
        if matches!(self.predicate.last(), Some(PredicateAtom::Delay(_))) {
            return invalid("predicate ends with a delay marker");
        }
        if self.action.is_empty() {
            return Err(PolicyError::EmptyAction);
        }
        Ok(())
    }

    pub fn expressions(&self) -> impl Iterator<Item = &Expr> {
        self.predicate.iter().filter_map(|a| match a {
            PredicateAtom::Expression(e) => Some(e),
            PredicateAtom::Delay(_) => None,
        })
    }

    pub fn is_sequential(&self) -> bool {
        self.predicate.len() > 1
    }

    /// `a ## 1 ## b` rendering of the predicate.
    pub fn predicate_text(&self) -> String {
        let parts: Vec<String> = self
            .predicate
            .iter()
            .map(|a| match a {
                PredicateAtom::Expression(e) => e.to_string(),
                PredicateAtom::Delay(n) => format!("## {n} ##"),
            })
            .collect();
        parts.join(" ")
    }
}

// ---- action mini-language ----------------------------------------------------

/// Parses `target = value;` statements. Targets are `slave['Name'].signal`
/// or bare identifiers; the final semicolon may be omitted.
pub fn parse_action(text: &str) -> Result<Vec<SignalAssignment>, PolicyError> {
    let toks = lex(text).map_err(|e| PolicyError::Action { pos: e.pos, message: e.message })?;
    let mut out = Vec::new();
    for stmt in toks.split(|t| t.is_op(";")) {
        if stmt.is_empty() {
            continue;
        }
        let at = stmt[0].start;
        let err = |message: String| PolicyError::Action { pos: at, message };
        let target = match stmt.first() {
            Some(t) if matches!(t.kind, TokenKind::Ident | TokenKind::QualifiedRef) => {
                let e = parse_expr(&t.text).map_err(|e| err(e.message))?;
                SignalRef::from_expr(&e).ok_or_else(|| err(format!("`{}` is not an assignable signal", t.text)))?
            }
            Some(t) => return Err(err(format!("expected a signal name, found `{}`", t.text))),
            None => unreachable!(),
        };
        if !stmt.get(1).is_some_and(|t| t.is_op("=")) {
            return Err(err(format!("expected `=` after `{target}`")));
        }
        if stmt.len() < 3 {
            return Err(err(format!("missing value for `{target}`")));
        }
        let value = parse_expr(&join_tokens(&stmt[2..])).map_err(|e| err(format!("bad value: {}", e.message)))?;
        out.push(SignalAssignment { target, value });
    }
    if out.is_empty() {
        return Err(PolicyError::EmptyAction);
    }
    Ok(out)
}

pub fn render_action(action: &[SignalAssignment]) -> String {
    action.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

// ---- translation -------------------------------------------------------------

fn needs_paren_for_and(e: &Expr) -> bool {
    match e {
        Expr::Binary(_, op, _) => matches!(op.as_str(), "||" | "->"),
        Expr::Ternary(..) => true,
        _ => false,
    }
}

pub(crate) fn conjoin(a: Expr, b: Expr) -> Expr {
    let wrap = |e: Expr| if needs_paren_for_and(&e) { Expr::Paren(Box::new(e)) } else { e };
    Expr::Binary(Box::new(wrap(a)), "&&".into(), Box::new(wrap(b)))
}

/// Appends a sequence to the predicate. `lead` is the delay between the
/// previous atom and the first element; `##0` conjoins with the previous atom.
fn push_sequence(atoms: &mut Vec<PredicateAtom>, seq: Vec<SeqElem>, lead: Option<u32>) {
    for (i, elem) in seq.into_iter().enumerate() {
        let delay = if i == 0 { lead } else { Some(elem.delay.unwrap_or(1)) };
        match (delay, atoms.last_mut()) {
            (_, None) => atoms.push(PredicateAtom::Expression(elem.expr)),
            (Some(0), Some(PredicateAtom::Expression(prev))) => {
                let p = std::mem::replace(prev, Expr::Number(String::new()));
                *prev = conjoin(p, elem.expr);
            }
            (d, Some(_)) => {
                atoms.push(PredicateAtom::Delay(d.unwrap_or(1).max(1)));
                atoms.push(PredicateAtom::Expression(elem.expr));
            }
        }
    }
}

fn inline_params(unit: &AssertionUnit, e: Expr) -> Expr {
    let params: BTreeMap<String, Expr> = unit.localparams().into_iter().collect();
    if params.is_empty() {
        return e;
    }
    e.map(&mut |node| match node {
        Expr::Ident(n) => match params.get(&n) {
            Some(v) => v.clone(),
            None => Expr::Ident(n),
        },
        other => other,
    })
}

/// Translates a parsed assertion into a policy. The action is given in the
/// action mini-language; see [`parse_action`].
pub fn assertion_to_policy(unit: &AssertionUnit, action_input: &str, _spec: &SocSpec) -> Result<SecurityPolicy, PolicyError> {
    let action = parse_action(action_input)?;
    let timing = TimingSpec {
        clock: unit.clocking.as_ref().map(|c| EdgeSignal { edge: c.edge, signal: c.signal.clone() }),
        reset: unit.clocking.as_ref().and(unit.reset()).map(|(edge, signal)| EdgeSignal { edge, signal }),
        mode: 0,
    };
    let inline = |s: Vec<SeqElem>| -> Vec<SeqElem> {
        s.into_iter().map(|x| SeqElem { delay: x.delay, expr: inline_params(unit, x.expr) }).collect()
    };
    let mut predicate = Vec::new();
    match unit.property_body.clone() {
        PropertyExpr::Boolean(e) => predicate.push(PredicateAtom::Expression(inline_params(unit, e))),
        // a leading delay has no preceding atom to separate from
        PropertyExpr::Sequence(s) => push_sequence(&mut predicate, inline(s), None),
        PropertyExpr::Implication { antecedent, op, consequent } => {
            push_sequence(&mut predicate, inline(antecedent), None);
            let first = consequent.first().and_then(|x| x.delay);
            let lead = match op {
                ImplicationOp::Overlapped => first.or(Some(1)),
                ImplicationOp::NonOverlapped => Some(first.unwrap_or(0) + 1),
            };
            push_sequence(&mut predicate, inline(consequent), lead);
        }
    }
    if predicate.is_empty() {
        return Err(PolicyError::EmptyProperty);
    }
    Ok(SecurityPolicy { predicate, timing, action, source_cwe: None, placement: None })
}

// ---- placement ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Owner {
    Bus,
    Ips(BTreeSet<String>),
}

fn resolve(r: &SignalRef, spec: &SocSpec) -> Result<Owner, PolicyError> {
    let unresolved = || PolicyError::UnresolvableSignal(r.to_string());
    match r {
        SignalRef::Qualified { ip, signal, .. } => {
            let block = spec.find_ip(ip).ok_or_else(unresolved)?;
            if block.port(signal).is_none() && spec.bus_interface.find_signal(signal).is_none() {
                return Err(unresolved());
            }
            Ok(Owner::Ips(BTreeSet::from([block.key().to_string()])))
        }
        SignalRef::Bare(name) => {
            let owners: BTreeSet<String> =
                spec.ips.iter().filter(|ip| ip.port(name).is_some()).map(|ip| ip.key().to_string()).collect();
            if !owners.is_empty() {
                Ok(Owner::Ips(owners))
            } else if spec.bus_interface.find_signal(name).is_some() {
                Ok(Owner::Bus)
            } else {
                Err(unresolved())
            }
        }
    }
}

/// Every signal the predicate or action refers to, in first-use order.
pub fn referenced_signals(policy: &SecurityPolicy) -> Vec<SignalRef> {
    let mut out: Vec<SignalRef> = Vec::new();
    let mut add = |r: SignalRef| {
        if !out.contains(&r) {
            out.push(r);
        }
    };
    let values = policy.action.iter().map(|a| &a.value);
    for e in policy.expressions().chain(values) {
        e.walk(&mut |n| {
            if let Some(r) = SignalRef::from_expr(n) {
                add(r);
            }
        });
    }
    for a in &policy.action {
        add(a.target.clone());
    }
    out
}

/// Decides whether a policy is enforced in the central bus module or in a
/// single IP's wrapper.
pub fn classify_placement(policy: &SecurityPolicy, entry: Option<&CweEntry>, spec: &SocSpec) -> Result<SecurityPolicy, PolicyError> {
    let mut touches_bus = false;
    let mut fixed: BTreeSet<String> = BTreeSet::new();
    let mut shared: Vec<BTreeSet<String>> = Vec::new();
    for r in referenced_signals(policy) {
        match resolve(&r, spec)? {
            Owner::Bus => touches_bus = true,
            Owner::Ips(set) if set.len() == 1 => fixed.extend(set),
            Owner::Ips(set) => shared.push(set),
        }
    }
    // a name several IPs share is attributed to an IP already involved,
    // else to the first IP common to all such names
    let open: Vec<&BTreeSet<String>> = shared.iter().filter(|s| s.is_disjoint(&fixed)).collect();
    if let Some(first) = open.first() {
        match first.iter().find(|ip| open.iter().all(|s| s.contains(*ip))) {
            Some(ip) => {
                fixed.insert(ip.clone());
            }
            None => touches_bus = true,
        }
    }
    let forced_bus = entry.is_some_and(|e| e.bus && !e.ip);
    let placement = if touches_bus || fixed.len() > 1 || forced_bus {
        Placement::BusLevel
    } else if let Some(ip) = fixed.into_iter().next() {
        Placement::IpLevel(ip)
    } else {
        let hinted = entry.filter(|e| e.ip).and_then(|e| e.ip_names().iter().find_map(|n| spec.find_ip(n)));
        hinted.map_or(Placement::BusLevel, |ip| Placement::IpLevel(ip.key().to_string()))
    };
    Ok(SecurityPolicy { placement: Some(placement), ..policy.clone() })
}

// ---- document ----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum AtomDoc {
    Expr { expr: String },
    Delay { delay_cycles: u32 },
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TimingDoc {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    clock_edge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    clock_signal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    reset_edge: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    reset_signal: Option<String>,
    #[serde(default)]
    mode: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    target: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    predicate: Vec<AtomDoc>,
    timing: TimingDoc,
    action: Vec<AssignmentDoc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    source_cwe: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    placement: Option<Placement>,
}

fn to_doc(p: &SecurityPolicy) -> PolicyDoc {
    let edge = |x: &Option<EdgeSignal>| x.as_ref().map(|e| (e.edge.as_str().to_string(), e.signal.clone())).unzip();
    let (clock_edge, clock_signal) = edge(&p.timing.clock);
    let (reset_edge, reset_signal) = edge(&p.timing.reset);
    PolicyDoc {
        predicate: p
            .predicate
            .iter()
            .map(|a| match a {
                PredicateAtom::Expression(e) => AtomDoc::Expr { expr: e.to_string() },
                PredicateAtom::Delay(n) => AtomDoc::Delay { delay_cycles: *n },
            })
            .collect(),
        timing: TimingDoc { clock_edge, clock_signal, reset_edge, reset_signal, mode: p.timing.mode },
        action: p.action.iter().map(|a| AssignmentDoc { target: a.target.to_string(), value: a.value.to_string() }).collect(),
        source_cwe: p.source_cwe.clone(),
        placement: p.placement.clone(),
    }
}

fn from_doc(doc: PolicyDoc) -> Result<SecurityPolicy, PolicyError> {
    let fmt_err = |m: String| PolicyError::Format(m);
    let expr = |t: &str| parse_expr(t).map_err(|e| fmt_err(format!("`{t}`: {}", e.message)));
    let edge = |e: Option<String>, s: Option<String>, what: &str| -> Result<Option<EdgeSignal>, PolicyError> {
        match (e, s) {
            (None, None) => Ok(None),
            (Some(e), Some(signal)) => {
                let edge = Edge::parse(&e).ok_or_else(|| fmt_err(format!("bad {what}_edge `{e}`")))?;
                Ok(Some(EdgeSignal { edge, signal }))
            }
            _ => Err(fmt_err(format!("{what}_edge and {what}_signal must appear together"))),
        }
    };
    let predicate = doc
        .predicate
        .iter()
        .map(|a| match a {
            AtomDoc::Expr { expr: t } => expr(t).map(PredicateAtom::Expression),
            AtomDoc::Delay { delay_cycles } => Ok(PredicateAtom::Delay(*delay_cycles)),
        })
        .collect::<Result<_, _>>()?;
    let action = doc
        .action
        .iter()
        .map(|a| {
            let target = SignalRef::from_expr(&expr(&a.target)?).ok_or_else(|| fmt_err(format!("bad target `{}`", a.target)))?;
            Ok(SignalAssignment { target, value: expr(&a.value)? })
        })
        .collect::<Result<_, PolicyError>>()?;
    let t = doc.timing;
    let policy = SecurityPolicy {
        predicate,
        timing: TimingSpec {
            clock: edge(t.clock_edge, t.clock_signal, "clock")?,
            reset: edge(t.reset_edge, t.reset_signal, "reset")?,
            mode: t.mode,
        },
        action,
        source_cwe: doc.source_cwe,
        placement: doc.placement,
    };
    policy.validate().map_err(|e| fmt_err(e.to_string()))?;
    Ok(policy)
}

pub fn serialize_policy(policy: &SecurityPolicy) -> String {
    serde_json::to_string_pretty(&to_doc(policy)).expect("policy document serializes")
}

pub fn parse_policy(text: &str) -> Result<SecurityPolicy, PolicyError> {
    let doc: PolicyDoc = serde_json::from_str(text).map_err(|e| PolicyError::Format(e.to_string()))?;
    from_doc(doc)
}

/// A JSON array of policy documents.
pub fn serialize_policies(policies: &[SecurityPolicy]) -> String {
    let docs: Vec<PolicyDoc> = policies.iter().map(to_doc).collect();
    serde_json::to_string_pretty(&docs).expect("policy documents serialize")
}

/// Accepts either a single policy document or an array of them.
pub fn parse_policies(text: &str) -> Result<Vec<SecurityPolicy>, PolicyError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PolicyError::Format(e.to_string()))?;
    let docs = match value {
        serde_json::Value::Array(items) => items,
        single => vec![single],
    };
    docs.into_iter()
        .map(|v| from_doc(serde_json::from_value(v).map_err(|e| PolicyError::Format(e.to_string()))?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cwe_db::parse_db;
    use crate::spec_model::parse_spec;
    use crate::sva::parse_assertion;

    const CWE125: &str = include_str!("../../../fixtures/sva/reference/cwe125_out_of_bounds_read.sv");

    fn mit_cep() -> SocSpec {
        parse_spec(include_str!("../../../fixtures/specs/mit_cep.json")).unwrap()
    }

    fn example_soc() -> SocSpec {
        parse_spec(include_str!("../../../fixtures/specs/example_soc.json")).unwrap()
    }

    fn translate(sva: &str, action: &str) -> SecurityPolicy {
        assertion_to_policy(&parse_assertion(sva).unwrap(), action, &mit_cep()).unwrap()
    }

    fn e(t: &str) -> PredicateAtom {
        PredicateAtom::Expression(parse_expr(t).unwrap())
    }

    #[test]
    fn out_of_bounds_read_translation() {
        let p = translate(CWE125, "slave['SPI'].w_data = 32'h0;");
        assert_eq!(
            p.predicate,
            vec![e("$rose(start)"), PredicateAtom::Delay(1), e("(wb_adr_i >= 32'h93000004 && wb_adr_i <= 32'h93000008)")]
        );
        assert_eq!(p.timing.clock, Some(EdgeSignal { edge: Edge::Posedge, signal: "clk_i".into() }));
        assert_eq!(p.timing.mode, 0);
        assert_eq!(p.action.len(), 1);
        assert_eq!(p.action[0].to_string(), "slave['SPI'].w_data = 32'h0;");
    }

    #[test]
    fn boolean_property_is_one_atom() {
        let p = translate("property p; 1'b1; endproperty a: assert property (p);", "x = 1'b0;");
        assert_eq!(p.predicate, vec![e("1'b1")]);
        assert_eq!(p.timing, TimingSpec::default());
    }

    #[test]
    fn consequent_delay_is_harvested() {
        let p = translate("property p; @(posedge clk) a |-> ##3 b; endproperty a_p: assert property (p);", "x = 0;");
        assert_eq!(p.predicate, vec![e("a"), PredicateAtom::Delay(3), e("b")]);
    }

    #[test]
    fn non_overlapped_adds_a_cycle_and_zero_delay_conjoins() {
        let p = translate("property p; @(posedge clk) a ##0 b || c |=> ##2 d; endproperty a_p: assert property (p);", "x = 0;");
        assert_eq!(p.predicate, vec![e("a && (b || c)"), PredicateAtom::Delay(3), e("d")]);
    }

    #[test]
    fn localparams_and_reset_are_resolved() {
        let unit = parse_assertion(include_str!("../../../fixtures/sva/llm_assertion.sv")).unwrap();
        let p = assertion_to_policy(&unit, "w_data = 32'h0;", &mit_cep()).unwrap();
        assert!(p.expressions().all(|x| !x.identifiers().iter().any(|n| n.starts_with("SECURE_"))), "{}", p.predicate_text());
        assert_eq!(p.timing.clock.as_ref().unwrap().signal, "clk");
    }

    #[test]
    fn action_language() {
        let a = parse_action("slave[`Crypto'].aw_addr = 32'h0; w_data = 8'hFF").unwrap();
        assert_eq!(a[0].target, SignalRef::Qualified { scope: "slave".into(), ip: "Crypto".into(), signal: "aw_addr".into() });
        assert_eq!(a[1].target, SignalRef::Bare("w_data".into()));
        assert!(matches!(parse_action("garbage"), Err(PolicyError::Action { .. })));
        assert_eq!(parse_action("  ;"), Err(PolicyError::EmptyAction));
        assert!(parse_action("32'h0 = x;").is_err());
    }

    fn bus_guard_policy() -> SecurityPolicy {
        parse_policy(include_str!("../../../fixtures/policies/bus_guard_policy.json")).unwrap()
    }

    #[test]
    fn bus_guard_is_bus_level() {
        let p = classify_placement(&bus_guard_policy(), None, &example_soc()).unwrap();
        assert_eq!(p.placement, Some(Placement::BusLevel));
    }

    #[test]
    fn ip_local_policy_is_ip_level() {
        let db = parse_db(include_str!("../../../fixtures/db/mit_cep_filter_db.tsv")).unwrap();
        let p = translate(CWE125, "wb_adr_i = 32'h0;");
        let p = classify_placement(&p, db.lookup("CWE-310"), &mit_cep()).unwrap();
        assert_eq!(p.placement, Some(Placement::IpLevel("AES".into())));
    }

    #[test]
    fn bus_only_entry_forces_bus_level() {
        let db = parse_db(include_str!("../../../fixtures/db/mit_cep_filter_db.tsv")).unwrap();
        let p = translate(CWE125, "wb_adr_i = 32'h0;");
        let p = classify_placement(&p, db.lookup("CWE-362"), &mit_cep()).unwrap();
        assert_eq!(p.placement, Some(Placement::BusLevel));
    }

    #[test]
    fn unknown_signal_is_an_error() {
        let p = translate("property p; zz_unknown; endproperty a: assert property (p);", "wb_adr_i = 0;");
        assert_eq!(classify_placement(&p, None, &mit_cep()), Err(PolicyError::UnresolvableSignal("zz_unknown".into())));
    }

    #[test]
    fn document_round_trip() {
        let mut p = translate(CWE125, "slave['SPI'].w_data = 32'h0;");
        p.source_cwe = Some("CWE-125".into());
        p.placement = Some(Placement::IpLevel("AES".into()));
        assert_eq!(parse_policy(&serialize_policy(&p)).unwrap(), p);
    }

    #[test]
    fn minimal_document_has_three_keys() {
        let p = translate("property p; 1'b1; endproperty a: assert property (p);", "x = 1'b0;");
        let v: serde_json::Value = serde_json::from_str(&serialize_policy(&p)).unwrap();
        assert_eq!(v.as_object().unwrap().len(), 3);
    }

    #[test]
    fn malformed_documents_are_rejected() {
        for doc in [
            r#"{"predicate": [], "timing": {"mode": 0}, "action": [{"target": "x", "value": "0"}]}"#,
            r#"{"predicate": [{"expr": "a"}, {"delay_cycles": 0}, {"expr": "b"}], "timing": {"mode": 0}, "action": [{"target": "x", "value": "0"}]}"#,
            r#"{"predicate": [{"expr": "a"}], "timing": {"clock_edge": "posedge", "mode": 0}, "action": [{"target": "x", "value": "0"}]}"#,
            r#"{"predicate": [{"expr": "a"}], "timing": {"mode": 0}, "action": [{"target": "1", "value": "0"}]}"#,
            r#"{"predicate": [{"expr": "a"}], "timing": {"mode": 0}, "action": []}"#,
        ] {
            assert!(matches!(parse_policy(doc), Err(PolicyError::Format(_))), "{doc}");
        }
    }
}
