#![allow(dead_code)]

pub mod filter;

use proptest::prelude::*;
use socsec_core::expr::{parse_expr, Expr};
use socsec_core::policy::{EdgeSignal, Placement, PredicateAtom, SecurityPolicy, SignalAssignment, SignalRef, TimingSpec};
use socsec_core::spec_model::{Port, PortDirection};
use socsec_core::sva::{Action, AssertTarget, AssertionUnit, ClockSpec, Edge, ImplicationOp, PropertyExpr, SeqElem, Severity};

pub const NAMES: &[&str] = &["start", "ready", "wb_adr_i", "key", "rst_i", "valid", "data_o", "sel"];
pub const LITERALS: &[&str] = &["1'b1", "32'h93000014", "8'd7", "0", "'0", "128'h0"];
pub const BINOPS: &[&str] = &["&&", "||", "==", "!=", "===", "<", "<=", ">=", "+", "&", "|", "->"];

pub fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![prop::sample::select(NAMES).prop_map(String::from), prop::sample::select(LITERALS).prop_map(String::from)];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(BINOPS), inner.clone()).prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            inner.clone().prop_map(|a| format!("({a})")),
            inner.clone().prop_map(|a| format!("!{a}")),
            inner.clone().prop_map(|a| format!("$rose({a})")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("{{{a}, {b}}}")),
        ]
    })
}

pub fn expr() -> impl Strategy<Value = Expr> {
    expr_text().prop_filter_map("unparseable", |t| parse_expr(&t).ok())
}

pub fn seq() -> impl Strategy<Value = Vec<SeqElem>> {
    prop::collection::vec((prop::option::of(0u32..5), expr()), 1..4).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (delay, expr))| SeqElem { delay: if i == 0 { delay } else { Some(delay.unwrap_or(1)) }, expr })
            .collect()
    })
}

pub fn body() -> impl Strategy<Value = PropertyExpr> {
    prop_oneof![
        expr().prop_map(PropertyExpr::Boolean),
        seq().prop_filter_map("degenerate sequence", |s| (s.len() > 1 || s[0].delay.is_some()).then_some(PropertyExpr::Sequence(s))),
        (seq(), any::<bool>(), seq()).prop_map(|(antecedent, non, consequent)| PropertyExpr::Implication {
            antecedent,
            op: if non { ImplicationOp::NonOverlapped } else { ImplicationOp::Overlapped },
            consequent,
        }),
    ]
}

pub fn unit() -> impl Strategy<Value = AssertionUnit> {
    (
        any::<bool>(),
        prop::option::of((any::<bool>(), prop::sample::select(vec!["clk", "clk_i"]))),
        prop::option::of(expr()),
        body(),
        prop::option::of((prop::sample::select(vec![Severity::Error, Severity::Display, Severity::Info, Severity::Warning]), prop::option::of("[A-Za-z0-9 !:.-]{0,20}"))),
    )
        .prop_map(|(module, clock, disable_expr, property_body, action)| {
            let ports = if module {
                vec![Port::new(PortDirection::Input, 1, "clk"), Port::new(PortDirection::Input, 32, "wb_adr_i")]
            } else {
                Vec::new()
            };
            AssertionUnit {
                module_name: module.then(|| "checker_mod".to_string()),
                ports,
                preamble: if module { vec!["localparam LIMIT = 32'h9300003C;".into()] } else { Vec::new() },
                clocking: clock.map(|(pos, s)| ClockSpec { edge: if pos { Edge::Posedge } else { Edge::Negedge }, signal: s.into(), block: None }),
                disable_expr,
                property_name: "p_gen".into(),
                property_body,
                assert_label: "a_gen".into(),
                assert_target: AssertTarget::Named("p_gen".into()),
                action: action.map(|(severity, message)| Action { severity, message }),
            }
        })
}

// ---- policies ------------------------------------------------------------------

pub fn signal_ref() -> impl Strategy<Value = SignalRef> {
    prop_oneof![
        prop::sample::select(NAMES).prop_map(|s| SignalRef::Bare(s.into())),
        (prop::sample::select(vec!["AES", "SPI", "Crypto"]), prop::sample::select(vec!["w_data", "aw_addr"])).prop_map(
            |(ip, s)| SignalRef::Qualified { scope: "slave".into(), ip: ip.into(), signal: s.into() }
        ),
    ]
}

pub fn edge_signal() -> impl Strategy<Value = EdgeSignal> {
    (any::<bool>(), "[a-z][a-z0-9_]{0,8}").prop_map(|(pos, signal)| EdgeSignal {
        edge: if pos { Edge::Posedge } else { Edge::Negedge },
        signal,
    })
}

pub fn policy() -> impl Strategy<Value = SecurityPolicy> {
    (
        expr(),
        prop::collection::vec((1u32..16, expr()), 0..4),
        prop::option::of(edge_signal()),
        prop::option::of(edge_signal()),
        0u32..4,
        prop::collection::vec((signal_ref(), expr()), 1..4),
        prop::option::of((1u32..2000).prop_map(|n| format!("CWE-{n}"))),
        prop::option::of(prop_oneof![Just(Placement::BusLevel), "[A-Z]{2,5}".prop_map(Placement::IpLevel)]),
    )
        .prop_map(|(first, rest, clock, reset, mode, action, source_cwe, placement)| {
            let mut predicate = vec![PredicateAtom::Expression(first)];
            for (d, e) in rest {
                predicate.push(PredicateAtom::Delay(d));
                predicate.push(PredicateAtom::Expression(e));
            }
            SecurityPolicy {
                predicate,
                timing: TimingSpec { clock, reset, mode },
                action: action.into_iter().map(|(target, value)| SignalAssignment { target, value }).collect(),
                source_cwe,
                placement,
            }
        })
}
