use std::path::Path;

use proptest::prelude::*;
use socsec_core::codegen::{build_central_module, build_ip_wrapper, generate_rtl, validate_rtl, write_rtl};
use socsec_core::expr::{lex, parse_expr};
use socsec_core::policy::{
    parse_policy, EdgeSignal, Placement, PredicateAtom, SecurityPolicy, SignalAssignment, SignalRef, TimingSpec,
};
use socsec_core::spec_model::{load_spec, PortDirection, SocSpec};
use socsec_core::sva::Edge;

fn spec(name: &str) -> SocSpec {
    load_spec(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/specs").join(name)).unwrap()
}

fn bus_guard_policy() -> SecurityPolicy {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/policies/bus_guard_policy.json")).unwrap();
    SecurityPolicy { placement: Some(Placement::BusLevel), ..parse_policy(&text).unwrap() }
}

/// Reference guard with `slave[`X'].y` flattened and braces read as begin/end.
const BUS_GUARD_REF: &str = "if(slave[`Crypto'].aw_addr >= 32'h93000014 \n&& slave[`Crypto'].aw_addr <= 32'h93000028)\n{\n    slave[`SPI'].w_data = 32'h0;\n}";

fn flattened_tokens(src: &str) -> Vec<String> {
    lex(src)
        .unwrap()
        .into_iter()
        .map(|t| match parse_expr(&t.text) {
            Ok(socsec_core::expr::Expr::Qualified { scope, ip, signal }) => format!("{scope}_{ip}_{signal}"),
            _ => match t.text.as_str() {
                "{" => "begin".into(),
                "}" => "end".into(),
                other => other.into(),
            },
        })
        .collect()
}

#[test]
fn bus_guard_and_assignment_match_token_for_token() {
    let a = build_central_module(&[bus_guard_policy()], &spec("example_soc.json")).unwrap();
    let v = a.to_verilog();
    let start = v.find("if (").unwrap();
    let end = start + v[start..].find("end\n").unwrap() + 3;
    assert_eq!(flattened_tokens(&v[start..end]), flattened_tokens(BUS_GUARD_REF));
}

#[test]
fn rtl_files_are_written_with_signal_map() {
    let dir = tempfile::tempdir().unwrap();
    let arts = generate_rtl(&[bus_guard_policy()], &spec("example_soc.json")).unwrap();
    let written = write_rtl(dir.path(), &arts).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["security_module.v", "signal_map.tsv"]);
    let map = std::fs::read_to_string(dir.path().join("signal_map.tsv")).unwrap();
    assert!(map.contains("security_module\tslave_SPI_w_data\tslave['SPI'].w_data\tSPI\tw_data\t32\toverridden"));
}

// ---- random policies ---------------------------------------------------------------

fn signal(ips: &'static [&'static str], sigs: &'static [&'static str]) -> impl Strategy<Value = SignalRef> {
    (prop::sample::select(ips), prop::sample::select(sigs))
        .prop_map(|(ip, s)| SignalRef::Qualified { scope: "slave".into(), ip: ip.into(), signal: s.into() })
}

fn guard_expr(refs: BoxedStrategy<String>) -> impl Strategy<Value = String> {
    let leaf = prop_oneof![refs.clone(), Just("32'h93000014".to_string()), Just("1'b1".to_string())];
    leaf.prop_recursive(3, 12, 2, move |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["&&", "||", ">=", "<=", "==", "===", "!==", "->", "&"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            inner.clone().prop_map(|a| format!("!{a}")),
            (prop::sample::select(vec!["$rose", "$fell", "$stable", "$past", "$changed"]), refs.clone())
                .prop_map(|(f, r)| format!("{f}({r})")),
            inner.clone().prop_map(|a| format!("$past({a}, 2)")),
        ]
    })
}

fn random_policy(refs: BoxedStrategy<String>, targets: BoxedStrategy<SignalRef>, clock: &'static str, reset: &'static str, placement: Placement) -> impl Strategy<Value = SecurityPolicy> {
    (
        guard_expr(refs.clone()),
        prop::collection::vec((1u32..4, guard_expr(refs)), 0..3),
        any::<bool>(),
        prop::option::of(any::<bool>()),
        prop::collection::vec((targets, prop::sample::select(vec!["32'h0", "8'hFF", "'0"])), 1..3),
        prop::option::of(1u32..1500),
    )
        .prop_map(move |(first, rest, clocked, reset_pol, action, cwe)| {
            let mut predicate = vec![PredicateAtom::Expression(parse_expr(&first).unwrap())];
            for (d, e) in rest {
                predicate.push(PredicateAtom::Delay(d));
                predicate.push(PredicateAtom::Expression(parse_expr(&e).unwrap()));
            }
            let edge = |pos: bool| if pos { Edge::Posedge } else { Edge::Negedge };
            SecurityPolicy {
                predicate,
                timing: TimingSpec {
                    clock: clocked.then(|| EdgeSignal { edge: Edge::Posedge, signal: clock.into() }),
                    reset: reset_pol.filter(|_| clocked).map(|p| EdgeSignal { edge: edge(p), signal: reset.into() }),
                    mode: 0,
                },
                action: action
                    .into_iter()
                    .map(|(target, v)| SignalAssignment { target, value: parse_expr(v).unwrap() })
                    .collect(),
                source_cwe: cwe.map(|n| format!("CWE-{n}")),
                placement: Some(placement.clone()),
            }
        })
}

const AES_PORTS: &[&str] = &["wb_adr_i", "wb_dat_i", "wb_dat_o", "start", "ready", "key_i", "wb_we_i"];

fn bus_policies() -> impl Strategy<Value = Vec<SecurityPolicy>> {
    let refs = prop_oneof![
        signal(&["Crypto", "SPI"], &["aw_addr", "w_data"]).prop_map(|r| r.to_string()),
        signal(&["DSP"], &["dsp_addr", "dsp_wdata"]).prop_map(|r| r.to_string()),
        Just("AWVALID".to_string()),
    ]
    .boxed();
    let targets = prop_oneof![signal(&["SPI", "Crypto"], &["w_data"]), signal(&["MEM"], &["mem_wdata"])].boxed();
    prop::collection::vec(random_policy(refs, targets, "clk", "rst", Placement::BusLevel), 0..4)
}

fn aes_policies() -> impl Strategy<Value = Vec<SecurityPolicy>> {
    let refs = prop::sample::select(AES_PORTS).prop_map(String::from).boxed();
    let targets = prop::sample::select(AES_PORTS).prop_map(|s| SignalRef::Bare(s.into())).boxed();
    prop::collection::vec(random_policy(refs, targets, "clk_i", "rst_i", Placement::IpLevel("AES".into())), 0..4)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn central_modules_validate_and_are_deterministic(policies in bus_policies()) {
        let spec = spec("example_soc.json");
        let a = build_central_module(&policies, &spec).unwrap();
        let v = a.to_verilog();
        prop_assert_eq!(validate_rtl(&a), vec![], "{}", v);
        prop_assert!(!v.contains('$'));
        prop_assert_eq!(build_central_module(&policies, &spec).unwrap().to_verilog(), v);
    }

    #[test]
    fn wrappers_validate(policies in aes_policies()) {
        let spec = spec("mit_cep.json");
        let aes = spec.find_ip("AES").unwrap();
        let a = build_ip_wrapper(aes, &policies, &aes.ports).unwrap();
        prop_assert_eq!(validate_rtl(&a), vec![], "{}", a.to_verilog());
        // ports not overridden by any policy are forwarded untouched
        for p in &aes.ports {
            let overridden = policies.iter().flat_map(|x| &x.action).any(|x| x.target.signal() == p.name);
            if !overridden {
                let forwarded = format!(".{0}({0})", p.name);
                prop_assert!(a.body.contains(&forwarded));
            }
            let port = a.port_list.iter().find(|x| x.name == p.name).unwrap();
            prop_assert_eq!(port.is_reg, overridden && p.direction == PortDirection::Output);
        }
    }
}
