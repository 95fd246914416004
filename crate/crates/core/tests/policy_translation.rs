use std::path::{Path, PathBuf};

use proptest::prelude::*;
use socsec_core::policy::{assertion_to_policy, parse_policy, serialize_policy, PredicateAtom};
use socsec_core::spec_model::{load_spec, SocSpec};
use socsec_core::sva::{parse_assertion, ImplicationOp, PropertyExpr};

mod common;
use common::{policy, unit};

fn spec() -> SocSpec {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/specs/mit_cep.json");
    load_spec(&path).unwrap()
}

#[test]
fn table_assertions_translate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/sva/reference");
    let mut names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for path in names {
        let unit = parse_assertion(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let p = assertion_to_policy(&unit, "slave['SPI'].w_data = 32'h0;", &spec()).unwrap();
        p.validate().unwrap();
        assert_eq!(parse_policy(&serialize_policy(&p)).unwrap(), p, "{}", path.display());
    }
}

/// Expression atoms expected from a property: every element, minus those
/// joined to their predecessor by a zero delay.
fn expected_atoms(body: &PropertyExpr) -> usize {
    let joined = |s: &[socsec_core::sva::SeqElem]| s.iter().skip(1).filter(|x| x.delay == Some(0)).count();
    match body {
        PropertyExpr::Boolean(_) => 1,
        PropertyExpr::Sequence(s) => s.len() - joined(s),
        PropertyExpr::Implication { antecedent, op, consequent } => {
            let lead = usize::from(*op == ImplicationOp::Overlapped && consequent[0].delay == Some(0));
            antecedent.len() + consequent.len() - joined(antecedent) - joined(consequent) - lead
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn document_round_trip_is_identity(p in policy()) {
        let doc = serialize_policy(&p);
        let back = parse_policy(&doc).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(serialize_policy(&back), doc);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, ..ProptestConfig::default() })]

    #[test]
    fn every_unit_translates(u in unit()) {
        let p = assertion_to_policy(&u, "slave['SPI'].w_data = 32'h0;", &spec()).unwrap();
        prop_assert!(p.validate().is_ok());
        prop_assert_eq!(p.expressions().count(), expected_atoms(&u.property_body));
        prop_assert_eq!(p.timing.mode, 0);
        prop_assert_eq!(p.timing.clock.is_some(), u.clocking.is_some());
        if !u.property_body.is_sequential() {
            prop_assert_eq!(p.predicate.len(), 1);
        }
    }

    #[test]
    fn absent_delays_default_to_one_cycle(u in unit()) {
        let p = assertion_to_policy(&u, "x = 0;", &spec()).unwrap();
        if let PropertyExpr::Implication { antecedent, op: ImplicationOp::Overlapped, consequent } = &u.property_body {
            let all_absent = antecedent.iter().skip(1).chain(consequent.iter()).all(|x| x.delay.is_none());
            if all_absent {
                let delays: Vec<&PredicateAtom> = p.predicate.iter().filter(|a| matches!(a, PredicateAtom::Delay(_))).collect();
                prop_assert!(delays.iter().all(|d| **d == PredicateAtom::Delay(1)));
                prop_assert_eq!(delays.len(), antecedent.len() + consequent.len() - 1);
            }
        }
    }
}
