use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;
use socsec_core::cwe_db::load_db;
use socsec_core::cwe_filter::{filter_cwes, relevance_metric, FilterConfig};
use socsec_core::llm_client::parse_cwe_list;

mod common;
use common::filter::{instance, mit_cep, reference_filter, run};

fn fixture(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

#[test]
fn unfiltered_table_reduces_to_six_relevant_cwes() {
    let candidates = parse_cwe_list(&std::fs::read_to_string(fixture("llm/mit_cep_unfiltered.md")).unwrap());
    assert_eq!(candidates.len(), 11);
    let db = load_db(&fixture("db/mit_cep_filter_db.tsv")).unwrap();
    let out = filter_cwes(&candidates, &db, &mit_cep(), None, &FilterConfig::default()).unwrap();
    let got: Vec<[String; 5]> = out.filtered.iter().map(|f| f.classification_tuple()).collect();
    let row = |a: &str, b: &str, c: &str, d: &str, e: &str| [a, b, c, d, e].map(String::from);
    let expected = vec![
        row("CWE-200", "Information Exposure", "Bus, IP", "Sync", "Access Control"),
        row("CWE-284", "Improper Access Control", "Bus, IP", "Async", "Access Control"),
        row("CWE-310", "Cryptographic Issues (e.g., weak algorithms or insecure implementation)", "IP", "Async", "Information Flow"),
        row("CWE-325", "Missing Required Cryptographic Step", "IP", "Async", "Information Flow"),
        row("CWE-261", "Weak Cryptography for Passwords", "IP", "Async", "Information Flow"),
        row("CWE-362", "Concurrent Execution using Shared Resource with Improper Synchronization ('Race Condition')", "Bus", "Sync", "Liveness"),
    ];
    assert_eq!(got, expected);
    assert_eq!(out.db, db);
    let metric = relevance_metric(out.filtered.len(), candidates.len()).unwrap();
    assert!((metric - 6.0 / 11.0).abs() < 1e-12);
}

#[test]
fn metric_example_value() {
    assert!((relevance_metric(6, 11).unwrap() - 0.5455).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn matches_reference_transcription((rows, cands, ips, threshold) in instance()) {
        let got = run(&rows, &cands, &ips, threshold);
        prop_assert_eq!(&got, &reference_filter(&cands, &rows, &ips, threshold));
        let ids: BTreeSet<&String> = got.iter().map(|g| &g.0).collect();
        prop_assert_eq!(ids.len(), got.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn removing_a_candidate_never_adds_output((rows, cands, ips, threshold) in instance(), drop in any::<prop::sample::Index>()) {
        prop_assume!(!cands.is_empty());
        let full: BTreeSet<String> = run(&rows, &cands, &ips, threshold).into_iter().map(|r| r.0).collect();
        let mut fewer = cands.clone();
        fewer.remove(drop.index(cands.len()));
        let reduced: BTreeSet<String> = run(&rows, &fewer, &ips, threshold).into_iter().map(|r| r.0).collect();
        prop_assert!(reduced.is_subset(&full));
    }

    #[test]
    fn output_is_deterministic((rows, cands, ips, threshold) in instance()) {
        prop_assert_eq!(run(&rows, &cands, &ips, threshold), run(&rows, &cands, &ips, threshold));
    }
}
