use std::path::Path;

use socsec_core::cwe_db::{load_db, Db};
use socsec_core::similarity::{best_match, cosine_sim, rank, vectorize, CorpusStats};

fn fixture_db() -> Db {
    load_db(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/db/crypto_match_db.tsv")).unwrap()
}

fn subset(db: &Db, ids: &[&str]) -> Db {
    Db::from_entries(ids.iter().map(|id| db.lookup(id).unwrap().clone())).unwrap()
}

#[test]
fn weak_cryptography_maps_to_encryption_strength() {
    let db = subset(&fixture_db(), &["CWE-310", "CWE-326", "CWE-327", "CWE-798"]);
    let (entry, score) = best_match("Weak Cryptography for Passwords", &db).unwrap();
    assert_eq!(entry.cwe_id, "CWE-326");
    println!("scores: {:?} best {score:.4}", rank("Weak Cryptography for Passwords", &db));
}

#[test]
fn missing_step_maps_to_cryptographic_issues() {
    let db = subset(&fixture_db(), &["CWE-306", "CWE-310", "CWE-327"]);
    let (entry, _) = best_match("Missing Required Cryptographic Step", &db).unwrap();
    assert_eq!(entry.cwe_id, "CWE-310");
    println!("scores: {:?}", rank("Missing Required Cryptographic Step", &db));
}

#[test]
fn full_fixture_db_keeps_the_same_winners() {
    let db = fixture_db();
    assert_eq!(best_match("Weak Cryptography for Passwords", &db).unwrap().0.cwe_id, "CWE-326");
    assert_eq!(best_match("Missing Required Cryptographic Step", &db).unwrap().0.cwe_id, "CWE-310");
}

#[test]
fn identical_description_scores_one() {
    let db = fixture_db();
    let (entry, score) = best_match("Use of Hard-coded Credentials", &db).unwrap();
    assert_eq!(entry.cwe_id, "CWE-798");
    assert!((score - 1.0).abs() < 1e-12);
}

#[test]
fn identical_descriptions_tie_break_on_lower_id() {
    let rows = "CWE_ID\tDESC\tBUS\tIP\tSYNC\tTYPE\tMISC\tPROVENANCE\n\
        CWE-900\tShared Text\tyes\tno\tsynchronous\tliveness\t-\tseed\n\
        CWE-77\tShared Text\tyes\tno\tsynchronous\tliveness\t-\tseed\n";
    let db = socsec_core::cwe_db::parse_db(rows).unwrap();
    assert_eq!(best_match("Shared Text", &db).unwrap().0.cwe_id, "CWE-77");
}

#[test]
fn scores_are_bounded_and_symmetric() {
    let docs: Vec<Vec<String>> = fixture_db().entries().iter().map(|e| socsec_core::similarity::normalize(&e.description)).collect();
    let stats = CorpusStats::build(docs.iter().map(Vec::as_slice));
    let vecs: Vec<_> = docs.iter().map(|d| vectorize(d, &stats)).collect();
    for a in &vecs {
        for b in &vecs {
            let s = cosine_sim(a, b);
            assert!((0.0..=1.0).contains(&s));
            assert_eq!(s, cosine_sim(b, a));
        }
    }
}
