use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use socsec_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, ProviderChoice, Stage, StageStatus, REPORT_FILE};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn config(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::new(
        fixture("specs/mit_cep.json"),
        fixture("db/mit_cep_filter_db.tsv"),
        ProviderChoice::Mock(fixture("mock_llm/mit_cep")),
        out,
    );
    c.offline = true;
    c
}

/// Every file under `dir` except the report, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                if rel != REPORT_FILE {
                    out.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
    }
    out
}

fn audit_lines(dir: &Path) -> usize {
    ["cwe", "filter", "sva"]
        .iter()
        .map(|s| std::fs::read_to_string(dir.join(s).join("llm_audit.jsonl")).map_or(0, |t| t.lines().count()))
        .sum()
}

#[test]
fn full_offline_run_reports_six_of_eleven() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(&config(dir.path())).unwrap();
    assert_eq!(report.failure, None, "{report:#?}");
    assert_eq!(report.candidate_count, Some(11));
    assert_eq!(report.filtered_count, Some(6));
    assert!((report.relevance_metric.unwrap() - 0.5455).abs() < 1e-4);
    let ids: Vec<&str> = report.cwes.iter().map(|c| c.cwe_id.as_str()).collect();
    assert_eq!(ids, ["CWE-200", "CWE-284", "CWE-310", "CWE-325", "CWE-261", "CWE-362"]);
    for c in &report.cwes {
        assert!(c.assertion.is_some(), "{c:?}");
        assert!(c.placement.is_some(), "{c:?}");
        assert!(c.rtl.is_some(), "{c:?}");
    }
    assert_eq!(report.diagnostics.rtl_findings, 0);
    assert!(Stage::ALL.iter().all(|s| report.status(*s) == StageStatus::Completed));
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(written["filtered_count"], 6);
}

#[test]
fn two_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&config(a.path())).unwrap();
    run_pipeline(&config(b.path())).unwrap();
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.keys().any(|k| k.starts_with("rtl/")));
    assert_eq!(sa, sb);
    // rerunning in place replaces rather than accumulates
    run_pipeline(&config(a.path())).unwrap();
    assert_eq!(snapshot(a.path()), sb);
}

#[test]
fn query_stage_alone_emits_only_queries() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.stages = vec![Stage::Query];
    let report = run_pipeline(&c).unwrap();
    let files: Vec<String> = snapshot(dir.path()).into_keys().collect();
    assert_eq!(files, ["checkpoints/1-query.json", "queries/cwe_enumeration.json", "queries/cwe_enumeration.txt"]);
    assert_eq!(report.status(Stage::Cwe), StageStatus::NotRun);
    assert_eq!(report.candidate_count, None);
}

#[test]
fn resume_from_every_checkpoint_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    run_pipeline(&config(full.path())).unwrap();
    let expected = snapshot(full.path());
    for split in 1..Stage::ALL.len() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path());
        c.stages = Stage::ALL[..split].to_vec();
        run_pipeline(&c).unwrap();
        let calls = audit_lines(dir.path());
        c.stages = Stage::ALL[split..].to_vec();
        let report = run_pipeline(&c).unwrap();
        assert_eq!(report.failure, None);
        assert_eq!(report.status(Stage::ALL[split - 1]), StageStatus::Replayed);
        assert_eq!(snapshot(dir.path()), expected, "resumed at {}", Stage::ALL[split]);
        if split >= 4 {
            // policy and rtl after sva: no further LLM traffic
            assert_eq!(audit_lines(dir.path()), calls);
        }
    }
}

#[test]
fn deleted_checkpoint_invalidates_downstream() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&config(dir.path())).unwrap();
    std::fs::remove_file(dir.path().join("checkpoints/3-filter.json")).unwrap();
    let mut c = config(dir.path());
    c.stages = vec![Stage::Policy, Stage::Rtl];
    let err = run_pipeline(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    c.stages = vec![Stage::Filter, Stage::Sva, Stage::Policy, Stage::Rtl];
    assert_eq!(run_pipeline(&c).unwrap().failure, None);
}

#[test]
fn changed_inputs_make_checkpoints_stale() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&config(dir.path())).unwrap();
    let mut c = config(dir.path());
    c.stages = vec![Stage::Policy, Stage::Rtl];
    c.db_path = fixture("db/crypto_match_db.tsv");
    assert!(matches!(run_pipeline(&c), Err(PipelineError::Config(_))));
}

#[test]
fn answers_file_overrides_default_action() {
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("answers.json");
    std::fs::write(&answers, r#"{"CWE-310": "key_i = 128'h0;"}"#).unwrap();
    let mut c = config(&dir.path().join("out"));
    c.answers = Some(answers);
    run_pipeline(&c).unwrap();
    let actions: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/policies/actions.json")).unwrap()).unwrap();
    assert_eq!(actions["CWE-310"], "key_i = 128'h0;");
}

#[test]
fn only_violated_limits_policies() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.only_violated = Some(vec!["CWE-284".into()]);
    let report = run_pipeline(&c).unwrap();
    let placed: Vec<&str> = report.cwes.iter().filter(|x| x.placement.is_some()).map(|x| x.cwe_id.as_str()).collect();
    assert_eq!(placed, ["CWE-284"]);
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.provider = ProviderChoice::Remote(Default::default());
    assert_eq!(run_pipeline(&c).unwrap_err().exit_code(), 2);
    let mut c = config(dir.path());
    c.stages = vec![Stage::Query, Stage::Filter];
    assert_eq!(run_pipeline(&c).unwrap_err().exit_code(), 2);
    let mut c = config(dir.path());
    c.provider = ProviderChoice::Mock(dir.path().join("absent"));
    assert_eq!(run_pipeline(&c).unwrap_err().exit_code(), 2);
}

#[test]
fn missing_mock_fixture_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.provider = ProviderChoice::Mock(empty.path().to_path_buf());
    let report = run_pipeline(&c).unwrap();
    let failure = report.failure.clone().unwrap();
    assert_eq!((failure.stage, failure.exit_code), (Stage::Cwe, 2));
    assert_eq!(report.status(Stage::Query), StageStatus::Completed);
    assert_eq!(report.status(Stage::Filter), StageStatus::NotRun);
}
