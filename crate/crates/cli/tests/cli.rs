use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn socsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socsec")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_args<'a>(out: &'a str, spec: &'a str, db: &'a str, mock: &'a str) -> Vec<&'a str> {
    vec!["run", "--spec", spec, "--db", db, "--offline", "--mock-dir", mock, "--out", out]
}

#[test]
fn offline_run_prints_metric_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, db, mock) = (fixture("specs/mit_cep.json"), fixture("db/mit_cep_filter_db.tsv"), fixture("mock_llm/mit_cep"));
    let out = dir.path().to_str().unwrap();
    let o = socsec(&run_args(out, spec.to_str().unwrap(), db.to_str().unwrap(), mock.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("relevant CWEs: 6 of 11 (metric 0.5455)"), "{}", stdout(&o));
    assert!(dir.path().join("rtl/security_module.v").exists());
}

#[test]
fn stage_subset_and_bad_stage_list() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, db, mock) = (fixture("specs/mit_cep.json"), fixture("db/mit_cep_filter_db.tsv"), fixture("mock_llm/mit_cep"));
    let out = dir.path().to_str().unwrap();
    let mut args = run_args(out, spec.to_str().unwrap(), db.to_str().unwrap(), mock.to_str().unwrap());
    args.extend(["--stages", "q"]);
    assert!(socsec(&args).status.success());
    assert!(dir.path().join("queries/cwe_enumeration.txt").exists());
    assert!(!dir.path().join("cwe").exists());
    let n = args.len();
    args[n - 1] = "q,f";
    assert_eq!(socsec(&args).status.code(), Some(2));
}

#[test]
fn remote_provider_refused_offline() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, db) = (fixture("specs/mit_cep.json"), fixture("db/mit_cep_filter_db.tsv"));
    let o = socsec(&["run", "--spec", spec.to_str().unwrap(), "--db", db.to_str().unwrap(), "--offline", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lint_sva_exit_status() {
    let clean = socsec(&["lint-sva", fixture("sva/reference/cwe125_out_of_bounds_read.sv").to_str().unwrap()]);
    assert_eq!(clean.status.code(), Some(0));
    assert!(stdout(&clean).is_empty());
    let typo = socsec(&["lint-sva", "--fix", fixture("sva/lint/r1_near_miss_keyword.sv").to_str().unwrap()]);
    assert_eq!(typo.status.code(), Some(1));
    assert!(stdout(&typo).contains("R1 (fixable)"), "{}", stdout(&typo));
}

#[test]
fn translate_then_generate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("specs/mit_cep.json");
    let o = socsec(&[
        "translate-sva",
        fixture("sva/reference/cwe125_out_of_bounds_read.sv").to_str().unwrap(),
        "--action",
        "wb_adr_i = 32'h0;",
        "--spec",
        spec.to_str().unwrap(),
        "--cwe",
        "CWE-125",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["placement"]["ip_level"], "AES");
    assert_eq!(doc["predicate"].as_array().unwrap().len(), 3);
    let policy = dir.path().join("p.json");
    std::fs::write(&policy, &o.stdout).unwrap();
    let out = dir.path().join("rtl");
    let g = socsec(&["gen-rtl", policy.to_str().unwrap(), "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    assert!(out.join("AES_wrapper.v").exists());
}

#[test]
fn translate_rejects_bad_action() {
    let o = socsec(&["translate-sva", fixture("sva/reference/cwe125_out_of_bounds_read.sv").to_str().unwrap(), "--action", "garbage"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn survey_from_answers_file_and_stdin_eof() {
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("a.json");
    std::fs::write(
        &answers,
        r#"{"soc.name": "Demo", "soc.bus": "AXI4", "soc.num_masters": "0", "soc.num_slaves": "1",
            "bus.interface_name": "Master/Slave", "bus.num_ports": "4", "bus.signal_names": "AWVALID,AWADDR,...",
            "slave1.name": "uart", "slave1.operation": "Peripheral",
            "slave1.address_range": "10000000-1000FFFF", "slave1.base_address": "10000000"}"#,
    )
    .unwrap();
    let out = dir.path().join("spec.json");
    let o = socsec(&["survey", "--out", out.to_str().unwrap(), "--answers", answers.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists());

    let eof_out = dir.path().join("never.json");
    let o = Command::new(env!("CARGO_BIN_EXE_socsec"))
        .args(["survey", "--out", eof_out.to_str().unwrap()])
        .stdin(std::process::Stdio::null())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!eof_out.exists());
}
