//! Staged run from a specification to enforcement RTL.
//!
//! Stages run in a fixed order (query, cwe, filter, sva, policy, rtl). Each
//! owns one directory under the output root and leaves a JSON checkpoint in
//! `checkpoints/`. A checkpoint records the digest of its predecessor and of
//! the external inputs it consumed, so a later run can start mid-chain and
//! replay earlier results without calling the LLM again.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codegen::{generate_rtl, validate_rtl, write_rtl, RtlFinding};
use crate::cwe_db::{canonical_id, load_db, render_db, CweEntry};
use crate::cwe_filter::{filter_cwes, relevance_metric, write_diagnostics, Diagnostic, FilterConfig, FilteredCwe, Level, MatchRoute};
use crate::expr::Expr;
use crate::llm_client::{
    extract_code_block, parse_cwe_list, render_candidates, CweCandidate, HttpProvider, LlmClient, LlmError, ProviderConfig,
};
use crate::policy::{
    assertion_to_policy, classify_placement, parse_action, parse_policy, serialize_policy, Placement, SecurityPolicy,
    SignalRef,
};
use crate::query_gen::{builtin_assumptions, cwe_enumeration_query, sva_generation_query, QueryText};
use crate::spec_model::{load_spec, IpBlock, PortDirection, SocSpec};
use crate::sva::{correct, instantiate_template, parse_assertion, render_assertion, AssertionUnit, Binding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Query,
    Cwe,
    Filter,
    Sva,
    Policy,
    Rtl,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Query, Stage::Cwe, Stage::Filter, Stage::Sva, Stage::Policy, Stage::Rtl];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Query => "query",
            Stage::Cwe => "cwe",
            Stage::Filter => "filter",
            Stage::Sva => "sva",
            Stage::Policy => "policy",
            Stage::Rtl => "rtl",
        }
    }

    pub fn letter(self) -> char {
        self.as_str().chars().next().expect("non-empty name")
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Accepts the one-letter form (`q`, `c`, `f`, `s`, `p`, `r`) or the name.
    pub fn parse(text: &str) -> Option<Stage> {
        let t = text.trim().to_ascii_lowercase();
        Stage::ALL.into_iter().find(|s| s.as_str() == t || t.len() == 1 && t.starts_with(s.letter()))
    }

    /// Directory under the output root owned by this stage.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Query => "queries",
            Stage::Cwe => "cwe",
            Stage::Filter => "filter",
            Stage::Sva => "sva",
            Stage::Policy => "policies",
            Stage::Rtl => "rtl",
        }
    }

    pub fn checkpoint_name(self) -> String {
        format!("{}-{}.json", self.index() + 1, self.as_str())
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parses a comma-separated stage list into a contiguous, ordered chain.
pub fn parse_stages(text: &str) -> Result<Vec<Stage>, PipelineError> {
    let mut stages = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let s = Stage::parse(part).ok_or_else(|| PipelineError::Config(format!("unknown stage `{}`", part.trim())))?;
        if !stages.contains(&s) {
            stages.push(s);
        }
    }
    stages.sort();
    check_chain(&stages)?;
    Ok(stages)
}

fn check_chain(stages: &[Stage]) -> Result<(), PipelineError> {
    if stages.is_empty() {
        return Err(PipelineError::Config("no stages requested".into()));
    }
    for pair in stages.windows(2) {
        if pair[1].index() != pair[0].index() + 1 {
            let gap = Stage::ALL[pair[0].index() + 1];
            return Err(PipelineError::Config(format!("stage `{}` needs `{gap}`, which is not requested", pair[1])));
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{stage} stage: LLM transport failure: {message}")]
    Transport { stage: Stage, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
            PipelineError::Transport { .. } => 4,
        }
    }

    fn stage(stage: Stage, message: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: message.to_string() }
    }

    fn llm(stage: Stage, e: LlmError) -> Self {
        match e {
            LlmError::Transport { .. } | LlmError::Auth(_) | LlmError::Provider { .. } => {
                PipelineError::Transport { stage, message: e.to_string() }
            }
            LlmError::MockMiss { .. } | LlmError::Config(_) => PipelineError::Config(e.to_string()),
            LlmError::Audit { .. } => PipelineError::stage(stage, e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderChoice {
    /// Responses read from `<kind>-<key>.txt` files in a directory.
    Mock(PathBuf),
    Remote(ProviderConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub spec_path: PathBuf,
    pub db_path: PathBuf,
    pub provider: ProviderChoice,
    pub filter: FilterConfig,
    /// Forbids remote providers.
    pub offline: bool,
    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
    /// JSON object mapping CWE ids to action strings.
    pub answers: Option<PathBuf>,
    /// Restricts policy generation to these CWEs.
    pub only_violated: Option<Vec<String>>,
}

impl PipelineConfig {
    pub fn new(spec_path: impl Into<PathBuf>, db_path: impl Into<PathBuf>, provider: ProviderChoice, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            spec_path: spec_path.into(),
            db_path: db_path.into(),
            provider,
            filter: FilterConfig::default(),
            offline: false,
            out_dir: out_dir.into(),
            stages: Stage::ALL.to_vec(),
            answers: None,
            only_violated: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        check_chain(&self.stages)?;
        if self.stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PipelineError::Config("stages must be listed once each, in pipeline order".into()));
        }
        match &self.provider {
            ProviderChoice::Mock(dir) if !dir.is_dir() => {
                return Err(PipelineError::Config(format!("mock directory {} does not exist", dir.display())))
            }
            ProviderChoice::Remote(_) if self.offline => {
                return Err(PipelineError::Config("offline mode requires a mock directory".into()))
            }
            ProviderChoice::Remote(c) => c.validate().map_err(|e| PipelineError::Config(e.to_string()))?,
            ProviderChoice::Mock(_) => {}
        }
        self.filter.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for id in self.only_violated.iter().flatten() {
            if canonical_id(id).is_none() {
                return Err(PipelineError::Config(format!("`{id}` is not a CWE id")));
            }
        }
        Ok(())
    }
}

// ---- report ------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    /// Loaded from a valid checkpoint of an earlier run.
    Replayed,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Per-CWE artifact paths, relative to the output root.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CweArtifacts {
    pub cwe_id: String,
    pub classification: Vec<String>,
    pub assertion: Option<String>,
    pub assertion_source: Option<AssertionSource>,
    pub placement: Option<String>,
    pub rtl: Option<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub exact_id_matches: usize,
    pub similarity_matches: usize,
    pub llm_confirmed: usize,
    pub rejected: usize,
    pub assertions_from_llm: usize,
    pub assertions_from_template: usize,
    pub lint_advisories: usize,
    pub policy_failures: usize,
    pub rtl_findings: usize,
    pub rtl_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec_name: String,
    pub stages: Vec<StageReport>,
    pub candidate_count: Option<usize>,
    pub filtered_count: Option<usize>,
    pub relevance_metric: Option<f64>,
    pub cwes: Vec<CweArtifacts>,
    pub diagnostics: DiagnosticsSummary,
    pub failure: Option<Failure>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, |f| f.exit_code)
    }

    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stages.iter().find(|s| s.stage == stage).map_or(StageStatus::NotRun, |s| s.status)
    }
}

pub const REPORT_FILE: &str = "report.json";

// ---- actions -------------------------------------------------------------------------

/// An assertion waiting for its enforcement action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAction {
    pub cwe_id: String,
    pub assert_label: String,
    pub predicate: String,
    pub default_action: String,
}

/// Supplies one action string per pending assertion.
pub trait ActionPrompter {
    fn choose(&mut self, pending: &[PendingAction]) -> Result<Vec<String>, String>;
    /// Identity folded into the policy checkpoint.
    fn describe(&self) -> String;
}

pub struct DefaultActions;

impl ActionPrompter for DefaultActions {
    fn choose(&mut self, pending: &[PendingAction]) -> Result<Vec<String>, String> {
        Ok(pending.iter().map(|p| p.default_action.clone()).collect())
    }

    fn describe(&self) -> String {
        "defaults".into()
    }
}

/// Actions keyed by CWE id (or assertion label); missing keys take the default.
pub struct AnswersFile {
    raw: String,
    answers: BTreeMap<String, String>,
}

impl AnswersFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(raw: &str) -> Result<Self, String> {
        let map: BTreeMap<String, String> = serde_json::from_str(raw).map_err(|e| e.to_string())?;
        let answers = map.into_iter().map(|(k, v)| (canonical_id(&k).unwrap_or(k), v)).collect();
        Ok(AnswersFile { raw: raw.to_string(), answers })
    }
}

impl ActionPrompter for AnswersFile {
    fn choose(&mut self, pending: &[PendingAction]) -> Result<Vec<String>, String> {
        let mut out = Vec::new();
        for p in pending {
            let given = self.answers.get(&p.cwe_id).or_else(|| self.answers.get(&p.assert_label));
            match given.map(|s| s.trim()).filter(|s| !s.is_empty()) {
                Some(a) => {
                    parse_action(a).map_err(|e| format!("answer for {}: {e}", p.cwe_id))?;
                    out.push(a.to_string());
                }
                None => out.push(p.default_action.clone()),
            }
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("answers:{}", digest(self.raw.as_bytes()))
    }
}

fn segments(name: &str) -> Vec<String> {
    name.to_ascii_lowercase().split('_').map(String::from).collect()
}

const DATA_KEYS: &[&str] = &["dat", "data", "wdata", "key"];
const ADDR_KEYS: &[&str] = &["adr", "addr", "address", "awaddr"];
const TIMING_KEYS: &[&str] = &["clk", "clock", "rst", "reset"];

fn has_segment(name: &str, keys: &[&str]) -> bool {
    segments(name).iter().any(|s| keys.contains(&s.as_str()))
}

/// Width of `r` if it names a port the SoC drives into an IP (or a bus signal).
fn writable_width(r: &SignalRef, ip: Option<&IpBlock>, spec: &SocSpec) -> Option<u32> {
    let input_of = |ip: &IpBlock, name: &str| ip.port(name).filter(|p| p.direction == PortDirection::Input).map(|p| p.width);
    match r {
        SignalRef::Qualified { ip: key, signal, .. } => spec.find_ip(key).and_then(|i| input_of(i, signal)),
        SignalRef::Bare(name) => ip
            .and_then(|i| input_of(i, name))
            .or_else(|| spec.ips.iter().find_map(|i| input_of(i, name)))
            .or_else(|| spec.bus_interface.find_signal(name).map(|_| 32)),
    }
}

fn zero_action(target: &SignalRef, width: u32) -> String {
    let value = if width > 1 { format!("{width}'h0") } else { "1'b0".into() };
    format!("{target} = {value};")
}

/// Zeroes the signal the assertion flags: the first writable data signal it
/// references, else an address, else the target IP's data input, else the
/// bus write-data signal.
pub fn default_action(unit: &AssertionUnit, ip: Option<&IpBlock>, spec: &SocSpec) -> Option<String> {
    let mut refs: Vec<SignalRef> = Vec::new();
    for e in unit.property_body.exprs() {
        e.walk(&mut |n: &Expr| {
            if let Some(r) = SignalRef::from_expr(n) {
                if !refs.contains(&r) {
                    refs.push(r);
                }
            }
        });
    }
    let writable: Vec<(SignalRef, u32)> = refs
        .into_iter()
        .filter(|r| !has_segment(r.signal(), TIMING_KEYS))
        .filter_map(|r| writable_width(&r, ip, spec).map(|w| (r, w)))
        .collect();
    for keys in [DATA_KEYS, ADDR_KEYS] {
        if let Some((r, w)) = writable.iter().find(|(r, _)| has_segment(r.signal(), keys)) {
            return Some(zero_action(r, *w));
        }
    }
    if let Some(p) = ip.and_then(|ip| ip.ports.iter().find(|p| p.direction == PortDirection::Input && has_segment(&p.name, DATA_KEYS))) {
        return Some(zero_action(&SignalRef::Bare(p.name.clone()), p.width));
    }
    let bus = spec.bus_interface.signal_names.iter().find(|s| {
        let l = s.to_ascii_lowercase();
        l == "wdata" || l.contains("w_data") || l.ends_with("wdata")
    });
    if let Some(s) = bus {
        return Some(zero_action(&SignalRef::Bare(s.clone()), 32));
    }
    writable.first().map(|(r, w)| zero_action(r, *w))
}

// ---- stage data ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionSource {
    /// LLM text accepted as returned.
    Llm,
    /// LLM text after lint fixes or signal binding.
    LlmCorrected,
    /// Offline template for the CWE's violation type.
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QueryData {
    query: QueryText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CweData {
    candidates: Vec<CweCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FilterData {
    candidate_count: usize,
    filtered: Vec<FilteredCwe>,
    diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AssertionRecord {
    cwe_id: String,
    target_ip: Option<String>,
    source: AssertionSource,
    file: String,
    text: String,
    applied_fixes: Vec<String>,
    bindings: Vec<Binding>,
    advisories: Vec<String>,
    notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CweNote {
    cwe_id: String,
    message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SvaData {
    assertions: Vec<AssertionRecord>,
    failures: Vec<CweNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PolicyRecord {
    cwe_id: String,
    action: String,
    placement: Placement,
    document: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PolicyData {
    policies: Vec<PolicyRecord>,
    failures: Vec<CweNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RtlFileRecord {
    file: String,
    policies: Vec<String>,
    findings: Vec<RtlFinding>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RtlData {
    files: Vec<RtlFileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    stage: Stage,
    parent: String,
    inputs: String,
    data: Value,
}

#[derive(Default)]
struct State {
    query: Option<QueryData>,
    cwe: Option<CweData>,
    filter: Option<FilterData>,
    sva: Option<SvaData>,
    policy: Option<PolicyData>,
    rtl: Option<RtlData>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(stage: Stage, path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

fn remove_path(stage: Stage, path: &Path) -> Result<(), PipelineError> {
    let r = if path.is_dir() { fs::remove_dir_all(path) } else { fs::remove_file(path) };
    match r {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
            Err(PipelineError::stage(stage, format!("cannot remove {}: {e}", path.display())))
        }
        _ => Ok(()),
    }
}

fn provider_identity(provider: &ProviderChoice) -> String {
    match provider {
        ProviderChoice::Remote(c) => format!("remote:{}:{}:{}", c.endpoint_url, c.model_name, c.temperature),
        ProviderChoice::Mock(dir) => {
            let mut names: Vec<PathBuf> = fs::read_dir(dir)
                .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect())
                .unwrap_or_default();
            names.sort();
            let mut h = Sha256::new();
            for p in names {
                h.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
                h.update([0]);
                h.update(fs::read(&p).unwrap_or_default());
                h.update([0]);
            }
            format!("mock:{}", hex::encode(h.finalize()))
        }
    }
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    spec: SocSpec,
    spec_digest: String,
    db_text: String,
    provider_id: String,
    actions: &'a mut dyn ActionPrompter,
    state: State,
}

impl Runner<'_> {
    fn checkpoint_path(&self, stage: Stage) -> PathBuf {
        self.config.out_dir.join("checkpoints").join(stage.checkpoint_name())
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.config.out_dir.join(stage.dir())
    }

    fn inputs(&self, stage: Stage) -> String {
        let text = match stage {
            Stage::Query => String::new(),
            Stage::Cwe | Stage::Sva => self.provider_id.clone(),
            Stage::Filter => {
                let judge = if self.config.filter.llm_fallback_enabled { self.provider_id.as_str() } else { "" };
                format!("{}\n{}\n{judge}", digest(self.db_text.as_bytes()), to_json(&self.config.filter))
            }
            Stage::Policy => format!("{}\n{:?}", self.actions.describe(), self.config.only_violated),
            Stage::Rtl => String::new(),
        };
        digest(text.as_bytes())
    }

    /// Digest the checkpoint of `stage` must name as its parent.
    fn expected_parent(&self, stage: Stage) -> Option<String> {
        match stage.index() {
            0 => Some(self.spec_digest.clone()),
            i => fs::read(self.checkpoint_path(Stage::ALL[i - 1])).ok().map(|b| digest(&b)),
        }
    }

    fn load_checkpoint(&self, stage: Stage) -> Option<Value> {
        let bytes = fs::read(self.checkpoint_path(stage)).ok()?;
        let cp: Checkpoint = serde_json::from_slice(&bytes).ok()?;
        let valid = cp.stage == stage && Some(&cp.parent) == self.expected_parent(stage).as_ref() && cp.inputs == self.inputs(stage);
        valid.then_some(cp.data)
    }

    fn save_checkpoint<T: Serialize>(&self, stage: Stage, data: &T) -> Result<(), PipelineError> {
        let parent = self.expected_parent(stage).ok_or_else(|| PipelineError::stage(stage, "predecessor checkpoint vanished"))?;
        let cp = Checkpoint {
            stage,
            parent,
            inputs: self.inputs(stage),
            data: serde_json::to_value(data).expect("serializable"),
        };
        write_file(stage, &self.checkpoint_path(stage), &to_json(&cp))
    }

    /// Clears this stage's outputs and everything downstream of it.
    fn invalidate_from(&self, stage: Stage) -> Result<(), PipelineError> {
        for s in &Stage::ALL[stage.index()..] {
            remove_path(stage, &self.checkpoint_path(*s))?;
            remove_path(stage, &self.stage_dir(*s))?;
        }
        Ok(())
    }

    fn client(&self, stage: Stage) -> Result<LlmClient, PipelineError> {
        let audit = self.stage_dir(stage).join("llm_audit.jsonl");
        let client = match &self.config.provider {
            ProviderChoice::Mock(dir) => LlmClient::mock(dir.clone()),
            ProviderChoice::Remote(c) => {
                let p = HttpProvider::new(c.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
                LlmClient::new(Box::new(p), c)
            }
        };
        Ok(client.with_audit_log(audit))
    }

    fn replay(&mut self, stage: Stage) -> bool {
        let Some(data) = self.load_checkpoint(stage) else { return false };
        fn take<T: DeserializeOwned>(v: Value) -> Option<T> {
            serde_json::from_value(v).ok()
        }
        let s = &mut self.state;
        match stage {
            Stage::Query => s.query = take(data),
            Stage::Cwe => s.cwe = take(data),
            Stage::Filter => s.filter = take(data),
            Stage::Sva => s.sva = take(data),
            Stage::Policy => s.policy = take(data),
            Stage::Rtl => s.rtl = take(data),
        }
        match stage {
            Stage::Query => s.query.is_some(),
            Stage::Cwe => s.cwe.is_some(),
            Stage::Filter => s.filter.is_some(),
            Stage::Sva => s.sva.is_some(),
            Stage::Policy => s.policy.is_some(),
            Stage::Rtl => s.rtl.is_some(),
        }
    }

    fn run(&mut self, stage: Stage) -> Result<(), PipelineError> {
        self.invalidate_from(stage)?;
        fs::create_dir_all(self.stage_dir(stage)).map_err(|e| PipelineError::stage(stage, e))?;
        match stage {
            Stage::Query => {
                let data = self.run_query()?;
                self.save_checkpoint(stage, &data)?;
                self.state.query = Some(data);
            }
            Stage::Cwe => {
                let data = self.run_cwe()?;
                self.save_checkpoint(stage, &data)?;
                self.state.cwe = Some(data);
            }
            Stage::Filter => {
                let data = self.run_filter()?;
                self.save_checkpoint(stage, &data)?;
                self.state.filter = Some(data);
            }
            Stage::Sva => {
                let data = self.run_sva()?;
                self.save_checkpoint(stage, &data)?;
                self.state.sva = Some(data);
            }
            Stage::Policy => {
                let data = self.run_policy()?;
                self.save_checkpoint(stage, &data)?;
                self.state.policy = Some(data);
            }
            Stage::Rtl => {
                let data = self.run_rtl()?;
                self.save_checkpoint(stage, &data)?;
                self.state.rtl = Some(data);
            }
        }
        Ok(())
    }

    fn run_query(&self) -> Result<QueryData, PipelineError> {
        let query = cwe_enumeration_query(&self.spec, &builtin_assumptions());
        let dir = self.stage_dir(Stage::Query);
        write_file(Stage::Query, &dir.join("cwe_enumeration.txt"), &query.body)?;
        write_file(Stage::Query, &dir.join("cwe_enumeration.json"), &to_json(&query))?;
        Ok(QueryData { query })
    }

    fn run_cwe(&self) -> Result<CweData, PipelineError> {
        let st = Stage::Cwe;
        let query = &self.state.query.as_ref().expect("query stage precedes cwe").query;
        let response = self.client(st)?.send(query).map_err(|e| PipelineError::llm(st, e))?;
        let candidates = parse_cwe_list(&response);
        let dir = self.stage_dir(st);
        write_file(st, &dir.join("response.txt"), &response)?;
        write_file(st, &dir.join("candidates.txt"), &(render_candidates(&candidates) + "\n"))?;
        if candidates.is_empty() {
            return Err(PipelineError::stage(st, "the response names no CWE"));
        }
        Ok(CweData { candidates })
    }

    fn run_filter(&self) -> Result<FilterData, PipelineError> {
        let st = Stage::Filter;
        let candidates = &self.state.cwe.as_ref().expect("cwe stage precedes filter").candidates;
        let db = crate::cwe_db::parse_db(&self.db_text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let client = if self.config.filter.llm_fallback_enabled { Some(self.client(st)?) } else { None };
        let judge = client.as_ref().map(|c| c as &dyn crate::cwe_filter::RelevanceJudge);
        let outcome = filter_cwes(candidates, &db, &self.spec, judge, &self.config.filter).map_err(|e| PipelineError::stage(st, e))?;
        let dir = self.stage_dir(st);
        let mut tsv = String::from("CWE_ID\tDESC\tLEVEL\tTIMING\tTYPE\tMATCHED_IPS\tROUTE\n");
        for f in &outcome.filtered {
            let route = match f.match_route {
                MatchRoute::ExactId => "exact_id",
                MatchRoute::Similarity => "similarity",
                MatchRoute::LlmConfirmed => "llm_confirmed",
            };
            let ips = if f.matched_ips.is_empty() { "-".to_string() } else { f.matched_ips.join(",") };
            tsv.push_str(&format!("{}\t{ips}\t{route}\n", f.classification_tuple().join("\t")));
        }
        write_file(st, &dir.join("filtered.tsv"), &tsv)?;
        write_diagnostics(&dir.join("diagnostics.jsonl"), &outcome.diagnostics).map_err(|e| PipelineError::stage(st, e))?;
        if outcome.db != db {
            write_file(st, &dir.join("db_extended.tsv"), &render_db(&outcome.db))?;
        }
        Ok(FilterData { candidate_count: candidates.len(), filtered: outcome.filtered, diagnostics: outcome.diagnostics })
    }

    fn target_ip(&self, f: &FilteredCwe) -> Option<&IpBlock> {
        if !f.levels.contains(&Level::Ip) {
            return None;
        }
        f.matched_ips.iter().find_map(|n| self.spec.find_ip(n))
    }

    fn run_sva(&self) -> Result<SvaData, PipelineError> {
        let st = Stage::Sva;
        let filtered = &self.state.filter.as_ref().expect("filter stage precedes sva").filtered;
        let client = self.client(st)?;
        let dir = self.stage_dir(st);
        let mut assertions = Vec::new();
        let mut failures = Vec::new();
        for f in filtered {
            let entry = &f.entry;
            let ip = self.target_ip(f);
            let mut notes = Vec::new();
            let mut accepted = None;
            match sva_generation_query(entry, &self.spec, ip) {
                Err(e) => notes.push(format!("no query: {e}")),
                Ok(query) => {
                    let response = client.send(&query).map_err(|e| PipelineError::llm(st, e))?;
                    match extract_code_block(&response) {
                        Err(_) => notes.push("response contains no code".into()),
                        Ok(code) => match correct(&code, &self.spec, ip) {
                            Err(e) => notes.push(format!("response rejected: {e}")),
                            Ok(rep) => accepted = Some(rep),
                        },
                    }
                }
            }
            let (source, text, applied, bindings, advisories) = match accepted {
                Some(rep) => {
                    let source = if rep.applied.is_empty() && rep.bindings.is_empty() {
                        AssertionSource::Llm
                    } else {
                        AssertionSource::LlmCorrected
                    };
                    let applied = rep.applied.iter().map(|f| format!("{}: {}", f.rule.as_str(), f.message)).collect();
                    let adv = rep.advisories.iter().map(|f| format!("{}: {}", f.rule.as_str(), f.message)).collect();
                    (source, rep.text, applied, rep.bindings, adv)
                }
                None => match instantiate_template(entry, ip, &self.spec) {
                    Ok(unit) => (AssertionSource::Template, render_assertion(&unit), Vec::new(), Vec::new(), Vec::new()),
                    Err(e) => {
                        notes.push(format!("no template: {e}"));
                        failures.push(CweNote { cwe_id: entry.cwe_id.clone(), message: notes.join("; ") });
                        continue;
                    }
                },
            };
            let file = format!("{}/{}.sv", Stage::Sva.dir(), entry.cwe_id);
            let mut body = text.clone();
            if !body.ends_with('\n') {
                body.push('\n');
            }
            write_file(st, &self.config.out_dir.join(&file), &body)?;
            assertions.push(AssertionRecord {
                cwe_id: entry.cwe_id.clone(),
                target_ip: ip.map(|i| i.key().to_string()),
                source,
                file,
                text,
                applied_fixes: applied,
                bindings,
                advisories,
                notes,
            });
        }
        let data = SvaData { assertions, failures };
        write_file(st, &dir.join("summary.json"), &to_json(&data))?;
        Ok(data)
    }

    fn entry(&self, cwe_id: &str) -> Option<&CweEntry> {
        self.state.filter.as_ref()?.filtered.iter().map(|f| &f.entry).find(|e| e.cwe_id == cwe_id)
    }

    fn run_policy(&mut self) -> Result<PolicyData, PipelineError> {
        let st = Stage::Policy;
        let sva = self.state.sva.clone().expect("sva stage precedes policy");
        let wanted: Option<Vec<String>> =
            self.config.only_violated.as_ref().map(|v| v.iter().filter_map(|id| canonical_id(id)).collect());
        let mut failures = Vec::new();
        let mut units = Vec::new();
        let mut pending = Vec::new();
        for rec in &sva.assertions {
            if wanted.as_ref().is_some_and(|w| !w.contains(&rec.cwe_id)) {
                continue;
            }
            let unit = parse_assertion(&rec.text).map_err(|e| PipelineError::stage(st, format!("{}: {e}", rec.file)))?;
            let ip = rec.target_ip.as_deref().and_then(|k| self.spec.find_ip(k));
            let Some(default) = default_action(&unit, ip, &self.spec) else {
                failures.push(CweNote { cwe_id: rec.cwe_id.clone(), message: "no writable signal for a default action".into() });
                continue;
            };
            pending.push(PendingAction {
                cwe_id: rec.cwe_id.clone(),
                assert_label: unit.assert_label.clone(),
                predicate: unit.property_body.exprs().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ; "),
                default_action: default,
            });
            units.push(unit);
        }
        let actions = self.actions.choose(&pending).map_err(|e| PipelineError::stage(st, e))?;
        if actions.len() != pending.len() {
            return Err(PipelineError::stage(st, "action count does not match the pending assertions"));
        }
        let mut policies = Vec::new();
        for ((p, unit), action) in pending.iter().zip(&units).zip(actions) {
            let translated = assertion_to_policy(unit, &action, &self.spec).and_then(|mut pol| {
                pol.source_cwe = Some(p.cwe_id.clone());
                classify_placement(&pol, self.entry(&p.cwe_id), &self.spec)
            });
            match translated {
                Ok(pol) => {
                    let placement = pol.placement.clone().expect("classified");
                    let document = serde_json::from_str(&serialize_policy(&pol)).expect("policy document is JSON");
                    policies.push(PolicyRecord { cwe_id: p.cwe_id.clone(), action, placement, document });
                }
                Err(e) => failures.push(CweNote { cwe_id: p.cwe_id.clone(), message: e.to_string() }),
            }
        }
        let dir = self.stage_dir(st);
        let docs: Vec<&Value> = policies.iter().map(|p| &p.document).collect();
        write_file(st, &dir.join("policies.json"), &to_json(&docs))?;
        let chosen: BTreeMap<&str, &str> = policies.iter().map(|p| (p.cwe_id.as_str(), p.action.as_str())).collect();
        write_file(st, &dir.join("actions.json"), &to_json(&chosen))?;
        if !failures.is_empty() {
            write_file(st, &dir.join("failures.json"), &to_json(&failures))?;
        }
        Ok(PolicyData { policies, failures })
    }

    fn run_rtl(&self) -> Result<RtlData, PipelineError> {
        let st = Stage::Rtl;
        let data = self.state.policy.as_ref().expect("policy stage precedes rtl");
        let policies: Vec<SecurityPolicy> = data
            .policies
            .iter()
            .map(|p| parse_policy(&p.document.to_string()))
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::stage(st, e))?;
        let artifacts = generate_rtl(&policies, &self.spec).map_err(|e| PipelineError::stage(st, e))?;
        let dir = self.stage_dir(st);
        write_rtl(&dir, &artifacts).map_err(|e| PipelineError::stage(st, e))?;
        let files = artifacts
            .iter()
            .map(|a| RtlFileRecord {
                file: format!("{}/{}", st.dir(), a.file_name()),
                policies: a.policies_included.clone(),
                findings: validate_rtl(a),
                warnings: a.warnings.clone(),
            })
            .collect();
        Ok(RtlData { files })
    }

    fn report(&self, statuses: Vec<StageReport>, failure: Option<Failure>, started: u64) -> RunReport {
        let s = &self.state;
        let mut d = DiagnosticsSummary::default();
        let mut cwes: Vec<CweArtifacts> = Vec::new();
        let (mut candidate_count, mut filtered_count, mut metric) = (None, None, None);
        if let Some(c) = &s.cwe {
            candidate_count = Some(c.candidates.len());
        }
        if let Some(f) = &s.filter {
            candidate_count = Some(f.candidate_count);
            filtered_count = Some(f.filtered.len());
            metric = relevance_metric(f.filtered.len(), f.candidate_count).ok();
            for diag in &f.diagnostics {
                match (diag.accepted, diag.route) {
                    (true, Some(MatchRoute::ExactId)) => d.exact_id_matches += 1,
                    (true, Some(MatchRoute::Similarity)) => d.similarity_matches += 1,
                    (true, Some(MatchRoute::LlmConfirmed)) => d.llm_confirmed += 1,
                    _ => d.rejected += 1,
                }
            }
            cwes = f
                .filtered
                .iter()
                .map(|x| CweArtifacts { cwe_id: x.entry.cwe_id.clone(), classification: x.classification_tuple().to_vec(), ..Default::default() })
                .collect();
        }
        fn find<'c>(cwes: &'c mut [CweArtifacts], id: &str) -> Option<&'c mut CweArtifacts> {
            cwes.iter_mut().find(|c| c.cwe_id == id)
        }
        if let Some(sva) = &s.sva {
            for a in &sva.assertions {
                match a.source {
                    AssertionSource::Template => d.assertions_from_template += 1,
                    _ => d.assertions_from_llm += 1,
                }
                d.lint_advisories += a.advisories.len();
                if let Some(c) = find(&mut cwes, &a.cwe_id) {
                    c.assertion = Some(a.file.clone());
                    c.assertion_source = Some(a.source);
                    c.notes.extend(a.notes.iter().cloned());
                }
            }
            for n in &sva.failures {
                if let Some(c) = find(&mut cwes, &n.cwe_id) {
                    c.notes.push(n.message.clone());
                }
            }
        }
        if let Some(p) = &s.policy {
            d.policy_failures = p.failures.len();
            for r in &p.policies {
                if let Some(c) = find(&mut cwes, &r.cwe_id) {
                    c.placement = Some(match &r.placement {
                        Placement::BusLevel => "bus_level".to_string(),
                        Placement::IpLevel(ip) => format!("ip_level:{ip}"),
                    });
                }
            }
            for n in &p.failures {
                if let Some(c) = find(&mut cwes, &n.cwe_id) {
                    c.notes.push(format!("policy: {}", n.message));
                }
            }
        }
        if let Some(r) = &s.rtl {
            for f in &r.files {
                d.rtl_findings += f.findings.len();
                d.rtl_warnings += f.warnings.len();
                for id in &f.policies {
                    if let Some(c) = find(&mut cwes, id) {
                        c.rtl = Some(f.file.clone());
                    }
                }
            }
        }
        RunReport {
            spec_name: self.spec.name.clone(),
            stages: statuses,
            candidate_count,
            filtered_count,
            relevance_metric: metric,
            cwes,
            diagnostics: d,
            failure,
            started_unix: started,
            finished_unix: now(),
        }
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs the configured stages with actions from the answers file, or the
/// default action for every assertion when no file is given.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    match &config.answers {
        Some(path) => run_pipeline_with(config, &mut AnswersFile::load(path)?),
        None => run_pipeline_with(config, &mut DefaultActions),
    }
}

/// Runs the configured stages. Stages before the first requested one are
/// replayed from their checkpoints; a missing or stale checkpoint is a
/// configuration error. A stage failure stops the run; the report written
/// to `report.json` then records the partial results.
pub fn run_pipeline_with(config: &PipelineConfig, actions: &mut dyn ActionPrompter) -> Result<RunReport, PipelineError> {
    let started = now();
    config.validate()?;
    let spec_text = fs::read_to_string(&config.spec_path)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", config.spec_path.display())))?;
    let spec = load_spec(&config.spec_path).map_err(|e| PipelineError::Config(format!("{}: {e}", config.spec_path.display())))?;
    let db_text =
        fs::read_to_string(&config.db_path).map_err(|e| PipelineError::Config(format!("{}: {e}", config.db_path.display())))?;
    load_db(&config.db_path).map_err(|e| PipelineError::Config(format!("{}: {e}", config.db_path.display())))?;
    fs::create_dir_all(&config.out_dir).map_err(|e| PipelineError::Config(format!("{}: {e}", config.out_dir.display())))?;

    let mut runner = Runner {
        config,
        spec,
        spec_digest: digest(spec_text.as_bytes()),
        db_text,
        provider_id: provider_identity(&config.provider),
        actions,
        state: State::default(),
    };
    let first = config.stages[0];
    let last = *config.stages.last().expect("validated non-empty");
    let mut statuses = Vec::new();
    for stage in &Stage::ALL[..first.index()] {
        if !runner.replay(*stage) {
            return Err(PipelineError::Config(format!(
                "stage `{first}` needs a valid `{stage}` checkpoint in {}; include `{stage}` in the requested stages",
                config.out_dir.join("checkpoints").display()
            )));
        }
        statuses.push(StageReport { stage: *stage, status: StageStatus::Replayed, message: None });
    }
    let mut failure = None;
    for stage in &Stage::ALL[first.index()..=last.index()] {
        match runner.run(*stage) {
            Ok(()) => statuses.push(StageReport { stage: *stage, status: StageStatus::Completed, message: None }),
            Err(e) => {
                let message = e.to_string();
                statuses.push(StageReport { stage: *stage, status: StageStatus::Failed, message: Some(message.clone()) });
                failure = Some(Failure { stage: *stage, exit_code: e.exit_code(), message });
                break;
            }
        }
    }
    for stage in Stage::ALL {
        if !statuses.iter().any(|s| s.stage == stage) {
            statuses.push(StageReport { stage, status: StageStatus::NotRun, message: None });
        }
    }
    let report = runner.report(statuses, failure, started);
    fs::write(config.out_dir.join(REPORT_FILE), to_json(&report))
        .map_err(|e| PipelineError::Config(format!("cannot write report: {e}")))?;
    Ok(report)
}
