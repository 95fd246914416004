//! LLM access (HTTP chat-completions or a file-backed mock) and parsers for
//! free-form responses.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cwe_db::canonical_id;
use crate::query_gen::QueryText;
use crate::similarity::normalize;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("provider error (status {status}): {message}")]
    Provider { status: u16, message: String },
    #[error("no mock response at {}", path.display())]
    MockMiss { path: PathBuf },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("audit log {}: {source}", path.display())]
    Audit { path: PathBuf, source: std::io::Error },
}

impl LlmError {
    fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_ref: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: f64,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4".into(),
            api_key_ref: Some("OPENAI_API_KEY".into()),
            timeout_secs: 60.0,
            max_retries: 2,
            temperature: 0.0,
            backoff_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config("temperature must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, query: &QueryText) -> Result<String, LlmError>;
}

/// Chat-completions over HTTP.
pub struct HttpProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(HttpProvider { config, agent })
    }

    fn api_key(&self) -> Result<Option<String>, LlmError> {
        match &self.config.api_key_ref {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| LlmError::Auth(format!("environment variable {var} is not set"))),
        }
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, query: &QueryText) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": query.body}],
            "temperature": self.config.temperature,
        });
        let mut req = self.agent.post(&self.config.endpoint_url).header("Content-Type", "application/json");
        if let Some(key) = self.api_key()? {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let transport = |e: ureq::Error| LlmError::Transport { attempts: 1, message: e.to_string() };
        let mut resp = req.send_json(&body).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport)?;
        let payload: Option<Value> = serde_json::from_str(&text).ok();
        let provider_message = || {
            payload
                .as_ref()
                .and_then(|v| v.pointer("/error/message"))
                .and_then(Value::as_str)
                .map(String::from)
                .unwrap_or_else(|| text.chars().take(300).collect())
        };
        match status {
            200..=299 => {}
            401 | 403 => return Err(LlmError::Auth(provider_message())),
            408 | 429 | 500..=599 => {
                return Err(LlmError::Transport { attempts: 1, message: format!("status {status}: {}", provider_message()) })
            }
            _ => return Err(LlmError::Provider { status, message: provider_message() }),
        }
        payload
            .as_ref()
            .and_then(|v| v.pointer("/choices/0/message/content"))
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| LlmError::Provider { status, message: "response lacks choices[0].message.content".into() })
    }
}

/// Reads canned responses named `<kind>-<query key>.txt`, falling back to
/// `<kind>-default.txt` when present.
#[derive(Debug, Clone)]
pub struct MockProvider {
    dir: PathBuf,
}

impl MockProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MockProvider { dir: dir.into() }
    }

    pub fn fixture_name(query: &QueryText) -> String {
        format!("{}-{}.txt", query.kind.as_str(), query.key())
    }

    pub fn fixture_path(&self, query: &QueryText) -> PathBuf {
        self.dir.join(Self::fixture_name(query))
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, query: &QueryText) -> Result<String, LlmError> {
        let exact = self.fixture_path(query);
        let fallback = self.dir.join(format!("{}-default.txt", query.kind.as_str()));
        for path in [&exact, &fallback] {
            if let Ok(text) = std::fs::read_to_string(path) {
                return Ok(text);
            }
        }
        Err(LlmError::MockMiss { path: exact })
    }
}

struct AuditLog {
    path: PathBuf,
    seq: Mutex<u64>,
}

/// Retrying front end over a provider with an optional JSON-lines audit log.
pub struct LlmClient {
    provider: Box<dyn Provider>,
    max_retries: u32,
    backoff: Duration,
    audit: Option<AuditLog>,
}

impl LlmClient {
    pub fn new(provider: Box<dyn Provider>, config: &ProviderConfig) -> Self {
        LlmClient {
            provider,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(config.backoff_ms),
            audit: None,
        }
    }

    pub fn mock(dir: impl Into<PathBuf>) -> Self {
        let config = ProviderConfig { max_retries: 0, backoff_ms: 0, ..ProviderConfig::default() };
        Self::new(Box::new(MockProvider::new(dir)), &config)
    }

    /// Appends every exchange to `path` (created if absent).
    pub fn with_audit_log(mut self, path: impl Into<PathBuf>) -> Self {
        self.audit = Some(AuditLog { path: path.into(), seq: Mutex::new(0) });
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn send(&self, query: &QueryText) -> Result<String, LlmError> {
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.provider.complete(query) {
                Err(e) if e.is_transient() && attempts <= self.max_retries => {
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempts - 1));
                }
                Err(LlmError::Transport { message, .. }) => break Err(LlmError::Transport { attempts, message }),
                other => break other,
            }
        };
        self.record(query, attempts, &result)?;
        result
    }

    fn record(&self, query: &QueryText, attempts: u32, result: &Result<String, LlmError>) -> Result<(), LlmError> {
        let Some(log) = &self.audit else { return Ok(()) };
        let mut seq = log.seq.lock().unwrap_or_else(|p| p.into_inner());
        *seq += 1;
        let line = json!({
            "seq": *seq,
            "provider": self.provider.name(),
            "kind": query.kind.as_str(),
            "key": query.key(),
            "context_digest": query.context_digest,
            "attempts": attempts,
            "request": query.body,
            "response": result.as_ref().ok(),
            "error": result.as_ref().err().map(ToString::to_string),
        });
        let io = |source| LlmError::Audit { path: log.path.clone(), source };
        let mut file = OpenOptions::new().create(true).append(true).open(&log.path).map_err(io)?;
        writeln!(file, "{line}").map_err(io)
    }
}

/// One CWE mention extracted from a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweCandidate {
    pub id: String,
    pub description: String,
    /// 1-based position in the response.
    pub source_rank: usize,
}

fn cwe_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bCWE\s*[-\u{2010}\u{2011}\u{2013}\u{2014}]\s*(\d+)\b").expect("valid regex"))
}

fn clean_description(text: &str) -> String {
    let lead: &[char] = &[' ', '\t', ':', '-', '\u{2013}', '\u{2014}', '.', ')', '*', '_', '`'];
    let trail: &[char] = &[' ', '\t', ',', ';', '*', '_', '`'];
    let s = text.trim_start_matches(lead).trim_end_matches(trail);
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extracts CWE mentions in order, dropping repeats of the same id and
/// normalized description.
pub fn parse_cwe_list(text: &str) -> Vec<CweCandidate> {
    let mut out: Vec<CweCandidate> = Vec::new();
    let mut seen: Vec<(String, Vec<String>)> = Vec::new();
    for line in text.lines() {
        let matches: Vec<_> = cwe_regex().captures_iter(line).collect();
        for (i, cap) in matches.iter().enumerate() {
            let whole = cap.get(0).expect("group 0");
            let end = matches.get(i + 1).map_or(line.len(), |next| next.get(0).expect("group 0").start());
            let Some(id) = canonical_id(&format!("CWE-{}", &cap[1])) else { continue };
            let description = clean_description(&line[whole.end()..end]);
            let key = (id.clone(), normalize(&description));
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            out.push(CweCandidate { id, description, source_rank: out.len() + 1 });
        }
    }
    out
}

/// One `CWE-n: description` line per candidate.
pub fn render_candidates(candidates: &[CweCandidate]) -> String {
    candidates
        .iter()
        .map(|c| if c.description.is_empty() { c.id.clone() } else { format!("{}: {}", c.id, c.description) })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    NotRelevant,
    Indeterminate,
}

fn relevance_cues() -> &'static [(Regex, Relevance)] {
    static CUES: OnceLock<Vec<(Regex, Relevance)>> = OnceLock::new();
    CUES.get_or_init(|| {
        let mk = |p: &str, r| (Regex::new(p).expect("valid regex"), r);
        vec![
            mk(r"^\W*(no|nope|not really)\b", Relevance::NotRelevant),
            mk(r"\b(not|isn't|is not|are not|aren't) (directly |particularly |really )?(relevant|applicable)\b", Relevance::NotRelevant),
            mk(r"\b(irrelevant|out of scope|unrelated)\b", Relevance::NotRelevant),
            mk(r"^\W*(yes|yeah|correct|indeed|absolutely|certainly)\b", Relevance::Relevant),
            mk(r"\b(is|are|remains) (highly |very |directly |indeed )?(relevant|applicable)\b", Relevance::Relevant),
        ]
    })
}

/// Yes/no verdict from cue phrases near the start of the response; the
/// earliest cue wins.
pub fn parse_relevance(text: &str) -> Relevance {
    let head: String = text.trim_start().chars().take(240).collect::<String>().to_lowercase();
    relevance_cues()
        .iter()
        .filter_map(|(re, verdict)| re.find(&head).map(|m| (m.start(), *verdict)))
        .min_by_key(|(pos, _)| *pos)
        .map_or(Relevance::Indeterminate, |(_, v)| v)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no code block found in response")]
pub struct NoCodeFound;

/// First fenced block, else first indented block, else the region spanning
/// the property declaration through its assertion.
pub fn extract_code_block(text: &str) -> Result<String, NoCodeFound> {
    let lines: Vec<&str> = text.lines().collect();
    if let Some(start) = lines.iter().position(|l| l.trim_start().starts_with("```")) {
        if let Some(len) = lines[start + 1..].iter().position(|l| l.trim_start().starts_with("```")) {
            let body = lines[start + 1..start + 1 + len].join("\n");
            if !body.trim().is_empty() {
                return Ok(body);
            }
        }
    }
    if let Some(block) = indented_block(&lines) {
        return Ok(block);
    }
    property_region(&lines).ok_or(NoCodeFound)
}

fn indented_block(lines: &[&str]) -> Option<String> {
    let is_indented = |l: &str| l.starts_with("    ") || l.starts_with('\t');
    let mut i = 0;
    while i < lines.len() {
        let after_blank = i == 0 || lines[i - 1].trim().is_empty();
        if after_blank && is_indented(lines[i]) && !lines[i].trim().is_empty() {
            let mut j = i;
            while j < lines.len() && (is_indented(lines[j]) || lines[j].trim().is_empty()) {
                j += 1;
            }
            let block: Vec<&str> = lines[i..j].iter().map(|l| l.strip_prefix("    ").or_else(|| l.strip_prefix('\t')).unwrap_or(l)).collect();
            let text = block.join("\n").trim_end().to_string();
            if looks_like_code(&text) {
                return Some(text);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

fn looks_like_code(text: &str) -> bool {
    text.contains(';') || text.contains("endproperty") || text.contains("endmodule")
}

fn property_region(lines: &[&str]) -> Option<String> {
    static START: OnceLock<Regex> = OnceLock::new();
    let start_re = START.get_or_init(|| Regex::new(r"^\s*(module|property)\b").expect("valid regex"));
    let start = lines.iter().position(|l| start_re.is_match(l))?;
    let endprop = lines.iter().rposition(|l| l.contains("endproperty"))?;
    if endprop < start {
        return None;
    }
    let end = match lines.iter().rposition(|l| l.contains("endmodule")) {
        Some(e) if e > endprop => e,
        _ => {
            // through the end of the assert statement after the last endproperty
            let assert_line = lines[endprop..].iter().position(|l| l.contains("assert")).map(|o| endprop + o);
            match assert_line {
                Some(a) => lines[a..].iter().position(|l| l.contains(';')).map_or(a, |o| a + o),
                None => endprop,
            }
        }
    };
    Some(lines[start..=end].join("\n"))
}

/// Writes `text` as the mock fixture for `query` under `dir`.
pub fn write_mock_fixture(dir: &Path, query: &QueryText, text: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(MockProvider::fixture_name(query));
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query_gen::QueryKind;

    const CWE_LIST: &str = include_str!("../../../fixtures/llm/cwe_list_response.md");
    const DOS: &str = include_str!("../../../fixtures/llm/dos_response.txt");

    fn query(body: &str) -> QueryText {
        QueryText { kind: QueryKind::RelevanceCheck, body: body.into(), context_digest: "0".into() }
    }

    #[test]
    fn cwe_list_response_yields_21_candidates() {
        let list = parse_cwe_list(CWE_LIST);
        assert_eq!(list.len(), 21);
        assert_eq!(list[0], CweCandidate { id: "CWE-20".into(), description: "Improper Input Validation".into(), source_rank: 1 });
        assert_eq!(list[20].id, "CWE-918");
    }

    #[test]
    fn repeated_id_with_distinct_descriptions_is_kept() {
        let list = parse_cwe_list(DOS);
        assert_eq!(list.iter().filter(|c| c.id == "CWE-400").count(), 2);
        let twice = "CWE-79: XSS\nCWE-79: XSS.\n";
        assert_eq!(parse_cwe_list(twice).len(), 1);
    }

    #[test]
    fn prose_without_ids_is_empty() {
        assert!(parse_cwe_list("Nothing to see here.").is_empty());
    }

    #[test]
    fn parsing_own_rendering_is_identity() {
        let list = parse_cwe_list(CWE_LIST);
        assert_eq!(parse_cwe_list(&render_candidates(&list)), list);
    }

    #[test]
    fn relevance_cues() {
        assert_eq!(parse_relevance("Yes, CWE-284 is relevant because the bus..."), Relevance::Relevant);
        assert_eq!(parse_relevance("No, this is a web-application weakness."), Relevance::NotRelevant);
        assert_eq!(parse_relevance("It depends on the deployment."), Relevance::Indeterminate);
        assert_eq!(parse_relevance("This CWE is not relevant to hardware."), Relevance::NotRelevant);
    }

    #[test]
    fn code_block_extraction() {
        let two = "text\n```verilog\nfirst;\n```\nmore\n```\nsecond;\n```\n";
        assert_eq!(extract_code_block(two).unwrap(), "first;");
        assert_eq!(extract_code_block("Just prose, sorry."), Err(NoCodeFound));
        let bare = "Here you go:\nproperty p;\n  a |-> b;\nendproperty\na_p: assert property (p)\n  else $error(\"x\");\nHope it helps.";
        let got = extract_code_block(bare).unwrap();
        assert!(got.starts_with("property p;"));
        assert!(got.ends_with("else $error(\"x\");"));
        let indented = "Answer:\n\n    property p;\n        1'b1;\n    endproperty\n\nDone.";
        assert!(extract_code_block(indented).unwrap().starts_with("property p;"));
    }

    struct Flaky;

    impl Provider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &QueryText) -> Result<String, LlmError> {
            Err(LlmError::Transport { attempts: 1, message: "down".into() })
        }
    }

    #[test]
    fn transient_errors_retry_then_fail() {
        let dir = tempfile::tempdir().unwrap();
        let audit = dir.path().join("llm_audit.jsonl");
        let config = ProviderConfig { max_retries: 2, backoff_ms: 1, ..ProviderConfig::default() };
        let client = LlmClient::new(Box::new(Flaky), &config).with_audit_log(&audit);
        match client.send(&query("hello")) {
            Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        let log = std::fs::read_to_string(audit).unwrap();
        let rec: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        assert_eq!(rec["attempts"], 3);
        assert_eq!(rec["seq"], 1);
    }

    #[test]
    fn mock_reads_digest_named_file() {
        let dir = tempfile::tempdir().unwrap();
        let q = query("Is <CWE-1> relevant?");
        write_mock_fixture(dir.path(), &q, "Yes.").unwrap();
        let client = LlmClient::mock(dir.path());
        assert_eq!(client.send(&q).unwrap(), "Yes.");
        assert!(matches!(client.send(&query("other")), Err(LlmError::MockMiss { .. })));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let config = ProviderConfig {
            endpoint_url: "http://127.0.0.1:9/v1/chat/completions".into(),
            api_key_ref: None,
            timeout_secs: 2.0,
            max_retries: 1,
            backoff_ms: 1,
            ..ProviderConfig::default()
        };
        let client = LlmClient::new(Box::new(HttpProvider::new(config.clone()).unwrap()), &config);
        match client.send(&query("hi")) {
            Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    #[ignore = "needs network access and an API key in OPENAI_API_KEY"]
    fn live_provider_smoke() {
        let config = ProviderConfig::default();
        let client = LlmClient::new(Box::new(HttpProvider::new(config.clone()).unwrap()), &config);
        assert!(!client.send(&query("Say hello.")).unwrap().trim().is_empty());
    }
}
