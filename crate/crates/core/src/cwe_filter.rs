//! Reduces an LLM-proposed CWE list to the entries relevant for a given SoC.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwe_db::{canonical_id, CweEntry, Db, Misc, Provenance, Timing, ViolationType};
use crate::llm_client::{parse_relevance, CweCandidate, LlmClient, LlmError, Relevance};
use crate::query_gen::relevance_query;
use crate::similarity::{best_match_with, TextScorer, TfIdfScorer};
use crate::spec_model::{IpBlock, SocSpec};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("the CWE database is empty")]
    EmptyDb,
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("relevant count {filtered} exceeds total count {total}")]
    Counts { filtered: usize, total: usize },
    #[error("diagnostics file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Bus,
    Ip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRoute {
    ExactId,
    Similarity,
    LlmConfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredCwe {
    pub entry: CweEntry,
    pub levels: BTreeSet<Level>,
    pub matched_ips: Vec<String>,
    pub match_route: MatchRoute,
    pub similarity_score: Option<f64>,
}

impl FilteredCwe {
    /// `(id, description, levels, timing, violation type)` in table wording.
    pub fn classification_tuple(&self) -> [String; 5] {
        let levels = match (self.levels.contains(&Level::Bus), self.levels.contains(&Level::Ip)) {
            (true, true) => "Bus, IP",
            (true, false) => "Bus",
            _ => "IP",
        };
        let timing = match self.entry.sync {
            Timing::Synchronous => "Sync",
            Timing::Asynchronous => "Async",
            Timing::NotApplicable => "N/A",
        };
        let kind = match self.entry.violation_type {
            ViolationType::AccessControl => "Access Control",
            ViolationType::InformationFlow => "Information Flow",
            ViolationType::Liveness => "Liveness",
            ViolationType::Toctou => "TOCTOU",
            ViolationType::InadequateErrorHandling => "Inadequate Error Handling",
            ViolationType::NotApplicable => "N/A",
        };
        [self.entry.cwe_id.clone(), self.entry.description.clone(), levels.into(), timing.into(), kind.into()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndeterminatePolicy {
    #[default]
    Drop,
    Keep,
}

/// What an `ip = yes` entry without `ip_name`/`ip_type` hints matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpMatchFallback {
    /// Nothing.
    #[default]
    Strict,
    /// Every IP in the spec.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub similarity_threshold: f64,
    pub llm_fallback_enabled: bool,
    pub indeterminate_policy: IndeterminatePolicy,
    pub ip_match_fallback: IpMatchFallback,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            similarity_threshold: 0.75,
            llm_fallback_enabled: false,
            indeterminate_policy: IndeterminatePolicy::Drop,
            ip_match_fallback: IpMatchFallback::Strict,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(FilterError::Config(format!("threshold {} outside [0, 1]", self.similarity_threshold)));
        }
        Ok(())
    }
}

/// Decides whether an unmatched candidate is relevant to the SoC.
pub trait RelevanceJudge {
    fn judge(&self, candidate: &CweCandidate, spec: &SocSpec) -> Result<Relevance, LlmError>;
}

impl RelevanceJudge for LlmClient {
    fn judge(&self, candidate: &CweCandidate, spec: &SocSpec) -> Result<Relevance, LlmError> {
        self.send(&relevance_query(candidate, spec)).map(|r| parse_relevance(&r))
    }
}

/// One record per candidate in the diagnostics sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub source_rank: usize,
    pub candidate_id: String,
    pub route: Option<MatchRoute>,
    pub matched_id: Option<String>,
    pub best_score: Option<f64>,
    pub accepted: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub filtered: Vec<FilteredCwe>,
    pub db: Db,
    pub diagnostics: Vec<Diagnostic>,
}

fn ip_matches(entry: &CweEntry, ip: &IpBlock, fallback: IpMatchFallback) -> bool {
    let (names, types) = (entry.ip_names(), entry.ip_types());
    if names.is_empty() && types.is_empty() {
        return fallback == IpMatchFallback::All;
    }
    names.iter().any(|n| ip.matches_name(n)) || types.iter().any(|t| t.eq_ignore_ascii_case(ip.operation.trim()))
}

/// Adds `entry` to `acc` at the levels its flags and the IP hints allow.
/// An id already present has the new levels and IPs merged in. Returns
/// whether `acc` changed.
pub fn map_cwe(
    entry: &CweEntry,
    ips: &[IpBlock],
    acc: &mut Vec<FilteredCwe>,
    route: MatchRoute,
    score: Option<f64>,
    fallback: IpMatchFallback,
) -> bool {
    let mut levels = BTreeSet::new();
    let mut matched_ips = Vec::new();
    if entry.bus {
        levels.insert(Level::Bus);
    }
    if entry.ip {
        matched_ips = ips.iter().filter(|ip| ip_matches(entry, ip, fallback)).map(|ip| ip.name.clone()).collect();
        if !matched_ips.is_empty() {
            levels.insert(Level::Ip);
        }
    }
    if levels.is_empty() {
        return false;
    }
    if let Some(existing) = acc.iter_mut().find(|f| f.entry.cwe_id == entry.cwe_id) {
        let before = (existing.levels.len(), existing.matched_ips.len());
        existing.levels.extend(levels);
        for name in matched_ips {
            if !existing.matched_ips.contains(&name) {
                existing.matched_ips.push(name);
            }
        }
        return before != (existing.levels.len(), existing.matched_ips.len());
    }
    acc.push(FilteredCwe { entry: entry.clone(), levels, matched_ips, match_route: route, similarity_score: score });
    true
}

/// Classification given to a CWE that is absent from the database but
/// confirmed relevant by the LLM.
pub fn llm_confirmed_entry(candidate: &CweCandidate) -> Option<CweEntry> {
    Some(CweEntry {
        cwe_id: canonical_id(&candidate.id)?,
        description: candidate.description.replace(['\t', '\n', '\r'], " "),
        bus: true,
        ip: false,
        sync: Timing::NotApplicable,
        violation_type: ViolationType::NotApplicable,
        misc: Misc::new(),
        provenance: Provenance::LlmConfirmed,
    })
}

pub fn filter_cwes(
    candidates: &[CweCandidate],
    db: &Db,
    spec: &SocSpec,
    judge: Option<&dyn RelevanceJudge>,
    config: &FilterConfig,
) -> Result<FilterOutcome, FilterError> {
    filter_cwes_with(&TfIdfScorer, candidates, db, spec, judge, config)
}

/// [`filter_cwes`] with a caller-chosen description scorer.
pub fn filter_cwes_with(
    scorer: &dyn TextScorer,
    candidates: &[CweCandidate],
    db: &Db,
    spec: &SocSpec,
    judge: Option<&dyn RelevanceJudge>,
    config: &FilterConfig,
) -> Result<FilterOutcome, FilterError> {
    if db.is_empty() {
        return Err(FilterError::EmptyDb);
    }
    config.validate()?;
    let mut ordered: Vec<&CweCandidate> = candidates.iter().collect();
    ordered.sort_by_key(|c| c.source_rank);

    let mut db = db.clone();
    let mut acc: Vec<FilteredCwe> = Vec::new();
    let mut diagnostics = Vec::new();

    for cand in ordered {
        let mut diag = Diagnostic {
            source_rank: cand.source_rank,
            candidate_id: cand.id.clone(),
            route: None,
            matched_id: None,
            best_score: None,
            accepted: false,
            notes: Vec::new(),
        };
        let was_present = |acc: &[FilteredCwe], id: &str| acc.iter().any(|f| f.entry.cwe_id == id);

        let exact = canonical_id(&cand.id).and_then(|id| db.lookup(&id).cloned());
        if let Some(entry) = exact {
            diag.route = Some(MatchRoute::ExactId);
            diag.matched_id = Some(entry.cwe_id.clone());
            let dup = was_present(&acc, &entry.cwe_id);
            let changed = map_cwe(&entry, &spec.ips, &mut acc, MatchRoute::ExactId, None, config.ip_match_fallback);
            diag.accepted = changed && !dup;
            note_mapping(&mut diag, dup, changed);
            diagnostics.push(diag);
            continue;
        }

        let best = best_match_with(scorer, &cand.description, &db).map(|(e, s)| (e.clone(), s));
        diag.best_score = best.as_ref().map(|(_, s)| *s);
        if let Some((entry, score)) = best.filter(|(_, s)| *s > config.similarity_threshold) {
            diag.route = Some(MatchRoute::Similarity);
            diag.matched_id = Some(entry.cwe_id.clone());
            if entry.cwe_id != cand.id {
                diag.notes.push(format!("id rewritten from {} to {} by description match", cand.id, entry.cwe_id));
            }
            let dup = was_present(&acc, &entry.cwe_id);
            let changed = map_cwe(&entry, &spec.ips, &mut acc, MatchRoute::Similarity, Some(score), config.ip_match_fallback);
            diag.accepted = changed && !dup;
            note_mapping(&mut diag, dup, changed);
            diagnostics.push(diag);
            continue;
        }
        diag.notes.push(format!("best similarity not above threshold {}", config.similarity_threshold));

        let Some(judge) = judge.filter(|_| config.llm_fallback_enabled) else {
            diag.notes.push("skipped: not in database and LLM fallback disabled".into());
            diagnostics.push(diag);
            continue;
        };
        diag.route = Some(MatchRoute::LlmConfirmed);
        let verdict = match judge.judge(cand, spec) {
            Ok(v) => v,
            Err(e) => {
                diag.notes.push(format!("skipped: relevance query failed: {e}"));
                diagnostics.push(diag);
                continue;
            }
        };
        let keep = match verdict {
            Relevance::Relevant => true,
            Relevance::NotRelevant => false,
            Relevance::Indeterminate => config.indeterminate_policy == IndeterminatePolicy::Keep,
        };
        diag.notes.push(format!("relevance verdict: {}", serde_json::to_value(verdict).unwrap_or_default().as_str().unwrap_or("")));
        if !keep {
            diag.notes.push("skipped: judged not relevant".into());
        } else if let Some(entry) = llm_confirmed_entry(cand) {
            if was_present(&acc, &entry.cwe_id) {
                diag.notes.push("skipped: duplicate id".into());
            } else {
                if let Ok(grown) = db.append_entry(entry.clone()) {
                    db = grown;
                }
                diag.matched_id = Some(entry.cwe_id.clone());
                diag.accepted = true;
                acc.push(FilteredCwe {
                    entry,
                    levels: BTreeSet::from([Level::Bus]),
                    matched_ips: Vec::new(),
                    match_route: MatchRoute::LlmConfirmed,
                    similarity_score: None,
                });
            }
        } else {
            diag.notes.push("skipped: candidate id is not a CWE id".into());
        }
        diagnostics.push(diag);
    }
    Ok(FilterOutcome { filtered: acc, db, diagnostics })
}

fn note_mapping(diag: &mut Diagnostic, dup: bool, changed: bool) {
    match (dup, changed) {
        (true, true) => diag.notes.push("levels merged into existing record".into()),
        (true, false) => diag.notes.push("skipped: duplicate id".into()),
        (false, false) => diag.notes.push("skipped: no bus level and no IP match".into()),
        (false, true) => {}
    }
}

/// Fraction of proposed CWEs that survived filtering; 0 when nothing was proposed.
pub fn relevance_metric(filtered_count: usize, total_count: usize) -> Result<f64, FilterError> {
    if filtered_count > total_count {
        return Err(FilterError::Counts { filtered: filtered_count, total: total_count });
    }
    if total_count == 0 {
        return Ok(0.0);
    }
    Ok(filtered_count as f64 / total_count as f64)
}

/// Writes one JSON object per line.
pub fn write_diagnostics(path: &Path, diagnostics: &[Diagnostic]) -> Result<(), FilterError> {
    let io = |source| FilterError::Io { path: path.display().to_string(), source };
    let mut out = Vec::new();
    for d in diagnostics {
        serde_json::to_writer(&mut out, d).expect("diagnostics serialize");
        out.push(b'\n');
    }
    std::fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(io)
}
