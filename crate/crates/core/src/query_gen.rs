//! Prompt construction from a spec, assumptions and CWE entries.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cwe_db::CweEntry;
use crate::llm_client::CweCandidate;
use crate::spec_model::{IpBlock, Role, SocSpec};

const ENUMERATION_TEMPLATE: &str = include_str!("../data/templates/cwe_enumeration.txt");
const RELEVANCE_TEMPLATE: &str = include_str!("../data/templates/relevance_check.txt");
const SVA_TEMPLATE: &str = include_str!("../data/templates/sva_generation.txt");
const ASSUMPTIONS: &str = include_str!("../data/assumptions.tsv");

const PLACEHOLDERS: &[&str] = &["soc_config", "assumptions", "cwe_id", "cwe_desc", "bus_protocol", "ip_context"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("{cwe_id} is IP-level only; an IP must be supplied")]
    MissingIp { cwe_id: String },
    #[error("template `{name}`: {message}")]
    Template { name: String, message: String },
    #[error("assumptions line {line}: {message}")]
    Assumptions { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumption {
    pub id: String,
    pub text: String,
}

/// Parses `id<TAB>text` lines (header `id text` optional).
pub fn parse_assumptions(text: &str) -> Result<Vec<Assumption>, QueryError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("id\t")) {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| QueryError::Assumptions { line: idx + 1, message: "expected `id<TAB>text`".into() })?;
        if body.trim().is_empty() {
            return Err(QueryError::Assumptions { line: idx + 1, message: "empty assumption text".into() });
        }
        out.push(Assumption { id: id.trim().into(), text: body.trim().into() });
    }
    Ok(out)
}

/// The three shipped assumptions.
pub fn builtin_assumptions() -> Vec<Assumption> {
    parse_assumptions(ASSUMPTIONS).expect("shipped assumptions are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    CweEnumeration,
    RelevanceCheck,
    SvaGeneration,
}

impl QueryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::CweEnumeration => "cwe_enumeration",
            QueryKind::RelevanceCheck => "relevance_check",
            QueryKind::SvaGeneration => "sva_generation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryText {
    pub kind: QueryKind,
    pub body: String,
    /// Hash of the rendered SoC configuration the query was built from.
    pub context_digest: String,
}

impl QueryText {
    /// Stable per-query key (kind and body), used to name mock fixtures.
    pub fn key(&self) -> String {
        short_digest(&format!("{}\n{}", self.kind.as_str(), self.body))
    }
}

pub fn short_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub cwe_enumeration: String,
    pub relevance_check: String,
    pub sva_generation: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            cwe_enumeration: trim_template(ENUMERATION_TEMPLATE),
            relevance_check: trim_template(RELEVANCE_TEMPLATE),
            sva_generation: trim_template(SVA_TEMPLATE),
        }
    }

    /// Loads `<kind>.txt` files from `dir`; missing files fall back to the builtin.
    pub fn load_dir(dir: &Path) -> Result<Self, QueryError> {
        let mut set = Self::builtin();
        for (kind, slot) in [
            (QueryKind::CweEnumeration, &mut set.cwe_enumeration),
            (QueryKind::RelevanceCheck, &mut set.relevance_check),
            (QueryKind::SvaGeneration, &mut set.sva_generation),
        ] {
            let path = dir.join(format!("{}.txt", kind.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| QueryError::Template { name: path.display().to_string(), message: e.to_string() })?;
                check_placeholders(kind.as_str(), &text)?;
                *slot = trim_template(&text);
            }
        }
        Ok(set)
    }
}

fn trim_template(text: &str) -> String {
    text.strip_suffix('\n').unwrap_or(text).to_string()
}

fn check_placeholders(name: &str, template: &str) -> Result<(), QueryError> {
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| QueryError::Template { name: name.into(), message: "unclosed `{{`".into() })?;
        let key = after[..close].trim();
        if !PLACEHOLDERS.contains(&key) {
            return Err(QueryError::Template { name: name.into(), message: format!("unknown placeholder `{key}`") });
        }
        rest = &after[close + 2..];
    }
    Ok(())
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let key = after[..close].trim();
                out.push_str(values.iter().find(|(k, _)| *k == key).map_or("", |(_, v)| v));
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn range_text(r: &crate::spec_model::AddressRange) -> String {
    format!("0x{:08X}-0x{:08X}", r.low, r.high)
}

fn ip_line(ip: &IpBlock, index: usize) -> String {
    let role = match ip.role {
        Role::Master => "Master",
        Role::Slave => "Slave",
    };
    let mut line = format!("{role} {index}: {}", ip.name);
    if let Some(a) = &ip.abbreviation {
        let _ = write!(line, " ({a})");
    }
    let _ = write!(line, ", operation {}", ip.operation);
    if !ip.description.is_empty() {
        let _ = write!(line, ", type {}", ip.description);
    }
    let _ = write!(line, ", address range {}, base 0x{:08X}", range_text(&ip.address_range), ip.base_address);
    if let Some(p) = &ip.protected_range {
        let _ = write!(line, ", protected range {}", range_text(p));
    }
    line
}

/// Multi-line, deterministic description of the SoC.
pub fn render_soc_config(spec: &SocSpec) -> String {
    let mut lines = vec![format!("SoC name: {}", spec.name)];
    if !spec.soc_type.is_empty() {
        lines.push(format!("SoC type: {}", spec.soc_type));
    }
    if !spec.usage.is_empty() {
        lines.push(format!("Usage: {}", spec.usage));
    }
    lines.push(format!("Bus protocol: {}", spec.bus_protocol));
    lines.push(format!("Masters: {}, Slaves: {}", spec.num_masters, spec.num_slaves));
    let bi = &spec.bus_interface;
    let mut bus = format!("Bus interface: {}, {} ports", bi.interface_name, bi.num_ports);
    if !bi.signal_names.is_empty() {
        let _ = write!(bus, ", signals {}", bi.signal_names.join(", "));
        if bi.elided {
            bus.push_str(", ...");
        }
    }
    lines.push(bus);
    for role in [Role::Master, Role::Slave] {
        for (i, ip) in spec.ips.iter().filter(|ip| ip.role == role).enumerate() {
            lines.push(ip_line(ip, i + 1));
        }
    }
    lines.join("\n")
}

fn assumptions_block(assumptions: &[Assumption]) -> String {
    if assumptions.is_empty() {
        return String::new();
    }
    let mut block = String::from("Assumptions:\n");
    for a in assumptions {
        block.push_str(&a.text);
        block.push('\n');
    }
    block
}

impl TemplateSet {
    pub fn cwe_enumeration_query(&self, spec: &SocSpec, assumptions: &[Assumption]) -> QueryText {
        let config = render_soc_config(spec);
        let block = assumptions_block(assumptions);
        QueryText {
            kind: QueryKind::CweEnumeration,
            body: fill(&self.cwe_enumeration, &[("soc_config", &config), ("assumptions", &block)]),
            context_digest: short_digest(&config),
        }
    }

    pub fn relevance_query(&self, candidate: &CweCandidate, spec: &SocSpec) -> QueryText {
        let config = render_soc_config(spec);
        let desc = candidate.description.trim();
        let desc = if desc.is_empty() { String::new() } else { format!(", {desc}") };
        QueryText {
            kind: QueryKind::RelevanceCheck,
            body: fill(&self.relevance_check, &[("cwe_id", &candidate.id), ("cwe_desc", &desc), ("soc_config", &config)]),
            context_digest: short_digest(&config),
        }
    }

    pub fn sva_generation_query(&self, entry: &CweEntry, spec: &SocSpec, ip: Option<&IpBlock>) -> Result<QueryText, QueryError> {
        if entry.ip && !entry.bus && ip.is_none() {
            return Err(QueryError::MissingIp { cwe_id: entry.cwe_id.clone() });
        }
        let context = ip.map(|ip| ip_context(ip, spec)).unwrap_or_default();
        Ok(QueryText {
            kind: QueryKind::SvaGeneration,
            body: fill(
                &self.sva_generation,
                &[("cwe_id", &entry.cwe_id), ("bus_protocol", &spec.bus_protocol), ("ip_context", &context)],
            ),
            context_digest: short_digest(&render_soc_config(spec)),
        })
    }
}

fn ip_context(ip: &IpBlock, spec: &SocSpec) -> String {
    let mut text = format!("\nTarget IP: {}", ip.name);
    if let Some(a) = &ip.abbreviation {
        let _ = write!(text, " ({a})");
    }
    let _ = write!(text, ", operation {}.", ip.operation);
    let signals: Vec<&str> = if ip.ports.is_empty() {
        spec.bus_interface.signal_names.iter().map(String::as_str).collect()
    } else {
        ip.ports.iter().map(|p| p.name.as_str()).collect()
    };
    if !signals.is_empty() {
        let _ = write!(text, "\nSignal names: {}.", signals.join(", "));
    }
    if let Some(p) = &ip.protected_range {
        let _ = write!(text, "\nProtected address range: 32'h{:08X} to 32'h{:08X}.", p.low, p.high);
    }
    text
}

pub fn cwe_enumeration_query(spec: &SocSpec, assumptions: &[Assumption]) -> QueryText {
    TemplateSet::builtin().cwe_enumeration_query(spec, assumptions)
}

pub fn relevance_query(candidate: &CweCandidate, spec: &SocSpec) -> QueryText {
    TemplateSet::builtin().relevance_query(candidate, spec)
}

pub fn sva_generation_query(entry: &CweEntry, spec: &SocSpec, ip: Option<&IpBlock>) -> Result<QueryText, QueryError> {
    TemplateSet::builtin().sva_generation_query(entry, spec, ip)
}
