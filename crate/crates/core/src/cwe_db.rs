//! The extensive CWE database: classified hardware-relevant CWE records.
//!
//! File format is UTF-8 TSV with the header
//! `CWE_ID DESC BUS IP SYNC TYPE MISC PROVENANCE`. Lines starting with `#`
//! are comments. MISC is `key=v1|v2;key2=v3`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: &str = "CWE_ID\tDESC\tBUS\tIP\tSYNC\tTYPE\tMISC\tPROVENANCE";

const SEED: &str = include_str!("../data/cwe_extensive_db.tsv");

#[derive(Debug, Error)]
pub enum DbError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate CWE id `{id}`")]
    Duplicate { id: String },
    #[error("line {line}: unknown {column} value `{token}`")]
    Enum { line: usize, column: &'static str, token: String },
    #[error("entry `{id}` violates an invariant: {message}")]
    Invariant { id: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    Synchronous,
    Asynchronous,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationType {
    AccessControl,
    InformationFlow,
    Liveness,
    Toctou,
    InadequateErrorHandling,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Printed in the reference snapshot.
    Seed,
    /// Added or annotated by hand for this artifact.
    Editorial,
    /// Appended after an LLM relevance confirmation.
    LlmConfirmed,
}

macro_rules! token_enum {
    ($ty:ty, $column:literal, { $($variant:path => $canon:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($variant => $canon),+ }
            }

            pub fn parse_token(token: &str) -> Option<Self> {
                let t = token.trim().to_ascii_lowercase();
                $(if t == $canon $(|| t == $alias)* { return Some($variant); })+
                None
            }

            const COLUMN: &'static str = $column;
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

token_enum!(Timing, "SYNC", {
    Timing::Synchronous => "synchronous" | "sync",
    Timing::Asynchronous => "asynchronous" | "async",
    Timing::NotApplicable => "not_applicable" | "n/a" | "na",
});

token_enum!(ViolationType, "TYPE", {
    ViolationType::AccessControl => "access_control" | "access control",
    ViolationType::InformationFlow => "information_flow" | "information flow",
    ViolationType::Liveness => "liveness",
    ViolationType::Toctou => "toctou",
    ViolationType::InadequateErrorHandling => "inadequate_error_handling" | "inadequate error handling",
    ViolationType::NotApplicable => "not_applicable" | "n/a" | "na",
});

token_enum!(Provenance, "PROVENANCE", {
    Provenance::Seed => "seed",
    Provenance::Editorial => "editorial",
    Provenance::LlmConfirmed => "llm_confirmed",
});

/// MISC column: ordered string lists keyed by name (`ip_name`, `ip_type`, ...).
pub type Misc = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweEntry {
    pub cwe_id: String,
    pub description: String,
    pub bus: bool,
    pub ip: bool,
    pub sync: Timing,
    pub violation_type: ViolationType,
    pub misc: Misc,
    pub provenance: Provenance,
}

impl CweEntry {
    pub fn ip_names(&self) -> &[String] {
        self.misc.get("ip_name").map_or(&[], Vec::as_slice)
    }

    pub fn ip_types(&self) -> &[String] {
        self.misc.get("ip_type").map_or(&[], Vec::as_slice)
    }

    /// Placement label as printed in classification tables.
    pub fn classification(&self) -> &'static str {
        match (self.bus, self.ip) {
            (true, true) => "Bus + IP Level",
            (true, false) => "Bus Level",
            (false, true) => "IP Level",
            (false, false) => "N/A",
        }
    }

    /// Inverse of [`classification`](Self::classification).
    pub fn flags_from_classification(label: &str) -> Option<(bool, bool)> {
        let norm: String = label.to_ascii_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
        Some(match norm.trim_end_matches("level") {
            "bus+ip" | "bus,ip" => (true, true),
            "bus" => (true, false),
            "ip" => (false, true),
            "n/a" | "na" => (false, false),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), DbError> {
        let bad = |message: &str| DbError::Invariant { id: self.cwe_id.clone(), message: message.into() };
        if canonical_id(&self.cwe_id).as_deref() != Some(self.cwe_id.as_str()) {
            return Err(bad("id must be canonical `CWE-<digits>`"));
        }
        if !self.bus && !self.ip && self.sync != Timing::NotApplicable {
            return Err(bad("entries with neither bus nor IP placement must have timing not_applicable"));
        }
        if self.description.contains(['\t', '\n', '\r']) {
            return Err(bad("description may not contain tabs or line breaks"));
        }
        for (k, vs) in &self.misc {
            let clean = |s: &str| !s.is_empty() && !s.contains(['\t', '\n', '\r', ';', '|', '='] );
            if !clean(k) || !vs.iter().all(|v| clean(v)) {
                return Err(bad("misc keys and values may not be empty or contain `;`, `|`, `=` or whitespace controls"));
            }
        }
        Ok(())
    }
}

/// Canonical `CWE-<digits>` form, or `None` when the text is not a CWE id.
pub fn canonical_id(text: &str) -> Option<String> {
    let t = text.trim();
    let digits = t.get(..4).filter(|p| p.eq_ignore_ascii_case("cwe-")).map(|_| &t[4..])?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = digits.trim_start_matches('0');
    Some(format!("CWE-{}", if digits.is_empty() { "0" } else { digits }))
}

/// Numeric part of a canonical id, for ordering.
pub fn id_number(id: &str) -> u64 {
    canonical_id(id).and_then(|c| c[4..].parse().ok()).unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Db {
    entries: Vec<CweEntry>,
    index: HashMap<String, usize>,
}

impl Db {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped seed database.
    pub fn seed() -> Self {
        parse_db(SEED).expect("shipped seed database is valid")
    }

    pub fn entries(&self) -> &[CweEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Case-insensitive id lookup.
    pub fn lookup(&self, id: &str) -> Option<&CweEntry> {
        let key = canonical_id(id)?;
        self.index.get(&key).map(|&i| &self.entries[i])
    }

    /// Returns a new database with `entry` appended.
    pub fn append_entry(&self, entry: CweEntry) -> Result<Db, DbError> {
        let mut next = self.clone();
        next.push(entry)?;
        Ok(next)
    }

    fn push(&mut self, entry: CweEntry) -> Result<(), DbError> {
        entry.validate()?;
        if self.index.contains_key(&entry.cwe_id) {
            return Err(DbError::Duplicate { id: entry.cwe_id });
        }
        self.index.insert(entry.cwe_id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CweEntry>) -> Result<Db, DbError> {
        let mut db = Db::new();
        for e in entries {
            db.push(e)?;
        }
        Ok(db)
    }
}

pub fn load_db(path: &Path) -> Result<Db, DbError> {
    let text = std::fs::read_to_string(path).map_err(|source| DbError::Io { path: path.display().to_string(), source })?;
    parse_db(&text)
}

pub fn parse_db(text: &str) -> Result<Db, DbError> {
    let mut db = Db::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        if !saw_header {
            if raw.trim_end() != HEADER {
                return Err(DbError::Format { line, message: format!("expected header `{}`", HEADER.replace('\t', " ")) });
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 8 {
            return Err(DbError::Format { line, message: format!("expected 8 columns, found {}", cols.len()) });
        }
        let cwe_id = canonical_id(cols[0]).ok_or_else(|| DbError::Format { line, message: format!("`{}` is not a CWE id", cols[0]) })?;
        let entry = CweEntry {
            cwe_id,
            description: cols[1].trim().to_string(),
            bus: yes_no(cols[2], line, "BUS")?,
            ip: yes_no(cols[3], line, "IP")?,
            sync: enum_col(cols[4], line, Timing::parse_token, Timing::COLUMN)?,
            violation_type: enum_col(cols[5], line, ViolationType::parse_token, ViolationType::COLUMN)?,
            misc: parse_misc(cols[6]).map_err(|message| DbError::Format { line, message })?,
            provenance: enum_col(cols[7], line, Provenance::parse_token, Provenance::COLUMN)?,
        };
        db.push(entry)?;
    }
    if !saw_header {
        return Err(DbError::Format { line: 1, message: "missing header".into() });
    }
    Ok(db)
}

fn yes_no(token: &str, line: usize, column: &'static str) -> Result<bool, DbError> {
    match token.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" => Ok(true),
        "no" | "n" => Ok(false),
        _ => Err(DbError::Enum { line, column, token: token.into() }),
    }
}

fn enum_col<T>(token: &str, line: usize, parse: fn(&str) -> Option<T>, column: &'static str) -> Result<T, DbError> {
    parse(token).ok_or_else(|| DbError::Enum { line, column, token: token.into() })
}

pub fn parse_misc(text: &str) -> Result<Misc, String> {
    let mut misc = Misc::new();
    for item in text.split(';').map(str::trim).filter(|s| !s.is_empty() && *s != "-") {
        let (k, v) = item.split_once('=').ok_or_else(|| format!("misc item `{item}` lacks `=`"))?;
        let values: Vec<String> = v.split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        if misc.insert(k.trim().to_string(), values).is_some() {
            return Err(format!("misc key `{}` repeated", k.trim()));
        }
    }
    Ok(misc)
}

pub fn format_misc(misc: &Misc) -> String {
    if misc.is_empty() {
        return "-".into();
    }
    misc.iter().map(|(k, vs)| format!("{k}={}", vs.join("|"))).collect::<Vec<_>>().join(";")
}

pub fn render_db(db: &Db) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for e in db.entries() {
        let yn = |b: bool| if b { "yes" } else { "no" };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.cwe_id,
            e.description,
            yn(e.bus),
            yn(e.ip),
            e.sync,
            e.violation_type,
            format_misc(&e.misc),
            e.provenance
        ));
    }
    out
}

pub fn save_db(db: &Db, path: &Path) -> Result<(), DbError> {
    std::fs::write(path, render_db(db)).map_err(|source| DbError::Io { path: path.display().to_string(), source })
}
