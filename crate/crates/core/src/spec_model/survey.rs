//! Questionnaire path: a tabular survey template plus ordered answers
//! produce the same document `parse_spec` accepts.
//!
//! Template rows are `id  prompt  field  parser  required`. Rows whose id
//! starts with `ip.` are instantiated once per itemized master and slave
//! (`master1.name`, `slave2.operation`, ...); `{role}` and `{n}` in the
//! prompt are substituted.

use std::collections::BTreeMap;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{parse_address, spec_from_value, AddressRange, Port, Role, SocSpec, SpecError};

const BUILTIN: &str = include_str!("../../data/survey_template.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SurveyError {
    #[error("missing answer for required question `{0}`")]
    MissingAnswer(String),
    #[error("cannot parse answer to `{id}`: {message}")]
    Unparseable { id: String, message: String },
    #[error("answer given for unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("survey template line {line}: {message}")]
    Template { line: usize, message: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    Text,
    Count,
    Address,
    Range,
    SignalList,
    Ports,
}

impl AnswerKind {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "text" => AnswerKind::Text,
            "count" => AnswerKind::Count,
            "address" => AnswerKind::Address,
            "range" => AnswerKind::Range,
            "signal_list" => AnswerKind::SignalList,
            "ports" => AnswerKind::Ports,
            _ => return None,
        })
    }

    /// Validates an answer and returns its normalized document form.
    pub fn check(self, answer: &str) -> Result<String, String> {
        let a = answer.trim();
        match self {
            AnswerKind::Text if a.is_empty() => Err("empty answer".into()),
            AnswerKind::Text => Ok(a.to_string()),
            AnswerKind::Count => a.parse::<u32>().map(|n| n.to_string()).map_err(|_| format!("`{a}` is not a count")),
            AnswerKind::Address => parse_address(a).map(|v| format!("{v:08X}")),
            AnswerKind::Range => AddressRange::parse(a).map(|r| r.format(if a.contains(':') { ':' } else { '-' })),
            AnswerKind::SignalList => {
                let items: Vec<&str> = a.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                if items.is_empty() {
                    return Err("empty signal list".into());
                }
                for (i, s) in items.iter().enumerate() {
                    let elision = *s == "..." && i + 1 == items.len();
                    if !elision && !super::is_identifier(s) {
                        return Err(format!("`{s}` is not an identifier"));
                    }
                }
                Ok(items.join(","))
            }
            AnswerKind::Ports => {
                let ports = a
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Port::parse)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ports.iter().map(Port::to_string).collect::<Vec<_>>().join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyQuestion {
    pub id: String,
    pub prompt: String,
    /// `Section.KEY`; the section is `IP` for per-IP rows.
    pub field: String,
    pub kind: AnswerKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyTemplate {
    pub questions: Vec<SurveyQuestion>,
}

impl SurveyTemplate {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("shipped survey template is valid")
    }

    pub fn parse(text: &str) -> Result<Self, SurveyError> {
        let mut questions = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("id\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let err = |message: &str| SurveyError::Template { line: line_no, message: message.into() };
            let [id, prompt, field, parser, required] = cols[..] else {
                return Err(err("expected 5 tab-separated columns"));
            };
            let kind = AnswerKind::from_name(parser).ok_or_else(|| err("unknown parser"))?;
            let required = match required {
                "yes" => true,
                "no" => false,
                _ => return Err(err("required must be yes or no")),
            };
            if !field.contains('.') {
                return Err(err("field must be Section.KEY"));
            }
            questions.push(SurveyQuestion { id: id.into(), prompt: prompt.into(), field: field.into(), kind, required });
        }
        Ok(SurveyTemplate { questions })
    }

    /// Concrete question list given the answers collected so far. Per-IP
    /// questions appear once the itemized counts are answerable.
    pub fn expand(&self, answers: &BTreeMap<String, String>) -> Vec<SurveyQuestion> {
        let count = |id: &str| answers.get(id).and_then(|a| a.trim().parse::<u32>().ok());
        let masters = count("soc.itemized_masters").or_else(|| count("soc.num_masters"));
        let slaves = count("soc.itemized_slaves").or_else(|| count("soc.num_slaves"));
        let global: Vec<&SurveyQuestion> = self.questions.iter().filter(|q| !q.id.starts_with("ip.")).collect();
        let per_ip: Vec<&SurveyQuestion> = self.questions.iter().filter(|q| q.id.starts_with("ip.")).collect();
        let mut out: Vec<SurveyQuestion> = global.into_iter().cloned().collect();
        for (role, n) in [(Role::Master, masters.unwrap_or(0)), (Role::Slave, slaves.unwrap_or(0))] {
            for i in 1..=n {
                for q in &per_ip {
                    let suffix = &q.id["ip.".len()..];
                    out.push(SurveyQuestion {
                        id: format!("{}{i}.{suffix}", role.as_str()),
                        prompt: q.prompt.replace("{role}", role.as_str()).replace("{n}", &i.to_string()),
                        field: q.field.clone(),
                        kind: q.kind,
                        required: q.required,
                    });
                }
            }
        }
        out
    }
}

/// Builds a spec from answers using the shipped template.
pub fn survey_to_spec(answers: &[(String, String)]) -> Result<SocSpec, SurveyError> {
    SurveyTemplate::builtin().to_spec(answers)
}

impl SurveyTemplate {
    pub fn to_spec(&self, answers: &[(String, String)]) -> Result<SocSpec, SurveyError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (id, answer) in answers {
            map.entry(id.clone()).or_insert_with(|| answer.clone());
        }
        // counts first so per-IP questions can be expanded
        let questions = self.expand(&map);
        if let Some(unknown) = answers.iter().find(|(id, _)| !questions.iter().any(|q| &q.id == id)) {
            return Err(SurveyError::UnknownQuestion(unknown.0.clone()));
        }

        let mut root = Map::new();
        for q in &questions {
            let raw = map.get(&q.id).map(|s| s.trim()).filter(|s| !s.is_empty());
            let Some(raw) = raw else {
                if q.required {
                    return Err(SurveyError::MissingAnswer(q.id.clone()));
                }
                continue;
            };
            let value = q.kind.check(raw).map_err(|message| SurveyError::Unparseable { id: q.id.clone(), message })?;
            let (section, key) = q.field.split_once('.').expect("validated at template load");
            let section = if section == "IP" {
                let (prefix, _) = q.id.split_once('.').expect("expanded ids carry a prefix");
                let (role, n) = prefix.split_at(prefix.find(|c: char| c.is_ascii_digit()).unwrap_or(prefix.len()));
                let role = if role == "master" { Role::Master } else { Role::Slave };
                format!("{}{n}", role.section_prefix())
            } else if section == "-" {
                continue;
            } else {
                section.to_string()
            };
            let entry = root.entry(section).or_insert_with(|| Value::Object(Map::new()));
            entry.as_object_mut().expect("sections are objects").insert(key.to_string(), Value::String(value));
        }
        Ok(spec_from_value(&Value::Object(root))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_answers_name_first_required_question() {
        let first = SurveyTemplate::builtin().questions.into_iter().find(|q| q.required).unwrap();
        assert_eq!(survey_to_spec(&[]), Err(SurveyError::MissingAnswer(first.id)));
    }

    #[test]
    fn range_answer_is_parsed() {
        assert_eq!(AnswerKind::Range.check("93000000-93FFFFFF").unwrap(), "93000000-93FFFFFF");
        assert!(AnswerKind::Range.check("93FFFFFF-93000000").is_err());
        assert!(AnswerKind::Count.check("many").is_err());
    }

    #[test]
    fn unknown_question_rejected() {
        let err = survey_to_spec(&a(&[("soc.colour", "blue")])).unwrap_err();
        assert_eq!(err, SurveyError::UnknownQuestion("soc.colour".into()));
    }
}
