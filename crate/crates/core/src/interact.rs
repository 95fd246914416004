//! Line-oriented prompts for the two points where a person supplies input:
//! describing the SoC and choosing enforcement actions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::pipeline::{ActionPrompter, PendingAction};
use crate::policy::parse_action;
use crate::spec_model::{serialize_spec, SocSpec, SurveyError, SurveyTemplate};

#[derive(Debug, Error)]
pub enum InteractError {
    #[error("input ended while waiting for `{0}`")]
    Eof(String),
    #[error("terminal I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

fn read_answer(input: &mut dyn BufRead, waiting_for: &str) -> Result<String, InteractError> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(InteractError::Eof(waiting_for.to_string()));
    }
    Ok(line.trim().to_string())
}

/// Walks the survey, reprompting on invalid answers, and writes the
/// resulting spec to `out_path`. Nothing is written if input ends early.
pub fn prompt_survey(
    template: &SurveyTemplate,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    out_path: &Path,
) -> Result<SocSpec, InteractError> {
    let mut answers: Vec<(String, String)> = Vec::new();
    let mut by_id: BTreeMap<String, String> = BTreeMap::new();
    let mut asked: BTreeSet<String> = BTreeSet::new();
    loop {
        let questions = template.expand(&by_id);
        let Some(q) = questions.into_iter().find(|q| !asked.contains(&q.id)) else { break };
        loop {
            let hint = if q.required { "" } else { " [optional]" };
            write!(output, "{}{hint}\n> ", q.prompt)?;
            output.flush()?;
            let answer = read_answer(input, &q.id)?;
            if answer.is_empty() {
                if q.required {
                    writeln!(output, "An answer is required.")?;
                    continue;
                }
                break;
            }
            match q.kind.check(&answer) {
                Ok(_) => {
                    by_id.insert(q.id.clone(), answer.clone());
                    answers.push((q.id.clone(), answer));
                    break;
                }
                Err(message) => writeln!(output, "Invalid answer: {message}")?,
            }
        }
        asked.insert(q.id);
    }
    let spec = template.to_spec(&answers)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| InteractError::Write { path: parent.display().to_string(), source })?;
    }
    std::fs::write(out_path, serialize_spec(&spec))
        .map_err(|source| InteractError::Write { path: out_path.display().to_string(), source })?;
    writeln!(output, "Wrote {}", out_path.display())?;
    Ok(spec)
}

/// Asks for one action per pending assertion. An empty answer takes the
/// offered default; an unparseable one is reported and asked again.
pub fn prompt_actions(
    pending: &[PendingAction],
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<Vec<String>, InteractError> {
    let mut out = Vec::with_capacity(pending.len());
    for p in pending {
        writeln!(output, "{} ({}): {}", p.cwe_id, p.assert_label, p.predicate)?;
        loop {
            write!(output, "action [{}]> ", p.default_action)?;
            output.flush()?;
            let answer = read_answer(input, &p.cwe_id)?;
            if answer.is_empty() {
                out.push(p.default_action.clone());
                break;
            }
            match parse_action(&answer) {
                Ok(_) => {
                    out.push(answer);
                    break;
                }
                Err(e) => writeln!(output, "Cannot use that action: {e}")?,
            }
        }
    }
    Ok(out)
}

/// [`prompt_actions`] over a pair of streams, usable as a pipeline prompter.
pub struct TerminalPrompter<R, W> {
    pub input: R,
    pub output: W,
}

impl<R: BufRead, W: Write> ActionPrompter for TerminalPrompter<R, W> {
    fn choose(&mut self, pending: &[PendingAction]) -> Result<Vec<String>, String> {
        prompt_actions(pending, &mut self.input, &mut self.output).map_err(|e| e.to_string())
    }

    fn describe(&self) -> String {
        "interactive".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_model::{load_spec, parse_spec};

    fn pending() -> PendingAction {
        PendingAction {
            cwe_id: "CWE-284".into(),
            assert_label: "a_p".into(),
            predicate: "x".into(),
            default_action: "wb_adr_i = 32'h0;".into(),
        }
    }

    #[test]
    fn listing_action_is_accepted() {
        let mut out = Vec::new();
        let got = prompt_actions(&[pending()], &mut "slave['SPI'].w_data = 32'h0;\n".as_bytes(), &mut out).unwrap();
        assert_eq!(got, ["slave['SPI'].w_data = 32'h0;"]);
    }

    #[test]
    fn garbage_reprompts_with_diagnostic() {
        let mut out = Vec::new();
        let got = prompt_actions(&[pending()], &mut "garbage\nx = 1'b0;\n".as_bytes(), &mut out).unwrap();
        assert_eq!(got, ["x = 1'b0;"]);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.matches("action [").count(), 2);
        assert!(text.contains("Cannot use that action"));
    }

    #[test]
    fn empty_answer_takes_default() {
        let mut out = Vec::new();
        assert_eq!(prompt_actions(&[pending()], &mut "\n".as_bytes(), &mut out).unwrap(), ["wb_adr_i = 32'h0;"]);
    }

    #[test]
    fn eof_aborts_actions() {
        let mut out = Vec::new();
        assert!(matches!(prompt_actions(&[pending()], &mut "".as_bytes(), &mut out), Err(InteractError::Eof(_))));
    }

    const TWO_IP: &str = "Demo\n\n\nAXI4\n1\n1\n\n\nMaster/Slave\n5\nAWVALID,AWADDR\n\
        cpu\n\n\nProcessor\n00000000-0FFFFFFF\n00000000\n\n\n\
        uart\n\n\nPeripheral\n10000000-1000FFFF\n10000000\n10000000:1000000F\ninput clk, input [7:0] tx_data\n";

    #[test]
    fn scripted_two_ip_session() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        let mut out = Vec::new();
        let spec = prompt_survey(&SurveyTemplate::builtin(), &mut TWO_IP.as_bytes(), &mut out, &path).unwrap();
        assert_eq!(spec.ips.len(), 2);
        assert_eq!(load_spec(&path).unwrap(), spec);
    }

    #[test]
    fn invalid_answers_reprompt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        let script = TWO_IP.replacen("AXI4\n1\n", "AXI4\nmany\n1\n", 1);
        let mut out = Vec::new();
        prompt_survey(&SurveyTemplate::builtin(), &mut script.as_bytes(), &mut out, &path).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("Invalid answer"));
    }

    #[test]
    fn immediate_eof_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        let mut out = Vec::new();
        let err = prompt_survey(&SurveyTemplate::builtin(), &mut "".as_bytes(), &mut out, &path).unwrap_err();
        assert!(matches!(err, InteractError::Eof(_)));
        assert!(!path.exists());
    }

    #[test]
    fn listing_answers_reproduce_the_fixture() {
        let fixture = parse_spec(include_str!("../../../fixtures/specs/mit_cep_survey.json")).unwrap();
        let script = [
            "MIT-CEP", "Open-source", "Academic Research", "AXI4", "1", "11", "", "1",
            "Master/Slave", "17", "AWVALID,AWADDR,WDATA,ARREADY,RDATA,...",
            "mor1kx", "", "OPen RISC-V", "Processor", "90000000-99000000", "90000000", "9100001F:9100002D", "",
            "Advanced Encryption Standard", "AES", "Open-source", "Crypto", "93000000-93FFFFFF", "93000000", "93000014:9300003C", "",
        ]
        .join("\n")
            + "\n";
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let spec = prompt_survey(&SurveyTemplate::builtin(), &mut script.as_bytes(), &mut out, &dir.path().join("s.json")).unwrap();
        assert_eq!(serialize_spec(&spec), serialize_spec(&fixture));

        // with the per-IP port lists as well, the result is the MIT-CEP fixture
        let mit = parse_spec(include_str!("../../../fixtures/specs/mit_cep.json")).unwrap();
        let ports: Vec<String> = mit.ips.iter().map(|ip| ip.ports.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")).collect();
        let mut lines: Vec<String> = script.lines().map(String::from).collect();
        lines[18] = ports[0].clone();
        lines[26] = ports[1].clone();
        let script = lines.join("\n") + "\n";
        let spec = prompt_survey(&SurveyTemplate::builtin(), &mut script.as_bytes(), &mut out, &dir.path().join("m.json")).unwrap();
        assert_eq!(spec.ips, mit.ips);
        assert_eq!(spec.bus_interface, mit.bus_interface);
        assert_eq!((spec.name.as_str(), spec.num_masters, spec.num_slaves), (mit.name.as_str(), mit.num_masters, mit.num_slaves));
    }
}
