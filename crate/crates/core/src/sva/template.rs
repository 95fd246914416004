use super::{Action, AssertTarget, AssertionUnit, ClockSpec, Edge, ImplicationOp, PropertyExpr, SeqElem, Severity, SvaError};
use crate::cwe_db::{CweEntry, ViolationType};
use crate::expr::parse_expr;
use crate::spec_model::{IpBlock, SocSpec};

fn segments(name: &str) -> Vec<String> {
    name.to_ascii_lowercase().split('_').map(String::from).collect()
}

/// First port of `ip` (or bus signal) whose name has one of `keys` as a segment.
fn find_signal(spec: &SocSpec, ip: Option<&IpBlock>, keys: &[&str]) -> Option<(String, u32)> {
    let hit = |n: &str| segments(n).iter().any(|s| keys.contains(&s.as_str()));
    if let Some(p) = ip.and_then(|ip| ip.ports.iter().find(|p| hit(&p.name))) {
        return Some((p.name.clone(), p.width));
    }
    let from_any_ip = spec.ips.iter().flat_map(|i| &i.ports).find(|p| hit(&p.name));
    if let Some(p) = from_any_ip {
        return Some((p.name.clone(), p.width));
    }
    spec.bus_interface.signal_names.iter().find(|s| hit(s)).map(|s| (s.clone(), 32))
}

fn pick_ip<'a>(entry: &CweEntry, ip: Option<&'a IpBlock>, spec: &'a SocSpec) -> Result<&'a IpBlock, SvaError> {
    if let Some(ip) = ip {
        return Ok(ip);
    }
    let by_type = spec.ips.iter().find(|i| entry.ip_types().iter().any(|t| t.eq_ignore_ascii_case(&i.operation)));
    by_type.or_else(|| spec.slaves().next()).ok_or_else(|| SvaError::TemplateBinding("a target IP".into()))
}

fn expr(text: &str) -> Result<crate::expr::Expr, SvaError> {
    parse_expr(text).map_err(|e| SvaError::TemplateBinding(format!("a valid expression ({e})")))
}

/// Offline assertion for `entry` following the pattern of its violation type.
pub fn instantiate_template(entry: &CweEntry, ip: Option<&IpBlock>, spec: &SocSpec) -> Result<AssertionUnit, SvaError> {
    let slug = entry.cwe_id.to_ascii_lowercase().replace('-', "_");
    let clock = find_signal(spec, ip, &["clk", "clock"]).map_or("clk".to_string(), |s| s.0);
    let reset = find_signal(spec, ip, &["rst", "reset"]).map_or("rst".to_string(), |s| s.0);
    let (antecedent, consequent, message) = match entry.violation_type {
        ViolationType::AccessControl => {
            let ip = pick_ip(entry, ip, spec)?;
            let start = find_signal(spec, Some(ip), &["start", "req", "stb", "valid"]).map_or("start".into(), |s| s.0);
            let (addr, width) = find_signal(spec, Some(ip), &["adr", "addr", "address"]).unwrap_or(("addr".into(), 32));
            let range = ip.protected_range.unwrap_or(ip.address_range);
            let digits = width.max(32).div_ceil(4) as usize;
            let w = width.max(32);
            (
                format!("$rose({start})"),
                format!("({addr} >= {w}'h{:0digits$X} && {addr} <= {w}'h{:0digits$X})", range.low, range.high),
                format!("{}: access outside the protected range of {}", entry.cwe_id, ip.key()),
            )
        }
        ViolationType::InformationFlow => {
            let ip = pick_ip(entry, ip, spec)?;
            let start = find_signal(spec, Some(ip), &["start", "req", "valid"]).map_or("start".into(), |s| s.0);
            let (key, width) = find_signal(spec, Some(ip), &["key"]).unwrap_or(("key".into(), 128));
            (
                format!("$rose({start})"),
                format!("({key} != {width}'h0)"),
                format!("{}: key has been left at a default value", entry.cwe_id),
            )
        }
        ViolationType::Liveness => {
            let mut parties: Vec<&IpBlock> = spec.slaves().collect();
            if parties.len() < 2 {
                parties = spec.ips.iter().collect();
            }
            let names: Vec<String> = parties.iter().take(2).map(|i| format!("{}_access", i.key().replace(|c: char| !c.is_ascii_alphanumeric(), "_"))).collect();
            let (a, b) = match names.as_slice() {
                [a, b] => (a.clone(), b.clone()),
                _ => ("Slave_A_access".to_string(), "Slave_B_access".to_string()),
            };
            (format!("(!{reset})"), format!("!({a} && {b})"), format!("{}: violation of no race condition rule", entry.cwe_id))
        }
        ViolationType::Toctou => {
            let ip = pick_ip(entry, ip, spec)?;
            let release = find_signal(spec, Some(ip), &["release", "ready", "done"]).map_or("release".into(), |s| s.0);
            let (data, width) = find_signal(spec, Some(ip), &["dat", "data", "register"]).unwrap_or(("sensitive_register".into(), 32));
            (
                format!("({release} && !{reset})"),
                format!("({data} === {width}'b0)"),
                format!("{}: violation of sensitive register clear rule", entry.cwe_id),
            )
        }
        other => return Err(SvaError::NoTemplate(other.as_str().into())),
    };
    Ok(AssertionUnit {
        module_name: None,
        ports: Vec::new(),
        preamble: Vec::new(),
        clocking: Some(ClockSpec { edge: Edge::Posedge, signal: clock, block: None }),
        disable_expr: None,
        property_name: format!("p_{slug}"),
        property_body: PropertyExpr::Implication {
            antecedent: vec![SeqElem::new(expr(&antecedent)?)],
            op: ImplicationOp::Overlapped,
            consequent: vec![SeqElem::new(expr(&consequent)?)],
        },
        assert_label: format!("a_{slug}"),
        assert_target: AssertTarget::Named(format!("p_{slug}")),
        action: Some(Action { severity: Severity::Error, message: Some(message) }),
    })
}
