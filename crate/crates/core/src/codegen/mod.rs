//! Security policies to synthesizable Verilog.
//!
//! Bus-level policies go into one central `security_module`; IP-level
//! policies go into a wrapper around the IP's top module. Qualified policy
//! references such as `slave['SPI'].w_data` become flat identifiers
//! (`slave_SPI_w_data`), recorded in a signal map.

mod verilog;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use verilog::{validate_rtl, validate_verilog, FindingKind, RtlFinding};

use crate::cwe_db::id_number;
use crate::expr::{literal_width, Expr, UnaryOp};
use crate::policy::{conjoin, EdgeSignal, Placement, PredicateAtom, SecurityPolicy, SignalRef};
use crate::spec_model::{IpBlock, Port, PortDirection, SocSpec};
use crate::sva::Edge;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("unresolved signal `{0}`")]
    UnresolvedSignal(String),
    #[error("port `{port}` is not a port of {ip}")]
    UnknownPort { ip: String, port: String },
    #[error("port direction conflict on `{0}`")]
    PortConflict(String),
    #[error("policy {policy} is not placed at {expected}")]
    Placement { policy: String, expected: String },
    #[error("unsupported construct in policy {policy}: {message}")]
    Unsupported { policy: String, message: String },
    #[error("cannot write RTL: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    CentralModule,
    IpWrapper(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlPort {
    pub direction: PortDirection,
    pub width: u32,
    pub name: String,
    /// Driven from an always block.
    pub is_reg: bool,
}

/// Row of `signal_map.tsv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalMapping {
    pub module: String,
    pub verilog_name: String,
    pub reference: String,
    pub ip: Option<String>,
    pub signal: String,
    pub width: u32,
    pub usage: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlArtifact {
    pub kind: ArtifactKind,
    pub module_name: String,
    pub header: Vec<String>,
    pub port_list: Vec<RtlPort>,
    pub body: String,
    pub policies_included: Vec<String>,
    pub signal_map: Vec<SignalMapping>,
    pub warnings: Vec<String>,
}

fn range(width: u32) -> String {
    if width > 1 {
        format!("[{}:0] ", width - 1)
    } else {
        String::new()
    }
}

fn zero(width: u32) -> String {
    if width > 1 {
        format!("{width}'h0")
    } else {
        "1'b0".into()
    }
}

impl RtlArtifact {
    pub fn file_name(&self) -> String {
        format!("{}.v", self.module_name)
    }

    pub fn to_verilog(&self) -> String {
        let mut out = String::new();
        for line in &self.header {
            let _ = writeln!(out, "// {line}");
        }
        let _ = writeln!(out, "module {} (", self.module_name);
        let ports: Vec<String> = self
            .port_list
            .iter()
            .map(|p| {
                let kind = if p.is_reg { "reg" } else { "wire" };
                format!("    {} {kind} {}{}", p.direction.as_str(), range(p.width), p.name)
            })
            .collect();
        if !ports.is_empty() {
            out.push_str(&ports.join(",\n"));
            out.push('\n');
        }
        out.push_str(");\n");
        out.push_str(&self.body);
        out.push_str("endmodule\n");
        out
    }
}

// ---- signal resolution -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
struct Sig {
    name: String,
    width: u32,
    reference: String,
    ip: Option<String>,
    signal: String,
    /// Direction on the wrapped IP; central signals have none.
    direction: Option<PortDirection>,
}

fn sanitize(text: &str) -> String {
    text.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

/// Width assumed for bus signals, which the spec lists without widths.
fn bus_signal_width(name: &str) -> u32 {
    let key = name.to_ascii_lowercase().replace('_', "");
    if ["valid", "ready", "last"].iter().any(|s| key.ends_with(s)) {
        1
    } else {
        32
    }
}

trait Scope {
    fn module(&self) -> &str;
    fn resolve(&self, r: &SignalRef) -> Result<Sig, CodegenError>;
    /// Name used when the signal is read while some policy overrides it.
    fn read_alias(&self, sig: &Sig) -> String;
    fn write_alias(&self, sig: &Sig) -> String;
    fn clock(&self, requested: Option<&EdgeSignal>) -> Result<EdgeSignal, CodegenError>;
    fn reset(&self, requested: &EdgeSignal) -> Result<EdgeSignal, CodegenError>;
}

struct CentralScope<'a> {
    spec: &'a SocSpec,
    /// Clock and reset names declared as plain module inputs.
    timing_names: BTreeSet<String>,
}

const DEFAULT_CLOCK: &str = "clk";
const DEFAULT_RESET: &str = "rst";

impl CentralScope<'_> {
    fn flat(&self, ip: &IpBlock, signal: &str, reference: String) -> Sig {
        let width = ip.port(signal).map(|p| p.width).unwrap_or_else(|| bus_signal_width(signal));
        Sig {
            name: format!("{}_{}_{}", ip.role.as_str(), sanitize(ip.key()), signal),
            width,
            reference,
            ip: Some(ip.key().to_string()),
            signal: signal.to_string(),
            direction: None,
        }
    }
}

impl Scope for CentralScope<'_> {
    fn module(&self) -> &str {
        "security_module"
    }

    fn resolve(&self, r: &SignalRef) -> Result<Sig, CodegenError> {
        let unresolved = || CodegenError::UnresolvedSignal(r.to_string());
        match r {
            SignalRef::Qualified { ip, signal, .. } => {
                let block = self.spec.find_ip(ip).ok_or_else(unresolved)?;
                if block.port(signal).is_none() && self.spec.bus_interface.find_signal(signal).is_none() {
                    return Err(unresolved());
                }
                Ok(self.flat(block, signal, r.to_string()))
            }
            SignalRef::Bare(name) if self.timing_names.contains(name) => Ok(Sig {
                name: name.clone(),
                width: 1,
                reference: name.clone(),
                ip: None,
                signal: name.clone(),
                direction: None,
            }),
            SignalRef::Bare(name) => {
                let owners: Vec<&IpBlock> = self.spec.ips.iter().filter(|ip| ip.port(name).is_some()).collect();
                if let [ip] = owners.as_slice() {
                    return Ok(self.flat(ip, name, name.clone()));
                }
                let bus = self.spec.bus_interface.find_signal(name).ok_or_else(unresolved)?;
                Ok(Sig {
                    name: bus.to_string(),
                    width: bus_signal_width(bus),
                    reference: name.clone(),
                    ip: None,
                    signal: bus.to_string(),
                    direction: None,
                })
            }
        }
    }

    fn read_alias(&self, sig: &Sig) -> String {
        format!("{}_in", sig.name)
    }

    fn write_alias(&self, sig: &Sig) -> String {
        sig.name.clone()
    }

    fn clock(&self, requested: Option<&EdgeSignal>) -> Result<EdgeSignal, CodegenError> {
        Ok(requested.cloned().unwrap_or(EdgeSignal { edge: Edge::Posedge, signal: DEFAULT_CLOCK.into() }))
    }

    fn reset(&self, requested: &EdgeSignal) -> Result<EdgeSignal, CodegenError> {
        Ok(requested.clone())
    }
}

struct WrapperScope<'a> {
    ip: &'a IpBlock,
    module: String,
    ports: &'a [Port],
}

impl WrapperScope<'_> {
    fn port(&self, name: &str) -> Result<&Port, CodegenError> {
        self.ports
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CodegenError::UnknownPort { ip: self.ip.key().to_string(), port: name.to_string() })
    }
}

impl Scope for WrapperScope<'_> {
    fn module(&self) -> &str {
        &self.module
    }

    fn resolve(&self, r: &SignalRef) -> Result<Sig, CodegenError> {
        if let Some(ip) = r.ip() {
            if !self.ip.matches_name(ip) {
                return Err(CodegenError::UnknownPort { ip: self.ip.key().to_string(), port: r.to_string() });
            }
        }
        let p = self.port(r.signal())?;
        Ok(Sig {
            name: p.name.clone(),
            width: p.width,
            reference: r.to_string(),
            ip: Some(self.ip.key().to_string()),
            signal: p.name.clone(),
            direction: Some(p.direction),
        })
    }

    fn read_alias(&self, sig: &Sig) -> String {
        match sig.direction {
            Some(PortDirection::Output) => format!("{}_inner", sig.name),
            _ => sig.name.clone(),
        }
    }

    fn write_alias(&self, sig: &Sig) -> String {
        match sig.direction {
            Some(PortDirection::Output) => sig.name.clone(),
            _ => format!("{}_gated", sig.name),
        }
    }

    fn clock(&self, requested: Option<&EdgeSignal>) -> Result<EdgeSignal, CodegenError> {
        if let Some(c) = requested {
            self.port(&c.signal)?;
            return Ok(c.clone());
        }
        let found = self.ports.iter().find(|p| {
            p.direction == PortDirection::Input
                && p.name.to_ascii_lowercase().split('_').any(|s| matches!(s, "clk" | "clock"))
        });
        found
            .map(|p| EdgeSignal { edge: Edge::Posedge, signal: p.name.clone() })
            .ok_or_else(|| CodegenError::UnknownPort { ip: self.ip.key().to_string(), port: "clock".into() })
    }

    fn reset(&self, requested: &EdgeSignal) -> Result<EdgeSignal, CodegenError> {
        self.port(&requested.signal)?;
        Ok(requested.clone())
    }
}

// ---- fragments ---------------------------------------------------------------

/// Enforcement logic of one policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub label: String,
    /// Local `wire`/`reg` declarations.
    pub declarations: Vec<String>,
    /// Clocked always block tracking delays and sampled values, if any.
    pub clocked: Vec<String>,
    pub guard: Expr,
    /// `(target, value)` pairs applied when the guard holds.
    pub assignments: Vec<(String, Expr)>,
    pub warnings: Vec<String>,
    observed: BTreeMap<String, Sig>,
    targets: BTreeMap<String, Sig>,
    clock: Option<EdgeSignal>,
    reset: Option<EdgeSignal>,
}

impl Fragment {
    /// The guarded assignment block.
    pub fn guarded_lines(&self) -> Vec<String> {
        let mut out = vec![format!("// {}", self.label), format!("if ({}) begin", self.guard)];
        out.extend(self.assignments.iter().map(|(t, v)| format!("    {t} = {v};")));
        out.push("end".into());
        out
    }

    pub fn text(&self) -> String {
        let mut lines = self.declarations.clone();
        lines.extend(self.clocked.iter().cloned());
        lines.extend(self.guarded_lines());
        lines.join("\n") + "\n"
    }
}

struct Lowerer<'a> {
    scope: &'a dyn Scope,
    overridden: &'a BTreeSet<String>,
    label: String,
    prefix: String,
    decls: Vec<String>,
    flops: Vec<(String, u32, Expr)>,
    observed: BTreeMap<String, Sig>,
    widths: BTreeMap<String, u32>,
    wires: usize,
}

impl Lowerer<'_> {
    fn unsupported(&self, message: String) -> CodegenError {
        CodegenError::Unsupported { policy: self.label.clone(), message }
    }

    fn read(&mut self, r: &SignalRef) -> Result<(Expr, u32), CodegenError> {
        let sig = self.scope.resolve(r)?;
        let name = if self.overridden.contains(&sig.name) { self.scope.read_alias(&sig) } else { sig.name.clone() };
        let width = sig.width;
        self.widths.insert(name.clone(), width);
        self.observed.entry(sig.name.clone()).or_insert(sig);
        Ok((Expr::Ident(name), width))
    }

    fn fresh(&mut self, stem: &str) -> String {
        let name = format!("{}{stem}{}", self.prefix, self.wires);
        self.wires += 1;
        name
    }

    fn flop(&mut self, width: u32, next: Expr) -> Expr {
        let name = self.fresh("d");
        self.decls.push(format!("reg {}{name};", range(width)));
        self.widths.insert(name.clone(), width);
        self.flops.push((name.clone(), width, next));
        Expr::Ident(name)
    }

    fn width_of(&self, e: &Expr) -> u32 {
        match e {
            Expr::Ident(n) => self.widths.get(n).copied().unwrap_or(32),
            Expr::Number(t) => literal_width(t).unwrap_or(32),
            Expr::Paren(x) => self.width_of(x),
            Expr::Unary(UnaryOp::Not, _) => 1,
            Expr::Binary(_, op, _) if matches!(op.as_str(), "&&" | "||" | "==" | "!=" | "<" | "<=" | ">" | ">=") => 1,
            _ => 32,
        }
    }

    fn lower(&mut self, e: &Expr) -> Result<Expr, CodegenError> {
        let b = |x: Expr| Box::new(x);
        Ok(match e {
            Expr::Ident(_) | Expr::Qualified { .. } => self.read(&SignalRef::from_expr(e).expect("signal expression"))?.0,
            Expr::Number(_) => e.clone(),
            Expr::Paren(x) => Expr::Paren(b(self.lower(x)?)),
            Expr::Unary(op, x) => Expr::Unary(*op, b(self.lower(x)?)),
            Expr::Binary(l, op, r) => {
                let (l, r) = (self.lower(l)?, self.lower(r)?);
                match op.as_str() {
                    "===" => Expr::Binary(b(l), "==".into(), b(r)),
                    "!==" => Expr::Binary(b(l), "!=".into(), b(r)),
                    "->" => Expr::Paren(b(Expr::Binary(
                        b(Expr::Unary(UnaryOp::Not, b(Expr::Paren(b(l))))),
                        "||".into(),
                        b(Expr::Paren(b(r))),
                    ))),
                    _ => Expr::Binary(b(l), op.clone(), b(r)),
                }
            }
            Expr::Ternary(c, t, f) => Expr::Ternary(b(self.lower(c)?), b(self.lower(t)?), b(self.lower(f)?)),
            Expr::Index(x, i) => Expr::Index(b(self.lower(x)?), b(self.lower(i)?)),
            Expr::Slice(x, h, l) => Expr::Slice(b(self.lower(x)?), b(self.lower(h)?), b(self.lower(l)?)),
            Expr::Concat(items) => Expr::Concat(items.iter().map(|x| self.lower(x)).collect::<Result<_, _>>()?),
            Expr::Replicate(n, items) => {
                Expr::Replicate(b(self.lower(n)?), items.iter().map(|x| self.lower(x)).collect::<Result<_, _>>()?)
            }
            Expr::SysCall(name, args) => self.sampled(name, args)?,
        })
    }

    /// Sampled-value functions become registers on the policy clock.
    fn sampled(&mut self, name: &str, args: &[Expr]) -> Result<Expr, CodegenError> {
        let b = |x: Expr| Box::new(x);
        let arg = match args {
            [a] => self.lower(a)?,
            [a, Expr::Number(n)] if name == "$past" => {
                let depth: u32 = n.parse().map_err(|_| self.unsupported(format!("$past depth `{n}`")))?;
                let x = self.lower(a)?;
                let w = self.width_of(&x);
                let mut cur = x;
                for _ in 0..depth.max(1) {
                    cur = self.flop(w, cur);
                }
                return Ok(cur);
            }
            _ => return Err(self.unsupported(format!("{name} with {} arguments", args.len()))),
        };
        match name {
            "$rose" | "$fell" => {
                let s = self.fresh("s");
                self.decls.push(format!("wire {s} = {arg};"));
                let past = self.flop(1, Expr::Ident(s.clone()));
                let now = Expr::Ident(s);
                Ok(Expr::Paren(b(if name == "$rose" {
                    Expr::Binary(b(now), "&&".into(), b(Expr::Unary(UnaryOp::Not, b(past))))
                } else {
                    Expr::Binary(b(Expr::Unary(UnaryOp::Not, b(now))), "&&".into(), b(past))
                })))
            }
            "$stable" | "$changed" => {
                let w = self.width_of(&arg);
                let past = self.flop(w, arg.clone());
                let op = if name == "$stable" { "==" } else { "!=" };
                Ok(Expr::Paren(b(Expr::Binary(b(Expr::Paren(b(arg))), op.into(), b(past)))))
            }
            "$past" => {
                let w = self.width_of(&arg);
                Ok(self.flop(w, arg))
            }
            other => Err(self.unsupported(format!("system function {other}"))),
        }
    }
}

fn policy_label(policy: &SecurityPolicy, index: usize) -> String {
    policy.source_cwe.clone().unwrap_or_else(|| format!("policy {index}"))
}

fn build_fragment(
    policy: &SecurityPolicy,
    index: usize,
    scope: &dyn Scope,
    overridden: &BTreeSet<String>,
) -> Result<Fragment, CodegenError> {
    let label = policy_label(policy, index);
    let mut lw = Lowerer {
        scope,
        overridden,
        label: label.clone(),
        prefix: format!("p{index}_"),
        decls: Vec::new(),
        flops: Vec::new(),
        observed: BTreeMap::new(),
        widths: BTreeMap::new(),
        wires: 0,
    };
    // one-hot shift register per delay marker: each stage latches the
    // antecedent so far and hands it on one cycle later
    let mut guard: Option<Expr> = None;
    let mut pending = 0;
    for atom in &policy.predicate {
        match atom {
            PredicateAtom::Delay(n) => pending = *n,
            PredicateAtom::Expression(e) => {
                let e = lw.lower(e)?;
                guard = Some(match guard {
                    None => e,
                    Some(mut track) => {
                        for _ in 0..pending {
                            let q = format!("{}q{}", lw.prefix, lw.wires);
                            lw.wires += 1;
                            lw.decls.push(format!("reg {q};"));
                            lw.flops.push((q.clone(), 1, track));
                            track = Expr::Ident(q);
                        }
                        conjoin(track, e)
                    }
                });
            }
        }
    }
    let guard = guard.ok_or_else(|| lw.unsupported("empty predicate".into()))?;
    let mut assignments = Vec::new();
    let mut targets = BTreeMap::new();
    let mut warnings = Vec::new();
    for a in &policy.action {
        let sig = scope.resolve(&a.target)?;
        let value = lw.lower(&a.value)?;
        if let Some(w) = match &a.value {
            Expr::Number(t) => literal_width(t),
            _ => None,
        } {
            if w != sig.width {
                warnings.push(format!("{label}: {w}-bit value assigned to {}-bit `{}`", sig.width, a.target));
            }
        }
        assignments.push((scope.write_alias(&sig), value));
        targets.insert(sig.name.clone(), sig);
    }
    let (mut clock, mut reset, mut clocked) = (None, None, Vec::new());
    if !lw.flops.is_empty() {
        let c = scope.clock(policy.timing.clock.as_ref())?;
        let r = policy.timing.reset.as_ref().map(|r| scope.reset(r)).transpose()?;
        clocked = clocked_block(&c, r.as_ref(), &lw.flops);
        clock = Some(c);
        reset = r;
    } else if let Some(c) = &policy.timing.clock {
        // purely combinational: the clock is not needed, but must still exist
        scope.clock(Some(c))?;
    }
    Ok(Fragment {
        label,
        declarations: lw.decls,
        clocked,
        guard,
        assignments,
        warnings,
        observed: lw.observed,
        targets,
        clock,
        reset,
    })
}

fn clocked_block(clock: &EdgeSignal, reset: Option<&EdgeSignal>, flops: &[(String, u32, Expr)]) -> Vec<String> {
    let mut sens = format!("{} {}", clock.edge.as_str(), clock.signal);
    let mut out = Vec::new();
    let updates: Vec<String> = flops.iter().map(|(q, _, next)| format!("{q} <= {next};")).collect();
    match reset {
        Some(r) => {
            let _ = write!(sens, " or {} {}", r.edge.as_str(), r.signal);
            out.push(format!("always @({sens}) begin"));
            let cond = if r.edge == Edge::Negedge { format!("!{}", r.signal) } else { r.signal.clone() };
            out.push(format!("    if ({cond}) begin"));
            out.extend(flops.iter().map(|(q, w, _)| format!("        {q} <= {};", zero(*w))));
            out.push("    end else begin".into());
            out.extend(updates.iter().map(|u| format!("        {u}")));
            out.push("    end".into());
        }
        None => {
            out.push(format!("always @({sens}) begin"));
            out.extend(updates.iter().map(|u| format!("    {u}")));
        }
    }
    out.push("end".into());
    out
}

/// Enforcement logic for one policy, using central-module naming.
pub fn policy_to_logic(policy: &SecurityPolicy, spec: &SocSpec) -> Result<Fragment, CodegenError> {
    let scope = CentralScope { spec, timing_names: timing_names(std::slice::from_ref(policy)) };
    let overridden = overridden_names(std::slice::from_ref(policy), &scope)?;
    build_fragment(policy, 0, &scope, &overridden)
}

fn timing_names(policies: &[SecurityPolicy]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for p in policies {
        names.extend(p.timing.clock.iter().chain(p.timing.reset.iter()).map(|e| e.signal.clone()));
    }
    names
}

fn overridden_names(policies: &[SecurityPolicy], scope: &dyn Scope) -> Result<BTreeSet<String>, CodegenError> {
    let mut out = BTreeSet::new();
    for p in policies {
        for a in &p.action {
            out.insert(scope.resolve(&a.target)?.name);
        }
    }
    Ok(out)
}

/// Application order: by CWE number, unlabelled policies last, ties stable.
fn ordered(policies: &[SecurityPolicy]) -> Vec<&SecurityPolicy> {
    let mut v: Vec<&SecurityPolicy> = policies.iter().collect();
    v.sort_by_key(|p| p.source_cwe.as_deref().map_or(u64::MAX, id_number));
    v
}

struct Assembly {
    fragments: Vec<Fragment>,
    overridden: BTreeMap<String, Sig>,
    observed: BTreeMap<String, Sig>,
    warnings: Vec<String>,
}

fn assemble(policies: &[&SecurityPolicy], scope: &dyn Scope) -> Result<Assembly, CodegenError> {
    let owned: Vec<SecurityPolicy> = policies.iter().map(|p| (*p).clone()).collect();
    let names = overridden_names(&owned, scope)?;
    let mut out = Assembly { fragments: Vec::new(), overridden: BTreeMap::new(), observed: BTreeMap::new(), warnings: Vec::new() };
    for (i, p) in policies.iter().enumerate() {
        let f = build_fragment(p, i, scope, &names)?;
        out.overridden.extend(f.targets.clone());
        out.observed.extend(f.observed.clone());
        out.warnings.extend(f.warnings.iter().cloned());
        out.fragments.push(f);
    }
    Ok(out)
}

fn comb_block(defaults: &[(String, String)], fragments: &[Fragment]) -> Vec<String> {
    if defaults.is_empty() {
        return Vec::new();
    }
    let mut out = vec!["always @(*) begin".to_string()];
    out.extend(defaults.iter().map(|(w, r)| format!("    {w} = {r};")));
    for f in fragments {
        out.extend(f.guarded_lines().into_iter().map(|l| format!("    {l}")));
    }
    out.push("end".into());
    out
}

fn indent_body(sections: Vec<Vec<String>>) -> String {
    let mut out = String::new();
    let non_empty: Vec<Vec<String>> = sections.into_iter().filter(|s| !s.is_empty()).collect();
    for (i, section) in non_empty.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for line in section {
            let _ = writeln!(out, "    {line}");
        }
    }
    out
}

fn mapping(module: &str, verilog_name: String, sig: &Sig, usage: &'static str) -> SignalMapping {
    SignalMapping {
        module: module.to_string(),
        verilog_name,
        reference: sig.reference.clone(),
        ip: sig.ip.clone(),
        signal: sig.signal.clone(),
        width: sig.width,
        usage,
    }
}

fn timing_mapping(module: &str, name: &str, usage: &'static str) -> SignalMapping {
    SignalMapping {
        module: module.into(),
        verilog_name: name.into(),
        reference: name.into(),
        ip: None,
        signal: name.into(),
        width: 1,
        usage,
    }
}

fn policies_included(policies: &[&SecurityPolicy]) -> Vec<String> {
    policies.iter().enumerate().map(|(i, p)| policy_label(p, i)).collect()
}

fn check_placement(policies: &[SecurityPolicy], expected: &Placement) -> Result<(), CodegenError> {
    for (i, p) in policies.iter().enumerate() {
        if p.placement.as_ref() != Some(expected) {
            let want = match expected {
                Placement::BusLevel => "bus level".to_string(),
                Placement::IpLevel(ip) => format!("IP level ({ip})"),
            };
            return Err(CodegenError::Placement { policy: policy_label(p, i), expected: want });
        }
    }
    Ok(())
}

/// The centralized bus-level enforcement module.
pub fn build_central_module(policies: &[SecurityPolicy], spec: &SocSpec) -> Result<RtlArtifact, CodegenError> {
    check_placement(policies, &Placement::BusLevel)?;
    let order = ordered(policies);
    let scope = CentralScope { spec, timing_names: timing_names(policies) };
    let asm = assemble(&order, &scope)?;
    let module = scope.module().to_string();

    let mut clocks: BTreeSet<String> = BTreeSet::new();
    let mut resets: BTreeSet<String> = BTreeSet::new();
    for p in policies {
        clocks.extend(p.timing.clock.iter().map(|c| c.signal.clone()));
        resets.extend(p.timing.reset.iter().map(|r| r.signal.clone()));
    }
    clocks.extend(asm.fragments.iter().filter_map(|f| f.clock.as_ref().map(|c| c.signal.clone())));
    if clocks.is_empty() {
        clocks.insert(DEFAULT_CLOCK.into());
    }
    if resets.is_empty() {
        resets.insert(DEFAULT_RESET.into());
    }
    for name in asm.overridden.keys() {
        if clocks.contains(name) || resets.contains(name) {
            return Err(CodegenError::PortConflict(name.clone()));
        }
    }

    let mut ports = Vec::new();
    let mut map = Vec::new();
    let input = |width: u32, name: String| RtlPort { direction: PortDirection::Input, width, name, is_reg: false };
    for c in &clocks {
        ports.push(input(1, c.clone()));
        map.push(timing_mapping(&module, c, "clock"));
    }
    for r in resets.iter().filter(|r| !clocks.contains(*r)) {
        ports.push(input(1, r.clone()));
        map.push(timing_mapping(&module, r, "reset"));
    }
    for (name, sig) in &asm.observed {
        if !asm.overridden.contains_key(name) && !clocks.contains(name) && !resets.contains(name) {
            ports.push(input(sig.width, name.clone()));
            map.push(mapping(&module, name.clone(), sig, "observed"));
        }
    }
    let mut defaults = Vec::new();
    for (name, sig) in &asm.overridden {
        let alias = scope.read_alias(sig);
        ports.push(input(sig.width, alias.clone()));
        ports.push(RtlPort { direction: PortDirection::Output, width: sig.width, name: name.clone(), is_reg: true });
        map.push(mapping(&module, alias.clone(), sig, "pass_through_in"));
        map.push(mapping(&module, name.clone(), sig, "overridden"));
        defaults.push((name.clone(), alias));
    }

    let decls: Vec<String> = asm.fragments.iter().flat_map(|f| f.declarations.iter().cloned()).collect();
    let mut sections = vec![decls];
    sections.extend(asm.fragments.iter().map(|f| f.clocked.clone()));
    sections.push(comb_block(&defaults, &asm.fragments));
    let included = policies_included(&order);
    let mut header = vec!["Centralized bus-level security policy enforcement.".to_string()];
    if !included.is_empty() {
        header.push(format!("Policies in application order: {}.", included.join(", ")));
        header.push("A signal overridden by several policies takes the value from the last matching policy.".into());
    }
    Ok(RtlArtifact {
        kind: ArtifactKind::CentralModule,
        module_name: module,
        header,
        port_list: ports,
        body: indent_body(sections),
        policies_included: included,
        signal_map: map,
        warnings: asm.warnings,
    })
}

/// A wrapper around `ip`'s top module that interposes IP-level policies on
/// the overridden ports and forwards everything else.
pub fn build_ip_wrapper(ip: &IpBlock, policies: &[SecurityPolicy], inner_ports: &[Port]) -> Result<RtlArtifact, CodegenError> {
    check_placement(policies, &Placement::IpLevel(ip.key().to_string()))?;
    let inner = sanitize(ip.key());
    let scope = WrapperScope { ip, module: format!("{inner}_wrapper"), ports: inner_ports };
    let order = ordered(policies);
    let asm = assemble(&order, &scope)?;
    let module = scope.module.clone();

    let mut ports = Vec::new();
    let mut map = Vec::new();
    let mut locals = Vec::new();
    let mut defaults = Vec::new();
    let mut connections = Vec::new();
    for p in inner_ports {
        let overridden = asm.overridden.get(&p.name);
        if overridden.is_some() && p.direction == PortDirection::Inout {
            return Err(CodegenError::PortConflict(p.name.clone()));
        }
        ports.push(RtlPort {
            direction: p.direction,
            width: p.width,
            name: p.name.clone(),
            is_reg: overridden.is_some() && p.direction == PortDirection::Output,
        });
        let connected = match overridden {
            Some(sig) if p.direction == PortDirection::Input => {
                let gated = scope.write_alias(sig);
                locals.push(format!("reg {}{gated};", range(p.width)));
                defaults.push((gated.clone(), p.name.clone()));
                map.push(mapping(&module, gated.clone(), sig, "overridden"));
                gated
            }
            Some(sig) => {
                let inner_out = scope.read_alias(sig);
                locals.push(format!("wire {}{inner_out};", range(p.width)));
                defaults.push((p.name.clone(), inner_out.clone()));
                map.push(mapping(&module, p.name.clone(), sig, "overridden"));
                inner_out
            }
            None => {
                if let Some(sig) = asm.observed.get(&p.name) {
                    map.push(mapping(&module, p.name.clone(), sig, "observed"));
                }
                p.name.clone()
            }
        };
        connections.push(format!(".{}({connected})", p.name));
    }
    locals.extend(asm.fragments.iter().flat_map(|f| f.declarations.iter().cloned()));
    let mut sections = vec![locals];
    sections.extend(asm.fragments.iter().map(|f| f.clocked.clone()));
    sections.push(comb_block(&defaults, &asm.fragments));
    let mut instance = vec![format!("{inner} u_{inner} (")];
    let n = connections.len();
    instance.extend(connections.into_iter().enumerate().map(|(i, c)| format!("    {c}{}", if i + 1 < n { "," } else { "" })));
    instance.push(");".into());
    sections.push(instance);

    let included = policies_included(&order);
    let mut header = vec![format!("Security policy wrapper for IP {}.", ip.key())];
    if !included.is_empty() {
        header.push(format!("Policies in application order: {}.", included.join(", ")));
        header.push("A port overridden by several policies takes the value from the last matching policy.".into());
    }
    Ok(RtlArtifact {
        kind: ArtifactKind::IpWrapper(ip.key().to_string()),
        module_name: module,
        header,
        port_list: ports,
        body: indent_body(sections),
        policies_included: included,
        signal_map: map,
        warnings: asm.warnings,
    })
}

/// The central module plus one wrapper per IP carrying IP-level policies.
pub fn generate_rtl(policies: &[SecurityPolicy], spec: &SocSpec) -> Result<Vec<RtlArtifact>, CodegenError> {
    let mut bus = Vec::new();
    let mut per_ip: BTreeMap<String, Vec<SecurityPolicy>> = BTreeMap::new();
    for (i, p) in policies.iter().enumerate() {
        match &p.placement {
            Some(Placement::BusLevel) => bus.push(p.clone()),
            Some(Placement::IpLevel(ip)) => per_ip.entry(ip.clone()).or_default().push(p.clone()),
            None => {
                return Err(CodegenError::Placement { policy: policy_label(p, i), expected: "a classified placement".into() })
            }
        }
    }
    let mut out = vec![build_central_module(&bus, spec)?];
    for (key, group) in per_ip {
        let ip = spec.find_ip(&key).ok_or_else(|| CodegenError::UnresolvedSignal(format!("IP {key}")))?;
        out.push(build_ip_wrapper(ip, &group, &ip.ports)?);
    }
    Ok(out)
}

pub fn render_signal_map(artifacts: &[RtlArtifact]) -> String {
    let mut out = String::from("module\tverilog_name\treference\tip\tsignal\twidth\tusage\n");
    for m in artifacts.iter().flat_map(|a| &a.signal_map) {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.module,
            m.verilog_name,
            m.reference,
            m.ip.as_deref().unwrap_or("-"),
            m.signal,
            m.width,
            m.usage
        );
    }
    out
}

/// Writes every artifact plus `signal_map.tsv` into `dir`.
pub fn write_rtl(dir: &Path, artifacts: &[RtlArtifact]) -> Result<Vec<PathBuf>, CodegenError> {
    let io = |e: std::io::Error| CodegenError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(a.file_name());
        std::fs::write(&path, a.to_verilog()).map_err(io)?;
        written.push(path);
    }
    let path = dir.join("signal_map.tsv");
    std::fs::write(&path, render_signal_map(artifacts)).map_err(io)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests;
