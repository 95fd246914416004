//! SoC design specification: data model, JSON ingestion and serialization.
//!
//! The document format is the flat JSON layout used by the reference SoC
//! description: a `SoC` section, a `BUS_INTERFACE` section, and one section
//! per IP keyed `MASTER_n` / `SLAVE_n`. Every scalar is a string. Keys the
//! model does not know are kept in `misc` maps and written back verbatim.

pub mod survey;

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

pub use survey::{survey_to_spec, AnswerKind, SurveyError, SurveyQuestion, SurveyTemplate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("address range error in IP `{ip}`: {message}")]
    Range { ip: String, message: String },
}

fn schema(key: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Schema { key: key.into(), message: message.into() }
}

/// Inclusive 32-bit address window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AddressRange {
    pub low: u32,
    pub high: u32,
}

impl AddressRange {
    pub fn new(low: u32, high: u32) -> Option<Self> {
        (low <= high).then_some(AddressRange { low, high })
    }

    pub fn contains(&self, addr: u32) -> bool {
        self.low <= addr && addr <= self.high
    }

    pub fn contains_range(&self, other: &AddressRange) -> bool {
        self.contains(other.low) && self.contains(other.high)
    }

    /// Accepts both `LOW-HIGH` and `LOW:HIGH`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let (lo, hi) = text
            .split_once('-')
            .or_else(|| text.split_once(':'))
            .ok_or_else(|| format!("`{text}` is not a LOW-HIGH or LOW:HIGH range"))?;
        let low = parse_address(lo)?;
        let high = parse_address(hi)?;
        AddressRange::new(low, high).ok_or_else(|| format!("range `{text}` has low > high"))
    }

    pub fn format(&self, sep: char) -> String {
        format!("{:08X}{sep}{:08X}", self.low, self.high)
    }
}

impl fmt::Display for AddressRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:08X}-0x{:08X}", self.low, self.high)
    }
}

/// Parses a hex address (optional `0x` prefix). Wider than 32 bits is rejected.
pub fn parse_address(text: &str) -> Result<u32, String> {
    let t = text.trim();
    let digits = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    let digits: String = digits.chars().filter(|c| *c != '_').collect();
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(format!("`{t}` is not a hexadecimal address"));
    }
    let significant = digits.trim_start_matches('0');
    if significant.len() > 8 {
        return Err(format!("address `{t}` is wider than 32 bits"));
    }
    u32::from_str_radix(if significant.is_empty() { "0" } else { significant }, 16)
        .map_err(|e| format!("`{t}`: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Master,
    Slave,
}

impl Role {
    pub fn section_prefix(self) -> &'static str {
        match self {
            Role::Master => "MASTER_",
            Role::Slave => "SLAVE_",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Master => "master",
            Role::Slave => "slave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortDirection {
    Input,
    Output,
    Inout,
}

impl PortDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            PortDirection::Input => "input",
            PortDirection::Output => "output",
            PortDirection::Inout => "inout",
        }
    }
}

/// One top-level port of an IP, e.g. `input [31:0] wb_adr_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Port {
    pub direction: PortDirection,
    pub width: u32,
    pub name: String,
}

impl Port {
    pub fn new(direction: PortDirection, width: u32, name: impl Into<String>) -> Self {
        Port { direction, width, name: name.into() }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut rest = text.trim();
        let (dir, tail) = rest.split_once(char::is_whitespace).ok_or_else(|| format!("bad port `{text}`"))?;
        let direction = match dir {
            "input" => PortDirection::Input,
            "output" => PortDirection::Output,
            "inout" => PortDirection::Inout,
            other => return Err(format!("unknown port direction `{other}`")),
        };
        rest = tail.trim();
        for kw in ["wire ", "reg ", "logic "] {
            if let Some(t) = rest.strip_prefix(kw) {
                rest = t.trim();
            }
        }
        let mut width = 1;
        if let Some(t) = rest.strip_prefix('[') {
            let (range, tail) = t.split_once(']').ok_or_else(|| format!("unclosed range in `{text}`"))?;
            let (msb, lsb) = range.split_once(':').ok_or_else(|| format!("bad range in `{text}`"))?;
            let msb: u32 = msb.trim().parse().map_err(|_| format!("bad msb in `{text}`"))?;
            let lsb: u32 = lsb.trim().parse().map_err(|_| format!("bad lsb in `{text}`"))?;
            if lsb > msb {
                return Err(format!("descending range expected in `{text}`"));
            }
            width = msb - lsb + 1;
            rest = tail.trim();
        }
        if rest.is_empty() || !is_identifier(rest) {
            return Err(format!("bad port name in `{text}`"));
        }
        Ok(Port { direction, width, name: rest.to_string() })
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width > 1 {
            write!(f, "{} [{}:0] {}", self.direction.as_str(), self.width - 1, self.name)
        } else {
            write!(f, "{} {}", self.direction.as_str(), self.name)
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BusInterface {
    pub interface_name: String,
    pub num_ports: u32,
    pub signal_names: Vec<String>,
    /// The source list ended with `...`: more signals exist than are named.
    pub elided: bool,
    pub misc: Map<String, Value>,
}

impl BusInterface {
    /// Case- and underscore-insensitive lookup (`aw_addr` matches `AWADDR`).
    pub fn find_signal(&self, name: &str) -> Option<&str> {
        let key = signal_key(name);
        self.signal_names.iter().find(|s| signal_key(s) == key).map(String::as_str)
    }
}

pub(crate) fn signal_key(name: &str) -> String {
    name.chars().filter(|c| *c != '_').flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpBlock {
    pub role: Role,
    pub name: String,
    pub abbreviation: Option<String>,
    pub description: String,
    pub operation: String,
    pub base_address: u32,
    pub address_range: AddressRange,
    pub protected_range: Option<AddressRange>,
    pub ports: Vec<Port>,
    pub misc: Map<String, Value>,
}

impl IpBlock {
    /// Short handle used in file names and placement tags.
    pub fn key(&self) -> &str {
        self.abbreviation.as_deref().unwrap_or(&self.name)
    }

    pub fn matches_name(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
            || self.abbreviation.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(name))
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let range_err = |message: String| SpecError::Range { ip: self.key().to_string(), message };
        if !self.address_range.contains(self.base_address) {
            return Err(range_err(format!(
                "base address 0x{:08X} outside address range {}",
                self.base_address, self.address_range
            )));
        }
        if let Some(p) = &self.protected_range {
            if !self.address_range.contains_range(p) {
                return Err(range_err(format!(
                    "protected range {p} not contained in address range {}",
                    self.address_range
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SocSpec {
    pub name: String,
    pub soc_type: String,
    pub usage: String,
    pub bus_protocol: String,
    pub num_masters: u32,
    pub num_slaves: u32,
    pub bus_interface: BusInterface,
    /// Masters first, then slaves, each in section-number order.
    pub ips: Vec<IpBlock>,
    /// Unknown keys inside the `SoC` section.
    pub soc_misc: Map<String, Value>,
    /// Unknown top-level keys.
    pub misc: Map<String, Value>,
}

impl SocSpec {
    pub fn masters(&self) -> impl Iterator<Item = &IpBlock> {
        self.ips.iter().filter(|ip| ip.role == Role::Master)
    }

    pub fn slaves(&self) -> impl Iterator<Item = &IpBlock> {
        self.ips.iter().filter(|ip| ip.role == Role::Slave)
    }

    pub fn find_ip(&self, name: &str) -> Option<&IpBlock> {
        self.ips.iter().find(|ip| ip.matches_name(name))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let masters = self.masters().count() as u32;
        let slaves = self.slaves().count() as u32;
        if masters > self.num_masters {
            return Err(schema("SoC.NO_OF_MASTERS", format!("declares {} but {masters} master sections exist", self.num_masters)));
        }
        if slaves > self.num_slaves {
            return Err(schema("SoC.NO_OF_SLAVES", format!("declares {} but {slaves} slave sections exist", self.num_slaves)));
        }
        if self.ips.windows(2).any(|w| w[0].role == Role::Slave && w[1].role == Role::Master) {
            return Err(schema("ips", "masters must precede slaves"));
        }
        if self.bus_interface.num_ports > 0 && self.bus_interface.signal_names.is_empty() {
            return Err(schema("BUS_INTERFACE.SIGNAL_NAMES", "required when NO_OF_PORTS > 0"));
        }
        for (i, ip) in self.ips.iter().enumerate() {
            if self.ips[..i].iter().any(|other| other.name == ip.name) {
                return Err(schema(format!("{}.NAME", ip.name), "duplicate IP name"));
            }
            ip.validate()?;
        }
        Ok(())
    }
}

/// Parses and validates a spec document.
pub fn parse_spec(text: &str) -> Result<SocSpec, SpecError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SpecError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    spec_from_value(&value)
}

pub fn load_spec(path: &std::path::Path) -> Result<SocSpec, SpecError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| schema(path.display().to_string(), format!("cannot read: {e}")))?;
    parse_spec(&text)
}

fn section<'v>(root: &'v Map<String, Value>, key: &str) -> Result<&'v Map<String, Value>, SpecError> {
    match root.get(key) {
        Some(Value::Object(m)) => Ok(m),
        Some(_) => Err(schema(key, "expected an object")),
        None => Err(schema(key, "missing required section")),
    }
}

fn string_field(sec: &Map<String, Value>, section: &str, key: &str) -> Result<Option<String>, SpecError> {
    match sec.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(schema(format!("{section}.{key}"), "expected a string value")),
    }
}

fn required(sec: &Map<String, Value>, section: &str, key: &str) -> Result<String, SpecError> {
    string_field(sec, section, key)?.ok_or_else(|| schema(format!("{section}.{key}"), "missing required key"))
}

fn count_field(sec: &Map<String, Value>, section: &str, key: &str) -> Result<u32, SpecError> {
    let raw = required(sec, section, key)?;
    raw.trim()
        .parse()
        .map_err(|_| schema(format!("{section}.{key}"), format!("`{raw}` is not a count")))
}

fn leftovers(sec: &Map<String, Value>, known: &[&str]) -> Map<String, Value> {
    sec.iter().filter(|(k, _)| !known.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()
}

const SOC_KEYS: &[&str] = &["NAME", "TYPE", "USAGE", "BUS", "NO_OF_MASTERS", "NO_OF_SLAVES"];
const BUS_KEYS: &[&str] = &["INTERFACE_NAME", "NO_OF_PORTS", "SIGNAL_NAMES"];
const IP_KEYS: &[&str] = &[
    "NAME",
    "ABBREVIATION",
    "TYPE",
    "OPERATION",
    "ADDRESS_RANGE",
    "BASE_ADDRESS",
    "PROTECTED_ADDRESS_RANGE",
    "PORTS",
];

pub(crate) fn spec_from_value(value: &Value) -> Result<SocSpec, SpecError> {
    let root = value.as_object().ok_or_else(|| schema("<root>", "expected a JSON object"))?;
    let soc = section(root, "SoC")?;
    let bus = section(root, "BUS_INTERFACE")?;

    let num_ports = count_field(bus, "BUS_INTERFACE", "NO_OF_PORTS")?;
    let (signal_names, elided) = match string_field(bus, "BUS_INTERFACE", "SIGNAL_NAMES")? {
        Some(s) => parse_signal_list(&s)?,
        None => (Vec::new(), false),
    };
    let bus_interface = BusInterface {
        interface_name: required(bus, "BUS_INTERFACE", "INTERFACE_NAME")?,
        num_ports,
        signal_names,
        elided,
        misc: leftovers(bus, BUS_KEYS),
    };

    let mut masters = Vec::new();
    let mut slaves = Vec::new();
    let mut misc = Map::new();
    for (key, val) in root {
        let role_num = [Role::Master, Role::Slave].into_iter().find_map(|role| {
            key.strip_prefix(role.section_prefix()).and_then(|n| n.parse::<u32>().ok()).map(|n| (role, n))
        });
        match role_num {
            Some((_, 0)) => return Err(schema(key.as_str(), "section numbers start at 1")),
            Some((role, n)) => {
                let sec = val.as_object().ok_or_else(|| schema(key.as_str(), "expected an object"))?;
                let ip = ip_from_section(key, role, sec)?;
                match role {
                    Role::Master => masters.push((n, ip)),
                    Role::Slave => slaves.push((n, ip)),
                }
            }
            None if key == "SoC" || key == "BUS_INTERFACE" => {}
            None => {
                misc.insert(key.clone(), val.clone());
            }
        }
    }
    let mut ips = Vec::new();
    for (role, mut group) in [(Role::Master, masters), (Role::Slave, slaves)] {
        group.sort_by_key(|(n, _)| *n);
        for (i, (n, ip)) in group.into_iter().enumerate() {
            if n as usize != i + 1 {
                return Err(schema(format!("{}{n}", role.section_prefix()), format!("expected {}{} (sections must be contiguous from 1)", role.section_prefix(), i + 1)));
            }
            ips.push(ip);
        }
    }

    let spec = SocSpec {
        name: required(soc, "SoC", "NAME")?,
        soc_type: string_field(soc, "SoC", "TYPE")?.unwrap_or_default(),
        usage: string_field(soc, "SoC", "USAGE")?.unwrap_or_default(),
        bus_protocol: required(soc, "SoC", "BUS")?,
        num_masters: count_field(soc, "SoC", "NO_OF_MASTERS")?,
        num_slaves: count_field(soc, "SoC", "NO_OF_SLAVES")?,
        bus_interface,
        ips,
        soc_misc: leftovers(soc, SOC_KEYS),
        misc,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_signal_list(raw: &str) -> Result<(Vec<String>, bool), SpecError> {
    let mut names = Vec::new();
    let mut elided = false;
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    for (i, item) in items.iter().enumerate() {
        if *item == "..." && i + 1 == items.len() {
            elided = true;
        } else if is_identifier(item) {
            names.push(item.to_string());
        } else {
            return Err(schema("BUS_INTERFACE.SIGNAL_NAMES", format!("`{item}` is not an identifier")));
        }
    }
    Ok((names, elided))
}

fn ip_from_section(key: &str, role: Role, sec: &Map<String, Value>) -> Result<IpBlock, SpecError> {
    let addr = |field: &str| -> Result<u32, SpecError> {
        parse_address(&required(sec, key, field)?).map_err(|m| schema(format!("{key}.{field}"), m))
    };
    let range = |field: &str, raw: String| -> Result<AddressRange, SpecError> {
        // low > high is an invariant violation rather than a format problem
        match AddressRange::parse(&raw) {
            Ok(r) => Ok(r),
            Err(m) if m.contains("low > high") => Err(SpecError::Range {
                ip: string_field(sec, key, "ABBREVIATION").ok().flatten().or_else(|| string_field(sec, key, "NAME").ok().flatten()).unwrap_or_else(|| key.to_string()),
                message: m,
            }),
            Err(m) => Err(schema(format!("{key}.{field}"), m)),
        }
    };
    let ports = match string_field(sec, key, "PORTS")? {
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|p| Port::parse(p).map_err(|m| schema(format!("{key}.PORTS"), m)))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let protected_range = match string_field(sec, key, "PROTECTED_ADDRESS_RANGE")? {
        Some(raw) => Some(range("PROTECTED_ADDRESS_RANGE", raw)?),
        None => None,
    };
    Ok(IpBlock {
        role,
        name: required(sec, key, "NAME")?,
        abbreviation: string_field(sec, key, "ABBREVIATION")?,
        description: string_field(sec, key, "TYPE")?.unwrap_or_default(),
        operation: required(sec, key, "OPERATION")?,
        base_address: addr("BASE_ADDRESS")?,
        address_range: range("ADDRESS_RANGE", required(sec, key, "ADDRESS_RANGE")?)?,
        protected_range,
        ports,
        misc: leftovers(sec, IP_KEYS),
    })
}

/// Renders the spec back into the document format.
pub fn serialize_spec(spec: &SocSpec) -> String {
    let value = spec_to_value(spec);
    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    serde::Serialize::serialize(&value, &mut ser).expect("serializing a JSON value cannot fail");
    let mut text = String::from_utf8(buf).expect("serde_json emits UTF-8");
    text.push('\n');
    text
}

pub(crate) fn spec_to_value(spec: &SocSpec) -> Value {
    let s = |v: &str| Value::String(v.to_string());
    let mut root = Map::new();

    let mut soc = Map::new();
    soc.insert("NAME".into(), s(&spec.name));
    if !spec.soc_type.is_empty() {
        soc.insert("TYPE".into(), s(&spec.soc_type));
    }
    if !spec.usage.is_empty() {
        soc.insert("USAGE".into(), s(&spec.usage));
    }
    soc.insert("BUS".into(), s(&spec.bus_protocol));
    soc.insert("NO_OF_MASTERS".into(), s(&spec.num_masters.to_string()));
    soc.insert("NO_OF_SLAVES".into(), s(&spec.num_slaves.to_string()));
    soc.extend(spec.soc_misc.clone());
    root.insert("SoC".into(), Value::Object(soc));

    let bi = &spec.bus_interface;
    let mut bus = Map::new();
    bus.insert("INTERFACE_NAME".into(), s(&bi.interface_name));
    bus.insert("NO_OF_PORTS".into(), s(&bi.num_ports.to_string()));
    if !bi.signal_names.is_empty() || bi.elided {
        let mut list = bi.signal_names.join(",");
        if bi.elided {
            if !list.is_empty() {
                list.push(',');
            }
            list.push_str("...");
        }
        bus.insert("SIGNAL_NAMES".into(), Value::String(list));
    }
    bus.extend(bi.misc.clone());
    root.insert("BUS_INTERFACE".into(), Value::Object(bus));

    for role in [Role::Master, Role::Slave] {
        for (i, ip) in spec.ips.iter().filter(|ip| ip.role == role).enumerate() {
            let mut sec = Map::new();
            sec.insert("NAME".into(), s(&ip.name));
            if let Some(a) = &ip.abbreviation {
                sec.insert("ABBREVIATION".into(), s(a));
            }
            if !ip.description.is_empty() {
                sec.insert("TYPE".into(), s(&ip.description));
            }
            sec.insert("OPERATION".into(), s(&ip.operation));
            sec.insert("ADDRESS_RANGE".into(), s(&ip.address_range.format('-')));
            sec.insert("BASE_ADDRESS".into(), s(&format!("{:08X}", ip.base_address)));
            if let Some(p) = &ip.protected_range {
                sec.insert("PROTECTED_ADDRESS_RANGE".into(), s(&p.format(':')));
            }
            if !ip.ports.is_empty() {
                let ports: Vec<String> = ip.ports.iter().map(Port::to_string).collect();
                sec.insert("PORTS".into(), Value::String(ports.join(", ")));
            }
            sec.extend(ip.misc.clone());
            root.insert(format!("{}{}", role.section_prefix(), i + 1), Value::Object(sec));
        }
    }
    root.extend(spec.misc.clone());
    Value::Object(root)
}
