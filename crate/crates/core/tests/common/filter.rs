//! Direct transcription of the mapping and filtering algorithms, plus
//! generators for random filter instances.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use proptest::prelude::*;
use socsec_core::cwe_db::{canonical_id, id_number, CweEntry, Db, Misc, Provenance, Timing, ViolationType};
use socsec_core::cwe_filter::{filter_cwes, FilterConfig, Level, MatchRoute};
use socsec_core::llm_client::CweCandidate;
use socsec_core::similarity::normalize;
use socsec_core::spec_model::{load_spec, AddressRange, IpBlock, Role, SocSpec};

pub fn mit_cep() -> SocSpec {
    load_spec(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/specs/mit_cep.json")).unwrap()
}

// ---- reference transcription -------------------------------------------------

fn reference_scores(query: &str, rows: &[CweEntry]) -> Vec<f64> {
    let docs: Vec<Vec<String>> = rows.iter().map(|r| normalize(&r.description)).collect();
    let q = normalize(query);
    let mut all = docs.clone();
    all.push(q.clone());
    let n = all.len() as f64;
    let idf = |t: &String| {
        let df = all.iter().filter(|d| d.contains(t)).count() as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    };
    let weigh = |d: &Vec<String>| {
        let mut w: BTreeMap<String, f64> = BTreeMap::new();
        for t in d {
            *w.entry(t.clone()).or_default() += 1.0;
        }
        for (t, v) in w.iter_mut() {
            *v *= idf(t);
        }
        w
    };
    let qv = weigh(&q);
    let qn: f64 = qv.values().map(|x| x * x).sum::<f64>().sqrt();
    docs.iter()
        .map(|d| {
            let dv = weigh(d);
            let dn: f64 = dv.values().map(|x| x * x).sum::<f64>().sqrt();
            let dot: f64 = qv.iter().map(|(t, x)| x * dv.get(t).copied().unwrap_or(0.0)).sum();
            if qn == 0.0 || dn == 0.0 || dot <= 0.0 {
                0.0
            } else {
                (dot / (qn * dn)).min(1.0)
            }
        })
        .collect()
}

pub type RefRow = (String, BTreeSet<Level>, Vec<String>);

fn reference_map(row: &CweEntry, ips: &[IpBlock], omega: &mut Vec<RefRow>) {
    let mut add = |level: Level, ip: Option<&str>| {
        let pos = match omega.iter().position(|o| o.0 == row.cwe_id) {
            Some(p) => p,
            None => {
                omega.push((row.cwe_id.clone(), BTreeSet::new(), Vec::new()));
                omega.len() - 1
            }
        };
        omega[pos].1.insert(level);
        if let Some(name) = ip {
            if !omega[pos].2.iter().any(|n| n == name) {
                omega[pos].2.push(name.to_string());
            }
        }
    };
    if row.bus {
        add(Level::Bus, None);
    }
    if row.ip {
        for ip in ips {
            let name_hit = row.misc.get("ip_name").into_iter().flatten().any(|n| {
                n.eq_ignore_ascii_case(&ip.name) || ip.abbreviation.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(n))
            });
            let type_hit = row.misc.get("ip_type").into_iter().flatten().any(|t| t.eq_ignore_ascii_case(&ip.operation));
            if name_hit || type_hit {
                add(Level::Ip, Some(&ip.name));
            }
        }
    }
}

pub fn reference_filter(cands: &[CweCandidate], rows: &[CweEntry], ips: &[IpBlock], threshold: f64) -> Vec<RefRow> {
    let mut omega = Vec::new();
    let mut order: Vec<&CweCandidate> = cands.iter().collect();
    order.sort_by_key(|c| c.source_rank);
    for c in order {
        let want = canonical_id(&c.id);
        if let Some(row) = rows.iter().find(|r| Some(&r.cwe_id) == want.as_ref()) {
            reference_map(row, ips, &mut omega);
            continue;
        }
        let scores = reference_scores(&c.description, rows);
        let mut best = 0;
        for i in 1..rows.len() {
            if scores[i] > scores[best] || (scores[i] == scores[best] && id_number(&rows[i].cwe_id) < id_number(&rows[best].cwe_id)) {
                best = i;
            }
        }
        if scores[best] > threshold {
            reference_map(&rows[best], ips, &mut omega);
        }
    }
    omega
}

// ---- generators -----------------------------------------------------------------

const WORDS: &[&str] = &[
    "buffer", "memory", "crypto", "key", "weak", "access", "control", "bus", "race", "lock", "debug", "reset",
    "clock", "password", "authentication", "missing", "improper", "validation", "input", "exposure", "timing",
    "register", "fabric", "secure", "boot",
];
const OPS: &[&str] = &["Crypto", "Processor", "Memory", "Peripheral", "DSP"];
const NAMES: &[&str] = &["AES", "mor1kx", "SPI", "DMA", "RSA"];

fn desc() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..6).prop_map(|w| w.join(" "))
}

fn misc() -> impl Strategy<Value = Misc> {
    (prop::option::of(prop::sample::select(NAMES)), prop::option::of(prop::sample::select(OPS))).prop_map(|(n, t)| {
        let mut m = Misc::new();
        if let Some(n) = n {
            m.insert("ip_name".into(), vec![n.to_string()]);
        }
        if let Some(t) = t {
            m.insert("ip_type".into(), vec![t.to_string()]);
        }
        m
    })
}

fn db_rows() -> impl Strategy<Value = Vec<CweEntry>> {
    prop::collection::btree_set(1u32..2000, 1..=30).prop_flat_map(|ids| {
        let n = ids.len();
        (Just(ids), prop::collection::vec((desc(), any::<bool>(), any::<bool>(), misc()), n)).prop_map(|(ids, attrs)| {
            ids.into_iter()
                .zip(attrs)
                .map(|(id, (description, bus, ip, misc))| CweEntry {
                    cwe_id: format!("CWE-{id}"),
                    description,
                    bus,
                    ip,
                    sync: if bus || ip { Timing::Synchronous } else { Timing::NotApplicable },
                    violation_type: ViolationType::AccessControl,
                    misc,
                    provenance: Provenance::Seed,
                })
                .collect()
        })
    })
}

fn ips() -> impl Strategy<Value = Vec<IpBlock>> {
    prop::collection::vec((prop::sample::select(NAMES), prop::sample::select(OPS)), 0..4).prop_map(|v| {
        let mut seen = BTreeSet::new();
        v.into_iter()
            .filter(|(n, _)| seen.insert(*n))
            .map(|(n, op)| IpBlock {
                role: Role::Slave,
                name: n.to_string(),
                abbreviation: None,
                description: String::new(),
                operation: op.to_string(),
                base_address: 0,
                address_range: AddressRange::new(0, 0xFFFF).unwrap(),
                protected_range: None,
                ports: Vec::new(),
                misc: Default::default(),
            })
            .collect()
    })
}

/// Candidates drawn from the rows (exact ids, copied descriptions) or made up.
fn candidates(rows: Vec<CweEntry>) -> impl Strategy<Value = Vec<CweCandidate>> {
    let n = rows.len();
    let one = (0..3u8, 0..n, 2000u32..3000, desc(), any::<bool>()).prop_map(move |(kind, i, unknown, d, padded)| match kind {
        0 => {
            let num = &rows[i].cwe_id[4..];
            (if padded { format!("cwe-00{num}") } else { rows[i].cwe_id.clone() }, d)
        }
        1 => (format!("CWE-{unknown}"), rows[i].description.clone()),
        _ => (format!("CWE-{unknown}"), d),
    });
    prop::collection::vec(one, 0..=12).prop_map(|v| {
        v.into_iter().enumerate().map(|(i, (id, description))| CweCandidate { id, description, source_rank: i + 1 }).collect()
    })
}

pub fn instance() -> impl Strategy<Value = (Vec<CweEntry>, Vec<CweCandidate>, Vec<IpBlock>, f64)> {
    db_rows().prop_flat_map(|rows| {
        let c = candidates(rows.clone());
        (Just(rows), c, ips(), prop::sample::select(vec![0.0, 0.3, 0.5, 0.75, 0.9]))
    })
}

fn spec_with(ips: Vec<IpBlock>) -> SocSpec {
    let mut spec = mit_cep();
    spec.ips = ips;
    spec
}

pub fn run(rows: &[CweEntry], cands: &[CweCandidate], ips: &[IpBlock], threshold: f64) -> Vec<RefRow> {
    let db = Db::from_entries(rows.iter().cloned()).unwrap();
    let config = FilterConfig { similarity_threshold: threshold, ..FilterConfig::default() };
    let out = filter_cwes(cands, &db, &spec_with(ips.to_vec()), None, &config).unwrap();
    for f in &out.filtered {
        assert!(!f.levels.is_empty());
        assert!(!f.levels.contains(&Level::Bus) || f.entry.bus);
        assert!(!f.levels.contains(&Level::Ip) || f.entry.ip);
        if f.match_route == MatchRoute::Similarity {
            assert!(f.similarity_score.unwrap() > threshold);
        }
    }
    out.filtered.into_iter().map(|f| (f.entry.cwe_id, f.levels, f.matched_ips)).collect()
}
