use super::{clocking_decl, AssertTarget, AssertionUnit, PropertyExpr, SeqElem};

const INDENT: &str = "    ";

fn sequence(elems: &[SeqElem]) -> String {
    elems
        .iter()
        .map(|e| match e.delay {
            Some(d) => format!("##{d} {}", e.expr),
            None => e.expr.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn property_body(unit: &AssertionUnit) -> String {
    let mut parts = Vec::new();
    if let Some(c) = &unit.clocking {
        parts.push(match &c.block {
            Some(b) => format!("@({b})"),
            None => format!("@({} {})", c.edge, c.signal),
        });
    }
    if let Some(d) = &unit.disable_expr {
        parts.push(format!("disable iff ({d})"));
    }
    parts.push(match &unit.property_body {
        PropertyExpr::Boolean(e) => e.to_string(),
        PropertyExpr::Sequence(s) => sequence(s),
        PropertyExpr::Implication { antecedent, op, consequent } => {
            format!("{} {} {}", sequence(antecedent), op.as_str(), sequence(consequent))
        }
    });
    parts.join(" ")
}

fn item_lines(item: &str) -> Vec<String> {
    if clocking_decl(item).is_none() {
        return vec![item.to_string()];
    }
    let mut lines = Vec::new();
    let mut rest = item;
    while let Some(i) = rest.find(';') {
        let stmt = rest[..=i].trim();
        let nested = !lines.is_empty();
        lines.push(if nested { format!("{INDENT}{stmt}") } else { stmt.to_string() });
        rest = &rest[i + 1..];
    }
    lines.push(rest.trim().to_string());
    lines
}

/// Renders the unit in the usual property-then-labeled-assert layout.
pub fn render_assertion(unit: &AssertionUnit) -> String {
    let mut blocks: Vec<Vec<String>> = Vec::new();
    if !unit.preamble.is_empty() {
        blocks.push(unit.preamble.iter().flat_map(|i| item_lines(i)).collect());
    }
    blocks.push(vec![format!("property {};", unit.property_name), format!("{INDENT}{};", property_body(unit)), "endproperty".into()]);
    let target = match &unit.assert_target {
        AssertTarget::Named(n) => n.clone(),
        AssertTarget::Expr(e) => e.to_string(),
    };
    let head = format!("{}: assert property ({target})", unit.assert_label);
    blocks.push(match &unit.action {
        None => vec![format!("{head};")],
        Some(a) => {
            let msg = a.message.as_ref().map_or(String::new(), |m| format!("(\"{m}\")"));
            vec![head, format!("{INDENT}else {}{msg};", a.severity.task())]
        }
    });

    let Some(name) = &unit.module_name else {
        return blocks.into_iter().flatten().map(|l| l + "\n").collect();
    };
    let mut out = String::new();
    if unit.ports.is_empty() {
        out.push_str(&format!("module {name};\n"));
    } else {
        out.push_str(&format!("module {name} (\n"));
        let ports: Vec<String> = unit
            .ports
            .iter()
            .map(|p| {
                let range = if p.width > 1 { format!("[{}:0] ", p.width - 1) } else { String::new() };
                format!("{INDENT}{} wire {range}{}", p.direction.as_str(), p.name)
            })
            .collect();
        out.push_str(&ports.join(",\n"));
        out.push_str("\n);\n");
    }
    for block in blocks {
        out.push('\n');
        for line in block {
            out.push_str(INDENT);
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str("\nendmodule\n");
    out
}
