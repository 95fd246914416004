use super::*;
use crate::expr::lex;
use crate::policy::{assertion_to_policy, classify_placement, parse_action, parse_policy};
use crate::spec_model::parse_spec;
use crate::sva::parse_assertion;

fn example_soc() -> SocSpec {
    parse_spec(include_str!("../../../../fixtures/specs/example_soc.json")).unwrap()
}

fn mit_cep() -> SocSpec {
    parse_spec(include_str!("../../../../fixtures/specs/mit_cep.json")).unwrap()
}

fn bus_guard_policy() -> SecurityPolicy {
    let p = parse_policy(include_str!("../../../../fixtures/policies/bus_guard_policy.json")).unwrap();
    classify_placement(&p, None, &example_soc()).unwrap()
}

fn texts(src: &str) -> Vec<String> {
    lex(src).unwrap().into_iter().map(|t| t.text).collect()
}

fn policy(sva: &str, action: &str, cwe: &str, spec: &SocSpec) -> SecurityPolicy {
    let mut p = assertion_to_policy(&parse_assertion(sva).unwrap(), action, spec).unwrap();
    p.source_cwe = Some(cwe.into());
    classify_placement(&p, None, spec).unwrap()
}

#[test]
fn bus_guard_fragment_shape() {
    let f = policy_to_logic(&bus_guard_policy(), &example_soc()).unwrap();
    assert_eq!(f.guard.to_string(), "slave_Crypto_aw_addr >= 32'h93000014 && slave_Crypto_aw_addr <= 32'h93000028");
    assert_eq!(f.assignments, vec![("slave_SPI_w_data".to_string(), Expr::Number("32'h0".into()))]);
    assert!(f.clocked.is_empty());
    let lines = f.guarded_lines();
    assert_eq!(
        texts(&lines[1..].join("\n")),
        texts("if (slave_Crypto_aw_addr >= 32'h93000014 && slave_Crypto_aw_addr <= 32'h93000028) begin slave_SPI_w_data = 32'h0; end")
    );
}

#[test]
fn central_module_for_bus_guard() {
    let a = build_central_module(&[bus_guard_policy()], &example_soc()).unwrap();
    let v = a.to_verilog();
    assert!(v.contains("input wire [31:0] slave_Crypto_aw_addr"), "{v}");
    assert!(v.contains("input wire [31:0] slave_SPI_w_data_in"), "{v}");
    assert!(v.contains("output reg [31:0] slave_SPI_w_data"), "{v}");
    assert!(v.contains("slave_SPI_w_data = slave_SPI_w_data_in;"), "{v}");
    assert_eq!(a.policies_included, vec!["CWE-284".to_string()]);
    assert_eq!(validate_rtl(&a), vec![]);
}

#[test]
fn empty_central_module_has_only_clock_and_reset() {
    let a = build_central_module(&[], &example_soc()).unwrap();
    let names: Vec<&str> = a.port_list.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["clk", "rst"]);
    assert!(a.body.is_empty());
    assert_eq!(validate_rtl(&a), vec![]);
}

#[test]
fn shared_target_is_one_port_and_last_write_wins() {
    let spec = example_soc();
    let mut second = bus_guard_policy();
    second.source_cwe = Some("CWE-1191".into());
    second.action = parse_action("slave['SPI'].w_data = 32'hFFFFFFFF;").unwrap();
    let a = build_central_module(&[second, bus_guard_policy()], &spec).unwrap();
    let outputs: Vec<&RtlPort> = a.port_list.iter().filter(|p| p.direction == PortDirection::Output).collect();
    assert_eq!(outputs.len(), 1);
    assert_eq!(a.policies_included, vec!["CWE-284".to_string(), "CWE-1191".to_string()]);
    let v = a.to_verilog();
    assert!(v.find("// CWE-284").unwrap() < v.find("// CWE-1191").unwrap());
    assert!(a.header.iter().any(|h| h.contains("last matching policy")));
    assert_eq!(validate_rtl(&a), vec![]);
}

#[test]
fn sequential_policy_tracks_antecedent_in_one_flop() {
    let spec = example_soc();
    let p = policy(
        "property p; @(posedge clk) slave['Crypto'].start ##1 slave['Crypto'].ready; endproperty a_p: assert property (p);",
        "slave['SPI'].w_data = 32'h0;",
        "CWE-362",
        &spec,
    );
    let f = policy_to_logic(&p, &spec).unwrap();
    assert_eq!(f.declarations, vec!["reg p0_q0;".to_string()]);
    assert_eq!(f.guard.to_string(), "p0_q0 && slave_Crypto_ready");
    assert!(f.clocked.iter().any(|l| l.trim() == "p0_q0 <= slave_Crypto_start;"));
    let a = build_central_module(&[p], &spec).unwrap();
    assert_eq!(validate_rtl(&a), vec![]);
}

#[test]
fn sampled_functions_and_reset_are_synthesized() {
    let spec = mit_cep();
    let p = policy(
        "property p; @(posedge clk_i) disable iff (!rst_i) $rose(start) |-> ##2 (wb_adr_i >= 32'h93000004); endproperty a_p: assert property (p);",
        "wb_adr_i = 32'h0;",
        "CWE-125",
        &spec,
    );
    assert_eq!(p.placement, Some(Placement::IpLevel("AES".into())));
    let aes = spec.find_ip("AES").unwrap();
    let a = build_ip_wrapper(aes, &[p], &aes.ports).unwrap();
    let v = a.to_verilog();
    assert!(v.contains("always @(posedge clk_i or negedge rst_i) begin"), "{v}");
    assert!(v.contains("if (!rst_i) begin"), "{v}");
    assert!(!v.contains('$'), "{v}");
    assert_eq!(validate_rtl(&a), vec![], "{v}");
}

#[test]
fn ip_wrapper_gates_address_before_instance() {
    let spec = mit_cep();
    let p = policy(include_str!("../../../../fixtures/sva/reference/cwe125_out_of_bounds_read.sv"), "wb_adr_i = 32'h0;", "CWE-125", &spec);
    let aes = spec.find_ip("AES").unwrap();
    let a = build_ip_wrapper(aes, &[p], &aes.ports).unwrap();
    let v = a.to_verilog();
    assert!(v.contains("reg [31:0] wb_adr_i_gated;"), "{v}");
    assert!(v.contains(".wb_adr_i(wb_adr_i_gated)"), "{v}");
    assert!(v.contains("AES u_AES ("), "{v}");
    assert_eq!(a.file_name(), "AES_wrapper.v");
    assert_eq!(validate_rtl(&a), vec![], "{v}");
}

#[test]
fn empty_wrapper_is_pass_through() {
    let spec = mit_cep();
    let aes = spec.find_ip("AES").unwrap();
    let a = build_ip_wrapper(aes, &[], &aes.ports).unwrap();
    for p in &aes.ports {
        assert!(a.body.contains(&format!(".{0}({0})", p.name)));
    }
    assert!(!a.body.contains("always"));
    assert!(a.port_list.iter().all(|p| !p.is_reg));
    assert_eq!(validate_rtl(&a), vec![]);
}

#[test]
fn unknown_inner_port_is_an_error() {
    let spec = mit_cep();
    let aes = spec.find_ip("AES").unwrap();
    let p = policy(include_str!("../../../../fixtures/sva/reference/cwe125_out_of_bounds_read.sv"), "wb_adr_i = 32'h0;", "CWE-125", &spec);
    let fewer: Vec<Port> = aes.ports.iter().filter(|p| p.name != "wb_adr_i").cloned().collect();
    assert!(matches!(build_ip_wrapper(aes, &[p], &fewer), Err(CodegenError::UnknownPort { .. })));
}

#[test]
fn misplaced_policy_is_rejected() {
    assert!(matches!(build_ip_wrapper(mit_cep().find_ip("AES").unwrap(), &[bus_guard_policy()], &[]), Err(CodegenError::Placement { .. })));
}

#[test]
fn width_mismatch_is_a_warning() {
    let mut p = bus_guard_policy();
    p.action = parse_action("slave['SPI'].w_data = 8'h0;").unwrap();
    let f = policy_to_logic(&p, &example_soc()).unwrap();
    assert_eq!(f.warnings.len(), 1);
}

#[test]
fn validator_findings() {
    let good = "module m (input wire clk, output reg q);\n    always @(posedge clk) begin\n        q <= 1'b0;\n    end\nendmodule\n";
    assert_eq!(validate_verilog(good), vec![]);
    let initial = good.replace("    always", "    initial begin\n        q = 1'b1;\n    end\n    always");
    assert!(validate_verilog(&initial).iter().any(|f| f.kind == FindingKind::SubsetViolation));
    let undeclared = good.replace("q <= 1'b0;", "q <= zz;");
    let f = validate_verilog(&undeclared);
    assert_eq!(f.len(), 1);
    assert_eq!((f[0].kind, f[0].line), (FindingKind::Undeclared, 3));
    let delay = good.replace("q <= 1'b0;", "#5 q <= 1'b0;");
    assert!(validate_verilog(&delay).iter().any(|f| f.kind == FindingKind::SubsetViolation));
    let task = good.replace("q <= 1'b0;", "$display(\"x\");");
    assert!(validate_verilog(&task).iter().any(|f| f.kind == FindingKind::SubsetViolation));
    let unbalanced = good.replace("    end\n", "");
    assert!(validate_verilog(&unbalanced).iter().any(|f| f.kind == FindingKind::Unbalanced));
}

#[test]
fn generation_is_deterministic_and_bundled() {
    let spec = mit_cep();
    let ip = policy(include_str!("../../../../fixtures/sva/reference/cwe125_out_of_bounds_read.sv"), "wb_adr_i = 32'h0;", "CWE-125", &spec);
    let a = generate_rtl(std::slice::from_ref(&ip), &spec).unwrap();
    let b = generate_rtl(&[ip], &spec).unwrap();
    assert_eq!(a, b);
    let names: Vec<String> = a.iter().map(RtlArtifact::file_name).collect();
    assert_eq!(names, ["security_module.v", "AES_wrapper.v"]);
    let map = render_signal_map(&a);
    assert!(map.lines().any(|l| l.starts_with("AES_wrapper\twb_adr_i_gated\twb_adr_i\tAES")), "{map}");
}
