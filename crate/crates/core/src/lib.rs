//! Core library: SoC specification model, CWE database and filtering,
//! assertion parsing and repair, policy translation and RTL generation.

pub mod expr;
pub mod spec_model;
pub mod cwe_db;
pub mod similarity;
pub mod llm_client;
pub mod query_gen;
pub mod cwe_filter;
pub mod sva;
pub mod policy;
pub mod codegen;
pub mod pipeline;
pub mod interact;
