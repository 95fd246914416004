//! Python module `socsec`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use socsec_core::codegen::{self, validate_verilog as validate_text};
use socsec_core::cwe_db::{self, Db};
use socsec_core::cwe_filter::{self, FilterConfig};
use socsec_core::llm_client;
use socsec_core::pipeline::{self, PipelineConfig, ProviderChoice};
use socsec_core::policy;
use socsec_core::similarity;
use socsec_core::spec_model::{self, SocSpec};
use socsec_core::sva;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed SoC specification.
#[pyclass(name = "SocSpec", module = "socsec", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySocSpec {
    inner: SocSpec,
}

#[pymethods]
impl PySocSpec {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        spec_model::load_spec(&path).map(|inner| PySocSpec { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        spec_model::parse_spec(text).map(|inner| PySocSpec { inner }).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// `(key, role, operation)` per itemized IP.
    fn ips(&self) -> Vec<(String, String, String)> {
        self.inner.ips.iter().map(|ip| (ip.key().to_string(), ip.role.as_str().to_string(), ip.operation.clone())).collect()
    }

    fn to_json(&self) -> String {
        spec_model::serialize_spec(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("SocSpec({:?}, {} IPs)", self.inner.name, self.inner.ips.len())
    }
}

/// The CWE database.
#[pyclass(name = "CweDb", module = "socsec", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCweDb {
    inner: Db,
}

#[pymethods]
impl PyCweDb {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        cwe_db::load_db(&path).map(|inner| PyCweDb { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        cwe_db::parse_db(text).map(|inner| PyCweDb { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn seed() -> Self {
        PyCweDb { inner: Db::seed() }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(id, description, classification)` or `None`.
    fn lookup(&self, id: &str) -> Option<(String, String, String)> {
        self.inner.lookup(id).map(|e| (e.cwe_id.clone(), e.description.clone(), e.classification().to_string()))
    }

    /// Best description match as `(id, score)`.
    fn best_match(&self, description: &str) -> Option<(String, f64)> {
        similarity::best_match(description, &self.inner).map(|(e, s)| (e.cwe_id.clone(), s))
    }
}

/// `(id, description, source_rank)` per CWE mention in an LLM response.
#[pyfunction]
fn parse_cwe_list(text: &str) -> Vec<(String, String, usize)> {
    llm_client::parse_cwe_list(text).into_iter().map(|c| (c.id, c.description, c.source_rank)).collect()
}

/// Filters the CWEs named in `response` and returns one classification
/// tuple `(id, description, level, timing, violation type)` per survivor.
#[pyfunction]
#[pyo3(signature = (response, db, spec, threshold = 0.75))]
fn filter_cwes(response: &str, db: &PyCweDb, spec: &PySocSpec, threshold: f64) -> PyResult<Vec<Vec<String>>> {
    let candidates = llm_client::parse_cwe_list(response);
    let config = FilterConfig { similarity_threshold: threshold, ..FilterConfig::default() };
    let out = cwe_filter::filter_cwes(&candidates, &db.inner, &spec.inner, None, &config).map_err(value_err)?;
    Ok(out.filtered.iter().map(|f| f.classification_tuple().to_vec()).collect())
}

#[pyfunction]
fn relevance_metric(filtered: usize, total: usize) -> PyResult<f64> {
    cwe_filter::relevance_metric(filtered, total).map_err(value_err)
}

/// `(rule, start, end, message, fixable)` per finding.
#[pyfunction]
fn lint_sva(text: &str) -> Vec<(String, usize, usize, String, bool)> {
    sva::lint(text)
        .into_iter()
        .map(|f| (f.rule.as_str().to_string(), f.span.start, f.span.end, f.message, f.fix.is_some()))
        .collect()
}

/// Applies the automatic fixes; with a spec and IP name, also binds
/// addresses and signal names to that IP.
#[pyfunction]
#[pyo3(signature = (text, spec = None, ip = None))]
fn correct_sva(text: &str, spec: Option<&PySocSpec>, ip: Option<&str>) -> PyResult<String> {
    let blank = SocSpec::default();
    let spec = spec.map_or(&blank, |s| &s.inner);
    let target = match ip {
        Some(name) => Some(spec.find_ip(name).ok_or_else(|| value_err(format!("no IP named {name}")))?),
        None => None,
    };
    sva::correct(text, spec, target).map(|r| r.text).map_err(value_err)
}

/// Canonical rendering of an assertion.
#[pyfunction]
fn render_sva(text: &str) -> PyResult<String> {
    sva::parse_assertion(text).map(|u| sva::render_assertion(&u)).map_err(value_err)
}

/// Policy document for an assertion and action; placed when a spec is given.
#[pyfunction]
#[pyo3(signature = (text, action, spec = None, cwe = None))]
fn translate_sva(text: &str, action: &str, spec: Option<&PySocSpec>, cwe: Option<String>) -> PyResult<String> {
    let unit = sva::parse_assertion(text).map_err(value_err)?;
    let blank = SocSpec::default();
    let mut p = policy::assertion_to_policy(&unit, action, spec.map_or(&blank, |s| &s.inner)).map_err(value_err)?;
    p.source_cwe = cwe;
    if let Some(spec) = spec {
        p = policy::classify_placement(&p, None, &spec.inner).map_err(value_err)?;
    }
    Ok(policy::serialize_policy(&p))
}

/// `[(file name, verilog)]` for a policy document (single or array).
#[pyfunction]
fn generate_rtl(policies: &str, spec: &PySocSpec) -> PyResult<Vec<(String, String)>> {
    let parsed = policy::parse_policies(policies).map_err(value_err)?;
    let placed = parsed
        .iter()
        .map(|p| if p.placement.is_some() { Ok(p.clone()) } else { policy::classify_placement(p, None, &spec.inner) })
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let arts = codegen::generate_rtl(&placed, &spec.inner).map_err(value_err)?;
    Ok(arts.iter().map(|a| (a.file_name(), a.to_verilog())).collect())
}

/// `(kind, line, message)` per finding in generated-style Verilog.
#[pyfunction]
fn validate_verilog(text: &str) -> Vec<(String, usize, String)> {
    validate_text(text).into_iter().map(|f| (format!("{:?}", f.kind), f.line, f.message)).collect()
}

/// Offline run with a mock directory; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (spec_path, db_path, out_dir, mock_dir, stages = "q,c,f,s,p,r", answers = None))]
fn run_pipeline(
    spec_path: PathBuf,
    db_path: PathBuf,
    out_dir: PathBuf,
    mock_dir: PathBuf,
    stages: &str,
    answers: Option<PathBuf>,
) -> PyResult<String> {
    let mut config = PipelineConfig::new(spec_path, db_path, ProviderChoice::Mock(mock_dir), out_dir.clone());
    config.offline = true;
    config.stages = pipeline::parse_stages(stages).map_err(value_err)?;
    config.answers = answers;
    let report = pipeline::run_pipeline(&config).map_err(value_err)?;
    if let Some(f) = &report.failure {
        return Err(PyRuntimeError::new_err(format!("{} (exit code {})", f.message, f.exit_code)));
    }
    std::fs::read_to_string(out_dir.join(pipeline::REPORT_FILE)).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
pub fn socsec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySocSpec>()?;
    m.add_class::<PyCweDb>()?;
    m.add_function(wrap_pyfunction!(parse_cwe_list, m)?)?;
    m.add_function(wrap_pyfunction!(filter_cwes, m)?)?;
    m.add_function(wrap_pyfunction!(relevance_metric, m)?)?;
    m.add_function(wrap_pyfunction!(lint_sva, m)?)?;
    m.add_function(wrap_pyfunction!(correct_sva, m)?)?;
    m.add_function(wrap_pyfunction!(render_sva, m)?)?;
    m.add_function(wrap_pyfunction!(translate_sva, m)?)?;
    m.add_function(wrap_pyfunction!(generate_rtl, m)?)?;
    m.add_function(wrap_pyfunction!(validate_verilog, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
