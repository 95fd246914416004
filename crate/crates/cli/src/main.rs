use std::collections::BTreeMap;
use std::io::{self, BufRead, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use socsec_core::codegen::{generate_rtl, validate_rtl, write_rtl};
use socsec_core::cwe_filter::FilterConfig;
use socsec_core::interact::{prompt_survey, TerminalPrompter};
use socsec_core::llm_client::ProviderConfig;
use socsec_core::pipeline::{parse_stages, run_pipeline, run_pipeline_with, PipelineConfig, PipelineError, ProviderChoice, RunReport};
use socsec_core::policy::{assertion_to_policy, classify_placement, parse_policies, serialize_policy};
use socsec_core::spec_model::{load_spec, serialize_spec, survey_to_spec, SocSpec, SurveyTemplate};
use socsec_core::sva::{correct, lint, parse_assertion};

#[derive(Parser)]
#[command(name = "socsec", version, about = "SoC security flow: CWE mapping, assertions, policies and enforcement RTL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages from a specification to RTL.
    Run(RunArgs),
    /// Build a specification file from survey answers.
    Survey {
        #[arg(long)]
        out: PathBuf,
        /// JSON object of question id to answer; prompts on stdin when absent.
        #[arg(long)]
        answers: Option<PathBuf>,
    },
    /// Report lint findings for an assertion file.
    LintSva {
        file: PathBuf,
        /// Print the automatically corrected text.
        #[arg(long)]
        fix: bool,
    },
    /// Translate an assertion into a policy document.
    TranslateSva {
        file: PathBuf,
        #[arg(long)]
        action: String,
        /// Specification used to decide bus or IP placement.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        cwe: Option<String>,
    },
    /// Generate enforcement RTL from a policy document.
    GenRtl {
        policies: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "rtl")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Refuse remote providers.
    #[arg(long)]
    offline: bool,
    /// Directory of recorded LLM responses.
    #[arg(long)]
    mock_dir: Option<PathBuf>,
    /// JSON provider configuration for a remote LLM.
    #[arg(long)]
    provider_config: Option<PathBuf>,
    /// Comma-separated stages: q,c,f,s,p,r (or their names).
    #[arg(long, default_value = "q,c,f,s,p,r")]
    stages: String,
    /// JSON object mapping CWE ids to enforcement actions.
    #[arg(long)]
    answers: Option<PathBuf>,
    /// Prompt for each action on the terminal.
    #[arg(long, conflicts_with = "answers")]
    interactive: bool,
    /// Only generate policies for these CWEs (comma separated).
    #[arg(long, value_delimiter = ',')]
    only_violated: Option<Vec<String>>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Ask the LLM about candidates the database cannot place.
    #[arg(long)]
    llm_fallback: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::new(e.exit_code() as u8, e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn spec_at(path: &Path) -> Result<SocSpec, Failure> {
    load_spec(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let provider = match (&args.mock_dir, &args.provider_config) {
        (Some(dir), _) => ProviderChoice::Mock(dir.clone()),
        (None, Some(p)) => ProviderChoice::Remote(
            serde_json::from_str::<ProviderConfig>(&read(p)?).map_err(|e| Failure::new(2, format!("{}: {e}", p.display())))?,
        ),
        (None, None) => ProviderChoice::Remote(ProviderConfig::default()),
    };
    let mut config = PipelineConfig::new(&args.spec, &args.db, provider, &args.out);
    config.offline = args.offline;
    config.stages = parse_stages(&args.stages)?;
    config.answers = args.answers;
    config.only_violated = args.only_violated;
    config.filter = FilterConfig {
        similarity_threshold: args.threshold.unwrap_or(FilterConfig::default().similarity_threshold),
        llm_fallback_enabled: args.llm_fallback,
        ..FilterConfig::default()
    };
    let report = if args.interactive {
        let mut prompter = TerminalPrompter { input: io::stdin().lock(), output: io::stderr() };
        run_pipeline_with(&config, &mut prompter)?
    } else {
        run_pipeline(&config)?
    };
    print_summary(&report, &args.out);
    match &report.failure {
        Some(f) => Err(Failure::new(f.exit_code as u8, &f.message)),
        None => Ok(()),
    }
}

fn print_summary(report: &RunReport, out: &Path) {
    for s in &report.stages {
        println!("{:<7} {:?}", s.stage.as_str(), s.status);
    }
    if let (Some(c), Some(f), Some(m)) = (report.candidate_count, report.filtered_count, report.relevance_metric) {
        println!("relevant CWEs: {f} of {c} (metric {m:.4})");
    }
    for c in &report.cwes {
        let placement = c.placement.as_deref().unwrap_or("-");
        let rtl = c.rtl.as_deref().unwrap_or("-");
        println!("  {:<8} {placement:<16} {rtl}", c.cwe_id);
    }
    println!("report: {}", out.join(socsec_core::pipeline::REPORT_FILE).display());
}

fn survey(out: &Path, answers: Option<&Path>) -> Result<(), Failure> {
    match answers {
        Some(path) => {
            let map: BTreeMap<String, String> =
                serde_json::from_str(&read(path)?).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
            let pairs: Vec<(String, String)> = map.into_iter().collect();
            let spec = survey_to_spec(&pairs).map_err(|e| Failure::new(2, e))?;
            std::fs::write(out, serialize_spec(&spec)).map_err(|e| Failure::new(3, format!("{}: {e}", out.display())))?;
            println!("Wrote {}", out.display());
        }
        None => {
            let stdin = io::stdin();
            if !stdin.is_terminal() {
                eprintln!("reading survey answers from standard input");
            }
            let mut input = stdin.lock();
            prompt_survey(&SurveyTemplate::builtin(), &mut input as &mut dyn BufRead, &mut io::stdout(), out)
                .map_err(|e| Failure::new(2, e))?;
        }
    }
    Ok(())
}

fn line_col(text: &str, pos: usize) -> (usize, usize) {
    let before = &text[..pos.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Exit status 1 when a finding carries an automatic fix or the text does
/// not parse; advisories alone exit 0.
fn lint_sva(file: &Path, fix: bool) -> Result<(), Failure> {
    let text = read(file)?;
    let findings = lint(&text);
    for f in &findings {
        let (line, col) = line_col(&text, f.span.start);
        let tag = if f.fix.is_some() { "fixable" } else { "advisory" };
        println!("{}:{line}:{col}: {} ({tag}) {}", file.display(), f.rule.as_str(), f.message);
    }
    if fix {
        match correct(&text, &SocSpec::default(), None) {
            Ok(rep) => print!("{}", rep.text),
            Err(e) => return Err(Failure::new(1, e)),
        }
    }
    let blocking = findings.iter().filter(|f| f.fix.is_some() || f.rule.as_str() == "R0").count();
    if blocking > 0 {
        return Err(Failure::new(1, format!("{blocking} blocking finding(s)")));
    }
    Ok(())
}

fn translate(file: &Path, action: &str, spec: Option<&Path>, cwe: Option<String>) -> Result<(), Failure> {
    let unit = parse_assertion(&read(file)?).map_err(|e| Failure::new(1, format!("{}: {e}", file.display())))?;
    let spec = match spec {
        Some(p) => Some(spec_at(p)?),
        None => None,
    };
    let blank = SocSpec::default();
    let mut policy = assertion_to_policy(&unit, action, spec.as_ref().unwrap_or(&blank)).map_err(|e| Failure::new(1, e))?;
    policy.source_cwe = cwe;
    if let Some(spec) = &spec {
        policy = classify_placement(&policy, None, spec).map_err(|e| Failure::new(1, e))?;
    }
    println!("{}", serialize_policy(&policy));
    Ok(())
}

fn gen_rtl(policies: &Path, spec: &Path, out: &Path) -> Result<(), Failure> {
    let spec = spec_at(spec)?;
    let parsed = parse_policies(&read(policies)?).map_err(|e| Failure::new(2, format!("{}: {e}", policies.display())))?;
    let placed = parsed
        .iter()
        .map(|p| if p.placement.is_some() { Ok(p.clone()) } else { classify_placement(p, None, &spec) })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::new(3, e))?;
    let artifacts = generate_rtl(&placed, &spec).map_err(|e| Failure::new(3, e))?;
    let written = write_rtl(out, &artifacts).map_err(|e| Failure::new(3, e))?;
    let mut findings = 0;
    for a in &artifacts {
        for f in validate_rtl(a) {
            findings += 1;
            eprintln!("{}:{}: {:?} {}", a.file_name(), f.line, f.kind, f.message);
        }
        for w in &a.warnings {
            eprintln!("{}: warning: {w}", a.file_name());
        }
    }
    for p in written {
        println!("{}", p.display());
    }
    if findings > 0 {
        return Err(Failure::new(3, format!("{findings} validation finding(s)")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Survey { out, answers } => survey(&out, answers.as_deref()),
        Command::LintSva { file, fix } => lint_sva(&file, fix),
        Command::TranslateSva { file, action, spec, cwe } => translate(&file, &action, spec.as_deref(), cwe),
        Command::GenRtl { policies, spec, out } => gen_rtl(&policies, &spec, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
