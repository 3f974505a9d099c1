//! Command-line frontend for the vpflow verification suite. Each verb runs
//! one construction, writes a report and maps the outcome to an exit code.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vpflow::{Error, VectorFieldSpec};

mod verbs;

/// Exit codes shared by every verb.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const CONSTRUCTION_IMPOSSIBLE: i32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Catalog id or path to a field JSON document.
    #[arg(long, global = true)]
    pub field: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report path; the report goes to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Overrides the verb's main numerical tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Writes one `t,x1..xn` CSV per integrated orbit next to the report.
    #[arg(long, global = true)]
    pub emit_orbits: bool,
}

#[derive(Debug, Parser)]
#[command(name = "vpflow", version, about = "Volume-preserving flow constructions with numerical verification")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Verb {
    /// Local rotation perturbation: deviation, support, divergence, C^r size, volume.
    VerifyPerturb(verbs::PerturbArgs),
    /// Volume-normalizing flow box for a density and a section graph.
    Flowbox(verbs::FlowboxArgs),
    /// Builds and verifies an (eps,t)-chain between two points.
    Chain(verbs::ChainArgs),
    /// Extends the return time of a point by stacked local perturbations.
    ReturnDemo(verbs::ReturnArgs),
    /// Density and recurrence conditions on a fundamental domain.
    Genericity(verbs::GenericityArgs),
    /// Grows an invariant manifold from a fundamental domain.
    Manifold(verbs::ManifoldArgs),
}

/// What a verb produced: the report, whether every check passed, and the
/// orbit CSVs to emit as `(name, contents)`.
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
    pub orbits: Vec<(String, String)>,
}

/// The bytes written for a report plus the exit code.
pub struct Run {
    pub code: i32,
    pub report: String,
    pub orbits: Vec<(String, String)>,
    pub message: Option<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_)
        | Error::InvalidArgument(_)
        | Error::InvalidField(_)
        | Error::InvalidDensity(_)
        | Error::InvalidInput(_)
        | Error::InvalidRadii(_)
        | Error::InvalidEndpoints(_)
        | Error::UnsupportedOrder(_)
        | Error::NotAFixedPoint { .. }
        | Error::RequiresVerifiedInput
        | Error::Io(_) => exit::INVALID_INPUT,
        Error::Hop { source, .. } => exit_code(source),
        Error::IntegrationEscape { .. }
        | Error::Tangency { .. }
        | Error::HyperbolicityRequired
        | Error::EscapeBeforeReturn { .. }
        | Error::NoCircle { .. }
        | Error::AngleBudgetExceeded { .. }
        | Error::PatchCollision(_)
        | Error::OracleFailure(_)
        | Error::DensityFailure { .. } => exit::CONSTRUCTION_IMPOSSIBLE,
    }
}

/// Short kebab-case name of an error, as printed before the message.
fn error_kind(e: &Error) -> String {
    let text = e.to_string();
    text.split(|c: char| c == ':' || c == ' ').next().unwrap_or("error").to_string()
}

/// Resolves `--field`: an existing file is read as a field document, anything
/// else is looked up in the catalog.
pub fn resolve_field(spec: Option<&str>, default: &str, dim: usize) -> vpflow::Result<VectorFieldSpec> {
    let id = spec.unwrap_or(default);
    if Path::new(id).is_file() {
        let text = std::fs::read_to_string(id)?;
        return VectorFieldSpec::from_json(&text);
    }
    VectorFieldSpec::catalog(id, dim)
}

/// Runs a verb without touching the file system.
pub fn execute(cli: &Cli) -> Run {
    let c = &cli.common;
    let result = match &cli.verb {
        Verb::VerifyPerturb(a) => verbs::verify_perturb(c, a),
        Verb::Flowbox(a) => verbs::flowbox(c, a),
        Verb::Chain(a) => verbs::chain(c, a),
        Verb::ReturnDemo(a) => verbs::return_demo(c, a),
        Verb::Genericity(a) => verbs::genericity(c, a),
        Verb::Manifold(a) => verbs::manifold(c, a),
    };
    let (code, report, orbits, message) = match result {
        Ok(o) => {
            let code = if o.pass { exit::PASS } else { exit::CHECK_FAILED };
            (code, o.report, o.orbits, None)
        }
        Err(e) => {
            let report = json!({ "error": error_kind(&e), "message": e.to_string() });
            (exit_code(&e), report, Vec::new(), Some(e.to_string()))
        }
    };
    Run { code, report: render(&report, c.format), orbits, message }
}

/// Runs a verb and writes its outputs; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let r = execute(cli);
    if let Some(m) = &r.message {
        eprintln!("error: {m}");
    }
    let c = &cli.common;
    let written = match &c.out {
        Some(path) => std::fs::write(path, &r.report),
        None => {
            print!("{}", r.report);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return exit::INVALID_INPUT;
    }
    for (name, csv) in &r.orbits {
        let path = orbit_path(c.out.as_deref(), name);
        if let Err(e) = std::fs::write(&path, csv) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return exit::INVALID_INPUT;
        }
    }
    r.code
}

fn orbit_path(out: Option<&Path>, name: &str) -> PathBuf {
    match out {
        Some(p) => {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            p.with_file_name(format!("{stem}.{name}.csv"))
        }
        None => PathBuf::from(format!("{name}.csv")),
    }
}

/// JSON is pretty-printed; CSV flattens the report into `key,value` rows
/// with dotted paths.
pub fn render(report: &Value, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            let mut s = String::from("key,value\n");
            for (k, v) in rows {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), format!("\"{}\"", s.replace('"', "\"\"")))),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}
