//! `bola-guard`: validate ESS documents, generate stubs, mint tokens, inspect
//! ACL journals and run the reference service.
//!
//! Exit codes: 0 success, 1 error findings (or a failed check), 2 usage error,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use bola_guard::acl_store::{AclStore, ObjectId};
use bola_guard::authz::{grant_as, issue_token, AccessLevel, AuthzError, SigningKey};
use bola_guard::generator::{roundtrip_check, spec_to_stub, stub_to_spec, GeneratorError};
use bola_guard::model::{emit_document, parse_document, DocumentFormat, EssDocument};
use bola_guard::validate::{classify_design, findings_to_json, has_errors, validate, Finding};
use bola_guard_server::ServiceConfig;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "bola-guard", version, about = "Object-level authorization toolkit for OpenAPI services")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a document against the ESS rules.
    Validate {
        spec: PathBuf,
        /// Print nothing; report through the exit code only.
        #[arg(short, long)]
        quiet: bool,
    },
    /// Report whether bindings are root-level, method-level, mixed or absent.
    Classify { spec: PathBuf },
    /// Generate a server stub from a document.
    GenStub {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Regenerate a document from a server stub.
    GenSpec {
        dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check that spec -> stub -> spec preserves the authorization facts.
    Roundtrip { spec: PathBuf },
    /// Run the reference service.
    Serve {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Token utilities.
    #[command(subcommand)]
    Token(TokenCommand),
    /// ACL journal utilities.
    #[command(subcommand)]
    Acl(AclCommand),
}

#[derive(Debug, Subcommand)]
enum TokenCommand {
    /// Mint a signed token.
    Issue(IssueArgs),
}

#[derive(Debug, Args)]
struct IssueArgs {
    #[arg(long)]
    user: String,
    #[arg(long)]
    name: String,
    /// Comma-separated group ids.
    #[arg(long, value_delimiter = ',')]
    groups: Vec<String>,
    /// Lifetime, e.g. `1h` or `30m`.
    #[arg(long, value_parser = humantime::parse_duration)]
    ttl: Duration,
    /// Signing key file.
    #[arg(long, env = "BOLA_GUARD_KEY")]
    key: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AclCommand {
    /// Print the entries in a journal.
    List {
        #[arg(long)]
        journal: PathBuf,
        /// Only entries under this route template.
        #[arg(long)]
        path: Option<String>,
    },
    /// Give a user access to an object, acting as its owner.
    Grant {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        actor: String,
        #[arg(long)]
        id: ObjectId,
        #[arg(long)]
        path: String,
        #[arg(long)]
        user: String,
        #[arg(long)]
        level: AccessLevel,
    },
    /// Rewrite a journal with one record per live entry.
    Compact {
        #[arg(long)]
        journal: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Io { .. } | GeneratorError::NoStubFound(_) => CliError::Io(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<AuthzError> for CliError {
    fn from(e: AuthzError) -> Self {
        match e {
            AuthzError::Store(err) => store_error(err),
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn store_error(e: bola_guard::acl_store::AclError) -> CliError {
    use bola_guard::acl_store::AclError;
    match e {
        AclError::StorageFailure(_) | AclError::CorruptJournal(_) => CliError::Io(e.to_string()),
        other => CliError::Failed(other.to_string()),
    }
}

/// Where command output goes; keeps `--json` handling in one place.
struct Out {
    json: bool,
}

impl Out {
    fn text(&self, line: impl std::fmt::Display) {
        if !self.json {
            println!("{line}");
        }
    }

    fn value(&self, v: serde_json::Value) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&v).expect("json output serializes"));
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parses a document; reference errors become findings, other parse errors fail.
fn load(path: &Path) -> Result<Result<EssDocument, Finding>, CliError> {
    let text = read_text(path)?;
    match parse_document(&text, DocumentFormat::from_path(path)) {
        Ok(doc) => Ok(Ok(doc)),
        Err(e) => match Finding::from_model_error(&e) {
            Some(f) => Ok(Err(f)),
            None => Err(CliError::Failed(format!("{}: {e}", path.display()))),
        },
    }
}

fn load_doc(path: &Path) -> Result<EssDocument, CliError> {
    load(path)?.map_err(|f| CliError::Failed(f.to_string()))
}

fn print_findings(out: &Out, findings: &[Finding]) {
    if out.json {
        println!("{}", findings_to_json(findings));
    } else {
        for f in findings {
            println!("{f}");
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = Out { json: cli.json };
    match cli.command {
        Command::Validate { spec, quiet } => {
            let findings = match load(&spec)? {
                Ok(doc) => validate(&doc),
                Err(f) => vec![f],
            };
            if !quiet {
                print_findings(&out, &findings);
            }
            if has_errors(&findings) {
                return Err(CliError::Failed(String::new()));
            }
        }
        Command::Classify { spec } => {
            let class = classify_design(&load_doc(&spec)?);
            out.text(class);
            out.value(json!({"design": class}));
        }
        Command::GenStub { spec, output } => {
            let doc = load_doc(&spec)?;
            match spec_to_stub(&doc, &output) {
                Ok(manifest) => {
                    let bound = manifest.routes.iter().filter(|r| r.object_auth.is_some()).count();
                    out.text(format!(
                        "wrote {} route(s), {bound} object-bound, to {}",
                        manifest.routes.len(),
                        output.display()
                    ));
                    out.value(serde_json::to_value(&manifest).expect("manifest serializes"));
                }
                Err(GeneratorError::ValidationFailed(findings)) => {
                    print_findings(&out, &findings);
                    return Err(CliError::Failed(String::new()));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::GenSpec { dir, output } => {
            let doc = stub_to_spec(&dir)?;
            let text = emit_document(&doc, DocumentFormat::from_path(&output));
            std::fs::write(&output, text).map_err(|e| CliError::Io(format!("{}: {e}", output.display())))?;
            out.text(format!("wrote {} ({} path(s))", output.display(), doc.paths.len()));
            out.value(json!({"output": output, "paths": doc.paths.keys().collect::<Vec<_>>()}));
        }
        Command::Roundtrip { spec } => {
            let ok = roundtrip_check(&load_doc(&spec)?);
            out.text(if ok { "OK" } else { "FAIL" });
            out.value(json!({"ok": ok}));
            if !ok {
                return Err(CliError::Failed(String::new()));
            }
        }
        Command::Serve { config } => {
            let cfg = ServiceConfig::load(&config).map_err(|e| CliError::Io(e.to_string()))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            runtime
                .block_on(bola_guard_server::serve(&cfg))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        Command::Token(TokenCommand::Issue(args)) => {
            let key_path = args
                .key
                .ok_or_else(|| CliError::Usage("no signing key: pass --key or set BOLA_GUARD_KEY".into()))?;
            let key = SigningKey::from_file(&key_path)
                .map_err(|e| CliError::Io(format!("{}: {e}", key_path.display())))?;
            let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let token = issue_token(&args.user, &args.name, args.groups, args.ttl, &key, now);
            out.text(token.as_str());
            out.value(json!({"token": token.as_str(), "user_id": token.user_id, "groups": token.groups, "exp": token.expiry}));
        }
        Command::Acl(cmd) => run_acl(&out, cmd)?,
    }
    Ok(())
}

fn run_acl(out: &Out, cmd: AclCommand) -> Result<(), CliError> {
    let open = |journal: &Path| {
        if !journal.exists() {
            return Err(CliError::Io(format!("{}: no such journal", journal.display())));
        }
        AclStore::open(journal).map_err(store_error)
    };
    match cmd {
        AclCommand::List { journal, path } => {
            let store = open(&journal)?;
            let entries = match &path {
                Some(p) => store.list_path(p),
                None => store.list(),
            };
            for e in &entries {
                out.text(e.to_json_line());
            }
            out.value(serde_json::to_value(&entries).expect("entries serialize"));
        }
        AclCommand::Grant { journal, actor, id, path, user, level } => {
            let store = open(&journal)?;
            let entry = grant_as(&store, &actor, id, &path, &user, level)?;
            out.text(entry.to_json_line());
            out.value(serde_json::to_value(&entry).expect("entry serializes"));
        }
        AclCommand::Compact { journal } => {
            let store = open(&journal)?;
            let report = store.compact().map_err(store_error)?;
            out.text(format!("{} record(s) -> {}", report.records_before, report.records_after));
            out.value(json!({"records_before": report.records_before, "records_after": report.records_after}));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string();
            if !message.is_empty() {
                if json {
                    println!("{}", json!({"error": message, "exit_code": e.code()}));
                }
                eprintln!("bola-guard: {message}");
            }
            if matches!(e, CliError::Usage(_)) {
                eprintln!("usage: bola-guard [--json] <COMMAND>; see `bola-guard --help`");
            }
            ExitCode::from(e.code())
        }
    }
}
