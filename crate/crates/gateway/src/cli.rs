//! `componenthub` command line. Every subcommand except `serve` and
//! `issue-token` is one call against a running server's HTTP API.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use componenthub_core::access::HmacTokenAuthority;
use componenthub_core::rocrate::{read_dir, write_zip};
use componenthub_core::{Principal, Role, SourceDescriptor, SourceScheme, Timestamp, Visibility};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::Method;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::ServiceConfig;
use crate::http::{EmbargoBody, PatchBody, TombstoneBody};

pub const EXIT_OK: u8 = 0;
pub const EXIT_DOMAIN: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "componenthub", version, about = "Registry for HPC workflow components")]
pub struct Cli {
    /// Base URL of the registry server.
    #[arg(long, global = true, env = "COMPONENTHUB_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
    /// Bearer token; anonymous when absent.
    #[arg(long, global = true, env = "COMPONENTHUB_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Print the API response as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the registry server until interrupted.
    Serve {
        #[arg(long, env = "COMPONENTHUB_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Register a component from a metadata document or a crate.
    Register(RegisterArgs),
    /// Show a record.
    Resolve { pid: String },
    /// List a record's versions.
    Versions { pid: String },
    /// Search the catalogue.
    Search(SearchArgs),
    /// Replace a record's document and/or sources.
    Update {
        pid: String,
        #[arg(long)]
        document: Option<PathBuf>,
        #[command(flatten)]
        sources: SourceArgs,
    },
    /// Withdraw a record, keeping its metadata resolvable.
    Tombstone {
        pid: String,
        #[arg(long)]
        reason: String,
    },
    /// Import a Workflow RO-Crate (zip file or directory).
    ImportCrate {
        path: PathBuf,
        #[command(flatten)]
        placement: PlacementArgs,
    },
    /// Download a record as a crate zip.
    ExportCrate {
        pid: String,
        #[arg(long)]
        version: Option<u32>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the FAIR assessment.
    Assess { pid: String },
    /// Hide a record until the given RFC 3339 instant.
    Embargo {
        pid: String,
        #[arg(long)]
        until: String,
    },
    /// Re-fetch a record's sources and compare checksums.
    Verify { pid: String },
    /// Run a record's declared check command in the sandbox.
    Viability { pid: String },
    /// Machines components are deployed on.
    Machine {
        #[command(subcommand)]
        command: MachineCommand,
    },
    /// Pull from a configured sister registry.
    Sync { remote: String },
    /// Send line-delimited provenance events (`-` reads stdin).
    ProvenanceIngest { file: PathBuf },
    /// Sign a token with the configured secret.
    IssueToken(IssueTokenArgs),
}

#[derive(Debug, Subcommand)]
pub enum MachineCommand {
    List,
    Register {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Crate zip or directory.
    #[arg(long = "crate", conflicts_with_all = ["document"], required_unless_present = "document")]
    pub krate: Option<PathBuf>,
    /// Metadata document (JSON).
    #[arg(long)]
    pub document: Option<PathBuf>,
    #[command(flatten)]
    pub sources: SourceArgs,
    #[command(flatten)]
    pub placement: PlacementArgs,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// `SCHEME=LOCATOR[#REF]`, repeatable.
    #[arg(long = "source", value_parser = parse_source)]
    pub source: Vec<SourceDescriptor>,
    /// JSON array of source descriptors.
    #[arg(long = "sources")]
    pub sources_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlacementArgs {
    #[arg(long, value_parser = parse_visibility)]
    pub visibility: Option<Visibility>,
    #[arg(long)]
    pub enclave: Option<String>,
    #[arg(long, value_parser = parse_timestamp)]
    pub embargo_until: Option<Timestamp>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub query: Option<String>,
    /// `FACET=VALUE`, repeatable.
    #[arg(long = "facet", value_parser = parse_pair)]
    pub facets: Vec<(String, String)>,
    #[arg(long)]
    pub offset: Option<usize>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub include_tombstoned: bool,
}

#[derive(Debug, Args)]
pub struct IssueTokenArgs {
    #[arg(long, env = "COMPONENTHUB_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subject: String,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_parser = parse_role, default_value = "reader")]
    pub role: Role,
    #[arg(long = "enclave")]
    pub enclaves: Vec<String>,
    /// Lifetime in seconds.
    #[arg(long, default_value_t = 86_400)]
    pub expires_in: i64,
}

/// `SCHEME=LOCATOR[#REF]`, the form `--source` takes.
pub fn parse_source(raw: &str) -> Result<SourceDescriptor, String> {
    let (scheme, rest) = raw.split_once('=').ok_or("expected SCHEME=LOCATOR[#REF]")?;
    let scheme = SourceScheme::parse(scheme).ok_or_else(|| format!("unknown scheme {scheme:?}"))?;
    let source = match rest.rsplit_once('#') {
        Some((locator, reference)) => SourceDescriptor::new(scheme, locator).with_ref(reference),
        None => SourceDescriptor::new(scheme, rest),
    };
    source.check()?;
    Ok(source)
}

fn parse_visibility(raw: &str) -> Result<Visibility, String> {
    Visibility::parse(raw).ok_or_else(|| format!("expected public, listed or hidden, got {raw:?}"))
}

fn parse_role(raw: &str) -> Result<Role, String> {
    Role::parse(raw).ok_or_else(|| format!("expected reader, contributor, curator or admin, got {raw:?}"))
}

fn parse_timestamp(raw: &str) -> Result<Timestamp, String> {
    Timestamp::parse_rfc3339(raw).ok_or_else(|| format!("expected an RFC 3339 timestamp, got {raw:?}"))
}

fn parse_pair(raw: &str) -> Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| "expected KEY=VALUE".to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Api { status: u16, body: Value, message: String },
    #[error("cannot reach {0}")]
    Transport(String),
    #[error("{0}")]
    Local(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DOMAIN,
        }
    }
}

fn local(e: impl std::fmt::Display) -> CliError {
    CliError::Local(e.to_string())
}

struct Api {
    base: String,
    token: Option<String>,
    http: Client,
}

impl Api {
    fn new(base: &str, token: Option<String>) -> Result<Self, CliError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(local)?;
        Ok(Api {
            base: base.trim_end_matches('/').to_string(),
            token,
            http,
        })
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        let rb = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    fn send(&self, rb: RequestBuilder) -> Result<Response, CliError> {
        let resp = rb.send().map_err(|e| CliError::Transport(format!("{}: {e}", self.base)))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body: Value = resp.json().unwrap_or(Value::Null);
        let message = body["message"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| format!("server answered {status}"));
        Err(CliError::Api { status, body, message })
    }

    fn json(&self, rb: RequestBuilder) -> Result<Value, CliError> {
        self.send(rb)?.json().map_err(local)
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| local(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| local(format!("{}: {e}", path.display())))
}

fn collect_sources(args: &SourceArgs) -> Result<Option<Vec<SourceDescriptor>>, CliError> {
    let mut sources = match &args.sources_file {
        Some(path) => serde_json::from_value::<Vec<SourceDescriptor>>(read_json(path)?)
            .map_err(|e| local(format!("{}: {e}", path.display())))?,
        None => Vec::new(),
    };
    sources.extend(args.source.iter().cloned());
    Ok((args.sources_file.is_some() || !args.source.is_empty()).then_some(sources))
}

fn placement_query(p: &PlacementArgs) -> Vec<(&'static str, String)> {
    let mut q = Vec::new();
    if let Some(e) = &p.enclave {
        q.push(("enclave", e.clone()));
    }
    if let Some(v) = p.visibility {
        q.push(("visibility", v.as_str().to_string()));
    }
    if let Some(t) = p.embargo_until {
        q.push(("embargo_until", t.to_string()));
    }
    q
}

/// Zip bytes for a crate path: zips are sent as is, directories are packed
/// with every file inline.
fn crate_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    if path.is_dir() {
        let krate = read_dir(path, u64::MAX).map_err(local)?;
        write_zip(&krate).map_err(local)
    } else {
        std::fs::read(path).map_err(|e| local(format!("{}: {e}", path.display())))
    }
}

fn seg(pid: &str) -> String {
    // PIDs are `ns:kind-serial`; nothing in them needs escaping but `:`
    pid.replace('%', "%25").replace('/', "%2F")
}

fn import(api: &Api, path: &Path, placement: &PlacementArgs) -> Result<Value, CliError> {
    let rb = api
        .request(Method::POST, "/api/v1/crates")
        .query(&placement_query(placement))
        .header(reqwest::header::CONTENT_TYPE, "application/zip")
        .body(crate_bytes(path)?);
    api.json(rb)
}

struct Output<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    json: bool,
}

impl Output<'_> {
    /// JSON mode prints `value`; otherwise `human` renders it.
    fn emit(&mut self, value: &Value, human: impl FnOnce(&Value) -> String) -> Result<(), CliError> {
        let text = if self.json {
            serde_json::to_string_pretty(value).map_err(local)?
        } else {
            human(value)
        };
        writeln!(self.out, "{text}").map_err(local)
    }

    fn warn(&mut self, value: &Value) {
        for w in value["warnings"].as_array().into_iter().flatten() {
            let _ = writeln!(self.err, "warning: {}: {}", w["property"].as_str().unwrap_or("-"), w["message"].as_str().unwrap_or(""));
        }
    }
}

fn s(v: &Value) -> &str {
    v.as_str().unwrap_or("-")
}

fn record_line(r: &Value) -> String {
    match r["view"].as_str() {
        Some("stub") => format!("{}\t{}\t(restricted)", s(&r["pid"]), s(&r["name"])),
        _ => format!("{}\t{}\tv{}\t{}", s(&r["pid"]), s(&r["document"]["name"]), r["version"], s(&r["status"])),
    }
}

fn describe_record(r: &Value) -> String {
    if r["view"] == "stub" {
        return format!("{}  {}\nrestricted: contact {}", s(&r["pid"]), s(&r["name"]), s(&r["organization"]));
    }
    let doc = &r["document"];
    let mut lines = vec![
        format!("{}  {}", s(&r["pid"]), s(&doc["name"])),
        format!("kind: {}  version: {}  status: {}", s(&r["kind"]), r["version"], s(&r["status"])),
    ];
    if let Some(d) = doc["description"].as_str() {
        lines.push(format!("description: {d}"));
    }
    if let Some(l) = doc["license"].as_str() {
        lines.push(format!("license: {l}"));
    }
    for src in r["sources"].as_array().into_iter().flatten() {
        lines.push(format!("source: {} {}", s(&src["scheme"]), s(&src["locator"])));
    }
    if let Some(note) = r.get("tombstone").filter(|t| !t.is_null()) {
        lines.push(format!("tombstoned at {}: {}", s(&note["removed_at"]), s(&note["reason"])));
    }
    lines.join("\n")
}

fn describe_report(r: &Value) -> String {
    let mut lines = vec![format!("{}  score {}/12  badge {}", s(&r["pid"]), r["score"], s(&r["badge"]))];
    for c in r["checks"].as_array().into_iter().flatten() {
        lines.push(format!("  {:<6} {}", s(&c["id"]), s(&c["result"])));
    }
    lines.join("\n")
}

fn dispatch(cli: Cli, o: &mut Output<'_>) -> Result<(), CliError> {
    let api = || Api::new(&cli.server, cli.token.clone());
    match cli.command {
        Command::Serve { config } => serve(config.as_deref(), o),
        Command::IssueToken(args) => issue_token(&args, o),
        Command::Register(args) => {
            let api = api()?;
            let value = if let Some(path) = &args.krate {
                if collect_sources(&args.sources)?.is_some() {
                    return Err(CliError::Usage("--source cannot be combined with --crate".into()));
                }
                import(&api, path, &args.placement)?
            } else {
                let document = read_json(args.document.as_deref().expect("clap requires --document"))?;
                let mut body = json!({
                    "document": document,
                    "sources": collect_sources(&args.sources)?.unwrap_or_default(),
                });
                for (k, v) in placement_query(&args.placement) {
                    body[k] = json!(v);
                }
                api.json(api.request(Method::POST, "/api/v1/records").json(&body))?
            };
            o.warn(&value);
            o.emit(&value, |v| s(v.get("record").unwrap_or(v).get("pid").unwrap_or(&Value::Null)).to_string())
        }
        Command::ImportCrate { path, placement } => {
            let value = import(&api()?, &path, &placement)?;
            o.warn(&value);
            o.emit(&value, |v| s(&v["record"]["pid"]).to_string())
        }
        Command::Resolve { pid } => {
            let api = api()?;
            let v = api.json(api.request(Method::GET, &format!("/api/v1/records/{}", seg(&pid))))?;
            o.emit(&v, describe_record)
        }
        Command::Versions { pid } => {
            let api = api()?;
            let v = api.json(api.request(Method::GET, &format!("/api/v1/records/{}/versions", seg(&pid))))?;
            o.emit(&v, |v| {
                v.as_array()
                    .into_iter()
                    .flatten()
                    .map(|snap| format!("v{}\t{}\t{}", snap["version"], s(&snap["recorded_at"]), s(&snap["checksum"])))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Search(args) => {
            let api = api()?;
            let mut q: Vec<(String, String)> = args.facets.clone();
            if let Some(text) = &args.query {
                q.push(("q".into(), text.clone()));
            }
            if let Some(n) = args.offset {
                q.push(("offset".into(), n.to_string()));
            }
            if let Some(n) = args.limit {
                q.push(("limit".into(), n.to_string()));
            }
            if args.include_tombstoned {
                q.push(("include_tombstoned".into(), "true".into()));
            }
            let v = api.json(api.request(Method::GET, "/api/v1/search").query(&q))?;
            o.emit(&v, |v| {
                let mut lines: Vec<String> = v["items"].as_array().into_iter().flatten().map(record_line).collect();
                lines.push(format!("{} match(es)", v["total"]));
                lines.join("\n")
            })
        }
        Command::Update { pid, document, sources } => {
            let body = PatchBody {
                document: document
                    .as_deref()
                    .map(|p| read_json(p).and_then(|v| serde_json::from_value(v).map_err(local)))
                    .transpose()?,
                sources: collect_sources(&sources)?,
            };
            if body.document.is_none() && body.sources.is_none() {
                return Err(CliError::Usage("nothing to update: pass --document and/or --source".into()));
            }
            let api = api()?;
            let v = api.json(api.request(Method::PATCH, &format!("/api/v1/records/{}", seg(&pid))).json(&body))?;
            o.emit(&v, |v| format!("{} now at version {}", s(&v["pid"]), v["version"]))
        }
        Command::Tombstone { pid, reason } => {
            let api = api()?;
            let rb = api
                .request(Method::DELETE, &format!("/api/v1/records/{}", seg(&pid)))
                .json(&TombstoneBody { reason });
            let v = api.json(rb)?;
            o.emit(&v, |v| format!("{} tombstoned after version {}", s(&v["pid"]), v["final_version"]))
        }
        Command::ExportCrate { pid, version, output } => {
            let api = api()?;
            let mut rb = api.request(Method::GET, &format!("/api/v1/records/{}/crate", seg(&pid)));
            if let Some(v) = version {
                rb = rb.query(&[("version", v)]);
            }
            let bytes = api.send(rb)?.bytes().map_err(local)?;
            let path = output.unwrap_or_else(|| PathBuf::from(format!("{}.crate.zip", pid.replace(':', "_"))));
            std::fs::write(&path, &bytes).map_err(|e| local(format!("{}: {e}", path.display())))?;
            let v = json!({"pid": pid, "path": path.display().to_string(), "bytes": bytes.len()});
            o.emit(&v, |v| s(&v["path"]).to_string())
        }
        Command::Assess { pid } => {
            let api = api()?;
            let v = api.json(api.request(Method::POST, &format!("/api/v1/records/{}/assess", seg(&pid))))?;
            o.emit(&v, describe_report)
        }
        Command::Embargo { pid, until } => {
            let until = parse_timestamp(&until).map_err(CliError::Usage)?;
            let api = api()?;
            let rb = api
                .request(Method::POST, &format!("/api/v1/records/{}/embargo", seg(&pid)))
                .json(&EmbargoBody { until });
            let v = api.json(rb)?;
            o.emit(&v, |v| format!("{pid} embargoed until {}", s(&v["embargo_until"])))
        }
        Command::Verify { pid } => {
            let api = api()?;
            let v = api.json(api.request(Method::POST, &format!("/api/v1/records/{}/verify", seg(&pid))))?;
            o.emit(&v, |v| {
                let state = match (v["reachable"].as_bool(), v["checksum_match"].as_bool()) {
                    (Some(false), _) => "unreachable",
                    (_, Some(false)) => "drifted",
                    (_, Some(true)) => "intact",
                    _ => "reachable",
                };
                format!("{pid} {state}: {}", s(&v["detail"]))
            })
        }
        Command::Viability { pid } => {
            let api = api()?;
            let v = api.json(api.request(Method::POST, &format!("/api/v1/records/{}/viability", seg(&pid))))?;
            o.emit(&v, |v| format!("{pid} {} (exit {})", s(&v["verdict"]), v["exit_status"]))
        }
        Command::Machine { command } => {
            let api = api()?;
            match command {
                MachineCommand::List => {
                    let v = api.json(api.request(Method::GET, "/api/v1/machines"))?;
                    o.emit(&v, |v| {
                        v.as_array()
                            .into_iter()
                            .flatten()
                            .map(|m| format!("{}\t{}\t{}\t{}", s(&m["pid"]), s(&m["name"]), s(&m["site"]), s(&m["architecture"])))
                            .collect::<Vec<_>>()
                            .join("\n")
                    })
                }
                MachineCommand::Register { file } => {
                    let v = api.json(api.request(Method::POST, "/api/v1/machines").json(&read_json(&file)?))?;
                    o.emit(&v, |v| s(&v["pid"]).to_string())
                }
            }
        }
        Command::Sync { remote } => {
            let api = api()?;
            let v = api.json(api.request(Method::POST, &format!("/api/v1/sync/{}", seg(&remote))))?;
            o.emit(&v, |v| {
                format!(
                    "{}: pulled {} created {} updated {} conflicts {}",
                    s(&v["remote"]),
                    v["pulled"],
                    v["created"],
                    v["updated"],
                    v["conflicts"].as_array().map_or(0, Vec::len)
                )
            })
        }
        Command::ProvenanceIngest { file } => {
            let mut text = String::new();
            if file.as_os_str() == "-" {
                std::io::stdin().read_to_string(&mut text).map_err(local)?;
            } else {
                text = std::fs::read_to_string(&file).map_err(|e| local(format!("{}: {e}", file.display())))?;
            }
            let api = api()?;
            let rb = api
                .request(Method::POST, "/api/v1/provenance")
                .header(reqwest::header::CONTENT_TYPE, "application/x-ndjson")
                .body(text);
            let v = api.json(rb)?;
            o.emit(&v, |v| {
                format!(
                    "{} run(s), {} malformed line(s), {} late event(s)",
                    v["runs"].as_array().map_or(0, Vec::len),
                    v["malformed"],
                    v["rejected_after_terminal"]
                )
            })
        }
    }
}

fn serve(config: Option<&Path>, o: &mut Output<'_>) -> Result<(), CliError> {
    let config = ServiceConfig::load(config).map_err(local)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(local)?;
    runtime.block_on(async {
        let handle = crate::server::serve(config).await.map_err(local)?;
        writeln!(o.out, "listening on {}", handle.base_url()).map_err(local)?;
        o.out.flush().map_err(local)?;
        let _ = tokio::signal::ctrl_c().await;
        handle.shutdown().await;
        Ok(())
    })
}

fn issue_token(args: &IssueTokenArgs, o: &mut Output<'_>) -> Result<(), CliError> {
    let config = ServiceConfig::load(args.config.as_deref()).map_err(local)?;
    let secret = config
        .tokens
        .load_secret()
        .map_err(local)?
        .ok_or_else(|| local("no token secret configured"))?;
    if args.subject.trim().is_empty() {
        return Err(CliError::Usage("--subject must not be empty".into()));
    }
    let principal = Principal::new(
        args.subject.clone(),
        args.name.clone().unwrap_or_else(|| args.subject.clone()),
        args.role,
        args.enclaves.clone(),
    );
    let expires = config.clock.build().map_err(local)?.now().plus_secs(args.expires_in);
    let token = HmacTokenAuthority::new(secret).issue(&principal, expires);
    let v = json!({"token": token.expose(), "expires_at": expires.to_string()});
    o.emit(&v, |v| s(&v["token"]).to_string())
}

/// Parse `args`, run the command and return the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                if !text.contains("Usage:") {
                    let _ = writeln!(err, "\n{}", <Cli as clap::CommandFactory>::command().render_usage());
                }
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let json = cli.json;
    let mut o = Output { out, err, json };
    match dispatch(cli, &mut o) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(o.err, "error: {e}");
            if let (true, CliError::Api { body, .. }) = (json, &e) {
                let _ = writeln!(o.err, "{body}");
            }
            if let CliError::Usage(_) = e {
                let _ = writeln!(o.err, "{}", <Cli as clap::CommandFactory>::command().render_usage());
            }
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("COMPONENTHUB_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let code = run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
