//! The `atsa` command line.
//!
//! Exit codes: 0 pass/admit, 1 deny or mismatch, 2 configuration or usage
//! error, 3 internal error.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::admission::{
    evaluate_document, verify_server_clearance, Admission, Flavor, HttpFetcher,
    VerificationRequest, Verdict,
};
use crate::audit::{verify_jsonl, AuditLog};
use crate::clock::{Clock, SystemClock};
use crate::conformance::{self, campaign, corpus, vectors};
use crate::gateway::{load_registry_file, DispatchResult, Gateway, ToolCall};
use crate::lattice::{builtin_scheme, load_scheme, ClassificationScheme};
use crate::sad::{parse_document, sign_document, KeyPair};
use crate::trustroot::{load_trust_root_file, TrustRoot};
use crate::wellknown_server::{load_serve_config, serve};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "atsa", version, about = "Attested tool-server admission for MCP hosts")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Trust root JSON file.
    #[arg(long, global = true, env = "ATSA_TRUST_ROOT")]
    pub trust_root: Option<PathBuf>,
    /// Built-in scheme name or scheme JSON file.
    #[arg(long, global = true, env = "ATSA_SCHEME", default_value = "default")]
    pub scheme: String,
    /// open (warn on failure) or enclaved (hard deny).
    #[arg(long, global = true, env = "ATSA_FLAVOR", default_value = "open")]
    pub flavor: Flavor,
    /// Audit log JSONL file, appended to.
    #[arg(long, global = true, env = "ATSA_AUDIT")]
    pub audit: Option<PathBuf>,
    /// Registry JSON file.
    #[arg(long, global = true, env = "ATSA_REGISTRY")]
    pub registry: Option<PathBuf>,
    /// Lock the trust root right after loading it.
    #[arg(long, global = true)]
    pub lock: bool,
    /// Print a JSON report on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an Ed25519 signing key; writes OUT and OUT.pub.
    Keygen {
        out: PathBuf,
        #[arg(long)]
        key_id: Option<String>,
    },
    /// Sign an attestation document.
    Sign {
        sad: PathBuf,
        #[arg(long)]
        key: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a server URL or a local document file.
    Verify {
        target: String,
        #[arg(long)]
        required: String,
        /// Host the file is treated as served from.
        #[arg(long)]
        origin: Option<String>,
        /// Evaluation time (RFC 3339); defaults to now.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
    },
    /// Run the conformance vectors with a fresh signing key.
    Vectors {
        /// Also export the vector fixtures here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the seeded adversarial campaign.
    Fuzz {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        per_category: usize,
        /// Comma-separated allowlist.
        #[arg(long, value_delimiter = ',', default_values_t = corpus::DEFAULT_ALLOWLIST.map(String::from))]
        allow: Vec<String>,
        /// Replay a JSONL corpus instead of generating one.
        #[arg(long)]
        corpus_in: Option<PathBuf>,
        /// Write the corpus used as JSONL.
        #[arg(long)]
        corpus_out: Option<PathBuf>,
    },
    /// Replay an audit log's hash chain.
    AuditVerify { path: PathBuf },
    /// Serve a document and a stub tools/call endpoint until killed.
    Serve { config: PathBuf },
    /// Invoke a tool through the gateway built from --registry.
    Invoke {
        endpoint: String,
        tool: String,
        /// Tool arguments as a JSON object.
        #[arg(long, default_value = "{}")]
        args: String,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }

    fn verdict(message: impl Into<String>) -> Self {
        Self { code: EXIT_VERDICT, message: message.into() }
    }
}

type CmdResult = Result<(), Failure>;

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("{}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    let g = &cli.global;
    match cli.command {
        Command::Keygen { out, key_id } => cmd_keygen(&out, key_id),
        Command::Sign { sad, key, out } => cmd_sign(&sad, &key, out.as_deref()),
        Command::Verify { target, required, origin, now } => {
            cmd_verify(g, &target, &required, origin.as_deref(), now)
        }
        Command::Vectors { out_dir } => cmd_vectors(g, out_dir.as_deref()),
        Command::Fuzz { seed, per_category, allow, corpus_in, corpus_out } => {
            cmd_fuzz(g, seed, per_category, allow, corpus_in.as_deref(), corpus_out.as_deref())
        }
        Command::AuditVerify { path } => cmd_audit_verify(g, &path),
        Command::Serve { config } => cmd_serve(&config),
        Command::Invoke { endpoint, tool, args } => cmd_invoke(g, &endpoint, &tool, &args),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

/// On-disk key format. The private file carries both halves; `.pub` only
/// the public key.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeyFile {
    pub key_id: String,
    pub public_key: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub private_key: Option<String>,
}

impl KeyFile {
    pub fn from_key(key: &KeyPair, with_private: bool) -> Self {
        Self {
            key_id: key.key_id.clone(),
            public_key: key.public_key_b64(),
            private_key: with_private
                .then(|| key.private_seed().map(|s| BASE64.encode(s)))
                .flatten(),
        }
    }

    pub fn into_key(self) -> Result<KeyPair, String> {
        let decode32 = |s: &str, what: &str| -> Result<[u8; 32], String> {
            BASE64
                .decode(s)
                .map_err(|e| format!("{what}: {e}"))?
                .try_into()
                .map_err(|v: Vec<u8>| format!("{what}: expected 32 bytes, got {}", v.len()))
        };
        let public = decode32(&self.public_key, "publicKey")?;
        match self.private_key {
            Some(p) => KeyPair::from_parts(self.key_id, Some(public), decode32(&p, "privateKey")?)
                .map_err(|e| e.to_string()),
            None => KeyPair::public_only(self.key_id, public).map_err(|e| e.to_string()),
        }
    }
}

pub fn public_key_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".pub");
    PathBuf::from(s)
}

fn create_new(path: &Path, private: bool) -> std::io::Result<fs::File> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    if private {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = private;
    opts.open(path)
}

pub fn write_key_files(key: &KeyPair, out: &Path) -> Result<PathBuf, String> {
    let pub_path = public_key_path(out);
    for p in [out, pub_path.as_path()] {
        if p.exists() {
            return Err(format!("{} already exists; refusing to overwrite", p.display()));
        }
    }
    let write = |path: &Path, private: bool| -> Result<(), String> {
        let body = serde_json::to_string_pretty(&KeyFile::from_key(key, private)).expect("key file serializes");
        let mut f = create_new(path, private).map_err(|e| format!("{}: {e}", path.display()))?;
        writeln!(f, "{body}").map_err(|e| format!("{}: {e}", path.display()))
    };
    write(out, true)?;
    write(&pub_path, false)?;
    Ok(pub_path)
}

pub fn read_key_file(path: &Path) -> Result<KeyPair, String> {
    let raw = fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: KeyFile = serde_json::from_slice(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
    file.into_key()
}

fn cmd_keygen(out: &Path, key_id: Option<String>) -> CmdResult {
    let mut rng = rand::rngs::OsRng;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("key").to_string();
    let key = KeyPair::generate(key_id.unwrap_or(stem), &mut rng);
    let pub_path = write_key_files(&key, out).map_err(Failure::config)?;
    println!("{} {}", key.key_id, key.public_key_b64());
    eprintln!("wrote {} and {}", out.display(), pub_path.display());
    Ok(())
}

fn cmd_sign(sad: &Path, key: &Path, out: Option<&Path>) -> CmdResult {
    let key = read_key_file(key).map_err(Failure::config)?;
    if !key.has_private_key() {
        return Err(Failure::config("key file has no private key"));
    }
    let doc = parse_document(&read(sad)?).map_err(|e| Failure::config(format!("{}: {e}", sad.display())))?;
    let signed = sign_document(&doc, &key).map_err(|e| Failure::internal(e.to_string()))?;
    let text = signed.to_json_pretty() + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scheme_arg(arg: &str) -> Result<ClassificationScheme, Failure> {
    if let Ok(s) = builtin_scheme(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Failure::config(format!("`{arg}` is neither a built-in scheme nor a file")));
    }
    load_scheme(&read(path)?).map_err(|e| Failure::config(format!("{arg}: {e}")))
}

fn load_trust_root(g: &GlobalOpts) -> Result<Arc<TrustRoot>, Failure> {
    let path = g
        .trust_root
        .as_deref()
        .ok_or_else(|| Failure::config("--trust-root (or ATSA_TRUST_ROOT) is required"))?;
    let content = load_trust_root_file(&read(path)?)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let root = Arc::new(TrustRoot::new(content));
    if g.lock {
        root.lock();
    }
    Ok(root)
}

fn is_url(target: &str) -> bool {
    target.starts_with("https://") || target.starts_with("http://")
}

fn report_verdict(g: &GlobalOpts, verdict: &Verdict) -> CmdResult {
    if g.json {
        let body = match verdict {
            Verdict::Allow { clearance, signer_key_id } => {
                json!({"verdict": "ADMIT", "clearance": clearance, "signerKeyId": signer_key_id})
            }
            Verdict::Deny { reason, detail } => json!({"verdict": "DENY", "reason": reason, "detail": detail}),
        };
        println!("{body}");
    }
    match verdict {
        Verdict::Allow { .. } => {
            if !g.json {
                println!("ADMIT");
            }
            Ok(())
        }
        Verdict::Deny { reason, detail } => {
            if !g.json {
                println!("DENY {reason}: {detail}");
            }
            Err(Failure::verdict(reason.as_str()))
        }
    }
}

fn cmd_verify(g: &GlobalOpts, target: &str, required: &str, origin: Option<&str>, now: Option<DateTime<Utc>>) -> CmdResult {
    let scheme = load_scheme_arg(&g.scheme)?;
    if scheme.resolve(required).is_none() {
        return Err(Failure::config(format!("unknown required level `{required}` in scheme `{}`", scheme.name())));
    }
    let root = load_trust_root(g)?;
    let snapshot = root.snapshot();
    let now = now.unwrap_or_else(|| SystemClock.now());
    let verdict = if is_url(target) {
        let fetcher = HttpFetcher::default();
        verify_server_clearance(&VerificationRequest {
            server_url: target,
            required_level: required,
            now,
            scheme: &scheme,
            trust_root: &snapshot,
            fetcher: &fetcher,
        })
    } else {
        let raw = read(Path::new(target))?;
        let origin = origin.map(str::to_ascii_lowercase);
        evaluate_document(&raw, origin.as_deref(), required, now, &scheme, &snapshot)
    };
    report_verdict(g, &verdict)
}

fn cmd_vectors(g: &GlobalOpts, out_dir: Option<&Path>) -> CmdResult {
    let key = KeyPair::generate("S", &mut rand::rngs::OsRng);
    let vectors = vectors::build_vectors(&key);
    if let Some(dir) = out_dir {
        vectors::export_vectors(&vectors, dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?;
    }
    let report = conformance::run_vectors(&vectors, &conformance::ProductionVerifier);
    if g.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.render());
    }
    for failure in report.failures() {
        eprintln!("vector {}: {}", failure.index, failure.actual.reason().map(|r| r.as_str()).unwrap_or("ADMIT"));
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::verdict(report.summary()))
    }
}

fn cmd_fuzz(
    g: &GlobalOpts,
    seed: u64,
    per_category: usize,
    allow: Vec<String>,
    corpus_in: Option<&Path>,
    corpus_out: Option<&Path>,
) -> CmdResult {
    if per_category == 0 && corpus_in.is_none() {
        return Err(Failure::config("--per-category must be at least 1"));
    }
    let allowlist: BTreeSet<String> = allow.into_iter().filter(|s| !s.is_empty()).collect();
    let cases = match corpus_in {
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            corpus::corpus_from_jsonl(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => corpus::generate_corpus(seed, &allowlist, per_category),
    };
    if let Some(p) = corpus_out {
        fs::write(p, corpus::corpus_to_jsonl(&cases)).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
    }
    let fixture = corpus::CampaignFixture::from_seed(seed);
    let report = campaign::run_campaign(&cases, &allowlist, &fixture).map_err(|e| Failure::internal(e.to_string()))?;
    if g.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.render());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::verdict("campaign violations found"))
    }
}

fn cmd_audit_verify(g: &GlobalOpts, path: &Path) -> CmdResult {
    let data = read(path)?;
    match verify_jsonl(&data) {
        Ok(n) => {
            if g.json {
                println!("{}", json!({"ok": true, "records": n}));
            } else {
                println!("ok: {n} records");
            }
            Ok(())
        }
        Err(index) => {
            if g.json {
                println!("{}", json!({"ok": false, "firstBadIndex": index}));
            }
            Err(Failure::verdict(format!("chain broken at index {index}")))
        }
    }
}

fn cmd_serve(config: &Path) -> CmdResult {
    let config = load_serve_config(config).map_err(|e| Failure::config(e.to_string()))?;
    let handle = serve(config).map_err(|e| Failure::config(e.to_string()))?;
    println!("{}", handle.base_url());
    let _ = std::io::stdout().flush();
    handle.wait();
    Ok(())
}

fn cmd_invoke(g: &GlobalOpts, endpoint: &str, tool: &str, args: &str) -> CmdResult {
    let arguments: Value = serde_json::from_str(args).map_err(|e| Failure::config(format!("--args: {e}")))?;
    if !arguments.is_object() {
        return Err(Failure::config("--args must be a JSON object"));
    }
    let scheme = Arc::new(load_scheme_arg(&g.scheme)?);
    let root = load_trust_root(g)?;
    let registry_path = g
        .registry
        .as_deref()
        .ok_or_else(|| Failure::config("--registry (or ATSA_REGISTRY) is required"))?;
    let specs = load_registry_file(&read(registry_path)?)
        .map_err(|e| Failure::config(format!("{}: {e}", registry_path.display())))?;
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let audit = match &g.audit {
        Some(p) => AuditLog::open_jsonl(p, clock.clone()).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?,
        None => AuditLog::recording(clock.clone()).0,
    };
    let admission = Arc::new(Admission::new(scheme, root, Arc::new(HttpFetcher::default()), clock, Arc::new(audit)));
    let gateway = Gateway::new(admission);
    for spec in specs {
        gateway
            .register(spec.into_entry())
            .map_err(|e| Failure::config(format!("{}: {e}", registry_path.display())))?;
    }
    gateway.freeze();
    let result = gateway
        .invoke(endpoint, &ToolCall::new(tool, arguments), g.flavor)
        .map_err(|e| Failure::internal(e.to_string()))?;
    match result {
        DispatchResult::Ok(value) => {
            println!("{value}");
            Ok(())
        }
        DispatchResult::Denied { reason, detail } => {
            if g.json {
                println!("{}", json!({"status": "denied", "reason": reason, "detail": detail}));
            } else {
                println!("DENY {reason}: {detail}");
            }
            Err(Failure::verdict(reason.as_str()))
        }
        DispatchResult::TransportError(e) => Err(Failure::verdict(format!("transport_error: {e}"))),
    }
}
