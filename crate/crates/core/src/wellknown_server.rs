//! Loopback stub of an attested MCP server, for tests and demos.
//!
//! Serves the configured attestation document byte-for-byte at both
//! well-known paths (404 when the server is unattested) and answers
//! JSON-RPC `tools/call` POSTs on the MCP path. Every request is tallied per
//! route; the tallies outlive [`StubServerHandle::shutdown`].

use std::collections::HashMap;
use std::io::Read as _;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::admission::{WELL_KNOWN_ATTESTATION_PATH, WELL_KNOWN_LEGACY_PATH};
use crate::sad::AttestationDocument;

const MAX_BODY_BYTES: u64 = 1024 * 1024;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("failed to bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("serve config is malformed: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToolBehavior {
    /// Result is `{"echo": {"name", "arguments"}}`.
    Echo,
    Result(Value),
    Error { code: i64, message: String },
}

#[derive(Debug, Clone)]
pub struct StubServerConfig {
    /// Exact bytes to serve at the well-known paths; `None` for an
    /// unattested server.
    pub sad: Option<Vec<u8>>,
    pub tool_behaviors: HashMap<String, ToolBehavior>,
    pub listen_address: String,
    pub mcp_path: String,
}

impl Default for StubServerConfig {
    fn default() -> Self {
        Self {
            sad: None,
            tool_behaviors: HashMap::new(),
            listen_address: "127.0.0.1:0".into(),
            mcp_path: "/mcp".into(),
        }
    }
}

impl StubServerConfig {
    pub fn with_document(mut self, doc: &AttestationDocument) -> Self {
        self.sad = Some(doc.to_json_bytes());
        self
    }

    pub fn with_raw_document(mut self, bytes: impl Into<Vec<u8>>) -> Self {
        self.sad = Some(bytes.into());
        self
    }

    pub fn with_tool(mut self, name: impl Into<String>, behavior: ToolBehavior) -> Self {
        self.tool_behaviors.insert(name.into(), behavior);
        self
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ServeFile {
    #[serde(default)]
    listen_address: Option<String>,
    #[serde(default)]
    sad_path: Option<String>,
    #[serde(default)]
    mcp_path: Option<String>,
    #[serde(default)]
    echo: Vec<String>,
    #[serde(default)]
    results: HashMap<String, Value>,
}

/// Load a serve config file:
/// `{"listenAddress"?, "sadPath"?, "mcpPath"?, "echo":[names], "results":{name: value}}`.
/// `sadPath` is resolved relative to the config file's directory.
pub fn load_serve_config(path: &std::path::Path) -> Result<StubServerConfig, ServeError> {
    let io_err = |p: &std::path::Path, source| ServeError::Io {
        path: p.display().to_string(),
        source,
    };
    let raw = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let file: ServeFile =
        serde_json::from_slice(&raw).map_err(|e| ServeError::Config(e.to_string()))?;
    let mut config = StubServerConfig::default();
    if let Some(addr) = file.listen_address {
        config.listen_address = addr;
    }
    if let Some(mcp) = file.mcp_path {
        config.mcp_path = mcp;
    }
    if let Some(sad_path) = file.sad_path {
        let base = path.parent().unwrap_or(std::path::Path::new("."));
        let full = base.join(sad_path);
        config.sad = Some(std::fs::read(&full).map_err(|e| io_err(&full, e))?);
    }
    for name in file.echo {
        config.tool_behaviors.insert(name, ToolBehavior::Echo);
    }
    for (name, result) in file.results {
        config.tool_behaviors.insert(name, ToolBehavior::Result(result));
    }
    Ok(config)
}

/// Per-route request tallies.
#[derive(Debug, Default)]
pub struct RouteCounters {
    attestation_gets: AtomicU64,
    legacy_gets: AtomicU64,
    tool_calls: AtomicU64,
    other: AtomicU64,
    tool_names: Mutex<Vec<String>>,
    authorization: Mutex<Vec<Option<String>>>,
    bodies: Mutex<Vec<Vec<u8>>>,
}

impl RouteCounters {
    pub fn attestation_gets(&self) -> u64 {
        self.attestation_gets.load(Ordering::SeqCst)
    }

    pub fn legacy_gets(&self) -> u64 {
        self.legacy_gets.load(Ordering::SeqCst)
    }

    /// POSTs received on the MCP path.
    pub fn tool_calls(&self) -> u64 {
        self.tool_calls.load(Ordering::SeqCst)
    }

    pub fn other(&self) -> u64 {
        self.other.load(Ordering::SeqCst)
    }

    pub fn total(&self) -> u64 {
        self.attestation_gets() + self.legacy_gets() + self.tool_calls() + self.other()
    }

    /// Tool names seen in `tools/call` requests, in arrival order.
    pub fn tool_names(&self) -> Vec<String> {
        self.tool_names.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// `Authorization` header of each MCP POST.
    pub fn authorization_headers(&self) -> Vec<Option<String>> {
        self.authorization.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Raw bodies of each MCP POST.
    pub fn request_bodies(&self) -> Vec<Vec<u8>> {
        self.bodies.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

pub struct StubServerHandle {
    addr: SocketAddr,
    mcp_path: String,
    server: Option<Arc<tiny_http::Server>>,
    thread: Option<JoinHandle<()>>,
    counters: Arc<RouteCounters>,
}

impl std::fmt::Debug for StubServerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubServerHandle")
            .field("addr", &self.addr)
            .field("running", &self.server.is_some())
            .finish()
    }
}

impl StubServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// The MCP endpoint URL, i.e. what a host registers.
    pub fn mcp_url(&self) -> String {
        format!("{}{}", self.base_url(), self.mcp_path)
    }

    pub fn counters(&self) -> Arc<RouteCounters> {
        Arc::clone(&self.counters)
    }

    pub fn is_running(&self) -> bool {
        self.server.is_some()
    }

    /// Stop accepting requests and close the socket. Idempotent.
    pub fn shutdown(&mut self) {
        if let Some(server) = self.server.take() {
            server.unblock();
            if let Some(thread) = self.thread.take() {
                let _ = thread.join();
            }
            drop(server);
        }
    }

    /// Block until the server stops.
    pub fn wait(mut self) {
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for StubServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn serve(config: StubServerConfig) -> Result<StubServerHandle, ServeError> {
    let server =
        tiny_http::Server::http(&config.listen_address).map_err(|e| ServeError::Bind {
            addr: config.listen_address.clone(),
            message: e.to_string(),
        })?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ServeError::Bind {
            addr: config.listen_address.clone(),
            message: "not an IP listener".into(),
        })?;
    let server = Arc::new(server);
    let counters = Arc::new(RouteCounters::default());
    let mcp_path = config.mcp_path.clone();

    let thread = {
        let server = Arc::clone(&server);
        let counters = Arc::clone(&counters);
        std::thread::spawn(move || {
            for request in server.incoming_requests() {
                handle(request, &config, &counters);
            }
        })
    };

    Ok(StubServerHandle {
        addr,
        mcp_path,
        server: Some(server),
        thread: Some(thread),
        counters,
    })
}

fn json_header() -> tiny_http::Header {
    tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn handle(mut request: tiny_http::Request, config: &StubServerConfig, counters: &RouteCounters) {
    let path = request.url().split('?').next().unwrap_or("").to_string();
    let method = request.method().clone();

    let response = match (&method, path.as_str()) {
        (tiny_http::Method::Get, p) if p == WELL_KNOWN_ATTESTATION_PATH || p == WELL_KNOWN_LEGACY_PATH => {
            if p == WELL_KNOWN_ATTESTATION_PATH {
                counters.attestation_gets.fetch_add(1, Ordering::SeqCst);
            } else {
                counters.legacy_gets.fetch_add(1, Ordering::SeqCst);
            }
            match &config.sad {
                Some(bytes) => tiny_http::Response::from_data(bytes.clone()).with_header(json_header()),
                None => tiny_http::Response::from_data(b"not found".to_vec()).with_status_code(404),
            }
        }
        (tiny_http::Method::Post, p) if p == config.mcp_path => {
            counters.tool_calls.fetch_add(1, Ordering::SeqCst);
            let auth = request
                .headers()
                .iter()
                .find(|h| h.field.equiv("Authorization"))
                .map(|h| h.value.as_str().to_string());
            counters
                .authorization
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(auth);
            let mut body = Vec::new();
            let _ = request
                .as_reader()
                .take(MAX_BODY_BYTES)
                .read_to_end(&mut body);
            counters
                .bodies
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(body.clone());
            let reply = answer_jsonrpc(&body, config, counters);
            tiny_http::Response::from_data(serde_json::to_vec(&reply).expect("JSON serializes"))
                .with_header(json_header())
        }
        _ => {
            counters.other.fetch_add(1, Ordering::SeqCst);
            tiny_http::Response::from_data(b"not found".to_vec()).with_status_code(404)
        }
    };
    let _ = request.respond(response);
}

fn rpc_error(id: Value, code: i64, message: &str) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}})
}

fn answer_jsonrpc(body: &[u8], config: &StubServerConfig, counters: &RouteCounters) -> Value {
    let Ok(req) = serde_json::from_slice::<Value>(body) else {
        return rpc_error(Value::Null, -32700, "Parse error");
    };
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    if req.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return rpc_error(id, -32600, "Invalid Request");
    }
    if req.get("method").and_then(Value::as_str) != Some("tools/call") {
        return rpc_error(id, -32601, "Method not found");
    }
    let params = req.get("params").cloned().unwrap_or(Value::Null);
    let Some(name) = params.get("name").and_then(Value::as_str) else {
        return rpc_error(id, -32602, "Invalid params");
    };
    counters
        .tool_names
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push(name.to_string());
    let arguments = params.get("arguments").cloned().unwrap_or(json!({}));
    match config.tool_behaviors.get(name) {
        Some(ToolBehavior::Echo) => json!({
            "jsonrpc": "2.0",
            "id": id,
            "result": {"echo": {"name": name, "arguments": arguments}},
        }),
        Some(ToolBehavior::Result(result)) => {
            json!({"jsonrpc": "2.0", "id": id, "result": result})
        }
        Some(ToolBehavior::Error { code, message }) => rpc_error(id, *code, message),
        None => rpc_error(id, -32602, &format!("Unknown tool: {name}")),
    }
}
