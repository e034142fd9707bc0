//! Server registry, closed per-server tool allowlists, and the guarded
//! `tools/call` dispatch path.
//!
//! A call is dispatched only when the endpoint is registered, the tool name
//! is a byte-exact member of that endpoint's `allowedTools`, and the
//! clearance gate passes again at dispatch time. Tool names are never
//! normalized. The server's own `tools/list` plays no part in the decision.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::admission::{Admission, ConnectStatus, DenyReason, Flavor, Verdict};
use crate::audit::{AuditError, AuditEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: Value,
}

impl ToolCall {
    pub fn new(tool_name: impl Into<String>, arguments: Value) -> Self {
        Self {
            tool_name: tool_name.into(),
            arguments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("HTTP {0}")]
    Http(u16),
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed JSON-RPC response: {0}")]
    MalformedResponse(String),
    #[error("JSON-RPC id mismatch: sent {sent}, got {got}")]
    IdMismatch { sent: u64, got: Value },
    #[error("JSON-RPC error {code}: {message}")]
    JsonRpc {
        code: i64,
        message: String,
        error: Value,
    },
}

/// Carries an admitted `tools/call` to the server.
pub trait ToolTransport: Send + Sync {
    fn call_tool(&self, call: &ToolCall) -> Result<Value, TransportError>;
}

/// Supplies an OAuth bearer token per request, if any.
pub trait TokenProvider: Send + Sync {
    fn token(&self) -> Option<String>;
}

impl<F> TokenProvider for F
where
    F: Fn() -> Option<String> + Send + Sync,
{
    fn token(&self) -> Option<String> {
        self()
    }
}

/// The JSON-RPC 2.0 request body for a `tools/call`.
pub fn tools_call_request(id: u64, call: &ToolCall) -> Value {
    json!({
        "jsonrpc": "2.0",
        "id": id,
        "method": "tools/call",
        "params": {
            "name": call.tool_name,
            "arguments": call.arguments,
        },
    })
}

/// Extract `result` from a JSON-RPC response to request `id`.
pub fn parse_tools_call_response(id: u64, body: &[u8]) -> Result<Value, TransportError> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| TransportError::MalformedResponse(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(TransportError::MalformedResponse("response is not an object".into()));
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Err(TransportError::MalformedResponse("missing jsonrpc \"2.0\"".into()));
    }
    let got = obj.remove("id").unwrap_or(Value::Null);
    if got.as_u64() != Some(id) {
        return Err(TransportError::IdMismatch { sent: id, got });
    }
    if let Some(error) = obj.remove("error") {
        let code = error.get("code").and_then(Value::as_i64).ok_or_else(|| {
            TransportError::MalformedResponse("error member without integer code".into())
        })?;
        let message = error
            .get("message")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        return Err(TransportError::JsonRpc {
            code,
            message,
            error,
        });
    }
    obj.remove("result")
        .ok_or_else(|| TransportError::MalformedResponse("neither result nor error".into()))
}

/// JSON-RPC 2.0 over HTTP(S) POST, ids increasing from 1.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
    bearer: Option<Arc<dyn TokenProvider>>,
    next_id: AtomicU64,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("base_url", &self.base_url)
            .field("bearer", &self.bearer.is_some())
            .finish()
    }
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .redirects(0)
                .build(),
            bearer: None,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_bearer(mut self, provider: Arc<dyn TokenProvider>) -> Self {
        self.bearer = Some(provider);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl ToolTransport for HttpTransport {
    fn call_tool(&self, call: &ToolCall) -> Result<Value, TransportError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let body = serde_json::to_vec(&tools_call_request(id, call))
            .expect("JSON values always serialize");
        let mut req = self
            .agent
            .post(&self.base_url)
            .set("Content-Type", "application/json")
            .set("Accept", "application/json");
        if let Some(token) = self.bearer.as_ref().and_then(|p| p.token()) {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = match req.send_bytes(&body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(status, _)) => return Err(TransportError::Http(status)),
            Err(e) => return Err(TransportError::Network(e.to_string())),
        };
        if resp.status() != 200 {
            return Err(TransportError::Http(resp.status()));
        }
        let mut raw = Vec::new();
        std::io::Read::read_to_end(&mut resp.into_reader(), &mut raw)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        parse_tools_call_response(id, &raw)
    }
}

/// In-process transport that never touches the network. Every call bumps
/// the counter, so a denial that leaked a write shows up as a non-zero count.
#[derive(Debug, Default)]
pub struct CountingTransport {
    calls: AtomicU64,
    canned: HashMap<String, Value>,
    requests: Mutex<Vec<Value>>,
}

impl CountingTransport {
    /// Echoes `{name, arguments}` back as the result.
    pub fn echo() -> Self {
        Self::default()
    }

    pub fn with_result(mut self, tool: impl Into<String>, result: Value) -> Self {
        self.canned.insert(tool.into(), result);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// The JSON-RPC envelopes this transport would have sent.
    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ToolTransport for CountingTransport {
    fn call_tool(&self, call: &ToolCall) -> Result<Value, TransportError> {
        let id = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(tools_call_request(id, call));
        Ok(self.canned.get(&call.tool_name).cloned().unwrap_or_else(|| {
            json!({"echo": {"name": call.tool_name, "arguments": call.arguments}})
        }))
    }
}

/// A fresh echoing stub and its call counter (the same object).
pub fn counting_transport_stub() -> Arc<CountingTransport> {
    Arc::new(CountingTransport::echo())
}

#[derive(Clone)]
pub struct RegistryEntry {
    pub endpoint: String,
    pub bridge_id: String,
    pub required_clearance: String,
    pub allowed_tools: BTreeSet<String>,
    pub skip_clearance_preflight: bool,
    pub transport: Arc<dyn ToolTransport>,
}

impl fmt::Debug for RegistryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegistryEntry")
            .field("endpoint", &self.endpoint)
            .field("bridge_id", &self.bridge_id)
            .field("required_clearance", &self.required_clearance)
            .field("allowed_tools", &self.allowed_tools)
            .field("skip_clearance_preflight", &self.skip_clearance_preflight)
            .finish_non_exhaustive()
    }
}

impl RegistryEntry {
    pub fn new(
        endpoint: impl Into<String>,
        bridge_id: impl Into<String>,
        required_clearance: impl Into<String>,
        allowed_tools: impl IntoIterator<Item = impl Into<String>>,
        transport: Arc<dyn ToolTransport>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            bridge_id: bridge_id.into(),
            required_clearance: required_clearance.into(),
            allowed_tools: allowed_tools.into_iter().map(Into::into).collect(),
            skip_clearance_preflight: false,
            transport,
        }
    }

    pub fn skip_preflight(mut self, skip: bool) -> Self {
        self.skip_clearance_preflight = skip;
        self
    }

    pub fn admits(&self, tool_name: &str) -> bool {
        self.allowed_tools.contains(tool_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("endpoint `{0}` is already registered")]
    Duplicate(String),
    #[error("registry is frozen")]
    Frozen,
    #[error("required clearance `{0}` is not a level in the active scheme")]
    UnknownLevel(String),
    #[error("registry file is malformed: {0}")]
    Malformed(String),
}

#[derive(Default)]
struct RegistryState {
    entries: HashMap<String, RegistryEntry>,
    frozen: bool,
}

/// Endpoint-keyed registry with a one-way freeze.
#[derive(Default)]
pub struct Registry {
    state: RwLock<RegistryState>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let state = self.state.read().unwrap_or_else(|e| e.into_inner());
        f.debug_struct("Registry")
            .field("entries", &state.entries.len())
            .field("frozen", &state.frozen)
            .finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, entry: RegistryEntry) -> Result<(), RegistryError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        if state.frozen {
            return Err(RegistryError::Frozen);
        }
        if state.entries.contains_key(&entry.endpoint) {
            return Err(RegistryError::Duplicate(entry.endpoint));
        }
        state.entries.insert(entry.endpoint.clone(), entry);
        Ok(())
    }

    /// Bootstrap-time replacement; refused once frozen.
    pub fn replace(&self, entry: RegistryEntry) -> Result<(), RegistryError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        if state.frozen {
            return Err(RegistryError::Frozen);
        }
        state.entries.insert(entry.endpoint.clone(), entry);
        Ok(())
    }

    pub fn freeze(&self) {
        self.state.write().unwrap_or_else(|e| e.into_inner()).frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.state.read().unwrap_or_else(|e| e.into_inner()).frozen
    }

    pub fn get(&self, endpoint: &str) -> Option<RegistryEntry> {
        self.state
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .entries
            .get(endpoint)
            .cloned()
    }

    pub fn is_tool_admitted(&self, endpoint: &str, tool_name: &str) -> bool {
        self.state
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .entries
            .get(endpoint)
            .is_some_and(|e| e.admits(tool_name))
    }

    pub fn len(&self) -> usize {
        self.state.read().unwrap_or_else(|e| e.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispatchResult {
    Ok(Value),
    Denied { reason: DenyReason, detail: String },
    TransportError(TransportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchStatus {
    Ok,
    Denied,
    TransportError,
}

impl DispatchResult {
    pub fn status(&self) -> DispatchStatus {
        match self {
            DispatchResult::Ok(_) => DispatchStatus::Ok,
            DispatchResult::Denied { .. } => DispatchStatus::Denied,
            DispatchResult::TransportError(_) => DispatchStatus::TransportError,
        }
    }

    pub fn deny_reason(&self) -> Option<DenyReason> {
        match self {
            DispatchResult::Denied { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

/// The enforcement point in front of every tool call.
pub struct Gateway {
    registry: Registry,
    admission: Arc<Admission>,
    proceed_on_open_warn: bool,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("registry", &self.registry)
            .field("proceed_on_open_warn", &self.proceed_on_open_warn)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(admission: Arc<Admission>) -> Self {
        Self {
            registry: Registry::new(),
            admission,
            proceed_on_open_warn: false,
        }
    }

    /// In the open flavor, let a warned (failed) clearance check still
    /// dispatch. The warning is audited either way. Off by default and
    /// ignored in the enclaved flavor.
    pub fn proceed_on_open_warn(mut self, proceed: bool) -> Self {
        self.proceed_on_open_warn = proceed;
        self
    }

    pub fn admission(&self) -> &Admission {
        &self.admission
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Register an endpoint. Its required clearance must resolve in the
    /// admission scheme.
    pub fn register(&self, entry: RegistryEntry) -> Result<(), RegistryError> {
        if self
            .admission
            .scheme()
            .resolve(&entry.required_clearance)
            .is_none()
        {
            return Err(RegistryError::UnknownLevel(entry.required_clearance));
        }
        self.registry.register(entry)
    }

    pub fn freeze(&self) {
        self.registry.freeze();
    }

    pub fn is_tool_admitted(&self, endpoint: &str, tool_name: &str) -> bool {
        self.registry.is_tool_admitted(endpoint, tool_name)
    }

    pub fn invoke(
        &self,
        endpoint: &str,
        call: &ToolCall,
        flavor: Flavor,
    ) -> Result<DispatchResult, AuditError> {
        let Some(entry) = self.registry.get(endpoint) else {
            // The gate still runs (and is audited) for unregistered endpoints,
            // at the scheme's top level; the call is refused regardless.
            let top = self.admission.scheme().highest().canonical_name.clone();
            self.admission.connect(endpoint, &top, flavor, false)?;
            return Ok(DispatchResult::Denied {
                reason: DenyReason::NoRegisteredBridge,
                detail: format!("no registered bridge for `{endpoint}`; register the endpoint explicitly"),
            });
        };

        if !entry.admits(&call.tool_name) {
            self.admission.audit().append(
                AuditEvent::ToolDeny,
                json!({
                    "server": entry.endpoint,
                    "bridge": entry.bridge_id,
                    "toolName": call.tool_name,
                    "reason": "not in allowedTools",
                }),
            )?;
            return Ok(DispatchResult::Denied {
                reason: DenyReason::ToolNotAdmitted,
                detail: format!("tool {:?} is not in allowedTools", call.tool_name),
            });
        }

        let connected = self.admission.connect(
            &entry.endpoint,
            &entry.required_clearance,
            flavor,
            entry.skip_clearance_preflight,
        )?;
        let proceed = match connected.status {
            ConnectStatus::Ok => true,
            ConnectStatus::Warn => self.proceed_on_open_warn && flavor == Flavor::Open,
            ConnectStatus::Denied => false,
        };
        if !proceed {
            let (reason, detail) = match connected.verdict {
                Verdict::Deny { reason, detail } => (reason, detail),
                Verdict::Allow { .. } => unreachable!("non-ok connect always carries a deny"),
            };
            return Ok(DispatchResult::Denied { reason, detail });
        }

        Ok(match entry.transport.call_tool(call) {
            Ok(result) => DispatchResult::Ok(result),
            Err(e) => DispatchResult::TransportError(e),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TransportSpec {
    /// Defaults to the endpoint itself.
    #[serde(default)]
    pub base_url: Option<String>,
    /// Environment variable holding a bearer token, read per request.
    #[serde(default)]
    pub bearer_token_env: Option<String>,
}

/// One entry of a registry file.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RegistryEntrySpec {
    pub endpoint: String,
    pub bridge_id: String,
    pub required_clearance: String,
    pub allowed_tools: Vec<String>,
    #[serde(default)]
    pub skip_clearance_preflight: bool,
    #[serde(default)]
    pub transport: Option<TransportSpec>,
}

impl RegistryEntrySpec {
    /// Build the entry with an HTTP transport.
    pub fn into_entry(self) -> RegistryEntry {
        let transport = self.transport.unwrap_or(TransportSpec {
            base_url: None,
            bearer_token_env: None,
        });
        let mut http =
            HttpTransport::new(transport.base_url.unwrap_or_else(|| self.endpoint.clone()));
        if let Some(var) = transport.bearer_token_env {
            http = http.with_bearer(Arc::new(move || std::env::var(&var).ok()));
        }
        RegistryEntry::new(
            self.endpoint,
            self.bridge_id,
            self.required_clearance,
            self.allowed_tools,
            Arc::new(http),
        )
        .skip_preflight(self.skip_clearance_preflight)
    }
}

/// Parse a registry file: a JSON array of entries.
pub fn load_registry_file(raw: &[u8]) -> Result<Vec<RegistryEntrySpec>, RegistryError> {
    serde_json::from_slice(raw).map_err(|e| RegistryError::Malformed(e.to_string()))
}
