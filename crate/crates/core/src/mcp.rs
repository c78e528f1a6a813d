//! MCP server: newline-delimited JSON-RPC 2.0 over stdio, exposing four
//! data product tools that forward to the gateway's HTTP API.
//!
//! The server keeps no access state of its own. Each valid `tools/call`
//! makes exactly one gateway request and returns the gateway's JSON body
//! verbatim as a single text content item.

use std::io::{BufRead, Write};
use std::time::Duration;

use serde_json::{json, Value};

pub const PROTOCOL_VERSION: &str = "2024-11-05";
pub const SERVER_NAME: &str = "dpgate";
pub const URL_ENV: &str = "MARKETPLACE_URL";
pub const API_KEY_ENV: &str = "MARKETPLACE_API_KEY";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const NOT_INITIALIZED: i64 = -32002;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

/// One request to the gateway. `path` segments are already split so ids
/// are escaped by the client.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayCall {
    pub method: Method,
    pub path: Vec<String>,
    pub query: Vec<(String, String)>,
    pub body: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayReply {
    pub status: u16,
    pub body: String,
}

pub trait GatewayClient {
    /// `Err` carries a diagnostic when the gateway could not be reached.
    fn call(&self, call: &GatewayCall) -> Result<GatewayReply, String>;
}

/// Blocking HTTP client for the gateway API.
pub struct HttpGatewayClient {
    base: reqwest::Url,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpGatewayClient {
    pub fn new(base_url: &str, api_key: &str) -> Result<Self, String> {
        let base = reqwest::Url::parse(base_url).map_err(|e| format!("invalid {URL_ENV} {base_url:?}: {e}"))?;
        if base.cannot_be_a_base() {
            return Err(format!("invalid {URL_ENV} {base_url:?}: not a base URL"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| format!("cannot build HTTP client: {e}"))?;
        Ok(Self {
            base,
            api_key: api_key.to_string(),
            client,
        })
    }

    /// Reads `MARKETPLACE_URL` and `MARKETPLACE_API_KEY`.
    pub fn from_env() -> Result<Self, String> {
        let url = std::env::var(URL_ENV).map_err(|_| format!("{URL_ENV} is not set"))?;
        let key = std::env::var(API_KEY_ENV).map_err(|_| format!("{API_KEY_ENV} is not set"))?;
        Self::new(&url, &key)
    }

    fn url(&self, call: &GatewayCall) -> reqwest::Url {
        let mut url = self.base.clone();
        {
            let mut segments = url.path_segments_mut().expect("checked in new");
            segments.pop_if_empty();
            for segment in &call.path {
                segments.push(segment);
            }
        }
        if !call.query.is_empty() {
            url.query_pairs_mut().extend_pairs(&call.query);
        }
        url
    }
}

impl GatewayClient for HttpGatewayClient {
    fn call(&self, call: &GatewayCall) -> Result<GatewayReply, String> {
        let url = self.url(call);
        let request = match call.method {
            Method::Get => self.client.get(url.clone()),
            Method::Post => self.client.post(url.clone()),
        };
        let mut request = request.header("X-Api-Key", &self.api_key);
        if let Some(body) = &call.body {
            request = request
                .header("Content-Type", "application/json")
                .body(body.to_string());
        }
        let response = request
            .send()
            .map_err(|e| format!("gateway unreachable at {url}: {e}"))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| format!("cannot read gateway response from {url}: {e}"))?;
        Ok(GatewayReply { status, body })
    }
}

fn string_prop(description: &str) -> Value {
    json!({ "type": "string", "description": description })
}

/// The four tool descriptors, in a fixed order.
pub fn tool_descriptors() -> Value {
    json!([
        {
            "name": "dataproduct_search",
            "description": "Search the data product marketplace. Every whitespace-separated term must appear in a product's id, title or description (case-insensitive). Returns id, name, description and owner for each match.",
            "inputSchema": {
                "type": "object",
                "properties": { "query": string_prop("Search terms, e.g. \"customer\"") },
                "required": ["query"],
                "additionalProperties": false
            }
        },
        {
            "name": "dataproduct_get",
            "description": "Get a data product's full details: metadata, data contract (schema, classifications, permitted purposes), connection details and your current access status.",
            "inputSchema": {
                "type": "object",
                "properties": { "product_id": string_prop("Data product id") },
                "required": ["product_id"],
                "additionalProperties": false
            }
        },
        {
            "name": "dataproduct_request_access",
            "description": "Request access to a data product for a stated business purpose. The request is approved automatically, left pending for the owner, or rejected, depending on governance policy.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "product_id": string_prop("Data product id"),
                    "purpose": string_prop("Why the data is needed, in plain words")
                },
                "required": ["product_id", "purpose"],
                "additionalProperties": false
            }
        },
        {
            "name": "dataproduct_query",
            "description": "Run one SQL SELECT against a data product you have access to. Supports a single inner JOIN, WHERE, GROUP BY with COUNT/SUM/AVG/MIN/MAX, ORDER BY and LIMIT. The query is checked against the data contract and the stated purpose before it runs.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "product_id": string_prop("Data product id"),
                    "sql": string_prop("A single SELECT statement"),
                    "purpose": string_prop("Purpose of this query; defaults to the purpose of your access grant")
                },
                "required": ["product_id", "sql"],
                "additionalProperties": false
            }
        }
    ])
}

/// Per-session protocol state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct McpSession {
    pub initialized: bool,
    pub client_info: Option<Value>,
}

pub struct McpServer<C> {
    client: C,
    session: McpSession,
}

struct RpcError {
    code: i64,
    message: String,
}

impl RpcError {
    fn new(code: i64, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn error_response(id: Value, err: RpcError) -> Value {
    json!({
        "jsonrpc": "2.0",
        "id": id,
        "error": { "code": err.code, "message": err.message }
    })
}

/// Pulls the declared string arguments out of a tool call, rejecting
/// missing required ones, wrong types and unknown keys.
fn string_args(arguments: &Value, required: &[&str], optional: &[&str]) -> Result<Vec<Option<String>>, RpcError> {
    let empty = serde_json::Map::new();
    let map = match arguments {
        Value::Null => &empty,
        Value::Object(map) => map,
        _ => return Err(RpcError::new(INVALID_PARAMS, "arguments must be an object")),
    };
    if let Some(unknown) = map
        .keys()
        .find(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str()))
    {
        return Err(RpcError::new(INVALID_PARAMS, format!("unknown argument {unknown:?}")));
    }
    required
        .iter()
        .map(|k| (k, true))
        .chain(optional.iter().map(|k| (k, false)))
        .map(|(key, needed)| match map.get(*key) {
            Some(Value::String(s)) => Ok(Some(s.clone())),
            None | Some(Value::Null) if !needed => Ok(None),
            None | Some(Value::Null) => Err(RpcError::new(
                INVALID_PARAMS,
                format!("missing required argument {key:?}"),
            )),
            Some(_) => Err(RpcError::new(
                INVALID_PARAMS,
                format!("argument {key:?} must be a string"),
            )),
        })
        .collect()
}

fn tool_call(name: &str, arguments: &Value) -> Result<GatewayCall, RpcError> {
    let api = |rest: &[&str]| {
        std::iter::once("api")
            .chain(rest.iter().copied())
            .map(str::to_string)
            .collect()
    };
    match name {
        "dataproduct_search" => {
            let args = string_args(arguments, &["query"], &[])?;
            Ok(GatewayCall {
                method: Method::Get,
                path: api(&["dataproducts"]),
                query: vec![("q".into(), args[0].clone().unwrap_or_default())],
                body: None,
            })
        }
        "dataproduct_get" => {
            let args = string_args(arguments, &["product_id"], &[])?;
            let id = args[0].clone().unwrap_or_default();
            Ok(GatewayCall {
                method: Method::Get,
                path: api(&["dataproducts", &id]),
                query: Vec::new(),
                body: None,
            })
        }
        "dataproduct_request_access" => {
            let args = string_args(arguments, &["product_id", "purpose"], &[])?;
            Ok(GatewayCall {
                method: Method::Post,
                path: api(&["accessrequests"]),
                query: Vec::new(),
                body: Some(json!({ "product_id": args[0], "purpose_text": args[1] })),
            })
        }
        "dataproduct_query" => {
            let args = string_args(arguments, &["product_id", "sql"], &["purpose"])?;
            let mut body = json!({ "product_id": args[0], "sql": args[1] });
            if let Some(purpose) = &args[2] {
                body["purpose_text"] = json!(purpose);
            }
            Ok(GatewayCall {
                method: Method::Post,
                path: api(&["query"]),
                query: Vec::new(),
                body: Some(body),
            })
        }
        other => Err(RpcError::new(INVALID_PARAMS, format!("unknown tool {other:?}"))),
    }
}

fn tool_result(text: String, is_error: bool) -> Value {
    json!({
        "content": [{ "type": "text", "text": text }],
        "isError": is_error
    })
}

impl<C: GatewayClient> McpServer<C> {
    pub fn new(client: C) -> Self {
        Self {
            client,
            session: McpSession::default(),
        }
    }

    pub fn session(&self) -> &McpSession {
        &self.session
    }

    /// Handles one input line; `None` when no reply is due (notifications,
    /// blank lines).
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        if line.trim().is_empty() {
            return None;
        }
        let reply = match serde_json::from_str::<Value>(line) {
            Err(e) => Some(error_response(
                Value::Null,
                RpcError::new(PARSE_ERROR, format!("parse error: {e}")),
            )),
            Ok(message) => self.handle_message(message),
        };
        reply.map(|r| r.to_string())
    }

    fn handle_message(&mut self, message: Value) -> Option<Value> {
        let Value::Object(obj) = &message else {
            return Some(error_response(
                Value::Null,
                RpcError::new(INVALID_REQUEST, "expected a JSON-RPC request object"),
            ));
        };
        let id = obj.get("id").cloned();
        let method = obj.get("method").and_then(Value::as_str);
        let valid_id = id
            .as_ref()
            .is_none_or(|id| id.is_string() || id.is_number() || id.is_null());
        if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") || method.is_none() || !valid_id {
            // Nothing to answer when there is neither an id nor a method.
            if id.is_none() && method.is_none() {
                return None;
            }
            return Some(error_response(
                id.unwrap_or(Value::Null),
                RpcError::new(INVALID_REQUEST, "invalid JSON-RPC 2.0 request"),
            ));
        }
        let method = method.unwrap_or_default();
        let params = obj.get("params").cloned().unwrap_or(Value::Null);

        let Some(id) = id else {
            self.handle_notification(method);
            return None;
        };
        Some(match self.dispatch(method, &params) {
            Ok(result) => json!({ "jsonrpc": "2.0", "id": id, "result": result }),
            Err(err) => error_response(id, err),
        })
    }

    fn handle_notification(&mut self, method: &str) {
        // `notifications/initialized` needs no action: the session is
        // usable as soon as `initialize` has been answered.
        tracing::debug!(method, "notification");
    }

    fn dispatch(&mut self, method: &str, params: &Value) -> Result<Value, RpcError> {
        match method {
            "initialize" => {
                self.session.initialized = true;
                self.session.client_info = params.get("clientInfo").cloned();
                Ok(json!({
                    "protocolVersion": PROTOCOL_VERSION,
                    "capabilities": { "tools": { "listChanged": false } },
                    "serverInfo": { "name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION") }
                }))
            }
            "ping" => Ok(json!({})),
            "tools/list" | "tools/call" if !self.session.initialized => Err(RpcError::new(
                NOT_INITIALIZED,
                "server not initialized; send initialize first",
            )),
            "tools/list" => Ok(json!({ "tools": tool_descriptors() })),
            "tools/call" => {
                let name = params
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| RpcError::new(INVALID_PARAMS, "tools/call needs a string \"name\""))?;
                let arguments = params.get("arguments").unwrap_or(&Value::Null);
                let call = tool_call(name, arguments)?;
                Ok(self.forward(&call))
            }
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    fn forward(&self, call: &GatewayCall) -> Value {
        match self.client.call(call) {
            Err(diagnostic) => tool_result(diagnostic, true),
            Ok(reply) if reply.status == 401 => tool_result(format!("invalid API key: {}", reply.body), true),
            Ok(reply) => {
                // Access denials are information for the agent, not failures.
                let is_error = !(200..300).contains(&reply.status) && reply.status != 403;
                tool_result(reply.body, is_error)
            }
        }
    }

    /// Serves until end of input, writing one reply line per request.
    pub fn serve(&mut self, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if let Some(reply) = self.handle_line(&line) {
                output.write_all(reply.as_bytes())?;
                output.write_all(b"\n")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}
