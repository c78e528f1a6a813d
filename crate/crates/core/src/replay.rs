//! Scripted MCP client that replays the three reference scenarios against a
//! running gateway and checks the observed outcomes.
//!
//! 1. Discovery and manual approval: a broad search finds nothing, a narrower
//!    one finds the customers product, the access request waits for the
//!    owner, and after approval the top-customers query runs.
//! 2. Automatic approval: the support tickets product is granted at once
//!    and a GROUP BY query runs.
//! 3. Purpose enforcement: with an analytics grant in hand, a query made for
//!    an email campaign is refused before it touches any row.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::mcp::{GatewayCall, GatewayClient, McpServer, Method, API_KEY_ENV, URL_ENV};

pub const SCENARIO_1_PURPOSE: &str = "Identify our top customers by total order value to prioritise account reviews";
pub const TOP_CUSTOMERS_SQL: &str = "SELECT customers.name, SUM(orders.amount) AS total \
     FROM customers JOIN orders ON customers.customer_id = orders.customer_id \
     GROUP BY customers.name ORDER BY total DESC LIMIT 3";
pub const SCENARIO_2_PURPOSE: &str = "Analyze the top reasons for support tickets";
pub const TICKET_CATEGORIES_SQL: &str =
    "SELECT category, COUNT(*) AS tickets FROM tickets GROUP BY category ORDER BY tickets DESC";
pub const SCENARIO_3_PURPOSE: &str = "Create a CSV file of all our top customers for a luxury email campaign";
pub const CAMPAIGN_SQL: &str = "SELECT name, email FROM customers";

/// Carries one JSON-RPC request to an MCP server and returns its reply.
pub trait McpTransport {
    fn roundtrip(&mut self, request: &Value) -> Result<Value, String>;

    /// Sends a message that gets no reply.
    fn notify(&mut self, notification: &Value) -> Result<(), String>;
}

/// An MCP server in a child process, spoken to over its stdio.
pub struct ChildMcp {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ChildMcp {
    /// Runs `<exe> mcp` with the gateway URL and API key in its environment.
    pub fn spawn(exe: &Path, gateway_url: &str, api_key: &str) -> std::io::Result<Self> {
        let mut child = Command::new(exe)
            .arg("mcp")
            .env(URL_ENV, gateway_url)
            .env(API_KEY_ENV, api_key)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Ok(Self { child, stdin, stdout })
    }
}

impl McpTransport for ChildMcp {
    fn roundtrip(&mut self, request: &Value) -> Result<Value, String> {
        writeln!(self.stdin, "{request}")
            .and_then(|()| self.stdin.flush())
            .map_err(|e| format!("cannot write to MCP server: {e}"))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| format!("cannot read from MCP server: {e}"))?;
        if n == 0 {
            return Err("MCP server closed its output".into());
        }
        serde_json::from_str(&line).map_err(|e| format!("MCP server sent invalid JSON: {e}"))
    }

    fn notify(&mut self, notification: &Value) -> Result<(), String> {
        writeln!(self.stdin, "{notification}")
            .and_then(|()| self.stdin.flush())
            .map_err(|e| format!("cannot write to MCP server: {e}"))
    }
}

impl Drop for ChildMcp {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// An MCP server in this process.
pub struct InProcessMcp<C>(pub McpServer<C>);

impl<C: GatewayClient> McpTransport for InProcessMcp<C> {
    fn roundtrip(&mut self, request: &Value) -> Result<Value, String> {
        let line = self
            .0
            .handle_line(&request.to_string())
            .ok_or("no reply to a request")?;
        serde_json::from_str(&line).map_err(|e| e.to_string())
    }

    fn notify(&mut self, notification: &Value) -> Result<(), String> {
        match self.0.handle_line(&notification.to_string()) {
            None => Ok(()),
            Some(reply) => Err(format!("unexpected reply to a notification: {reply}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Passed,
    /// Stopped at a pending request that nobody approved.
    Blocked {
        request_id: String,
    },
    Diverged {
        step: String,
        detail: String,
    },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Passed => 0,
            Outcome::Diverged { .. } => 1,
            Outcome::Blocked { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub transcript: Vec<String>,
    pub outcome: Outcome,
    /// Parsed bodies of every tool call, in order.
    pub tool_bodies: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approval {
    /// Approve as the owner through the decision endpoint.
    Auto,
    /// Poll until someone else approves, up to the given time.
    Wait(Duration),
    /// Stop at the pending request.
    None,
}

/// Gateway access outside MCP: the owner for approvals, the requester for
/// reading the audit trail.
pub struct Operators<'a> {
    pub owner: &'a dyn GatewayClient,
    pub requester: &'a dyn GatewayClient,
}

struct Diverged(String, String);

struct Driver<'a> {
    transport: &'a mut dyn McpTransport,
    ops: Operators<'a>,
    approval: Approval,
    next_id: u64,
    transcript: Vec<String>,
    tool_bodies: Vec<Value>,
    step: String,
}

type Step<T> = Result<T, Diverged>;

enum Flow {
    Done,
    Blocked(String),
}

impl Driver<'_> {
    fn note(&mut self, step: &str) {
        self.step = step.to_string();
        self.transcript.push(format!("# {step}"));
    }

    fn fail<T>(&self, detail: impl Into<String>) -> Step<T> {
        Err(Diverged(self.step.clone(), detail.into()))
    }

    fn rpc(&mut self, method: &str, params: Value) -> Step<Value> {
        let id = self.next_id;
        self.next_id += 1;
        let request = json!({ "jsonrpc": "2.0", "id": id, "method": method, "params": params });
        self.transcript.push(format!(">> {request}"));
        let reply = match self.transport.roundtrip(&request) {
            Ok(reply) => reply,
            Err(e) => return self.fail(e),
        };
        self.transcript.push(format!("<< {reply}"));
        if let Some(err) = reply.get("error") {
            return self.fail(format!("JSON-RPC error {err}"));
        }
        Ok(reply["result"].clone())
    }

    /// Calls a tool and parses its text content as JSON.
    fn tool(&mut self, name: &str, arguments: Value) -> Step<Value> {
        let result = self.rpc("tools/call", json!({ "name": name, "arguments": arguments }))?;
        let text = result["content"][0]["text"].as_str().unwrap_or_default().to_string();
        if result["isError"] != json!(false) {
            return self.fail(format!("{name} failed: {text}"));
        }
        let body: Value = match serde_json::from_str(&text) {
            Ok(body) => body,
            Err(e) => return self.fail(format!("{name} returned non-JSON content ({e}): {text}")),
        };
        self.tool_bodies.push(body.clone());
        Ok(body)
    }

    fn expect(&self, ok: bool, detail: impl FnOnce() -> String) -> Step<()> {
        if ok {
            Ok(())
        } else {
            self.fail(detail())
        }
    }

    fn handshake(&mut self) -> Step<()> {
        self.note("initialize");
        let init = self.rpc(
            "initialize",
            json!({
                "protocolVersion": crate::mcp::PROTOCOL_VERSION,
                "capabilities": {},
                "clientInfo": { "name": "dpgate-replay", "version": env!("CARGO_PKG_VERSION") }
            }),
        )?;
        self.expect(init["capabilities"]["tools"].is_object(), || {
            format!("no tools capability in {init}")
        })?;
        let initialized = json!({ "jsonrpc": "2.0", "method": "notifications/initialized" });
        self.transcript.push(format!(">> {initialized}"));
        if let Err(e) = self.transport.notify(&initialized) {
            return self.fail(e);
        }
        self.note("list tools");
        let tools = self.rpc("tools/list", json!({}))?;
        let count = tools["tools"].as_array().map_or(0, Vec::len);
        self.expect(count == 4, || format!("expected 4 tools, got {count}"))
    }

    fn http(&mut self, as_owner: bool, call: GatewayCall) -> Step<Value> {
        let who = if as_owner { "owner" } else { "requester" };
        let client = if as_owner { self.ops.owner } else { self.ops.requester };
        let method = match call.method {
            Method::Get => "GET",
            Method::Post => "POST",
        };
        let mut line = format!("{who} {method} /{}", call.path.join("/"));
        if !call.query.is_empty() {
            let q: Vec<String> = call.query.iter().map(|(k, v)| format!("{k}={v}")).collect();
            line.push('?');
            line.push_str(&q.join("&"));
        }
        if let Some(body) = &call.body {
            line.push(' ');
            line.push_str(&body.to_string());
        }
        self.transcript.push(format!("== {line}"));
        let reply = match client.call(&call) {
            Ok(reply) => reply,
            Err(e) => return self.fail(e),
        };
        self.transcript.push(format!("== {} {}", reply.status, reply.body));
        if !(200..300).contains(&reply.status) {
            return self.fail(format!("{line} returned {}: {}", reply.status, reply.body));
        }
        serde_json::from_str(&reply.body).or_else(|e| self.fail(format!("invalid JSON from {line}: {e}")))
    }

    fn access_status(&mut self, product_id: &str) -> Step<String> {
        let detail = self.tool("dataproduct_get", json!({ "product_id": product_id }))?;
        Ok(detail["access_status"].as_str().unwrap_or_default().to_string())
    }

    /// Gets a pending request approved according to the approval mode.
    fn settle_pending(&mut self, product_id: &str, request_id: &str) -> Step<Flow> {
        match self.approval {
            Approval::None => Ok(Flow::Blocked(request_id.to_string())),
            Approval::Auto => {
                self.note("owner approves the request");
                let decided = self.http(
                    true,
                    GatewayCall {
                        method: Method::Post,
                        path: vec![
                            "api".into(),
                            "accessrequests".into(),
                            request_id.into(),
                            "decision".into(),
                        ],
                        query: Vec::new(),
                        body: Some(json!({ "decision": "approve", "note": "Approved for internal analytics" })),
                    },
                )?;
                self.expect(decided["status"] == "approved", || {
                    format!("decision returned {decided}")
                })?;
                Ok(Flow::Done)
            }
            Approval::Wait(limit) => {
                self.note("wait for the owner to decide");
                let deadline = Instant::now() + limit;
                loop {
                    match self.access_status(product_id)?.as_str() {
                        "active" => return Ok(Flow::Done),
                        "pending" if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(500)),
                        "pending" => return Ok(Flow::Blocked(request_id.to_string())),
                        other => return self.fail(format!("request ended as {other}")),
                    }
                }
            }
        }
    }

    fn scenario_1(&mut self) -> Step<Flow> {
        self.handshake()?;
        self.note("search for customer sales revenue");
        let found = self.tool("dataproduct_search", json!({ "query": "customer sales revenue" }))?;
        self.expect(found.as_array().is_some_and(Vec::is_empty), || {
            format!("expected no products, got {found}")
        })?;

        self.note("search for customer");
        let found = self.tool("dataproduct_search", json!({ "query": "customer" }))?;
        let ids: Vec<&str> = found
            .as_array()
            .map(|a| a.iter().filter_map(|p| p["id"].as_str()).collect())
            .unwrap_or_default();
        self.expect(ids == ["customers"], || format!("expected [customers], got {found}"))?;

        self.note("inspect the customers product");
        let status = self.access_status("customers")?;
        self.expect(status == "none", || {
            format!("expected access_status none, got {status}")
        })?;

        self.note("request access");
        let request = self.tool(
            "dataproduct_request_access",
            json!({ "product_id": "customers", "purpose": SCENARIO_1_PURPOSE }),
        )?;
        self.expect(request["status"] == "pending", || {
            format!("expected pending, got {request}")
        })?;
        let request_id = request["id"].as_str().unwrap_or_default().to_string();
        if let Flow::Blocked(id) = self.settle_pending("customers", &request_id)? {
            return Ok(Flow::Blocked(id));
        }

        self.note("confirm access is active");
        let status = self.access_status("customers")?;
        self.expect(status == "active", || format!("expected active, got {status}"))?;

        self.note("query the top customers");
        let result = self.tool(
            "dataproduct_query",
            json!({ "product_id": "customers", "sql": TOP_CUSTOMERS_SQL }),
        )?;
        self.expect(result["status"] == "executed" && result["row_count"] == 3, || {
            format!("expected 3 executed rows, got {result}")
        })?;
        Ok(Flow::Done)
    }

    fn scenario_2(&mut self) -> Step<Flow> {
        self.handshake()?;
        self.note("search for support tickets");
        let found = self.tool("dataproduct_search", json!({ "query": "support tickets" }))?;
        let ids: Vec<&str> = found
            .as_array()
            .map(|a| a.iter().filter_map(|p| p["id"].as_str()).collect())
            .unwrap_or_default();
        self.expect(ids == ["support-tickets"], || {
            format!("expected [support-tickets], got {found}")
        })?;

        self.note("inspect the support tickets product");
        self.access_status("support-tickets")?;

        self.note("request access");
        let request = self.tool(
            "dataproduct_request_access",
            json!({ "product_id": "support-tickets", "purpose": SCENARIO_2_PURPOSE }),
        )?;
        self.expect(request["status"] == "auto_approved", || {
            format!("expected auto_approved, got {request}")
        })?;

        self.note("count tickets per category");
        let result = self.tool(
            "dataproduct_query",
            json!({ "product_id": "support-tickets", "sql": TICKET_CATEGORIES_SQL }),
        )?;
        self.expect(
            result["status"] == "executed" && result["row_count"].as_u64() >= Some(3),
            || format!("expected at least 3 categories, got {result}"),
        )?;
        let call_id = result["call_id"].as_str().unwrap_or_default().to_string();

        self.note("check the audit trail");
        let records = self.audit("support-tickets")?;
        let approved = records
            .iter()
            .position(|r| r["event"] == "access_auto_approved" && r["payload"]["request_id"] == request["id"]);
        let executed = records
            .iter()
            .position(|r| r["event"] == "query_executed" && r["payload"]["call_id"] == call_id.as_str());
        self.expect(matches!((approved, executed), (Some(a), Some(e)) if a < e), || {
            "expected access_auto_approved followed by query_executed".into()
        })?;
        Ok(Flow::Done)
    }

    fn scenario_3(&mut self) -> Step<Flow> {
        self.handshake()?;
        self.note("check for an existing grant");
        let status = self.access_status("customers")?;
        match status.as_str() {
            "active" => {}
            "none" | "rejected" => {
                self.note("request access for analytics");
                let request = self.tool(
                    "dataproduct_request_access",
                    json!({ "product_id": "customers", "purpose": SCENARIO_1_PURPOSE }),
                )?;
                let request_id = request["id"].as_str().unwrap_or_default().to_string();
                match request["status"].as_str() {
                    Some("approved" | "auto_approved") => {}
                    Some("pending") => {
                        if let Flow::Blocked(id) = self.settle_pending("customers", &request_id)? {
                            return Ok(Flow::Blocked(id));
                        }
                    }
                    _ => return self.fail(format!("unexpected request outcome {request}")),
                }
            }
            "pending" => {
                let pending = self.pending_request_id("customers")?;
                if let Flow::Blocked(id) = self.settle_pending("customers", &pending)? {
                    return Ok(Flow::Blocked(id));
                }
            }
            other => return self.fail(format!("unexpected access status {other}")),
        }

        self.note("query for an email campaign");
        let result = self.tool(
            "dataproduct_query",
            json!({ "product_id": "customers", "sql": CAMPAIGN_SQL, "purpose": SCENARIO_3_PURPOSE }),
        )?;
        let mismatches = result["reasons"]
            .as_array()
            .map_or(0, |r| r.iter().filter(|x| x["code"] == "purpose_mismatch").count());
        self.expect(result["status"] == "rejected" && mismatches >= 1, || {
            format!("expected a purpose_mismatch rejection, got {result}")
        })?;
        let call_id = result["call_id"].as_str().unwrap_or_default().to_string();

        self.note("check the audit trail");
        let records = self.audit("customers")?;
        let for_call: Vec<&str> = records
            .iter()
            .filter(|r| r["payload"]["call_id"] == call_id.as_str())
            .filter_map(|r| r["event"].as_str())
            .collect();
        self.expect(for_call == ["query_denied"], || {
            format!("expected only query_denied for {call_id}, got {for_call:?}")
        })?;
        Ok(Flow::Done)
    }

    fn audit(&mut self, product_id: &str) -> Step<Vec<Value>> {
        let records = self.http(
            false,
            GatewayCall {
                method: Method::Get,
                path: vec!["api".into(), "audit".into()],
                query: vec![("product_id".into(), product_id.into())],
                body: None,
            },
        )?;
        Ok(records.as_array().cloned().unwrap_or_default())
    }

    fn pending_request_id(&mut self, product_id: &str) -> Step<String> {
        let list = self.http(
            false,
            GatewayCall {
                method: Method::Get,
                path: vec!["api".into(), "accessrequests".into()],
                query: vec![("status".into(), "pending".into())],
                body: None,
            },
        )?;
        list.as_array()
            .and_then(|l| l.iter().find(|r| r["product_id"] == product_id))
            .and_then(|r| r["id"].as_str())
            .map(str::to_string)
            .map_or_else(|| self.fail("no pending request found"), Ok)
    }
}

/// Runs scenario `number` (1, 2 or 3) over `transport`.
pub fn run_scenario(
    number: u8,
    transport: &mut dyn McpTransport,
    ops: Operators<'_>,
    approval: Approval,
) -> ReplayReport {
    let mut driver = Driver {
        transport,
        ops,
        approval,
        next_id: 1,
        transcript: Vec::new(),
        tool_bodies: Vec::new(),
        step: String::new(),
    };
    let flow = match number {
        1 => driver.scenario_1(),
        2 => driver.scenario_2(),
        3 => driver.scenario_3(),
        n => Err(Diverged(
            "start".into(),
            format!("unknown scenario {n}; expected 1, 2 or 3"),
        )),
    };
    let outcome = match flow {
        Ok(Flow::Done) => Outcome::Passed,
        Ok(Flow::Blocked(request_id)) => {
            driver.transcript.push(format!(
                "# blocked: request {request_id} is pending owner approval; the agent cannot proceed"
            ));
            Outcome::Blocked { request_id }
        }
        Err(Diverged(step, detail)) => {
            driver.transcript.push(format!("# diverged at {step}: {detail}"));
            Outcome::Diverged { step, detail }
        }
    };
    ReplayReport {
        transcript: driver.transcript,
        outcome,
        tool_bodies: driver.tool_bodies,
    }
}
