//! Seeded registries, running gateways and brute-force answers for the
//! reference scenarios computed straight from the seed CSV files.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use dpgate::clock::Clock;
use dpgate::gateway::http::BackgroundServer;
use dpgate::mcp::{GatewayCall, GatewayClient, GatewayReply, HttpGatewayClient};
use dpgate::{seed, Gateway};

pub struct Env {
    pub dir: tempfile::TempDir,
    pub gateway: Arc<Gateway>,
    pub server: BackgroundServer,
}

impl Env {
    pub fn audit_path(&self) -> PathBuf {
        self.dir.path().join("audit.jsonl")
    }

    pub fn client(&self, key: &str) -> HttpGatewayClient {
        HttpGatewayClient::new(&self.server.url(), key).unwrap()
    }
}

/// Fresh seed, file-backed audit log, server on an ephemeral port.
pub fn start(clock: Option<Arc<dyn Clock>>) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry");
    seed::write_seed(&registry, false).unwrap();
    let mut gateway = Gateway::open(&registry, Some(&dir.path().join("audit.jsonl"))).unwrap();
    if let Some(clock) = clock {
        gateway = gateway.with_clock(clock);
    }
    let gateway = Arc::new(gateway);
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let server = BackgroundServer::start(gateway.clone(), addr).unwrap();
    Env { dir, gateway, server }
}

/// Wraps a client and counts the calls made through it.
pub struct Counting<C> {
    pub inner: C,
    pub calls: Mutex<Vec<String>>,
}

impl<C> Counting<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl<C: GatewayClient> GatewayClient for Counting<C> {
    fn call(&self, call: &GatewayCall) -> Result<GatewayReply, String> {
        self.calls.lock().unwrap().push(call.path.join("/"));
        self.inner.call(call)
    }
}

fn dataset(name: &str) -> Vec<csv::StringRecord> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("seed/datasets")
        .join(format!("{name}.csv"));
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn cents(text: &str) -> i64 {
    let (whole, frac) = text.split_once('.').unwrap_or((text, "0"));
    let frac = format!("{frac:0<2}");
    whole.parse::<i64>().unwrap() * 100 + frac.parse::<i64>().unwrap()
}

fn money(c: i64) -> String {
    format!("{}.{:02}", c / 100, c % 100)
}

/// `[name, total]` of the `k` customers with the largest order totals.
pub fn top_customers(k: usize) -> Vec<(String, String)> {
    let customers = dataset("customers");
    let orders = dataset("orders");
    let mut totals: Vec<(String, i64)> = Vec::new();
    for c in &customers {
        for o in &orders {
            if c[0] == o[1] {
                match totals.iter_mut().find(|(name, _)| name == &c[1]) {
                    Some((_, sum)) => *sum += cents(&o[2]),
                    None => totals.push((c[1].to_string(), cents(&o[2]))),
                }
            }
        }
    }
    let mut ranked: Vec<(String, i64)> = Vec::new();
    for entry in totals {
        let at = ranked.iter().position(|(_, s)| *s < entry.1).unwrap_or(ranked.len());
        ranked.insert(at, entry);
    }
    ranked.into_iter().take(k).map(|(n, s)| (n, money(s))).collect()
}

/// `[category, count]` by descending count, ties in first-seen order.
pub fn ticket_categories() -> Vec<(String, i64)> {
    let mut counts: Vec<(String, i64)> = Vec::new();
    for t in dataset("tickets") {
        match counts.iter_mut().find(|(c, _)| c == &t[1]) {
            Some((_, n)) => *n += 1,
            None => counts.push((t[1].to_string(), 1)),
        }
    }
    let mut ranked: Vec<(String, i64)> = Vec::new();
    for entry in counts {
        let at = ranked.iter().position(|(_, n)| *n < entry.1).unwrap_or(ranked.len());
        ranked.insert(at, entry);
    }
    ranked
}
