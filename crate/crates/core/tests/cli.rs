use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use dpgate::seed::ALICE_KEY;

const BIN: &str = env!("CARGO_BIN_EXE_dpgate");

fn dpgate(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MARKETPLACE_URL")
        .env_remove("MARKETPLACE_API_KEY")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Server {
    child: Child,
    port: u16,
}

impl Server {
    fn start(registry: &Path) -> Self {
        let port = free_port();
        let child = Command::new(BIN)
            .args([
                "serve",
                "--registry",
                registry.to_str().unwrap(),
                "--port",
                &port.to_string(),
            ])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let server = Self { child, port };
        let url = format!("http://127.0.0.1:{port}/api/health");
        let deadline = Instant::now() + Duration::from_secs(20);
        let client = reqwest::blocking::Client::new();
        loop {
            if let Ok(resp) = client.get(&url).header("X-Api-Key", ALICE_KEY).send() {
                assert_eq!(resp.status().as_u16(), 200);
                return server;
            }
            assert!(Instant::now() < deadline, "server did not come up");
            std::thread::sleep(Duration::from_millis(50));
        }
    }

    fn replay(&self, args: &[&str]) -> Output {
        let port = self.port.to_string();
        let mut all = vec!["replay"];
        all.extend_from_slice(args);
        all.extend_from_slice(&["--port", &port]);
        dpgate(&all)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn seeded() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry");
    let out = dpgate(&["seed", registry.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    (dir, registry)
}

#[test]
fn seed_refuses_to_overwrite_without_force() {
    let (_dir, registry) = seeded();
    let reg = registry.to_str().unwrap();
    let again = dpgate(&["seed", reg]);
    assert!(!again.status.success());
    assert!(text(&again.stderr).contains("--force"), "{}", text(&again.stderr));
    assert!(dpgate(&["seed", reg, "--force"]).status.success());
    dpgate::load_registry(&registry).unwrap();
}

#[test]
fn mcp_without_gateway_url_fails_with_a_message() {
    let out = dpgate(&["mcp"]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("MARKETPLACE_URL"), "{}", text(&out.stderr));
}

#[test]
fn serve_on_an_occupied_port_fails() {
    let (_dir, registry) = seeded();
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = dpgate(&["serve", "--registry", registry.to_str().unwrap(), "--port", &port]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("cannot bind"), "{}", text(&out.stderr));
}

#[test]
fn serve_with_a_missing_registry_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpgate(&[
        "serve",
        "--registry",
        dir.path().join("nope").to_str().unwrap(),
        "--port",
        "0",
    ]);
    assert!(!out.status.success());
}

#[test]
fn replays_against_a_running_server() {
    let (_dir, registry) = seeded();
    let server = Server::start(&registry);

    let blocked = server.replay(&["1"]);
    assert_eq!(blocked.status.code(), Some(2), "{}", text(&blocked.stdout));
    assert!(text(&blocked.stdout).contains("# blocked: request ar-000001 is pending owner approval"));

    let two = server.replay(&["2"]);
    assert_eq!(two.status.code(), Some(0), "{}", text(&two.stdout));
    let out = text(&two.stdout);
    let approved = out.find("auto_approved").unwrap();
    let executed = out.rfind("\\\"status\\\":\\\"executed\\\"").unwrap();
    assert!(approved < executed);

    // Scenario 3 approves the pending request from scenario 1 as the owner.
    let three = server.replay(&["3", "--auto-approve"]);
    assert_eq!(three.status.code(), Some(0), "{}", text(&three.stdout));
    assert!(text(&three.stdout).contains("purpose_mismatch"));

    let audit = registry.join("audit.jsonl");
    let verify = dpgate(&["verify-audit", "--audit-file", audit.to_str().unwrap()]);
    assert!(verify.status.success());
    assert!(text(&verify.stdout).starts_with("ok: "));
    drop(server);

    // Flip one byte inside the third record (seq 2).
    let mut bytes = std::fs::read(&audit).unwrap();
    let starts: Vec<usize> = std::iter::once(0)
        .chain(
            bytes
                .iter()
                .enumerate()
                .filter(|(_, b)| **b == b'\n')
                .map(|(i, _)| i + 1),
        )
        .collect();
    bytes[starts[2] + 40] ^= 0x01;
    std::fs::write(&audit, &bytes).unwrap();
    let verify = dpgate(&["verify-audit", "--audit-file", audit.to_str().unwrap()]);
    assert_eq!(verify.status.code(), Some(1));
    assert_eq!(text(&verify.stdout).trim(), "broken: first bad record at seq 2");
}

#[test]
fn replay_with_auto_approve_completes_scenario_one() {
    let (_dir, registry) = seeded();
    let server = Server::start(&registry);
    let out = server.replay(&["1", "--auto-approve"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));
    assert!(text(&out.stdout).contains("== owner POST /api/accessrequests/ar-000001/decision"));
}

#[test]
fn replay_reports_an_unreachable_gateway() {
    let out = dpgate(&["replay", "2", "--port", &free_port().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("# diverged at"), "{}", text(&out.stdout));
}

fn normalized(transcript: &str) -> String {
    let ts = regex::Regex::new(r"\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d\.\d{3}Z").unwrap();
    let hash = regex::Regex::new(r"[0-9a-f]{64}").unwrap();
    hash.replace_all(&ts.replace_all(transcript, "<ts>"), "<hash>")
        .into_owned()
}

#[test]
fn replay_is_deterministic_on_a_fresh_registry() {
    let run = || {
        let (_dir, registry) = seeded();
        let server = Server::start(&registry);
        let out = server.replay(&["2"]);
        assert_eq!(out.status.code(), Some(0));
        normalized(&text(&out.stdout))
    };
    assert_eq!(run(), run());
}
