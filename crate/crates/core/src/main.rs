use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use dpgate::audit::{verify_file, ChainStatus};
use dpgate::gateway::http;
use dpgate::mcp::{HttpGatewayClient, McpServer};
use dpgate::replay::{self, Approval, ChildMcp, Operators};
use dpgate::{seed, Gateway};

#[derive(Parser)]
#[command(name = "dpgate", version, about = "Governed data product gateway and MCP server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the demo registry (products, contracts, users, policies, datasets).
    Seed {
        #[arg(default_value = "registry")]
        dir: PathBuf,
        /// Replace the registry in a non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Run the gateway HTTP API.
    Serve {
        #[arg(long, default_value = "registry")]
        registry: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Audit log file; defaults to audit.jsonl inside the registry.
        #[arg(long)]
        audit_file: Option<PathBuf>,
    },
    /// Run the MCP server on stdio (needs MARKETPLACE_URL and MARKETPLACE_API_KEY).
    Mcp,
    /// Check the hash chain of an audit log.
    VerifyAudit {
        #[arg(long, default_value = "registry/audit.jsonl")]
        audit_file: PathBuf,
    },
    /// Replay reference scenario 1, 2 or 3 against a running gateway.
    Replay {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: u8,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Approve pending requests as the product owner.
        #[arg(long, conflicts_with = "wait")]
        auto_approve: bool,
        /// Wait up to this many seconds for someone else to approve.
        #[arg(long, value_name = "SECS")]
        wait: Option<u64>,
        #[arg(long, env = "MARKETPLACE_API_KEY", default_value = seed::ALICE_KEY, hide_env_values = true)]
        api_key: String,
        #[arg(long, default_value = seed::OLIVIA_KEY, hide_env_values = true)]
        owner_key: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();

    match run(Cli::parse()) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("dpgate: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Seed { dir, force } => {
            seed::write_seed(&dir, force).map_err(|e| e.to_string())?;
            println!("seeded registry at {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            registry,
            host,
            port,
            audit_file,
        } => {
            let audit_file = audit_file.unwrap_or_else(|| registry.join("audit.jsonl"));
            let gateway = Gateway::open(&registry, Some(&audit_file)).map_err(|e| e.to_string())?;
            serve(Arc::new(gateway), &host, port)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Mcp => {
            let client = HttpGatewayClient::from_env()?;
            let mut server = McpServer::new(client);
            server
                .serve(io::stdin().lock(), io::stdout().lock())
                .map_err(|e| format!("stdio error: {e}"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyAudit { audit_file } => match verify_file(&audit_file).map_err(|e| e.to_string())? {
            ChainStatus::Ok { records } => {
                println!("ok: {records} records");
                Ok(ExitCode::SUCCESS)
            }
            ChainStatus::Broken { first_bad_seq } => {
                println!("broken: first bad record at seq {first_bad_seq}");
                Ok(ExitCode::FAILURE)
            }
        },
        Command::Replay {
            scenario,
            host,
            port,
            auto_approve,
            wait,
            api_key,
            owner_key,
        } => {
            let url = format!("http://{host}:{port}");
            let requester = HttpGatewayClient::new(&url, &api_key)?;
            let owner = HttpGatewayClient::new(&url, &owner_key)?;
            let exe = std::env::current_exe().map_err(|e| format!("cannot locate own executable: {e}"))?;
            let mut mcp = ChildMcp::spawn(&exe, &url, &api_key).map_err(|e| format!("cannot start MCP server: {e}"))?;
            let approval = match (auto_approve, wait) {
                (true, _) => Approval::Auto,
                (false, Some(secs)) => Approval::Wait(Duration::from_secs(secs)),
                (false, None) => Approval::None,
            };
            let report = replay::run_scenario(
                scenario,
                &mut mcp,
                Operators {
                    owner: &owner,
                    requester: &requester,
                },
                approval,
            );
            for line in &report.transcript {
                println!("{line}");
            }
            Ok(ExitCode::from(report.outcome.exit_code() as u8))
        }
    }
}

fn serve(gateway: Arc<Gateway>, host: &str, port: u16) -> Result<(), String> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| format!("invalid bind address {host}:{port}: {e}"))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| format!("cannot start runtime: {e}"))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| format!("cannot bind {addr}: {e}"))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        tracing::info!(%local, "gateway listening");
        http::serve(gateway, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| format!("server error: {e}"))
    })
}
