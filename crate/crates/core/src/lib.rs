//! Governed data-product gateway.
//!
//! The crate bundles the pieces a marketplace needs to let AI agents discover
//! and query data products without bypassing governance:
//!
//! - [`catalog`]: data products, data contracts, teams and users loaded from a
//!   registry directory, plus lexical product search.
//! - [`governance`]: purpose classification and a deterministic, first-match
//!   rule engine for access requests and query-time purpose checks.
//! - [`sqlguard`]: parser, renderer and contract validator for the supported
//!   SQL subset.
//! - [`executor`]: CSV-backed tables and an exact, deterministic query engine.
//! - [`audit`]: append-only, SHA-256 hash-chained audit log.
//! - [`gateway`]: the marketplace service (access-request lifecycle and the
//!   governed query path) and its HTTP/JSON surface.
//! - [`mcp`]: a JSON-RPC 2.0 stdio server exposing the four data product tools.
//! - [`replay`]: a scripted MCP client that replays the reference scenarios.
//! - [`seed`]: the bundled demo registry.

pub mod audit;
pub mod catalog;
pub mod clock;
pub mod executor;
pub mod gateway;
pub mod governance;
pub mod mcp;
pub mod replay;
pub mod seed;
pub mod sqlguard;

pub use catalog::{load_registry, Registry};
pub use gateway::Gateway;
