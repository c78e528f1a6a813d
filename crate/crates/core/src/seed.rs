//! The bundled demo registry: two data products owned by the `crm` team,
//! their contracts and datasets, two teams, three users and five policy
//! rules.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const ALICE: &str = "alice";
pub const ALICE_KEY: &str = "key-alice-7f3a";
pub const BEN: &str = "ben";
pub const BEN_KEY: &str = "key-ben-19c2";
pub const OLIVIA: &str = "olivia";
pub const OLIVIA_KEY: &str = "key-olivia-c4d8";

pub const CUSTOMERS: &str = "customers";
pub const SUPPORT_TICKETS: &str = "support-tickets";

/// Registry-relative path and content of every seed file.
pub const FILES: &[(&str, &str)] = &[
    (
        "contracts/customers-contract.json",
        include_str!("../seed/contracts/customers-contract.json"),
    ),
    (
        "contracts/support-tickets-contract.json",
        include_str!("../seed/contracts/support-tickets-contract.json"),
    ),
    ("datasets/customers.csv", include_str!("../seed/datasets/customers.csv")),
    (
        "datasets/customers.schema",
        include_str!("../seed/datasets/customers.schema"),
    ),
    ("datasets/orders.csv", include_str!("../seed/datasets/orders.csv")),
    ("datasets/orders.schema", include_str!("../seed/datasets/orders.schema")),
    ("datasets/tickets.csv", include_str!("../seed/datasets/tickets.csv")),
    (
        "datasets/tickets.schema",
        include_str!("../seed/datasets/tickets.schema"),
    ),
    (
        "policies/10-deny-unclassified-purpose.json",
        include_str!("../seed/policies/10-deny-unclassified-purpose.json"),
    ),
    (
        "policies/20-auto-internal.json",
        include_str!("../seed/policies/20-auto-internal.json"),
    ),
    (
        "policies/30-auto-owner-team.json",
        include_str!("../seed/policies/30-auto-owner-team.json"),
    ),
    (
        "policies/40-auto-confidential-analysis.json",
        include_str!("../seed/policies/40-auto-confidential-analysis.json"),
    ),
    (
        "policies/50-manual-pii.json",
        include_str!("../seed/policies/50-manual-pii.json"),
    ),
    (
        "products/customers.json",
        include_str!("../seed/products/customers.json"),
    ),
    (
        "products/support-tickets.json",
        include_str!("../seed/products/support-tickets.json"),
    ),
    ("teams/analytics.json", include_str!("../seed/teams/analytics.json")),
    ("teams/crm.json", include_str!("../seed/teams/crm.json")),
    ("users/alice.json", include_str!("../seed/users/alice.json")),
    ("users/ben.json", include_str!("../seed/users/ben.json")),
    ("users/olivia.json", include_str!("../seed/users/olivia.json")),
];

const ENTITY_DIRS: [&str; 6] = ["products", "contracts", "teams", "users", "policies", "datasets"];

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("{0} is not empty; pass --force to overwrite")]
    NotEmpty(PathBuf),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Writes the seed registry into `target`. A non-empty target is refused
/// unless `force` is set, in which case the entity directories are replaced
/// and anything else in `target` is left alone.
pub fn write_seed(target: &Path, force: bool) -> Result<(), SeedError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SeedError::Io { path, source }
    };
    let non_empty = match fs::read_dir(target) {
        Ok(mut entries) => entries.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(io(target)(e)),
    };
    if non_empty && !force {
        return Err(SeedError::NotEmpty(target.to_path_buf()));
    }
    for dir in ENTITY_DIRS {
        let path = target.join(dir);
        if path.exists() {
            fs::remove_dir_all(&path).map_err(io(&path))?;
        }
        fs::create_dir_all(&path).map_err(io(&path))?;
    }
    for (name, content) in FILES {
        let path = target.join(name);
        fs::write(&path, content).map_err(io(&path))?;
    }
    Ok(())
}

/// A freshly seeded registry in a temporary directory.
#[cfg(test)]
pub(crate) fn registry_for_tests() -> (tempfile::TempDir, crate::Registry) {
    let dir = tempfile::tempdir().expect("tempdir");
    write_seed(dir.path(), false).expect("seed");
    let registry = crate::load_registry(dir.path()).expect("seed registry loads");
    (dir, registry)
}
