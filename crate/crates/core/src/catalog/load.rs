use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use super::{CatalogError, DatasetSource, Registry, RegistryParts};
use crate::executor::dataset::{read_schema, DatasetError};

const ENTITY_DIRS: [&str; 6] = ["products", "contracts", "teams", "users", "policies", "datasets"];

/// Loads and cross-links every document under `root`.
pub fn load_registry(root: impl AsRef<Path>) -> Result<Registry, CatalogError> {
    let root = root.as_ref();
    for dir in ENTITY_DIRS {
        let path = root.join(dir);
        if !path.is_dir() {
            return Err(CatalogError::Io {
                path,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory missing"),
            });
        }
    }

    let parts = RegistryParts {
        products: read_documents(&root.join("products"))?,
        contracts: read_documents(&root.join("contracts"))?,
        teams: read_documents(&root.join("teams"))?,
        users: read_documents(&root.join("users"))?,
        policies: read_documents(&root.join("policies"))?,
        datasets: read_datasets(&root.join("datasets"))?,
    };
    Registry::build(parts)
}

fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, CatalogError> {
    let io_err = |source| CatalogError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == extension) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn read_documents<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>, CatalogError> {
    sorted_files(dir, "json")?
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|source| CatalogError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|err| CatalogError::ParseError {
                line: err.line(),
                message: err.to_string(),
                file: path,
            })
        })
        .collect()
}

fn read_datasets(dir: &Path) -> Result<Vec<DatasetSource>, CatalogError> {
    sorted_files(dir, "csv")?
        .into_iter()
        .map(|csv_path| {
            let id = csv_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let schema_path = csv_path.with_extension("schema");
            let columns = read_schema(&schema_path).map_err(|err| match err {
                DatasetError::Io { path, source } => CatalogError::Io { path, source },
                DatasetError::SchemaParse { line, message } => CatalogError::ParseError {
                    file: schema_path.clone(),
                    line,
                    message,
                },
                other => CatalogError::Invalid {
                    entity: format!("dataset:{id}"),
                    reason: other.to_string(),
                },
            })?;
            Ok(DatasetSource {
                id,
                csv_path,
                schema_path,
                columns,
            })
        })
        .collect()
}
