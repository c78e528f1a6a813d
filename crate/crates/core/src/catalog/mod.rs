//! Registry of data products, data contracts, teams, users and policy rules.
//!
//! The registry holds metadata only. Row data lives in CSV datasets that the
//! [`executor`](crate::executor) loads; the registry just checks that each
//! dataset exists and that its schema sidecar agrees with the contract.
//!
//! On-disk layout, one JSON document per entity:
//!
//! ```text
//! <root>/products/*.json    DataProduct
//! <root>/contracts/*.json   DataContract
//! <root>/teams/*.json       Team
//! <root>/users/*.json       User
//! <root>/policies/*.json    PolicyRule
//! <root>/datasets/<id>.csv + <id>.schema
//! ```

mod load;
mod model;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::governance::PolicyRule;

pub use load::load_registry;
pub use model::{
    AccessStatus, Classification, ColumnDef, ConnectionDetail, ContractTerms, DataContract, DataProduct, OutputPort,
    PortType, ProductDetail, ProductStatus, ProductSummary, Team, User, ValueType,
};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{entity} references unknown {reference:?}")]
    MissingReference { entity: String, reference: String },
    #[error("cannot parse {file} (line {line}): {message}")]
    ParseError {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{entity} is invalid: {reason}")]
    Invalid { entity: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("data product {0:?} not found")]
    NotFound(String),
    #[error("search needs at least one term")]
    EmptyQuery,
}

/// CSV file plus schema sidecar backing one contract table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSource {
    pub id: String,
    pub csv_path: PathBuf,
    pub schema_path: PathBuf,
    pub columns: Vec<ColumnDef>,
}

/// Raw entities handed to [`Registry::build`].
#[derive(Debug, Clone, Default)]
pub struct RegistryParts {
    pub products: Vec<DataProduct>,
    pub contracts: Vec<DataContract>,
    pub teams: Vec<Team>,
    pub users: Vec<User>,
    pub policies: Vec<PolicyRule>,
    pub datasets: Vec<DatasetSource>,
}

/// Cross-linked, validated metadata. Immutable once built.
#[derive(Debug, Clone, Serialize)]
pub struct Registry {
    products: BTreeMap<String, DataProduct>,
    contracts: BTreeMap<String, DataContract>,
    teams: BTreeMap<String, Team>,
    users: BTreeMap<String, User>,
    /// Sorted by ascending priority.
    policies: Vec<PolicyRule>,
    datasets: BTreeMap<String, DatasetSource>,
    #[serde(skip)]
    users_by_key: HashMap<String, String>,
    #[serde(skip)]
    search_index: BTreeMap<String, String>,
}

/// Access-request state as seen by [`get_product`].
pub trait AccessLookup {
    fn access_status(&self, requester: &str, product_id: &str) -> AccessStatus;
}

fn insert_unique<T>(map: &mut BTreeMap<String, T>, id: &str, value: T) -> Result<(), CatalogError> {
    if id.is_empty() {
        return Err(CatalogError::Invalid {
            entity: "<unnamed>".into(),
            reason: "id must not be empty".into(),
        });
    }
    if map.insert(id.to_string(), value).is_some() {
        return Err(CatalogError::DuplicateId(id.to_string()));
    }
    Ok(())
}

impl Registry {
    /// Validates every reference invariant and builds the search index.
    pub fn build(parts: RegistryParts) -> Result<Self, CatalogError> {
        let mut teams = BTreeMap::new();
        for team in parts.teams {
            let id = team.id.clone();
            insert_unique(&mut teams, &id, team)?;
        }

        let mut users = BTreeMap::new();
        let mut users_by_key = HashMap::new();
        for user in parts.users {
            if !teams.contains_key(&user.team_id) {
                return Err(CatalogError::MissingReference {
                    entity: format!("user:{}", user.id),
                    reference: user.team_id.clone(),
                });
            }
            let (id, key) = (user.id.clone(), user.api_key.clone());
            insert_unique(&mut users, &id, user)?;
            if key.is_empty() {
                return Err(CatalogError::Invalid {
                    entity: format!("user:{id}"),
                    reason: "api_key must not be empty".into(),
                });
            }
            if users_by_key.insert(key, id.clone()).is_some() {
                return Err(CatalogError::Invalid {
                    entity: format!("user:{id}"),
                    reason: "api_key is already used by another user".into(),
                });
            }
        }

        let mut datasets = BTreeMap::new();
        for dataset in parts.datasets {
            let id = dataset.id.clone();
            insert_unique(&mut datasets, &id, dataset)?;
        }

        let mut contracts = BTreeMap::new();
        for contract in parts.contracts {
            validate_contract(&contract)?;
            let id = contract.id.clone();
            insert_unique(&mut contracts, &id, contract)?;
        }

        let mut products = BTreeMap::new();
        for product in parts.products {
            let id = product.id.clone();
            insert_unique(&mut products, &id, product)?;
        }
        for product in products.values() {
            validate_product(product, &teams, &contracts, &datasets)?;
        }

        let mut policies = parts.policies;
        let mut seen_rules = BTreeMap::new();
        let mut seen_priorities = BTreeMap::new();
        for rule in &policies {
            insert_unique(&mut seen_rules, &rule.rule_id, ())?;
            if let Some(other) = seen_priorities.insert(rule.priority, rule.rule_id.clone()) {
                return Err(CatalogError::Invalid {
                    entity: format!("policy:{}", rule.rule_id),
                    reason: format!("priority {} already used by {other}", rule.priority),
                });
            }
            if rule.matcher.is_empty() {
                return Err(CatalogError::Invalid {
                    entity: format!("policy:{}", rule.rule_id),
                    reason: "at least one match field is required".into(),
                });
            }
        }
        policies.sort_by_key(|r| r.priority);

        let search_index = products
            .values()
            .map(|p| {
                let haystack = format!("{}\n{}\n{}", p.id, p.title, p.description).to_lowercase();
                (p.id.clone(), haystack)
            })
            .collect();

        Ok(Self {
            products,
            contracts,
            teams,
            users,
            policies,
            datasets,
            users_by_key,
            search_index,
        })
    }

    pub fn products(&self) -> impl Iterator<Item = &DataProduct> {
        self.products.values()
    }

    pub fn product(&self, id: &str) -> Option<&DataProduct> {
        self.products.get(id)
    }

    pub fn contract(&self, id: &str) -> Option<&DataContract> {
        self.contracts.get(id)
    }

    /// The single contract governing a product's output ports.
    pub fn contract_for(&self, product: &DataProduct) -> Option<&DataContract> {
        let port = product.output_ports.first()?;
        self.contracts.get(&port.contract_ref)
    }

    pub fn team(&self, id: &str) -> Option<&Team> {
        self.teams.get(id)
    }

    pub fn user(&self, id: &str) -> Option<&User> {
        self.users.get(id)
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }

    pub fn user_by_api_key(&self, key: &str) -> Option<&User> {
        self.users_by_key.get(key).and_then(|id| self.users.get(id))
    }

    pub fn policies(&self) -> &[PolicyRule] {
        &self.policies
    }

    pub fn datasets(&self) -> impl Iterator<Item = &DatasetSource> {
        self.datasets.values()
    }

    /// Deterministic JSON rendering of the whole registry.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("registry serializes")
    }
}

fn validate_contract(contract: &DataContract) -> Result<(), CatalogError> {
    let entity = || format!("contract:{}", contract.id);
    if contract.tables.is_empty() {
        return Err(CatalogError::Invalid {
            entity: entity(),
            reason: "contract declares no tables".into(),
        });
    }
    for (table, columns) in &contract.tables {
        if columns.is_empty() {
            return Err(CatalogError::Invalid {
                entity: entity(),
                reason: format!("table {table} has no columns"),
            });
        }
        let mut names = std::collections::BTreeSet::new();
        for column in columns {
            if !crate::sqlguard::is_identifier(&column.name) {
                return Err(CatalogError::Invalid {
                    entity: entity(),
                    reason: format!("{table}.{} is not a valid identifier", column.name),
                });
            }
            if !names.insert(column.name.as_str()) {
                return Err(CatalogError::Invalid {
                    entity: entity(),
                    reason: format!("column {table}.{} declared twice", column.name),
                });
            }
        }
    }
    for classification in contract.classifications() {
        if !contract.terms.allowed_purposes.contains_key(&classification) {
            return Err(CatalogError::Invalid {
                entity: entity(),
                reason: format!("terms.allowed_purposes has no entry for {classification}"),
            });
        }
    }
    if contract.terms.row_limit == 0 {
        return Err(CatalogError::Invalid {
            entity: entity(),
            reason: "terms.row_limit must be at least 1".into(),
        });
    }
    Ok(())
}

fn validate_product(
    product: &DataProduct,
    teams: &BTreeMap<String, Team>,
    contracts: &BTreeMap<String, DataContract>,
    datasets: &BTreeMap<String, DatasetSource>,
) -> Result<(), CatalogError> {
    let entity = format!("product:{}", product.id);
    let missing = |reference: &str| CatalogError::MissingReference {
        entity: entity.clone(),
        reference: reference.to_string(),
    };
    let invalid = |reason: String| CatalogError::Invalid {
        entity: entity.clone(),
        reason,
    };

    if !teams.contains_key(&product.owner_team) {
        return Err(missing(&product.owner_team));
    }
    if product.status == ProductStatus::Active && product.output_ports.is_empty() {
        return Err(invalid("an active product needs at least one output port".into()));
    }

    let mut contract_ref: Option<&str> = None;
    for port in &product.output_ports {
        let contract = contracts
            .get(&port.contract_ref)
            .ok_or_else(|| missing(&port.contract_ref))?;
        match contract_ref {
            None => contract_ref = Some(&port.contract_ref),
            Some(existing) if existing != port.contract_ref => {
                return Err(invalid("all output ports of a product must share one contract".into()));
            }
            Some(_) => {}
        }
        let declared = contract
            .tables
            .get(&port.dataset_ref)
            .ok_or_else(|| missing(&port.dataset_ref))?;
        let dataset = datasets
            .get(&port.dataset_ref)
            .ok_or_else(|| missing(&format!("dataset:{}", port.dataset_ref)))?;
        let same_shape = declared.len() == dataset.columns.len()
            && declared
                .iter()
                .zip(&dataset.columns)
                .all(|(a, b)| a.name == b.name && a.value_type == b.value_type && a.classification == b.classification);
        if !same_shape {
            return Err(invalid(format!(
                "dataset {} schema does not match table {} in contract {}",
                port.dataset_ref, port.dataset_ref, contract.id
            )));
        }
    }
    if let Some(contract_ref) = contract_ref {
        let contract = &contracts[contract_ref];
        for table in contract.tables.keys() {
            if !product.output_ports.iter().any(|p| &p.dataset_ref == table) {
                return Err(invalid(format!(
                    "contract table {table} is not exposed by any output port"
                )));
            }
        }
    }
    Ok(())
}

/// Lexical product search.
///
/// Each entry of `terms` is split on whitespace; a product matches when every
/// resulting token occurs, case-insensitively, in its id, title or
/// description. `status_filter` defaults to [`ProductStatus::Active`].
pub fn search_products(
    registry: &Registry,
    terms: &[impl AsRef<str>],
    status_filter: Option<ProductStatus>,
) -> Result<Vec<ProductSummary>, CatalogError> {
    let tokens: Vec<String> = terms
        .iter()
        .flat_map(|t| t.as_ref().split_whitespace())
        .map(str::to_lowercase)
        .collect();
    if tokens.is_empty() {
        return Err(CatalogError::EmptyQuery);
    }
    let status = status_filter.unwrap_or(ProductStatus::Active);

    // BTreeMap iteration keeps results sorted by id.
    Ok(registry
        .products
        .values()
        .filter(|p| p.status == status)
        .filter(|p| {
            let haystack = &registry.search_index[&p.id];
            tokens.iter().all(|t| haystack.contains(t.as_str()))
        })
        .map(|p| ProductSummary {
            id: p.id.clone(),
            name: p.title.clone(),
            description: p.description.clone(),
            owner: p.owner_team.clone(),
        })
        .collect())
}

/// Full product view: metadata, contract, connection details and the caller's
/// access status.
pub fn get_product(
    registry: &Registry,
    product_id: &str,
    caller: &User,
    access: &impl AccessLookup,
) -> Result<ProductDetail, CatalogError> {
    let product = registry
        .product(product_id)
        .ok_or_else(|| CatalogError::NotFound(product_id.to_string()))?;
    let contracts = registry.contract_for(product).into_iter().cloned().collect();
    let connection = product
        .output_ports
        .iter()
        .map(|port| ConnectionDetail {
            port_id: port.id.clone(),
            port_type: port.port_type,
            dataset_ref: port.dataset_ref.clone(),
            contract_ref: port.contract_ref.clone(),
        })
        .collect();
    Ok(ProductDetail {
        product: product.clone(),
        contracts,
        connection,
        access_status: access.access_status(&caller.id, product_id),
    })
}
