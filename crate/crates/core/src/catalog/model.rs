use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::governance::PurposeCategory;

/// Column sensitivity, ordered from least to most sensitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Public,
    Internal,
    Confidential,
    Pii,
}

impl Classification {
    pub const ALL: [Classification; 4] = [
        Classification::Public,
        Classification::Internal,
        Classification::Confidential,
        Classification::Pii,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Public => "public",
            Classification::Internal => "internal",
            Classification::Confidential => "confidential",
            Classification::Pii => "pii",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Integer,
    /// Exact fixed-point with two fraction digits.
    Decimal2,
    Text,
    Boolean,
    /// ISO-8601 calendar date, `YYYY-MM-DD`.
    Date,
}

impl ValueType {
    pub const ALL: [ValueType; 5] = [
        ValueType::Integer,
        ValueType::Decimal2,
        ValueType::Text,
        ValueType::Boolean,
        ValueType::Date,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Integer => "integer",
            ValueType::Decimal2 => "decimal2",
            ValueType::Text => "text",
            ValueType::Boolean => "boolean",
            ValueType::Date => "date",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Integer | ValueType::Decimal2)
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductStatus {
    Active,
    Draft,
    Retired,
}

impl ProductStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "active" => Some(Self::Active),
            "draft" => Some(Self::Draft),
            "retired" => Some(Self::Retired),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PortType {
    #[serde(rename = "table-store")]
    TableStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPort {
    pub id: String,
    pub port_type: PortType,
    pub dataset_ref: String,
    pub contract_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataProduct {
    pub id: String,
    pub title: String,
    pub description: String,
    pub owner_team: String,
    pub status: ProductStatus,
    #[serde(default)]
    pub output_ports: Vec<OutputPort>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDef {
    pub name: String,
    pub value_type: ValueType,
    pub classification: Classification,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractTerms {
    pub allowed_purposes: BTreeMap<Classification, BTreeSet<PurposeCategory>>,
    /// Maximum rows returned by a single query.
    pub row_limit: u64,
    #[serde(default)]
    pub notes: String,
}

impl ContractTerms {
    pub fn allows(&self, classification: Classification, purpose: PurposeCategory) -> bool {
        self.allowed_purposes
            .get(&classification)
            .is_some_and(|set| set.contains(&purpose))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataContract {
    pub id: String,
    pub tables: BTreeMap<String, Vec<ColumnDef>>,
    pub terms: ContractTerms,
}

impl DataContract {
    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.tables.get(table)?.iter().find(|c| c.name == column)
    }

    pub fn classifications(&self) -> BTreeSet<Classification> {
        self.tables.values().flatten().map(|c| c.classification).collect()
    }

    /// Highest classification of any column, or `None` for a contract without
    /// columns.
    pub fn max_classification(&self) -> Option<Classification> {
        self.tables.values().flatten().map(|c| c.classification).max()
    }

    /// `table.column` names of every column with the given classification, in
    /// table then declaration order.
    pub fn columns_with(&self, classification: Classification) -> Vec<String> {
        self.tables
            .iter()
            .flat_map(|(table, cols)| {
                cols.iter()
                    .filter(move |c| c.classification == classification)
                    .map(move |c| format!("{table}.{}", c.name))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Team {
    pub id: String,
    pub name: String,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub id: String,
    pub display_name: String,
    pub team_id: String,
    pub api_key: String,
}

impl fmt::Debug for User {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("User")
            .field("id", &self.id)
            .field("display_name", &self.display_name)
            .field("team_id", &self.team_id)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

/// Search result entry. Carries no ports, contracts or connection details.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSummary {
    pub id: String,
    pub name: String,
    pub description: String,
    pub owner: String,
}

/// Access state of one user for one product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessStatus {
    None,
    Pending,
    Active,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionDetail {
    pub port_id: String,
    pub port_type: PortType,
    pub dataset_ref: String,
    pub contract_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDetail {
    pub product: DataProduct,
    pub contracts: Vec<DataContract>,
    pub connection: Vec<ConnectionDetail>,
    pub access_status: AccessStatus,
}
