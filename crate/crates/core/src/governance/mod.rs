//! Purpose-based governance.
//!
//! Access requests and individual queries are judged against the declared
//! purpose, the data contract's terms and the global policy rules. The
//! shipped [`RuleEngine`] is deterministic; other evaluators (for instance one
//! backed by a language model) plug in through the [`Evaluator`] trait.

mod engine;
mod purpose;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Classification, DataContract, DataProduct, User};
use crate::gateway::AccessGrant;
use crate::sqlguard::ValidatedQuery;

pub use engine::{evaluate_access, evaluate_query, RuleEngine};
pub use purpose::classify_purpose;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GovernanceError {
    #[error("purpose text must not be empty")]
    EmptyPurpose,
    #[error("unknown purpose category {0:?}")]
    UnknownCategory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurposeCategory {
    Analytics,
    Reporting,
    MarketingOutreach,
    SupportOperations,
    Research,
    Other,
}

impl PurposeCategory {
    pub const ALL: [PurposeCategory; 6] = [
        PurposeCategory::Analytics,
        PurposeCategory::Reporting,
        PurposeCategory::MarketingOutreach,
        PurposeCategory::SupportOperations,
        PurposeCategory::Research,
        PurposeCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PurposeCategory::Analytics => "analytics",
            PurposeCategory::Reporting => "reporting",
            PurposeCategory::MarketingOutreach => "marketing_outreach",
            PurposeCategory::SupportOperations => "support_operations",
            PurposeCategory::Research => "research",
            PurposeCategory::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Self, GovernanceError> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GovernanceError::UnknownCategory(s.to_string()))
    }
}

impl fmt::Display for PurposeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A purpose as supplied by the agent, with its category always resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredPurpose {
    pub text: String,
    pub category: PurposeCategory,
}

impl DeclaredPurpose {
    /// An explicit category wins over keyword classification of `text`.
    pub fn new(text: &str, explicit: Option<PurposeCategory>) -> Result<Self, GovernanceError> {
        if text.trim().is_empty() {
            return Err(GovernanceError::EmptyPurpose);
        }
        let category = match explicit {
            Some(category) => category,
            None => classify_purpose(text)?,
        };
        Ok(Self {
            text: text.to_string(),
            category,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    AutoApprove,
    RequireManual,
    Deny,
}

/// Conditions of a policy rule. Absent fields do not constrain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatch {
    /// Holds when the most sensitive column of the contract is at or below
    /// this level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_classification: Option<Classification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose_in: Option<BTreeSet<PurposeCategory>>,
    /// Holds when (requester team == product owner team) equals this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub same_team: Option<bool>,
}

impl RuleMatch {
    pub fn is_empty(&self) -> bool {
        self.max_classification.is_none() && self.purpose_in.is_none() && self.same_team.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub rule_id: String,
    pub priority: i64,
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    pub effect: Effect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning_template: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    PiiExposure,
    PurposeMismatch,
    ClassificationExceeded,
    RowLimitRisk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceWarning {
    pub code: WarningCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_refs: Option<Vec<String>>,
}

/// Matched-rule id used when no policy rule applies.
pub const DEFAULT_RULE: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceDecision {
    pub effect: Effect,
    pub matched_rule: String,
    pub warnings: Vec<GovernanceWarning>,
}

/// One column a query may not read under the session purpose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDenialReason {
    pub code: WarningCode,
    pub table: String,
    pub column: String,
    pub classification: Classification,
    pub purpose: PurposeCategory,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum QueryVerdict {
    Allow,
    Deny { reasons: Vec<QueryDenialReason> },
}

impl QueryVerdict {
    pub fn is_allow(&self) -> bool {
        matches!(self, QueryVerdict::Allow)
    }
}

/// Everything an evaluator sees when judging an access request.
#[derive(Debug, Clone, Copy)]
pub struct AccessContext<'a> {
    pub product: &'a DataProduct,
    pub contract: &'a DataContract,
    pub requester: &'a User,
    pub purpose: &'a DeclaredPurpose,
    pub policies: &'a [PolicyRule],
}

/// Pluggable governance evaluator.
pub trait Evaluator: Send + Sync {
    fn evaluate_access(&self, ctx: AccessContext<'_>) -> GovernanceDecision;

    fn evaluate_query(
        &self,
        grant: &AccessGrant,
        query: &ValidatedQuery,
        contract: &DataContract,
        session_purpose: &DeclaredPurpose,
    ) -> QueryVerdict;
}

#[cfg(test)]
mod tests;
