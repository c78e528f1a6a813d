use super::{
    AccessContext, DeclaredPurpose, Effect, Evaluator, GovernanceDecision, GovernanceWarning, PolicyRule,
    QueryDenialReason, QueryVerdict, WarningCode, DEFAULT_RULE,
};
use crate::catalog::{Classification, DataContract, DataProduct, User};
use crate::gateway::AccessGrant;
use crate::sqlguard::ValidatedQuery;

/// Deterministic first-match rule engine.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleEngine;

impl Evaluator for RuleEngine {
    fn evaluate_access(&self, ctx: AccessContext<'_>) -> GovernanceDecision {
        evaluate_access(ctx.product, ctx.contract, ctx.requester, ctx.purpose, ctx.policies)
    }

    fn evaluate_query(
        &self,
        grant: &AccessGrant,
        query: &ValidatedQuery,
        contract: &DataContract,
        session_purpose: &DeclaredPurpose,
    ) -> QueryVerdict {
        evaluate_query(grant, query, contract, session_purpose)
    }
}

fn rule_matches(
    rule: &PolicyRule,
    product: &DataProduct,
    contract_max: Option<Classification>,
    requester: &User,
    purpose: &DeclaredPurpose,
) -> bool {
    let m = &rule.matcher;
    if let Some(limit) = m.max_classification {
        // A contract without columns exposes nothing and satisfies any ceiling.
        if contract_max.is_some_and(|c| c > limit) {
            return false;
        }
    }
    if let Some(purposes) = &m.purpose_in {
        if !purposes.contains(&purpose.category) {
            return false;
        }
    }
    if let Some(same_team) = m.same_team {
        if (requester.team_id == product.owner_team) != same_team {
            return false;
        }
    }
    true
}

fn rule_warning(rule: &PolicyRule, contract: &DataContract) -> Option<GovernanceWarning> {
    let message = match (&rule.warning_template, rule.effect) {
        (Some(template), _) => template.clone(),
        (None, Effect::Deny) => format!("request denied by policy rule {}", rule.rule_id),
        (None, _) => return None,
    };
    let pii = contract.columns_with(Classification::Pii);
    let (code, columns) = if !pii.is_empty() {
        (WarningCode::PiiExposure, pii)
    } else {
        let top = contract.max_classification().unwrap_or(Classification::Public);
        (WarningCode::ClassificationExceeded, contract.columns_with(top))
    };
    Some(GovernanceWarning {
        code,
        message,
        column_refs: Some(columns),
    })
}

fn purpose_mismatches(contract: &DataContract, purpose: &DeclaredPurpose) -> Vec<GovernanceWarning> {
    contract
        .classifications()
        .into_iter()
        .filter(|c| !contract.terms.allows(*c, purpose.category))
        .map(|c| GovernanceWarning {
            code: WarningCode::PurposeMismatch,
            message: format!(
                "purpose {} is not permitted for {} columns under contract {}",
                purpose.category, c, contract.id
            ),
            column_refs: Some(contract.columns_with(c)),
        })
        .collect()
}

/// Judges an access request.
///
/// Rules are tried in ascending priority; the first whose present match
/// fields all hold decides the effect. Without a match the request goes to
/// manual review under the `default` rule. Contract-term purpose mismatches
/// are reported as warnings whatever the effect.
pub fn evaluate_access(
    product: &DataProduct,
    contract: &DataContract,
    requester: &User,
    purpose: &DeclaredPurpose,
    policies: &[PolicyRule],
) -> GovernanceDecision {
    let mut ordered: Vec<&PolicyRule> = policies.iter().collect();
    ordered.sort_by_key(|r| r.priority);

    let contract_max = contract.max_classification();
    let matched = ordered
        .into_iter()
        .find(|r| rule_matches(r, product, contract_max, requester, purpose));

    let mut warnings = Vec::new();
    let (effect, matched_rule) = match matched {
        Some(rule) => {
            warnings.extend(rule_warning(rule, contract));
            (rule.effect, rule.rule_id.clone())
        }
        None => (Effect::RequireManual, DEFAULT_RULE.to_string()),
    };
    warnings.extend(purpose_mismatches(contract, purpose));

    GovernanceDecision {
        effect,
        matched_rule,
        warnings,
    }
}

/// Query-time purpose check: every column the query reads must be usable for
/// the session purpose under the contract terms.
pub fn evaluate_query(
    _grant: &AccessGrant,
    query: &ValidatedQuery,
    contract: &DataContract,
    session_purpose: &DeclaredPurpose,
) -> QueryVerdict {
    let reasons: Vec<QueryDenialReason> = query
        .referenced_columns
        .iter()
        .filter(|col| !contract.terms.allows(col.classification, session_purpose.category))
        .map(|col| QueryDenialReason {
            code: WarningCode::PurposeMismatch,
            table: col.table.clone(),
            column: col.column.clone(),
            classification: col.classification,
            purpose: session_purpose.category,
            message: format!(
                "{}.{} is {} data and contract {} does not permit purpose {}",
                col.table, col.column, col.classification, contract.id, session_purpose.category
            ),
        })
        .collect();
    if reasons.is_empty() {
        QueryVerdict::Allow
    } else {
        QueryVerdict::Deny { reasons }
    }
}
