use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use super::*;
use crate::catalog::{
    Classification, ColumnDef, ContractTerms, DataContract, DataProduct, ProductStatus, User, ValueType,
};
use crate::gateway::AccessGrant;
use crate::seed::{self, registry_for_tests};
use crate::sqlguard::{parse_sql, validate};

fn terms() -> ContractTerms {
    use PurposeCategory::*;
    let mut allowed = BTreeMap::new();
    allowed.insert(Classification::Public, PurposeCategory::ALL.into_iter().collect());
    allowed.insert(
        Classification::Internal,
        [Analytics, Reporting, MarketingOutreach, SupportOperations, Research].into(),
    );
    allowed.insert(Classification::Confidential, [Analytics, Reporting, Research].into());
    allowed.insert(Classification::Pii, [Analytics].into());
    ContractTerms {
        allowed_purposes: allowed,
        row_limit: 100,
        notes: String::new(),
    }
}

/// Contract with one column per listed classification.
fn contract(levels: &[Classification]) -> DataContract {
    let columns = levels
        .iter()
        .enumerate()
        .map(|(i, c)| ColumnDef {
            name: format!("c{i}"),
            value_type: ValueType::Text,
            classification: *c,
            description: String::new(),
        })
        .collect();
    DataContract {
        id: "k".into(),
        tables: BTreeMap::from([("t".to_string(), columns)]),
        terms: terms(),
    }
}

fn product(owner: &str) -> DataProduct {
    DataProduct {
        id: "p".into(),
        title: "P".into(),
        description: String::new(),
        owner_team: owner.into(),
        status: ProductStatus::Active,
        output_ports: vec![],
        tags: vec![],
    }
}

fn user(team: &str) -> User {
    User {
        id: "u".into(),
        display_name: "U".into(),
        team_id: team.into(),
        api_key: "k".into(),
    }
}

fn purpose(category: PurposeCategory) -> DeclaredPurpose {
    DeclaredPurpose::new("anything", Some(category)).unwrap()
}

fn seed_policies() -> Vec<PolicyRule> {
    let (_dir, registry) = registry_for_tests();
    registry.policies().to_vec()
}

#[test]
fn other_purpose_is_denied_first() {
    let policies = seed_policies();
    let d = evaluate_access(
        &product("crm"),
        &contract(&[Classification::Public]),
        &user("crm"),
        &purpose(PurposeCategory::Other),
        &policies,
    );
    assert_eq!(d.effect, Effect::Deny);
    assert_eq!(d.matched_rule, "deny-unclassified-purpose");
    assert!(d.warnings.iter().any(|w| w.code == WarningCode::ClassificationExceeded));
}

#[test]
fn pii_contract_needs_manual_review_even_for_owners() {
    let policies = seed_policies();
    let d = evaluate_access(
        &product("crm"),
        &contract(&[Classification::Internal, Classification::Pii]),
        &user("crm"),
        &purpose(PurposeCategory::Analytics),
        &policies,
    );
    assert_eq!(d.effect, Effect::RequireManual);
    assert_eq!(d.matched_rule, "manual-pii");
    assert_eq!(d.warnings.len(), 1);
    assert_eq!(d.warnings[0].code, WarningCode::PiiExposure);
    assert_eq!(d.warnings[0].column_refs.as_deref(), Some(&["t.c1".to_string()][..]));
}

#[test]
fn confidential_outreach_from_another_team_falls_to_manual() {
    let policies = seed_policies();
    let d = evaluate_access(
        &product("crm"),
        &contract(&[Classification::Confidential]),
        &user("analytics"),
        &purpose(PurposeCategory::MarketingOutreach),
        &policies,
    );
    assert_eq!(d.effect, Effect::RequireManual);
    assert_eq!(d.matched_rule, "manual-pii");
    // Contract terms do not allow outreach on confidential columns.
    assert!(d
        .warnings
        .iter()
        .any(|w| w.code == WarningCode::PurposeMismatch && w.message.contains("confidential")));
}

#[test]
fn no_matching_rule_falls_back_to_default_manual() {
    let d = evaluate_access(
        &product("crm"),
        &contract(&[Classification::Public]),
        &user("crm"),
        &purpose(PurposeCategory::Analytics),
        &[],
    );
    assert_eq!(d.effect, Effect::RequireManual);
    assert_eq!(d.matched_rule, DEFAULT_RULE);
    assert!(d.warnings.is_empty());
}

#[test]
fn deny_without_template_still_explains_itself() {
    let rule = PolicyRule {
        rule_id: "no".into(),
        priority: 1,
        matcher: RuleMatch {
            same_team: Some(false),
            ..RuleMatch::default()
        },
        effect: Effect::Deny,
        warning_template: None,
    };
    let d = evaluate_access(
        &product("crm"),
        &contract(&[Classification::Public]),
        &user("analytics"),
        &purpose(PurposeCategory::Analytics),
        &[rule],
    );
    assert_eq!(d.effect, Effect::Deny);
    assert!(d.warnings[0].message.contains("no"));
}

#[test]
fn empty_contract_satisfies_any_ceiling() {
    let mut c = contract(&[]);
    c.tables.clear();
    let rule = PolicyRule {
        rule_id: "r".into(),
        priority: 1,
        matcher: RuleMatch {
            max_classification: Some(Classification::Public),
            ..RuleMatch::default()
        },
        effect: Effect::AutoApprove,
        warning_template: None,
    };
    let d = evaluate_access(
        &product("crm"),
        &c,
        &user("crm"),
        &purpose(PurposeCategory::Research),
        &[rule],
    );
    assert_eq!(d.effect, Effect::AutoApprove);
}

fn grant(category: PurposeCategory) -> AccessGrant {
    AccessGrant {
        request_id: "ar-000001".into(),
        requester: seed::ALICE.into(),
        product_id: seed::CUSTOMERS.into(),
        purpose: purpose(category),
    }
}

#[test]
fn query_reading_pii_for_outreach_is_denied_per_column() {
    let (_dir, registry) = registry_for_tests();
    let contract = registry.contract("customers-contract").unwrap();
    let vq = validate(
        &parse_sql("SELECT name, email, country FROM customers").unwrap(),
        contract,
    )
    .unwrap();
    let session = purpose(PurposeCategory::MarketingOutreach);
    let verdict = evaluate_query(&grant(PurposeCategory::Analytics), &vq, contract, &session);
    let QueryVerdict::Deny { reasons } = verdict else {
        panic!("expected deny")
    };
    let cols: Vec<&str> = reasons.iter().map(|r| r.column.as_str()).collect();
    assert_eq!(cols, ["email", "name"]);
    assert!(reasons.iter().all(|r| r.code == WarningCode::PurposeMismatch
        && r.classification == Classification::Pii
        && r.purpose == PurposeCategory::MarketingOutreach));
}

#[test]
fn query_within_terms_is_allowed() {
    let (_dir, registry) = registry_for_tests();
    let contract = registry.contract("customers-contract").unwrap();
    let vq = validate(
        &parse_sql("SELECT customers.name, SUM(orders.amount) AS t FROM customers JOIN orders ON customers.customer_id = orders.customer_id GROUP BY customers.name").unwrap(),
        contract,
    )
    .unwrap();
    let session = purpose(PurposeCategory::Analytics);
    assert!(evaluate_query(&grant(PurposeCategory::Analytics), &vq, contract, &session).is_allow());
    // Reporting may read amounts but not names.
    let session = purpose(PurposeCategory::Reporting);
    let QueryVerdict::Deny { reasons } = evaluate_query(&grant(PurposeCategory::Analytics), &vq, contract, &session)
    else {
        panic!("expected deny")
    };
    assert_eq!(reasons.len(), 1);
    assert_eq!(reasons[0].column, "name");
}

#[test]
fn where_clause_columns_count_as_reads() {
    let (_dir, registry) = registry_for_tests();
    let contract = registry.contract("customers-contract").unwrap();
    let vq = validate(
        &parse_sql("SELECT country FROM customers WHERE email = 'x'").unwrap(),
        contract,
    )
    .unwrap();
    let session = purpose(PurposeCategory::Reporting);
    assert!(!evaluate_query(&grant(PurposeCategory::Reporting), &vq, contract, &session).is_allow());
}

#[test]
fn explicit_category_overrides_classifier() {
    let p = DeclaredPurpose::new("email campaign", Some(PurposeCategory::Research)).unwrap();
    assert_eq!(p.category, PurposeCategory::Research);
    let p = DeclaredPurpose::new("email campaign", None).unwrap();
    assert_eq!(p.category, PurposeCategory::MarketingOutreach);
    assert!(DeclaredPurpose::new("  ", None).is_err());
}

#[test]
fn category_names_round_trip() {
    for c in PurposeCategory::ALL {
        assert_eq!(PurposeCategory::parse(c.as_str()).unwrap(), c);
    }
    assert!(PurposeCategory::parse("espionage").is_err());
}

/// Straightforward re-statement of first-match semantics.
fn oracle_effect(
    rules: &[PolicyRule],
    level: Classification,
    category: PurposeCategory,
    same_team: bool,
) -> (Effect, String) {
    let mut best: Option<&PolicyRule> = None;
    for rule in rules {
        let m = &rule.matcher;
        let ok = m.max_classification.is_none_or(|max| level <= max)
            && m.purpose_in.as_ref().is_none_or(|set| set.contains(&category))
            && m.same_team.is_none_or(|s| s == same_team);
        if ok && best.is_none_or(|b| rule.priority < b.priority) {
            best = Some(rule);
        }
    }
    match best {
        Some(rule) => (rule.effect, rule.rule_id.clone()),
        None => (Effect::RequireManual, DEFAULT_RULE.to_string()),
    }
}

fn arb_rule(idx: usize) -> impl Strategy<Value = PolicyRule> {
    let level = prop::option::of(prop::sample::select(Classification::ALL.to_vec()));
    let purposes = prop::option::of(prop::collection::btree_set(
        prop::sample::select(PurposeCategory::ALL.to_vec()),
        1..4,
    ));
    let team = prop::option::of(any::<bool>());
    let effect = prop::sample::select(vec![Effect::AutoApprove, Effect::RequireManual, Effect::Deny]);
    (level, purposes, team, effect, 0i64..1000).prop_map(move |(l, p, t, e, pr)| PolicyRule {
        rule_id: format!("r{idx}"),
        priority: pr * 16 + idx as i64,
        matcher: RuleMatch {
            max_classification: l,
            purpose_in: p,
            same_team: t,
        },
        effect: e,
        warning_template: None,
    })
}

fn arb_rules() -> impl Strategy<Value = Vec<PolicyRule>> {
    (0usize..8).prop_flat_map(|n| (0..n).map(arb_rule).collect::<Vec<_>>())
}

proptest! {
    #[test]
    fn first_match_agrees_with_oracle(
        rules in arb_rules(),
        level in prop::sample::select(Classification::ALL.to_vec()),
        category in prop::sample::select(PurposeCategory::ALL.to_vec()),
        same_team in any::<bool>(),
    ) {
        let requester = user(if same_team { "crm" } else { "analytics" });
        let d = evaluate_access(&product("crm"), &contract(&[level]), &requester, &purpose(category), &rules);
        let (effect, rule) = oracle_effect(&rules, level, category, same_team);
        prop_assert_eq!(d.effect, effect);
        prop_assert_eq!(d.matched_rule, rule);
    }

    #[test]
    fn rule_order_and_priorities_do_not_change_term_warnings(
        rules in arb_rules(),
        shuffle in any::<u64>(),
        levels in prop::collection::vec(prop::sample::select(Classification::ALL.to_vec()), 1..5),
        category in prop::sample::select(PurposeCategory::ALL.to_vec()),
    ) {
        let c = contract(&levels);
        let p = purpose(category);
        let term_warnings = |rules: &[PolicyRule]| -> Vec<GovernanceWarning> {
            evaluate_access(&product("crm"), &c, &user("analytics"), &p, rules)
                .warnings
                .into_iter()
                .filter(|w| w.code == WarningCode::PurposeMismatch)
                .collect()
        };
        let baseline = term_warnings(&rules);
        let mut permuted = rules.clone();
        let n = permuted.len();
        let mut state = shuffle;
        for (i, rule) in permuted.iter_mut().enumerate() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            rule.priority = ((state >> 33) as i64 % 97) * 16 + i as i64;
        }
        if n > 1 {
            permuted.rotate_left((shuffle as usize) % n);
        }
        prop_assert_eq!(baseline.clone(), term_warnings(&permuted));
        let expected: BTreeSet<Classification> = levels
            .iter()
            .copied()
            .filter(|l| !terms().allows(*l, category))
            .collect();
        prop_assert_eq!(baseline.len(), expected.len());
    }
}
