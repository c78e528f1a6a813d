//! The marketplace service: access-request lifecycle and the governed query
//! path, with every state change written to the audit log.
//!
//! [`Gateway`] is transport-independent; [`http`] puts it behind an HTTP/JSON
//! API. All mutations of the request store and the audit log go through one
//! mutex. Parsing, validation and execution run outside it.

mod access;
pub mod http;

use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use access::{AccessGrant, AccessRequest, AccessStore, Decision, RequestStatus};

use crate::audit::{
    canonical_json, sha256_hex, AuditError, AuditEvent, AuditFilter, AuditLog, AuditRecord, ChainStatus,
};
use crate::catalog::{
    get_product, search_products, CatalogError, ProductDetail, ProductStatus, ProductSummary, Registry, User,
};
use crate::clock::{format_timestamp, Clock, SystemClock};
use crate::executor::{self, DatasetError, ExecError, ResultSet, Tables};
use crate::governance::{
    AccessContext, DeclaredPurpose, Effect, Evaluator, GovernanceError, PurposeCategory, QueryDenialReason,
    QueryVerdict, RuleEngine,
};
use crate::sqlguard::{self, ParseError, Violation};

/// Actor recorded for decisions the gateway takes on its own.
pub const SYSTEM_ACTOR: &str = "system";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{entity} {id:?} not found")]
    NotFound { entity: &'static str, id: String },
    #[error("an active request {existing} already exists for this product")]
    Conflict { existing: String },
    #[error("data product {0:?} is not active")]
    ProductInactive(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("request {id} is {status}, not pending", status = status.as_str())]
    InvalidState { id: String, status: RequestStatus },
    #[error("no active access grant for {product_id:?}")]
    AccessDenied { product_id: String },
    #[error("invalid purpose: {0}")]
    InvalidPurpose(#[from] GovernanceError),
    #[error("{0}")]
    BadRequest(String),
    #[error("SQL parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("query violates the data contract: {0}")]
    Violation(#[from] Violation),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Result of a governed query that got past access and syntax checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QueryOutcome {
    Executed {
        call_id: String,
        #[serde(flatten)]
        result: ResultSet,
        result_digest: String,
    },
    Rejected {
        call_id: String,
        reasons: Vec<QueryDenialReason>,
    },
}

struct WriterState {
    requests: AccessStore,
    audit: AuditLog,
    next_request: u64,
    next_call: u64,
}

pub struct Gateway {
    registry: Registry,
    tables: Tables,
    evaluator: Box<dyn Evaluator>,
    clock: Arc<dyn Clock>,
    state: Mutex<WriterState>,
}

/// Loads every dataset the registry references.
pub fn load_tables(registry: &Registry) -> Result<Tables, DatasetError> {
    registry
        .datasets()
        .map(|d| {
            let mut table = executor::load_dataset(&d.csv_path, &d.schema_path)?;
            table.name = d.id.clone();
            Ok((d.id.clone(), table))
        })
        .collect()
}

fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        _ => unreachable!("payloads are built from object literals"),
    }
}

impl Gateway {
    /// A gateway with the rule engine and the system clock.
    pub fn new(registry: Registry, tables: Tables, audit: AuditLog) -> Self {
        // Continue id sequences after records left by an earlier run.
        let count = |events: &[AuditEvent]| audit.records().iter().filter(|r| events.contains(&r.event)).count() as u64;
        let next_request = count(&[AuditEvent::AccessRequested]) + 1;
        let next_call = count(&[AuditEvent::QueryAllowed, AuditEvent::QueryDenied]) + 1;
        Self {
            registry,
            tables,
            evaluator: Box::new(RuleEngine),
            clock: Arc::new(SystemClock),
            state: Mutex::new(WriterState {
                requests: AccessStore::default(),
                audit,
                next_request,
                next_call,
            }),
        }
    }

    /// Loads the registry and its datasets from `root` and opens the audit
    /// log at `audit_path` (in memory when `None`).
    pub fn open(root: &Path, audit_path: Option<&Path>) -> Result<Self, OpenError> {
        let registry = crate::catalog::load_registry(root)?;
        let tables = load_tables(&registry)?;
        let audit = match audit_path {
            Some(path) => AuditLog::open(path)?,
            None => AuditLog::in_memory(),
        };
        Ok(Self::new(registry, tables, audit))
    }

    pub fn with_evaluator(mut self, evaluator: Box<dyn Evaluator>) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn tables(&self) -> &Tables {
        &self.tables
    }

    fn lock(&self) -> MutexGuard<'_, WriterState> {
        // A panic while holding the lock leaves the state as it was before
        // the failed operation, since every mutation is a single push.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn now(&self) -> chrono::DateTime<chrono::Utc> {
        self.clock.now()
    }

    pub fn authenticate(&self, api_key: &str) -> Option<&User> {
        self.registry.user_by_api_key(api_key)
    }

    pub fn user(&self, id: &str) -> Option<&User> {
        self.registry.user(id)
    }

    /// Lexical search; blank `query` lists every product with the status.
    pub fn search(
        &self,
        query: Option<&str>,
        status: Option<ProductStatus>,
    ) -> Result<Vec<ProductSummary>, CatalogError> {
        match query.filter(|q| !q.trim().is_empty()) {
            Some(q) => search_products(&self.registry, &[q], status),
            None => {
                let status = status.unwrap_or(ProductStatus::Active);
                Ok(self
                    .registry
                    .products()
                    .filter(|p| p.status == status)
                    .map(|p| ProductSummary {
                        id: p.id.clone(),
                        name: p.title.clone(),
                        description: p.description.clone(),
                        owner: p.owner_team.clone(),
                    })
                    .collect())
            }
        }
    }

    pub fn product_detail(&self, caller: &User, product_id: &str) -> Result<ProductDetail, GatewayError> {
        let state = self.lock();
        get_product(&self.registry, product_id, caller, &state.requests).map_err(|_| GatewayError::NotFound {
            entity: "data product",
            id: product_id.to_string(),
        })
    }

    pub fn create_access_request(
        &self,
        caller: &User,
        product_id: &str,
        purpose_text: &str,
        purpose_category: Option<PurposeCategory>,
    ) -> Result<AccessRequest, GatewayError> {
        let product = self
            .registry
            .product(product_id)
            .ok_or_else(|| GatewayError::NotFound {
                entity: "data product",
                id: product_id.to_string(),
            })?;
        if product.status != ProductStatus::Active {
            return Err(GatewayError::ProductInactive(product_id.to_string()));
        }
        let contract = self
            .registry
            .contract_for(product)
            .expect("active products have a contract");
        let purpose = DeclaredPurpose::new(purpose_text, purpose_category)?;
        let decision = self.evaluator.evaluate_access(AccessContext {
            product,
            contract,
            requester: caller,
            purpose: &purpose,
            policies: self.registry.policies(),
        });

        let mut state = self.lock();
        if let Some(existing) = state.requests.active(&caller.id, product_id) {
            return Err(GatewayError::Conflict {
                existing: existing.id.clone(),
            });
        }
        let id = format!("ar-{:06}", state.next_request);
        let created = self.now();
        let payload = object(json!({
            "product_id": product_id,
            "request_id": id,
            "requester": caller.id,
            "purpose_text": purpose.text,
            "purpose_category": purpose.category,
            "matched_rule": decision.matched_rule,
            "effect": decision.effect,
            "warnings": decision.warnings,
        }));
        state
            .audit
            .append(AuditEvent::AccessRequested, &caller.id, payload, created)?;
        state.next_request += 1;

        let (status, terminal) = match decision.effect {
            Effect::AutoApprove => (RequestStatus::AutoApproved, Some(AuditEvent::AccessAutoApproved)),
            Effect::RequireManual => (RequestStatus::Pending, None),
            Effect::Deny => (RequestStatus::Rejected, Some(AuditEvent::AccessRejected)),
        };
        let mut request = AccessRequest {
            id: id.clone(),
            product_id: product_id.to_string(),
            requester: caller.id.clone(),
            purpose,
            status,
            decision,
            reviewer: None,
            review_note: None,
            created_at: format_timestamp(&created),
            decided_at: None,
        };
        if let Some(event) = terminal {
            let decided = self.now();
            request.reviewer = Some(SYSTEM_ACTOR.to_string());
            request.decided_at = Some(format_timestamp(&decided));
            let payload = object(json!({
                "product_id": product_id,
                "request_id": id,
                "requester": caller.id,
                "matched_rule": request.decision.matched_rule,
            }));
            // The request exists once access_requested is persisted, so it is
            // stored even if this second append fails.
            let appended = state.audit.append(event, SYSTEM_ACTOR, payload, decided);
            if let Err(e) = appended {
                request.status = RequestStatus::Pending;
                request.reviewer = None;
                request.decided_at = None;
                state.requests.insert(request);
                return Err(e.into());
            }
        }
        state.requests.insert(request.clone());
        Ok(request)
    }

    /// Requests visible to `caller`: their own plus those for products their
    /// team owns, oldest first.
    pub fn list_requests(&self, caller: &User, status: Option<RequestStatus>) -> Vec<AccessRequest> {
        let state = self.lock();
        state
            .requests
            .all()
            .iter()
            .filter(|r| status.is_none_or(|s| r.status == s))
            .filter(|r| {
                r.requester == caller.id
                    || self
                        .registry
                        .product(&r.product_id)
                        .is_some_and(|p| p.owner_team == caller.team_id)
            })
            .cloned()
            .collect()
    }

    pub fn request(&self, id: &str) -> Option<AccessRequest> {
        self.lock().requests.get(id).cloned()
    }

    pub fn decide_request(
        &self,
        reviewer: &User,
        request_id: &str,
        decision: Decision,
        note: Option<&str>,
    ) -> Result<AccessRequest, GatewayError> {
        let mut state = self.lock();
        let request = state.requests.get(request_id).ok_or_else(|| GatewayError::NotFound {
            entity: "access request",
            id: request_id.to_string(),
        })?;
        let product = self
            .registry
            .product(&request.product_id)
            .expect("requests reference registered products");
        if product.owner_team != reviewer.team_id {
            return Err(GatewayError::Forbidden(format!(
                "only members of team {} may decide requests for {}",
                product.owner_team, product.id
            )));
        }
        if request.status != RequestStatus::Pending {
            return Err(GatewayError::InvalidState {
                id: request.id.clone(),
                status: request.status,
            });
        }
        let (status, event) = match decision {
            Decision::Approve => (RequestStatus::Approved, AuditEvent::AccessApproved),
            Decision::Reject => (RequestStatus::Rejected, AuditEvent::AccessRejected),
        };
        let decided = self.now();
        let payload = object(json!({
            "product_id": request.product_id,
            "request_id": request.id,
            "requester": request.requester,
            "note": note,
        }));
        state.audit.append(event, &reviewer.id, payload, decided)?;
        let request = state.requests.get_mut(request_id).expect("looked up above");
        request.status = status;
        request.reviewer = Some(reviewer.id.clone());
        request.review_note = note.map(str::to_string);
        request.decided_at = Some(format_timestamp(&decided));
        Ok(request.clone())
    }

    /// The governed query path. Every call leaves at least one audit record:
    /// `query_denied` when it stops early, otherwise `query_allowed` then
    /// `query_executed`.
    pub fn run_query(
        &self,
        caller: &User,
        product_id: &str,
        sql_text: &str,
        purpose_text: Option<&str>,
    ) -> Result<QueryOutcome, GatewayError> {
        let purpose_text = purpose_text.filter(|t| !t.trim().is_empty());
        let (call_id, grant) = {
            let mut state = self.lock();
            let call_id = format!("q-{:06}", state.next_call);
            state.next_call += 1;
            (call_id, state.requests.grant(&caller.id, product_id))
        };
        let call = QueryCall {
            gateway: self,
            caller,
            product_id,
            sql_text,
            call_id: &call_id,
        };

        let contract = self
            .registry
            .product(product_id)
            .and_then(|p| self.registry.contract_for(p));
        let Some(contract) = contract else {
            let err = GatewayError::NotFound {
                entity: "data product",
                id: product_id.to_string(),
            };
            return Err(call.deny_early(purpose_text, None, "not_found", err)?);
        };
        let Some(grant) = grant else {
            let err = GatewayError::AccessDenied {
                product_id: product_id.to_string(),
            };
            return Err(call.deny_early(purpose_text, None, "access_denied", err)?);
        };
        let session_purpose = match purpose_text {
            Some(text) => match DeclaredPurpose::new(text, None) {
                Ok(p) => p,
                Err(e) => return Err(call.deny_early(Some(text), None, "invalid_purpose", e.into())?),
            },
            None => grant.purpose.clone(),
        };
        let purpose = Some(&session_purpose);
        let ast = match sqlguard::parse_sql(sql_text) {
            Ok(ast) => ast,
            Err(e) => return Err(call.deny_early(None, purpose, "parse_error", e.into())?),
        };
        let validated = match sqlguard::validate(&ast, contract) {
            Ok(v) => v,
            Err(v) => {
                let code = violation_code(&v);
                return Err(call.deny_early(None, purpose, code, v.into())?);
            }
        };

        let verdict = self
            .evaluator
            .evaluate_query(&grant, &validated, contract, &session_purpose);
        if let QueryVerdict::Deny { reasons } = verdict {
            call.append(
                AuditEvent::QueryDenied,
                &session_purpose,
                json!({
                    "request_id": grant.request_id,
                    "verdict_reasons": reasons,
                }),
            )?;
            return Ok(QueryOutcome::Rejected { call_id, reasons });
        }

        let referenced: Vec<String> = validated
            .referenced_columns
            .iter()
            .map(|c| format!("{}.{}", c.table, c.column))
            .collect();
        call.append(
            AuditEvent::QueryAllowed,
            &session_purpose,
            json!({
                "request_id": grant.request_id,
                "referenced_columns": referenced,
            }),
        )?;
        let result = executor::execute(&validated, &self.tables)?;
        let result_digest = result_digest(&result);
        call.append(
            AuditEvent::QueryExecuted,
            &session_purpose,
            json!({
                "request_id": grant.request_id,
                "result_digest": result_digest,
                "row_count": result.row_count,
                "truncated": result.truncated,
            }),
        )?;
        Ok(QueryOutcome::Executed {
            call_id,
            result,
            result_digest,
        })
    }

    pub fn audit(&self, filter: &AuditFilter) -> Vec<AuditRecord> {
        self.lock().audit.query(filter)
    }

    pub fn verify_audit(&self) -> Result<ChainStatus, AuditError> {
        self.lock().audit.verify()
    }
}

/// SHA-256 of the canonical JSON serialization of a result set.
pub fn result_digest(result: &ResultSet) -> String {
    let value = serde_json::to_value(result).expect("result sets serialize");
    sha256_hex(canonical_json(&value).as_bytes())
}

fn violation_code(v: &Violation) -> &'static str {
    match v {
        Violation::UnknownTable { .. } => "unknown_table",
        Violation::UnknownColumn { .. } => "unknown_column",
        Violation::AmbiguousColumn { .. } => "ambiguous_column",
        Violation::TypeMismatch { .. } => "type_mismatch",
        Violation::InvalidGrouping { .. } => "invalid_grouping",
        Violation::DuplicateTable { .. } => "duplicate_table",
    }
}

struct QueryCall<'a> {
    gateway: &'a Gateway,
    caller: &'a User,
    product_id: &'a str,
    sql_text: &'a str,
    call_id: &'a str,
}

impl QueryCall<'_> {
    fn append(&self, event: AuditEvent, purpose: &DeclaredPurpose, extra: Value) -> Result<AuditRecord, AuditError> {
        self.append_raw(event, json!(purpose.text), json!(purpose.category), extra)
    }

    fn append_raw(
        &self,
        event: AuditEvent,
        purpose_text: Value,
        purpose_category: Value,
        extra: Value,
    ) -> Result<AuditRecord, AuditError> {
        let mut payload = object(json!({
            "product_id": self.product_id,
            "call_id": self.call_id,
            "sql_text": self.sql_text,
            "purpose_text": purpose_text,
            "purpose_category": purpose_category,
        }));
        payload.extend(object(extra));
        let now = self.gateway.now();
        self.gateway.lock().audit.append(event, &self.caller.id, payload, now)
    }

    /// Records a `query_denied` for a call stopped before governance ran and
    /// hands back `err` for the caller.
    fn deny_early(
        &self,
        text: Option<&str>,
        purpose: Option<&DeclaredPurpose>,
        code: &str,
        err: GatewayError,
    ) -> Result<GatewayError, AuditError> {
        let (purpose_text, purpose_category) = match (purpose, text) {
            (Some(p), _) => (json!(p.text), json!(p.category)),
            (None, Some(t)) => (json!(t), json!(crate::governance::classify_purpose(t).ok())),
            (None, None) => (Value::Null, Value::Null),
        };
        let reasons = json!([{ "code": code, "message": err.to_string() }]);
        self.append_raw(
            AuditEvent::QueryDenied,
            purpose_text,
            purpose_category,
            json!({ "verdict_reasons": reasons }),
        )?;
        Ok(err)
    }
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}
