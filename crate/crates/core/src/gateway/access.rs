use serde::{Deserialize, Serialize};

use crate::catalog::{AccessLookup, AccessStatus};
use crate::governance::{DeclaredPurpose, GovernanceDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Approved,
    AutoApproved,
    Rejected,
}

impl RequestStatus {
    pub const ALL: [RequestStatus; 4] = [
        RequestStatus::Pending,
        RequestStatus::Approved,
        RequestStatus::AutoApproved,
        RequestStatus::Rejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestStatus::Pending => "pending",
            RequestStatus::Approved => "approved",
            RequestStatus::AutoApproved => "auto_approved",
            RequestStatus::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Pending or approving: blocks a second request for the same product.
    pub fn is_active(self) -> bool {
        self != RequestStatus::Rejected
    }

    pub fn grants_access(self) -> bool {
        matches!(self, RequestStatus::Approved | RequestStatus::AutoApproved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub id: String,
    pub product_id: String,
    pub requester: String,
    pub purpose: DeclaredPurpose,
    pub status: RequestStatus,
    pub decision: GovernanceDecision,
    pub reviewer: Option<String>,
    pub review_note: Option<String>,
    pub created_at: String,
    pub decided_at: Option<String>,
}

/// Standing permission derived from an approved or auto-approved request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessGrant {
    pub request_id: String,
    pub requester: String,
    pub product_id: String,
    pub purpose: DeclaredPurpose,
}

/// Access requests in creation order.
#[derive(Debug, Clone, Default)]
pub struct AccessStore {
    requests: Vec<AccessRequest>,
}

impl AccessStore {
    pub fn all(&self) -> &[AccessRequest] {
        &self.requests
    }

    pub fn get(&self, id: &str) -> Option<&AccessRequest> {
        self.requests.iter().find(|r| r.id == id)
    }

    pub(crate) fn get_mut(&mut self, id: &str) -> Option<&mut AccessRequest> {
        self.requests.iter_mut().find(|r| r.id == id)
    }

    pub(crate) fn insert(&mut self, request: AccessRequest) {
        self.requests.push(request);
    }

    fn latest(&self, requester: &str, product_id: &str) -> Option<&AccessRequest> {
        self.requests
            .iter()
            .rev()
            .find(|r| r.requester == requester && r.product_id == product_id)
    }

    pub fn active(&self, requester: &str, product_id: &str) -> Option<&AccessRequest> {
        self.requests
            .iter()
            .find(|r| r.requester == requester && r.product_id == product_id && r.status.is_active())
    }

    pub fn grant(&self, requester: &str, product_id: &str) -> Option<AccessGrant> {
        self.requests
            .iter()
            .find(|r| r.requester == requester && r.product_id == product_id && r.status.grants_access())
            .map(|r| AccessGrant {
                request_id: r.id.clone(),
                requester: r.requester.clone(),
                product_id: r.product_id.clone(),
                purpose: r.purpose.clone(),
            })
    }
}

impl AccessLookup for AccessStore {
    fn access_status(&self, requester: &str, product_id: &str) -> AccessStatus {
        match self.latest(requester, product_id).map(|r| r.status) {
            None => AccessStatus::None,
            Some(RequestStatus::Pending) => AccessStatus::Pending,
            Some(RequestStatus::Approved | RequestStatus::AutoApproved) => AccessStatus::Active,
            Some(RequestStatus::Rejected) => AccessStatus::Rejected,
        }
    }
}
