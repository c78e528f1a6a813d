use super::{GovernanceError, PurposeCategory};

// Checked in order; the first family with a keyword in the text wins.
const KEYWORD_FAMILIES: &[(&[&str], PurposeCategory)] = &[
    (
        &["campaign", "marketing", "email", "outreach"],
        PurposeCategory::MarketingOutreach,
    ),
    (&["support", "ticket"], PurposeCategory::SupportOperations),
    (&["report", "dashboard"], PurposeCategory::Reporting),
    (&["research", "study"], PurposeCategory::Research),
    (
        &["top", "revenue", "analy", "customer insight"],
        PurposeCategory::Analytics,
    ),
];

/// Maps free-text purpose to a category by case-insensitive keyword match.
pub fn classify_purpose(text: &str) -> Result<PurposeCategory, GovernanceError> {
    if text.trim().is_empty() {
        return Err(GovernanceError::EmptyPurpose);
    }
    let lowered = text.to_lowercase();
    Ok(KEYWORD_FAMILIES
        .iter()
        .find(|(keywords, _)| keywords.iter().any(|k| lowered.contains(k)))
        .map(|(_, category)| *category)
        .unwrap_or(PurposeCategory::Other))
}
