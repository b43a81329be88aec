//! Differential defense scanner.
//!
//! Flags every span a loader would extract but a reader would never see. A
//! finding is `Suspicious` when the hidden text is long enough to carry an
//! attack sequence (five or more words by default) or contains URL-like
//! tokens; shorter metadata-looking remnants are reported as `Info`.

use serde::{Deserialize, Serialize};

use crate::doc::{Document, SpanKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Suspicious,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub kind: SpanKind,
    pub byte_range: std::ops::Range<usize>,
    pub text: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanConfig {
    /// Word count at which hidden text is considered an attack carrier.
    pub suspicious_token_count: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            suspicious_token_count: 5,
        }
    }
}

/// Scan a parsed document: one finding per invisible span.
pub fn scan(doc: &Document, path: &str) -> Vec<Finding> {
    scan_with(doc, path, &ScanConfig::default())
}

pub fn scan_with(doc: &Document, path: &str, config: &ScanConfig) -> Vec<Finding> {
    doc.spans
        .iter()
        .filter(|s| !s.visible)
        .map(|s| {
            let tokens = s.text.split_whitespace().count();
            let urlish = s
                .text
                .split_whitespace()
                .any(|w| w.contains("://") || w.starts_with("www."));
            let severity = if tokens >= config.suspicious_token_count || urlish {
                Severity::Suspicious
            } else {
                Severity::Info
            };
            Finding {
                path: path.to_string(),
                kind: s.kind,
                byte_range: s.origin.clone(),
                text: s.text.clone(),
                severity,
            }
        })
        .collect()
}
