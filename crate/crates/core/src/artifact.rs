//! Executable heuristics as produced by the generation actions.

use serde::{Deserialize, Serialize};

use crate::digest::{normalize_whitespace, sha256_hex};

/// How a heuristic payload is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// A parameterized template document, evaluated natively.
    Template,
    /// Free-form code served by the external sandbox worker.
    ExternalCode,
}

/// The shape of what a heuristic computes for its framework.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureKind {
    /// `N × N` edge attractiveness (ACO routing, GLS penalty indicator).
    EdgeMatrix,
    /// Per-item attractiveness (ACO MKP).
    ItemVector,
    /// Per-step item scores (KP construction).
    StepScorer,
}

impl SignatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignatureKind::EdgeMatrix => "edge-matrix",
            SignatureKind::ItemVector => "item-vector",
            SignatureKind::StepScorer => "step-scorer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicArtifact {
    pub description: String,
    pub dialect: Dialect,
    pub payload: String,
    pub signature_kind: SignatureKind,
    pub digest: String,
}

impl HeuristicArtifact {
    pub fn new(description: impl Into<String>, dialect: Dialect, payload: impl Into<String>, signature_kind: SignatureKind) -> Self {
        let description = description.into().trim().to_string();
        let payload = payload.into().trim().to_string();
        let digest = payload_digest(dialect, &payload);
        Self { description, dialect, payload, signature_kind, digest }
    }

    /// Fence info string for this artifact's dialect.
    pub fn fence_info<'a>(&self, code_dialect: &'a str) -> &'a str {
        match self.dialect {
            Dialect::Template => "template",
            Dialect::ExternalCode => code_dialect,
        }
    }

    /// Renders the artifact in the response format the parser accepts: the
    /// description in braces followed by one fenced code block.
    pub fn render(&self, code_dialect: &str) -> String {
        format!("{{{}}}\n\n```{}\n{}\n```\n", self.description, self.fence_info(code_dialect), self.payload)
    }

    pub fn short_digest(&self) -> &str {
        &self.digest[..12.min(self.digest.len())]
    }
}

/// Digest of a payload, stable under whitespace normalization.
pub fn payload_digest(dialect: Dialect, payload: &str) -> String {
    let tag = match dialect {
        Dialect::Template => "template",
        Dialect::ExternalCode => "external-code",
    };
    sha256_hex(format!("{tag}\n{}", normalize_whitespace(payload)).as_bytes())
}
