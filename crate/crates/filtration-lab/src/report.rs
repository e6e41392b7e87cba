//! Claim-by-claim verification reports.
//!
//! Every theorem checker emits one [`VerificationReport`]: an ordered list of
//! claims, each with a verdict and its numeric evidence (dimensions, residual,
//! largest violation) plus a witness string on failure. Reports serialize
//! deterministically: field order is fixed by the struct definitions and no
//! maps are involved.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// True by construction on a finite grid; recorded for completeness of
    /// the claim list, no computation performed.
    Vacuous,
    /// Not attempted because a prerequisite claim failed.
    Skipped,
}

impl Verdict {
    /// Skipped and failed claims block an all-pass verdict; vacuous ones do
    /// not.
    pub fn is_ok(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Vacuous)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Vacuous => "vacuous",
            Verdict::Skipped => "skipped",
        };
        f.write_str(s)
    }
}

/// One verified claim with its evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub verdict: Verdict,
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<String>,
}

impl ClaimRecord {
    pub fn new(id: impl Into<String>, verdict: Verdict, detail: impl Into<String>) -> Self {
        ClaimRecord {
            id: id.into(),
            verdict,
            detail: detail.into(),
            dims: Vec::new(),
            residual: None,
            max_violation: None,
            witness: None,
        }
    }

    pub fn pass(id: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(id, Verdict::Pass, detail)
    }

    pub fn fail(id: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(id, Verdict::Fail, detail)
    }

    pub fn vacuous(id: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(id, Verdict::Vacuous, detail)
    }

    pub fn skipped(id: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(id, Verdict::Skipped, detail)
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_residual(mut self, residual: f64) -> Self {
        self.residual = Some(residual);
        self
    }

    pub fn with_max_violation(mut self, v: f64) -> Self {
        self.max_violation = Some(v);
        self
    }

    pub fn with_witness(mut self, witness: impl Into<String>) -> Self {
        self.witness = Some(witness.into());
        self
    }
}

/// An ordered collection of claims produced by one verification task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub title: String,
    pub claims: Vec<ClaimRecord>,
}

impl VerificationReport {
    pub fn new(title: impl Into<String>) -> Self {
        VerificationReport {
            title: title.into(),
            claims: Vec::new(),
        }
    }

    pub fn push(&mut self, claim: ClaimRecord) {
        debug_assert!(
            self.claims.iter().all(|c| c.id != claim.id),
            "claim {} recorded twice",
            claim.id
        );
        self.claims.push(claim);
    }

    pub fn claim(&self, id: &str) -> Option<&ClaimRecord> {
        self.claims.iter().find(|c| c.id == id)
    }

    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.verdict.is_ok())
    }

    /// Plain-text rendering, one line per claim.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.title));
        for c in &self.claims {
            out.push_str(&format!("  [{:7}] {}: {}", c.verdict, c.id, c.detail));
            if !c.dims.is_empty() {
                out.push_str(&format!(" dims={:?}", c.dims));
            }
            if let Some(r) = c.residual {
                out.push_str(&format!(" residual={r:e}"));
            }
            if let Some(v) = c.max_violation {
                out.push_str(&format!(" max_violation={v:e}"));
            }
            if let Some(w) = &c.witness {
                out.push_str(&format!(" witness: {w}"));
            }
            out.push('\n');
        }
        out
    }
}
