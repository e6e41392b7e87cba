//! Task orchestration: runs a loaded scenario's verification tasks and
//! assembles a deterministic report.
//!
//! A run never aborts on a failing task: every task contributes either its
//! verification report or the error that stopped it, and the overall verdict
//! is the conjunction. Reports are byte-identical for identical inputs --
//! no timestamps, no map iteration, and floats rendered by the standard
//! shortest-roundtrip formatter.

use crate::credit::kusuoka_verify;
use crate::enlarge::{
    multiplicity_verify, theorem34_verify, theorem42_verify, EnlargementScenario, DEFAULT_D_CAP,
};
use crate::error::Error;
use crate::num::Scalar;
use crate::report::{ClaimRecord, Verdict, VerificationReport};
use crate::repr::prp_check;
use crate::scenario::{parse_number, Loaded, LoadedScenario, TaskSpec};
use crate::semimart::prp_transfer_check;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One executed task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub kind: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verification: Option<VerificationReport>,
}

/// The full run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    /// SHA-256 of the scenario bytes, hex encoded.
    pub digest: String,
    /// Library version that produced the report.
    pub version: String,
    /// Arithmetic backend: "rational" or "float".
    pub mode: String,
    /// Tolerance in effect (float rendering; exact zero in rational mode).
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub tasks: Vec<TaskReport>,
    pub passed: bool,
}

impl Report {
    /// Deterministic structured rendering.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Human-readable rendering, one line per claim.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "scenario {} (mode {}, tol {:e})\n",
            &self.digest[..16.min(self.digest.len())],
            self.mode,
            self.tol
        ));
        for task in &self.tasks {
            out.push_str(&format!(
                "task {}: {}\n",
                task.kind,
                if task.passed { "pass" } else { "FAIL" }
            ));
            if let Some(err) = &task.error {
                out.push_str(&format!("  error: {err}\n"));
            }
            if let Some(v) = &task.verification {
                for line in v.render_text().lines().skip(1) {
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.passed { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// Run options resolved by the caller (CLI flags, environment).
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the backend default tolerance.
    pub tol_override: Option<f64>,
    /// Recorded in the report; used by tasks that sample (currently none).
    pub seed: Option<u64>,
    /// Restricts execution to tasks of the named kinds (empty = all).
    pub task_filter: Vec<String>,
}

/// SHA-256 digest of scenario bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads and runs scenario bytes.
pub fn run_bytes(bytes: &[u8], options: &RunOptions) -> Result<Report, crate::scenario::LoadError> {
    let loaded = crate::scenario::load_scenario(bytes, options.tol_override)?;
    let digest = digest_bytes(bytes);
    Ok(match loaded {
        Loaded::Rational(s) => run_loaded(&s, digest, options),
        Loaded::Float(s) => run_loaded(&s, digest, options),
    })
}

/// Runs every (selected) task of a loaded scenario. Task failures are
/// recorded, never propagated: a structurally broken task yields a task
/// report carrying the error.
pub fn run_loaded<S: Scalar>(
    scenario: &LoadedScenario<S>,
    digest: String,
    options: &RunOptions,
) -> Report {
    let mut tasks = Vec::new();
    let mut all_passed = true;
    for spec in &scenario.tasks {
        if !options.task_filter.is_empty()
            && !options.task_filter.iter().any(|k| k == spec.kind())
        {
            continue;
        }
        let report = run_task(scenario, spec);
        all_passed &= report.passed;
        tasks.push(report);
    }
    Report {
        digest,
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: S::mode_name().to_string(),
        tol: scenario.tol.to_f64(),
        seed: options.seed,
        tasks,
        passed: all_passed,
    }
}

fn task_tol<S: Scalar>(scenario: &LoadedScenario<S>, spec: &TaskSpec) -> Result<S, Error<S>> {
    match spec.tol() {
        None => Ok(scenario.tol.clone()),
        Some(repr) => parse_number::<S>(repr, "task.tol"),
    }
}

fn run_task<S: Scalar>(scenario: &LoadedScenario<S>, spec: &TaskSpec) -> TaskReport {
    let kind = spec.kind().to_string();
    match execute(scenario, spec) {
        Ok(verification) => TaskReport {
            kind,
            passed: verification.all_pass(),
            error: None,
            verification: Some(verification),
        },
        Err(e) => TaskReport {
            kind,
            passed: false,
            error: Some(e.to_string()),
            verification: None,
        },
    }
}

fn named_process<'a, S: Scalar>(
    scenario: &'a LoadedScenario<S>,
    name: &str,
) -> Result<&'a crate::process::AdaptedProcess<S>, Error<S>> {
    scenario
        .processes
        .get(name)
        .ok_or_else(|| Error::validation("task", format!("unknown process {name:?}")))
}

fn execute<S: Scalar>(
    scenario: &LoadedScenario<S>,
    spec: &TaskSpec,
) -> Result<VerificationReport, Error<S>> {
    let tol = task_tol(scenario, spec)?;
    match spec {
        TaskSpec::Theorem34 { x, y, .. } => {
            let scn = EnlargementScenario::new(
                scenario.space.clone(),
                vec![
                    (x.clone(), named_process(scenario, x)?.clone()),
                    (y.clone(), named_process(scenario, y)?.clone()),
                ],
            )?;
            theorem34_verify(&scn, &tol)
        }
        TaskSpec::Theorem42 { drivers, d_cap, .. } => {
            let named = drivers
                .iter()
                .map(|name| Ok((name.clone(), named_process(scenario, name)?.clone())))
                .collect::<Result<Vec<_>, Error<S>>>()?;
            let scn = EnlargementScenario::new(scenario.space.clone(), named)?;
            theorem42_verify(&scn, d_cap.unwrap_or(DEFAULT_D_CAP), &tol)
        }
        TaskSpec::Multiplicity {
            filtration, expect, ..
        } => {
            let f = scenario.filtrations.get(filtration).ok_or_else(|| {
                Error::validation("task", format!("unknown filtration {filtration:?}"))
            })?;
            multiplicity_verify(f, &scenario.space.measure(), *expect, &tol)
        }
        TaskSpec::Prp {
            drivers,
            filtration,
            expect,
            ..
        } => {
            let f = scenario.filtrations.get(filtration).ok_or_else(|| {
                Error::validation("task", format!("unknown filtration {filtration:?}"))
            })?;
            let mut generators = Vec::new();
            for name in drivers {
                let p = named_process(scenario, name)?;
                for k in 0..p.dim() {
                    generators.push(p.component(k));
                }
            }
            let check = prp_check(&generators, &scenario.space.measure(), f, &tol)?;
            let expected = expect.unwrap_or(true);
            let mut report = VerificationReport::new("predictable representation property");
            let ok = check.holds == expected;
            let claim = ClaimRecord::new(
                "prp",
                if ok { Verdict::Pass } else { Verdict::Fail },
                format!(
                    "stable space has dimension {} of ambient {} (complete: {}, expected {})",
                    check.dim, check.ambient_dim, check.holds, expected
                ),
            )
            .with_dims(vec![check.dim, check.ambient_dim]);
            report.push(claim);
            Ok(report)
        }
        TaskSpec::MinimalMeasure { x, .. } => {
            let driver = named_process(scenario, x)?;
            let f = driver.filtration().clone();
            let transfer =
                prp_transfer_check(driver, &f, &scenario.space.measure(), &tol)?;
            let mut report = VerificationReport::new("minimal martingale measure");
            match &transfer.failure {
                Some(e) => {
                    report.push(
                        ClaimRecord::fail("minimal_measure", "construction failed")
                            .with_witness(e.to_string()),
                    );
                    report.push(ClaimRecord::skipped("transfer", "prerequisite failed"));
                }
                None => {
                    let prp_x = transfer.prp_driver_under_minimal.as_ref().expect("present");
                    let prp_m = transfer.prp_martingale_under_base.as_ref().expect("present");
                    report.push(
                        ClaimRecord::pass(
                            "minimal_measure",
                            "Doleans density is positive and reweights the driver to a martingale",
                        )
                        .with_dims(vec![prp_x.dim, prp_x.ambient_dim]),
                    );
                    let gap = transfer.girsanov_gap.unwrap_or(f64::INFINITY);
                    let ok = transfer.equivalent == Some(true)
                        && gap <= tol.to_f64().max(f64::EPSILON);
                    report.push(
                        ClaimRecord::new(
                            "transfer",
                            if ok { Verdict::Pass } else { Verdict::Fail },
                            format!(
                                "completeness under the minimal measure ({}) matches the \
                                 martingale part under the base measure ({})",
                                prp_x.holds, prp_m.holds
                            ),
                        )
                        .with_dims(vec![prp_x.dim, prp_m.dim])
                        .with_max_violation(gap),
                    );
                }
            }
            Ok(report)
        }
        TaskSpec::Kusuoka { .. } => {
            let model = scenario.default_model.as_ref().ok_or_else(|| {
                Error::validation("task", "kusuoka task requires a default_model section")
            })?;
            Ok(kusuoka_verify(model, &tol)?.report)
        }
    }
}
