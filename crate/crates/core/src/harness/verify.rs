//! Recomputes the data-driven regret bound from emitted traces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::regret_bound;
use crate::harness::emit::{read_manifest, read_run};
use crate::harness::run::{RunTrace, StepRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheck {
    pub run_id: usize,
    pub policy: String,
    pub realized_regret: f64,
    /// `None` when some step has no recorded proxy.
    pub bound: Option<f64>,
    pub within_bound: bool,
    pub prefix_sum_ok: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub runs: Vec<RunCheck>,
    pub skipped_failed: usize,
}

impl VerifyReport {
    /// Runs with a computable bound.
    pub fn checked(&self) -> usize {
        self.runs.iter().filter(|r| r.bound.is_some()).count()
    }

    pub fn passes(&self) -> usize {
        self.runs.iter().filter(|r| r.bound.is_some() && r.within_bound).count()
    }

    pub fn pass_fraction(&self) -> f64 {
        let n = self.checked();
        if n == 0 {
            return f64::NAN;
        }
        self.passes() as f64 / n as f64
    }

    pub fn prefix_failures(&self) -> usize {
        self.runs.iter().filter(|r| !r.prefix_sum_ok).count()
    }

    /// Pass fraction per policy, in first-seen order.
    pub fn by_policy(&self) -> Vec<(String, usize, usize)> {
        let mut out: Vec<(String, usize, usize)> = Vec::new();
        for r in self.runs.iter().filter(|r| r.bound.is_some()) {
            let idx = match out.iter().position(|(p, _, _)| p == &r.policy) {
                Some(i) => i,
                None => {
                    out.push((r.policy.clone(), 0, 0));
                    out.len() - 1
                }
            };
            out[idx].2 += 1;
            if r.within_bound {
                out[idx].1 += 1;
            }
        }
        out
    }
}

/// Checks one run's records against `√(2d Σμ² log(1+T/λ))·β_T`.
pub fn check_steps(
    run_id: usize,
    policy: &str,
    steps: &[StepRecord],
    dim: usize,
    lambda_reg: f64,
    beta_t: f64,
) -> RunCheck {
    let mut acc = 0.0;
    let mut prefix_ok = true;
    let mut mu_sq = 0.0;
    let mut complete = true;
    for (i, r) in steps.iter().enumerate() {
        acc += r.instant_regret;
        if (acc - r.cum_regret).abs() > 1e-9 * (1.0 + acc.abs()) || r.t != i + 1 {
            prefix_ok = false;
        }
        match r.effective_proxy() {
            Some(p) => mu_sq += p * p,
            None => complete = false,
        }
    }
    let realized = steps.last().map(|r| r.cum_regret).unwrap_or(0.0);
    let bound = complete.then(|| regret_bound(mu_sq, dim, steps.len() as u64, lambda_reg, beta_t));
    RunCheck {
        run_id,
        policy: policy.to_string(),
        realized_regret: realized,
        bound,
        within_bound: bound.is_some_and(|b| realized <= b),
        prefix_sum_ok: prefix_ok,
        steps: steps.len(),
    }
}

/// In-memory verification of completed traces.
pub fn verify_bounds(traces: &[RunTrace]) -> VerifyReport {
    let mut report = VerifyReport::default();
    for tr in traces {
        let s = &tr.summary;
        if s.failed.is_some() {
            report.skipped_failed += 1;
            continue;
        }
        report.runs.push(check_steps(s.run_id, &s.policy, &tr.steps, s.dim, s.lambda_reg, s.beta_final));
    }
    report
}

/// Verification from an output directory written by the harness.
pub fn verify_dir(dir: &Path) -> Result<VerifyReport> {
    let manifest = read_manifest(dir)?;
    let mut report = VerifyReport::default();
    for s in &manifest.runs {
        if s.failed.is_some() {
            report.skipped_failed += 1;
            continue;
        }
        let rows = read_run(dir, s.run_id)?;
        let steps: Vec<StepRecord> = rows.into_iter().map(|r| r.step).collect();
        report.runs.push(check_steps(s.run_id, &s.policy, &steps, s.dim, s.lambda_reg, s.beta_final));
    }
    Ok(report)
}
