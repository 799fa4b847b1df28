//! Per-step audits of recorded Bregman distances.

use crate::error::{Error, Result};
use crate::solver::{IterationRecord, NoisyRunParams};

/// Default absolute tolerance of the margin audit.
pub const DESCENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConstants {
    pub gamma: f64,
    pub l_max: f64,
    pub g_pstar: f64,
    pub p: f64,
    pub p_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAudit {
    pub iter: u64,
    /// `1 - γ - L^{p*} (G_{p*}/p*) μ^{p*-1}` for this step.
    pub margin: f64,
    /// `Δ_{k-1} - p·margin·μ·Ψ_i(x_{k-1}) - Δ_k`; negative means violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub steps: Vec<StepAudit>,
    pub min_slack: f64,
    /// Iterations whose slack is below `-tolerance`.
    pub violations: Vec<u64>,
    pub tolerance: f64,
}

fn consecutive(history: &[IterationRecord]) -> impl Iterator<Item = (&IterationRecord, &IterationRecord)> {
    history.windows(2).filter(|w| w[1].iter == w[0].iter + 1).map(|w| (&w[0], &w[1]))
}

fn distance(rec: &IterationRecord) -> Result<f64> {
    rec.bregman
        .ok_or_else(|| Error::invalid("audit needs Bregman distances to a known truth"))
}

/// Realized slack of the per-step descent inequality
/// `Δ_k ≤ Δ_{k-1} - p(1 - γ - L^{p*}(G_{p*}/p*)μ_k^{p*-1}) μ_k Ψ_{i_k}(x_{k-1})`
/// over every pair of consecutive records.
pub fn descent_margin_audit(history: &[IterationRecord], constants: &AuditConstants, tolerance: f64) -> Result<MarginReport> {
    let c = constants;
    let mut steps = Vec::new();
    for (prev, cur) in consecutive(history) {
        let (Some(mu), Some(psi)) = (cur.mu, cur.step_psi) else {
            continue;
        };
        let margin = 1.0 - c.gamma - c.l_max.powf(c.p_star) * c.g_pstar / c.p_star * mu.powf(c.p_star - 1.0);
        let slack = distance(prev)? - c.p * margin * mu * psi - distance(cur)?;
        steps.push(StepAudit {
            iter: cur.iter,
            margin,
            slack,
        });
    }
    if steps.is_empty() {
        return Err(Error::invalid("audit needs per-iteration records"));
    }
    let min_slack = steps.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min);
    let violations = steps.iter().filter(|s| s.slack < -tolerance).map(|s| s.iter).collect();
    Ok(MarginReport {
        steps,
        min_slack,
        violations,
        tolerance,
    })
}

/// Iterations at which `Δ_k > Δ_{k-1} + tolerance` between consecutive records.
pub fn bregman_increases(history: &[IterationRecord], tolerance: f64) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (prev, cur) in consecutive(history) {
        if distance(cur)? > distance(prev)? + tolerance {
            out.push(cur.iter);
        }
    }
    Ok(out)
}

/// Iterations at which
/// `Δ_k > Δ_{k-1} + (ω^{-p}/p)(1+γ)^p δ^p μ_k + tolerance`.
pub fn noisy_perturbation_violations(
    history: &[IterationRecord],
    params: &NoisyRunParams,
    gamma: f64,
    p: f64,
    tolerance: f64,
) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (prev, cur) in consecutive(history) {
        let Some(mu) = cur.mu else { continue };
        if distance(cur)? > distance(prev)? + params.step_allowance(gamma, p, mu) + tolerance {
            out.push(cur.iter);
        }
    }
    Ok(out)
}
