//! Polyak's lemma: if `δ_{n+1} ≤ δ_n - μ_{n+1} δ_n^{1+a}` with `a > 0`, then
//! `δ_n ≤ δ_0 (1 + a δ_0^a Σ_{j≤n} μ_j)^{-1/a}`.

use crate::error::{Error, Result};

/// Relative slack allowed in both the hypothesis and the conclusion.
pub const POLYAK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyakVerdict {
    BoundHolds,
    /// The recursion fails at step `index → index + 1`.
    HypothesisViolated { index: usize },
    /// The hypothesis holds but the bound fails at `index`.
    BoundViolated { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyakReport {
    pub verdict: PolyakVerdict,
    /// `δ_0 (1 + a δ_0^a Σ_{j≤n} μ_j)^{-1/a}` for every `n`.
    pub bound: Vec<f64>,
}

/// Checks the hypothesis and conclusion of Polyak's lemma for `δ_0..δ_N`
/// with steps `μ_1..μ_N`.
pub fn verify_polyak(sequence: &[f64], mu: &[f64], alpha_minus_one: f64) -> Result<PolyakReport> {
    if sequence.is_empty() || mu.len() + 1 != sequence.len() {
        return Err(Error::invalid(format!(
            "need N + 1 sequence values for N steps, got {} and {}",
            sequence.len(),
            mu.len()
        )));
    }
    if !(alpha_minus_one > 0.0) {
        return Err(Error::invalid(format!("exponent offset {alpha_minus_one} must be positive")));
    }
    if sequence.iter().any(|d| !(*d >= 0.0)) || mu.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::invalid("sequence must be nonnegative and steps positive"));
    }
    let a = alpha_minus_one;
    let d0 = sequence[0];
    let tol = POLYAK_TOLERANCE * d0.max(f64::MIN_POSITIVE);
    let mut bound = Vec::with_capacity(sequence.len());
    let mut step_sum = 0.0;
    bound.push(d0);
    for &m in mu {
        step_sum += m;
        bound.push(d0 * (1.0 + a * d0.powf(a) * step_sum).powf(-1.0 / a));
    }
    for (n, w) in sequence.windows(2).enumerate() {
        if w[1] > w[0] - mu[n] * w[0].powf(1.0 + a) + tol {
            return Ok(PolyakReport {
                verdict: PolyakVerdict::HypothesisViolated { index: n },
                bound,
            });
        }
    }
    let verdict = sequence
        .iter()
        .zip(&bound)
        .position(|(d, b)| *d > b + tol)
        .map_or(PolyakVerdict::BoundHolds, |index| PolyakVerdict::BoundViolated { index });
    Ok(PolyakReport { verdict, bound })
}

/// Forward simulation `δ_{n+1} = δ_n - μ_{n+1} δ_n^{1+a}` (equality case).
pub fn polyak_recursion(d0: f64, mu: &[f64], alpha_minus_one: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(mu.len() + 1);
    let mut d = d0;
    out.push(d);
    for m in mu {
        d = (d - m * d.powf(1.0 + alpha_minus_one)).max(0.0);
        out.push(d);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sequence_holds() {
        let r = verify_polyak(&[0.0; 5], &[0.3; 4], 0.5).unwrap();
        assert_eq!(r.verdict, PolyakVerdict::BoundHolds);
        assert!(r.bound.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn equality_recursion_satisfies_bound() {
        let mu: Vec<f64> = (1..=200).map(|k| 0.5 / (k as f64).sqrt()).collect();
        for &a in &[0.25, 0.5, 1.0, 2.0] {
            let seq = polyak_recursion(0.9, &mu, a);
            assert_eq!(verify_polyak(&seq, &mu, a).unwrap().verdict, PolyakVerdict::BoundHolds);
        }
    }

    #[test]
    fn hypothesis_violation_is_flagged() {
        let mu = vec![0.1; 10];
        let mut seq = polyak_recursion(1.0, &mu, 1.0);
        seq[6] *= 1.5;
        assert_eq!(
            verify_polyak(&seq, &mu, 1.0).unwrap().verdict,
            PolyakVerdict::HypothesisViolated { index: 5 }
        );
    }

    #[test]
    fn malformed_inputs() {
        assert!(verify_polyak(&[1.0, 0.5], &[], 1.0).is_err());
        assert!(verify_polyak(&[1.0, 0.5], &[0.1], 0.0).is_err());
        assert!(verify_polyak(&[1.0, -0.5], &[0.1], 1.0).is_err());
    }
}
