//! Least-squares rate fits on seed-averaged Bregman distances.

use crate::error::{Error, Result};
use crate::solver::{IterationRecord, ScheduleSpec};

/// Fraction of leading records excluded from exact-data fits.
pub const BURN_IN_FRACTION: f64 = 0.1;
/// Seed averages below this multiple of the initial value are treated as
/// roundoff and excluded.
pub const FLOOR_RATIO: f64 = 1e-20;
pub const MIN_FIT_POINTS: usize = 3;
pub const MIN_EXACT_SEEDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `log E[Δ_k]` against `k`; the rate is the per-step factor.
    Linear,
    /// `log E[Δ_k]` against `log Σ_{j≤k} μ_j`; the rate is the slope.
    Algebraic,
    /// `log E[Δ_{k(δ)}]` against `log δ`; the rate is the slope.
    PowerlawInDelta,
}

impl RateModel {
    pub fn as_str(self) -> &'static str {
        match self {
            RateModel::Linear => "linear",
            RateModel::Algebraic => "algebraic",
            RateModel::PowerlawInDelta => "powerlaw_in_delta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    pub fitted_rate: f64,
    pub r_squared: f64,
    /// Inclusive range of the abscissa indices (iterations, or positions in
    /// the δ list) used.
    pub window: (u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactRateOutcome {
    Fitted(RateFit),
    /// Every seed starts at zero distance.
    AlreadyConverged,
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, r²)`.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Fit(format!("need at least two paired points, got {}", xs.len().min(ys.len()))));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok((slope, intercept, r2))
}

/// Seed average of `D(x_k, x†)` at the recorded iterations shared by all
/// histories.
pub fn mean_bregman_curve(histories: &[Vec<IterationRecord>]) -> Result<Vec<(u64, f64)>> {
    let first = histories.first().ok_or_else(|| Error::Fit("no histories".into()))?;
    let mut curve = Vec::with_capacity(first.len());
    for (idx, rec) in first.iter().enumerate() {
        let mut sum = 0.0;
        for h in histories {
            let other = h
                .get(idx)
                .filter(|r| r.iter == rec.iter)
                .ok_or_else(|| Error::Fit("histories are not aligned on iterations".into()))?;
            sum += other
                .bregman
                .ok_or_else(|| Error::Fit("history lacks Bregman distances (no truth)".into()))?;
        }
        curve.push((rec.iter, sum / histories.len() as f64));
    }
    Ok(curve)
}

/// Fits the exact-data decay of `E[Δ_k]`: geometric in `k` for `α = 1`,
/// power law in `Σ μ` for `α > 1`. The first 10% of records and anything
/// after the average drops to roundoff level are excluded.
pub fn fit_exact_rate(histories: &[Vec<IterationRecord>], alpha: f64, schedule: &ScheduleSpec) -> Result<ExactRateOutcome> {
    if histories.len() < MIN_EXACT_SEEDS {
        return Err(Error::Fit(format!(
            "need at least {MIN_EXACT_SEEDS} seeds, got {}",
            histories.len()
        )));
    }
    if !(alpha >= 1.0) {
        return Err(Error::invalid(format!("stability exponent {alpha} must be >= 1")));
    }
    let curve = mean_bregman_curve(histories)?;
    let d0 = curve[0].1;
    if d0 == 0.0 && curve.iter().all(|(_, d)| *d == 0.0) {
        return Ok(ExactRateOutcome::AlreadyConverged);
    }
    let burn_in = (BURN_IN_FRACTION * curve.len() as f64).floor() as usize;
    let floor = FLOOR_RATIO * d0;
    let usable: Vec<(u64, f64)> = curve
        .iter()
        .skip(burn_in)
        .take_while(|(_, d)| *d > floor)
        .copied()
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("only {} usable points", usable.len())));
    }
    let window = (usable[0].0, usable[usable.len() - 1].0);
    let ys: Vec<f64> = usable.iter().map(|(_, d)| d.ln()).collect();
    if alpha == 1.0 {
        let xs: Vec<f64> = usable.iter().map(|(k, _)| *k as f64).collect();
        let (slope, _, r2) = linear_regression(&xs, &ys)?;
        return Ok(ExactRateOutcome::Fitted(RateFit {
            model: RateModel::Linear,
            fitted_rate: slope.exp(),
            r_squared: r2,
            window,
        }));
    }
    let last = window.1;
    let mut sums = Vec::with_capacity(last as usize + 1);
    let mut acc = 0.0;
    sums.push(0.0);
    for k in 1..=last {
        acc += schedule.step(k)?;
        sums.push(acc);
    }
    let mut xs = Vec::with_capacity(usable.len());
    for (k, _) in &usable {
        if *k == 0 {
            return Err(Error::Fit("algebraic fit window contains k = 0".into()));
        }
        xs.push(sums[*k as usize].ln());
    }
    let (slope, _, r2) = linear_regression(&xs, &ys)?;
    Ok(ExactRateOutcome::Fitted(RateFit {
        model: RateModel::Algebraic,
        fitted_rate: slope,
        r_squared: r2,
        window,
    }))
}

/// `1 - C_p C_α (margin) μ / N`, the guaranteed per-step contraction of
/// `E[Δ_k]` for `α = 1` and constant steps.
pub fn theoretical_contraction(c_p: f64, c_alpha: f64, margin: f64, mu: f64, n_blocks: usize) -> f64 {
    1.0 - c_p * c_alpha * margin * mu / n_blocks as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iter: u64, bregman: f64) -> IterationRecord {
        IterationRecord {
            epoch: iter,
            iter,
            mu: None,
            batch: None,
            psi: 0.0,
            residual: 0.0,
            rel_l2_err: None,
            bregman: Some(bregman),
            step_psi: None,
        }
    }

    #[test]
    fn regression_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.25 * x).collect();
        let (b, a, r2) = linear_regression(&xs, &ys).unwrap();
        assert!((b + 0.25).abs() < 1e-14 && (a - 1.5).abs() < 1e-14 && r2 == 1.0);
        assert!(linear_regression(&[1.0], &[2.0]).is_err());
        assert!(linear_regression(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn geometric_curve_gives_its_factor() {
        let histories: Vec<Vec<IterationRecord>> = (0..10)
            .map(|s| (0..40).map(|k| record(k, (1.0 + s as f64) * 0.9_f64.powi(k as i32))).collect())
            .collect();
        match fit_exact_rate(&histories, 1.0, &ScheduleSpec::constant(0.1)).unwrap() {
            ExactRateOutcome::Fitted(fit) => {
                assert!((fit.fitted_rate - 0.9).abs() < 1e-12);
                assert!(fit.r_squared > 0.999999);
                assert_eq!(fit.window, (4, 39));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn algebraic_curve_gives_its_slope() {
        let mu = 0.5;
        let histories: Vec<Vec<IterationRecord>> = (0..10)
            .map(|_| (0..50).map(|k| record(k, if k == 0 { 1.0 } else { (mu * k as f64).powf(-2.0) })).collect())
            .collect();
        match fit_exact_rate(&histories, 1.5, &ScheduleSpec::constant(mu)).unwrap() {
            ExactRateOutcome::Fitted(fit) => {
                assert_eq!(fit.model, RateModel::Algebraic);
                assert!((fit.fitted_rate + 2.0).abs() < 1e-9, "{}", fit.fitted_rate);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_inputs() {
        let zeros: Vec<Vec<IterationRecord>> = (0..10).map(|_| (0..5).map(|k| record(k, 0.0)).collect()).collect();
        assert_eq!(
            fit_exact_rate(&zeros, 1.0, &ScheduleSpec::constant(0.1)).unwrap(),
            ExactRateOutcome::AlreadyConverged
        );
        assert!(fit_exact_rate(&zeros[..3], 1.0, &ScheduleSpec::constant(0.1)).is_err());
        let short: Vec<Vec<IterationRecord>> = (0..10).map(|_| vec![record(0, 1.0), record(1, 0.5)]).collect();
        assert!(matches!(fit_exact_rate(&short, 1.0, &ScheduleSpec::constant(0.1)), Err(Error::Fit(_))));
    }
}
