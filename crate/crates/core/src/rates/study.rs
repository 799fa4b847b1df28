//! Monte-Carlo rate studies over seeds and noise levels.

use std::path::Path;

use rayon::prelude::*;

use super::fit::{fit_exact_rate, linear_regression, theoretical_contraction, ExactRateOutcome, RateFit, RateModel};
use crate::error::{Error, Result};
use crate::forward::{ForwardProblem, StabilityParams};
use crate::geometry::{bregman_distance, GridVector};
use crate::noise::{gaussian_perturbation, rescale_to_level};
use crate::solver::{
    check_step_admissibility, omega_for_noise_term, run_solver, IterationRecord, RecordEvery, RunStatus,
    SolverConfig, StoppingRule,
};

/// Relative tolerance on the fitted noise exponent.
pub const SLOPE_TOLERANCE: f64 = 0.2;
pub const MIN_R_SQUARED: f64 = 0.9;
/// Minimum span of the noise levels, in decades.
pub const MIN_DECADES: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyStudyConfig {
    /// Base solver settings; each cell overrides seed, stopping and recording.
    pub solver: SolverConfig,
    pub gamma_budget: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub delta: f64,
    pub k_delta: u64,
    pub mean_bregman: f64,
    pub std_bregman: f64,
    pub n_seeds: usize,
}

/// Constants of the noisy-data rate bound for constant steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyBoundConstants {
    pub omega: f64,
    pub c_ub: f64,
    pub c_pgamma: f64,
    pub c_ub_star: f64,
}

impl NoisyBoundConstants {
    /// `ω` is chosen so that its term takes half of the γ-only margin
    /// `m_0`, which makes `C̄_ub = m_0/2`.
    pub fn new(gamma: f64, l_max: f64, g_pstar: f64, p: f64, mu: f64, c_alpha: f64, c_p: f64, n_blocks: usize) -> Result<Self> {
        let p_star = p / (p - 1.0);
        let m0 = check_step_admissibility(&[mu], gamma, l_max, g_pstar, p_star, None)?.margin;
        if m0 <= 0.0 {
            return Err(Error::invalid(format!("step {mu} leaves no descent margin ({m0:e})")));
        }
        let omega = omega_for_noise_term(0.5 * m0, p);
        let c_ub = 0.5 * m0;
        let c_pgamma = c_ub + omega.powf(-p) / p * (1.0 + gamma).powf(p);
        let c_ub_star = 2f64.powf(1.0 - p) * c_alpha * c_ub * c_p / n_blocks as f64;
        Ok(Self {
            omega,
            c_ub,
            c_pgamma,
            c_ub_star,
        })
    }

    /// `2 C̄_{pγ}^α (C̄*_ub)^{-α} δ^{p/α}`.
    pub fn bound(&self, alpha: f64, p: f64, delta: f64) -> f64 {
        2.0 * self.c_pgamma.powf(alpha) * self.c_ub_star.powf(-alpha) * delta.powf(p / alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyStudy {
    pub rows: Vec<StudyRow>,
    pub fit: RateFit,
    pub expected_slope: f64,
    pub slope_ok: bool,
    pub r_squared_ok: bool,
    /// Theoretical bound per row, when all constants are known.
    pub bound: Option<Vec<f64>>,
}

impl NoisyStudy {
    pub fn passed(&self) -> bool {
        self.slope_ok && self.r_squared_ok
    }
}

fn check_delta_list(deltas: &[f64]) -> Result<()> {
    if deltas.len() < super::fit::MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} noise levels; need at least {}",
            deltas.len(),
            super::fit::MIN_FIT_POINTS
        )));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::invalid("noise levels must be positive"));
    }
    let (lo, hi) = deltas
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    let decades = (hi / lo).log10();
    if decades < MIN_DECADES - 1e-9 {
        return Err(Error::invalid(format!(
            "noise levels span {decades:.2} decades; need {MIN_DECADES}"
        )));
    }
    Ok(())
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One study cell: Gaussian noise of seed `seed` rescaled to level exactly
/// `delta`, then a run stopped at the a-priori index. Returns `(k, Δ_k)`.
fn noisy_cell(problem: &ForwardProblem, truth: &GridVector, delta: f64, seed: u64, study: &NoisyStudyConfig) -> Result<(u64, f64)> {
    let exact = problem.exact_data();
    let r_y = study.solver.r_y;
    let perturbed: Vec<GridVector> = exact
        .iter()
        .zip(gaussian_perturbation(exact, 1.0, seed))
        .map(|(y, n)| y.add_scaled(1.0, &n))
        .collect::<Result<_>>()?;
    let noisy = rescale_to_level(exact, &perturbed, r_y, delta)?;
    let mut config = study.solver.clone();
    config.seed = seed;
    config.stopping = StoppingRule::APriori {
        delta,
        gamma_budget: study.gamma_budget,
    };
    config.record = RecordEvery::Final;
    let outcome = run_solver(problem, &noisy, &config)?;
    if let RunStatus::Diverged { iteration, reason } = outcome.status {
        return Err(Error::Diverged { iteration, reason });
    }
    let distance = bregman_distance(&outcome.final_iterate, truth, &config.x_geometry()?)?;
    Ok((outcome.iterations, distance))
}

/// Seed-averaged `D(x_{k(δ)}, x†)` for each noise level, with a log-log fit
/// against `δ`. Seeds are `solver.seed, solver.seed + 1, …`; each seed sets
/// both the noise draw and the block sampling of its cells.
pub fn noisy_rate_study(
    problem: &ForwardProblem,
    stability: &StabilityParams,
    delta_list: &[f64],
    study: &NoisyStudyConfig,
) -> Result<NoisyStudy> {
    check_delta_list(delta_list)?;
    if study.n_seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }
    study.solver.validate()?;
    let truth = problem
        .truth()
        .ok_or_else(|| Error::invalid("rate study needs a known truth"))?;
    let base = study.solver.seed;
    let cells: Vec<(usize, u64)> = (0..delta_list.len())
        .flat_map(|d| (0..study.n_seeds as u64).map(move |s| (d, base + s)))
        .collect();
    let results: Vec<Result<(u64, f64)>> = cells
        .par_iter()
        .map(|&(d, seed)| {
            noisy_cell(problem, truth, delta_list[d], seed, study).map_err(|e| Error::StudyCell {
                seed,
                delta: delta_list[d],
                source: Box::new(e),
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(delta_list.len());
    let mut results = results.into_iter();
    for &delta in delta_list {
        let mut values = Vec::with_capacity(study.n_seeds);
        let mut k_delta = 0;
        for _ in 0..study.n_seeds {
            let (k, v) = results.next().expect("one result per cell")?;
            k_delta = k;
            values.push(v);
        }
        let (mean, std) = mean_and_std(&values);
        rows.push(StudyRow {
            delta,
            k_delta,
            mean_bregman: mean,
            std_bregman: std,
            n_seeds: study.n_seeds,
        });
    }
    if rows.iter().any(|r| !(r.mean_bregman > 0.0)) {
        return Err(Error::Fit("a seed-averaged distance is zero; cannot fit in log scale".into()));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_bregman.ln()).collect();
    let (slope, _, r2) = linear_regression(&xs, &ys)?;
    let p = study.solver.p();
    let expected = p / stability.alpha;
    let fit = RateFit {
        model: RateModel::PowerlawInDelta,
        fitted_rate: slope,
        r_squared: r2,
        window: (0, rows.len() as u64 - 1),
    };
    let bound = bound_curve(problem, stability, study, &rows);
    Ok(NoisyStudy {
        slope_ok: (slope - expected).abs() <= SLOPE_TOLERANCE * expected,
        r_squared_ok: r2 >= MIN_R_SQUARED,
        rows,
        fit,
        expected_slope: expected,
        bound,
    })
}

fn bound_curve(problem: &ForwardProblem, stability: &StabilityParams, study: &NoisyStudyConfig, rows: &[StudyRow]) -> Option<Vec<f64>> {
    let bounds = problem.bounds();
    let geometry = study.solver.x_geometry().ok()?;
    if study.solver.schedule.decay != 0.0 {
        return None;
    }
    let constants = NoisyBoundConstants::new(
        bounds.gamma?,
        bounds.l_max?,
        geometry.g_pstar()?,
        geometry.p(),
        study.solver.schedule.mu0,
        stability.c_alpha,
        1.0,
        problem.n_blocks(),
    )
    .ok()?;
    Some(
        rows.iter()
            .map(|r| constants.bound(stability.alpha, geometry.p(), r.delta))
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct ExactStudy {
    pub histories: Vec<Vec<IterationRecord>>,
    pub outcome: ExactRateOutcome,
    /// Guaranteed per-step factor, for `α = 1` with known constants and
    /// constant steps.
    pub theoretical_factor: Option<f64>,
}

/// Exact-data runs over `n_seeds` seeds, recorded per epoch, with the rate
/// fit of their seed average.
pub fn exact_rate_study(problem: &ForwardProblem, stability: &StabilityParams, solver: &SolverConfig, n_seeds: usize) -> Result<ExactStudy> {
    solver.validate()?;
    let histories: Vec<Vec<IterationRecord>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let mut config = solver.clone();
            config.seed = solver.seed + s;
            config.stopping = StoppingRule::MaxEpochs;
            config.record = RecordEvery::Epoch;
            let out = run_solver(problem, problem.exact_data(), &config)
                .and_then(|o| o.into_result())
                .map_err(|e| Error::StudyCell {
                    seed: config.seed,
                    delta: 0.0,
                    source: Box::new(e),
                })?;
            Ok(out.history)
        })
        .collect::<Result<_>>()?;
    let outcome = fit_exact_rate(&histories, stability.alpha, &solver.schedule)?;
    let theoretical_factor = (|| {
        if stability.alpha != 1.0 || solver.schedule.decay != 0.0 {
            return None;
        }
        let bounds = problem.bounds();
        let geometry = solver.x_geometry().ok()?;
        let mu = solver.schedule.mu0;
        let margin = check_step_admissibility(&[mu], bounds.gamma?, bounds.l_max?, geometry.g_pstar()?, geometry.p_star(), None)
            .ok()?
            .margin;
        Some(theoretical_contraction(1.0, stability.c_alpha, margin, mu, problem.n_blocks()))
    })();
    Ok(ExactStudy {
        histories,
        outcome,
        theoretical_factor,
    })
}

/// Slack allowed above the guaranteed contraction factor.
pub const CONTRACTION_SLACK: f64 = 0.05;
pub const MIN_EXACT_R_SQUARED: f64 = 0.95;
/// Relative tolerance on the algebraic exponent `1/(1-α)`.
pub const ALGEBRAIC_TOLERANCE: f64 = 0.25;

impl ExactStudy {
    /// Linear fits must sit below the guaranteed factor plus slack when it
    /// is known; algebraic fits must match `1/(1-α)`.
    pub fn passed(&self, alpha: f64) -> bool {
        match self.outcome {
            ExactRateOutcome::AlreadyConverged => true,
            ExactRateOutcome::Fitted(fit) => {
                if fit.r_squared < MIN_EXACT_R_SQUARED {
                    return false;
                }
                match fit.model {
                    RateModel::Linear => self
                        .theoretical_factor
                        .is_none_or(|rho| fit.fitted_rate <= rho + CONTRACTION_SLACK),
                    _ => {
                        let expected = 1.0 / (1.0 - alpha);
                        (fit.fitted_rate - expected).abs() <= ALGEBRAIC_TOLERANCE * expected.abs()
                    }
                }
            }
        }
    }
}

/// True when the seed-averaged distance does not increase as `δ` shrinks,
/// except for at most one increase no larger than the standard error of
/// the two rows involved.
pub fn nonincreasing_in_delta(rows: &[StudyRow]) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let mut inversions = 0;
    for w in sorted.windows(2) {
        let rise = w[1].mean_bregman - w[0].mean_bregman;
        if rise <= 0.0 {
            continue;
        }
        let se = |r: &StudyRow| r.std_bregman / (r.n_seeds as f64).sqrt();
        if rise > se(&w[0]).max(se(&w[1])) {
            return false;
        }
        inversions += 1;
    }
    inversions <= 1
}

/// Writes `delta,k_delta,mean_bregman,std_bregman,n_seeds`.
pub fn write_study_csv(path: &Path, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["delta", "k_delta", "mean_bregman", "std_bregman", "n_seeds"])?;
    for r in rows {
        w.write_record([
            r.delta.to_string(),
            r.k_delta.to_string(),
            r.mean_bregman.to_string(),
            r.std_bregman.to_string(),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text summary of a fit, one `"key": value` pair per line in braces.
pub fn fit_summary(fit: &RateFit, extra: &[(&str, String)]) -> String {
    let mut lines = vec![
        format!("  \"model\": \"{}\"", fit.model.as_str()),
        format!("  \"fitted_rate\": {}", fit.fitted_rate),
        format!("  \"r_squared\": {}", fit.r_squared),
        format!("  \"window\": [{}, {}]", fit.window.0, fit.window.1),
    ];
    lines.extend(extra.iter().map(|(k, v)| format!("  \"{k}\": {v}")));
    format!("{{\n{}\n}}\n", lines.join(",\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{build_benchmark, BenchmarkSpec};
    use crate::solver::ScheduleSpec;

    fn study(n_seeds: usize) -> (ForwardProblem, NoisyStudyConfig) {
        let problem = build_benchmark(&BenchmarkSpec::linear(6, 1.0, 2.0), 2).unwrap();
        let mut solver = SolverConfig::hilbert(0.25);
        solver.max_epochs = 1_000_000;
        solver.schedule = ScheduleSpec::constant(0.25);
        (problem, NoisyStudyConfig { solver, gamma_budget: 0.05, n_seeds })
    }

    #[test]
    fn delta_list_validation() {
        let (problem, cfg) = study(2);
        let stab = problem.stability().unwrap();
        assert!(matches!(noisy_rate_study(&problem, &stab, &[0.1], &cfg), Err(Error::Fit(_))));
        assert!(noisy_rate_study(&problem, &stab, &[0.1, 0.05, 0.02], &cfg).is_err());
    }

    #[test]
    fn small_study_recovers_quadratic_slope() {
        let (problem, cfg) = study(3);
        let stab = problem.stability().unwrap();
        let out = noisy_rate_study(&problem, &stab, &[0.1, 0.03, 0.01, 0.003], &cfg).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.rows.windows(2).all(|w| w[1].k_delta > w[0].k_delta));
        assert!(out.passed(), "{:?}", out.fit);
        let bound = out.bound.as_ref().unwrap();
        assert!(out.rows.iter().zip(bound).all(|(r, b)| r.mean_bregman <= *b));
    }

    #[test]
    fn trend_allows_one_small_inversion() {
        let row = |delta, mean, std| StudyRow { delta, k_delta: 1, mean_bregman: mean, std_bregman: std, n_seeds: 4 };
        assert!(nonincreasing_in_delta(&[row(0.1, 4.0, 0.0), row(0.01, 2.0, 0.0), row(0.001, 1.0, 0.0)]));
        assert!(nonincreasing_in_delta(&[row(0.1, 4.0, 0.0), row(0.01, 2.0, 0.0), row(0.001, 2.5, 1.0)]));
        assert!(!nonincreasing_in_delta(&[row(0.1, 4.0, 0.0), row(0.01, 2.0, 0.0), row(0.001, 2.6, 1.0)]));
        assert!(!nonincreasing_in_delta(&[
            row(0.1, 1.0, 1.0),
            row(0.01, 1.2, 1.0),
            row(0.001, 1.4, 1.0)
        ]));
    }

    #[test]
    fn summary_is_brace_delimited() {
        let fit = RateFit { model: RateModel::Linear, fitted_rate: 0.5, r_squared: 1.0, window: (1, 9) };
        let text = fit_summary(&fit, &[("passed", "true".into())]);
        assert!(text.starts_with("{\n") && text.ends_with("}\n"));
        assert!(text.contains("\"model\": \"linear\"") && text.contains("\"passed\": true"));
    }
}
