//! Convergence-rate verification: Polyak's lemma, rate fits, seed studies
//! and per-step audits.

mod audit;
mod fit;
mod polyak;
mod study;

pub use audit::{
    bregman_increases, descent_margin_audit, noisy_perturbation_violations, AuditConstants, MarginReport,
    StepAudit, DESCENT_TOLERANCE,
};
pub use fit::{
    fit_exact_rate, linear_regression, mean_bregman_curve, theoretical_contraction, ExactRateOutcome, RateFit,
    RateModel, BURN_IN_FRACTION, FLOOR_RATIO, MIN_EXACT_SEEDS, MIN_FIT_POINTS,
};
pub use polyak::{polyak_recursion, verify_polyak, PolyakReport, PolyakVerdict, POLYAK_TOLERANCE};
pub use study::{
    exact_rate_study, fit_summary, noisy_rate_study, nonincreasing_in_delta, write_study_csv, ExactStudy, NoisyBoundConstants, NoisyStudy,
    NoisyStudyConfig, StudyRow, ALGEBRAIC_TOLERANCE, CONTRACTION_SLACK, MIN_DECADES, MIN_EXACT_R_SQUARED, MIN_R_SQUARED, SLOPE_TOLERANCE,
};
