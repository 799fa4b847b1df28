//! Stochastic gradient descent in dual coordinates and the Landweber
//! baseline.
//!
//! The persistent state is the dual variable `ξ_k = J_p(x_k)`; each step
//! sets `ξ_{k+1} = ξ_k - μ_{k+1} g_{k+1}` and recovers the primal iterate as
//! `x_{k+1} = J_{p*}(ξ_{k+1})`. Blocks are indexed from 0.

mod algorithms;
mod schedule;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ForwardProblem;
use crate::geometry::{
    bregman_distance, duality_map, inverse_duality_map, lr_norm_values, DualVector, GeometryParams,
    GridVector,
};
use crate::random::{stream_rng, Stream};

pub use algorithms::{solver_registry, IterativeSolver, Landweber, Sgd, StepDirection};
pub use schedule::{
    a_priori_stop_index, check_step_admissibility, half_margin_step, omega_for_noise_term,
    schedule_registry, step_schedule, Admissibility, ScheduleSpec, StepSchedule,
};

/// Divergence threshold on `‖ξ_k‖` relative to `max(‖ξ_0‖, 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// How the power exponents follow from the space exponents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    /// `p = max(r_X, 2)`, `q = p`.
    #[default]
    Theory,
    /// `p = r_X`, `q = r_Y`.
    Practice,
}

impl ExponentMode {
    pub fn exponents(self, r_x: f64, r_y: f64) -> (f64, f64) {
        match self {
            ExponentMode::Theory => {
                let p = r_x.max(2.0);
                (p, p)
            }
            ExponentMode::Practice => (r_x, r_y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingRule {
    MaxEpochs,
    /// Stop at the largest `k` with `δ^p Σ_{ℓ≤k} μ_ℓ ≤ Γ`.
    APriori { delta: f64, gamma_budget: f64 },
    /// Run all epochs; the selected iterate is the best one.
    OracleBest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    Constant(f64),
    Array(GridVector),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordEvery {
    Iteration,
    #[default]
    Epoch,
    /// Initial and final iterate only.
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Registered solver name: `sgd` or `landweber`.
    pub algorithm: String,
    pub mode: ExponentMode,
    pub r_x: f64,
    pub r_y: f64,
    pub schedule: ScheduleSpec,
    pub max_epochs: u64,
    pub seed: u64,
    pub stopping: StoppingRule,
    pub initial: InitialGuess,
    pub record: RecordEvery,
}

impl SolverConfig {
    pub fn new(mode: ExponentMode, r_x: f64, r_y: f64, schedule: ScheduleSpec) -> Self {
        Self {
            algorithm: "sgd".into(),
            mode,
            r_x,
            r_y,
            schedule,
            max_epochs: 100,
            seed: 0,
            stopping: StoppingRule::MaxEpochs,
            initial: InitialGuess::Constant(0.0),
            record: RecordEvery::Epoch,
        }
    }

    /// `r_X = r_Y = p = q = 2` with constant steps.
    pub fn hilbert(mu0: f64) -> Self {
        Self::new(ExponentMode::Theory, 2.0, 2.0, ScheduleSpec::constant(mu0))
    }

    pub fn p(&self) -> f64 {
        self.mode.exponents(self.r_x, self.r_y).0
    }

    pub fn q(&self) -> f64 {
        self.mode.exponents(self.r_x, self.r_y).1
    }

    /// `L^{r_X}` with power `p`.
    pub fn x_geometry(&self) -> Result<GeometryParams> {
        GeometryParams::new(self.r_x, self.p())
    }

    /// `L^{r_Y}` with power `q`.
    pub fn y_geometry(&self) -> Result<GeometryParams> {
        GeometryParams::new(self.r_y, self.q())
    }

    pub fn validate(&self) -> Result<()> {
        self.x_geometry()?;
        self.y_geometry()?;
        self.schedule.validate()?;
        solver_registry().get(&self.algorithm)?;
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be positive"));
        }
        if let StoppingRule::APriori { delta, gamma_budget } = self.stopping {
            if !(delta > 0.0 && gamma_budget > 0.0) {
                return Err(Error::invalid("a-priori stopping needs delta > 0 and gamma_budget > 0"));
            }
        }
        Ok(())
    }
}

/// Diagnostics of one iterate `x_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub epoch: u64,
    pub iter: u64,
    /// Step that produced `x_k`; absent for `k = 0`.
    pub mu: Option<f64>,
    /// Block sampled for that step; absent for `k = 0` and full-gradient steps.
    pub batch: Option<usize>,
    pub psi: f64,
    /// `ℓ^q` product norm of the block residuals `‖F_i(x_k) - y_i‖_{r_Y}`.
    pub residual: f64,
    pub rel_l2_err: Option<f64>,
    /// `D(x_k, x†)`.
    pub bregman: Option<f64>,
    /// Objective of the sampled block at the previous iterate, `Ψ_i(x_{k-1})`
    /// (the full objective for full-gradient steps).
    pub step_psi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { iteration: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestBy {
    RelativeError,
    Residual,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: Vec<IterationRecord>,
    pub final_iterate: GridVector,
    pub dual_state: DualVector,
    pub best_iterate: GridVector,
    pub best_iter: u64,
    pub best_value: f64,
    pub best_by: BestBy,
    pub iterations: u64,
    pub iterations_per_epoch: u64,
    pub status: RunStatus,
}

impl RunOutcome {
    /// The reported reconstruction: the best iterate under
    /// [`StoppingRule::OracleBest`], the last one otherwise.
    pub fn selected(&self, rule: &StoppingRule) -> &GridVector {
        match rule {
            StoppingRule::OracleBest => &self.best_iterate,
            _ => &self.final_iterate,
        }
    }

    pub fn into_result(self) -> Result<Self> {
        match &self.status {
            RunStatus::Completed => Ok(self),
            RunStatus::Diverged { iteration, reason } => Err(Error::Diverged {
                iteration: *iteration,
                reason: reason.clone(),
            }),
        }
    }
}

/// Constants of a noisy run stopped a priori: the per-step perturbation
/// allowance and the bound `ν` on every `Δ_k` up to the stopping index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyRunParams {
    pub delta: f64,
    pub gamma_budget: f64,
    pub omega: f64,
    /// `Δ_0 + (ω^{-p}/p)(1+γ)^p Γ`.
    pub nu: f64,
}

impl NoisyRunParams {
    pub fn new(delta: f64, gamma_budget: f64, omega: f64, initial_distance: f64, gamma: f64, p: f64) -> Result<Self> {
        if !(delta >= 0.0 && gamma_budget > 0.0 && omega > 0.0 && initial_distance >= 0.0) {
            return Err(Error::invalid("noisy run constants out of range"));
        }
        let nu = initial_distance + omega.powf(-p) / p * (1.0 + gamma).powf(p) * gamma_budget;
        Ok(Self {
            delta,
            gamma_budget,
            omega,
            nu,
        })
    }

    /// `(ω^{-p}/p)(1+γ)^p δ^p μ`.
    pub fn step_allowance(&self, gamma: f64, p: f64, mu: f64) -> f64 {
        self.omega.powf(-p) / p * (1.0 + gamma).powf(p) * self.delta.powf(p) * mu
    }
}

fn check_observations(problem: &ForwardProblem, y_obs: &[GridVector]) -> Result<()> {
    if y_obs.len() != problem.n_blocks() {
        return Err(Error::invalid(format!(
            "{} data blocks for {} operator blocks",
            y_obs.len(),
            problem.n_blocks()
        )));
    }
    Ok(())
}

/// `Ψ(x) = (1/N) Σ_i (1/q) ‖F_i(x) - y_i‖_{r_Y}^q`.
pub fn objective_value(problem: &ForwardProblem, x: &GridVector, y_obs: &[GridVector], q: f64, r_y: f64) -> Result<f64> {
    check_observations(problem, y_obs)?;
    let residuals = block_residuals(problem, x, y_obs)?;
    Ok(objective_from_residuals(&residuals, q, r_y))
}

fn block_residuals(problem: &ForwardProblem, x: &GridVector, y_obs: &[GridVector]) -> Result<Vec<GridVector>> {
    y_obs
        .iter()
        .enumerate()
        .map(|(i, y)| problem.operator().apply(i, x)?.sub(y))
        .collect()
}

fn objective_from_residuals(residuals: &[GridVector], q: f64, r_y: f64) -> f64 {
    let total: f64 = residuals.iter().map(|r| r.norm(r_y).powf(q) / q).sum();
    total / residuals.len() as f64
}

/// Block gradient together with the block objective `Ψ_i(x)`.
pub fn stochastic_gradient_with_objective(
    problem: &ForwardProblem,
    x: &GridVector,
    y_obs: &[GridVector],
    block: usize,
    y_geometry: &GeometryParams,
) -> Result<(DualVector, f64)> {
    check_observations(problem, y_obs)?;
    let op = problem.operator();
    op.check_block(block)?;
    let residual = op.apply(block, x)?.sub(&y_obs[block])?;
    let block_psi = residual.norm(y_geometry.r()).powf(y_geometry.p()) / y_geometry.p();
    let jq = duality_map(&residual, y_geometry);
    Ok((op.adjoint(block, x, &jq)?, block_psi))
}

/// `g = F_i'(x)* J_q(F_i(x) - y_i)` with `J_q` the duality map of `L^{r_Y}`.
pub fn stochastic_gradient(
    problem: &ForwardProblem,
    x: &GridVector,
    y_obs: &[GridVector],
    block: usize,
    q: f64,
    r_y: f64,
) -> Result<DualVector> {
    let geometry = GeometryParams::new(r_y, q)?;
    Ok(stochastic_gradient_with_objective(problem, x, y_obs, block, &geometry)?.0)
}

/// `ξ ↦ ξ - μ g`, returning the new dual state and `J_{p*}` of it.
pub fn sgd_step(dual_state: &DualVector, g: &DualVector, mu: f64, x_geometry: &GeometryParams) -> Result<(DualVector, GridVector)> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("step size {mu} must be positive")));
    }
    let xi = dual_state.add_scaled(-mu, g)?;
    let x = inverse_duality_map(&xi, x_geometry);
    Ok((xi, x))
}

/// `‖x† - x‖_2 / ‖x†‖_2`.
pub fn relative_error(x: &GridVector, truth: &GridVector) -> Result<f64> {
    x.check_same_shape(truth)?;
    let scale = truth.norm(2.0);
    if scale == 0.0 {
        return Err(Error::invalid("relative error against a zero truth"));
    }
    Ok(x.sub(truth)?.norm(2.0) / scale)
}

/// Runs the solver registered under `config.algorithm`.
pub fn run_solver(problem: &ForwardProblem, y_obs: &[GridVector], config: &SolverConfig) -> Result<RunOutcome> {
    let solver = solver_registry();
    let solver = solver.get(&config.algorithm)?;
    drive(problem, y_obs, config, solver)
}

pub fn run_sgd(problem: &ForwardProblem, y_obs: &[GridVector], config: &SolverConfig) -> Result<RunOutcome> {
    drive(problem, y_obs, config, &Sgd)
}

pub fn run_landweber(problem: &ForwardProblem, y_obs: &[GridVector], config: &SolverConfig) -> Result<RunOutcome> {
    drive(problem, y_obs, config, &Landweber)
}

/// Everything a solver needs to produce one update direction.
pub struct StepContext<'a> {
    pub problem: &'a ForwardProblem,
    pub y_obs: &'a [GridVector],
    pub y_geometry: GeometryParams,
    pub rng: &'a mut ChaCha20Rng,
}

struct Recorder<'a> {
    problem: &'a ForwardProblem,
    y_obs: &'a [GridVector],
    q: f64,
    r_y: f64,
    x_geometry: GeometryParams,
    per_epoch: u64,
}

impl Recorder<'_> {
    fn record(
        &self,
        k: u64,
        x: &GridVector,
        mu: Option<f64>,
        batch: Option<usize>,
        step_psi: Option<f64>,
    ) -> Result<IterationRecord> {
        let residuals = block_residuals(self.problem, x, self.y_obs)?;
        let psi = objective_from_residuals(&residuals, self.q, self.r_y);
        let norms: Vec<f64> = residuals.iter().map(|r| r.norm(self.r_y)).collect();
        let residual = lr_norm_values(&norms, self.q);
        let (rel_l2_err, bregman) = match self.problem.truth() {
            Some(truth) => (
                relative_error(x, truth).ok(),
                Some(bregman_distance(x, truth, &self.x_geometry)?),
            ),
            None => (None, None),
        };
        let epoch = if k == 0 { 0 } else { (k - 1) / self.per_epoch + 1 };
        Ok(IterationRecord {
            epoch,
            iter: k,
            mu,
            batch,
            psi,
            residual,
            rel_l2_err,
            bregman,
            step_psi,
        })
    }
}

fn total_iterations(config: &SolverConfig, per_epoch: u64) -> Result<u64> {
    let cap = config.max_epochs.saturating_mul(per_epoch);
    match config.stopping {
        StoppingRule::MaxEpochs | StoppingRule::OracleBest => Ok(cap),
        StoppingRule::APriori { delta, gamma_budget } => {
            let k = a_priori_stop_index(
                delta,
                config.schedule.mu0,
                config.schedule.decay,
                gamma_budget,
                config.p(),
            )?;
            match k {
                Some(k) if k <= cap => Ok(k),
                _ => {
                    log::warn!("a-priori stop index exceeds max_epochs; stopping after {cap} iterations");
                    Ok(cap)
                }
            }
        }
    }
}

fn initial_iterate(problem: &ForwardProblem, initial: &InitialGuess) -> Result<GridVector> {
    match initial {
        InitialGuess::Constant(c) => {
            if !c.is_finite() {
                return Err(Error::invalid("initial value must be finite"));
            }
            Ok(GridVector::filled(problem.domain_shape(), *c))
        }
        InitialGuess::Array(x) => {
            x.check_shape(problem.domain_shape())?;
            Ok(x.clone())
        }
    }
}

fn warn_if_inadmissible(problem: &ForwardProblem, config: &SolverConfig, x_geometry: &GeometryParams) {
    let bounds = problem.bounds();
    let (Some(gamma), Some(l_max), Some(g)) = (bounds.gamma, bounds.l_max, x_geometry.g_pstar()) else {
        return;
    };
    if let Ok(mu) = config.schedule.step(1) {
        if let Ok(check) = check_step_admissibility(&[mu], gamma, l_max, g, x_geometry.p_star(), None) {
            if !check.admissible {
                log::warn!("step size {mu} is not admissible (margin {:.3e})", check.margin);
            }
        }
    }
}

fn drive(
    problem: &ForwardProblem,
    y_obs: &[GridVector],
    config: &SolverConfig,
    solver: &dyn IterativeSolver,
) -> Result<RunOutcome> {
    config.validate()?;
    check_observations(problem, y_obs)?;
    for (i, y) in y_obs.iter().enumerate() {
        y.check_shape(&problem.operator().block_shape(i))?;
    }
    let x_geometry = config.x_geometry()?;
    let y_geometry = config.y_geometry()?;
    if x_geometry.is_practice_mode() || y_geometry.is_practice_mode() {
        log::info!("practice-mode exponents: no convergence guarantee applies");
    }
    warn_if_inadmissible(problem, config, &x_geometry);

    let per_epoch = solver.iterations_per_epoch(problem.n_blocks());
    let total = total_iterations(config, per_epoch)?;
    let recorder = Recorder {
        problem,
        y_obs,
        q: config.q(),
        r_y: config.r_y,
        x_geometry,
        per_epoch,
    };
    let mut rng = stream_rng(config.seed, Stream::BlockSampling);

    let mut x = initial_iterate(problem, &config.initial)?;
    let mut xi = duality_map(&x, &x_geometry);
    let limit = DIVERGENCE_FACTOR * xi.norm(x_geometry.r_star()).max(1.0);

    let mut history = Vec::new();
    let first = recorder.record(0, &x, None, None, None)?;
    let best_by = if problem.truth().is_some() { BestBy::RelativeError } else { BestBy::Residual };
    let score = |rec: &IterationRecord| match best_by {
        BestBy::RelativeError => rec.rel_l2_err.unwrap_or(f64::INFINITY),
        BestBy::Residual => rec.residual,
    };
    let mut best_value = score(&first);
    let mut best_iterate = x.clone();
    let mut best_iter = 0;
    history.push(first);

    let mut status = RunStatus::Completed;
    let mut done = 0;
    for k in 1..=total {
        let mu = config.schedule.step(k)?;
        let mut ctx = StepContext {
            problem,
            y_obs,
            y_geometry,
            rng: &mut rng,
        };
        let dir = solver.direction(&mut ctx, &x)?;
        xi.add_scaled_in_place(-mu, &dir.gradient)?;
        let xi_norm = xi.norm(x_geometry.r_star());
        if !xi.is_finite() || !xi_norm.is_finite() || xi_norm > limit {
            status = RunStatus::Diverged {
                iteration: k,
                reason: format!("dual norm {xi_norm:e} exceeds the limit {limit:e}"),
            };
            break;
        }
        x = inverse_duality_map(&xi, &x_geometry);
        if !x.is_finite() {
            status = RunStatus::Diverged {
                iteration: k,
                reason: "non-finite primal iterate".into(),
            };
            break;
        }
        done = k;

        let due = match config.record {
            RecordEvery::Iteration => true,
            RecordEvery::Epoch => k % per_epoch == 0 || k == total,
            RecordEvery::Final => k == total,
        };
        if best_by == BestBy::RelativeError {
            if let Some(truth) = problem.truth() {
                let err = relative_error(&x, truth).unwrap_or(f64::INFINITY);
                if err < best_value {
                    best_value = err;
                    best_iterate = x.clone();
                    best_iter = k;
                }
            }
        }
        if due {
            let rec = recorder.record(k, &x, Some(mu), dir.block, Some(dir.psi))?;
            if best_by == BestBy::Residual && rec.residual < best_value {
                best_value = rec.residual;
                best_iterate = x.clone();
                best_iter = k;
            }
            history.push(rec);
        }
    }
    if let RunStatus::Diverged { iteration, reason } = &status {
        log::error!("run diverged at iteration {iteration}: {reason}");
    }
    Ok(RunOutcome {
        history,
        final_iterate: x,
        dual_state: xi,
        best_iterate,
        best_iter,
        best_value,
        best_by,
        iterations: done,
        iterations_per_epoch: per_epoch,
        status,
    })
}
