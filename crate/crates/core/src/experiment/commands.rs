//! `run`, `sweep`, `rates` and `phantom`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Overrides, RunConfig, StudyKind, SweepAxis};
use super::output::{format_float, write_history_csv, write_manifest, write_text};
use crate::array_io::save_array;
use crate::error::{Error, Result};
use crate::forward::{
    estimate_lipschitz_lmax, estimate_tcc_gamma_with_norm, strided_batches, ForwardProblem, SchlierenSpec,
};
use crate::geometry::GridVector;
use crate::noise::noise_level;
use crate::phantom::nonzero_fraction;
use crate::rates::{
    exact_rate_study, fit_summary, mean_bregman_curve, noisy_rate_study, nonincreasing_in_delta, write_study_csv,
    ExactRateOutcome, NoisyStudyConfig,
};
use crate::solver::{a_priori_stop_index, run_solver, BestBy, InitialGuess, RunStatus, StoppingRule};

/// Caps the number of worker threads of sweeps and rate studies.
pub const THREADS_ENV: &str = "BSGD_THREADS";

/// Thread pool sized by `BSGD_THREADS`, or by rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={value} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load(config_path: &Path, overrides: &Overrides) -> Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(config_path)?;
    config.apply(overrides);
    let dir = config.output_dir()?.to_path_buf();
    Ok((config, dir))
}

/// Measured data: exact data corrupted by the configured noise, and the
/// resulting noise level in the data-space norm.
fn observations(config: &RunConfig, problem: &ForwardProblem) -> Result<(Vec<GridVector>, Option<f64>)> {
    let exact = problem.exact_data();
    match &config.noise {
        None => Ok((exact.to_vec(), None)),
        Some(spec) => {
            let noisy = spec.apply(exact)?;
            let (_, delta) = noise_level(exact, &noisy, config.solver.r_y)?;
            Ok((noisy, Some(delta)))
        }
    }
}

fn insert(table: &mut toml::Table, key: &str, value: impl Into<toml::Value>) {
    table.insert(key.into(), value.into());
}

fn to_i64(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

/// Known operator bounds, or sampled estimates around the truth (or the
/// initial guess when there is none).
fn bound_diagnostics(config: &RunConfig, problem: &ForwardProblem, initial: &InitialGuess, table: &mut toml::Table) -> Result<()> {
    let bounds = problem.bounds();
    if let (Some(gamma), Some(l_max)) = (bounds.gamma, bounds.l_max) {
        insert(table, "bounds_source", "analytic");
        insert(table, "gamma_hat", gamma);
        insert(table, "l_max_hat", l_max);
        return Ok(());
    }
    let est = &config.estimate;
    if est.samples == 0 {
        insert(table, "bounds_source", "none");
        return Ok(());
    }
    let (center, label) = match (problem.truth(), initial) {
        (Some(t), _) => (t.clone(), "truth"),
        (None, InitialGuess::Array(x)) => (x.clone(), "initial"),
        (None, InitialGuess::Constant(c)) => (GridVector::filled(problem.domain_shape(), *c), "initial"),
    };
    let norm = center.norm(2.0);
    let radius = est.relative_radius * if norm > 0.0 { norm } else { 1.0 };
    let gamma = estimate_tcc_gamma_with_norm(problem, &center, radius, est.samples, est.seed, config.solver.r_y)?;
    let l_max = estimate_lipschitz_lmax(problem, &center, radius, est.samples, est.seed)?;
    insert(table, "bounds_source", "sampled");
    insert(table, "gamma_hat", gamma);
    insert(table, "l_max_hat", l_max);
    insert(table, "estimate_center", label);
    insert(table, "estimate_radius", radius);
    insert(table, "estimate_samples", est.samples as i64);
    insert(table, "estimate_seed", to_i64(est.seed));
    if gamma >= 0.5 {
        log::warn!("sampled cone constant {gamma:.3} is not below 1/2");
    }
    Ok(())
}

/// Outcome of one run written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub iterations: u64,
    pub best_iter: u64,
    pub best_value: f64,
    pub best_by: BestBy,
    pub status: RunStatus,
    pub noise_level: Option<f64>,
    pub wall_time_s: f64,
}

/// Runs `config` and writes `history.csv`, `best.bsgd`, `final.bsgd` and
/// `manifest.txt` into `dir`. A diverged run still writes its outputs and
/// reports the divergence in `status`.
pub fn execute_run(config: &RunConfig, dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    config.validate()?;
    create_dir(dir)?;
    let problem = config.build_problem(Path::new("."))?;
    let initial = config.initial_guess()?;
    let (y_obs, delta) = observations(config, &problem)?;
    let solver = config.solver_config(Some(initial.clone()))?;

    let mut diag = toml::Table::new();
    insert(&mut diag, "command", "run");
    insert(&mut diag, "p", solver.p());
    insert(&mut diag, "q", solver.q());
    insert(&mut diag, "n_blocks", problem.n_blocks() as i64);
    insert(&mut diag, "block_sampling_seed", to_i64(solver.seed));
    if let Some(noise) = &config.noise {
        insert(&mut diag, "noise_seed", to_i64(noise.seed));
    }
    if let Some(d) = delta {
        insert(&mut diag, "noise_level", d);
    }
    if let StoppingRule::APriori { delta, gamma_budget } = solver.stopping {
        let k = a_priori_stop_index(delta, solver.schedule.mu0, solver.schedule.decay, gamma_budget, solver.p())?;
        insert(&mut diag, "k_delta", k.map_or(-1, to_i64));
    }
    bound_diagnostics(config, &problem, &initial, &mut diag)?;

    let outcome = run_solver(&problem, &y_obs, &solver)?;
    write_history_csv(&dir.join("history.csv"), &outcome.history)?;
    save_array(dir.join("best.bsgd"), &outcome.best_iterate)?;
    save_array(dir.join("final.bsgd"), &outcome.final_iterate)?;

    let wall_time_s = start.elapsed().as_secs_f64();
    insert(&mut diag, "iterations", to_i64(outcome.iterations));
    insert(&mut diag, "iterations_per_epoch", to_i64(outcome.iterations_per_epoch));
    insert(&mut diag, "best_iter", to_i64(outcome.best_iter));
    insert(&mut diag, "best_value", outcome.best_value);
    insert(&mut diag, "best_by", best_by_name(outcome.best_by));
    let status = match &outcome.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Diverged { iteration, reason } => format!("diverged at {iteration}: {reason}"),
    };
    insert(&mut diag, "status", status);
    insert(&mut diag, "wall_time_s", wall_time_s);
    write_manifest(&dir.join("manifest.txt"), config, diag)?;

    Ok(RunReport {
        dir: dir.to_path_buf(),
        iterations: outcome.iterations,
        best_iter: outcome.best_iter,
        best_value: outcome.best_value,
        best_by: outcome.best_by,
        status: outcome.status,
        noise_level: delta,
        wall_time_s,
    })
}

fn best_by_name(b: BestBy) -> &'static str {
    match b {
        BestBy::RelativeError => "rel_l2_err",
        BestBy::Residual => "residual",
    }
}

/// `run`: fails on divergence after writing the outputs.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunReport> {
    let (config, dir) = load(config_path, overrides)?;
    let report = execute_run(&config, &dir)?;
    if let RunStatus::Diverged { iteration, reason } = &report.status {
        return Err(Error::Diverged {
            iteration: *iteration,
            reason: reason.clone(),
        });
    }
    Ok(report)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub n_seeds: usize,
    pub n_diverged: usize,
    pub median_best: f64,
    pub min_best: f64,
    pub max_best: f64,
    pub best_by: BestBy,
}

pub const SWEEP_HEADER: [&str; 8] = [
    "axis",
    "value",
    "n_seeds",
    "n_diverged",
    "median_best",
    "min_best",
    "max_best",
    "best_metric",
];

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Copy of `config` with `axis` set to `value`.
pub fn sweep_cell(config: &RunConfig, axis: SweepAxis, value: f64, tie_data_exponent: bool) -> Result<RunConfig> {
    let mut cell = config.clone();
    cell.sweep = None;
    match axis {
        SweepAxis::NoiseLevel => match &mut cell.noise {
            Some(noise) => noise.epsilon = value,
            None => return Err(Error::Config("noise_level sweep needs a [noise] section".into())),
        },
        SweepAxis::BatchSize => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::Config(format!("batch size {value} is not a positive integer")));
            }
            cell.model.batch_size = value as usize;
        }
        SweepAxis::SpaceExponent => {
            cell.solver.r_x = value;
            if tie_data_exponent {
                cell.solver.r_y = value;
            }
        }
    }
    cell.validate()?;
    Ok(cell)
}

/// Runs every value of the sweep for `solver.seeds` seeds. Seed offset `s`
/// adds to both the block-sampling and the noise seed. Cells run in
/// parallel, each in its own subdirectory; `summary.csv` has one row per
/// value in the configured order.
pub fn execute_sweep(config: &RunConfig, dir: &Path) -> Result<Vec<SweepRow>> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    create_dir(dir)?;
    let seeds = config.solver.seeds;
    let mut cells = Vec::new();
    for &value in &sweep.values {
        let base = sweep_cell(config, sweep.axis, value, sweep.tie_data_exponent)?;
        let value_dir = dir.join(format!("{}_{}", sweep.axis.as_str(), format_float(value)));
        for s in 0..seeds as u64 {
            let mut cell = base.clone();
            cell.solver.seed = base.solver.seed + s;
            if let Some(noise) = &mut cell.noise {
                noise.seed += s;
            }
            let cell_dir = if seeds == 1 { value_dir.clone() } else { value_dir.join(format!("seed_{s}")) };
            cell.output.dir = Some(cell_dir.clone());
            cells.push((cell, cell_dir));
        }
    }
    let reports: Vec<RunReport> = thread_pool()?.install(|| {
        cells
            .par_iter()
            .map(|(cell, cell_dir)| execute_run(cell, cell_dir))
            .collect::<Result<_>>()
    })?;

    let mut rows = Vec::with_capacity(sweep.values.len());
    for (value, chunk) in sweep.values.iter().zip(reports.chunks(seeds)) {
        let best: Vec<f64> = chunk.iter().map(|r| r.best_value).collect();
        let n_diverged = chunk.iter().filter(|r| r.status != RunStatus::Completed).count();
        rows.push(SweepRow {
            value: *value,
            n_seeds: seeds,
            n_diverged,
            median_best: median(&best),
            min_best: best.iter().copied().fold(f64::INFINITY, f64::min),
            max_best: best.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            best_by: chunk[0].best_by,
        });
    }
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in &rows {
        w.write_record([
            sweep.axis.as_str().to_string(),
            format_float(r.value),
            r.n_seeds.to_string(),
            r.n_diverged.to_string(),
            format_float(r.median_best),
            format_float(r.min_best),
            format_float(r.max_best),
            best_by_name(r.best_by).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

pub fn cmd_sweep(config_path: &Path, overrides: &Overrides) -> Result<Vec<SweepRow>> {
    let (config, dir) = load(config_path, overrides)?;
    execute_sweep(&config, &dir)
}

/// Whether the rate study met its tolerances, with its summary text.
#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    pub passed: bool,
    pub summary: String,
}

/// Runs the `[rates]` study. Noisy studies write `study.csv`; exact studies
/// write `mean_bregman.csv`. Both write `summary.txt` and `manifest.txt`.
pub fn execute_rates(config: &RunConfig, dir: &Path) -> Result<RatesReport> {
    let start = Instant::now();
    let rates = config
        .rates
        .as_ref()
        .ok_or_else(|| Error::Config("rates needs a [rates] section".into()))?;
    create_dir(dir)?;
    let problem = config.build_problem(Path::new("."))?;
    let stability = problem
        .stability()
        .ok_or_else(|| Error::Config(format!("model `{}` has no stability certificate", config.model.kind)))?;
    let solver = config.solver_config(Some(config.initial_guess()?))?;
    let n_seeds = config.solver.seeds;
    let mut diag = toml::Table::new();
    insert(&mut diag, "command", "rates");
    insert(&mut diag, "p", solver.p());
    insert(&mut diag, "alpha", stability.alpha);
    insert(&mut diag, "c_alpha", stability.c_alpha);
    insert(&mut diag, "base_seed", to_i64(solver.seed));

    let pool = thread_pool()?;
    let (passed, summary) = match rates.study {
        StudyKind::Noisy => {
            if rates.deltas.is_empty() {
                return Err(Error::Config("rates.deltas is empty".into()));
            }
            let study_config = NoisyStudyConfig {
                solver,
                gamma_budget: rates.gamma_budget,
                n_seeds,
            };
            let study = pool.install(|| noisy_rate_study(&problem, &stability, &rates.deltas, &study_config))?;
            write_study_csv(&dir.join("study.csv"), &study.rows)?;
            let monotone = nonincreasing_in_delta(&study.rows);
            let bound_ok = study.bound.as_ref().map(|b| {
                study.rows.iter().zip(b).all(|(r, b)| r.mean_bregman <= *b)
            });
            let mut extra = vec![
                ("expected_rate", format_float(study.expected_slope)),
                ("slope_within_tolerance", study.slope_ok.to_string()),
                ("r_squared_sufficient", study.r_squared_ok.to_string()),
                ("nonincreasing_in_delta", monotone.to_string()),
            ];
            if let Some(ok) = bound_ok {
                extra.push(("below_theoretical_bound", ok.to_string()));
            }
            let passed = study.passed() && monotone;
            extra.push(("passed", passed.to_string()));
            let k: Vec<toml::Value> = study.rows.iter().map(|r| toml::Value::from(to_i64(r.k_delta))).collect();
            diag.insert("k_delta".into(), toml::Value::Array(k));
            (passed, fit_summary(&study.fit, &extra))
        }
        StudyKind::Exact => {
            let study = pool.install(|| exact_rate_study(&problem, &stability, &solver, n_seeds))?;
            let curve = mean_bregman_curve(&study.histories)?;
            let path = dir.join("mean_bregman.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["iter", "mean_bregman"])?;
            for (k, d) in &curve {
                w.write_record([k.to_string(), format_float(*d)])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            let passed = study.passed(stability.alpha);
            let summary = match study.outcome {
                ExactRateOutcome::Fitted(fit) => {
                    let mut extra = Vec::new();
                    if let Some(rho) = study.theoretical_factor {
                        extra.push(("theoretical_factor", format_float(rho)));
                    }
                    extra.push(("passed", passed.to_string()));
                    fit_summary(&fit, &extra)
                }
                ExactRateOutcome::AlreadyConverged => "{\n  \"model\": \"already_converged\",\n  \"passed\": true\n}\n".into(),
            };
            (passed, summary)
        }
    };
    write_text(&dir.join("summary.txt"), &summary)?;
    insert(&mut diag, "passed", passed);
    insert(&mut diag, "wall_time_s", start.elapsed().as_secs_f64());
    write_manifest(&dir.join("manifest.txt"), config, diag)?;
    Ok(RatesReport { passed, summary })
}

pub fn cmd_rates(config_path: &Path, overrides: &Overrides) -> Result<RatesReport> {
    let (config, dir) = load(config_path, overrides)?;
    execute_rates(&config, &dir)
}

/// Writes the ground truth of the configured model to `phantom.bsgd` with
/// a `phantom.txt` sidecar describing it; for Schlieren models the sidecar
/// also lists the angles, detector count and angle batches.
pub fn execute_phantom(config: &RunConfig, dir: &Path) -> Result<GridVector> {
    create_dir(dir)?;
    let mut sidecar = toml::Table::new();
    insert(&mut sidecar, "model", config.model.kind.clone());
    let image = if config.model.kind == "schlieren" {
        let spec: SchlierenSpec = config
            .model
            .params
            .clone()
            .try_into()
            .map_err(|e| Error::Config(format!("[model]: {e}")))?;
        let angles: Vec<toml::Value> = (0..spec.n_angles)
            .map(|i| toml::Value::from(i as f64 * std::f64::consts::PI / spec.n_angles as f64))
            .collect();
        sidecar.insert("angles".into(), toml::Value::Array(angles));
        insert(&mut sidecar, "n_detectors", spec.detectors() as i64);
        let batches = strided_batches(spec.n_angles, config.model.batch_size)?;
        let map: Vec<toml::Value> = batches
            .iter()
            .map(|b| toml::Value::Array(b.iter().map(|&a| toml::Value::from(a as i64)).collect()))
            .collect();
        sidecar.insert("batches".into(), toml::Value::Array(map));
        spec.phantom_spec().materialize(&[spec.size, spec.size], Path::new("."))?
    } else {
        config
            .build_problem(Path::new("."))?
            .truth()
            .cloned()
            .ok_or_else(|| Error::Config(format!("model `{}` has no ground truth", config.model.kind)))?
    };
    save_array(dir.join("phantom.bsgd"), &image)?;
    let shape: Vec<toml::Value> = image.shape().iter().map(|d| toml::Value::from(*d as i64)).collect();
    sidecar.insert("shape".into(), toml::Value::Array(shape));
    insert(&mut sidecar, "nonzero_fraction", nonzero_fraction(&image));
    let values = image.values();
    insert(&mut sidecar, "min", values.iter().copied().fold(f64::INFINITY, f64::min));
    insert(&mut sidecar, "max", values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    sidecar.insert("parameters".into(), toml::Value::Table(config.model.params.clone()));
    let text = toml::to_string(&sidecar).map_err(|e| Error::Config(format!("{e}")))?;
    write_text(&dir.join("phantom.txt"), &text)?;
    Ok(image)
}

pub fn cmd_phantom(config_path: &Path, overrides: &Overrides) -> Result<GridVector> {
    let (config, dir) = load(config_path, overrides)?;
    execute_phantom(&config, &dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
