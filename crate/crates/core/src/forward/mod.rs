//! Block-decomposed nonlinear forward operators `F = (F_1, …, F_N)`.

mod benchmark;
pub mod radon;
mod schlieren;

use std::fmt::Debug;
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DualVector, GridVector};
use crate::random::{stream_rng, GaussianSource, Stream};
use crate::registry::Registry;

pub use benchmark::{benchmark_truth, build_benchmark, BenchmarkOperator, BenchmarkSpec};
pub use radon::{build_radon, RadonSystem, SparseMatrix};
pub use schlieren::{
    schlieren_adjoint_apply, schlieren_apply, schlieren_derivative_apply, SchlierenOperator,
    SchlierenSpec,
};

/// One member of the family of forward models. Blocks are indexed from 0.
pub trait ForwardOperator: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn domain_shape(&self) -> &[usize];

    /// Constituent measurement indices (angles or components) of each block.
    fn batches(&self) -> &[Vec<usize>];

    fn n_blocks(&self) -> usize {
        self.batches().len()
    }

    fn block_shape(&self, block: usize) -> Vec<usize>;

    /// `F_i(x)`.
    fn apply(&self, block: usize, x: &GridVector) -> Result<GridVector>;

    /// `F_i'(x) h`.
    fn derivative(&self, block: usize, x: &GridVector, h: &GridVector) -> Result<GridVector>;

    /// `F_i'(x)* g` for `g` in the dual of the block's data space.
    fn adjoint(&self, block: usize, x: &GridVector, g: &DualVector) -> Result<DualVector>;

    fn check_block(&self, block: usize) -> Result<()> {
        if block >= self.n_blocks() {
            return Err(Error::BlockIndex {
                index: block,
                n_blocks: self.n_blocks(),
            });
        }
        Ok(())
    }
}

/// Hölder-type conditional stability `D(x, x̃)^α ≤ C_α^{-1} ‖F(x) - F(x̃)‖^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub alpha: f64,
    pub c_alpha: f64,
}

impl StabilityParams {
    pub fn new(alpha: f64, c_alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0 && c_alpha > 0.0 && c_alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "stability exponent {alpha} must be >= 1 and constant {c_alpha} > 0"
            )));
        }
        Ok(Self { alpha, c_alpha })
    }
}

/// Derivative bound and tangential cone constant, known or estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OperatorBounds {
    pub l_max: Option<f64>,
    pub gamma: Option<f64>,
}

/// A forward operator together with its exact data and, when known, the
/// ground truth that produced it.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    operator: Arc<dyn ForwardOperator>,
    exact_data: Vec<GridVector>,
    truth: Option<GridVector>,
    bounds: OperatorBounds,
    stability: Option<StabilityParams>,
}

impl ForwardProblem {
    /// Exact data is computed by applying the operator to `truth`.
    pub fn from_truth(operator: Arc<dyn ForwardOperator>, truth: GridVector) -> Result<Self> {
        truth.check_shape(operator.domain_shape())?;
        let exact_data = (0..operator.n_blocks())
            .map(|i| operator.apply(i, &truth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            operator,
            exact_data,
            truth: Some(truth),
            bounds: OperatorBounds::default(),
            stability: None,
        })
    }

    /// Problem with externally supplied exact data. If a truth is given it
    /// must reproduce the data to `1e-10` relative.
    pub fn with_data(
        operator: Arc<dyn ForwardOperator>,
        exact_data: Vec<GridVector>,
        truth: Option<GridVector>,
    ) -> Result<Self> {
        if exact_data.len() != operator.n_blocks() {
            return Err(Error::invalid(format!(
                "{} data blocks for {} operator blocks",
                exact_data.len(),
                operator.n_blocks()
            )));
        }
        for (i, y) in exact_data.iter().enumerate() {
            y.check_shape(&operator.block_shape(i))?;
        }
        check_batch_partition(operator.batches())?;
        if let Some(x) = &truth {
            x.check_shape(operator.domain_shape())?;
            for (i, y) in exact_data.iter().enumerate() {
                let fx = operator.apply(i, x)?;
                let scale = y.norm(2.0).max(f64::MIN_POSITIVE);
                if fx.sub(y)?.norm(2.0) > 1e-10 * scale {
                    return Err(Error::invalid(format!(
                        "truth does not reproduce exact data on block {i}"
                    )));
                }
            }
        }
        Ok(Self {
            operator,
            exact_data,
            truth,
            bounds: OperatorBounds::default(),
            stability: None,
        })
    }

    pub fn with_bounds(mut self, bounds: OperatorBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_stability(mut self, stability: Option<StabilityParams>) -> Self {
        self.stability = stability;
        self
    }

    pub fn operator(&self) -> &dyn ForwardOperator {
        self.operator.as_ref()
    }

    pub fn kind(&self) -> &str {
        self.operator.name()
    }

    pub fn n_blocks(&self) -> usize {
        self.operator.n_blocks()
    }

    pub fn domain_shape(&self) -> &[usize] {
        self.operator.domain_shape()
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        self.operator.batches()
    }

    pub fn exact_data(&self) -> &[GridVector] {
        &self.exact_data
    }

    pub fn truth(&self) -> Option<&GridVector> {
        self.truth.as_ref()
    }

    pub fn bounds(&self) -> OperatorBounds {
        self.bounds
    }

    pub fn stability(&self) -> Option<StabilityParams> {
        self.stability
    }

    pub fn apply_all(&self, x: &GridVector) -> Result<Vec<GridVector>> {
        (0..self.n_blocks())
            .map(|i| self.operator.apply(i, x))
            .collect()
    }
}

/// Splits `n_items` measurements into `n_items / batch_size` blocks, block
/// `i` taking every `(n_items / batch_size)`-th item starting at `i`.
pub fn strided_batches(n_items: usize, batch_size: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || n_items == 0 || !n_items.is_multiple_of(batch_size) {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must divide the measurement count {n_items}"
        )));
    }
    let n_blocks = n_items / batch_size;
    Ok((0..n_blocks)
        .map(|i| (0..batch_size).map(|k| i + k * n_blocks).collect())
        .collect())
}

/// Batches must be nonempty, disjoint and cover `0..total`.
pub fn check_batch_partition(batches: &[Vec<usize>]) -> Result<()> {
    let total: usize = batches.iter().map(Vec::len).sum();
    let mut seen = vec![false; total];
    for (i, batch) in batches.iter().enumerate() {
        if batch.is_empty() {
            return Err(Error::invalid(format!("batch {i} is empty")));
        }
        for &m in batch {
            if m >= total || std::mem::replace(&mut seen[m], true) {
                return Err(Error::invalid(format!(
                    "batches do not partition 0..{total} (index {m} in batch {i})"
                )));
            }
        }
    }
    Ok(())
}

/// Draws a point `center + radius·u·d` with `d` a uniformly random unit
/// direction (Euclidean) and `u` uniform in `[0, 1]`.
fn sample_in_ball<R: Rng>(
    gauss: &mut GaussianSource<R>,
    center: &GridVector,
    radius: f64,
) -> GridVector {
    let mut dir = vec![0.0; center.len()];
    gauss.fill(&mut dir);
    let norm = crate::geometry::lr_norm_values(&dir, 2.0).max(f64::MIN_POSITIVE);
    let scale = radius * gauss.rng_mut().gen::<f64>() / norm;
    let values = center
        .values()
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + scale * d)
        .collect();
    GridVector::from_parts(values, center.shape().to_vec())
}

/// Largest observed ratio
/// `‖F_i(x) - F_i(x̃) - F_i'(x)(x - x̃)‖ / ‖F_i(x) - F_i(x̃)‖`
/// over sampled pairs in the ball and all blocks, with data-space norm
/// `L^{r_y}`. A lower bound on the tangential cone constant.
pub fn estimate_tcc_gamma_with_norm(
    problem: &ForwardProblem,
    center: &GridVector,
    radius: f64,
    n_samples: usize,
    seed: u64,
    r_y: f64,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    center.check_shape(problem.domain_shape())?;
    let op = problem.operator();
    let mut gauss = GaussianSource::new(stream_rng(seed, Stream::Estimation));
    let mut gamma = 0.0_f64;
    for _ in 0..n_samples {
        let x = sample_in_ball(&mut gauss, center, radius);
        let x_tilde = sample_in_ball(&mut gauss, center, radius);
        let step = x.sub(&x_tilde)?;
        for i in 0..op.n_blocks() {
            let diff = op.apply(i, &x)?.sub(&op.apply(i, &x_tilde)?)?;
            let denom = diff.norm(r_y);
            if denom < 1e-14 {
                continue;
            }
            let linear = op.derivative(i, &x, &step)?;
            let ratio = diff.sub(&linear)?.norm(r_y) / denom;
            gamma = gamma.max(ratio);
        }
    }
    Ok(gamma)
}

/// [`estimate_tcc_gamma_with_norm`] in the Euclidean data norm.
pub fn estimate_tcc_gamma(
    problem: &ForwardProblem,
    center: &GridVector,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    estimate_tcc_gamma_with_norm(problem, center, radius, n_samples, seed, 2.0)
}

pub const POWER_ITERATIONS: usize = 50;

/// Power-iteration estimate of `max_i ‖F_i'(x)‖` (Euclidean operator norm)
/// over the ball centre and `n_samples` further points of the ball.
pub fn estimate_lipschitz_lmax(
    problem: &ForwardProblem,
    center: &GridVector,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    center.check_shape(problem.domain_shape())?;
    let op = problem.operator();
    let mut gauss = GaussianSource::new(stream_rng(seed, Stream::Estimation));
    let mut points = vec![center.clone()];
    for _ in 0..n_samples {
        points.push(sample_in_ball(&mut gauss, center, radius));
    }
    let mut l_max = 0.0_f64;
    for x in &points {
        for i in 0..op.n_blocks() {
            let mut start = vec![0.0; x.len()];
            gauss.fill(&mut start);
            let h = GridVector::from_parts(start, x.shape().to_vec());
            l_max = l_max.max(block_operator_norm(op, i, x, h, POWER_ITERATIONS)?);
        }
    }
    Ok(l_max)
}

fn block_operator_norm(
    op: &dyn ForwardOperator,
    block: usize,
    x: &GridVector,
    mut h: GridVector,
    iterations: usize,
) -> Result<f64> {
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = h.norm(2.0);
        if norm == 0.0 {
            return Ok(estimate);
        }
        h = h.scaled(1.0 / norm);
        let image = op.derivative(block, x, &h)?;
        estimate = image.norm(2.0);
        let back = op.adjoint(block, x, &image.to_dual())?;
        h = back.to_primal();
    }
    Ok(estimate)
}

/// Context handed to model builders alongside their own parameters.
#[derive(Debug, Clone, Default)]
pub struct BuildContext {
    pub batch_size: usize,
    /// Directory against which relative paths in the parameters resolve.
    pub base_dir: PathBuf,
}

/// Builds a [`ForwardProblem`] from the model's configuration table.
pub trait ForwardModelBuilder: Send + Sync {
    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<ForwardProblem>;
}

/// Registry of the built-in models: `schlieren` and `benchmark`.
pub fn model_registry() -> Registry<dyn ForwardModelBuilder> {
    let mut reg: Registry<dyn ForwardModelBuilder> = Registry::new("forward model");
    reg.register("schlieren", Box::new(schlieren::SchlierenBuilder));
    reg.register("benchmark", Box::new(benchmark::BenchmarkBuilder));
    reg
}

pub(crate) fn parse_params<T: serde::de::DeserializeOwned>(
    kind: &str,
    params: &toml::Table,
) -> Result<T> {
    params
        .clone()
        .try_into()
        .map_err(|e| Error::Config(format!("[model] parameters for `{kind}`: {e}")))
}
