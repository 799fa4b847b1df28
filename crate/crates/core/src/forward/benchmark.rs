//! Synthetic diagonal benchmark `F_j(x) = a_j x_j + β a_j x_j²`.
//!
//! The coefficients `a_j` are geometrically spaced from `diag_min` to
//! `diag_max`. Coordinates are grouped into strided blocks exactly like the
//! angles of the tomography problem. For `β = 0` the operator is linear,
//! `γ = 0`, and in the Hilbert setting the stability estimate holds with
//! `α = 1`, `C_α = 2·diag_min²`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    estimate_tcc_gamma, parse_params, strided_batches, BuildContext, ForwardModelBuilder,
    ForwardOperator, ForwardProblem, OperatorBounds, StabilityParams,
};
use crate::error::{Error, Result};
use crate::geometry::{DualVector, GridVector};

/// Sample count and seed of the construction-time cone-constant check.
const GAMMA_SAMPLES: usize = 200;
const GAMMA_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub dim: usize,
    pub diag_min: f64,
    pub diag_max: f64,
    #[serde(default)]
    pub beta: f64,
    /// Radius of the ball around the truth on which `γ` is validated.
    #[serde(default = "default_radius")]
    pub working_radius: f64,
}

fn default_radius() -> f64 {
    1.0
}

impl BenchmarkSpec {
    pub fn linear(dim: usize, diag_min: f64, diag_max: f64) -> Self {
        Self {
            dim,
            diag_min,
            diag_max,
            beta: 0.0,
            working_radius: default_radius(),
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.diag_min];
        }
        let ratio = self.diag_max / self.diag_min;
        (0..self.dim)
            .map(|j| {
                let a = self.diag_min * ratio.powf(j as f64 / (self.dim - 1) as f64);
                a.clamp(self.diag_min, self.diag_max)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("benchmark dimension must be positive"));
        }
        if !(self.diag_min > 0.0 && self.diag_min <= self.diag_max && self.diag_max.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < diag_min <= diag_max, got {} and {}",
                self.diag_min, self.diag_max
            )));
        }
        if !self.beta.is_finite() || !(self.working_radius > 0.0) {
            return Err(Error::invalid("beta must be finite and working_radius positive"));
        }
        Ok(())
    }
}

/// Ground truth `x†_j = ½ cos(0.7 j)`.
pub fn benchmark_truth(dim: usize) -> GridVector {
    let values = (0..dim).map(|j| 0.5 * (0.7 * j as f64).cos()).collect();
    GridVector::from_parts(values, vec![dim])
}

#[derive(Debug, Clone)]
pub struct BenchmarkOperator {
    coefficients: Vec<f64>,
    beta: f64,
    batches: Vec<Vec<usize>>,
    domain_shape: Vec<usize>,
}

impl BenchmarkOperator {
    pub fn new(coefficients: Vec<f64>, beta: f64, batch_size: usize) -> Result<Self> {
        let batches = strided_batches(coefficients.len(), batch_size)?;
        let domain_shape = vec![coefficients.len()];
        Ok(Self {
            coefficients,
            beta,
            batches,
            domain_shape,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn slope(&self, j: usize, xj: f64) -> f64 {
        self.coefficients[j] * (1.0 + 2.0 * self.beta * xj)
    }
}

impl ForwardOperator for BenchmarkOperator {
    fn name(&self) -> &str {
        "benchmark"
    }

    fn domain_shape(&self) -> &[usize] {
        &self.domain_shape
    }

    fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    fn block_shape(&self, block: usize) -> Vec<usize> {
        vec![self.batches[block].len()]
    }

    fn apply(&self, block: usize, x: &GridVector) -> Result<GridVector> {
        self.check_block(block)?;
        x.check_shape(&self.domain_shape)?;
        let xv = x.values();
        let values = self.batches[block]
            .iter()
            .map(|&j| self.coefficients[j] * xv[j] * (1.0 + self.beta * xv[j]))
            .collect();
        Ok(GridVector::from_parts(values, self.block_shape(block)))
    }

    fn derivative(&self, block: usize, x: &GridVector, h: &GridVector) -> Result<GridVector> {
        self.check_block(block)?;
        x.check_shape(&self.domain_shape)?;
        h.check_shape(&self.domain_shape)?;
        let (xv, hv) = (x.values(), h.values());
        let values = self.batches[block]
            .iter()
            .map(|&j| self.slope(j, xv[j]) * hv[j])
            .collect();
        Ok(GridVector::from_parts(values, self.block_shape(block)))
    }

    fn adjoint(&self, block: usize, x: &GridVector, g: &DualVector) -> Result<DualVector> {
        self.check_block(block)?;
        x.check_shape(&self.domain_shape)?;
        g.check_shape(&self.block_shape(block))?;
        let xv = x.values();
        let mut out = vec![0.0; self.coefficients.len()];
        for (&j, &gk) in self.batches[block].iter().zip(g.values()) {
            out[j] = self.slope(j, xv[j]) * gk;
        }
        Ok(DualVector::from_parts(out, self.domain_shape.clone()))
    }
}

/// Builds the benchmark problem with exact data from [`benchmark_truth`].
///
/// `l_max` is the exact supremum of `|a_j (1 + 2β x_j)|` over the Euclidean
/// working ball. For `β ≠ 0`, `γ` is estimated by sampling and construction
/// fails unless it is below 1/2.
pub fn build_benchmark(spec: &BenchmarkSpec, batch_size: usize) -> Result<ForwardProblem> {
    spec.validate()?;
    let coefficients = spec.coefficients();
    let truth = benchmark_truth(spec.dim);
    let l_max = coefficients
        .iter()
        .zip(truth.values())
        .map(|(a, x)| a * (1.0 + 2.0 * spec.beta.abs() * (x.abs() + spec.working_radius)))
        .fold(0.0, f64::max);
    let operator = BenchmarkOperator::new(coefficients, spec.beta, batch_size)?;
    let problem = ForwardProblem::from_truth(Arc::new(operator), truth.clone())?;
    if spec.beta == 0.0 {
        let stability = StabilityParams::new(1.0, 2.0 * spec.diag_min * spec.diag_min)?;
        return Ok(problem
            .with_bounds(OperatorBounds {
                l_max: Some(l_max),
                gamma: Some(0.0),
            })
            .with_stability(Some(stability)));
    }
    let gamma = estimate_tcc_gamma(&problem, &truth, spec.working_radius, GAMMA_SAMPLES, GAMMA_SEED)?;
    if gamma >= 0.5 {
        return Err(Error::NonlinearityTooStrong { gamma });
    }
    Ok(problem.with_bounds(OperatorBounds {
        l_max: Some(l_max),
        gamma: Some(gamma),
    }))
}

/// `[model]` parameters are a [`BenchmarkSpec`].
pub(super) struct BenchmarkBuilder;

impl ForwardModelBuilder for BenchmarkBuilder {
    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<ForwardProblem> {
        let spec: BenchmarkSpec = parse_params("benchmark", params)?;
        build_benchmark(&spec, ctx.batch_size)
    }
}
