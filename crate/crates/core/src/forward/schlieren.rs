//! Schlieren tomography: `F_i(x) = (R_i x)²` over the angles of block `i`.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::radon::{build_radon, RadonSystem};
use super::{parse_params, strided_batches, BuildContext, ForwardModelBuilder, ForwardOperator, ForwardProblem};
use crate::error::{Error, Result};
use crate::geometry::{DualVector, GridVector};
use crate::phantom::{PhantomKind, PhantomSpec};

fn check_image(sys: &RadonSystem, x: &GridVector) -> Result<()> {
    let (rows, cols) = sys.image_shape();
    x.check_shape(&[rows, cols])
}

fn check_batch(sys: &RadonSystem, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty angle batch"));
    }
    if let Some(&a) = batch.iter().find(|&&a| a >= sys.n_angles()) {
        return Err(Error::invalid(format!(
            "angle index {a} out of range for {} angles",
            sys.n_angles()
        )));
    }
    Ok(())
}

fn stacked_projections(sys: &RadonSystem, batch: &[usize], x: &[f64]) -> Vec<f64> {
    let n_det = sys.n_detectors();
    let mut out = vec![0.0; batch.len() * n_det];
    for (chunk, &a) in out.chunks_exact_mut(n_det).zip(batch) {
        sys.matrix(a).mul_vec_into(x, chunk);
    }
    out
}

/// Squared projections over the batch's angles, shape `[batch.len(), n_detectors]`.
pub fn schlieren_apply(sys: &RadonSystem, batch: &[usize], x: &GridVector) -> Result<GridVector> {
    check_image(sys, x)?;
    check_batch(sys, batch)?;
    let values = stacked_projections(sys, batch, x.values())
        .into_iter()
        .map(|p| p * p)
        .collect();
    Ok(GridVector::from_parts(values, vec![batch.len(), sys.n_detectors()]))
}

/// `F'(x) h = 2 (R x)(R h)`.
pub fn schlieren_derivative_apply(
    sys: &RadonSystem,
    batch: &[usize],
    x: &GridVector,
    h: &GridVector,
) -> Result<GridVector> {
    check_image(sys, x)?;
    check_image(sys, h)?;
    check_batch(sys, batch)?;
    let rx = stacked_projections(sys, batch, x.values());
    let rh = stacked_projections(sys, batch, h.values());
    let values = rx.iter().zip(&rh).map(|(a, b)| 2.0 * a * b).collect();
    Ok(GridVector::from_parts(values, vec![batch.len(), sys.n_detectors()]))
}

/// `F'(x)* g = Rᵀ(2 (R x) g)` with the plain matrix transpose.
pub fn schlieren_adjoint_apply(
    sys: &RadonSystem,
    batch: &[usize],
    x: &GridVector,
    g: &DualVector,
) -> Result<DualVector> {
    check_image(sys, x)?;
    check_batch(sys, batch)?;
    let n_det = sys.n_detectors();
    g.check_shape(&[batch.len(), n_det])?;
    let rx = stacked_projections(sys, batch, x.values());
    let mut out = vec![0.0; sys.n_pixels()];
    let mut weighted = vec![0.0; n_det];
    for (k, &a) in batch.iter().enumerate() {
        let range = k * n_det..(k + 1) * n_det;
        for ((w, r), gv) in weighted.iter_mut().zip(&rx[range.clone()]).zip(&g.values()[range]) {
            *w = 2.0 * r * gv;
        }
        sys.matrix(a).mul_transpose_add(&weighted, &mut out);
    }
    let (rows, cols) = sys.image_shape();
    Ok(DualVector::from_parts(out, vec![rows, cols]))
}

#[derive(Debug, Clone)]
pub struct SchlierenOperator {
    radon: Arc<RadonSystem>,
    batches: Vec<Vec<usize>>,
    domain_shape: Vec<usize>,
}

impl SchlierenOperator {
    /// Blocks of `batch_size` angles, taking every `(n_angles / batch_size)`-th angle.
    pub fn new(radon: Arc<RadonSystem>, batch_size: usize) -> Result<Self> {
        let batches = strided_batches(radon.n_angles(), batch_size)?;
        let (rows, cols) = radon.image_shape();
        Ok(Self {
            radon,
            batches,
            domain_shape: vec![rows, cols],
        })
    }

    pub fn radon(&self) -> &RadonSystem {
        &self.radon
    }
}

impl ForwardOperator for SchlierenOperator {
    fn name(&self) -> &str {
        "schlieren"
    }

    fn domain_shape(&self) -> &[usize] {
        &self.domain_shape
    }

    fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    fn block_shape(&self, block: usize) -> Vec<usize> {
        vec![self.batches[block].len(), self.radon.n_detectors()]
    }

    fn apply(&self, block: usize, x: &GridVector) -> Result<GridVector> {
        self.check_block(block)?;
        schlieren_apply(&self.radon, &self.batches[block], x)
    }

    fn derivative(&self, block: usize, x: &GridVector, h: &GridVector) -> Result<GridVector> {
        self.check_block(block)?;
        schlieren_derivative_apply(&self.radon, &self.batches[block], x, h)
    }

    fn adjoint(&self, block: usize, x: &GridVector, g: &DualVector) -> Result<DualVector> {
        self.check_block(block)?;
        schlieren_adjoint_apply(&self.radon, &self.batches[block], x, g)
    }
}

/// `[model]` parameters of the Schlieren experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchlierenSpec {
    /// Image side length in pixels.
    pub size: usize,
    pub n_angles: usize,
    /// Defaults to `ceil(1.5 * size)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_detectors: Option<usize>,
    #[serde(default)]
    pub phantom: PhantomKind,
    #[serde(default = "default_blobs")]
    pub n_blobs: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub phantom_seed: u64,
    /// BSGD-ARRAY file used when `phantom = "file"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom_path: Option<PathBuf>,
}

fn default_blobs() -> usize {
    3
}

fn default_amplitude() -> f64 {
    1.0
}

impl SchlierenSpec {
    pub fn detectors(&self) -> usize {
        self.n_detectors.unwrap_or((3 * self.size).div_ceil(2))
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        PhantomSpec {
            kind: self.phantom,
            n_blobs: self.n_blobs,
            amplitude: self.amplitude,
            seed: self.phantom_seed,
            path: self.phantom_path.clone(),
        }
    }
}

pub(super) struct SchlierenBuilder;

impl ForwardModelBuilder for SchlierenBuilder {
    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<ForwardProblem> {
        let spec: SchlierenSpec = parse_params("schlieren", params)?;
        let radon = Arc::new(build_radon((spec.size, spec.size), spec.n_angles, spec.detectors())?);
        let operator = SchlierenOperator::new(radon, ctx.batch_size)?;
        let truth = spec.phantom_spec().materialize(&[spec.size, spec.size], &ctx.base_dir)?;
        ForwardProblem::from_truth(Arc::new(operator), truth)
    }
}
