//! Update-direction strategies sharing one iteration driver.

use rand::Rng;

use super::{stochastic_gradient_with_objective, StepContext};
use crate::error::Result;
use crate::geometry::{DualVector, GridVector};
use crate::registry::Registry;

/// Gradient for one step, with the block it came from and the objective it
/// was computed from.
#[derive(Debug, Clone)]
pub struct StepDirection {
    pub gradient: DualVector,
    pub block: Option<usize>,
    pub psi: f64,
}

pub trait IterativeSolver: Send + Sync {
    /// Iterations making up one epoch.
    fn iterations_per_epoch(&self, n_blocks: usize) -> u64;

    fn direction(&self, ctx: &mut StepContext<'_>, x: &GridVector) -> Result<StepDirection>;
}

/// One block drawn uniformly with replacement per step; an epoch is
/// `N` steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sgd;

/// Mean of all block gradients per step; an epoch is one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct Landweber;

impl IterativeSolver for Sgd {
    fn iterations_per_epoch(&self, n_blocks: usize) -> u64 {
        n_blocks as u64
    }

    fn direction(&self, ctx: &mut StepContext<'_>, x: &GridVector) -> Result<StepDirection> {
        let block = ctx.rng.gen_range(0..ctx.problem.n_blocks());
        let (gradient, psi) =
            stochastic_gradient_with_objective(ctx.problem, x, ctx.y_obs, block, &ctx.y_geometry)?;
        Ok(StepDirection {
            gradient,
            block: Some(block),
            psi,
        })
    }
}

impl IterativeSolver for Landweber {
    fn iterations_per_epoch(&self, _n_blocks: usize) -> u64 {
        1
    }

    fn direction(&self, ctx: &mut StepContext<'_>, x: &GridVector) -> Result<StepDirection> {
        let n = ctx.problem.n_blocks();
        let mut gradient = DualVector::zeros(x.shape());
        let mut block_psi = Vec::with_capacity(n);
        for i in 0..n {
            let (g, psi) = stochastic_gradient_with_objective(ctx.problem, x, ctx.y_obs, i, &ctx.y_geometry)?;
            gradient.add_scaled_in_place(1.0, &g)?;
            block_psi.push(psi);
        }
        let psi = block_psi.iter().sum::<f64>() / n as f64;
        Ok(StepDirection {
            gradient: gradient.scaled(1.0 / n as f64),
            block: None,
            psi,
        })
    }
}

/// `sgd` and `landweber`.
pub fn solver_registry() -> Registry<dyn IterativeSolver> {
    let mut reg: Registry<dyn IterativeSolver> = Registry::new("solver");
    reg.register("sgd", Box::new(Sgd));
    reg.register("landweber", Box::new(Landweber));
    reg
}
