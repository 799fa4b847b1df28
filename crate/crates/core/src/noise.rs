//! Seeded noise generators and the noise level `δ = max_i ‖y_i - y_i^δ‖`.
//!
//! All generators draw from the [`Stream::Noise`] stream of the spec's seed,
//! visiting blocks and entries in storage order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lr_norm_values, GridVector};
use crate::random::{stream_rng, GaussianSource, Stream};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Registered model name: `gaussian`, `salt_pepper` or `impulsive`.
    pub kind: String,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(epsilon: f64, seed: u64) -> Self {
        Self {
            kind: "gaussian".into(),
            epsilon,
            kappa: None,
            seed,
        }
    }

    pub fn salt_pepper(kappa: f64, seed: u64) -> Self {
        Self {
            kind: "salt_pepper".into(),
            epsilon: 0.0,
            kappa: Some(kappa),
            seed,
        }
    }

    pub fn impulsive(kappa: f64, epsilon: f64, seed: u64) -> Self {
        Self {
            kind: "impulsive".into(),
            epsilon,
            kappa: Some(kappa),
            seed,
        }
    }

    fn epsilon(&self) -> Result<f64> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("noise epsilon {} must be >= 0", self.epsilon)));
        }
        Ok(self.epsilon)
    }

    fn kappa(&self) -> Result<f64> {
        match self.kappa {
            Some(k) if k > 0.0 && k < 1.0 => Ok(k),
            Some(k) => Err(Error::invalid(format!("noise kappa {k} must lie in (0, 1)"))),
            None => Err(Error::invalid(format!("noise model `{}` needs kappa", self.kind))),
        }
    }

    /// Applies the registered model named by `kind`.
    pub fn apply(&self, y: &[GridVector]) -> Result<Vec<GridVector>> {
        noise_registry().get(&self.kind)?.corrupt(y, self)
    }
}

pub trait NoiseModel: Send + Sync {
    fn corrupt(&self, y: &[GridVector], spec: &NoiseSpec) -> Result<Vec<GridVector>>;
}

struct Gaussian;
struct SaltPepper;
struct Impulsive;

impl NoiseModel for Gaussian {
    fn corrupt(&self, y: &[GridVector], spec: &NoiseSpec) -> Result<Vec<GridVector>> {
        Ok(add_gaussian(y, spec.epsilon()?, spec.seed))
    }
}

impl NoiseModel for SaltPepper {
    fn corrupt(&self, y: &[GridVector], spec: &NoiseSpec) -> Result<Vec<GridVector>> {
        Ok(add_salt_pepper(y, spec.kappa()?, spec.seed))
    }
}

impl NoiseModel for Impulsive {
    fn corrupt(&self, y: &[GridVector], spec: &NoiseSpec) -> Result<Vec<GridVector>> {
        Ok(add_impulsive(y, spec.kappa()?, spec.epsilon()?, spec.seed))
    }
}

pub fn noise_registry() -> Registry<dyn NoiseModel> {
    let mut reg: Registry<dyn NoiseModel> = Registry::new("noise model");
    reg.register("gaussian", Box::new(Gaussian));
    reg.register("salt_pepper", Box::new(SaltPepper));
    reg.register("impulsive", Box::new(Impulsive));
    reg
}

fn sup_norm(y: &[GridVector]) -> f64 {
    y.iter().map(|b| b.norm(f64::INFINITY)).fold(0.0, f64::max)
}

/// The perturbation `ε ‖y‖_∞ ξ` of [`add_gaussian`], with `‖y‖_∞` taken
/// over all blocks together.
pub fn gaussian_perturbation(y: &[GridVector], epsilon: f64, seed: u64) -> Vec<GridVector> {
    let scale = epsilon * sup_norm(y);
    let mut gauss = GaussianSource::new(stream_rng(seed, Stream::Noise));
    y.iter()
        .map(|block| {
            let mut xi = vec![0.0; block.len()];
            gauss.fill(&mut xi);
            let values = xi.into_iter().map(|v| scale * v).collect();
            GridVector::from_parts(values, block.shape().to_vec())
        })
        .collect()
}

/// `y_i + ε ‖y‖_∞ ξ_i` with i.i.d. standard normal `ξ_i`.
pub fn add_gaussian(y: &[GridVector], epsilon: f64, seed: u64) -> Vec<GridVector> {
    if epsilon == 0.0 {
        return y.to_vec();
    }
    y.iter()
        .zip(gaussian_perturbation(y, epsilon, seed))
        .map(|(block, noise)| {
            let values = block.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect();
            GridVector::from_parts(values, block.shape().to_vec())
        })
        .collect()
}

/// Each entry independently replaced by the global maximum with
/// probability `κ/2`, by the global minimum with probability `κ/2`.
pub fn add_salt_pepper(y: &[GridVector], kappa: f64, seed: u64) -> Vec<GridVector> {
    let all = y.iter().flat_map(|b| b.values().iter().copied());
    let (y_min, y_max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let mut rng = stream_rng(seed, Stream::Noise);
    y.iter()
        .map(|block| {
            let values = block
                .values()
                .iter()
                .map(|&v| {
                    let u: f64 = rng.gen();
                    if u < 0.5 * kappa {
                        y_max
                    } else if u < kappa {
                        y_min
                    } else {
                        v
                    }
                })
                .collect();
            GridVector::from_parts(values, block.shape().to_vec())
        })
        .collect()
}

/// Each block independently kept with probability `1 - κ`, otherwise
/// replaced by `y_i + ε max_j ‖y_j‖_∞ ξ_i`.
pub fn add_impulsive(y: &[GridVector], kappa: f64, epsilon: f64, seed: u64) -> Vec<GridVector> {
    let scale = epsilon * sup_norm(y);
    let mut gauss = GaussianSource::new(stream_rng(seed, Stream::Noise));
    y.iter()
        .map(|block| {
            let u: f64 = gauss.rng_mut().gen();
            if u >= kappa {
                return block.clone();
            }
            let mut xi = vec![0.0; block.len()];
            gauss.fill(&mut xi);
            let values = block.values().iter().zip(xi).map(|(a, z)| a + scale * z).collect();
            GridVector::from_parts(values, block.shape().to_vec())
        })
        .collect()
}

/// Per-block `‖y_i - y_i^δ‖_{r_y}` and their maximum.
pub fn noise_level(y_exact: &[GridVector], y_noisy: &[GridVector], r_y: f64) -> Result<(Vec<f64>, f64)> {
    if y_exact.len() != y_noisy.len() {
        return Err(Error::invalid(format!(
            "{} exact blocks but {} noisy blocks",
            y_exact.len(),
            y_noisy.len()
        )));
    }
    let per_block = y_exact
        .iter()
        .zip(y_noisy)
        .map(|(a, b)| Ok(lr_norm_values(a.sub(b)?.values(), r_y)))
        .collect::<Result<Vec<f64>>>()?;
    let delta = per_block.iter().copied().fold(0.0, f64::max);
    Ok((per_block, delta))
}

/// Rescales the perturbation `y_noisy - y_exact` so that the noise level
/// becomes exactly `target` (up to one rounding per entry).
pub fn rescale_to_level(
    y_exact: &[GridVector],
    y_noisy: &[GridVector],
    r_y: f64,
    target: f64,
) -> Result<Vec<GridVector>> {
    let (_, delta) = noise_level(y_exact, y_noisy, r_y)?;
    if delta == 0.0 {
        return Err(Error::invalid("cannot rescale a zero perturbation"));
    }
    let factor = target / delta;
    y_exact
        .iter()
        .zip(y_noisy)
        .map(|(a, b)| {
            let values = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, z)| x + factor * (z - x))
                .collect();
            Ok(GridVector::from_parts(values, a.shape().to_vec()))
        })
        .collect()
}
