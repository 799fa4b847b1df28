//! Discrete Lebesgue-space geometry.
//!
//! Elements of `L^r` are stored as plain value arrays with unit cell measure,
//! so `‖v‖_r = (Σ|v_j|^r)^{1/r}`. The duality map with gauge `t ↦ t^{p-1}`
//! has the closed form
//!
//! ```text
//! J_p(v) = ‖v‖_r^{p-r} |v|^{r-1} sign(v)
//! ```
//!
//! and its inverse is the same formula on the dual space with the conjugate
//! exponents `(r*, p*)`. Bregman distances are taken with respect to
//! `v ↦ ‖v‖_r^p / p`.
//!
//! Powers of magnitudes are evaluated in the log domain with a hard zero at
//! the origin, so tiny entries underflow to zero instead of producing NaN.

use crate::error::{Error, Result};

/// Absolute tolerance used when validating conjugate exponent pairs.
pub const CONJUGATE_TOLERANCE: f64 = 1e-12;

macro_rules! grid_storage {
    ($name:ident) => {
        impl $name {
            /// Builds a vector from row-major values. Fails if the shape does
            /// not match the number of values or if any entry is non-finite.
            pub fn new(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
                let expected: usize = shape.iter().product();
                if shape.is_empty() || expected != values.len() {
                    return Err(Error::ShapeMismatch {
                        expected: shape,
                        found: vec![values.len()],
                    });
                }
                if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
                Ok(Self { values, shape })
            }

            /// One-dimensional vector.
            pub fn from_vec(values: Vec<f64>) -> Result<Self> {
                let n = values.len();
                Self::new(values, vec![n])
            }

            pub fn zeros(shape: &[usize]) -> Self {
                Self::filled(shape, 0.0)
            }

            pub fn filled(shape: &[usize], value: f64) -> Self {
                let n = shape.iter().product();
                Self {
                    values: vec![value; n],
                    shape: shape.to_vec(),
                }
            }

            /// Skips validation; used on hot paths whose finiteness is
            /// checked by the caller.
            pub(crate) fn from_parts(values: Vec<f64>, shape: Vec<usize>) -> Self {
                debug_assert_eq!(shape.iter().product::<usize>(), values.len());
                Self { values, shape }
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            pub fn shape(&self) -> &[usize] {
                &self.shape
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn is_zero(&self) -> bool {
                self.values.iter().all(|&v| v == 0.0)
            }

            pub fn is_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }

            /// `L^r` norm of the entries (`r = ∞` gives the max norm).
            pub fn norm(&self, r: f64) -> f64 {
                lr_norm_values(&self.values, r)
            }

            pub fn scaled(&self, factor: f64) -> Self {
                Self::from_parts(
                    self.values.iter().map(|v| v * factor).collect(),
                    self.shape.clone(),
                )
            }

            /// `self + factor * other`.
            pub fn add_scaled(&self, factor: f64, other: &Self) -> Result<Self> {
                self.check_same_shape(other)?;
                Ok(Self::from_parts(
                    self.values
                        .iter()
                        .zip(&other.values)
                        .map(|(a, b)| a + factor * b)
                        .collect(),
                    self.shape.clone(),
                ))
            }

            pub fn add_scaled_in_place(&mut self, factor: f64, other: &Self) -> Result<()> {
                self.check_same_shape(other)?;
                for (a, b) in self.values.iter_mut().zip(&other.values) {
                    *a += factor * b;
                }
                Ok(())
            }

            pub fn sub(&self, other: &Self) -> Result<Self> {
                self.add_scaled(-1.0, other)
            }

            /// Euclidean inner product of two vectors of the same kind.
            pub fn dot(&self, other: &Self) -> Result<f64> {
                self.check_same_shape(other)?;
                Ok(dot_values(&self.values, &other.values))
            }

            pub fn check_same_shape(&self, other: &Self) -> Result<()> {
                if self.shape != other.shape {
                    return Err(Error::ShapeMismatch {
                        expected: self.shape.clone(),
                        found: other.shape.clone(),
                    });
                }
                Ok(())
            }

            pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
                if self.shape != shape {
                    return Err(Error::ShapeMismatch {
                        expected: shape.to_vec(),
                        found: self.shape.clone(),
                    });
                }
                Ok(())
            }
        }
    };
}

/// Element of a discretized `L^r` space (primal side).
#[derive(Debug, Clone, PartialEq)]
pub struct GridVector {
    values: Vec<f64>,
    shape: Vec<usize>,
}

/// Element of the dual space `L^{r*}`: duality-map images, gradients and the
/// persistent SGD state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    values: Vec<f64>,
    shape: Vec<usize>,
}

grid_storage!(GridVector);
grid_storage!(DualVector);

impl GridVector {
    /// Same values viewed as a dual element (Euclidean identification).
    pub fn to_dual(&self) -> DualVector {
        DualVector::from_parts(self.values.clone(), self.shape.clone())
    }
}

impl DualVector {
    /// Same values viewed as a primal element (Euclidean identification).
    pub fn to_primal(&self) -> GridVector {
        GridVector::from_parts(self.values.clone(), self.shape.clone())
    }
}

/// Dual pairing `⟨w, v⟩`.
pub fn pairing(w: &DualVector, v: &GridVector) -> Result<f64> {
    if w.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            expected: w.shape().to_vec(),
            found: v.shape().to_vec(),
        });
    }
    Ok(dot_values(w.values(), v.values()))
}

/// Exponents and constants governing the duality maps of one space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams {
    r: f64,
    p: f64,
    r_star: f64,
    p_star: f64,
    c_p: Option<f64>,
    g_pstar: Option<f64>,
}

impl GeometryParams {
    pub fn new(r: f64, p: f64) -> Result<Self> {
        Self::with_conjugates(r, p, conjugate(r)?, conjugate(p)?)
    }

    /// Takes explicitly supplied conjugates and checks them.
    pub fn with_conjugates(r: f64, p: f64, r_star: f64, p_star: f64) -> Result<Self> {
        for (name, value) in [("r", r), ("p", p)] {
            if !(value > 1.0 && value.is_finite()) {
                return Err(Error::invalid(format!("{name} = {value} must lie in (1, ∞)")));
            }
        }
        for (name, a, b) in [("r", r, r_star), ("p", p, p_star)] {
            let defect = (1.0 / a + 1.0 / b - 1.0).abs();
            if !b.is_finite() || defect > CONJUGATE_TOLERANCE {
                return Err(Error::invalid(format!(
                    "conjugate of {name} = {a} given as {b} (1/a + 1/b - 1 = {defect:e})"
                )));
            }
        }
        let (c_p, g_pstar) = if r == 2.0 && p == 2.0 {
            (Some(1.0), Some(1.0))
        } else {
            (None, None)
        };
        Ok(Self {
            r,
            p,
            r_star,
            p_star,
            c_p,
            g_pstar,
        })
    }

    /// `L^2` with `p = 2`: every duality map is the identity.
    pub fn hilbert() -> Self {
        Self::new(2.0, 2.0).expect("hilbert exponents are valid")
    }

    pub fn with_constants(mut self, c_p: Option<f64>, g_pstar: Option<f64>) -> Self {
        self.c_p = c_p;
        self.g_pstar = g_pstar;
        self
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn r_star(&self) -> f64 {
        self.r_star
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn c_p(&self) -> Option<f64> {
        self.c_p
    }

    pub fn g_pstar(&self) -> Option<f64> {
        self.g_pstar
    }

    /// Geometry of the dual space, with the roles of the exponents swapped.
    pub fn dual(&self) -> Self {
        Self {
            r: self.r_star,
            p: self.p_star,
            r_star: self.r,
            p_star: self.p,
            c_p: None,
            g_pstar: None,
        }
    }

    pub fn is_hilbert(&self) -> bool {
        self.r == 2.0 && self.p == 2.0
    }

    /// `p` below the convexity power `max(r, 2)` of `L^r`: no convergence
    /// theory covers this choice.
    pub fn is_practice_mode(&self) -> bool {
        self.p < self.r.max(2.0)
    }
}

fn conjugate(a: f64) -> Result<f64> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::invalid(format!("exponent {a} must lie in (1, ∞)")));
    }
    Ok(a / (a - 1.0))
}

#[inline]
fn pow_abs(magnitude: f64, exponent: f64) -> f64 {
    if magnitude == 0.0 {
        0.0
    } else {
        (exponent * magnitude.ln()).exp()
    }
}

pub(crate) fn dot_values(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(Σ|v_j|^r)^{1/r}` (max norm for `r = ∞`), scaled by the largest entry so
/// that neither overflow nor underflow occurs for representable inputs.
pub(crate) fn lr_norm_values(values: &[f64], r: f64) -> f64 {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 || r == f64::INFINITY {
        return max;
    }
    if r == 2.0 {
        let sum: f64 = values.iter().map(|v| (v / max) * (v / max)).sum();
        return max * sum.sqrt();
    }
    let sum: f64 = values.iter().map(|v| pow_abs(v.abs() / max, r)).sum();
    max * pow_abs(sum, 1.0 / r)
}

/// Discrete `L^r` norm; `r` must be at least 1 or `f64::INFINITY`.
pub fn lr_norm(v: &GridVector, r: f64) -> f64 {
    debug_assert!(r >= 1.0, "norm exponent {r} below 1");
    v.norm(r)
}

/// `‖v‖_r^{p-r} |v|^{r-1} sign(v)`, zero at the origin.
fn duality_values(values: &[f64], r: f64, p: f64) -> Vec<f64> {
    let norm = lr_norm_values(values, r);
    if norm == 0.0 {
        return vec![0.0; values.len()];
    }
    let log_scale = (p - r) * norm.ln();
    values
        .iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                v.signum() * (log_scale + (r - 1.0) * v.abs().ln()).exp()
            }
        })
        .collect()
}

/// Duality map `J_p : L^r → L^{r*}`.
pub fn duality_map(v: &GridVector, g: &GeometryParams) -> DualVector {
    if g.is_hilbert() {
        return DualVector::from_parts(v.values().to_vec(), v.shape().to_vec());
    }
    DualVector::from_parts(duality_values(v.values(), g.r, g.p), v.shape().to_vec())
}

/// Inverse duality map `J_{p*} : L^{r*} → L^r`.
pub fn inverse_duality_map(w: &DualVector, g: &GeometryParams) -> GridVector {
    if g.is_hilbert() {
        return GridVector::from_parts(w.values().to_vec(), w.shape().to_vec());
    }
    GridVector::from_parts(
        duality_values(w.values(), g.r_star, g.p_star),
        w.shape().to_vec(),
    )
}

/// Bregman distance `D(z, w) = ‖z‖^p/p* + ‖w‖^p/p - ⟨J_p(z), w⟩`.
///
/// For `p = r` the distance splits into a sum of scalar Bregman distances,
/// which is evaluated term by term; the Hilbert case is `½‖z - w‖²`. Tiny
/// negative roundoff is clamped to zero.
pub fn bregman_distance(z: &GridVector, w: &GridVector, g: &GeometryParams) -> Result<f64> {
    z.check_same_shape(w)?;
    if z.values() == w.values() {
        return Ok(0.0);
    }
    let value = if g.is_hilbert() {
        0.5 * z
            .values()
            .iter()
            .zip(w.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    } else if g.p == g.r {
        let r = g.r;
        z.values()
            .iter()
            .zip(w.values())
            .map(|(&a, &b)| {
                pow_abs(a.abs(), r) / g.r_star + pow_abs(b.abs(), r) / r
                    - a.signum() * pow_abs(a.abs(), r - 1.0) * b
            })
            .sum::<f64>()
    } else {
        let nz = z.norm(g.r);
        let nw = w.norm(g.r);
        let jz = duality_map(z, g);
        pow_abs(nz, g.p) / g.p_star + pow_abs(nw, g.p) / g.p - dot_values(jz.values(), w.values())
    };
    Ok(value.max(0.0))
}

/// `ℓ^{r_outer}` norm of the block norms `‖y_i‖_{r_y}`.
pub fn product_norm(blocks: &[GridVector], r_y: f64, r_outer: f64) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::invalid("product norm of an empty block list"));
    }
    let norms: Vec<f64> = blocks.iter().map(|b| b.norm(r_y)).collect();
    Ok(lr_norm_values(&norms, r_outer))
}
