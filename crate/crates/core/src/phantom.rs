//! Synthetic phantoms on the image square `[-1, 1]²`.
//!
//! Pixel `(i, j)` of a `rows × cols` image has centre
//! `x = -1 + (j + ½)·2/cols`, `y = 1 - (i + ½)·2/rows`; a pixel belongs to a
//! disk when its centre does.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array_io::load_array;
use crate::error::{Error, Result};
use crate::geometry::GridVector;
use crate::random::{stream_rng, Stream};

/// Upper bound on the nonzero fraction of a sparse-blob phantom.
pub const MAX_BLOB_FILL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Random piecewise-constant disks on a zero background.
    #[default]
    SparseBlobs,
    /// Two disks of radius 0.2 centred at `(0, ±0.75)`, amplitude 3 on a
    /// unit background.
    Inclusions,
    /// Loaded from a BSGD-ARRAY file.
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub n_blobs: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl PhantomSpec {
    pub fn materialize(&self, shape: &[usize], base_dir: &Path) -> Result<GridVector> {
        match self.kind {
            PhantomKind::SparseBlobs => make_phantom(shape, self.n_blobs, self.amplitude, self.seed),
            PhantomKind::Inclusions => inclusion_phantom(shape),
            PhantomKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("phantom = \"file\" needs phantom_path".into()))?;
                let image = load_array(base_dir.join(path))?;
                image.check_shape(shape)?;
                Ok(image)
            }
        }
    }
}

fn image_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [rows, cols] if *rows > 0 && *cols > 0 => Ok((*rows, *cols)),
        _ => Err(Error::invalid(format!("phantom shape {shape:?} must be 2-D and positive"))),
    }
}

fn pixel_centre(rows: usize, cols: usize, i: usize, j: usize) -> (f64, f64) {
    (
        -1.0 + (j as f64 + 0.5) * 2.0 / cols as f64,
        1.0 - (i as f64 + 0.5) * 2.0 / rows as f64,
    )
}

/// Paints disks over `background`; later disks overwrite earlier ones.
pub fn rasterize_disks(shape: &[usize], disks: &[Disk], background: f64) -> Result<GridVector> {
    let (rows, cols) = image_dims(shape)?;
    let mut values = vec![background; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let (x, y) = pixel_centre(rows, cols, i, j);
            for d in disks {
                if (x - d.cx).hypot(y - d.cy) <= d.radius {
                    values[i * cols + j] = d.amplitude;
                }
            }
        }
    }
    GridVector::new(values, vec![rows, cols])
}

/// Sparse phantom of `n_blobs` disks with the given amplitude on a zero
/// background. Centres lie within radius 0.6 of the origin and radii in
/// `[0.08, 0.2]`; a blob that would raise the nonzero fraction above
/// [`MAX_BLOB_FILL`] is skipped. Parts outside the image are clipped.
pub fn make_phantom(shape: &[usize], n_blobs: usize, amplitude: f64, seed: u64) -> Result<GridVector> {
    let (rows, cols) = image_dims(shape)?;
    let mut rng = stream_rng(seed, Stream::Phantom);
    let mut disks = Vec::with_capacity(n_blobs);
    let mut image = GridVector::zeros(&[rows, cols]);
    for _ in 0..n_blobs {
        let r = 0.6 * rng.gen::<f64>().sqrt();
        let phi = std::f64::consts::TAU * rng.gen::<f64>();
        let radius = 0.08 + 0.12 * rng.gen::<f64>();
        disks.push(Disk {
            cx: r * phi.cos(),
            cy: r * phi.sin(),
            radius,
            amplitude,
        });
        let candidate = rasterize_disks(shape, &disks, 0.0)?;
        if nonzero_fraction(&candidate) >= MAX_BLOB_FILL {
            disks.pop();
            continue;
        }
        image = candidate;
    }
    Ok(image)
}

/// Two inclusions of radius 0.2 at `(0, ±0.75)` with amplitude 3 on a unit
/// background.
pub fn inclusion_phantom(shape: &[usize]) -> Result<GridVector> {
    let disks = [0.75, -0.75].map(|cy| Disk {
        cx: 0.0,
        cy,
        radius: 0.2,
        amplitude: 3.0,
    });
    rasterize_disks(shape, &disks, 1.0)
}

pub fn nonzero_fraction(v: &GridVector) -> f64 {
    v.values().iter().filter(|&&x| x != 0.0).count() as f64 / v.len() as f64
}
