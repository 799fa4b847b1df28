//! Parallel-beam discrete Radon transform.
//!
//! The image occupies the square `[-1, 1]²` with row 0 at the top
//! (`y = 1`). For angle `θ` the ray through detector offset `s` is
//! `{ s·σ + t·σ⊥ }` with `σ = (cos θ, sin θ)` and `σ⊥ = (-sin θ, cos θ)`.
//! Detector offsets are the bin centres of `n_detectors` equal bins of
//! `[-1, 1]`. Matrix entries are exact ray–pixel intersection lengths,
//! obtained by walking the ray across the pixel grid lines.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// `out = A x`, summing each row in storage order.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out += Aᵀ y`.
    pub fn mul_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n_rows);
        debug_assert_eq!(out.len(), self.n_cols);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (j, a) in self.row(i) {
                out[j] += a * yi;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] += a;
            }
        }
        dense
    }
}

/// Projection matrices for a set of equidistant angles in `[0, π)`.
#[derive(Debug, Clone)]
pub struct RadonSystem {
    image_shape: (usize, usize),
    angles: Vec<f64>,
    n_detectors: usize,
    matrices: Vec<SparseMatrix>,
}

impl RadonSystem {
    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn n_pixels(&self) -> usize {
        self.image_shape.0 * self.image_shape.1
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn matrix(&self, angle_index: usize) -> &SparseMatrix {
        &self.matrices[angle_index]
    }

    /// Detector offsets `s_k` on `[-1, 1]`.
    pub fn detector_offsets(&self) -> Vec<f64> {
        detector_offsets(self.n_detectors)
    }

    /// Projection of `image` at one angle.
    pub fn project(&self, angle_index: usize, image: &[f64]) -> Vec<f64> {
        self.matrices[angle_index].mul_vec(image)
    }
}

pub fn detector_offsets(n_detectors: usize) -> Vec<f64> {
    (0..n_detectors)
        .map(|k| -1.0 + (2 * k + 1) as f64 / n_detectors as f64)
        .collect()
}

/// Assembles the projection matrices for angles `{0, π/n, …, (n-1)π/n}`.
pub fn build_radon(
    image_shape: (usize, usize),
    n_angles: usize,
    n_detectors: usize,
) -> Result<RadonSystem> {
    let (rows, cols) = image_shape;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("empty image shape {rows}x{cols}")));
    }
    if n_angles == 0 || n_detectors == 0 {
        return Err(Error::invalid("need at least one angle and one detector"));
    }
    let angles: Vec<f64> = (0..n_angles)
        .map(|i| i as f64 * PI / n_angles as f64)
        .collect();
    let offsets = detector_offsets(n_detectors);
    let matrices = angles
        .par_iter()
        .map(|&theta| assemble_angle(image_shape, theta, &offsets))
        .collect();
    Ok(RadonSystem {
        image_shape,
        angles,
        n_detectors,
        matrices,
    })
}

fn assemble_angle(image_shape: (usize, usize), theta: f64, offsets: &[f64]) -> SparseMatrix {
    let (rows, cols) = image_shape;
    let mut row_ptr = Vec::with_capacity(offsets.len() + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut scratch = Vec::new();
    for &s in offsets {
        trace_ray(image_shape, theta, s, &mut scratch);
        for &(pixel, length) in &scratch {
            col_idx.push(pixel);
            values.push(length);
        }
        row_ptr.push(col_idx.len());
    }
    SparseMatrix {
        n_rows: offsets.len(),
        n_cols: rows * cols,
        row_ptr,
        col_idx,
        values,
    }
}

/// Intersection lengths of one ray with the pixels it crosses, in order of
/// traversal.
pub(crate) fn trace_ray(
    image_shape: (usize, usize),
    theta: f64,
    s: f64,
    out: &mut Vec<(usize, f64)>,
) {
    out.clear();
    let (rows, cols) = image_shape;
    let (sin, cos) = theta.sin_cos();
    let origin = (s * cos, s * sin);
    let dir = (-sin, cos);

    // Clip the ray to the image square.
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (o, d) in [(origin.0, dir.0), (origin.1, dir.1)] {
        if d.abs() < 1e-15 {
            if !(-1.0..=1.0).contains(&o) {
                return;
            }
        } else {
            let (a, b) = ((-1.0 - o) / d, (1.0 - o) / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    if t_hi - t_lo <= 1e-14 {
        return;
    }

    let width = 2.0 / cols as f64;
    let height = 2.0 / rows as f64;
    let mut crossings = vec![t_lo, t_hi];
    if dir.0.abs() >= 1e-15 {
        for j in 1..cols {
            let t = (-1.0 + j as f64 * width - origin.0) / dir.0;
            if t > t_lo && t < t_hi {
                crossings.push(t);
            }
        }
    }
    if dir.1.abs() >= 1e-15 {
        for i in 1..rows {
            let t = (1.0 - i as f64 * height - origin.1) / dir.1;
            if t > t_lo && t < t_hi {
                crossings.push(t);
            }
        }
    }
    crossings.sort_by(|a, b| a.total_cmp(b));

    for w in crossings.windows(2) {
        let length = w[1] - w[0];
        if length <= 1e-14 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let x = origin.0 + mid * dir.0;
        let y = origin.1 + mid * dir.1;
        let col = (((x + 1.0) / width).floor() as isize).clamp(0, cols as isize - 1) as usize;
        let row = (((1.0 - y) / height).floor() as isize).clamp(0, rows as isize - 1) as usize;
        let pixel = row * cols + col;
        match out.last_mut() {
            Some((last, acc)) if *last == pixel => *acc += length,
            _ => out.push((pixel, length)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_discretization_shape() {
        let sys = build_radon((110, 110), 180, 16).unwrap();
        assert_eq!(sys.n_angles(), 180);
        assert!((sys.angles()[179] - 179.0 * PI / 180.0).abs() < 1e-15);
        assert_eq!(sys.matrix(0).n_cols(), 110 * 110);
        assert_eq!(sys.matrix(17).n_rows(), 16);
        for w in sys.angles().windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn rejects_empty_geometry() {
        assert!(build_radon((0, 4), 3, 3).is_err());
        assert!(build_radon((4, 4), 0, 3).is_err());
        assert!(build_radon((4, 4), 3, 0).is_err());
    }

    #[test]
    fn constant_image_at_angle_zero_gives_equal_rays() {
        let sys = build_radon((8, 8), 4, 7).unwrap();
        let image = vec![1.5; 64];
        let proj = sys.project(0, &image);
        for v in &proj {
            assert!((v - 3.0).abs() < 1e-12, "{proj:?}");
        }
    }

    #[test]
    fn entries_are_nonnegative_and_bounded_by_diagonal() {
        let sys = build_radon((9, 6), 12, 11).unwrap();
        let diag = (2.0_f64 / 9.0).hypot(2.0 / 6.0);
        for a in 0..sys.n_angles() {
            let m = sys.matrix(a);
            for i in 0..m.n_rows() {
                for (_, v) in m.row(i) {
                    assert!(v > 0.0 && v <= diag + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ray_lengths_sum_to_chord_of_square() {
        let sys = build_radon((10, 10), 7, 9).unwrap();
        let ones = vec![1.0; 100];
        for (a, &theta) in sys.angles().iter().enumerate() {
            let proj = sys.project(a, &ones);
            for (k, s) in sys.detector_offsets().iter().enumerate() {
                let mut scratch = Vec::new();
                trace_ray((10, 10), theta, *s, &mut scratch);
                let total: f64 = scratch.iter().map(|e| e.1).sum();
                assert!((proj[k] - total).abs() < 1e-12);
            }
        }
    }
}
