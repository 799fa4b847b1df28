use std::f64::consts::PI;

use bsgd::forward::radon::detector_offsets;
use bsgd::forward::{build_radon, schlieren_apply};
use bsgd::geometry::GridVector;

/// Length of the segment of the line `o + t d` inside the rectangle, by
/// Liang–Barsky clipping.
fn clipped_length(o: (f64, f64), d: (f64, f64), x: (f64, f64), y: (f64, f64)) -> f64 {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (p, q) in [
        (-d.0, o.0 - x.0),
        (d.0, x.1 - o.0),
        (-d.1, o.1 - y.0),
        (d.1, y.1 - o.1),
    ] {
        if p.abs() < 1e-15 {
            if q < 0.0 {
                return 0.0;
            }
            continue;
        }
        let t = q / p;
        if p < 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
    }
    (t1 - t0).max(0.0)
}

fn oracle_matrix(rows: usize, cols: usize, theta: f64, n_det: usize) -> Vec<Vec<f64>> {
    let (w, h) = (2.0 / cols as f64, 2.0 / rows as f64);
    detector_offsets(n_det)
        .into_iter()
        .map(|s| {
            let o = (s * theta.cos(), s * theta.sin());
            let d = (-theta.sin(), theta.cos());
            let mut row = vec![0.0; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    let xs = (-1.0 + j as f64 * w, -1.0 + (j + 1) as f64 * w);
                    let ys = (1.0 - (i + 1) as f64 * h, 1.0 - i as f64 * h);
                    row[i * cols + j] = clipped_length(o, d, xs, ys);
                }
            }
            row
        })
        .collect()
}

/// Axis-parallel rays along a pixel edge, where clipping against closed
/// pixels counts the edge twice.
fn on_grid_line(rows: usize, cols: usize, theta: f64, s: f64) -> bool {
    let on = |c: f64, n: usize| {
        let u = (c + 1.0) * n as f64 / 2.0;
        (u - u.round()).abs() < 1e-9
    };
    (theta.sin().abs() < 1e-12 && on(s, cols)) || (theta.cos().abs() < 1e-12 && on(s, rows))
}

#[test]
fn sparse_rows_match_clipped_pixel_lengths() {
    for &(rows, cols, n_angles, n_det) in &[(5, 5, 8, 7), (6, 9, 12, 10), (16, 16, 10, 23)] {
        let sys = build_radon((rows, cols), n_angles, n_det).unwrap();
        for (a, &theta) in sys.angles().iter().enumerate() {
            let dense = sys.matrix(a).to_dense();
            let oracle = oracle_matrix(rows, cols, theta, n_det);
            let offsets = detector_offsets(n_det);
            for (k, (got, want)) in dense.iter().zip(&oracle).enumerate() {
                if on_grid_line(rows, cols, theta, offsets[k]) {
                    continue;
                }
                for (p, (g, w)) in got.iter().zip(want).enumerate() {
                    assert!(
                        (g - w).abs() < 1e-12,
                        "{rows}x{cols} angle {a} ray {k} pixel {p}: {g} vs {w}"
                    );
                }
            }
        }
    }
}

#[test]
fn oblique_rays_agree_off_the_lattice() {
    // angles that never line up with the grid
    let n_angles = 7;
    let sys = build_radon((11, 11), n_angles, 13).unwrap();
    for a in 0..n_angles {
        let theta = a as f64 * PI / n_angles as f64;
        let oracle = oracle_matrix(11, 11, theta, 13);
        let dense = sys.matrix(a).to_dense();
        let err: f64 = dense
            .iter()
            .flatten()
            .zip(oracle.iter().flatten())
            .map(|(g, w)| (g - w).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "angle {a}: {err}");
    }
}

#[test]
fn ray_on_a_grid_line_is_counted_once() {
    // 24 bins on 16 pixels put the second ray exactly on a pixel edge
    let sys = build_radon((16, 16), 1, 24).unwrap();
    let dense = sys.matrix(0).to_dense();
    let total: f64 = dense[1].iter().sum();
    assert!((total - 2.0).abs() < 1e-12, "{total}");
}

#[test]
fn transpose_product_is_the_adjoint() {
    let sys = build_radon((7, 8), 6, 9).unwrap();
    let x: Vec<f64> = (0..56).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).cos()).collect();
    for a in 0..6 {
        let m = sys.matrix(a);
        let ax = m.mul_vec(&x);
        let mut aty = vec![0.0; 56];
        m.mul_transpose_add(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn schlieren_data_is_squared_dense_projection() {
    let sys = build_radon((6, 6), 4, 8).unwrap();
    let x = GridVector::new((0..36).map(|i| (i as f64 * 0.21).cos()).collect(), vec![6, 6]).unwrap();
    let batch = [1, 3];
    let y = schlieren_apply(&sys, &batch, &x).unwrap();
    assert_eq!(y.shape(), &[2, 8]);
    for (row, &a) in batch.iter().enumerate() {
        let oracle = oracle_matrix(6, 6, sys.angles()[a], 8);
        for (k, weights) in oracle.iter().enumerate() {
            let proj: f64 = weights.iter().zip(x.values()).map(|(m, v)| m * v).sum();
            assert!((y.values()[row * 8 + k] - proj * proj).abs() < 1e-12);
        }
    }
}
