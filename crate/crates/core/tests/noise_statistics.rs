use bsgd::geometry::GridVector;
use bsgd::noise::{add_gaussian, add_impulsive, add_salt_pepper, noise_level, NoiseSpec};

fn data(blocks: usize, len: usize) -> Vec<GridVector> {
    (0..blocks)
        .map(|b| GridVector::from_vec((0..len).map(|j| ((b * len + j) as f64 * 0.013).sin() + 0.5).collect()).unwrap())
        .collect()
}

fn sup(y: &[GridVector]) -> f64 {
    y.iter().flat_map(|b| b.values()).fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[test]
fn gaussian_perturbation_has_the_stated_moments() {
    let y = data(10, 5000);
    let eps = 0.05;
    let noisy = add_gaussian(&y, eps, 3);
    let diffs: Vec<f64> = noisy
        .iter()
        .zip(&y)
        .flat_map(|(a, b)| a.sub(b).unwrap().into_values())
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = eps * sup(&y);
    // five standard errors
    assert!(mean.abs() < 5.0 * sigma / n.sqrt(), "{mean}");
    assert!((var.sqrt() / sigma - 1.0).abs() < 5.0 * (0.5 / n).sqrt(), "{}", var.sqrt() / sigma);
}

#[test]
fn salt_pepper_hits_the_requested_fraction_with_extremes() {
    let y = data(8, 5000);
    let kappa = 0.1;
    let noisy = add_salt_pepper(&y, kappa, 9);
    let (lo, hi) = y
        .iter()
        .flat_map(|b| b.values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let mut changed = 0usize;
    let mut salt = 0usize;
    for (a, b) in noisy.iter().zip(&y) {
        for (u, v) in a.values().iter().zip(b.values()) {
            if u != v {
                changed += 1;
                assert!(*u == lo || *u == hi);
                if *u == hi {
                    salt += 1;
                }
            }
        }
    }
    let n = 40000.0;
    let frac = changed as f64 / n;
    // entries already at an extreme can be hit without changing
    assert!((frac - kappa).abs() < 5.0 * (kappa * (1.0 - kappa) / n).sqrt(), "{frac}");
    let salt_frac = salt as f64 / changed as f64;
    assert!((salt_frac - 0.5).abs() < 0.05, "{salt_frac}");
}

#[test]
fn impulsive_noise_corrupts_whole_blocks() {
    let y = data(2000, 4);
    let noisy = add_impulsive(&y, 0.2, 0.1, 5);
    let hit: Vec<bool> = noisy.iter().zip(&y).map(|(a, b)| a != b).collect();
    for (a, b) in noisy.iter().zip(&y) {
        if a != b {
            assert!(a.values().iter().zip(b.values()).all(|(u, v)| u != v));
        }
    }
    let frac = hit.iter().filter(|h| **h).count() as f64 / hit.len() as f64;
    assert!((frac - 0.2).abs() < 5.0 * (0.16f64 / 2000.0).sqrt(), "{frac}");
}

#[test]
fn identical_specs_give_identical_bits() {
    let y = data(4, 100);
    for spec in [NoiseSpec::gaussian(0.03, 1), NoiseSpec::salt_pepper(0.2, 1), NoiseSpec::impulsive(0.5, 0.1, 1)] {
        let a = spec.apply(&y).unwrap();
        let b = spec.apply(&y).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!(u.values().iter().zip(v.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
    let other = NoiseSpec::gaussian(0.03, 2).apply(&y).unwrap();
    assert_ne!(other, NoiseSpec::gaussian(0.03, 1).apply(&y).unwrap());
}

#[test]
fn noise_level_scales_with_epsilon() {
    let y = data(6, 50);
    let base = noise_level(&y, &add_gaussian(&y, 0.01, 4), 2.0).unwrap().1;
    for k in [2.0, 5.0, 10.0] {
        let d = noise_level(&y, &add_gaussian(&y, 0.01 * k, 4), 2.0).unwrap().1;
        assert!((d / base - k).abs() < 1e-9 * k);
    }
}
