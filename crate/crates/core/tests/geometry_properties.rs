use bsgd::geometry::{bregman_distance, duality_map, inverse_duality_map, pairing, GeometryParams, GridVector};
use proptest::prelude::*;

const EXPONENTS: [f64; 4] = [1.1, 1.5, 2.0, 3.0];

fn geometry() -> impl Strategy<Value = GeometryParams> {
    (0..EXPONENTS.len(), any::<bool>()).prop_map(|(i, power_is_r)| {
        let r = EXPONENTS[i];
        GeometryParams::new(r, if power_is_r { r } else { 2.0 }).unwrap()
    })
}

fn unit_vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

fn pair() -> impl Strategy<Value = (GridVector, GridVector)> {
    (1usize..24).prop_flat_map(|n| (unit_vector(n), unit_vector(n))).prop_map(|(a, b)| {
        (GridVector::from_vec(a).unwrap(), GridVector::from_vec(b).unwrap())
    })
}

fn triple() -> impl Strategy<Value = (GridVector, GridVector, GridVector)> {
    (1usize..24)
        .prop_flat_map(|n| (unit_vector(n), unit_vector(n), unit_vector(n)))
        .prop_map(|(a, b, c)| {
            (
                GridVector::from_vec(a).unwrap(),
                GridVector::from_vec(b).unwrap(),
                GridVector::from_vec(c).unwrap(),
            )
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn inverse_map_recovers_the_vector(g in geometry(), (x, _) in pair()) {
        let back = inverse_duality_map(&duality_map(&x, &g), &g);
        let scale = x.norm(g.r()).max(1e-300);
        prop_assert!(back.sub(&x).unwrap().norm(g.r()) <= 1e-10 * scale);
    }

    #[test]
    fn pairing_and_dual_norm(g in geometry(), (x, _) in pair()) {
        let j = duality_map(&x, &g);
        let n = x.norm(g.r());
        prop_assert!(close(pairing(&j, &x).unwrap(), n.powf(g.p()), 1e-10));
        prop_assert!(close(j.norm(g.r_star()), n.powf(g.p() - 1.0), 1e-10));
    }

    #[test]
    fn duality_map_is_monotone(g in geometry(), (x, y) in pair()) {
        let dj = duality_map(&x, &g).sub(&duality_map(&y, &g)).unwrap();
        prop_assert!(pairing(&dj, &x.sub(&y).unwrap()).unwrap() >= -1e-12);
    }

    #[test]
    fn three_point_identity(g in geometry(), (z, v, w) in triple()) {
        let lhs = bregman_distance(&z, &w, &g).unwrap();
        let cross = duality_map(&v, &g).sub(&duality_map(&z, &g)).unwrap();
        let rhs = bregman_distance(&z, &v, &g).unwrap()
            + bregman_distance(&v, &w, &g).unwrap()
            + pairing(&cross, &w.sub(&v).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn distance_is_nonnegative_and_definite(g in geometry(), (z, w) in pair()) {
        let d = bregman_distance(&z, &w, &g).unwrap();
        prop_assert!(d >= -1e-12);
        if d < 1e-12 {
            prop_assert!(z.sub(&w).unwrap().norm(g.r()) < 1e-5);
        }
    }

    #[test]
    fn hilbert_distance_is_half_squared_norm((z, w) in pair()) {
        let d = bregman_distance(&z, &w, &GeometryParams::hilbert()).unwrap();
        let n = z.sub(&w).unwrap().norm(2.0);
        prop_assert!((d - 0.5 * n * n).abs() <= 1e-12);
    }

    #[test]
    fn bounded_distance_bounds_the_norm(g in geometry(), (x, truth) in pair(), scale in 0.1..10.0f64) {
        let x = x.scaled(scale);
        let c = bregman_distance(&x, &truth, &g).unwrap();
        let p = g.p();
        let bound = (2.0 * g.p_star()).powf(p) * truth.norm(g.r()).powf(p).max(c);
        prop_assert!(x.norm(g.r()).powf(p) <= bound * (1.0 + 1e-9));
    }
}

/// `D(z, w) ≥ c ‖w - z‖^{max(r, 2)}` with `c` calibrated on one sample and
/// asserted on a fresh one.
#[test]
fn convexity_modulus_holds_on_fresh_samples() {
    use rand::{Rng, SeedableRng};
    let sample = |seed: u64, g: &GeometryParams| -> Vec<(f64, f64)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..500)
            .map(|_| {
                let n = rng.gen_range(1..16);
                let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let z = GridVector::from_vec(z).unwrap();
                let w = GridVector::from_vec(w).unwrap();
                let d = bregman_distance(&z, &w, g).unwrap();
                (d, w.sub(&z).unwrap().norm(g.r()).powf(g.r().max(2.0)))
            })
            .collect()
    };
    for r in EXPONENTS {
        for p in [2.0, r] {
            let g = GeometryParams::new(r, p).unwrap();
            let c = sample(1, &g)
                .iter()
                .filter(|(_, n)| *n > 1e-8)
                .map(|(d, n)| d / n)
                .fold(f64::INFINITY, f64::min);
            assert!(c > 0.0, "r={r} p={p}");
            for (d, n) in sample(2, &g) {
                assert!(d >= 0.5 * c * n - 1e-12, "r={r} p={p}: {d} < {c}·{n}/2");
            }
        }
    }
}
