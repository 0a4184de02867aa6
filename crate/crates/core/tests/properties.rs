use fraclab::concentration::{rescale, RescaleMode};
use fraclab::fractional::{fractional_laplacian, quadratic_form};
use fraclab::grid::{forward_transform, integrate_power};
use fraclab::{Field, GridSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: GridSpec, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn grid_for(dim: usize, m: usize, s: f64, l: f64) -> GridSpec {
    GridSpec::new(dim, s, l, m).unwrap()
}

/// Shift by one lattice step along `axis`: `out(x) = u(x - h e_axis)`.
fn roll(u: &Field, axis: usize) -> Field {
    let g = *u.grid();
    let m = g.points_per_axis();
    let mut idx = vec![0usize; g.dimension()];
    let mut out = vec![0.0; g.len()];
    for (flat, &v) in u.values().iter().enumerate() {
        g.unravel(flat, &mut idx);
        idx[axis] = (idx[axis] + 1) % m;
        out[g.ravel(&idx)] = v;
    }
    Field::new(g, out).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn plancherel_in_dimensions_one_to_four(seed in any::<u64>(), m in prop::sample::select(vec![4usize, 6, 8, 10]), l in 0.5f64..20.0) {
        for dim in 1..=4 {
            let u = random_field(grid_for(dim, m, 0.25, l), seed);
            let g = u.grid();
            let physical = g.cell_volume() * u.values().iter().map(|v| v * v).sum::<f64>();
            let spectral = forward_transform(&u).coefficients().iter().map(|c| c.norm_sqr()).sum::<f64>()
                / l.powi(dim as i32);
            prop_assert!(rel(physical, spectral) <= 1e-12, "N={dim}: {physical} vs {spectral}");
        }
    }

    #[test]
    fn transform_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, dim in 1usize..=3) {
        let g = grid_for(dim, 6, 0.4, 3.0);
        let u = random_field(g, seed);
        let v = random_field(g, seed.wrapping_add(1));
        let w = u.scaled(a).add_scaled(b, &v).unwrap();
        let (tu, tv, tw) = (forward_transform(&u), forward_transform(&v), forward_transform(&w));
        let scale = tu.coefficients().iter().chain(tv.coefficients()).map(|c| c.norm()).fold(0.0, f64::max);
        for ((cu, cv), cw) in tu.coefficients().iter().zip(tv.coefficients()).zip(tw.coefficients()) {
            prop_assert!((cu * a + cv * b - cw).norm() <= 1e-12 * scale * (a.abs() + b.abs() + 1.0));
        }
    }

    #[test]
    fn integrate_power_is_absolutely_homogeneous(seed in any::<u64>(), c in -4.0f64..4.0, p in 1.0f64..6.0) {
        let u = random_field(grid_for(2, 8, 0.5, 5.0), seed);
        let lhs = integrate_power(&u.scaled(c), p);
        let rhs = c.abs().powf(p) * integrate_power(&u, p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn laplacian_is_linear_and_commutes_with_lattice_shifts(seed in any::<u64>(), a in -2.0f64..2.0, s in 0.05f64..0.49, dim in 1usize..=3) {
        let g = grid_for(dim, 8, s, 4.0);
        let u = random_field(g, seed);
        let v = random_field(g, seed ^ 0x5a5a);
        let lu = fractional_laplacian(&u);
        let scale = lu.max_abs();
        let combined = fractional_laplacian(&u.add_scaled(a, &v).unwrap());
        let expected = lu.add_scaled(a, &fractional_laplacian(&v)).unwrap();
        prop_assert!(combined.sub(&expected).unwrap().max_abs() <= 1e-12 * scale * (1.0 + a.abs()) * 4.0);
        for axis in 0..dim {
            let shifted = fractional_laplacian(&roll(&u, axis));
            prop_assert!(shifted.sub(&roll(&lu, axis)).unwrap().max_abs() <= 1e-12 * scale * 4.0);
        }
    }

    #[test]
    fn quadratic_form_is_nonnegative_and_quadratic(seed in any::<u64>(), c in -3.0f64..3.0) {
        let u = random_field(grid_for(2, 8, 0.3, 2.0), seed);
        let q = quadratic_form(&u);
        prop_assert!(q >= 0.0);
        prop_assert!((quadratic_form(&u.scaled(c)) - c * c * q).abs() <= 1e-12 * q * (1.0 + c * c));
    }

    #[test]
    fn lattice_rescaling_preserves_norms(seed in any::<u64>(), j in 1i32..=2, shift in 0usize..8, dim in 1usize..=2) {
        let g = grid_for(dim, 16, 0.3, 8.0);
        let u = random_field(g, seed);
        let lambda = 2f64.powi(j);
        let xi: Vec<f64> = (0..dim).map(|a| ((shift + a) % 8) as f64 * g.spacing()).collect();
        let v = rescale(&u, lambda, &xi, RescaleMode::LatticeExact).unwrap();
        let p = g.critical_exponent();
        prop_assert!(rel(quadratic_form(&v), quadratic_form(&u)) <= 1e-10);
        prop_assert!(rel(integrate_power(&v, p), integrate_power(&u, p)) <= 1e-10);
    }
}
