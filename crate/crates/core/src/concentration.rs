//! Lévy concentration function `Q_u(r) = sup_z int_{B(z,r)} |u|^{2*}` on the
//! lattice, rescaling `u_{lambda,xi}(x) = lambda^{(N-2s)/2} u(lambda x + xi)`,
//! and concentration-scale extraction.
//!
//! Centers range over lattice points and a sample belongs to `B(z, r)` when
//! its periodic minimum-image distance to `z` is at most `r`. Ball masses for
//! all centers at once come from one circular convolution.

use num_complex::Complex64;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{integrate_power, next_index, Field, GridSpec};

const TIE_TOLERANCE: f64 = 1e-12;

/// Squared minimum-image offset, in lattice units, of each sample from the origin index.
fn offset_norms(grid: &GridSpec) -> Vec<u64> {
    let n = grid.dimension();
    let m = grid.points_per_axis();
    let axis: Vec<u64> = (0..m)
        .map(|i| {
            let d = fft::frequency(i, m);
            (d * d) as u64
        })
        .collect();
    let mut idx = vec![0usize; n];
    let mut out = Vec::with_capacity(grid.len());
    loop {
        out.push(idx.iter().map(|&i| axis[i]).sum());
        if !next_index(&mut idx, m) {
            break;
        }
    }
    out
}

#[inline]
fn inside(d2: u64, h: f64, r: f64) -> bool {
    d2 as f64 * h * h <= r * r
}

/// Transformed mass density `|u|^{2*} h^N` and the offset table, shared by
/// every radius queried on one field.
pub struct BallMasses {
    grid: GridSpec,
    density_hat: Vec<Complex64>,
    offsets: Vec<u64>,
    total: f64,
}

impl BallMasses {
    pub fn new(u: &Field) -> Self {
        let grid = *u.grid();
        let p = grid.critical_exponent();
        let vol = grid.cell_volume();
        let mut density_hat: Vec<Complex64> = u
            .values()
            .iter()
            .map(|v| Complex64::new(vol * v.abs().powf(p), 0.0))
            .collect();
        fft::transform(&mut density_hat, grid.dimension(), grid.points_per_axis(), FftDirection::Forward);
        Self {
            grid,
            density_hat,
            offsets: offset_norms(&grid),
            total: integrate_power(u, p),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Mass of `sum_k weight_k K_k` around every center, where `weight(d2)`
    /// gives the kernel value at squared lattice offset `d2`.
    fn convolve<W: Fn(u64) -> f64>(&self, weight: W) -> Vec<f64> {
        let g = &self.grid;
        let mut kernel: Vec<Complex64> = self.offsets.iter().map(|&d2| Complex64::new(weight(d2), 0.0)).collect();
        fft::transform(&mut kernel, g.dimension(), g.points_per_axis(), FftDirection::Forward);
        for (k, d) in kernel.iter_mut().zip(&self.density_hat) {
            *k *= d;
        }
        fft::transform(&mut kernel, g.dimension(), g.points_per_axis(), FftDirection::Inverse);
        let scale = 1.0 / kernel.len() as f64;
        // the kernel is symmetric, so convolution equals correlation
        kernel.iter().map(|c| (c.re * scale).max(0.0)).collect()
    }

    /// Ball mass around every lattice center.
    pub fn masses(&self, r: f64) -> Result<Vec<f64>> {
        self.check_radius(r)?;
        let h = self.grid.spacing();
        Ok(self.convolve(|d2| if inside(d2, h, r) { 1.0 } else { 0.0 }))
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        let half = 0.5 * self.grid.box_length();
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!("radius {r} must be nonnegative")));
        }
        if r > half {
            return Err(Error::RadiusTooLarge { radius: r, half_box: half });
        }
        Ok(())
    }

    /// `(Q_u(r), argmax center)`.
    pub fn concentration(&self, r: f64) -> Result<(f64, Vec<f64>)> {
        let masses = self.masses(r)?;
        let (i, v) = argmax(&masses);
        Ok((v, self.grid.point(i)))
    }
}

/// Largest entry; entries within `1e-12` (relative) of the max tie and the lowest index wins.
fn argmax(values: &[f64]) -> (usize, f64) {
    let best = values.iter().copied().fold(0.0f64, f64::max);
    let floor = best - TIE_TOLERANCE * best;
    let i = values.iter().position(|&v| v >= floor).unwrap_or(0);
    (i, best)
}

/// `Q_u(r)` and a lattice center achieving it. Requires `0 <= r <= L/2`.
pub fn levy_concentration(u: &Field, r: f64) -> Result<(f64, Vec<f64>)> {
    BallMasses::new(u).concentration(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
}

/// `Q_u` on an ascending list of radii.
pub fn concentration_profile(u: &Field, radii: &[f64]) -> Result<ConcentrationProfile> {
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("radii must be ascending".into()));
    }
    let balls = BallMasses::new(u);
    let mut values = Vec::with_capacity(radii.len());
    let mut centers = Vec::with_capacity(radii.len());
    for &r in radii {
        let (v, c) = balls.concentration(r)?;
        values.push(v);
        centers.push(c);
    }
    Ok(ConcentrationProfile {
        radii: radii.to_vec(),
        values,
        centers,
    })
}

/// How [`rescale`] evaluates `u(lambda x + xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleMode {
    /// New box `L / lambda` with the same `M`: sample `i` of the result is
    /// sample `i + xi/h` of `u`. Requires `lambda` a power of two and `xi` on
    /// the lattice.
    LatticeExact,
    /// Same box; values by multilinear interpolation, zero outside the box.
    Interpolated,
}

/// `u_{lambda,xi}(x) = lambda^{(N-2s)/2} u(lambda x + xi)`.
pub fn rescale(u: &Field, lambda: f64, xi: &[f64], mode: RescaleMode) -> Result<Field> {
    let grid = *u.grid();
    let n = grid.dimension();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale {lambda} must be positive")));
    }
    if xi.len() != n {
        return Err(Error::InvalidParameter(format!("shift has {} coordinates, expected {n}", xi.len())));
    }
    let amp = lambda.powf(0.5 * (n as f64 - 2.0 * grid.order()));
    match mode {
        RescaleMode::LatticeExact => {
            let k = lambda.log2().round();
            if 2f64.powi(k as i32) != lambda {
                return Err(Error::InvalidParameter(format!(
                    "lattice-exact rescaling needs a power of two, got {lambda}"
                )));
            }
            let h = grid.spacing();
            let m = grid.points_per_axis() as i64;
            let mut shift = Vec::with_capacity(n);
            for &c in xi {
                let k = (c / h).round();
                if (c / h - k).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("shift {c} is not a lattice vector")));
                }
                shift.push(k as i64);
            }
            let target = grid.with_box_length(grid.box_length() / lambda)?;
            let mut idx = vec![0usize; n];
            let mut src = vec![0usize; n];
            let mut out = Vec::with_capacity(grid.len());
            let vals = u.values();
            loop {
                for a in 0..n {
                    src[a] = (idx[a] as i64 + shift[a]).rem_euclid(m) as usize;
                }
                out.push(amp * vals[grid.ravel(&src)]);
                if !next_index(&mut idx, m as usize) {
                    break;
                }
            }
            Field::new(target, out)
        }
        RescaleMode::Interpolated => {
            let mut y = vec![0.0; n];
            Field::from_fn(grid, |x| {
                for a in 0..n {
                    y[a] = lambda * x[a] + xi[a];
                }
                amp * u.sample(&y)
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveringCheck {
    /// `Q_u(R)`.
    pub lhs: f64,
    /// `floor((N+1) R / r) Q_u(r)`.
    pub rhs: f64,
    pub balls: u64,
    pub holds: bool,
}

/// `Q_u(R) <= floor((N+1) R / r) Q_u(r)` for `0 < r < R <= L/2`.
pub fn covering_bound_check(u: &Field, r: f64, big_r: f64) -> Result<CoveringCheck> {
    if !(r > 0.0 && r < big_r) {
        return Err(Error::InvalidParameter(format!("need 0 < r < R, got r = {r}, R = {big_r}")));
    }
    let balls = BallMasses::new(u);
    let (lhs, _) = balls.concentration(big_r)?;
    let (small, _) = balls.concentration(r)?;
    let count = ((u.grid().dimension() + 1) as f64 * big_r / r).floor() as u64;
    let rhs = count as f64 * small;
    Ok(CoveringCheck {
        lhs,
        rhs,
        balls: count,
        holds: lhs <= rhs + 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationScale {
    pub radius: f64,
    pub center: Vec<f64>,
    /// Mass captured at `radius` (equals `delta` up to `1e-8` relative).
    pub mass: f64,
    /// Periodic distance from `center` to the nearest sample with `u != 0`.
    pub support_distance: f64,
    /// `support_distance <= radius`.
    pub center_near_support: bool,
}

/// Radius `r` and center `z` with `int_{B(z,r)} |u|^{2*} = delta`.
///
/// On the lattice `r -> Q_u(r)` only changes at shell radii `h sqrt(d2)`.
/// Between consecutive shells the next shell enters with linear weight,
/// which yields a continuous nondecreasing `Q~` equal to `Q_u` at every shell
/// radius (the center cell itself enters on `[0, h/2]`). The root of
/// `Q~(r) = delta` is bracketed over the shells and refined by bisection.
pub fn concentration_scale(u: &Field, delta: f64) -> Result<ConcentrationScale> {
    let balls = BallMasses::new(u);
    let total = balls.total();
    if !(delta > 0.0 && delta < total) {
        return Err(Error::DeltaOutOfRange { delta, total });
    }
    let grid = *u.grid();
    let h = grid.spacing();
    let half = 0.5 * grid.box_length();
    // shells with radius <= L/2, as squared lattice offsets
    let mut shells: Vec<u64> = balls.offsets.iter().copied().filter(|&d2| inside(d2, h, half)).collect();
    shells.sort_unstable();
    shells.dedup();
    // knot k includes shells[..k]; radius of knot 0 is 0, of knot 1 is h/2
    let knot_radius = |k: usize| -> f64 {
        match k {
            0 => 0.0,
            1 => 0.5 * h,
            _ => h * (shells[k - 1] as f64).sqrt(),
        }
    };
    let mass_at_knot = |k: usize| -> Vec<f64> {
        if k == 0 {
            return vec![0.0; grid.len()];
        }
        let limit = shells[k - 1];
        balls.convolve(|d2| if d2 <= limit { 1.0 } else { 0.0 })
    };
    let q_at = |k: usize| argmax(&mass_at_knot(k)).1;

    let last = shells.len();
    if q_at(last) < delta {
        return Err(Error::DeltaOutOfRange {
            delta,
            total: q_at(last),
        });
    }
    // smallest knot with Q >= delta
    let (mut lo, mut hi) = (0usize, last);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if q_at(mid) >= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let base = mass_at_knot(lo);
    let full = mass_at_knot(hi);
    let blend = |t: f64| -> Vec<f64> { base.iter().zip(&full).map(|(a, b)| a + t * (b - a)).collect() };
    let (mut tl, mut th) = (0.0f64, 1.0f64);
    let mut t = 1.0;
    for _ in 0..200 {
        let (_, q) = argmax(&blend(t));
        if (q - delta).abs() <= 1e-8 * delta * 0.5 {
            break;
        }
        if q < delta {
            tl = t;
        } else {
            th = t;
        }
        t = 0.5 * (tl + th);
    }
    let masses = blend(t);
    let (i, mass) = argmax(&masses);
    let radius = knot_radius(lo) + t * (knot_radius(hi) - knot_radius(lo));
    let center = grid.point(i);
    let support_distance = support_distance(u, i);
    Ok(ConcentrationScale {
        radius,
        center,
        mass,
        support_distance,
        center_near_support: support_distance <= radius,
    })
}

fn support_distance(u: &Field, center: usize) -> f64 {
    let grid = u.grid();
    let n = grid.dimension();
    let m = grid.points_per_axis() as i64;
    let mut zc = vec![0usize; n];
    grid.unravel(center, &mut zc);
    let mut idx = vec![0usize; n];
    let mut best = u64::MAX;
    for (flat, &v) in u.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        grid.unravel(flat, &mut idx);
        let d2: i64 = idx
            .iter()
            .zip(&zc)
            .map(|(&a, &b)| {
                let d = (a as i64 - b as i64).rem_euclid(m);
                let d = d.min(m - d);
                d * d
            })
            .sum();
        best = best.min(d2 as u64);
    }
    if best == u64::MAX {
        f64::INFINITY
    } else {
        grid.spacing() * (best as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{bubble, quadratic_form, BubbleParams};
    use crate::quadrature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: GridSpec, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn brute_force(u: &Field, r: f64) -> f64 {
        let g = u.grid();
        let p = g.critical_exponent();
        let m = g.points_per_axis() as i64;
        let h = g.spacing();
        let n = g.dimension();
        let (mut zi, mut xi) = (vec![0usize; n], vec![0usize; n]);
        let mut best = 0.0f64;
        for z in 0..g.len() {
            g.unravel(z, &mut zi);
            let mut mass = 0.0;
            for (x, v) in u.values().iter().enumerate() {
                g.unravel(x, &mut xi);
                let d2: i64 = zi
                    .iter()
                    .zip(&xi)
                    .map(|(&a, &b)| {
                        let d = (a as i64 - b as i64).rem_euclid(m);
                        let d = d.min(m - d);
                        d * d
                    })
                    .sum();
                if d2 as f64 * h * h <= r * r {
                    mass += g.cell_volume() * v.abs().powf(p);
                }
            }
            best = best.max(mass);
        }
        best
    }

    fn compact_bump(grid: GridSpec, center: &[f64], radius: f64) -> Field {
        Field::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            let t = 1.0 - r2 / (radius * radius);
            if t > 0.0 {
                t * t
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn zero_field() {
        let g = GridSpec::new(2, 0.5, 4.0, 8).unwrap();
        let (v, _) = levy_concentration(&Field::zeros(g), 1.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn matches_brute_force_on_small_grids() {
        let g = GridSpec::new(2, 0.5, 4.0, 8).unwrap();
        for seed in 0..5 {
            let u = random_field(g, seed);
            for r in [0.0, 0.5, 0.7, 1.0, 1.3, 2.0] {
                let (fast, _) = levy_concentration(&u, r).unwrap();
                let slow = brute_force(&u, r);
                assert!((fast - slow).abs() <= 1e-12 * slow.max(1e-300), "r={r}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn radius_guard() {
        let g = GridSpec::new(2, 0.5, 4.0, 8).unwrap();
        let u = random_field(g, 1);
        assert!(matches!(levy_concentration(&u, 2.0 + 1e-9), Err(Error::RadiusTooLarge { .. })));
        assert!(levy_concentration(&u, 2.0).is_ok());
    }

    #[test]
    fn saturation_on_compact_bump() {
        let g = GridSpec::new(2, 0.5, 16.0, 32).unwrap();
        let u = compact_bump(g, &[2.0, -1.5], 2.0);
        let (v, c) = levy_concentration(&u, 3.0).unwrap();
        let total = integrate_power(&u, g.critical_exponent());
        assert!((v - total).abs() <= 1e-12 * total);
        assert!(c.iter().zip([2.0, -1.5]).all(|(a, b)| (a - b).abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn monotone_bounded_and_homogeneous() {
        let g = GridSpec::new(2, 0.5, 6.0, 16).unwrap();
        let u = random_field(g, 3);
        let total = integrate_power(&u, g.critical_exponent());
        let radii: Vec<f64> = (0..12).map(|i| 0.25 * i as f64).collect();
        let prof = concentration_profile(&u, &radii).unwrap();
        for w in prof.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * total);
        }
        assert!(prof.values.iter().all(|&v| v <= total * (1.0 + 1e-12)));
        let c = -2.5f64;
        let scaled = concentration_profile(&u.scaled(c), &radii).unwrap();
        let factor = c.abs().powf(g.critical_exponent());
        for (a, b) in prof.values.iter().zip(&scaled.values) {
            assert!((b - factor * a).abs() <= 1e-12 * factor * total);
        }
    }

    #[test]
    fn rescale_identity_and_invariance() {
        let g = GridSpec::new(2, 0.5, 8.0, 32).unwrap();
        let u = random_field(g, 4);
        assert_eq!(rescale(&u, 1.0, &[0.0, 0.0], RescaleMode::LatticeExact).unwrap(), u);
        let p = g.critical_exponent();
        let h = g.spacing();
        for (lambda, xi) in [(2.0, [0.0, 0.0]), (0.5, [3.0 * h, -h]), (4.0, [h, 2.0 * h])] {
            let v = rescale(&u, lambda, &xi, RescaleMode::LatticeExact).unwrap();
            assert!((integrate_power(&v, p) - integrate_power(&u, p)).abs() <= 1e-10 * integrate_power(&u, p));
            assert!((quadratic_form(&v) - quadratic_form(&u)).abs() <= 1e-10 * quadratic_form(&u));
            // Q_{u_lambda}(1) = Q_u(lambda)
            if lambda <= 4.0 {
                let (a, _) = levy_concentration(&v, 1.0).unwrap();
                let (b, _) = levy_concentration(&u, lambda).unwrap();
                assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
            }
        }
        assert!(rescale(&u, 3.0, &[0.0, 0.0], RescaleMode::LatticeExact).is_err());
        assert!(rescale(&u, 2.0, &[0.1, 0.0], RescaleMode::LatticeExact).is_err());
    }

    #[test]
    fn interpolated_rescale_of_bubble_is_a_bubble() {
        let g = GridSpec::new(2, 0.5, 16.0, 64).unwrap();
        let b1 = bubble(&g, &BubbleParams::centered(2, 1.0).unwrap()).unwrap();
        let v = rescale(&b1, 0.5, &[0.0, 0.0], RescaleMode::Interpolated).unwrap();
        // lambda^{1/2} omega_1(lambda x) = omega_{1/lambda}(x)
        let b2 = bubble(&g, &BubbleParams::centered(2, 2.0).unwrap()).unwrap();
        // multilinear error bound h^2/8 sum_a max |d_a^2 u| with |d_a^2 omega_1| <= 1
        let h = g.spacing();
        let bound = 0.5f64.sqrt() * h * h / 8.0 * 2.0;
        let err = v.sub(&b2).unwrap().max_abs();
        assert!(err <= bound, "{err} vs {bound}");
        let exact = rescale(&b1, 1.0, &[0.0, 0.0], RescaleMode::Interpolated).unwrap();
        assert_eq!(exact, b1);
    }

    #[test]
    fn covering_bound_on_random_fields() {
        let g = GridSpec::new(2, 0.5, 8.0, 16).unwrap();
        let h = g.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..100 {
            let u = random_field(g, 100 + seed);
            let r = rng.gen_range(h..2.0);
            let c = covering_bound_check(&u, r, 2.0 * r).unwrap();
            assert!(c.holds, "{c:?}");
        }
        let z = covering_bound_check(&Field::zeros(g), 0.5, 1.0).unwrap();
        assert_eq!((z.lhs, z.rhs, z.holds), (0.0, 0.0, true));
    }

    #[test]
    fn covering_count_is_too_small_for_wide_ratios_in_the_plane() {
        // a disk of radius R needs at least (R/r)^2 disks of radius r; for a
        // uniform density the count floor(3 R / r) falls short once R > 3r
        let g = GridSpec::new(2, 0.5, 32.0, 64).unwrap();
        let u = Field::constant(g, 1.0);
        let c = covering_bound_check(&u, 2.0, 8.0).unwrap();
        assert_eq!(c.balls, 12);
        assert!(!c.holds, "{c:?}");
        // one dimension: an interval of length 2R is covered by ceil(R/r) <= floor(2R/r) intervals
        let g1 = GridSpec::new(1, 0.25, 32.0, 256).unwrap();
        let u1 = Field::constant(g1, 1.0);
        for (r, big) in [(0.5, 2.0), (1.0, 7.5), (2.0, 16.0)] {
            assert!(covering_bound_check(&u1, r, big).unwrap().holds);
        }
    }

    #[test]
    fn covering_bound_slack_for_single_bump() {
        let g = GridSpec::new(2, 0.5, 16.0, 64).unwrap();
        let u = compact_bump(g, &[1.0, 2.0], 1.5);
        let c = covering_bound_check(&u, 1.0, 2.0).unwrap();
        assert_eq!(c.balls, 6);
        assert!(c.holds && c.rhs - c.lhs > 0.0);
    }

    #[test]
    fn half_mass_radius_of_bubble() {
        let g = GridSpec::new(2, 0.5, 40.0, 256).unwrap();
        let u = bubble(&g, &BubbleParams::centered(2, 1.0).unwrap()).unwrap();
        let total = integrate_power(&u, 4.0);
        let sc = concentration_scale(&u, 0.5 * total).unwrap();
        assert!((sc.mass - 0.5 * total).abs() <= 1e-8 * 0.5 * total);
        // radial quadrature of |omega|^4 = (1 + r^2)^{-2} in the plane
        let disc = |radius: f64| quadrature::integrate(|r| 2.0 * PI * r / (1.0 + r * r).powi(2), 0.0, radius, 1e-12);
        let (mut lo, mut hi) = (0.0, 20.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if disc(mid) < 0.5 * total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((sc.radius - oracle).abs() <= 0.02 * oracle, "{} vs {oracle}", sc.radius);
        assert!(sc.center.iter().all(|&c| c.abs() < 1e-12));
        assert!(sc.center_near_support);
    }

    #[test]
    fn scale_is_monotone_in_delta() {
        let g = GridSpec::new(2, 0.5, 16.0, 64).unwrap();
        let u = compact_bump(g, &[0.0, 0.0], 3.0);
        let total = integrate_power(&u, 4.0);
        let mut prev = 0.0;
        for f in [0.1, 0.3, 0.5, 0.9, 0.999_999] {
            let sc = concentration_scale(&u, f * total).unwrap();
            assert!(sc.radius >= prev);
            prev = sc.radius;
        }
        assert!((2.5..=3.0).contains(&prev), "{prev}");
        assert!(matches!(concentration_scale(&u, total), Err(Error::DeltaOutOfRange { .. })));
        assert!(matches!(concentration_scale(&u, 0.0), Err(Error::DeltaOutOfRange { .. })));
    }

    #[test]
    fn two_bumps_tie_to_lowest_index() {
        let g = GridSpec::new(2, 0.5, 32.0, 64).unwrap();
        let a = compact_bump(g, &[-8.0, 4.0], 2.0);
        let b = compact_bump(g, &[8.0, -4.0], 2.0);
        let u = a.add_scaled(1.0, &b).unwrap();
        let one = integrate_power(&a, 4.0);
        let sc = concentration_scale(&u, one).unwrap();
        assert_eq!(sc.center, vec![-8.0, 4.0]);
        assert!(sc.center_near_support);
    }
}
