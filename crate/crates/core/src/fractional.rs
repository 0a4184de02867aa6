//! The fractional Laplacian on the periodic box, its quadratic form, the
//! constants `C(N,s)` and `S(N,s)`, and the bubble (extremizer) family.
//!
//! Convention: the operator is the Fourier multiplier `|xi|^{2s}` and
//! `quadratic_form(u) = <u, (-Delta)^s u>`. The Gagliardo double integral of
//! `u` equals `2 C(N,s) * quadratic_form(u)`, and the singular-integral form of
//! the operator carries the prefactor `1 / C(N,s)`. `S(N,s)` is the sharp
//! constant in `||u||_{2*}^2 <= S(N,s) <u, (-Delta)^s u>`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{compensated_sum, integrate_power, Field, GridSpec};
use crate::quadrature;

fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("fractional order s = {s} not in (0, 1)")))
    }
}

/// `C(N,s) = int_{R^N} (1 - cos eta_1) / |eta|^{N+2s} d eta`.
///
/// Integrating out `eta_2..eta_N` in polar form leaves
/// `C = A(N,s) * B(s)` with
/// `A = |S^{N-2}| int_0^inf r^{N-2} (1+r^2)^{-(N+2s)/2} dr` (A = 1 when N = 1) and
/// `B = int_R (1 - cos t) |t|^{-1-2s} dt`. Both are split at 1; the
/// oscillatory tail of `B` is integrated by parts before quadrature.
pub fn dirichlet_constant(dimension: usize, s: f64) -> Result<f64> {
    check_order(s)?;
    if dimension == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    Ok(transverse_factor(dimension, s) * cosine_factor(s))
}

const QUAD_TOL: f64 = 1e-13;

fn cosine_factor(s: f64) -> f64 {
    // (1 - cos t)/t^2, stable near 0
    let phi = |t: f64| {
        if t < 1e-4 {
            0.5 - t * t / 24.0
        } else {
            let h = (0.5 * t).sin();
            2.0 * h * h / (t * t)
        }
    };
    // int_0^1 phi(t) t^{1-2s} dt with t = v^q, q = 1/(2-2s)
    let q = 1.0 / (2.0 - 2.0 * s);
    let near = q * quadrature::integrate(|v| phi(v.powf(q)), 0.0, 1.0, QUAD_TOL);

    // int_1^inf e^{it} t^{-a} dt = i e^i - i a J(a+1), unrolled `n` times
    let a = 1.0 + 2.0 * s;
    let n = 8;
    let ie = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, 1.0);
    let minus_i = Complex64::new(0.0, -1.0);
    let mut coeff = Complex64::new(1.0, 0.0);
    let mut tail = Complex64::default();
    for k in 0..n {
        tail += coeff * ie;
        coeff *= minus_i * (a + k as f64);
    }
    let b = a + n as f64;
    let upper = 200.0;
    let re = quadrature::integrate(|t| t.cos() * t.powf(-b), 1.0, upper, QUAD_TOL);
    let im = quadrature::integrate(|t| t.sin() * t.powf(-b), 1.0, upper, QUAD_TOL);
    tail += coeff * Complex64::new(re, im);
    let far = 1.0 / (2.0 * s) - tail.re;
    2.0 * (near + far)
}

fn transverse_factor(dimension: usize, s: f64) -> f64 {
    if dimension == 1 {
        return 1.0;
    }
    let n = dimension as f64;
    let sphere = 2.0 * PI.powf(0.5 * (n - 1.0)) / ln_gamma(0.5 * (n - 1.0)).exp();
    let e = 0.5 * (n + 2.0 * s);
    let inner = quadrature::integrate(|r| r.powi(dimension as i32 - 2) * (1.0 + r * r).powf(-e), 0.0, 1.0, QUAD_TOL);
    // r = 1/v, v = w^q with q = 1/(1+2s)
    let q = 1.0 / (1.0 + 2.0 * s);
    let outer = q * quadrature::integrate(
        |w| {
            let v = w.powf(q);
            (1.0 + v * v).powf(-e)
        },
        0.0,
        1.0,
        QUAD_TOL,
    );
    sphere * (inner + outer)
}

/// Sharp Sobolev constant
/// `S(N,s) = 2^{-2s} pi^{-s} Gamma((N-2s)/2) / Gamma((N+2s)/2) * (Gamma(N)/Gamma(N/2))^{2s/N}`.
pub fn sobolev_constant(dimension: usize, s: f64) -> Result<f64> {
    check_order(s)?;
    let n = dimension as f64;
    if n <= 2.0 * s {
        return Err(Error::Domain(format!("N = {dimension} must exceed 2s = {}", 2.0 * s)));
    }
    let log = -2.0 * s * 2f64.ln() - s * PI.ln() + ln_gamma(0.5 * (n - 2.0 * s)) - ln_gamma(0.5 * (n + 2.0 * s))
        + (2.0 * s / n) * (ln_gamma(n) - ln_gamma(0.5 * n));
    Ok(log.exp())
}

/// Apply the multiplier `|2 pi k / L|^{2s}` through the FFT; returns raw values.
fn apply_symbol(u: &Field) -> Vec<f64> {
    let g = u.grid();
    let symbol = fft::fractional_symbol(g.dimension(), g.points_per_axis(), g.box_length(), g.order());
    let mut data: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::transform(&mut data, g.dimension(), g.points_per_axis(), FftDirection::Forward);
    for (c, s) in data.iter_mut().zip(symbol.iter()) {
        *c *= *s;
    }
    fft::transform(&mut data, g.dimension(), g.points_per_axis(), FftDirection::Inverse);
    let scale = 1.0 / g.len() as f64;
    data.iter().map(|c| c.re * scale).collect()
}

/// `(-Delta)^s u` as a spectral multiplier.
pub fn fractional_laplacian(u: &Field) -> Field {
    Field::from_parts(*u.grid(), apply_symbol(u))
}

/// `L^{-N} sum_k |2 pi k / L|^{2s} |u_hat_k|^2`, the discrete `<u, (-Delta)^s u>`.
pub fn quadratic_form(u: &Field) -> f64 {
    let g = u.grid();
    let symbol = fft::fractional_symbol(g.dimension(), g.points_per_axis(), g.box_length(), g.order());
    let mut data: Vec<Complex64> = u.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::transform(&mut data, g.dimension(), g.points_per_axis(), FftDirection::Forward);
    let vol = g.cell_volume();
    let scale = vol * vol / g.box_length().powi(g.dimension() as i32);
    scale * compensated_sum(data.iter().zip(symbol.iter()).map(|(c, s)| s * c.norm_sqr()))
}

/// Ratio `(int |u|^{2*})^{2/2*} / quadratic_form(u)`; bounded by `S(N,s)` on `R^N`.
pub fn sobolev_quotient(u: &Field) -> Result<f64> {
    let q = quadratic_form(u);
    if q <= 0.0 {
        return Err(Error::ZeroField);
    }
    let p = u.grid().critical_exponent();
    Ok(integrate_power(u, p).powf(2.0 / p) / q)
}

/// Parameters of `omega(x) = mu lambda^{-(N-2s)/2} (1 + |x - x0|^2 / lambda^2)^{-(N-2s)/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleParams {
    pub mu: f64,
    pub lambda: f64,
    pub center: Vec<f64>,
}

impl BubbleParams {
    pub fn new(mu: f64, lambda: f64, center: Vec<f64>) -> Result<Self> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("bubble amplitude mu = {mu} must be nonzero")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("bubble scale lambda = {lambda} must be positive")));
        }
        Ok(Self { mu, lambda, center })
    }

    /// Unit amplitude, centered at the origin.
    pub fn centered(dimension: usize, lambda: f64) -> Result<Self> {
        Self::new(1.0, lambda, vec![0.0; dimension])
    }

    pub fn value(&self, s: f64, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let e = 0.5 * (n - 2.0 * s);
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.mu * self.lambda.powf(-e) * (1.0 + r2 / (self.lambda * self.lambda)).powf(-e)
    }
}

/// Sample the bubble on the grid (the profile is not periodized).
pub fn bubble(grid: &GridSpec, params: &BubbleParams) -> Result<Field> {
    if params.center.len() != grid.dimension() {
        return Err(Error::InvalidParameter(format!(
            "bubble center has {} coordinates, grid has dimension {}",
            params.center.len(),
            grid.dimension()
        )));
    }
    if !grid.contains(&params.center) {
        return Err(Error::InvalidParameter("bubble center outside the box".into()));
    }
    let s = grid.order();
    Field::from_fn(*grid, |x| params.value(s, x))
}

/// Outcome of [`bubble_pde_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleResidual {
    /// Amplitude minimizing the relative residual.
    pub best_mu: f64,
    /// `||(-Delta)^s w - |w|^{2*-2} w|| / ||(-Delta)^s w||` at `best_mu`, discrete `L^2(box)`.
    pub residual: f64,
    /// Same, after removing the zero mode of both terms. The periodic
    /// operator cannot produce a mean, so this isolates everything except
    /// the box-truncation defect of the nonlinear term.
    pub mean_free_residual: f64,
    /// Largest `|w|` on the box faces relative to the peak.
    pub boundary_ratio: f64,
}

impl BubbleResidual {
    pub const DECAY_THRESHOLD: f64 = 1e-3;

    /// `Err(NoDecay)` when the profile is still above threshold at the box faces.
    pub fn check_decay(&self) -> Result<()> {
        if self.boundary_ratio > Self::DECAY_THRESHOLD {
            Err(Error::NoDecay {
                ratio: self.boundary_ratio,
            })
        } else {
            Ok(())
        }
    }
}

/// Fit the amplitude for which the bubble best solves `(-Delta)^s w = |w|^{2*-2} w`.
///
/// With `w_c = c * w_1`, the relative residual is `||a - c^{2*-2} b|| / ||a||` with
/// `a = (-Delta)^s w_1`, `b = w_1^{2*-1}`, a linear least-squares problem in
/// `t = c^{2*-2}`; `mu` in `params` is ignored.
pub fn bubble_pde_residual(grid: &GridSpec, params: &BubbleParams) -> Result<BubbleResidual> {
    let unit = BubbleParams::new(1.0, params.lambda, params.center.clone())?;
    let w = bubble(grid, &unit)?;
    let p = grid.critical_exponent();
    let a = fractional_laplacian(&w);
    let b = w.map(|v| v.abs().powf(p - 2.0) * v);

    let fit = |a: &[f64], b: &[f64]| -> (f64, f64) {
        let ab = compensated_sum(a.iter().zip(b).map(|(x, y)| x * y));
        let bb = compensated_sum(b.iter().map(|y| y * y));
        let aa = compensated_sum(a.iter().map(|x| x * x));
        let t = ab / bb;
        let r2 = compensated_sum(a.iter().zip(b).map(|(x, y)| (x - t * y) * (x - t * y)));
        (t, (r2 / aa).sqrt())
    };
    let (t, residual) = fit(a.values(), b.values());
    if t <= 0.0 {
        return Err(Error::InvalidParameter("no positive amplitude fits the bubble equation".into()));
    }
    let am = a.mean();
    let bm = b.mean();
    let a0: Vec<f64> = a.values().iter().map(|x| x - am).collect();
    let b0: Vec<f64> = b.values().iter().map(|y| y - bm).collect();
    let (_, mean_free_residual) = fit(&a0, &b0);

    let peak = w.max_abs();
    let boundary = boundary_max_abs(&w);
    Ok(BubbleResidual {
        best_mu: t.powf(1.0 / (p - 2.0)),
        residual,
        mean_free_residual,
        boundary_ratio: boundary / peak,
    })
}

/// Max of `|u|` over samples with some coordinate index 0 (the face `x_a = -L/2`,
/// identified with `+L/2`).
pub fn boundary_max_abs(u: &Field) -> f64 {
    let g = u.grid();
    let mut idx = vec![0usize; g.dimension()];
    let mut best = 0.0f64;
    for (i, v) in u.values().iter().enumerate() {
        g.unravel(i, &mut idx);
        if idx.contains(&0) {
            best = best.max(v.abs());
        }
    }
    best
}
