//! Periodic box discretization: grids, sampled fields, and their spectra.
//!
//! The box is `[-L/2, L/2)^N` sampled at `x_i = -L/2 + i h`, `h = L/M`. Field
//! values are stored row-major with the last axis fastest. Spectral
//! coefficients follow
//!
//! ```text
//! u_hat(k) = h^N * sum_x u(x) exp(-i 2 pi k.x / L),   k in {-M/2, ..., M/2-1}^N
//! ```
//!
//! and are stored in FFT order (index `i` holds `k = i` for `i < M/2`, else
//! `k = i - M`). With this scaling discrete sums converge to the continuum
//! integrals as `M, L -> infinity`.

use num_complex::Complex64;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::fft;

/// Discretization of a periodic box truncating `R^N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dimension: usize,
    order: f64,
    box_length: f64,
    points_per_axis: usize,
}

/// Hard cap on the number of samples; keeps `len * size_of::<Complex64>()` addressable.
const MAX_POINTS: usize = 1 << 31;

impl GridSpec {
    pub fn new(dimension: usize, order: f64, box_length: f64, points_per_axis: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidGrid("dimension must be >= 1".into()));
        }
        if !(order > 0.0 && order < 1.0) {
            return Err(Error::Domain(format!("fractional order s = {order} not in (0, 1)")));
        }
        if (dimension as f64) <= 2.0 * order {
            return Err(Error::Domain(format!(
                "critical exponent undefined: N = {dimension} <= 2s = {}",
                2.0 * order
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {box_length} must be positive")));
        }
        if points_per_axis < 4 || !points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points_per_axis} must be even and >= 4"
            )));
        }
        match points_per_axis.checked_pow(dimension as u32) {
            Some(n) if n <= MAX_POINTS => {}
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "{points_per_axis}^{dimension} samples exceed the supported size"
                )))
            }
        }
        Ok(Self {
            dimension,
            order,
            box_length,
            points_per_axis,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Lattice spacing `h = L / M`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_axis as f64
    }

    /// `h^N`, the quadrature weight of one sample.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    /// Total number of samples `M^N`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `2*_s = 2N / (N - 2s)`.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.dimension, self.order)
    }

    /// Physical coordinate of lattice index `i` along any axis.
    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.box_length + i as f64 * self.spacing()
    }

    /// Same box and resolution, different fractional order or box length.
    pub fn with_box_length(&self, box_length: f64) -> Result<Self> {
        Self::new(self.dimension, self.order, box_length, self.points_per_axis)
    }

    pub fn unravel(&self, mut index: usize, out: &mut [usize]) {
        let m = self.points_per_axis;
        for a in (0..self.dimension).rev() {
            out[a] = index % m;
            index /= m;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let m = self.points_per_axis;
        idx.iter().fold(0, |acc, &i| acc * m + i)
    }

    /// Physical coordinates of the sample at flat `index`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dimension];
        self.unravel(index, &mut idx);
        idx.iter().map(|&i| self.coordinate(i)).collect()
    }

    /// Lattice index (rounded, periodically wrapped) nearest to a physical coordinate.
    pub fn nearest_index(&self, x: f64) -> usize {
        let m = self.points_per_axis as i64;
        let raw = ((x + 0.5 * self.box_length) / self.spacing()).round() as i64;
        raw.rem_euclid(m) as usize
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension
            && x
                .iter()
                .all(|&c| c >= -0.5 * self.box_length && c < 0.5 * self.box_length)
    }
}

pub fn critical_exponent(dimension: usize, order: f64) -> f64 {
    let n = dimension as f64;
    2.0 * n / (n - 2.0 * order)
}

/// Advance a row-major multi-index; returns false after the last index.
#[inline]
pub(crate) fn next_index(idx: &mut [usize], m: usize) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < m {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// Neumaier-compensated sum; fixed order, so results are reproducible.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Real function sampled on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Construct without the finiteness scan; callers guarantee finite input.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_parts(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_parts(grid, vec![c; grid.len()])
    }

    /// Sample `f` at every lattice point.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: GridSpec, mut f: F) -> Result<Self> {
        let n = grid.dimension();
        let m = grid.points_per_axis();
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        let mut values = Vec::with_capacity(grid.len());
        loop {
            for a in 0..n {
                x[a] = grid.coordinate(idx[a]);
            }
            values.push(f(&x));
            if !next_index(&mut idx, m) {
                break;
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field::from_parts(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field::from_parts(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.add_scaled(-1.0, other)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field::from_parts(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Discrete `L^2(box)` pairing `h^N sum u v`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.grid.cell_volume() * compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b)))
    }

    /// Discrete `L^2(box)` norm.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * compensated_sum(self.values.iter().map(|v| v * v))).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    /// Multilinear interpolation at a physical point.
    ///
    /// The stencil wraps across the periodic seam between `x_{M-1}` and
    /// `x_0 = -L/2 ~ L/2`; points outside the closed box `[-L/2, L/2]^N` read
    /// zero. Coordinates within `1e-9` cells of a lattice plane snap to it.
    pub fn sample(&self, y: &[f64]) -> f64 {
        const SNAP: f64 = 1e-9;
        let g = &self.grid;
        let (m, h, half) = (g.points_per_axis, g.spacing(), 0.5 * g.box_length);
        let n = g.dimension;
        let mut lo = [0usize; 16];
        let mut hi = [0usize; 16];
        let mut fr = [0.0f64; 16];
        let mut split = [0usize; 16];
        let mut n_split = 0;
        for a in 0..n {
            if y[a].abs() > half + SNAP * h {
                return 0.0;
            }
            let pos = (y[a] + half) / h;
            let fl = pos.floor();
            let f = pos - fl;
            let i0 = (fl as i64).rem_euclid(m as i64) as usize;
            let i1 = (i0 + 1) % m;
            if f < SNAP {
                (lo[a], hi[a], fr[a]) = (i0, i0, 0.0);
            } else if f > 1.0 - SNAP {
                (lo[a], hi[a], fr[a]) = (i1, i1, 0.0);
            } else {
                (lo[a], hi[a], fr[a]) = (i0, i1, f);
                split[n_split] = a;
                n_split += 1;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n_split) {
            let mut w = 1.0;
            let mut idx = lo;
            for (bit, &a) in split[..n_split].iter().enumerate() {
                if corner >> bit & 1 == 1 {
                    w *= fr[a];
                    idx[a] = hi[a];
                } else {
                    w *= 1.0 - fr[a];
                }
            }
            acc += w * self.values[g.ravel(&idx[..n])];
        }
        acc
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Fourier coefficients of a field, stored in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    fn flat_index(&self, k: &[i64]) -> usize {
        let m = self.grid.points_per_axis() as i64;
        k.iter().fold(0usize, |acc, &ki| acc * m as usize + ki.rem_euclid(m) as usize)
    }

    /// Coefficient at integer frequency vector `k` (taken modulo `M`).
    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        self.coefficients[self.flat_index(k)]
    }

    pub fn set_coefficient(&mut self, k: &[i64], value: Complex64) {
        let i = self.flat_index(k);
        self.coefficients[i] = value;
    }

    /// Integer frequency vector of flat index `index`.
    pub fn frequency(&self, index: usize) -> Vec<i64> {
        let mut idx = vec![0; self.grid.dimension()];
        self.grid.unravel(index, &mut idx);
        idx.iter()
            .map(|&i| fft::frequency(i, self.grid.points_per_axis()))
            .collect()
    }
}

/// `(-1)^{sum of indices}`: the phase from the box offset `x_0 = -L/2`.
fn offset_phase(grid: &GridSpec) -> Vec<f64> {
    let m = grid.points_per_axis();
    let mut idx = vec![0usize; grid.dimension()];
    let mut out = Vec::with_capacity(grid.len());
    loop {
        let parity: usize = idx.iter().sum();
        out.push(if parity.is_multiple_of(2) { 1.0 } else { -1.0 });
        if !next_index(&mut idx, m) {
            break;
        }
    }
    out
}

pub fn forward_transform(u: &Field) -> SpectralField {
    let grid = u.grid;
    let mut data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::transform(&mut data, grid.dimension(), grid.points_per_axis(), FftDirection::Forward);
    let scale = grid.cell_volume();
    for (c, sign) in data.iter_mut().zip(offset_phase(&grid)) {
        *c *= scale * sign;
    }
    SpectralField {
        grid,
        coefficients: data,
    }
}

pub fn inverse_transform(v: &SpectralField) -> Result<Field> {
    let grid = v.grid;
    let mut data: Vec<Complex64> = v
        .coefficients
        .iter()
        .zip(offset_phase(&grid))
        .map(|(c, sign)| c * sign)
        .collect();
    fft::transform(&mut data, grid.dimension(), grid.points_per_axis(), FftDirection::Inverse);
    let scale = grid.box_length().powi(grid.dimension() as i32).recip();
    let re = compensated_sum(data.iter().map(|c| c.re * c.re)).sqrt();
    let im = compensated_sum(data.iter().map(|c| c.im * c.im)).sqrt();
    if im > 1e-10 * re.max(f64::MIN_POSITIVE) && im > 0.0 {
        return Err(Error::NonHermitianInput {
            ratio: if re > 0.0 { im / re } else { f64::INFINITY },
        });
    }
    let values: Vec<f64> = data.iter().map(|c| c.re * scale).collect();
    Field::new(grid, values)
}

/// `h^N sum_x |u(x)|^p`.
pub fn integrate_power(u: &Field, p: f64) -> f64 {
    let vol = u.grid.cell_volume();
    let sum = if p == 2.0 {
        compensated_sum(u.values.iter().map(|v| v * v))
    } else {
        compensated_sum(u.values.iter().map(|v| v.abs().powf(p)))
    };
    vol * sum
}
