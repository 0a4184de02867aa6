//! The groups `G_j = Gamma^j x Lambda_j` acting on `R^N = (C^2)^j x R^{N-4j}`,
//! their characters `sigma_j`, and the induced actions on lattice fields.
//!
//! `Gamma` is generated by the diagonal circle `e^{i theta}(z1, z2)` and
//! `rho(z1, z2) = (-conj z2, conj z1)`, with `sigma(e^{i theta}) = 1`,
//! `sigma(rho) = -1`; `sigma_j` is the product over the `j` blocks and ignores
//! the `Lambda_j` factor.
//!
//! Functions are acted on by `(A_g u)(x) = sigma(g) u(g x)`. A field is
//! sigma-equivariant (`u(g x) = sigma(g) u(x)`) exactly when it is fixed by
//! every `A_g`, and [`symmetrize`] is the Haar average of `A_g` over the
//! sampled finite subgroup. Angles that are multiples of `pi/2`, `rho`, and
//! signed permutations of the trailing coordinates map lattice points to
//! lattice points; other elements are evaluated by multilinear interpolation.
//! The interpolation stencil wraps across the periodic seam, and images that
//! leave the closed box `[-L/2, L/2]^N` read zero.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{next_index, Field, GridSpec};

const TWO_PI: f64 = 2.0 * PI;
const SNAP: f64 = 1e-9;

/// `rho` in real coordinates: with `z1 = v1 + i v2`, `z2 = v3 + i v4`,
/// `(-conj z2, conj z1) = (-v3, v4, v1, -v2)`.
pub fn rho_real_action(v: [f64; 4]) -> [f64; 4] {
    [-v[2], v[3], v[0], -v[1]]
}

/// `e^{i theta}` acting on both complex coordinates: rotation by `theta` in
/// the planes `(1,2)` and `(3,4)`.
pub fn theta_real_action(theta: f64, v: [f64; 4]) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    [
        c * v[0] - s * v[1],
        s * v[0] + c * v[1],
        c * v[2] - s * v[3],
        s * v[2] + c * v[3],
    ]
}

/// How the `Lambda_j = O(N - 4j)` factor is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    /// Average over lattice signed permutations plus seeded random rotations
    /// (interpolated; approximate).
    FullAverage,
    /// Project onto functions of `|y|` by averaging over lattice shells.
    RadialConstraint,
    /// `Lambda_j` is the trivial group.
    Trivial,
}

impl LambdaMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LambdaMode::FullAverage => "full_average",
            LambdaMode::RadialConstraint => "radial_constraint",
            LambdaMode::Trivial => "trivial",
        }
    }
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_average" => Ok(LambdaMode::FullAverage),
            "radial_constraint" => Ok(LambdaMode::RadialConstraint),
            "trivial" => Ok(LambdaMode::Trivial),
            other => Err(Error::Config(format!("unknown lambda_mode {other:?}"))),
        }
    }
}

/// Character attached to a group descriptor.
#[derive(Debug, Clone, Copy)]
pub enum Character {
    /// `sigma_j`: `(-1)^{number of blocks carrying rho}`.
    RhoParity,
    /// Arbitrary sign rule; used for negative controls.
    Custom(fn(&GroupElement) -> f64),
}

/// One element `(gamma_1, ..., gamma_j, eta)` with `gamma_i = e^{i theta_i} rho^{f_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    /// Angles in `[0, 2 pi)`, one per block.
    pub thetas: Vec<f64>,
    /// Whether `rho` is applied (before the rotation) in each block.
    pub rho_flags: Vec<bool>,
    /// Row-major orthogonal `d_y x d_y` matrix acting on the trailing coordinates.
    pub lambda: Vec<f64>,
}

fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TWO_PI);
    if (TWO_PI - t).abs() < 1e-13 {
        0.0
    } else {
        t
    }
}

fn identity_matrix(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

impl GroupElement {
    pub fn identity(blocks: usize, y_dimension: usize) -> Self {
        Self {
            thetas: vec![0.0; blocks],
            rho_flags: vec![false; blocks],
            lambda: identity_matrix(y_dimension),
        }
    }

    /// Element acting as `e^{i theta} rho^{flag}` in block `block` and trivially elsewhere.
    pub fn in_block(blocks: usize, y_dimension: usize, block: usize, theta: f64, rho: bool) -> Self {
        let mut g = Self::identity(blocks, y_dimension);
        g.thetas[block] = normalize_angle(theta);
        g.rho_flags[block] = rho;
        g
    }

    pub fn with_lambda(blocks: usize, lambda: Vec<f64>) -> Self {
        let d = (lambda.len() as f64).sqrt().round() as usize;
        let mut g = Self::identity(blocks, d);
        g.lambda = lambda;
        g
    }

    pub fn blocks(&self) -> usize {
        self.thetas.len()
    }

    pub fn y_dimension(&self) -> usize {
        (self.lambda.len() as f64).sqrt().round() as usize
    }

    pub fn dimension(&self) -> usize {
        4 * self.blocks() + self.y_dimension()
    }

    /// `self ∘ other` (apply `other` first).
    ///
    /// Per block, `rho e^{i b} = e^{-i b} rho` and `rho^2 = e^{i pi}`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let mut thetas = Vec::with_capacity(self.blocks());
        let mut flags = Vec::with_capacity(self.blocks());
        for i in 0..self.blocks() {
            let (a, f) = (self.thetas[i], self.rho_flags[i]);
            let (b, g) = (other.thetas[i], other.rho_flags[i]);
            let mut theta = if f { a - b } else { a + b };
            let flag = match (f, g) {
                (true, true) => {
                    theta += PI;
                    false
                }
                (x, y) => x || y,
            };
            thetas.push(normalize_angle(theta));
            flags.push(flag);
        }
        GroupElement {
            thetas,
            rho_flags: flags,
            lambda: mat_mul(&self.lambda, &other.lambda, self.y_dimension()),
        }
    }

    /// Image of a point of `R^N`.
    pub fn act(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.act_into(x, &mut out);
        out
    }

    fn act_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, (&theta, &rho)) in self.thetas.iter().zip(&self.rho_flags).enumerate() {
            let base = 4 * i;
            let mut v = [x[base], x[base + 1], x[base + 2], x[base + 3]];
            if rho {
                v = rho_real_action(v);
            }
            if theta != 0.0 {
                v = theta_real_action(theta, v);
            }
            out[base..base + 4].copy_from_slice(&v);
        }
        let off = 4 * self.blocks();
        let d = self.y_dimension();
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += self.lambda[r * d + c] * x[off + c];
            }
            out[off + r] = acc;
        }
    }

    /// Full `N x N` matrix, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.dimension();
        let mut m = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.act(&e);
            for r in 0..n {
                m[r * n + c] = col[r];
            }
        }
        m
    }

    /// Whether the element maps lattice points to lattice points.
    pub fn is_lattice_exact(&self) -> bool {
        let quarter = |t: f64| {
            let q = t / FRAC_PI_2;
            (q - q.round()).abs() < 1e-12
        };
        let d = self.y_dimension();
        let signed_perm = (0..d).all(|r| {
            let row = &self.lambda[r * d..(r + 1) * d];
            let ones = row.iter().filter(|v| (v.abs() - 1.0).abs() < 1e-12).count();
            let zeros = row.iter().filter(|v| v.abs() < 1e-12).count();
            ones == 1 && zeros == d - 1
        });
        self.thetas.iter().all(|&t| quarter(t)) && signed_perm
    }

    pub fn approx_eq(&self, other: &GroupElement) -> bool {
        let angle_close = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(TWO_PI);
            d < 1e-10 || TWO_PI - d < 1e-10
        };
        self.rho_flags == other.rho_flags
            && self
                .thetas
                .iter()
                .zip(&other.thetas)
                .all(|(&a, &b)| angle_close(a, b))
            && self
                .lambda
                .iter()
                .zip(&other.lambda)
                .all(|(a, b)| (a - b).abs() < 1e-10)
    }
}

/// `sigma_j(g) = (-1)^{number of rho flags}`.
pub fn sigma(g: &GroupElement) -> f64 {
    if g.rho_flags.iter().filter(|&&f| f).count() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Descriptor of `G_j` together with its sampled finite subgroup.
#[derive(Debug, Clone)]
pub struct EquivariantGroup {
    blocks: usize,
    dimension: usize,
    theta_samples: usize,
    include_rho: bool,
    lambda_mode: LambdaMode,
    lambda_rotations: usize,
    lambda_seed: u64,
    character: Character,
}

impl EquivariantGroup {
    pub const DEFAULT_THETA_SAMPLES: usize = 8;
    pub const DEFAULT_LAMBDA_ROTATIONS: usize = 8;

    pub fn new(blocks: usize, dimension: usize, theta_samples: usize, lambda_mode: LambdaMode) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::InvalidParameter("group needs at least one C^2 block".into()));
        }
        if dimension < 4 * blocks {
            return Err(Error::InvalidParameter(format!(
                "dimension {dimension} < 4 j = {}",
                4 * blocks
            )));
        }
        if theta_samples < 4 || !theta_samples.is_multiple_of(4) {
            return Err(Error::InvalidParameter(format!(
                "theta samples {theta_samples} must be a positive multiple of 4"
            )));
        }
        Ok(Self {
            blocks,
            dimension,
            theta_samples,
            include_rho: true,
            lambda_mode,
            lambda_rotations: Self::DEFAULT_LAMBDA_ROTATIONS,
            lambda_seed: 0,
            character: Character::RhoParity,
        })
    }

    /// `G_j` on `R^N` with `N = 4n + m`: `Lambda_j = O(N - 4j)` for `j < n`
    /// (handled in radial-constraint mode) and trivial for `j = n`.
    pub fn family(dimension: usize, j: usize) -> Result<Self> {
        let n = dimension / 4;
        if j == 0 || j > n {
            return Err(Error::InvalidParameter(format!(
                "group index j = {j} must lie in 1..={n} for N = {dimension}"
            )));
        }
        let mode = if j == n || dimension == 4 * j {
            LambdaMode::Trivial
        } else {
            LambdaMode::RadialConstraint
        };
        Self::new(j, dimension, Self::DEFAULT_THETA_SAMPLES, mode)
    }

    pub fn with_theta_samples(mut self, k: usize) -> Result<Self> {
        self = Self::new(self.blocks, self.dimension, k, self.lambda_mode)?.with_parts_of(&self);
        Ok(self)
    }

    fn with_parts_of(mut self, other: &Self) -> Self {
        self.include_rho = other.include_rho;
        self.lambda_rotations = other.lambda_rotations;
        self.lambda_seed = other.lambda_seed;
        self.character = other.character;
        self
    }

    pub fn with_character(mut self, character: Character) -> Self {
        self.character = character;
        self
    }

    pub fn without_rho(mut self) -> Self {
        self.include_rho = false;
        self
    }

    pub fn with_lambda_rotations(mut self, count: usize, seed: u64) -> Self {
        self.lambda_rotations = count;
        self.lambda_seed = seed;
        self
    }

    /// Same group restricted to the lattice-exact angles `{0, pi/2, pi, 3 pi/2}`.
    pub fn lattice_core(&self) -> Self {
        let mut g = self.clone();
        g.theta_samples = 4;
        g
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn theta_samples(&self) -> usize {
        self.theta_samples
    }

    pub fn lambda_mode(&self) -> LambdaMode {
        self.lambda_mode
    }

    pub fn includes_rho(&self) -> bool {
        self.include_rho
    }

    pub fn y_dimension(&self) -> usize {
        self.dimension - 4 * self.blocks
    }

    pub fn character(&self, g: &GroupElement) -> f64 {
        match self.character {
            Character::RhoParity => sigma(g),
            Character::Custom(f) => f(g),
        }
    }

    fn angles(&self) -> Vec<f64> {
        (0..self.theta_samples)
            .map(|k| TWO_PI * k as f64 / self.theta_samples as f64)
            .collect()
    }

    fn flags(&self) -> &'static [bool] {
        if self.include_rho {
            &[false, true]
        } else {
            &[false]
        }
    }

    /// Elements of the sampled finite subgroup acting in a single block.
    pub fn block_elements(&self, block: usize) -> Vec<GroupElement> {
        let d = self.y_dimension();
        let mut out = Vec::new();
        for &theta in &self.angles() {
            for &rho in self.flags() {
                out.push(GroupElement::in_block(self.blocks, d, block, theta, rho));
            }
        }
        out
    }

    /// All products of sampled block elements (trivial `Lambda` component).
    pub fn block_subgroup(&self) -> Vec<GroupElement> {
        let mut out = vec![GroupElement::identity(self.blocks, self.y_dimension())];
        for b in 0..self.blocks {
            let factors = self.block_elements(b);
            out = out
                .iter()
                .flat_map(|g| factors.iter().map(move |h| g.compose(h)))
                .collect();
        }
        out
    }

    /// Lattice generators of the `Lambda` factor: coordinate sign flips and
    /// adjacent transpositions of the trailing coordinates.
    pub fn lambda_generators(&self) -> Vec<GroupElement> {
        let d = self.y_dimension();
        if self.lambda_mode == LambdaMode::Trivial || d == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for a in 0..d {
            let mut m = identity_matrix(d);
            m[a * d + a] = -1.0;
            out.push(GroupElement::with_lambda(self.blocks, m));
        }
        for a in 0..d.saturating_sub(1) {
            let mut m = identity_matrix(d);
            m[a * d + a] = 0.0;
            m[(a + 1) * d + a + 1] = 0.0;
            m[a * d + a + 1] = 1.0;
            m[(a + 1) * d + a] = 1.0;
            out.push(GroupElement::with_lambda(self.blocks, m));
        }
        out
    }

    /// Seeded Haar-random rotations of the trailing coordinates (identity first).
    pub fn lambda_rotations(&self) -> Vec<GroupElement> {
        let d = self.y_dimension();
        let mut out = vec![GroupElement::identity(self.blocks, d)];
        if d < 2 {
            return out;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.lambda_seed);
        for _ in 1..self.lambda_rotations.max(1) {
            out.push(GroupElement::with_lambda(self.blocks, random_orthogonal(d, &mut rng)));
        }
        out
    }

    /// Elements used to test equivariance: per block the first sampled angle,
    /// the quarter turn and `rho`, plus the `Lambda` lattice generators.
    /// Invariance under a generating set is invariance under the generated group.
    pub fn check_elements(&self) -> Vec<GroupElement> {
        let d = self.y_dimension();
        let mut out: Vec<GroupElement> = Vec::new();
        for b in 0..self.blocks {
            let mut cand = vec![
                GroupElement::in_block(self.blocks, d, b, TWO_PI / self.theta_samples as f64, false),
                GroupElement::in_block(self.blocks, d, b, FRAC_PI_2, false),
            ];
            if self.include_rho {
                cand.push(GroupElement::in_block(self.blocks, d, b, 0.0, true));
            }
            for g in cand {
                if !out.iter().any(|h| h.approx_eq(&g)) {
                    out.push(g);
                }
            }
        }
        out.extend(self.lambda_generators());
        out
    }
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Gram-Schmidt on a Gaussian matrix (rows)
    let mut m: Vec<f64> = (0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for r in 0..d {
        for q in 0..r {
            let dot: f64 = (0..d).map(|c| m[r * d + c] * m[q * d + c]).sum();
            for c in 0..d {
                m[r * d + c] -= dot * m[q * d + c];
            }
        }
        let norm: f64 = (0..d).map(|c| m[r * d + c].powi(2)).sum::<f64>().sqrt();
        for c in 0..d {
            m[r * d + c] /= norm;
        }
    }
    m
}

/// Per-axis sampling stencil for a physical coordinate.
#[inline]
fn axis_stencil(grid: &GridSpec, y: f64) -> (usize, usize, f64) {
    let m = grid.points_per_axis() as i64;
    let pos = (y + 0.5 * grid.box_length()) / grid.spacing();
    let fl = pos.floor();
    let fr = pos - fl;
    let lo = (fl as i64).rem_euclid(m) as usize;
    let hi = (fl as i64 + 1).rem_euclid(m) as usize;
    if fr < SNAP {
        (lo, lo, 0.0)
    } else if fr > 1.0 - SNAP {
        (hi, hi, 0.0)
    } else {
        (lo, hi, fr)
    }
}

/// Flat index map `x -> g x` when every image is a lattice point.
fn lattice_map(g: &GroupElement, grid: &GridSpec) -> Option<Vec<usize>> {
    let n = grid.dimension();
    let m = grid.points_per_axis();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut out = Vec::with_capacity(grid.len());
    loop {
        for a in 0..n {
            x[a] = grid.coordinate(idx[a]);
        }
        g.act_into(&x, &mut y);
        let mut flat = 0usize;
        for &ya in &y {
            let (lo, _, fr) = axis_stencil(grid, ya);
            if fr != 0.0 {
                return None;
            }
            flat = flat * m + lo;
        }
        out.push(flat);
        if !next_index(&mut idx, m) {
            break;
        }
    }
    Some(out)
}

/// `u ∘ g`, exact for lattice-exact elements, multilinear otherwise.
pub fn pull_back(g: &GroupElement, u: &Field) -> Result<Field> {
    let grid = *u.grid();
    if g.dimension() != grid.dimension() {
        return Err(Error::InvalidParameter(format!(
            "group element acts on R^{}, field lives on R^{}",
            g.dimension(),
            grid.dimension()
        )));
    }
    if let Some(map) = lattice_map(g, &grid) {
        let vals = u.values();
        return Ok(Field::from_parts(grid, map.iter().map(|&i| vals[i]).collect()));
    }
    Ok(interpolated_pull_back(g, u))
}

fn interpolated_pull_back(g: &GroupElement, u: &Field) -> Field {
    let grid = *u.grid();
    let n = grid.dimension();
    let m = grid.points_per_axis();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut out = Vec::with_capacity(grid.len());
    loop {
        for a in 0..n {
            x[a] = grid.coordinate(idx[a]);
        }
        g.act_into(&x, &mut y);
        out.push(u.sample(&y));
        if !next_index(&mut idx, m) {
            break;
        }
    }
    Field::from_parts(grid, out)
}

/// `(A_g u)(x) = sigma(g) u(g x)` with the standard character `sigma_j`.
pub fn apply(g: &GroupElement, u: &Field) -> Result<Field> {
    Ok(pull_back(g, u)?.scaled(sigma(g)))
}

enum PullBack {
    Exact(Vec<usize>),
    Interpolated(GroupElement),
}

impl PullBack {
    fn new(g: &GroupElement, grid: &GridSpec) -> Self {
        match lattice_map(g, grid) {
            Some(map) => PullBack::Exact(map),
            None => PullBack::Interpolated(g.clone()),
        }
    }

    fn accumulate(&self, weight: f64, u: &Field, acc: &mut [f64]) {
        match self {
            PullBack::Exact(map) => {
                let vals = u.values();
                for (a, &i) in acc.iter_mut().zip(map) {
                    *a += weight * vals[i];
                }
            }
            PullBack::Interpolated(g) => {
                let v = interpolated_pull_back(g, u);
                for (a, b) in acc.iter_mut().zip(v.values()) {
                    *a += weight * b;
                }
            }
        }
    }
}

/// Averaging stage over one factor: `u -> sum_g w_g u∘g`.
struct AverageStage {
    terms: Vec<(f64, PullBack)>,
}

impl AverageStage {
    fn apply(&self, u: &Field) -> Field {
        let mut acc = vec![0.0; u.len()];
        for (w, pb) in &self.terms {
            pb.accumulate(*w, u, &mut acc);
        }
        Field::from_parts(*u.grid(), acc)
    }
}

/// Group average prepared for one grid; lattice index maps are built once.
pub struct Symmetrizer {
    grid: GridSpec,
    stages: Vec<AverageStage>,
    shell_projection: Option<ShellProjection>,
}

impl Symmetrizer {
    pub fn new(group: &EquivariantGroup, grid: &GridSpec) -> Result<Self> {
        if group.dimension() != grid.dimension() {
            return Err(Error::InvalidParameter(format!(
                "group acts on R^{}, grid has dimension {}",
                group.dimension(),
                grid.dimension()
            )));
        }
        let mut stages = Vec::new();
        match group.character {
            Character::RhoParity => {
                // sigma_j is a product over blocks, so the average factorizes
                for b in 0..group.blocks() {
                    let elems = group.block_elements(b);
                    let w = 1.0 / elems.len() as f64;
                    stages.push(AverageStage {
                        terms: elems
                            .iter()
                            .map(|g| (w * sigma(g), PullBack::new(g, grid)))
                            .collect(),
                    });
                }
            }
            Character::Custom(_) => {
                let elems = group.block_subgroup();
                let w = 1.0 / elems.len() as f64;
                stages.push(AverageStage {
                    terms: elems
                        .iter()
                        .map(|g| (w * group.character(g), PullBack::new(g, grid)))
                        .collect(),
                });
            }
        }
        let d = group.y_dimension();
        let mut shell_projection = None;
        if d > 0 {
            match group.lambda_mode() {
                LambdaMode::Trivial => {}
                LambdaMode::RadialConstraint => {
                    shell_projection = Some(ShellProjection::new(grid, 4 * group.blocks()));
                }
                LambdaMode::FullAverage => {
                    let rots = group.lambda_rotations();
                    let w = 1.0 / rots.len() as f64;
                    stages.push(AverageStage {
                        terms: rots.iter().map(|g| (w, PullBack::new(g, grid))).collect(),
                    });
                    for flip in group.lambda_generators().into_iter().take(d) {
                        stages.push(AverageStage {
                            terms: vec![
                                (0.5, PullBack::new(&GroupElement::identity(group.blocks(), d), grid)),
                                (0.5, PullBack::new(&flip, grid)),
                            ],
                        });
                    }
                    let perms = permutation_elements(group.blocks(), d);
                    let w = 1.0 / perms.len() as f64;
                    stages.push(AverageStage {
                        terms: perms.iter().map(|g| (w, PullBack::new(g, grid))).collect(),
                    });
                }
            }
        }
        Ok(Self {
            grid: *grid,
            stages,
            shell_projection,
        })
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut v = u.clone();
        for stage in &self.stages {
            v = stage.apply(&v);
        }
        if let Some(p) = &self.shell_projection {
            v = p.apply(&v);
        }
        Ok(v)
    }
}

fn permutation_elements(blocks: usize, d: usize) -> Vec<GroupElement> {
    let mut perms = Vec::new();
    let mut p: Vec<usize> = (0..d).collect();
    permute(&mut p, 0, &mut perms);
    perms
        .into_iter()
        .map(|perm| {
            let mut m = vec![0.0; d * d];
            for (r, &c) in perm.iter().enumerate() {
                m[r * d + c] = 1.0;
            }
            GroupElement::with_lambda(blocks, m)
        })
        .collect()
}

fn permute(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, out);
        p.swap(k, i);
    }
}

/// Average over lattice shells `|y|^2 = const` in the coordinates from
/// `first_axis` on, separately for each value of the leading coordinates.
struct ShellProjection {
    slots: Vec<usize>,
    counts: Vec<f64>,
}

impl ShellProjection {
    fn new(grid: &GridSpec, first_axis: usize) -> Self {
        let n = grid.dimension();
        let m = grid.points_per_axis();
        let half = (m / 2) as i64;
        let mut keys: HashMap<(usize, i64), usize> = HashMap::new();
        let mut slots = Vec::with_capacity(grid.len());
        let mut idx = vec![0usize; n];
        loop {
            let outer = idx[..first_axis].iter().fold(0usize, |acc, &i| acc * m + i);
            let r2: i64 = idx[first_axis..]
                .iter()
                .map(|&i| {
                    let c = i as i64 - half;
                    c * c
                })
                .sum();
            let next = keys.len();
            slots.push(*keys.entry((outer, r2)).or_insert(next));
            if !next_index(&mut idx, m) {
                break;
            }
        }
        let mut counts = vec![0.0; keys.len()];
        for &s in &slots {
            counts[s] += 1.0;
        }
        Self { slots, counts }
    }

    fn apply(&self, u: &Field) -> Field {
        let mut sums = vec![0.0; self.counts.len()];
        for (&s, v) in self.slots.iter().zip(u.values()) {
            sums[s] += v;
        }
        for (s, c) in sums.iter_mut().zip(&self.counts) {
            *s /= c;
        }
        Field::from_parts(*u.grid(), self.slots.iter().map(|&s| sums[s]).collect())
    }
}

/// Haar average `(1/|G|) sum_g sigma(g) u(g x)` over the sampled subgroup.
pub fn symmetrize(u: &Field, group: &EquivariantGroup) -> Result<Field> {
    Symmetrizer::new(group, u.grid())?.apply(u)
}

/// Average over lattice spheres `|x|^2 = const` centered at the origin.
pub fn radial_average(u: &Field) -> Field {
    ShellProjection::new(u.grid(), 0).apply(u)
}

/// `max_g ||A_g u - u|| / ||u||` over [`EquivariantGroup::check_elements`].
pub fn equivariance_defect(u: &Field, group: &EquivariantGroup) -> Result<f64> {
    let norm = u.l2_norm();
    if norm == 0.0 {
        return Err(Error::ZeroField);
    }
    let mut worst = 0.0f64;
    for g in group.check_elements() {
        let moved = pull_back(&g, u)?.scaled(group.character(&g));
        worst = worst.max(moved.sub(u)?.l2_norm() / norm);
    }
    Ok(worst)
}

/// `(defect <= tol, defect)`; see [`equivariance_defect`].
pub fn is_equivariant(u: &Field, group: &EquivariantGroup, tol: f64) -> Result<(bool, f64)> {
    let defect = equivariance_defect(u, group)?;
    Ok((defect <= tol, defect))
}

/// Summary of a successful [`assumption_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub sampled_points: usize,
    pub continuous_orbits: usize,
    pub fixed_points: usize,
    /// Point whose sampled stabilizer lies in `ker sigma`.
    pub witness: Vec<f64>,
    pub elements_checked: usize,
}

/// Check the orbit dichotomy and the existence of a point with
/// `sigma(G_xi) = {1}` on samples, plus the character axioms on the
/// lattice-exact subgroup.
pub fn assumption_check(group: &EquivariantGroup, grid: &GridSpec) -> Result<AssumptionReport> {
    if group.dimension() != grid.dimension() {
        return Err(Error::InvalidParameter("group and grid dimensions differ".into()));
    }
    let core = group.lattice_core();
    let elems = core.block_subgroup();
    let tol = 1e-10;

    // the sampled set must be a group on which the character is multiplicative
    for g in &elems {
        for h in &elems {
            let gh = g.compose(h);
            if !elems.iter().any(|e| e.approx_eq(&gh)) {
                return Err(Error::AssumptionViolated(format!(
                    "sampled set not closed under composition: {gh:?}"
                )));
            }
            if (group.character(&gh) - group.character(g) * group.character(h)).abs() > 0.5 {
                return Err(Error::AssumptionViolated(format!(
                    "character not multiplicative on {g:?} and {h:?}"
                )));
            }
        }
    }
    // the circle factor is connected, so a continuous character is 1 on it
    for b in 0..group.blocks() {
        for g in group.block_elements(b).iter().filter(|g| !g.rho_flags[b]) {
            if group.character(g) != 1.0 {
                return Err(Error::AssumptionViolated(format!(
                    "character is -1 on the rotation {:?}, so it is not continuous",
                    g.thetas
                )));
            }
        }
    }
    if !elems.iter().any(|g| group.character(g) < 0.0) {
        return Err(Error::AssumptionViolated("character is not surjective".into()));
    }

    // (G1) on a deterministic sample of lattice points (origin included)
    let mut rng = ChaCha8Rng::seed_from_u64(0x6731);
    let d = group.y_dimension();
    let off = 4 * group.blocks();
    let lambda_continuous = group.lambda_mode() != LambdaMode::Trivial && d >= 2;
    let lambda_elems = group.lambda_generators();
    let all: Vec<&GroupElement> = elems.iter().chain(lambda_elems.iter()).collect();
    let mut points: Vec<Vec<f64>> = vec![vec![0.0; grid.dimension()]];
    for _ in 1..1000 {
        points.push(
            (0..grid.dimension())
                .map(|_| grid.coordinate(rng.gen_range(0..grid.points_per_axis())))
                .collect(),
        );
    }
    let (mut continuous, mut fixed) = (0, 0);
    for x in &points {
        // d/dtheta e^{i theta} z_i at theta = 0 is i z_i
        let block_moves = (0..group.blocks()).any(|b| x[4 * b..4 * b + 4].iter().any(|v| v.abs() > tol));
        let y_moves = lambda_continuous && x[off..].iter().any(|v| v.abs() > tol);
        if block_moves || y_moves {
            continuous += 1;
            continue;
        }
        let stays = all.iter().all(|g| {
            g.act(x).iter().zip(x).all(|(a, b)| (a - b).abs() < tol)
        });
        if !stays {
            return Err(Error::AssumptionViolated(format!(
                "point {x:?} has a finite nontrivial orbit"
            )));
        }
        fixed += 1;
    }

    // (G2): the canonical candidate first, then the samples
    let mut canonical = vec![0.0; grid.dimension()];
    for b in 0..group.blocks() {
        canonical[4 * b] = 1.0;
    }
    let stabilizer_ok = |xi: &[f64]| {
        all.iter()
            .filter(|g| g.act(xi).iter().zip(xi).all(|(a, b)| (a - b).abs() < tol))
            .all(|g| group.character(g) == 1.0)
    };
    let witness = std::iter::once(canonical)
        .chain(points.iter().cloned())
        .find(|xi| stabilizer_ok(xi))
        .ok_or_else(|| Error::AssumptionViolated("no point with sigma(G_xi) = {1}".into()))?;

    Ok(AssumptionReport {
        sampled_points: points.len(),
        continuous_orbits: continuous,
        fixed_points: fixed,
        witness,
        elements_checked: all.len(),
    })
}

/// For a sigma_i-equivariant `u` and sigma_j-equivariant `v` (`i != j`),
/// whether `||u - v|| > 1e-8 max(||u||, ||v||)`.
pub fn distinctness_check(u: &Field, v: &Field, i: usize, j: usize) -> Result<bool> {
    u.check_same_grid(v)?;
    if i == j {
        return Err(Error::InvalidParameter("distinctness needs different characters".into()));
    }
    let (nu, nv) = (u.l2_norm(), v.l2_norm());
    if nu <= 1e-10 || nv <= 1e-10 {
        return Err(Error::ZeroField);
    }
    Ok(u.sub(v)?.l2_norm() > 1e-8 * nu.max(nv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{bubble, quadratic_form, BubbleParams};
    use crate::grid::integrate_power;
    use rand::Rng;

    fn random_vec4(rng: &mut ChaCha8Rng) -> [f64; 4] {
        [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]
    }

    fn norm4(v: [f64; 4]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn rho_action() {
        assert_eq!(rho_real_action([1.0, 0.0, 0.0, 0.0]), [0.0, 0.0, 1.0, 0.0]);
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rho_real_action(rho_real_action(v)), [-1.0, -2.0, -3.0, -4.0]);
        assert_eq!(rho_real_action(rho_real_action(rho_real_action(rho_real_action(v)))), v);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v = random_vec4(&mut rng);
            assert!((norm4(rho_real_action(v)) - norm4(v)).abs() < 1e-14);
        }
    }

    #[test]
    fn rho_matches_complex_definition() {
        let v = [0.3, -1.2, 2.5, 0.7];
        let (z1, z2) = (num_complex::Complex64::new(v[0], v[1]), num_complex::Complex64::new(v[2], v[3]));
        let (w1, w2) = (-z2.conj(), z1.conj());
        assert_eq!(rho_real_action(v), [w1.re, w1.im, w2.re, w2.im]);
    }

    #[test]
    fn theta_action() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let q = theta_real_action(FRAC_PI_2, v);
        for (a, b) in q.iter().zip([-2.0, 1.0, -4.0, 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(theta_real_action(0.0, v), v);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (a, b) = (rng.gen_range(0.0..TWO_PI), rng.gen_range(0.0..TWO_PI));
            let v = random_vec4(&mut rng);
            let lhs = theta_real_action(a, theta_real_action(b, v));
            let rhs = theta_real_action(a + b, v);
            for (x, y) in lhs.iter().zip(rhs) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sigma_values() {
        assert_eq!(sigma(&GroupElement::identity(2, 0)), 1.0);
        assert_eq!(sigma(&GroupElement::in_block(2, 0, 1, 0.0, true)), -1.0);
        let both = GroupElement::in_block(2, 0, 0, 0.0, true).compose(&GroupElement::in_block(2, 0, 1, 0.0, true));
        assert_eq!(sigma(&both), 1.0);
    }

    #[test]
    fn composition_matches_matrices() {
        let g = EquivariantGroup::new(2, 11, 8, LambdaMode::FullAverage).unwrap();
        let mut elems = g.block_subgroup();
        elems.extend(g.lambda_rotations());
        elems.extend(g.lambda_generators());
        let n = 11;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = &elems[rng.gen_range(0..elems.len())];
            let b = &elems[rng.gen_range(0..elems.len())];
            let ab = a.compose(b).matrix();
            let prod = mat_mul(&a.matrix(), &b.matrix(), n);
            for (x, y) in ab.iter().zip(&prod) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elements_are_isometries() {
        let g = EquivariantGroup::new(1, 7, 8, LambdaMode::FullAverage).unwrap();
        let mut elems = g.block_subgroup();
        elems.extend(g.lambda_rotations());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for e in &elems {
            for _ in 0..10 {
                let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let y: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let d0: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let (gx, gy) = (e.act(&x), e.act(&y));
                let d1: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((d0 - d1).abs() < 1e-14 * d0.max(1.0));
            }
        }
    }

    #[test]
    fn lattice_core_has_eight_elements_per_block() {
        let g = EquivariantGroup::family(4, 1).unwrap().lattice_core();
        let elems = g.block_subgroup();
        assert_eq!(elems.len(), 8);
        assert!(elems.iter().all(|e| e.is_lattice_exact()));
        assert_eq!(EquivariantGroup::family(8, 2).unwrap().lattice_core().block_subgroup().len(), 64);
    }

    fn grid4(m: usize) -> GridSpec {
        GridSpec::new(4, 0.5, 8.0, m).unwrap()
    }

    fn random_field(grid: GridSpec, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_action_is_noop() {
        let u = random_field(grid4(6), 5);
        let id = GroupElement::identity(1, 0);
        assert_eq!(apply(&id, &u).unwrap(), u);
    }

    #[test]
    fn lattice_actions_preserve_norms() {
        let grid = grid4(8);
        let u = random_field(grid, 6);
        let q = quadratic_form(&u);
        let p = integrate_power(&u, 8.0 / 3.0);
        for g in EquivariantGroup::family(4, 1).unwrap().lattice_core().block_subgroup() {
            let v = apply(&g, &u).unwrap();
            assert!((quadratic_form(&v) - q).abs() < 1e-12 * q);
            assert!((integrate_power(&v, 8.0 / 3.0) - p).abs() < 1e-12 * p);
        }
    }

    fn gaussian(grid: GridSpec, center: [f64; 4]) -> Field {
        Field::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
            (-r2 / 2.0).exp()
        })
        .unwrap()
    }

    /// Leading-order multilinear norm loss `h^2/12 sum_a |D_a u|^2 / |u|^2`,
    /// with forward differences for the derivatives.
    fn predicted_interpolation_loss(u: &Field) -> f64 {
        let grid = *u.grid();
        let (m, h) = (grid.points_per_axis(), grid.spacing());
        let vals = u.values();
        let mut idx = vec![0usize; 4];
        let mut grad2 = 0.0;
        for (flat, &v) in vals.iter().enumerate() {
            grid.unravel(flat, &mut idx);
            for a in 0..4 {
                let mut j = idx.clone();
                j[a] = (j[a] + 1) % m;
                grad2 += ((vals[grid.ravel(&j)] - v) / h).powi(2);
            }
        }
        let norm2: f64 = vals.iter().map(|v| v * v).sum();
        h * h / 12.0 * grad2 / norm2
    }

    #[test]
    fn interpolated_rotation_norm_loss_is_second_order() {
        let g = GroupElement::in_block(1, 0, 0, TWO_PI / 8.0, false);
        let mut losses = Vec::new();
        for m in [16, 32] {
            let grid = GridSpec::new(4, 0.5, 12.0, m).unwrap();
            let u = gaussian(grid, [0.0; 4]);
            let v = apply(&g, &u).unwrap();
            let loss = (u.l2_norm() - v.l2_norm()) / u.l2_norm();
            let predicted = predicted_interpolation_loss(&u);
            assert!(loss > 0.0 && loss <= 1.25 * predicted, "M={m}: {loss} vs {predicted}");
            losses.push(loss);
        }
        assert!(losses[1] / losses[0] < 0.4, "{losses:?}");
    }

    #[test]
    fn interpolated_symmetrize_is_nearly_idempotent() {
        let group = EquivariantGroup::family(4, 1).unwrap();
        assert_eq!(group.theta_samples(), 8);
        let mut defects = Vec::new();
        for m in [16, 32] {
            let grid = GridSpec::new(4, 0.5, 20.0, m).unwrap();
            let u = gaussian(grid, [1.0, 0.5, -0.5, 0.25]);
            let s1 = symmetrize(&u, &group).unwrap();
            let s2 = symmetrize(&s1, &group).unwrap();
            let defect = s2.sub(&s1).unwrap().l2_norm() / s1.l2_norm();
            let predicted = predicted_interpolation_loss(&s1);
            assert!(defect <= 2.0 * predicted, "M={m}: {defect} vs {predicted}");
            // lattice-exact elements stay exact even when interpolated angles are averaged in
            let (ok, lattice_defect) = is_equivariant(&s1, &group.lattice_core(), 1e-10).unwrap();
            assert!(ok, "M={m}: {lattice_defect}");
            defects.push(defect);
        }
        assert!(defects[1] / defects[0] < 0.4, "{defects:?}");
    }

    #[test]
    fn symmetrize_is_idempotent_on_lattice_core() {
        let grid = grid4(6);
        let group = EquivariantGroup::family(4, 1).unwrap().lattice_core();
        let u = random_field(grid, 7);
        let s1 = symmetrize(&u, &group).unwrap();
        let s2 = symmetrize(&s1, &group).unwrap();
        assert!(s2.sub(&s1).unwrap().max_abs() <= 1e-12 * s1.max_abs());
        let (ok, defect) = is_equivariant(&s1, &group, 1e-8).unwrap();
        assert!(ok, "{defect}");
        assert!(s1.l2_norm() <= u.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn symmetrize_annihilates_radial_fields() {
        let grid = grid4(8);
        let group = EquivariantGroup::family(4, 1).unwrap();
        let b = bubble(&grid, &BubbleParams::centered(4, 1.0).unwrap()).unwrap();
        let s = symmetrize(&b, &group).unwrap();
        assert!(s.max_abs() < 1e-12 * b.max_abs());
        let (ok, defect) = is_equivariant(&b, &group.lattice_core(), 1e-8).unwrap();
        assert!(!ok);
        assert!((defect - 2.0).abs() < 1e-12, "{defect}");
    }

    #[test]
    fn off_center_bubble_is_not_equivariant() {
        let grid = grid4(8);
        let group = EquivariantGroup::family(4, 1).unwrap().lattice_core();
        let b = bubble(&grid, &BubbleParams::new(1.0, 1.0, vec![1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert!(!is_equivariant(&b, &group, 1e-8).unwrap().0);
        assert_eq!(is_equivariant(&Field::zeros(grid), &group, 1e-8), Err(Error::ZeroField));
    }

    #[test]
    fn radial_constraint_projects_trailing_block() {
        let grid = GridSpec::new(6, 0.5, 6.0, 4).unwrap();
        let group = EquivariantGroup::new(1, 6, 4, LambdaMode::RadialConstraint).unwrap();
        let u = random_field(grid, 9);
        let s = symmetrize(&u, &group).unwrap();
        let again = symmetrize(&s, &group).unwrap();
        assert!(again.sub(&s).unwrap().max_abs() < 1e-12);
        assert!(is_equivariant(&s, &group, 1e-10).unwrap().0);
    }

    #[test]
    fn assumption_check_g1_n4() {
        let grid = grid4(8);
        let report = assumption_check(&EquivariantGroup::family(4, 1).unwrap(), &grid).unwrap();
        assert_eq!(report.sampled_points, 1000);
        // only the origin is fixed when Lambda is trivial and N = 4
        assert!(report.fixed_points >= 1);
        assert_eq!(report.continuous_orbits + report.fixed_points, 1000);
        assert_eq!(&report.witness, &vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let g = EquivariantGroup::family(4, 1).unwrap();
        for e in g.block_subgroup() {
            assert_eq!(e.act(&[0.0; 4]), vec![0.0; 4]);
        }
    }

    fn quarter_turn_character(g: &GroupElement) -> f64 {
        let hit = g.thetas.iter().any(|&t| (t - FRAC_PI_2).abs() < 1e-12);
        if hit {
            -1.0
        } else {
            1.0
        }
    }

    #[test]
    fn corrupted_group_is_rejected() {
        let grid = grid4(6);
        let bad = EquivariantGroup::family(4, 1)
            .unwrap()
            .without_rho()
            .with_character(Character::Custom(quarter_turn_character));
        assert!(matches!(assumption_check(&bad, &grid), Err(Error::AssumptionViolated(_))));
        // rho removed with the standard character: sigma is trivial
        let trivial = EquivariantGroup::family(4, 1).unwrap().without_rho();
        assert!(matches!(assumption_check(&trivial, &grid), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn discrete_lambda_factor_violates_orbit_dichotomy() {
        // O(1) = {+1, -1} has finite orbits {y, -y}
        let grid = GridSpec::new(5, 0.5, 4.0, 4).unwrap();
        let g = EquivariantGroup::new(1, 5, 4, LambdaMode::RadialConstraint).unwrap();
        assert!(matches!(assumption_check(&g, &grid), Err(Error::AssumptionViolated(_))));
        let ok = EquivariantGroup::family(5, 1).unwrap();
        assert_eq!(ok.lambda_mode(), LambdaMode::Trivial);
        assert!(assumption_check(&ok, &grid).is_ok());
    }

    #[test]
    fn distinctness_guards() {
        let grid = grid4(4);
        let u = random_field(grid, 10);
        assert!(matches!(distinctness_check(&u, &u, 1, 1), Err(Error::InvalidParameter(_))));
        assert_eq!(distinctness_check(&u, &Field::zeros(grid), 1, 2), Err(Error::ZeroField));
        assert!(!distinctness_check(&u, &u, 1, 2).unwrap());
    }

    #[test]
    fn family_bounds() {
        assert!(EquivariantGroup::family(4, 2).is_err());
        assert!(EquivariantGroup::family(4, 0).is_err());
        assert_eq!(EquivariantGroup::family(8, 1).unwrap().lambda_mode(), LambdaMode::RadialConstraint);
        assert_eq!(EquivariantGroup::family(8, 2).unwrap().lambda_mode(), LambdaMode::Trivial);
        assert!(EquivariantGroup::new(1, 4, 6, LambdaMode::Trivial).is_err());
    }
}
