//! Energy `E(u) = Q(u)/2 - P(u)/p` and Nehari functional `N(u) = Q(u) - P(u)`
//! with `Q = quadratic_form`, `P = int |u|^p`, `p = 2*_s`, together with the
//! Nehari projection and a projected-gradient solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equivariance::{assumption_check, equivariance_defect, EquivariantGroup, Symmetrizer};
use crate::error::{Error, Result};
use crate::fractional::{bubble, fractional_laplacian, quadratic_form, BubbleParams};
use crate::grid::{integrate_power, Field, GridSpec};

pub fn energy(u: &Field) -> f64 {
    let p = u.grid().critical_exponent();
    0.5 * quadratic_form(u) - integrate_power(u, p) / p
}

pub fn nehari_value(u: &Field) -> f64 {
    let p = u.grid().critical_exponent();
    quadratic_form(u) - integrate_power(u, p)
}

/// `t* = (Q/P)^{1/(p-2)}`, the unique `t > 0` with `N(t u) = 0`.
pub fn nehari_scale(u: &Field) -> Result<f64> {
    let p = u.grid().critical_exponent();
    let pw = integrate_power(u, p);
    if pw == 0.0 {
        return Err(Error::ZeroField);
    }
    let q = quadratic_form(u);
    if q <= 0.0 {
        return Err(Error::DegenerateIterate(
            "quadratic form vanishes (constant field), the ray never meets the Nehari manifold".into(),
        ));
    }
    Ok((q / pw).powf(1.0 / (p - 2.0)))
}

pub fn nehari_project(u: &Field) -> Result<Field> {
    Ok(u.scaled(nehari_scale(u)?))
}

/// `(-Delta)^s u - |u|^{p-2} u`, the gradient for the pairing `h^N sum`.
pub fn energy_gradient(u: &Field) -> Field {
    gradient_parts(u).0
}

/// Gradient together with `Q(u)` read off the same transform.
fn gradient_parts(u: &Field) -> (Field, f64) {
    let p = u.grid().critical_exponent();
    let lap = fractional_laplacian(u);
    let q = u.inner(&lap).expect("same grid");
    let values = lap
        .values()
        .iter()
        .zip(u.values())
        .map(|(l, &v)| l - v.abs().powf(p - 2.0) * v)
        .collect();
    (Field::from_parts(*u.grid(), values), q)
}

/// `E(t u) = Q(u) (t^2/2 - t^p/p)` for `u` on the Nehari manifold.
pub fn energy_along_ray(u: &Field, t: f64) -> Result<f64> {
    let p = u.grid().critical_exponent();
    let q = quadratic_form(u);
    let n = q - integrate_power(u, p);
    if n.abs() > 1e-6 * q {
        return Err(Error::NotOnManifold {
            ratio: if q > 0.0 { n.abs() / q } else { f64::INFINITY },
        });
    }
    Ok(q * (0.5 * t * t - t.abs().powf(p) / p))
}

/// Starting point of [`descent_solve`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Three Gaussian bumps of width `L/8` with random centers in
    /// `[-L/4, L/4]^N` and random signs.
    RandomBump,
    /// Unit bubble with `lambda = L/40`, centered at the origin on the first
    /// draw and at a random point of `[-L/8, L/8]^N` on redraws.
    BubbleSeeded,
    UserField(Field),
}

impl InitialGuess {
    pub fn name(&self) -> &'static str {
        match self {
            InitialGuess::RandomBump => "random_bump",
            InitialGuess::BubbleSeeded => "bubble_seeded",
            InitialGuess::UserField(_) => "user_field",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub max_iterations: usize,
    /// Target for `||grad E(u)|| / ||u||`.
    pub gradient_tolerance: f64,
    /// Initial step length.
    pub step_size: f64,
    pub backtracking_factor: f64,
    pub seed: u64,
    pub group: Option<EquivariantGroup>,
    pub init: InitialGuess,
}

impl SolverConfig {
    pub const ARMIJO: f64 = 1e-4;
    pub const MAX_REDRAWS: u64 = 16;
    pub const MAX_BACKTRACKS: usize = 60;

    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            max_iterations: 5000,
            gradient_tolerance: 1e-6,
            step_size: 1.0,
            backtracking_factor: 0.5,
            seed: 0,
            group: None,
            init: InitialGuess::RandomBump,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gradient_tolerance > 0.0) {
            return bad(format!("gradient tolerance {} must be positive", self.gradient_tolerance));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size {} must be positive", self.step_size));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return bad(format!("backtracking factor {} not in (0, 1)", self.backtracking_factor));
        }
        if let InitialGuess::UserField(f) = &self.init {
            if *f.grid() != self.grid {
                return Err(Error::GridMismatch);
            }
        }
        if let Some(g) = &self.group {
            if g.dimension() != self.grid.dimension() {
                return bad(format!(
                    "group acts on R^{}, grid has dimension {}",
                    g.dimension(),
                    self.grid.dimension()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub energy: f64,
    pub nehari_value: f64,
    /// `||grad E(u)|| / ||u||` in the discrete `L^2` norm.
    pub gradient_residual: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub sign_changing: bool,
    /// Worst relative defect under the lattice-exact generators of the group; 0 without a group.
    pub equivariance_defect: f64,
    /// Seed of the initial draw that survived symmetrization.
    pub effective_seed: u64,
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub nehari_value: f64,
    pub gradient_residual: f64,
    pub min_value: f64,
    pub max_value: f64,
}

/// `min < -delta` and `max > delta` with `delta = 1e-6 max |u|`.
pub fn is_sign_changing(u: &Field) -> bool {
    let delta = 1e-6 * u.max_abs();
    u.max_abs() > 0.0 && u.min() < -delta && u.max() > delta
}

fn gaussian_bumps(grid: &GridSpec, rng: &mut ChaCha8Rng) -> Result<Field> {
    let l = grid.box_length();
    let width = l / 8.0;
    let bumps: Vec<(Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let c = (0..grid.dimension()).map(|_| rng.gen_range(-l / 4.0..l / 4.0)).collect();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (c, sign)
        })
        .collect();
    Field::from_fn(*grid, |x| {
        bumps
            .iter()
            .map(|(c, sign)| {
                let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                sign * (-0.5 * r2 / (width * width)).exp()
            })
            .sum()
    })
}

fn draw_initial(config: &SolverConfig, draw: u64) -> Result<Field> {
    let grid = &config.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(draw));
    match &config.init {
        InitialGuess::RandomBump => gaussian_bumps(grid, &mut rng),
        InitialGuess::BubbleSeeded => {
            let l = grid.box_length();
            let center = if draw == 0 {
                vec![0.0; grid.dimension()]
            } else {
                (0..grid.dimension()).map(|_| rng.gen_range(-l / 8.0..l / 8.0)).collect()
            };
            bubble(grid, &BubbleParams::new(1.0, l / 40.0, center)?)
        }
        InitialGuess::UserField(f) => Ok(f.clone()),
    }
}

struct State {
    u: Field,
    gradient: Field,
    energy: f64,
    nehari: f64,
    quadratic: f64,
    residual: f64,
}

impl State {
    fn new(u: Field) -> Self {
        let (gradient, quadratic) = gradient_parts(&u);
        let p = u.grid().critical_exponent();
        let pw = integrate_power(&u, p);
        let residual = gradient.l2_norm() / u.l2_norm();
        Self {
            energy: 0.5 * quadratic - pw / p,
            nehari: quadratic - pw,
            quadratic,
            residual,
            gradient,
            u,
        }
    }

    fn record(&self, iteration: usize) -> IterationRecord {
        IterationRecord {
            iteration,
            energy: self.energy,
            nehari_value: self.nehari,
            gradient_residual: self.residual,
            min_value: self.u.min(),
            max_value: self.u.max(),
        }
    }
}

/// [`descent_solve_with_log`] without a log consumer.
pub fn descent_solve(config: &SolverConfig) -> Result<(Field, SolverReport)> {
    descent_solve_with_log(config, |_| {})
}

/// Projected gradient descent on the Nehari manifold:
/// `u_{k+1} = P_N(S(u_k - alpha_k grad E(u_k)))` with `S` the group average
/// (identity without a group), `P_N` the Nehari projection, and `alpha_k`
/// chosen by Armijo backtracking on `E`. The step grows by
/// `1/backtracking_factor` after every accepted step.
///
/// `log` receives the initial state (iteration 0) and every accepted iterate.
pub fn descent_solve_with_log<F: FnMut(&IterationRecord)>(
    config: &SolverConfig,
    mut log: F,
) -> Result<(Field, SolverReport)> {
    config.validate()?;
    let symmetrizer = match &config.group {
        Some(g) => {
            assumption_check(g, &config.grid)?;
            Some(Symmetrizer::new(g, &config.grid)?)
        }
        None => None,
    };
    let sym = |f: &Field| -> Result<Field> {
        match &symmetrizer {
            Some(s) => s.apply(f),
            None => Ok(f.clone()),
        }
    };

    let mut start = None;
    let redraws = match config.init {
        InitialGuess::UserField(_) => 1,
        _ => SolverConfig::MAX_REDRAWS,
    };
    for draw in 0..redraws {
        let raw = draw_initial(config, draw)?;
        let projected = sym(&raw)?;
        if projected.l2_norm() > 1e-10 * raw.l2_norm() {
            start = Some((nehari_project(&projected)?, draw));
            break;
        }
    }
    let (u0, draw) = start.ok_or_else(|| {
        Error::DegenerateIterate("symmetrization annihilates every initial draw".into())
    })?;

    let mut state = State::new(u0);
    let initial_energy = state.energy;
    let initial_quadratic = state.quadratic;
    log(&state.record(0));

    let tol = config.gradient_tolerance;
    let is_converged = |s: &State| s.residual <= tol && s.nehari.abs() <= tol * s.quadratic;
    let mut alpha = config.step_size;
    let mut iterations = 0;
    while iterations < config.max_iterations && !is_converged(&state) {
        let direction = sym(&state.gradient)?;
        let slope = state.gradient.inner(&direction)?;
        if !(slope > 0.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..SolverConfig::MAX_BACKTRACKS {
            let trial = state.u.add_scaled(-alpha, &direction)?;
            let candidate = nehari_project(&trial)?;
            let e = energy(&candidate);
            if e <= state.energy - SolverConfig::ARMIJO * alpha * slope {
                accepted = Some(candidate);
                break;
            }
            alpha *= config.backtracking_factor;
        }
        let Some(next) = accepted else {
            // line search exhausted: the step cannot decrease E at working precision
            break;
        };
        iterations += 1;
        if next.l2_norm() < 1e-12 {
            return Err(Error::DegenerateIterate(format!("||u|| < 1e-12 at iteration {iterations}")));
        }
        state = State::new(next);
        if state.quadratic < 1e-12 * initial_quadratic {
            return Err(Error::DegenerateIterate(format!(
                "quadratic form fell below 1e-12 of its initial value at iteration {iterations}"
            )));
        }
        if !state.energy.is_finite() || state.energy > 1e6 * initial_energy.abs() {
            return Err(Error::Diverged {
                iteration: iterations,
                energy: state.energy,
            });
        }
        log(&state.record(iterations));
        alpha /= config.backtracking_factor;
    }

    let defect = match &config.group {
        Some(g) => equivariance_defect(&state.u, &g.lattice_core())?,
        None => 0.0,
    };
    let report = SolverReport {
        energy: state.energy,
        nehari_value: state.nehari,
        gradient_residual: state.residual,
        min_value: state.u.min(),
        max_value: state.u.max(),
        iterations,
        converged: config.max_iterations > 0 && is_converged(&state),
        sign_changing: is_sign_changing(&state.u),
        equivariance_defect: defect,
        effective_seed: config.seed.wrapping_add(draw),
    };
    Ok((state.u, report))
}
