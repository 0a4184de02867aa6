//! Command-line front end. [`run`] parses arguments, dispatches a
//! subcommand, and returns the process exit status:
//! 0 success, 1 usage/parse/format error, 2 domain error, 3 solver failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::concentration::{concentration_profile, concentration_scale};
use crate::error::{Error, Result};
use crate::fractional::{
    bubble, bubble_pde_residual, dirichlet_constant, sobolev_constant, sobolev_quotient, BubbleParams,
};
use crate::grid::{critical_exponent, integrate_power, Field};
use crate::variational::{descent_solve_with_log, nehari_scale, InitialGuess, IterationRecord, SolverConfig};

use config::{InitSpec, PartialConfig, RunConfig};
use output::{fmt_num, read_field, write_field, JsonObject};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fraclab", version, about = "Fractional critical equation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print C(N,s), S(N,s) and the critical exponent.
    Constants {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        s: f64,
    },
    /// Sample the bubble, compare its Sobolev quotient with S(N,s), fit the PDE residual.
    BubbleCheck(RunArgs),
    /// Run the Nehari-constrained descent.
    Solve(RunArgs),
    /// Concentration profile and scales of a stored field.
    Diagnose(DiagnoseArgs),
}

/// Flags mirroring the configuration keys; each overrides the file.
#[derive(Debug, Args, Default)]
struct RunArgs {
    /// TOML file with flat keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long = "box")]
    box_length: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    group_j: Option<usize>,
    #[arg(long)]
    theta_samples: Option<usize>,
    #[arg(long)]
    lambda_mode: Option<String>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => Some(PartialConfig::from_file(p)?),
            None => None,
        };
        let flags = PartialConfig {
            dim: self.dim,
            s: self.s,
            box_length: self.box_length,
            grid: self.grid,
            group_j: self.group_j,
            theta_samples: self.theta_samples,
            lambda_mode: self.lambda_mode.clone(),
            init: self.init.clone(),
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            out_dir: self.out_dir.clone(),
        };
        RunConfig::resolve(file.as_ref(), &flags)
    }
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Field file written by `solve` or `bubble-check`.
    #[arg(long)]
    field: PathBuf,
    /// Target masses as fractions of the total mass, comma separated, each in (0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    deltas: Vec<f64>,
    /// Number of radii in the profile, evenly spaced on (0, L/2].
    #[arg(long, default_value_t = 32)]
    radii: usize,
    #[arg(long = "out", default_value = ".")]
    out_dir: PathBuf,
}

/// Parse `args` (including the program name) and run; returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(stderr, "{e}");
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = match &cli.command {
        Command::Constants { dim, s } => cmd_constants(*dim, *s, stdout),
        Command::BubbleCheck(a) => a.resolve().and_then(|c| cmd_bubble_check(&c, stdout)),
        Command::Solve(a) => a.resolve().and_then(|c| cmd_solve(&c, stdout)),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_status(&cli.command, &e)
        }
    }
}

fn exit_status(command: &Command, e: &Error) -> i32 {
    match e {
        Error::Domain(_) => EXIT_DOMAIN,
        Error::Diverged { .. } | Error::DegenerateIterate(_) | Error::NotOnManifold { .. } => EXIT_SOLVER,
        Error::AssumptionViolated(_) if matches!(command, Command::Solve(_)) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

/// `x` with 12 significant digits in positional notation.
pub fn significant12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&magnitude) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn cmd_constants(dim: usize, s: f64, out: &mut dyn Write) -> Result<()> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let c = dirichlet_constant(dim, s)?;
    writeln!(out, "N = {dim}, s = {s}")?;
    writeln!(out, "C(N,s) = {}", significant12(c))?;
    if (dim as f64) > 2.0 * s {
        writeln!(out, "S(N,s) = {}", significant12(sobolev_constant(dim, s)?))?;
        writeln!(out, "2*_s = {}", significant12(critical_exponent(dim, s)))?;
    } else {
        writeln!(out, "S(N,s) = undefined (N <= 2s)")?;
        writeln!(out, "2*_s = undefined (N <= 2s)")?;
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Resolved configuration with the layer each key came from.
fn config_json(cfg: &RunConfig) -> (JsonObject, JsonObject) {
    let values = JsonObject::new()
        .int("dim", cfg.dim as u64)
        .num("s", cfg.s)
        .num("box", cfg.box_length)
        .int("grid", cfg.grid as u64)
        .int("group_j", cfg.group_j as u64)
        .int("theta_samples", cfg.theta_samples as u64)
        .str("lambda_mode", &cfg.lambda_mode_name())
        .str("init", &cfg.init.describe())
        .int("seed", cfg.seed)
        .int("max_iter", cfg.max_iter as u64)
        .num("tol", cfg.tol)
        .str("out_dir", &cfg.out_dir.display().to_string());
    let provenance = RunConfig::KEYS
        .iter()
        .fold(JsonObject::new(), |o, k| o.str(k, cfg.provenance_of(k).as_str()));
    (values, provenance)
}

fn cmd_bubble_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let grid = cfg.grid_spec()?;
    let params = BubbleParams::centered(cfg.dim, 1.0)?;
    let w = bubble(&grid, &params)?;
    let sharp = sobolev_constant(cfg.dim, cfg.s)?;
    let quotient = sobolev_quotient(&w)?;
    let fit = bubble_pde_residual(&grid, &params)?;
    let fitted = w.scaled(fit.best_mu);
    let t_star = nehari_scale(&fitted)?;
    let warning = fit.check_decay().err();

    ensure_dir(&cfg.out_dir)?;
    write_field(&cfg.out_dir.join("bubble.fblf"), &w)?;
    let (values, provenance) = config_json(cfg);
    let mut result = JsonObject::new()
        .num("sobolev_quotient", quotient)
        .num("sharp_constant", sharp)
        .num("relative_gap", (sharp - quotient) / sharp)
        .num("best_mu", fit.best_mu)
        .num("residual", fit.residual)
        .num("mean_free_residual", fit.mean_free_residual)
        .num("boundary_ratio", fit.boundary_ratio)
        .num("nehari_scale_at_best_mu", t_star);
    result = match &warning {
        Some(e) => result.str("warning", &e.to_string()),
        None => result.null("warning"),
    };
    let report = JsonObject::new()
        .str("command", "bubble-check")
        .object("config", values)
        .object("provenance", provenance)
        .object("result", result);
    write_text(&cfg.out_dir.join("bubble_report.json"), &report.to_json())?;

    writeln!(out, "sobolev quotient   = {}", fmt_num(quotient))?;
    writeln!(out, "S(N,s)             = {}", fmt_num(sharp))?;
    writeln!(out, "relative gap       = {}", fmt_num((sharp - quotient) / sharp))?;
    writeln!(out, "pde residual       = {} (best mu {})", fmt_num(fit.residual), fmt_num(fit.best_mu))?;
    writeln!(out, "nehari scale       = {}", fmt_num(t_star))?;
    if let Some(e) = warning {
        writeln!(out, "warning: {e}")?;
    }
    Ok(())
}

/// Convergence log as CSV text.
pub fn convergence_csv(records: &[IterationRecord]) -> String {
    let mut s = String::from("iter,energy,nehari,grad_residual,min_u,max_u\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration,
            fmt_num(r.energy),
            fmt_num(r.nehari_value),
            fmt_num(r.gradient_residual),
            fmt_num(r.min_value),
            fmt_num(r.max_value)
        ));
    }
    s
}

fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let grid = cfg.grid_spec()?;
    let group = cfg.group()?;
    let init = match &cfg.init {
        InitSpec::RandomBump => InitialGuess::RandomBump,
        InitSpec::BubbleSeeded => InitialGuess::BubbleSeeded,
        InitSpec::UserField(p) => {
            let f = read_field(p)?;
            if *f.grid() != grid {
                return Err(Error::Config(format!("{} does not match the configured grid", p.display())));
            }
            InitialGuess::UserField(f)
        }
    };
    let mut solver = SolverConfig::new(grid);
    solver.max_iterations = cfg.max_iter;
    solver.gradient_tolerance = cfg.tol;
    solver.seed = cfg.seed;
    solver.group = group;
    solver.init = init;

    ensure_dir(&cfg.out_dir)?;
    let mut records = Vec::new();
    let (u, report) = descent_solve_with_log(&solver, |r| records.push(*r))?;
    write_field(&cfg.out_dir.join("field.fblf"), &u)?;
    write_text(&cfg.out_dir.join("convergence.csv"), &convergence_csv(&records))?;
    let (values, provenance) = config_json(cfg);
    let result = JsonObject::new()
        .num("energy", report.energy)
        .num("nehari_value", report.nehari_value)
        .num("gradient_residual", report.gradient_residual)
        .num("min_value", report.min_value)
        .num("max_value", report.max_value)
        .int("iterations", report.iterations as u64)
        .bool("converged", report.converged)
        .bool("sign_changing", report.sign_changing)
        .num("equivariance_defect", report.equivariance_defect)
        .int("effective_seed", report.effective_seed);
    let json = JsonObject::new()
        .str("command", "solve")
        .object("config", values)
        .object("provenance", provenance)
        .object("result", result);
    write_text(&cfg.out_dir.join("report.json"), &json.to_json())?;

    writeln!(
        out,
        "iterations {} converged {} energy {} residual {} sign_changing {} equivariance_defect {}",
        report.iterations,
        report.converged,
        fmt_num(report.energy),
        fmt_num(report.gradient_residual),
        report.sign_changing,
        fmt_num(report.equivariance_defect)
    )?;
    Ok(())
}

fn point_columns(n: usize) -> String {
    (1..=n).map(|a| format!(",z{a}")).collect()
}

fn point_values(z: &[f64]) -> String {
    z.iter().map(|v| format!(",{}", fmt_num(*v))).collect()
}

fn cmd_diagnose(args: &DiagnoseArgs, out: &mut dyn Write) -> Result<()> {
    let u: Field = read_field(&args.field)?;
    let grid = *u.grid();
    if args.radii == 0 {
        return Err(Error::Config("need at least one radius".into()));
    }
    let half = 0.5 * grid.box_length();
    let radii: Vec<f64> = (1..=args.radii).map(|i| half * i as f64 / args.radii as f64).collect();
    let profile = concentration_profile(&u, &radii)?;
    let n = grid.dimension();

    let mut csv = format!("r,Q{}\n", point_columns(n));
    for ((r, q), z) in profile.radii.iter().zip(&profile.values).zip(&profile.centers) {
        csv.push_str(&format!("{},{}{}\n", fmt_num(*r), fmt_num(*q), point_values(z)));
    }
    ensure_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("profile.csv"), &csv)?;

    let total = integrate_power(&u, grid.critical_exponent());
    let mut scales = format!("delta_fraction,delta,r,mass,support_distance,center_near_support{}\n", point_columns(n));
    for &f in &args.deltas {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("delta fraction {f} not in (0, 1)")));
        }
        let sc = concentration_scale(&u, f * total)?;
        scales.push_str(&format!(
            "{},{},{},{},{},{}{}\n",
            fmt_num(f),
            fmt_num(f * total),
            fmt_num(sc.radius),
            fmt_num(sc.mass),
            fmt_num(sc.support_distance),
            sc.center_near_support,
            point_values(&sc.center)
        ));
    }
    write_text(&args.out_dir.join("scales.csv"), &scales)?;
    writeln!(out, "total mass {}", fmt_num(total))?;
    write!(out, "{scales}")?;
    Ok(())
}
