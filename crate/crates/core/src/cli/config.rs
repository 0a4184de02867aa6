//! Flat run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::equivariance::{EquivariantGroup, LambdaMode};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Every key is optional; absent keys fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub dim: Option<usize>,
    pub s: Option<f64>,
    #[serde(rename = "box")]
    pub box_length: Option<f64>,
    pub grid: Option<usize>,
    pub group_j: Option<usize>,
    pub theta_samples: Option<usize>,
    pub lambda_mode: Option<String>,
    pub init: Option<String>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl PartialConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Default,
    File,
    Flag,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Default => "default",
            Provenance::File => "file",
            Provenance::Flag => "flag",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    RandomBump,
    BubbleSeeded,
    /// Field file read at solve time.
    UserField(PathBuf),
}

impl InitSpec {
    fn parse(text: &str) -> Result<Self> {
        match text {
            "random_bump" => Ok(InitSpec::RandomBump),
            "bubble_seeded" => Ok(InitSpec::BubbleSeeded),
            other => match other.strip_prefix("user_field:") {
                Some(path) if !path.is_empty() => Ok(InitSpec::UserField(PathBuf::from(path))),
                _ => Err(Error::Config(format!(
                    "init must be random_bump, bubble_seeded or user_field:<path>, got {other:?}"
                ))),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InitSpec::RandomBump => "random_bump".into(),
            InitSpec::BubbleSeeded => "bubble_seeded".into(),
            InitSpec::UserField(p) => format!("user_field:{}", p.display()),
        }
    }
}

/// Fully resolved configuration with the layer each key came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub s: f64,
    pub box_length: f64,
    pub grid: usize,
    /// 0 means no symmetry group.
    pub group_j: usize,
    pub theta_samples: usize,
    /// `None` selects the default for `G_j` (trivial when `j = floor(N/4)`).
    pub lambda_mode: Option<LambdaMode>,
    pub init: InitSpec,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub out_dir: PathBuf,
    pub provenance: Vec<(&'static str, Provenance)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            s: 0.5,
            box_length: 40.0,
            grid: 128,
            group_j: 0,
            theta_samples: EquivariantGroup::DEFAULT_THETA_SAMPLES,
            lambda_mode: None,
            init: InitSpec::RandomBump,
            seed: 0,
            max_iter: 5000,
            tol: 1e-6,
            out_dir: PathBuf::from("."),
            provenance: Self::KEYS.iter().map(|&k| (k, Provenance::Default)).collect(),
        }
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 12] = [
        "dim",
        "s",
        "box",
        "grid",
        "group_j",
        "theta_samples",
        "lambda_mode",
        "init",
        "seed",
        "max_iter",
        "tol",
        "out_dir",
    ];

    /// Defaults, overridden by `file`, overridden by `flags`.
    pub fn resolve(file: Option<&PartialConfig>, flags: &PartialConfig) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(f) = file {
            cfg.apply(f, Provenance::File)?;
        }
        cfg.apply(flags, Provenance::Flag)?;
        Ok(cfg)
    }

    fn mark(&mut self, key: &str, p: Provenance) {
        if let Some(slot) = self.provenance.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = p;
        }
    }

    fn apply(&mut self, layer: &PartialConfig, p: Provenance) -> Result<()> {
        macro_rules! take {
            ($field:ident, $key:literal) => {
                if let Some(v) = layer.$field.clone() {
                    self.$field = v;
                    self.mark($key, p);
                }
            };
        }
        take!(dim, "dim");
        take!(s, "s");
        take!(box_length, "box");
        take!(grid, "grid");
        take!(group_j, "group_j");
        take!(theta_samples, "theta_samples");
        take!(seed, "seed");
        take!(max_iter, "max_iter");
        take!(tol, "tol");
        take!(out_dir, "out_dir");
        if let Some(mode) = &layer.lambda_mode {
            self.lambda_mode = Some(mode.parse()?);
            self.mark("lambda_mode", p);
        }
        if let Some(init) = &layer.init {
            self.init = InitSpec::parse(init)?;
            self.mark("init", p);
        }
        Ok(())
    }

    pub fn provenance_of(&self, key: &str) -> Provenance {
        self.provenance
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, p)| *p)
            .unwrap_or(Provenance::Default)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.s, self.box_length, self.grid)
    }

    pub fn group(&self) -> Result<Option<EquivariantGroup>> {
        if self.group_j == 0 {
            return Ok(None);
        }
        let base = EquivariantGroup::family(self.dim, self.group_j)?;
        let mode = self.lambda_mode.unwrap_or(base.lambda_mode());
        Ok(Some(EquivariantGroup::new(self.group_j, self.dim, self.theta_samples, mode)?))
    }

    pub fn lambda_mode_name(&self) -> String {
        match self.lambda_mode {
            Some(m) => m.as_str().to_string(),
            None => "auto".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_and_provenance() {
        let file = PartialConfig::from_toml("dim = 4\ns = 0.5\nbox = 8.0\ngrid = 16\ntol = 1e-5\n").unwrap();
        let flags = PartialConfig {
            grid: Some(24),
            seed: Some(3),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!((cfg.dim, cfg.grid, cfg.seed, cfg.max_iter), (4, 24, 3, 5000));
        assert_eq!(cfg.tol, 1e-5);
        assert_eq!(cfg.provenance_of("grid"), Provenance::Flag);
        assert_eq!(cfg.provenance_of("box"), Provenance::File);
        assert_eq!(cfg.provenance_of("max_iter"), Provenance::Default);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(PartialConfig::from_toml("dimension = 3"), Err(Error::Config(_))));
        assert!(matches!(PartialConfig::from_toml("dim = \"four\""), Err(Error::Config(_))));
        let bad = PartialConfig {
            init: Some("spiral".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, &bad).is_err());
        let bad = PartialConfig {
            lambda_mode: Some("haar".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, &bad).is_err());
    }

    #[test]
    fn floats_round_trip_losslessly() {
        let tol = 1.234_567_890_123_456_7e-7;
        let text = format!("tol = {tol:?}\nbox = 0.1\n");
        let p = PartialConfig::from_toml(&text).unwrap();
        assert_eq!(p.tol, Some(tol));
        assert_eq!(p.box_length, Some(0.1));
    }

    #[test]
    fn init_spec() {
        assert_eq!(InitSpec::parse("bubble_seeded").unwrap(), InitSpec::BubbleSeeded);
        assert_eq!(
            InitSpec::parse("user_field:a/b.fblf").unwrap(),
            InitSpec::UserField(PathBuf::from("a/b.fblf"))
        );
        assert!(InitSpec::parse("user_field:").is_err());
    }
}
