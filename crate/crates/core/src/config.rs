//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::FreqSource;
use crate::error::{Error, Result};
use crate::forward::{Excitation, Scenario};
use crate::fracop::{EllipticTensor, SigmaPreset};
use crate::grid::{Grid, GridSpec};
use crate::inverse::PotentialOptions;
use crate::io;
use crate::linalg;
use crate::scenarios::{self, ExcitationSpec, QPreset, SourcePreset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub grid: GridSpec,
    pub operator: OperatorConfig,
    pub medium: MediumConfig,
    pub frequencies: FrequencyConfig,
    pub asymptotics: RangeConfig,
    pub excitations: ExcitationConfig,
    pub regularization: RangeConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub s: f64,
    pub sigma: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub q: String,
    pub source: String,
    pub omega0: f64,
}

/// Frequency grid of the `sweep` dataset and the polynomial fit used for
/// source inversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub fit_degree: usize,
    /// Frequency of the single `forward` and `dtn` solves.
    pub probe: f64,
}

/// Logarithmic range `min..=max` with `points` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl RangeConfig {
    pub fn values(&self) -> Vec<f64> {
        linalg::logspace(self.min, self.max, self.points)
    }

    fn validate(&self, what: &str, upper: Option<f64>) -> Result<()> {
        if !(self.min > 0.0) || !self.max.is_finite() || self.max < self.min {
            return Err(Error::Config(format!(
                "{what}: need 0 < min <= max, got min = {}, max = {}",
                self.min, self.max
            )));
        }
        if self.points == 0 || (self.points == 1 && self.max != self.min) {
            return Err(Error::Config(format!("{what}: points must be at least 2 for a range")));
        }
        if let Some(top) = upper {
            if self.max > top {
                return Err(Error::Config(format!(
                    "{what}: max = {} exceeds omega0 = {top}",
                    self.max
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub count: usize,
    pub include_zero: bool,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub reg: f64,
    pub omegas: Vec<f64>,
    pub max_iter: usize,
    pub step_tol: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Relative standard deviation of additive Gaussian noise.
    pub level: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let s = self.operator.s;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Config(format!("operator.s must lie in (0, 1), got {s}")));
        }
        SigmaPreset::parse(&self.operator.sigma)?;
        QPreset::parse(&self.medium.q)?;
        SourcePreset::parse(&self.medium.source)?;
        let omega0 = self.medium.omega0;
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::Config("medium.omega0 must be positive".into()));
        }
        let f = &self.frequencies;
        RangeConfig {
            min: f.min,
            max: f.max,
            points: f.points,
        }
        .validate("frequencies", Some(omega0))?;
        if f.points < f.fit_degree + 2 {
            return Err(Error::Config(format!(
                "frequencies.points = {} is too few for fit_degree = {}",
                f.points, f.fit_degree
            )));
        }
        if !(f.probe > 0.0 && f.probe <= omega0) {
            return Err(Error::Config(format!(
                "frequencies.probe = {} must lie in (0, omega0]",
                f.probe
            )));
        }
        self.asymptotics.validate("asymptotics", Some(omega0))?;
        self.regularization.validate("regularization", None)?;
        if !(self.excitations.width > 0.0) {
            return Err(Error::Config("excitations.width must be positive".into()));
        }
        if self.excitations.count == 0 && !self.excitations.include_zero {
            return Err(Error::Config("the excitation set is empty".into()));
        }
        let p = &self.potential;
        if p.omegas.is_empty() || p.omegas.iter().any(|&w| !(w > 0.0 && w <= omega0)) {
            return Err(Error::Config(
                "potential.omegas must be a nonempty list in (0, omega0]".into(),
            ));
        }
        if !(p.reg >= 0.0) || !(p.step_tol > 0.0) || p.max_iter == 0 {
            return Err(Error::Config(
                "potential: need reg >= 0, step_tol > 0 and max_iter > 0".into(),
            ));
        }
        if !(self.noise.level >= 0.0) || !self.noise.level.is_finite() {
            return Err(Error::Config("noise.level must be nonnegative".into()));
        }
        Ok(())
    }

    /// Same configuration with presets rewritten in canonical form.
    pub fn canonical(&self) -> Result<Self> {
        let mut c = self.clone();
        c.operator.sigma = SigmaPreset::parse(&c.operator.sigma)?.canonical();
        c.medium.q = QPreset::parse(&c.medium.q)?.canonical();
        c.medium.source = SourcePreset::parse(&c.medium.source)?.canonical();
        Ok(c)
    }

    /// SHA-256 of the canonical TOML with the output directory cleared.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.canonical()?;
        c.output_dir.clear();
        let digest = Sha256::digest(c.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn output_path(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::build(&self.grid)
    }

    pub fn q_preset(&self) -> Result<QPreset> {
        QPreset::parse(&self.medium.q)
    }

    pub fn source(&self, grid: &Grid) -> Result<FreqSource> {
        SourcePreset::parse(&self.medium.source)?.build(grid)
    }

    /// Assemble the scenario described by the configuration.
    pub fn build_scenario(&self) -> Result<Scenario> {
        let grid = self.build_grid()?;
        let sigma = EllipticTensor::from_preset(&grid, &SigmaPreset::parse(&self.operator.sigma)?, None)?;
        let q = self.q_preset()?.values(&grid);
        let source = self.source(&grid)?;
        Scenario::new(grid, sigma, self.operator.s, q, source, self.medium.omega0)
    }

    pub fn excitation_spec(&self) -> ExcitationSpec {
        ExcitationSpec {
            count: self.excitations.count,
            include_zero: self.excitations.include_zero,
            width: self.excitations.width,
        }
    }

    pub fn excitations(&self, grid: &Grid) -> Result<Vec<Excitation>> {
        scenarios::excitations(grid, &self.excitation_spec())
    }

    pub fn sweep_omegas(&self) -> Vec<f64> {
        linalg::logspace(self.frequencies.min, self.frequencies.max, self.frequencies.points)
    }

    pub fn regs(&self) -> Vec<f64> {
        self.regularization.values()
    }

    pub fn potential_options(&self) -> PotentialOptions {
        PotentialOptions {
            reg: self.potential.reg,
            max_iter: self.potential.max_iter,
            step_tol: self.potential.step_tol,
            ..PotentialOptions::default()
        }
    }
}

/// The shipped one-dimensional configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::from_toml(DEFAULT_CONFIG).unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint().unwrap(), cfg.fingerprint().unwrap());
        assert_eq!(cfg.fingerprint().unwrap().len(), 64);
    }

    #[test]
    fn fingerprint_ignores_output_dir_and_preset_spelling() {
        let cfg = RunConfig::from_toml(DEFAULT_CONFIG).unwrap();
        let mut other = cfg.clone();
        other.output_dir = "elsewhere".into();
        other.medium.q = format!(" {} ", cfg.medium.q);
        assert_eq!(other.fingerprint().unwrap(), cfg.fingerprint().unwrap());
        other.seed += 1;
        assert_ne!(other.fingerprint().unwrap(), cfg.fingerprint().unwrap());
    }

    #[test]
    fn validation_errors() {
        let bad = DEFAULT_CONFIG.replace("s = 0.5", "s = 1.5");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = DEFAULT_CONFIG.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = DEFAULT_CONFIG.replace("[noise]", "[noise]\nbogus = 1");
        let err = RunConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
