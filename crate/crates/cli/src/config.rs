//! Run configuration: defaults, then a `key=value` file, then overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segbump_core::corrections::SystemKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GroundState,
    Corrections,
    Constants,
    Landscape,
    Optimize,
    Assemble,
    VerifyScaling,
    ThreeSystem,
    ReproduceTable,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GroundState => "ground-state",
            Mode::Corrections => "corrections",
            Mode::Constants => "constants",
            Mode::Landscape => "landscape",
            Mode::Optimize => "optimize",
            Mode::Assemble => "assemble",
            Mode::VerifyScaling => "verify-scaling",
            Mode::ThreeSystem => "three-system",
            Mode::ReproduceTable => "reproduce-table",
        }
    }
}

/// Anything wrong with the configuration itself. The binary exits with 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Numerical parameters of a run. Paths live in `RunConfig`, so that this
/// part can be echoed into reports without breaking byte identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub epsilon: Vec<f64>,
    pub ell: Option<usize>,
    /// `None` picks 1.5 for three components at `ℓ = 2` and 1 otherwise.
    pub mu: Option<f64>,
    pub system: SystemKind,
    pub r_max: f64,
    pub n_points: usize,
    pub shoot_tol: f64,
    /// Family used to measure the interaction constants.
    pub constants_epsilon: f64,
    pub samples: usize,
    pub n_plane: usize,
    pub n_vertical: usize,
    pub newton: bool,
    /// Exponents of the geometric ladder `10^{-from} … 10^{-to}`.
    pub ladder_from: i32,
    pub ladder_to: i32,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            epsilon: Vec::new(),
            ell: None,
            mu: None,
            system: SystemKind::Two,
            r_max: 25.0,
            n_points: 5001,
            shoot_tol: 1e-10,
            constants_epsilon: 0.05,
            samples: 200,
            n_plane: 96,
            n_vertical: 64,
            newton: false,
            ladder_from: 4,
            ladder_to: 12,
        }
    }
}

impl Parameters {
    pub fn mu_for(&self, system: SystemKind, ell: usize) -> f64 {
        self.mu
            .unwrap_or(if system == SystemKind::Three && ell == 2 {
                1.5
            } else {
                1.0
            })
    }

    pub fn single_epsilon(&self) -> Result<f64, ConfigError> {
        match self.epsilon.as_slice() {
            [e] => Ok(*e),
            [] => Err(bad("epsilon is required")),
            _ => Err(bad("this mode takes a single epsilon")),
        }
    }

    pub fn require_ell(&self) -> Result<usize, ConfigError> {
        self.ell.ok_or_else(|| bad("ell is required"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: Parameters,
    pub output_dir: PathBuf,
    /// Defaults to `output_dir/cache`.
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(mode: Mode, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            params: Parameters::default(),
            output_dir: output_dir.into(),
            cache_dir: None,
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn mode_dir(&self) -> PathBuf {
        self.output_dir.join(self.mode.name())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "epsilon" | "epsilons" => p.epsilon = parse_list(value)?,
            "ell" => p.ell = Some(parse(key, value)?),
            "mu" => p.mu = Some(parse(key, value)?),
            "system" => {
                p.system = value
                    .parse()
                    .map_err(|_| bad(format!("unknown system {value:?}")))?
            }
            "r_max" => p.r_max = parse(key, value)?,
            "n_points" => p.n_points = parse(key, value)?,
            "shoot_tol" => p.shoot_tol = parse(key, value)?,
            "constants_epsilon" => p.constants_epsilon = parse(key, value)?,
            "samples" => p.samples = parse(key, value)?,
            "n_plane" => p.n_plane = parse(key, value)?,
            "n_vertical" => p.n_vertical = parse(key, value)?,
            "newton" => p.newton = parse(key, value)?,
            "ladder_from" => p.ladder_from = parse(key, value)?,
            "ladder_to" => p.ladder_to = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// `key=value` pairs, one per line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| bad(format!("line {}: {}", n + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| bad(format!("override {pair:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Checks that the mode has what it needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        if p.epsilon.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(bad("epsilon values must be positive"));
        }
        if p.ladder_from > p.ladder_to || p.ladder_from < 1 {
            return Err(bad("ladder needs 1 <= ladder_from <= ladder_to"));
        }
        match self.mode {
            Mode::Corrections => {
                if p.epsilon.is_empty() {
                    return Err(bad("corrections needs at least one epsilon"));
                }
            }
            Mode::Landscape | Mode::Optimize | Mode::Assemble => {
                p.require_ell()?;
                p.single_epsilon()?;
            }
            Mode::VerifyScaling => {
                if p.epsilon.len() == 1 {
                    return Err(bad("verify-scaling needs at least two epsilons"));
                }
                if p.epsilon.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(bad("verify-scaling epsilons must be strictly decreasing"));
                }
            }
            Mode::GroundState | Mode::Constants | Mode::ThreeSystem | Mode::ReproduceTable => {}
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| bad(format!("{key} = {value:?}: {e}")))
}

fn parse_list(value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse("epsilon", s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut c = RunConfig::new(Mode::VerifyScaling, "out");
        c.apply_text("# demo\nepsilons = 0.1, 0.05,0.025\nsystem=three\nn-points=8001\n")
            .unwrap();
        c.apply_override("n_points=4001").unwrap();
        assert_eq!(c.params.epsilon, vec![0.1, 0.05, 0.025]);
        assert_eq!(c.params.system, SystemKind::Three);
        assert_eq!(c.params.n_points, 4001);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::new(Mode::Optimize, "out");
        assert!(c.apply_text("ell 2").is_err());
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("ell", "two").is_err());
        assert!(c.validate().is_err());
        c.set("ell", "2").unwrap();
        c.set("epsilon", "1e-8").unwrap();
        c.validate().unwrap();

        let mut v = RunConfig::new(Mode::VerifyScaling, "out");
        v.set("epsilon", "0.05,0.1").unwrap();
        assert!(v.validate().is_err());
    }

    #[test]
    fn mu_default_depends_on_case() {
        let p = Parameters::default();
        assert_eq!(p.mu_for(SystemKind::Three, 2), 1.5);
        assert_eq!(p.mu_for(SystemKind::Three, 3), 1.0);
        assert_eq!(p.mu_for(SystemKind::Two, 2), 1.0);
    }
}
