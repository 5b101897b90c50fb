//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys and bad values are
//! rejected with the offending line number.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::phantom::PhantomKind;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "BREGTV_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `n_angles·n_detectors ≈ N`.
    Full,
    /// Half the angles of `Full`, so `M ≈ N/2`.
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingKind {
    Mdp,
    RelError,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaKind {
    Harmonic,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// `ms_elapsed` is written as 0, keeping traces byte-reproducible.
    Off,
    Wall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub phantom: PhantomKind,
    pub size: usize,
    pub operator: OperatorKind,
    /// Defaults to `ceil(1.5·size)`.
    pub n_detectors: Option<usize>,
    pub delta_rel: f64,
    pub seed: u64,
    pub psi_c: f64,
    pub psi_p: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// `μ = mu_scale/‖T‖²`.
    pub mu_scale: f64,
    pub allow_unstable_step: bool,
    pub lambda: f64,
    /// Defaults to `√ᾱ`.
    pub nu: Option<f64>,
    pub inner_iters: usize,
    pub max_outer: usize,
    pub alpha_schedule: AlphaKind,
    pub alpha: f64,
    pub stopping: StoppingKind,
    pub epsilon: f64,
    pub timing: Timing,
    /// Declared wall-time budget; reported, not enforced.
    pub budget_s: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            phantom: PhantomKind::Star,
            size: 64,
            operator: OperatorKind::Full,
            n_detectors: None,
            delta_rel: 0.001,
            seed: 0,
            psi_c: 1.0,
            psi_p: 0.5,
            tau_lo: 1.1,
            tau_hi: 1.5,
            mu_scale: 1.0,
            allow_unstable_step: false,
            lambda: 1.5,
            nu: None,
            inner_iters: 10,
            max_outer: 500,
            alpha_schedule: AlphaKind::Harmonic,
            alpha: 1.0,
            stopping: StoppingKind::Mdp,
            epsilon: 0.05,
            timing: Timing::Off,
            budget_s: 120.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(v: &str, what: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid {what} `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{v}`")),
    }
}

impl ExperimentConfig {
    /// Parses config text; `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.check().map_err(|message| Error::Config {
            path: origin.to_string(),
            line: 0,
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "phantom" => self.phantom = v.parse().map_err(|e: Error| e.to_string())?,
            "size" => self.size = parse_value(v, "size")?,
            "operator" => {
                self.operator = match v {
                    "full" => OperatorKind::Full,
                    "half" => OperatorKind::Half,
                    _ => return Err(format!("operator must be `full` or `half`, got `{v}`")),
                }
            }
            "n_detectors" => self.n_detectors = Some(parse_value(v, "detector count")?),
            "delta_rel" => self.delta_rel = parse_value(v, "noise level")?,
            "seed" => self.seed = parse_value(v, "seed")?,
            "psi_c" => self.psi_c = parse_value(v, "index-function scale")?,
            "psi_p" => self.psi_p = parse_value(v, "index-function exponent")?,
            "tau_lo" => self.tau_lo = parse_value(v, "tau_lo")?,
            "tau_hi" => self.tau_hi = parse_value(v, "tau_hi")?,
            "mu_scale" => self.mu_scale = parse_value(v, "mu_scale")?,
            "allow_unstable_step" => self.allow_unstable_step = parse_bool(v)?,
            "lambda" => self.lambda = parse_value(v, "lambda")?,
            "nu" => self.nu = Some(parse_value(v, "nu")?),
            "inner_iters" => self.inner_iters = parse_value(v, "inner_iters")?,
            "max_outer" => self.max_outer = parse_value(v, "max_outer")?,
            "alpha_schedule" => {
                self.alpha_schedule = match v {
                    "harmonic" => AlphaKind::Harmonic,
                    "constant" => AlphaKind::Constant,
                    _ => return Err(format!("alpha_schedule must be `harmonic` or `constant`, got `{v}`")),
                }
            }
            "alpha" => self.alpha = parse_value(v, "alpha")?,
            "stopping" => {
                self.stopping = match v {
                    "mdp" => StoppingKind::Mdp,
                    "rel_error" => StoppingKind::RelError,
                    "max_iters" => StoppingKind::MaxIters,
                    _ => return Err(format!("stopping must be mdp, rel_error or max_iters, got `{v}`")),
                }
            }
            "epsilon" => self.epsilon = parse_value(v, "epsilon")?,
            "timing" => {
                self.timing = match v {
                    "off" => Timing::Off,
                    "wall" => Timing::Wall,
                    _ => return Err(format!("timing must be `off` or `wall`, got `{v}`")),
                }
            }
            "budget_s" => self.budget_s = parse_value(v, "budget_s")?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !crate::phantom::SUPPORTED_SIZES.contains(&self.size) {
            return Err(format!("size must be one of {:?}", crate::phantom::SUPPORTED_SIZES));
        }
        if self.delta_rel.is_nan() || self.delta_rel < 0.0 {
            return Err("delta_rel must be >= 0".into());
        }
        if self.mu_scale.is_nan() || self.mu_scale <= 0.0 {
            return Err("mu_scale must be positive".into());
        }
        if self.n_detectors == Some(0) {
            return Err("n_detectors must be positive".into());
        }
        Ok(())
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors.unwrap_or((3 * self.size).div_ceil(2))
    }

    /// Angle count: the even number closest to `N / n_detectors` for the full
    /// operator, half of it for the rank-deficient one.
    pub fn n_angles(&self) -> usize {
        let n = (self.size * self.size) as f64;
        let full = (2.0 * (n / (2.0 * self.n_detectors() as f64)).round()).max(2.0) as usize;
        match self.operator {
            OperatorKind::Full => full,
            OperatorKind::Half => full / 2,
        }
    }

    /// `output_dir`, unless [`OUTPUT_DIR_ENV`] is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}
