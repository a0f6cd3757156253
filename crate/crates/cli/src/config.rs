//! Run configuration: built-in defaults, then command-line flags, then an
//! optional TOML file whose entries override both.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use comvr::com::{CenterOptions, CurrentSource, Weighting};
use comvr::controller::{DispatchMode, RegulationConfig};
use serde::Deserialize;

use crate::UsageError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "COMVR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "comvr-out";

/// Every setting a subcommand may read.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` selects the bundled Rhodes R-26 reconstruction.
    pub network: Option<PathBuf>,
    /// `None` selects the bundled fleet when the bundled network is used.
    pub fleet: Option<PathBuf>,
    pub modes: Vec<DispatchMode>,
    pub steps_kw: Vec<f64>,
    pub regulation: RegulationConfig,
    pub seed: u64,
    pub count: usize,
    pub load_factor: f64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: None,
            fleet: None,
            modes: vec![DispatchMode::Redispatch, DispatchMode::Dispatch],
            steps_kw: vec![300.0, 400.0, 500.0],
            regulation: RegulationConfig::default(),
            seed: 42,
            count: 1000,
            load_factor: comvr::campaign::ScenarioConfig::default().load_factor,
            threads: None,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
        }
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: Option<PathBuf>,
    pub fleet: Option<PathBuf>,
    pub modes: Option<Vec<String>>,
    pub steps_kw: Option<Vec<f64>>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub v_sp: Option<f64>,
    pub weighting: Option<Weighting>,
    pub current_source: Option<CurrentSource>,
    pub theta_small: Option<f64>,
    pub lesser_part_fraction: Option<f64>,
    pub max_iterations: Option<usize>,
    pub restrict_on_overlap: Option<bool>,
    pub restrict_on_gl_between: Option<bool>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub load_factor: Option<f64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    /// Relative paths in the file are taken relative to the file itself.
    pub fn apply(self, cfg: &mut RunConfig, base_dir: &Path) -> Result<()> {
        let rel = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        if let Some(p) = self.network {
            cfg.network = Some(rel(p));
        }
        if let Some(p) = self.fleet {
            cfg.fleet = Some(rel(p));
        }
        if let Some(m) = self.modes {
            cfg.modes = m.iter().map(|s| parse_mode(s)).collect::<Result<_>>()?;
        }
        if let Some(s) = self.steps_kw {
            cfg.steps_kw = s;
        }
        let r = &mut cfg.regulation;
        set(&mut r.v_min, self.v_min);
        set(&mut r.v_max, self.v_max);
        set(&mut r.v_sp, self.v_sp);
        set(&mut r.theta_small, self.theta_small);
        set(&mut r.lesser_part_fraction, self.lesser_part_fraction);
        set(&mut r.max_iterations, self.max_iterations);
        set(&mut r.restrict_on_overlap, self.restrict_on_overlap);
        set(&mut r.restrict_on_gl_between, self.restrict_on_gl_between);
        set(&mut r.centers.weighting, self.weighting);
        set(&mut r.centers.source, self.current_source);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.count, self.count);
        set(&mut cfg.load_factor, self.load_factor);
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(p) = self.out_dir {
            cfg.out_dir = rel(p);
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn parse_mode(s: &str) -> Result<DispatchMode> {
    s.parse::<DispatchMode>().map_err(|e| UsageError(e).into())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.regulation
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        if self.steps_kw.is_empty() || self.steps_kw.iter().any(|s| !(*s > 0.0)) {
            return Err(UsageError("steps must be positive".into()).into());
        }
        if self.modes.is_empty() {
            return Err(UsageError("at least one mode is required".into()).into());
        }
        if self.count == 0 {
            return Err(UsageError("scenario count must be at least 1".into()).into());
        }
        if !(self.load_factor >= 0.0) {
            return Err(UsageError("load factor must be non-negative".into()).into());
        }
        if self.threads == Some(0) {
            return Err(UsageError("threads must be at least 1".into()).into());
        }
        Ok(())
    }

    pub fn centers(&self) -> CenterOptions {
        self.regulation.centers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_and_resolves_paths() {
        let file: ConfigFile = toml::from_str(
            r#"
            network = "net.json"
            modes = ["dispatch"]
            steps_kw = [250.0]
            v_min = 0.92
            weighting = "real-part"
            seed = 7
            "#,
        )
        .unwrap();
        let mut cfg = RunConfig::default();
        file.apply(&mut cfg, Path::new("/data")).unwrap();
        assert_eq!(cfg.network, Some(PathBuf::from("/data/net.json")));
        assert_eq!(cfg.modes, vec![DispatchMode::Dispatch]);
        assert_eq!(cfg.steps_kw, vec![250.0]);
        assert_eq!(cfg.regulation.v_min, 0.92);
        assert_eq!(cfg.regulation.centers.weighting, Weighting::RealPart);
        assert_eq!(cfg.seed, 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn limits_must_bracket_one() {
        let mut cfg = RunConfig::default();
        cfg.regulation.v_max = 0.99;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("stepz = [1.0]").is_err());
    }
}
