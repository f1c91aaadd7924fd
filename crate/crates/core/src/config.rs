//! Study configuration file.
//!
//! A flat TOML document; every key is optional except `schema_version`.
//!
//! ```toml
//! schema_version = 1
//! n_x = 256
//! n_v = 256
//! # v_max = 0.6          # default: 2 (max|u0| + max rho0)
//! alpha = 0.5
//! beta = 4.0
//! epsilons = [0.08, 0.04, 0.02, 0.01]
//! t_end = 0.5
//! profile = "sine"       # sine | consensus | counter-stream
//! amp_rho = 0.2
//! amp_u = 0.1
//! stream_speed = 0.3
//! kappa_mode = "cd"      # cd | one
//! cfl = 0.5
//! limiter = "minmod"    # minmod | mc
//! macro_cfl = 0.4
//! macro_refine = 2
//! snapshot_stride = 1
//! boundary_mass_tol = 1e-10
//! budget_tol = 1e-3
//! c_tol = 1.0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::{TransportLimiter, C1};

pub const SCHEMA_VERSION: u32 = 1;

/// Documentation for every key, printed by `--help`.
pub const KEY_HELP: &str = "\
Config keys (flat TOML):
  schema_version     must be 1
  n_x, n_v           kinetic grid sizes (macro reference uses macro_refine * n_x)
  v_max              velocity cutoff; default 2 (max|u0| + max rho0)
  alpha, beta        weight exponent and regularization exponent
  epsilons           relaxation parameters, strictly decreasing, in (0, 1]
  t_end              time horizon
  profile            sine | consensus | counter-stream
  amp_rho, amp_u     rho0 = (1 + amp_rho sin x) / 2pi, u0 = amp_u sin x (consensus: u0 = amp_u)
  stream_speed       beam speed of the counter-stream profile
  kappa_mode         cd (kappa = 1/12) | one (kappa = 1)
  cfl, macro_cfl     kinetic and macro CFL numbers
  limiter            kinetic x-slope limiter: minmod | mc (monotonized central)
  macro_refine       refinement factor of the macro reference grid
  snapshot_stride    kinetic steps between relative-entropy samples (1..=10)
  boundary_mass_tol  mass allowed in the two outermost velocity cells per side
  budget_tol         allowed relative energy-budget residual
  c_tol              constant in the well-prepared checks";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Sine,
    Consensus,
    CounterStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaMode {
    Cd,
    One,
}

impl KappaMode {
    pub fn kappa(self) -> f64 {
        match self {
            KappaMode::Cd => C1,
            KappaMode::One => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub n_x: usize,
    pub n_v: usize,
    pub v_max: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    pub profile: ProfileKind,
    pub amp_rho: f64,
    pub amp_u: f64,
    pub stream_speed: f64,
    pub kappa_mode: KappaMode,
    pub cfl: f64,
    pub limiter: TransportLimiter,
    pub macro_cfl: f64,
    pub macro_refine: usize,
    pub snapshot_stride: usize,
    pub boundary_mass_tol: f64,
    pub budget_tol: f64,
    pub c_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_x: 256,
            n_v: 256,
            v_max: None,
            alpha: 0.5,
            beta: 4.0,
            epsilons: vec![0.08, 0.04, 0.02, 0.01],
            t_end: 0.5,
            profile: ProfileKind::Sine,
            amp_rho: 0.2,
            amp_u: 0.1,
            stream_speed: 0.3,
            kappa_mode: KappaMode::Cd,
            cfl: 0.5,
            limiter: TransportLimiter::Minmod,
            macro_cfl: 0.4,
            macro_refine: 2,
            snapshot_stride: 1,
            boundary_mass_tol: 1e-10,
            budget_tol: 1e-3,
            c_tol: 1.0,
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.n_x < 4 || self.n_v < 4 {
            return bad("n_x and n_v must be at least 4".into());
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("v_max must be positive, got {v}"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.5) {
            return bad(format!("alpha must lie in (0, 3/2), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.epsilons.is_empty() {
            return bad("epsilons must not be empty".into());
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("every epsilon must lie in (0, 1]".into());
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilons must be strictly decreasing".into());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.amp_rho.abs() < 1.0) {
            return bad("|amp_rho| must be below 1".into());
        }
        for (name, c) in [("cfl", self.cfl), ("macro_cfl", self.macro_cfl)] {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {c}"));
            }
        }
        if self.macro_refine == 0 {
            return bad("macro_refine must be at least 1".into());
        }
        if !(1..=10).contains(&self.snapshot_stride) {
            return bad("snapshot_stride must lie in 1..=10".into());
        }
        for (name, t) in [
            ("boundary_mass_tol", self.boundary_mass_tol),
            ("budget_tol", self.budget_tol),
            ("c_tol", self.c_tol),
        ] {
            if !(t > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_mode.kappa()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = StudyConfig::default();
        cfg.validate().unwrap();
        assert_eq!(StudyConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(StudyConfig::from_toml("schema_version = 1").unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "schema_version = 2",
            "schema_version = 1\nunknown_key = 3",
            "schema_version = 1\nepsilons = [0.01, 0.02]",
            "schema_version = 1\nalpha = 1.5",
            "schema_version = 1\nkappa_mode = \"two\"",
            "schema_version = 1\nsnapshot_stride = 11",
            "schema_version = ",
        ] {
            assert!(StudyConfig::from_toml(text).unwrap_err().is_config(), "{text}");
        }
        assert!(StudyConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err().is_config());
    }

    #[test]
    fn parses_overrides() {
        let cfg = StudyConfig::from_toml(
            "schema_version = 1\nprofile = \"counter-stream\"\nkappa_mode = \"one\"\nlimiter = \"mc\"\nv_max = 1.5\nepsilons = [0.5]",
        )
        .unwrap();
        assert_eq!(cfg.profile, ProfileKind::CounterStream);
        assert_eq!(cfg.kappa(), 1.0);
        assert_eq!(cfg.limiter, TransportLimiter::Mc);
        assert_eq!(cfg.v_max, Some(1.5));
    }
}
