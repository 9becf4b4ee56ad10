//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thinrod::geometry::{CurveSpec, FrameSpec};
use thinrod::limit::{FixedPointOptions, LoadSpec, Material};
use thinrod::section::SectionSpec;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub section: SectionConfig,
    #[serde(default)]
    pub material: Option<MaterialConfig>,
    #[serde(default)]
    pub loads: LoadSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Input field for `decompose`.
    #[serde(default)]
    pub field: Option<FieldConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub curve: CurveSpec,
    #[serde(default)]
    pub frame: FrameSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    pub shape: SectionSpec,
    #[serde(default = "default_level")]
    pub level: u32,
}

fn default_level() -> u32 {
    3
}

/// Either `lambda`/`mu` or `young`/`poisson`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub young: Option<f64>,
    pub poisson: Option<f64>,
}

impl MaterialConfig {
    pub fn material(&self) -> Result<Material, CliError> {
        match (self.lambda, self.mu, self.young, self.poisson) {
            (Some(l), Some(m), None, None) => Ok(Material::lame(l, m)?),
            (None, None, Some(e), Some(nu)) => Ok(Material::from_young_poisson(e, nu)?),
            _ => Err(CliError::config("material: give exactly one of {lambda, mu} or {young, poisson}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub intervals: usize,
    pub fixed_point: FixedPointOptions,
    pub deltas: Vec<f64>,
    /// Number of slices for `decompose` (default from `δ`).
    pub slices: Option<usize>,
    pub clamp_left: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            intervals: 64,
            fixed_point: FixedPointOptions::default(),
            deltas: vec![0.2, 0.1, 0.05, 0.025],
            slices: None,
            clamp_left: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// CSV with header `S1,S2,s3,v1,v2,v3`; relative to the config file.
    pub path: PathBuf,
    pub delta: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
        if let Some(f) = cfg.field.as_mut() {
            if f.path.is_relative() {
                if let Some(dir) = path.parent() {
                    f.path = dir.join(&f.path);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.loads.kappa >= 2.0 && self.loads.kappa.is_finite()) {
            return Err(CliError::config(format!("loads.kappa must be >= 2 (got {})", self.loads.kappa)));
        }
        if self.solver.intervals < 2 {
            return Err(CliError::config("solver.intervals must be at least 2"));
        }
        if let Some(m) = &self.material {
            m.material()?;
        }
        if let Some(f) = &self.field {
            if !f.path.exists() {
                return Err(CliError::config(format!("field file {} does not exist", f.path.display())));
            }
        }
        Ok(())
    }

    pub fn material(&self) -> Result<Material, CliError> {
        self.material.as_ref().ok_or_else(|| CliError::config("material is required for this command"))?.material()
    }
}
