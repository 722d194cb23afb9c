//! TOML loading and the pieces shared by several subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use soen_core::circuit::DendriteKind;
use soen_core::rate_array::RateArray;

use crate::error::{config_err, CliError, Result};

/// Parses `text` as TOML, reporting schema errors with the offending field path.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let message = e.inner().message().to_string();
        CliError::Schema { path: path.to_path_buf(), field, message }
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    parse_toml(&text, path)
}

/// Directory that relative paths in the config at `path` are resolved against.
pub fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.min + k as f64 * self.step).collect()
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        check_positive(&format!("{name}.step"), self.step)?;
        if !(self.min <= self.max) {
            return config_err(format!("{name}.min must not exceed {name}.max"));
        }
        Ok(())
    }
}

/// Rate-array files by dendrite kind.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayPaths {
    pub ri: Option<PathBuf>,
    pub rtti: Option<PathBuf>,
}

impl ArrayPaths {
    pub fn resolved(&self, base: &Path) -> Self {
        ArrayPaths { ri: self.ri.as_ref().map(|p| resolve(base, p)), rtti: self.rtti.as_ref().map(|p| resolve(base, p)) }
    }

    /// Looks for `ri.soen` and `rtti.soen` in `dir`, as written by `gen-rates`
    /// with the shipped config.
    pub fn in_dir(dir: &Path) -> Self {
        ArrayPaths { ri: Some(dir.join("ri.soen")), rtti: Some(dir.join("rtti.soen")) }
    }
}

/// Loaded rate arrays.
#[derive(Debug, Clone, Default)]
pub struct ArraySet {
    pub ri: Option<Arc<RateArray>>,
    pub rtti: Option<Arc<RateArray>>,
}

impl ArraySet {
    pub fn load(paths: &ArrayPaths) -> Result<Self> {
        let load = |p: &Option<PathBuf>, kind: DendriteKind| -> Result<Option<Arc<RateArray>>> {
            let Some(p) = p else { return Ok(None) };
            if !p.exists() {
                return config_err(format!("{kind} rate array {} does not exist", p.display()));
            }
            let a = RateArray::load(p)?;
            if a.kind() != kind {
                return config_err(format!("{} holds a {} array, expected {kind}", p.display(), a.kind()));
            }
            Ok(Some(Arc::new(a)))
        };
        Ok(ArraySet { ri: load(&paths.ri, DendriteKind::Ri)?, rtti: load(&paths.rtti, DendriteKind::Rtti)? })
    }

    pub fn get(&self, kind: DendriteKind) -> Result<Arc<RateArray>> {
        let a = match kind {
            DendriteKind::Ri => &self.ri,
            DendriteKind::Rtti => &self.rtti,
        };
        a.clone().ok_or_else(|| CliError::Config(format!("no {kind} rate array configured")))
    }
}

/// Requires `ib` to be one of the tabulated biases rather than silently
/// snapping to the nearest one.
pub fn tabulated_bias(array: &RateArray, ib: f64) -> Result<usize> {
    let k = array.bias_index(ib)?;
    if (array.ib_grid()[k] - ib).abs() > 1e-9 {
        return config_err(format!(
            "bias {ib} is not tabulated in the {} array (nearest {})",
            array.kind(),
            array.ib_grid()[k]
        ));
    }
    Ok(k)
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        config_err(format!("{name} must be positive, got {v}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_endpoints() {
        let d = Grid { min: -2.0, max: 2.0, step: 0.5 };
        let v = d.values();
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], -2.0);
        assert!((v[8] - 2.0).abs() < 1e-12);
        assert!(v.contains(&0.0));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let base = base_dir(Path::new("configs/x.toml"));
        assert_eq!(resolve(&base, Path::new("../arrays/ri.soen")), Path::new("configs/../arrays/ri.soen"));
        assert_eq!(resolve(&base, Path::new("/abs/ri.soen")), Path::new("/abs/ri.soen"));
    }
}
