//! Flat `key = value` simulator configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! psf_count = 9
//! psf_size = 15
//! psf_seed = 2019
//! psf_files = kernels/a.psf, kernels/b.psf   # replaces the generated bank
//! tile_rows = 3
//! tile_cols = 3
//! scale_min = 0.5
//! scale_max = 1.5
//! noise_sigma = 0.01
//! blend_margin = 8
//! ```
//!
//! Relative `psf_files` paths are resolved against the config file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::sim::{
    generate_psf_bank, load_psf, DistortionConfig, SimError, DEFAULT_PSF_COUNT, DEFAULT_PSF_SEED, DEFAULT_PSF_SIZE,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Everything needed to rebuild a [`DistortionConfig`], in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionSettings {
    pub psf_count: usize,
    pub psf_size: usize,
    pub psf_seed: u64,
    pub psf_files: Vec<PathBuf>,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub noise_sigma: f64,
    pub blend_margin: usize,
}

impl Default for DistortionSettings {
    fn default() -> Self {
        let d = DistortionConfig::default();
        DistortionSettings {
            psf_count: DEFAULT_PSF_COUNT,
            psf_size: DEFAULT_PSF_SIZE,
            psf_seed: DEFAULT_PSF_SEED,
            psf_files: Vec::new(),
            tile_rows: d.tile_rows,
            tile_cols: d.tile_cols,
            scale_min: d.scale_min,
            scale_max: d.scale_max,
            noise_sigma: d.noise_sigma,
            blend_margin: d.blend_margin,
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::Value {
        line,
        key: key.to_string(),
        value: raw.to_string(),
    })
}

impl DistortionSettings {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut s = DistortionSettings::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, val) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, val) = (key.trim(), val.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            match key {
                "psf_count" => s.psf_count = value(line, key, val)?,
                "psf_size" => s.psf_size = value(line, key, val)?,
                "psf_seed" => s.psf_seed = value(line, key, val)?,
                "psf_files" => {
                    s.psf_files = val
                        .split(',')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(|p| base_dir.join(p))
                        .collect()
                }
                "tile_rows" => s.tile_rows = value(line, key, val)?,
                "tile_cols" => s.tile_cols = value(line, key, val)?,
                "scale_min" => s.scale_min = value(line, key, val)?,
                "scale_max" => s.scale_max = value(line, key, val)?,
                "noise_sigma" => s.noise_sigma = value(line, key, val)?,
                "blend_margin" => s.blend_margin = value(line, key, val)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Builds the simulator config: the PSF files if any were listed,
    /// otherwise the generated bank.
    pub fn build(&self, seed: u64) -> Result<DistortionConfig, ConfigError> {
        let psf_bank = if self.psf_files.is_empty() {
            generate_psf_bank(self.psf_count, self.psf_size, self.psf_seed)?
        } else {
            self.psf_files.iter().map(load_psf).collect::<Result<_, _>>()?
        };
        let config = DistortionConfig {
            psf_bank,
            tile_rows: self.tile_rows,
            tile_cols: self.tile_cols,
            scale_min: self.scale_min,
            scale_max: self.scale_max,
            noise_sigma: self.noise_sigma,
            blend_margin: self.blend_margin,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_simulator() {
        let s = DistortionSettings::parse("", Path::new(".")).unwrap();
        assert_eq!(s.build(0).unwrap(), DistortionConfig::default());
    }

    #[test]
    fn parses_keys_and_comments() {
        let text = "# sim\nnoise_sigma = 0.02\ntile_rows=2 # inline\n\n scale_max = 1.2\npsf_files = a.psf, b.psf\n";
        let s = DistortionSettings::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(s.noise_sigma, 0.02);
        assert_eq!(s.tile_rows, 2);
        assert_eq!(s.scale_max, 1.2);
        assert_eq!(s.psf_files, vec![PathBuf::from("/cfg/a.psf"), PathBuf::from("/cfg/b.psf")]);
    }

    #[test]
    fn rejects_bad_input() {
        let p = Path::new(".");
        assert!(matches!(DistortionSettings::parse("noise", p), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(DistortionSettings::parse("x = 1", p), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(
            DistortionSettings::parse("tile_rows = 1\ntile_rows = 2", p),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(DistortionSettings::parse("tile_rows = -1", p), Err(ConfigError::Value { .. })));
        let s = DistortionSettings::parse("scale_min = 2\nscale_max = 1", p).unwrap();
        assert!(s.build(0).is_err());
    }

    #[test]
    fn loads_psf_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.psf"), "PSF 1\n1\n").unwrap();
        std::fs::write(dir.path().join("sim.cfg"), "psf_files = d.psf\n").unwrap();
        let s = DistortionSettings::load(dir.path().join("sim.cfg")).unwrap();
        let c = s.build(3).unwrap();
        assert_eq!(c.psf_bank.len(), 1);
        assert_eq!(c.psf_bank[0].kernel(), &[1.0]);
        assert_eq!(c.seed, 3);
    }
}
