//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # vesicle with a floating ring
//! mesh.level = 4
//! rod.preset = circular
//! rod.length = 3.14159
//! material.c = 5
//! ```
//!
//! Unknown keys, duplicate keys and non-finite numbers are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: &'static str },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RodPreset {
    None,
    Straight,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Obj,
    Vtk,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Obj => "obj",
            Format::Vtk => "vtk",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mesh_level: u32,
    pub rod_preset: RodPreset,
    pub rod_length: f64,
    pub rod_nodes: usize,
    /// `α₁₂, α₁₃, α₂₃`; overrides the preset's reference curvatures.
    pub rod_alpha: Option<[f64; 3]>,
    /// Defaults to the preset (circular rods are closed).
    pub rod_closed: Option<bool>,
    pub c: f64,
    pub cg: f64,
    pub c0: f64,
    pub p: f64,
    /// Rod stretching modulus.
    pub stretch: f64,
    /// Rod bending and twisting modulus.
    pub bend: f64,
    pub lambda_g: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub init_noise: f64,
    pub pressure_ramp: Option<f64>,
    pub fix_theta1: Option<f64>,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh_level: 3,
            rod_preset: RodPreset::None,
            rod_length: std::f64::consts::PI,
            rod_nodes: 31,
            rod_alpha: None,
            rod_closed: None,
            c: 1.0,
            cg: 0.0,
            c0: 0.0,
            p: 0.0,
            stretch: 1.0,
            bend: 1.0,
            lambda_g: 50.0,
            mu1: 1e3,
            mu2: 1e3,
            max_iter: 20_000,
            grad_tol: 1e-6,
            seed: 0,
            init_noise: 0.02,
            pressure_ramp: None,
            fix_theta1: None,
            out_dir: PathBuf::from("out"),
            formats: vec![Format::Vtk, Format::Csv],
        }
    }
}

/// Every accepted key, in output order.
pub const KEYS: &[&str] = &[
    "mesh.level",
    "rod.preset",
    "rod.length",
    "rod.n_nodes",
    "rod.alpha",
    "rod.closed",
    "material.c",
    "material.cg",
    "material.C0",
    "material.p",
    "material.D",
    "material.E",
    "solver.lambda_g",
    "solver.mu1",
    "solver.mu2",
    "solver.max_iter",
    "solver.grad_tol",
    "solver.seed",
    "solver.init_noise",
    "solver.pressure_ramp",
    "constraints.fix_theta1",
    "output.dir",
    "output.formats",
];

fn bad(key: &str, value: &str, reason: &'static str) -> ConfigError {
    ConfigError::Value { key: key.to_owned(), value: value.to_owned(), reason }
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|_| bad(key, value, "not a number"))?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

fn optional(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value == "none" {
        Ok(None)
    } else {
        number(key, value).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_owned(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_owned() });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_owned() });
            }
            seen.push(key.to_owned());
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        ExperimentConfig::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "mesh.level" => {
                let level: u32 = value.parse().map_err(|_| bad(key, value, "not an integer"))?;
                if level > 7 {
                    return Err(bad(key, value, "levels above 7 are not supported"));
                }
                self.mesh_level = level;
            }
            "rod.preset" => {
                self.rod_preset = match value {
                    "none" => RodPreset::None,
                    "straight" => RodPreset::Straight,
                    "circular" => RodPreset::Circular,
                    _ => return Err(bad(key, value, "expected none, straight or circular")),
                }
            }
            "rod.length" => {
                let v = number(key, value)?;
                if v <= 0.0 {
                    return Err(bad(key, value, "must be positive"));
                }
                self.rod_length = v;
            }
            "rod.n_nodes" => {
                let n: usize = value.parse().map_err(|_| bad(key, value, "not an integer"))?;
                if n < 2 {
                    return Err(bad(key, value, "need at least two nodes"));
                }
                self.rod_nodes = n;
            }
            "rod.alpha" => {
                self.rod_alpha = if value == "none" {
                    None
                } else {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 3 {
                        return Err(bad(key, value, "expected three comma-separated numbers"));
                    }
                    Some([number(key, parts[0])?, number(key, parts[1])?, number(key, parts[2])?])
                }
            }
            "rod.closed" => {
                self.rod_closed = match value {
                    "auto" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    _ => return Err(bad(key, value, "expected true, false or auto")),
                }
            }
            "material.c" => self.c = number(key, value)?,
            "material.cg" => self.cg = number(key, value)?,
            "material.C0" => self.c0 = number(key, value)?,
            "material.p" => self.p = number(key, value)?,
            "material.D" => self.stretch = number(key, value)?,
            "material.E" => self.bend = number(key, value)?,
            "solver.lambda_g" => self.lambda_g = number(key, value)?,
            "solver.mu1" => self.mu1 = number(key, value)?,
            "solver.mu2" => self.mu2 = number(key, value)?,
            "solver.max_iter" => self.max_iter = value.parse().map_err(|_| bad(key, value, "not an integer"))?,
            "solver.grad_tol" => self.grad_tol = number(key, value)?,
            "solver.seed" => self.seed = value.parse().map_err(|_| bad(key, value, "not an integer"))?,
            "solver.init_noise" => {
                let v = number(key, value)?;
                if v < 0.0 {
                    return Err(bad(key, value, "must be non-negative"));
                }
                self.init_noise = v;
            }
            "solver.pressure_ramp" => self.pressure_ramp = optional(key, value)?,
            "constraints.fix_theta1" => {
                let v = optional(key, value)?;
                if v.is_some_and(|t| !(t > 0.0 && t < std::f64::consts::PI)) {
                    return Err(bad(key, value, "must lie in (0, pi)"));
                }
                self.fix_theta1 = v;
            }
            "output.dir" => self.out_dir = PathBuf::from(value),
            "output.formats" => {
                let mut formats = Vec::new();
                for f in value.split(',').map(str::trim).filter(|f| !f.is_empty()) {
                    formats.push(match f {
                        "obj" => Format::Obj,
                        "vtk" => Format::Vtk,
                        "csv" => Format::Csv,
                        _ => return Err(bad(key, value, "formats are obj, vtk, csv")),
                    });
                }
                self.formats = formats;
            }
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_owned() }),
        }
        Ok(())
    }

    /// Textual value of `key`, as accepted by [`ExperimentConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "mesh.level" => self.mesh_level.to_string(),
            "rod.preset" => match self.rod_preset {
                RodPreset::None => "none",
                RodPreset::Straight => "straight",
                RodPreset::Circular => "circular",
            }
            .to_owned(),
            "rod.length" => self.rod_length.to_string(),
            "rod.n_nodes" => self.rod_nodes.to_string(),
            "rod.alpha" => match self.rod_alpha {
                Some([a, b, c]) => format!("{a}, {b}, {c}"),
                None => "none".to_owned(),
            },
            "rod.closed" => match self.rod_closed {
                Some(b) => b.to_string(),
                None => "auto".to_owned(),
            },
            "material.c" => self.c.to_string(),
            "material.cg" => self.cg.to_string(),
            "material.C0" => self.c0.to_string(),
            "material.p" => self.p.to_string(),
            "material.D" => self.stretch.to_string(),
            "material.E" => self.bend.to_string(),
            "solver.lambda_g" => self.lambda_g.to_string(),
            "solver.mu1" => self.mu1.to_string(),
            "solver.mu2" => self.mu2.to_string(),
            "solver.max_iter" => self.max_iter.to_string(),
            "solver.grad_tol" => self.grad_tol.to_string(),
            "solver.seed" => self.seed.to_string(),
            "solver.init_noise" => self.init_noise.to_string(),
            "solver.pressure_ramp" => fmt_opt(self.pressure_ramp),
            "constraints.fix_theta1" => fmt_opt(self.fix_theta1),
            "output.dir" => self.out_dir.display().to_string(),
            "output.formats" => self.formats.iter().map(|f| f.name()).collect::<Vec<_>>().join(", "),
            _ => return None,
        })
    }

    /// All keys with their resolved values.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|&k| (k, self.get(k).unwrap_or_default())).collect()
    }

    /// The full resolved configuration in the file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn closed(&self) -> bool {
        self.rod_closed.unwrap_or(self.rod_preset == RodPreset::Circular)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let cfg = ExperimentConfig::parse(
            "# ring on a vesicle\nmesh.level = 4\nrod.preset = circular  # ring\nrod.length=3.5\nmaterial.D = 100\n\nsolver.pressure_ramp = 1\noutput.formats = obj,csv\n",
        )
        .unwrap();
        assert_eq!(cfg.mesh_level, 4);
        assert_eq!(cfg.rod_preset, RodPreset::Circular);
        assert_eq!(cfg.rod_length, 3.5);
        assert_eq!(cfg.stretch, 100.0);
        assert_eq!(cfg.pressure_ramp, Some(1.0));
        assert_eq!(cfg.formats, vec![Format::Obj, Format::Csv]);
        assert!(cfg.closed());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("mesh.level = 2\nmaterial.kappa = 3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { line: 2, key: "material.kappa".into() });
        assert!(err.to_string().contains("material.kappa"));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "material.p = nan",
            "material.c = inf",
            "mesh.level = two",
            "rod.alpha = 1, 2",
            "constraints.fix_theta1 = 4",
            "mesh.level = 1\nmesh.level = 2",
            "just text",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn text_round_trip() {
        let cfg = ExperimentConfig {
            rod_alpha: Some([0.1, -2.0 / 3.0, 1e-7]),
            fix_theta1: Some(std::f64::consts::FRAC_PI_2),
            rod_closed: Some(false),
            seed: 42,
            ..Default::default()
        };
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.entries().len(), KEYS.len());
    }
}
