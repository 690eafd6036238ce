//! Flag/config-file merging and the parameter records of each scenario.

use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use qms_core::defects_mc::FidelityModel;

use crate::CliError;

/// Comma-separated floats; an item `a:b:n` expands to n evenly spaced points.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            match parts.as_slice() {
                [v] => out.push(parse_f64(v)?),
                [a, b, n] => {
                    let (a, b) = (parse_f64(a)?, parse_f64(b)?);
                    let n: usize = n.trim().parse().map_err(|_| format!("bad point count in {item:?}"))?;
                    match n {
                        0 => return Err(format!("empty range {item:?}")),
                        1 => out.push(a),
                        _ => out.extend((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64)),
                    }
                }
                _ => return Err(format!("bad list item {item:?}; use a value or start:stop:count")),
            }
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(FloatList(out))
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if !v.is_finite() {
        return Err(format!("not a finite number: {s:?}"));
    }
    Ok(v)
}

/// Comma-separated sizes; an item `a:b:step` expands to a, a+step, … ≤ b.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SizeList(pub Vec<usize>);

impl FromStr for SizeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let int = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("not a size: {t:?}"));
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            match parts.as_slice() {
                [v] => out.push(int(v)?),
                [a, b, step] => {
                    let (a, b, step) = (int(a)?, int(b)?, int(step)?);
                    if step == 0 || b < a {
                        return Err(format!("bad range {item:?}"));
                    }
                    out.extend((a..=b).step_by(step));
                }
                _ => return Err(format!("bad list item {item:?}; use a size or start:stop:step")),
            }
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(SizeList(out))
    }
}

/// Config files may give lists as JSON arrays or in flag syntax.
fn de_floats<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<f64>),
        One(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::List(v) => Ok(v),
        Raw::One(v) => Ok(vec![v]),
        Raw::Text(s) => s.parse::<FloatList>().map(|l| l.0).map_err(serde::de::Error::custom),
    }
}

fn de_opt_floats<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
    de_floats(d).map(Some)
}

fn de_sizes<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<usize>),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::List(v) => Ok(v),
        Raw::Text(s) => s.parse::<SizeList>().map(|l| l.0).map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Drive {
    Gaussian,
    PlaneWave,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    GaussianStructure,
    WithScattering,
}

impl From<Model> for FidelityModel {
    fn from(m: Model) -> Self {
        match m {
            Model::GaussianStructure => FidelityModel::GaussianStructure,
            Model::WithScattering => FidelityModel::WithScattering,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RealSpace,
    Eigenmode,
    EigenmodeDiagonal,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScatterParams {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub drive: Drive,
    pub waist: f64,
    /// Detunings to evaluate; the collective resonance when absent.
    #[serde(deserialize_with = "de_opt_floats", skip_serializing_if = "Option::is_none")]
    pub detuning: Option<Vec<f64>>,
    pub defect_fraction: f64,
    pub alpha2: f64,
    pub model: Model,
}

impl Default for ScatterParams {
    fn default() -> Self {
        ScatterParams {
            nx: 23,
            ny: 23,
            spacing: 0.2,
            drive: Drive::Gaussian,
            waist: 1.56,
            detuning: None,
            defect_fraction: 0.0,
            alpha2: 9.0,
            model: Model::WithScattering,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EitScanParams {
    #[serde(deserialize_with = "de_floats")]
    pub delta: Vec<f64>,
    pub shift: f64,
    pub decay: f64,
    #[serde(deserialize_with = "de_floats")]
    pub deltar: Vec<f64>,
    pub gamma_r: f64,
    pub omega_p: f64,
    #[serde(rename = "V", deserialize_with = "de_floats")]
    pub v: Vec<f64>,
}

impl Default for EitScanParams {
    fn default() -> Self {
        EitScanParams {
            delta: vec![0.0],
            shift: 0.0,
            decay: 0.0,
            deltar: vec![0.0],
            gamma_r: 0.0,
            omega_p: 1.0,
            v: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FidelitySizeParams {
    #[serde(deserialize_with = "de_sizes")]
    pub sizes: Vec<usize>,
    pub spacing: f64,
    pub waist: f64,
    pub alpha2: f64,
    pub model: Model,
}

impl Default for FidelitySizeParams {
    fn default() -> Self {
        FidelitySizeParams {
            sizes: (5..=23).step_by(2).collect(),
            spacing: 0.2,
            waist: 1.56,
            alpha2: 9.0,
            model: Model::WithScattering,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FidelityDefectsParams {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub waist: f64,
    pub alpha2: f64,
    #[serde(deserialize_with = "de_floats")]
    pub fractions: Vec<f64>,
    pub stderr_tol: f64,
    pub min_real: usize,
    pub max_real: usize,
    pub batch: usize,
    pub model: Model,
}

impl Default for FidelityDefectsParams {
    fn default() -> Self {
        let d = qms_core::defects_mc::DefectScanConfig::default();
        FidelityDefectsParams {
            nx: d.nx,
            ny: d.ny,
            spacing: d.spacing,
            waist: d.waist,
            alpha2: d.alpha.norm_sqr(),
            fractions: d.fractions,
            stderr_tol: d.stderr_tol,
            min_real: d.min_real,
            max_real: d.max_real,
            batch: d.batch,
            model: Model::GaussianStructure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModeSpectrumParams {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    /// Modulation wavevector along x in k₀; 0 gives the uniform array.
    pub ka: f64,
    pub kmax: f64,
    pub points: usize,
    pub method: Method,
    /// Single-atom detuning; the uniform array's resonance when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
}

impl Default for ModeSpectrumParams {
    fn default() -> Self {
        ModeSpectrumParams {
            nx: 31,
            ny: 31,
            spacing: 0.2,
            ka: 0.4,
            kmax: 0.8,
            points: 17,
            method: Method::All,
            detuning: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ProtocolParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branching: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Path of a JSON step list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    pub verify: bool,
}

/// Options shared by every scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: 0, output: None, format: None, threads: None, manifest: None }
    }
}

const RUN_KEYS: [&str; 5] = ["seed", "output", "format", "threads", "manifest"];

pub fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::usage("config file must hold a JSON object")),
        Err(e) => Err(CliError::usage(format!("config {}: {e}", path.display()))),
    }
}

/// Overlays the given flags on the config file and splits off the shared
/// run options. Unset flags serialize as null or false and are skipped.
pub fn resolve<P: DeserializeOwned>(file: Map<String, Value>, flags: &impl Serialize) -> Result<(P, RunOptions), CliError> {
    let mut merged = file;
    let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") else {
        unreachable!("flag structs serialize to objects")
    };
    for (k, v) in given {
        if !(v.is_null() || v == Value::Bool(false)) {
            merged.insert(k, v);
        }
    }
    let mut run = Map::new();
    for key in RUN_KEYS {
        if let Some(v) = merged.remove(key) {
            run.insert(key.to_string(), v);
        }
    }
    let params = serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("parameters: {e}")))?;
    let run = serde_json::from_value(Value::Object(run)).map_err(|e| CliError::usage(format!("run options: {e}")))?;
    Ok((params, run))
}
