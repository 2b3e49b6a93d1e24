//! Plain-text `key = value` configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clothrecon::body::Gender;
use clothrecon::fitting::{Ablation, FitConfig};
use clothrecon::scene::SceneConfig;

use crate::CliError;

/// Parsed key/value pairs; keys are matched exactly.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    base: Option<PathBuf>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value, got {raw:?}", n + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", n + 1)));
            }
            if entries
                .insert(k.to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key {k}",
                    n + 1
                )));
            }
        }
        Ok(KeyValues {
            entries,
            base: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut kv = Self::parse(&text)?;
        kv.base = path.parent().map(Path::to_path_buf);
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Fails on any key not in `known`, so typos do not pass silently.
    pub fn check_known(&self, known: &[&str]) -> Result<(), CliError> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("bad value for {key}: {v:?}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, fallback: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(fallback))
    }

    fn put<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), CliError> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Path value resolved against the config file's directory.
    fn path(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(key).map(|v| match &self.base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        })
    }
}

pub const SCENE_KEYS: &[&str] = &[
    "seed",
    "width",
    "height",
    "pixel_size",
    "resolution",
    "iso",
    "shape_scale",
    "pose_scale",
    "state",
    "gender",
];

pub const FIT_KEYS: &[&str] = &[
    "seed",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "max_iterations",
    "fd_step",
    "tolerance",
    "patience",
    "sample_points",
    "abduction_deg",
    "silhouette_iso",
    "ablation",
    "lambda_dp",
    "lambda_reg",
    "lambda_exist",
    "lambda_gender",
    "lambda_silhouette",
    "init",
];

pub const RECON_KEYS: &[&str] = &["resolution", "iso"];

pub fn scene_config(kv: &KeyValues) -> Result<SceneConfig, CliError> {
    let mut c = SceneConfig::default();
    kv.put("seed", &mut c.seed)?;
    kv.put("width", &mut c.width)?;
    kv.put("height", &mut c.height)?;
    kv.put("pixel_size", &mut c.pixel_size)?;
    kv.put("resolution", &mut c.resolution)?;
    kv.put("iso", &mut c.iso)?;
    kv.put("shape_scale", &mut c.shape_scale)?;
    kv.put("pose_scale", &mut c.pose_scale)?;
    if let Some(p) = kv.path("state") {
        c.state = Some(crate::read_json(&p)?);
    }
    if let Some(g) = kv.entries.get("gender") {
        c.gender = Some(match g.as_str() {
            "male" => Gender::Male,
            "female" => Gender::Female,
            "neutral" => Gender::Neutral,
            _ => return Err(CliError::Config(format!("bad value for gender: {g:?}"))),
        });
    }
    c.validate()?;
    Ok(c)
}

pub fn fit_config(kv: &KeyValues) -> Result<FitConfig, CliError> {
    let mut c = FitConfig::default();
    kv.put("seed", &mut c.seed)?;
    kv.put("learning_rate", &mut c.learning_rate)?;
    kv.put("beta1", &mut c.beta1)?;
    kv.put("beta2", &mut c.beta2)?;
    kv.put("epsilon", &mut c.epsilon)?;
    kv.put("max_iterations", &mut c.max_iterations)?;
    kv.put("fd_step", &mut c.fd_step)?;
    kv.put("tolerance", &mut c.tolerance)?;
    kv.put("patience", &mut c.patience)?;
    kv.put("sample_points", &mut c.sample_points)?;
    kv.put("abduction_deg", &mut c.abduction_deg)?;
    kv.put("silhouette_iso", &mut c.silhouette_iso)?;
    kv.put("lambda_dp", &mut c.weights.dp)?;
    kv.put("lambda_reg", &mut c.weights.reg)?;
    kv.put("lambda_exist", &mut c.weights.exist)?;
    kv.put("lambda_gender", &mut c.weights.gender)?;
    kv.put("lambda_silhouette", &mut c.weights.silhouette)?;
    if let Some(a) = kv.entries.get("ablation") {
        c.ablation = parse_ablation(a)?;
    }
    if let Some(p) = kv.path("init") {
        c.init = Some(crate::read_json(&p)?);
    }
    c.validate()?;
    Ok(c)
}

pub fn parse_ablation(s: &str) -> Result<Ablation, CliError> {
    Ablation::parse(s).ok_or_else(|| CliError::Config(format!("unknown ablation {s:?}")))
}
