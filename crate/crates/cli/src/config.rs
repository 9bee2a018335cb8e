//! Run configuration: an optional `key = value` file named by `UCBMIR_CONFIG`,
//! overridden by command-line flags.
//!
//! Recognised keys:
//!
//! ```text
//! manifest    = data/manifest.csv   # dataset manifest
//! checkpoint  = run/model.ucae      # model checkpoint
//! index       = run/index.ucbm      # embedding index
//! report_dir  = run/reports         # evaluation reports
//! size        = 64                  # patch side length fed to the model
//! epochs      = 10
//! lr          = 5e-5
//! batch_size  = 16
//! k_values    = 3,5,7
//! metric      = euclidean           # or cosine
//! bind        = 127.0.0.1
//! port        = 8080
//! static_dir  = ui/dist             # files served at /
//! ```
//!
//! Blank lines and `#` comments are ignored. Relative paths in the file are
//! resolved against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ucbmir_core::eval::EvalConfig;
use ucbmir_core::index::Metric;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "UCBMIR_CONFIG";
pub const LOG_ENV: &str = "UCBMIR_LOG";

pub const KEYS: [&str; 13] = [
    "manifest",
    "checkpoint",
    "index",
    "report_dir",
    "size",
    "epochs",
    "lr",
    "batch_size",
    "k_values",
    "metric",
    "bind",
    "port",
    "static_dir",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub k_values: Option<Vec<usize>>,
    pub metric: Option<Metric>,
    pub bind: Option<String>,
    pub port: Option<u16>,
    pub static_dir: Option<PathBuf>,
}

pub fn parse_k_values(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|v| v.trim().parse::<usize>().map_err(|e| format!("bad k value `{}`: {e}", v.trim()))).collect()
}

fn parsed<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("bad value `{value}`: {e}"))
}

impl RunConfig {
    /// Sets one key. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = || base.join(value);
        match key {
            "manifest" => self.manifest = Some(path()),
            "checkpoint" => self.checkpoint = Some(path()),
            "index" => self.index = Some(path()),
            "report_dir" => self.report_dir = Some(path()),
            "static_dir" => self.static_dir = Some(path()),
            "size" => self.size = Some(parsed(value)?),
            "epochs" => self.epochs = Some(parsed(value)?),
            "lr" => self.lr = Some(parsed(value)?),
            "batch_size" => self.batch_size = Some(parsed(value)?),
            "k_values" => self.k_values = Some(parse_k_values(value)?),
            "metric" => self.metric = Some(parsed(value)?),
            "bind" => self.bind = Some(value.to_string()),
            "port" => self.port = Some(parsed(value)?),
            _ => return Err(format!("unknown key `{key}` (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut config = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("config line {}: expected `key = value`", n + 1)))?;
            config
                .set(key.trim(), value.trim(), base)
                .map_err(|e| CliError::config(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("config file {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// The file named by `UCBMIR_CONFIG`, or an empty config when unset.
    pub fn from_env() -> Result<Self, CliError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    /// `self` with every value present in `flags` replaced.
    pub fn overlay(self, flags: &RunConfig) -> RunConfig {
        let f = flags.clone();
        RunConfig {
            manifest: f.manifest.or(self.manifest),
            checkpoint: f.checkpoint.or(self.checkpoint),
            index: f.index.or(self.index),
            report_dir: f.report_dir.or(self.report_dir),
            size: f.size.or(self.size),
            epochs: f.epochs.or(self.epochs),
            lr: f.lr.or(self.lr),
            batch_size: f.batch_size.or(self.batch_size),
            k_values: f.k_values.or(self.k_values),
            metric: f.metric.or(self.metric),
            bind: f.bind.or(self.bind),
            port: f.port.or(self.port),
            static_dir: f.static_dir.or(self.static_dir),
        }
    }

    /// Every value that is set, rendered as in the config file.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.insert(k.to_string(), v);
            }
        };
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("manifest", show(&self.manifest));
        put("checkpoint", show(&self.checkpoint));
        put("index", show(&self.index));
        put("report_dir", show(&self.report_dir));
        put("static_dir", show(&self.static_dir));
        put("size", self.size.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("k_values", self.k_values.as_ref().map(|k| k.iter().map(usize::to_string).collect::<Vec<_>>().join(",")));
        put("metric", self.metric.map(|m| m.to_string()));
        put("bind", self.bind.clone());
        put("port", self.port.map(|v| v.to_string()));
        out
    }

    pub fn eval_config(&self) -> Result<EvalConfig, CliError> {
        let default = EvalConfig::default();
        let config = EvalConfig {
            k_values: self.k_values.clone().unwrap_or(default.k_values),
            metric: self.metric.unwrap_or(default.metric),
        };
        config.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(config)
    }

    /// A required path setting, named by its config key.
    pub fn require(&self, key: &str) -> Result<&Path, CliError> {
        let value = match key {
            "manifest" => &self.manifest,
            "checkpoint" => &self.checkpoint,
            "index" => &self.index,
            "report_dir" => &self.report_dir,
            "static_dir" => &self.static_dir,
            _ => &None,
        };
        value.as_deref().ok_or_else(|| {
            CliError::usage(format!("`{key}` is required (flag --{} or config key `{key}`)", key.replace('_', "-")))
        })
    }
}
