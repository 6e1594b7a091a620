use std::path::{Path, PathBuf};

use serde::Deserialize;

use obsbench_core::{Error, Result};

pub const CONFIG_ENV: &str = "OBSBENCH_CONFIG";

/// Defaults applied when a flag is absent.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub params: Option<PathBuf>,
    pub ocv: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn load(flag: Option<&Path>) -> Result<Self> {
        let path = match flag {
            Some(p) => p.to_path_buf(),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(v) if !v.is_empty() => PathBuf::from(v),
                _ => return Ok(Self::default()),
            },
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg: Config = serde_json::from_str(&text)?;
        // relative entries are taken from the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.params, &mut cfg.ocv, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
