//! Flat key=value configuration files with flags-over-file-over-defaults
//! precedence. Unknown keys are rejected before any compute starts.

use std::collections::HashMap;
use std::path::Path;

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "kernel",
    "grid_size",
    "rank",
    "pretrain_epochs",
    "steps_per_obs",
    "hyper_every",
    "lr_batch",
    "lr_online",
    "iterations",
    "q",
    "pool",
    "beta_ucb",
    "noise_sd",
    "rounds",
    "n",
];

/// Parsed key=value file; `#` starts a comment, blank lines are skipped.
#[derive(Default, Debug)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::missing_file(path, e))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "config line {} is not key=value: '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "unknown config key '{key}' (line {})",
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    /// Flag wins, then the file value, then the default.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw.parse::<T>().map_err(|_| {
                CliError::usage(format!("config value for '{key}' is not valid: '{raw}'"))
            }),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::usage(format!("config value for '{key}' is not valid: '{raw}'"))),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("wiski-config-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let path = write_tmp("ok.cfg", "# comment\ngrid_size = 32\nlr_batch=0.01\n");
        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.resolve(Some(64usize), "grid_size", 16).unwrap(), 64);
        assert_eq!(cfg.resolve(None::<usize>, "grid_size", 16).unwrap(), 32);
        assert_eq!(cfg.resolve(None::<usize>, "pretrain_epochs", 200).unwrap(), 200);
        assert!((cfg.resolve(None::<f64>, "lr_batch", 0.05).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let path = write_tmp("bad.cfg", "grid_size=32\nwhatever=1\n");
        assert!(FileConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let path = write_tmp("noval.cfg", "grid_size\n");
        assert!(FileConfig::load(Some(&path)).is_err());
    }
}
