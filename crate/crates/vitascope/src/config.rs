//! Flat key=value configuration files; CLI flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Result, VitaError};

/// An ordered key=value bag parsed from a config file.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    pub entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Self {
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                entries.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Self { entries }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VitaError::Dataset {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Ok(Self::parse(&text))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: std::num::ParseFloatError| {
                    VitaError::Contract {
                        op: "config",
                        detail: format!("bad `{}`: {}", key, e),
                    }
                })
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: std::num::ParseIntError| {
                    VitaError::Contract {
                        op: "config",
                        detail: format!("bad `{}`: {}", key, e),
                    }
                })
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: std::num::ParseIntError| {
                    VitaError::Contract {
                        op: "config",
                        detail: format!("bad `{}`: {}", key, e),
                    }
                })
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(VitaError::Contract {
                    op: "config",
                    detail: format!("bad `{}`: {}", key, other),
                }),
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_ignores_comments() {
        let cfg = KvConfig::parse("# comment\nlr = 1e-4\nepochs=40\n\nflag=true\n");
        assert_eq!(cfg.get_f64("lr").unwrap(), Some(1e-4));
        assert_eq!(cfg.get_usize("epochs").unwrap(), Some(40));
        assert_eq!(cfg.get_bool("flag").unwrap(), Some(true));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn bad_values_error() {
        let cfg = KvConfig::parse("lr=abc\n");
        assert!(cfg.get_f64("lr").is_err());
    }
}
