//! Flat TOML configuration. Command-line flags take precedence over the
//! file, and the file over built-in defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::table::Format;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub p: Option<f64>,
    pub psi: Option<f64>,
    pub d: Option<f64>,
    pub demands: Option<Vec<f64>>,
    pub probs: Option<Vec<f64>>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
    pub warmup: Option<u64>,
    pub batches: Option<usize>,
    pub points: Option<usize>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub eps: Option<f64>,
    pub h: Option<f64>,
    pub p_hat: Option<f64>,
    pub out_dir: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// First of flag, config value and default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// First of flag and config value, or a parse error naming the missing key.
pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(file).ok_or_else(|| {
        CliError::Parse(format!(
            "missing required value `{name}` (flag or config key)"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_document() {
        let cfg = FileConfig::parse("p = 0.5\npsi = 2\ndemands = [1.0, 3.0]\nformat = \"csv\"\n")
            .unwrap();
        assert_eq!(cfg.p, Some(0.5));
        assert_eq!(cfg.psi, Some(2.0));
        assert_eq!(cfg.demands, Some(vec![1.0, 3.0]));
        assert_eq!(cfg.format, Some(Format::Csv));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(FileConfig::parse("q = 1\n").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None::<i32>, None, 3), 3);
        assert!(require(None::<f64>, None, "p").is_err());
    }
}
