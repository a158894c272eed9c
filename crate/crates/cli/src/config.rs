//! Run configuration: a flat key/value document (dotted keys give
//! nesting) merged from an optional `--config` file and command-line
//! flags, with flags taking precedence. Every command declares its key
//! set; anything else is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use erasure_lab_core::error::Error;

/// Raised for malformed invocations; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub enum CliError {
    Usage(UsageError),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Resolved configuration for one command invocation.
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `--key value` / `--key=value` pairs, loading `--config FILE`
    /// (if given) first so flags override file entries.
    pub fn from_args(args: &[String]) -> CliResult<RunConfig> {
        let mut flags: Vec<(String, String)> = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(stripped) = arg.strip_prefix("--") else {
                return Err(UsageError(format!("expected a --flag, found {arg:?}")).into());
            };
            let (key, value) = match stripped.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let value = args.get(i + 1).ok_or_else(|| {
                        UsageError(format!("flag --{stripped} is missing a value"))
                    })?;
                    i += 1;
                    (stripped.to_string(), value.clone())
                }
            };
            if key.is_empty() {
                return Err(UsageError("empty flag name".into()).into());
            }
            flags.push((key, value));
            i += 1;
        }

        let mut values = BTreeMap::new();
        if let Some((_, path)) = flags.iter().find(|(k, _)| k == "config") {
            for (k, v) in parse_config_file(&PathBuf::from(path))? {
                values.insert(k, v);
            }
        }
        for (k, v) in flags {
            if k != "config" {
                values.insert(k, v);
            }
        }
        Ok(RunConfig { values })
    }

    /// Rejects any key outside the command's declared set.
    pub fn restrict(&self, allowed: &[&str]) -> CliResult<()> {
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        for key in self.values.keys() {
            if !allowed.contains(key.as_str()) {
                return Err(UsageError(format!(
                    "unknown flag --{key} (allowed: {})",
                    allowed.into_iter().collect::<Vec<_>>().join(", ")
                ))
                .into());
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| UsageError(format!("missing required flag --{key}")).into())
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    pub fn opt_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, raw: &str) -> CliResult<T> {
        raw.parse().map_err(|_| {
            CliError::Run(Error::Config(format!("bad value {raw:?} for --{key}")))
        })
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// The resolved configuration, echoed into output metadata.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

/// Key/value lines; `#` starts a comment; blank lines ignored.
fn parse_config_file(path: &PathBuf) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Run(Error::Io(e)))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once(char::is_whitespace).ok_or_else(|| {
            CliError::Run(Error::Parse {
                line: lineno + 1,
                message: format!("expected `key value`, found {line:?}"),
            })
        })?;
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
