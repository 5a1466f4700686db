//! Key-value config files and environment overrides.
//!
//! Precedence, highest first: command-line flag, `CES_AUDIT_<FLAG>`
//! environment variable, config file entry, built-in default. Config
//! entries are turned into flags placed ahead of the user's own arguments.

use std::ffi::OsString;
use std::path::Path;

pub const ENV_PREFIX: &str = "CES_AUDIT_";

/// Flags a config file may set.
pub const CONFIG_KEYS: &[&str] = &[
    "tracts",
    "demographics",
    "projects",
    "schema",
    "spec",
    "scores",
    "funding",
    "prior-designations",
    "district-overlaps",
    "seed",
    "jobs",
    "out",
    "format",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: unknown key `{key}` (allowed: {})", CONFIG_KEYS.join(", "))]
    UnknownKey { path: String, line: usize, key: String },
}

/// Environment variable that overrides `flag`.
pub fn env_name(flag: &str) -> String {
    format!("{ENV_PREFIX}{}", flag.replace('-', "_").to_ascii_uppercase())
}

pub fn parse(text: &str, path: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { path: path.into(), line: i + 1 })?;
        let key = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { path: path.into(), line: i + 1, key });
        }
        out.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    std::env::var_os(env_name("config"))
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter().skip(1).any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

/// `args` with config-file entries spliced in after the program name.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let shown = Path::new(&path).display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path: shown.clone(), source })?;
    let mut injected = Vec::new();
    for (key, value) in parse(&text, &shown)? {
        if given_on_command_line(&args, &key) || std::env::var_os(env_name(&key)).is_some() {
            continue;
        }
        injected.push(OsString::from(format!("--{key}")));
        injected.push(OsString::from(value));
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    let mut rest = args.into_iter();
    out.extend(rest.next());
    out.extend(injected);
    out.extend(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let got = parse("# run\nseed = 7\nprior_designations=\"a.csv\" # old\n\n", "c").unwrap();
        assert_eq!(got, [("seed".into(), "7".into()), ("prior-designations".into(), "a.csv".into())]);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(parse("colour = red", "c"), Err(ConfigError::UnknownKey { line: 1, .. })));
        assert!(matches!(parse("seed 7", "c"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn command_line_wins_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "jobs = 3\nformat = csv\n").unwrap();
        let args = os(&["ces-audit", "--config", cfg.to_str().unwrap(), "score", "--format=json"]);
        let merged = merge_config(args).unwrap();
        let text: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(text[..3], ["ces-audit", "--jobs", "3"]);
        assert!(!text.contains(&"csv".to_string()));
    }

    #[test]
    fn env_names() {
        assert_eq!(env_name("prior-designations"), "CES_AUDIT_PRIOR_DESIGNATIONS");
    }
}
