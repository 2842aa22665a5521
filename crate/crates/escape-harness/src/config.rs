//! Flat `key = value` run-configuration files.
//!
//! The format is deliberately tiny: one `key = value` pair per line, `#`
//! starts a comment (full-line or trailing), and blank lines are ignored.
//! Keys may not repeat. Consumers validate keys against their own allow-list
//! so that a typo fails the run instead of silently using a default.

use std::collections::BTreeMap;

use thiserror::Error;

/// Errors from parsing or interpreting a configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

/// An order-independent bag of `key = value` pairs read from a config file.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parse configuration text. Rejects lines without `=`, empty keys, and
    /// duplicate keys.
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut entries = BTreeMap::new();
        for (ix, raw_line) in text.lines().enumerate() {
            let line = ix + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    reason: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    reason: "empty key".to_string(),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    reason: format!("key `{key}` has an empty value"),
                });
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Malformed {
                    line,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(RawConfig { entries })
    }

    /// Iterate `(key, value)` pairs in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse a strictly positive finite float.
pub(crate) fn parse_positive_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not a number")))?;
    if !x.is_finite() || x <= 0.0 {
        return Err(ConfigError::invalid(key, "must be finite and > 0"));
    }
    Ok(x)
}

pub(crate) fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not a non-negative integer")))
}

/// Comma-separated list of positive integers (e.g. dimension sweeps).
pub(crate) fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let n: usize = part
            .parse()
            .map_err(|_| ConfigError::invalid(key, format!("`{part}` is not an integer")))?;
        if n == 0 {
            return Err(ConfigError::invalid(key, "entries must be ≥ 1"));
        }
        out.push(n);
    }
    if out.is_empty() {
        return Err(ConfigError::invalid(key, "list must be non-empty"));
    }
    Ok(out)
}

/// Seed lists come in two spellings: a single integer `N` meaning the first
/// `N` seeds (`0..N`), or an explicit comma-separated list. Either way the
/// result must be non-empty and free of duplicates.
pub(crate) fn parse_seed_list(key: &str, value: &str) -> Result<Vec<u64>, ConfigError> {
    let seeds: Vec<u64> = if value.contains(',') {
        value
            .split(',')
            .map(|part| parse_u64(key, part.trim()))
            .collect::<Result<_, _>>()?
    } else {
        let n = parse_u64(key, value)?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(ConfigError::invalid(key, "seed list must be non-empty"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ConfigError::invalid(key, "seeds must be distinct"));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_comments_and_blanks() {
        let text = "\n# full-line comment\nepsilon = 1e-3\nseeds=12   # trailing comment\n  family =  quartic\n";
        let cfg = RawConfig::parse(text).expect("valid config should parse");
        assert_eq!(cfg.get("epsilon"), Some("1e-3"));
        assert_eq!(cfg.get("seeds"), Some("12"));
        assert_eq!(cfg.get("family"), Some("quartic"));
        assert_eq!(cfg.entries().count(), 3);
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["no_equals_here", "= value", "key =", "a = 1\na = 2"] {
            let err = RawConfig::parse(bad).expect_err(bad);
            assert!(
                matches!(err, ConfigError::Malformed { .. }),
                "`{bad}` should be malformed, got {err:?}"
            );
        }
    }

    #[test]
    fn duplicate_key_reports_the_second_line() {
        let err = RawConfig::parse("eps = 1\n# comment\neps = 2\n").unwrap_err();
        match err {
            ConfigError::Malformed { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("duplicate"), "reason: {reason}");
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn seed_lists_expand_counts_and_accept_explicit_values() {
        assert_eq!(parse_seed_list("seeds", "4").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(
            parse_seed_list("seeds", "7, 3, 11").unwrap(),
            vec![7, 3, 11]
        );
        assert!(parse_seed_list("seeds", "0").is_err(), "empty range");
        assert!(parse_seed_list("seeds", "3, 3").is_err(), "duplicates");
        assert!(parse_seed_list("seeds", "1, -2").is_err(), "negative");
    }

    #[test]
    fn numeric_parsers_enforce_domains() {
        assert!(parse_positive_f64("eps", "1e-3").is_ok());
        assert!(parse_positive_f64("eps", "0").is_err());
        assert!(parse_positive_f64("eps", "-1").is_err());
        assert!(parse_positive_f64("eps", "inf").is_err());
        assert!(parse_positive_f64("eps", "abc").is_err());
        assert_eq!(parse_usize_list("dims", "10, 50").unwrap(), vec![10, 50]);
        assert!(parse_usize_list("dims", "10, 0").is_err());
    }
}
