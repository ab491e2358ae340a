//! Line-oriented `key = value` configuration files and flag resolution.
//!
//! Format: one `key = value` pair per line; blank lines and lines starting
//! with `#` are ignored; keys are flag names without the leading dashes
//! (`iou-threshold`, `min-island`), and `_` is accepted in place of `-`.
//! Values may be wrapped in double quotes. A key may appear only once.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str, source: &Path) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{line_no}: expected `key = value`", source.display()))?;
            let key = key.trim().replace('_', "-");
            if key.is_empty() {
                return Err(format!("{}:{line_no}: empty key", source.display()));
            }
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            if entries.insert(key.clone(), (line_no, value.to_owned())).is_some() {
                return Err(format!("{}:{line_no}: duplicate key {key:?}", source.display()));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(n, _)| *n)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Resolves settings with precedence flag > config file > default and
/// records every resolved value for the run manifest.
#[derive(Debug)]
pub struct Resolver<'a> {
    config: &'a ConfigFile,
    source: String,
    resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a ConfigFile, source: Option<&Path>) -> Self {
        Self {
            config,
            source: source.map_or_else(|| "<config>".to_owned(), |p| p.display().to_string()),
            resolved: BTreeMap::new(),
        }
    }

    /// Optional setting: `None` when neither flag nor config provides it.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, String>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.config.get(key) {
                Some(text) => Some(text.parse::<T>().map_err(|e| {
                    format!("{}:{}: invalid value {text:?} for {key}: {e}", self.source, self.config.line_of(key))
                })?),
                None => None,
            },
        };
        self.resolved.insert(
            key.to_owned(),
            value.as_ref().map_or_else(|| "none".to_owned(), ToString::to_string),
        );
        Ok(value)
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, String>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_owned(), v.to_string());
        Ok(v)
    }

    /// Records a setting that does not come from flags or the file.
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_owned(), value.to_string());
    }

    /// Fails on config keys that no resolution step asked for.
    pub fn check_unknown(&self) -> Result<(), String> {
        match self.config.keys().find(|k| !self.resolved.contains_key(*k)) {
            Some(k) => Err(format!(
                "{}:{}: unknown key {k:?} for this command",
                self.source,
                self.config.line_of(k)
            )),
            None => Ok(()),
        }
    }

    pub fn into_resolved(self) -> BTreeMap<String, String> {
        self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ConfigFile {
        ConfigFile::parse(text, Path::new("run.conf")).unwrap()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let c = cfg("# header\n\niou_threshold = 0.75\nout = \"runs dir\"\n");
        assert_eq!(c.get("iou-threshold"), Some("0.75"));
        assert_eq!(c.get("out"), Some("runs dir"));
        assert_eq!(c.keys().count(), 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        let e = ConfigFile::parse("a = 1\njust words\n", Path::new("x.conf")).unwrap_err();
        assert!(e.starts_with("x.conf:2:"), "{e}");
        assert!(ConfigFile::parse("a = 1\na = 2\n", Path::new("x")).is_err());
        assert!(ConfigFile::parse(" = 2\n", Path::new("x")).is_err());
    }

    #[test]
    fn flags_beat_config_beat_defaults() {
        let c = cfg("alpha = 0.01\nmin-island = 9\n");
        let mut r = Resolver::new(&c, None);
        assert_eq!(r.value("alpha", Some(0.05), 0.1).unwrap(), 0.05);
        assert_eq!(r.value("min-island", None, 4usize).unwrap(), 9);
        assert_eq!(r.value("decimals", None, 2usize).unwrap(), 2);
        r.check_unknown().unwrap();
        let resolved = r.into_resolved();
        assert_eq!(resolved["alpha"], "0.05");
        assert_eq!(resolved["min-island"], "9");
        assert_eq!(resolved["decimals"], "2");
    }

    #[test]
    fn bad_and_unknown_keys_are_reported() {
        let c = cfg("min-island = many\n");
        let mut r = Resolver::new(&c, Some(Path::new("a.conf")));
        let e = r.value("min-island", None, 4usize).unwrap_err();
        assert!(e.contains("a.conf:1") && e.contains("min-island"), "{e}");

        let c = cfg("colour = red\n");
        let r = Resolver::new(&c, None);
        assert!(r.check_unknown().unwrap_err().contains("colour"));
    }
}
