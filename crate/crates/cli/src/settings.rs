//! Option resolution: command-line flag, then `--config` file, then default.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{read_file, CliError, CliResult};

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::data(format!("{}: config is not UTF-8", path.display())))?;
        let pairs = zae_core::config::parse_key_values(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(Self {
            file: pairs.into_iter().collect(),
            ..Self::default()
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        let Some(raw) = self.file.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().insert(key.to_string());
        raw.parse()
            .map(Some)
            .map_err(|_| CliError::data(format!("config: bad value {raw:?} for {key}")))
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    /// A value that may legitimately be absent.
    pub fn optional<T: FromStr + Display>(
        &self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<Option<T>> {
        let file_value = self.file_value::<T>(key)?;
        let v = flag.or(file_value);
        if let Some(v) = &v {
            self.record(key, v.to_string());
        }
        Ok(v)
    }

    pub fn value<T: FromStr + Display>(
        &self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T> {
        Ok(match self.optional(key, flag)? {
            Some(v) => v,
            None => {
                self.record(key, default.to_string());
                default
            }
        })
    }

    pub fn required<T: FromStr + Display>(&self, key: &str, flag: Option<T>) -> CliResult<T> {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::usage(format!("missing --{}", key.replace('_', "-"))))
    }

    /// Comma-separated list; an empty list counts as absent.
    pub fn list<T: FromStr + Display>(&self, key: &str, flag: Vec<T>) -> CliResult<Option<Vec<T>>> {
        let v = if !flag.is_empty() {
            Some(flag)
        } else if let Some(raw) = self.file.get(key) {
            self.used.borrow_mut().insert(key.to_string());
            let items = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::data(format!("config: bad list {raw:?} for {key}")))?;
            (!items.is_empty()).then_some(items)
        } else {
            None
        };
        if let Some(items) = &v {
            let text: Vec<String> = items.iter().map(|i| i.to_string()).collect();
            self.record(key, text.join(","));
        }
        Ok(v)
    }

    pub fn list_or<T: FromStr + Display + Clone>(
        &self,
        key: &str,
        flag: Vec<T>,
        default: &[T],
    ) -> CliResult<Vec<T>> {
        Ok(match self.list(key, flag)? {
            Some(v) => v,
            None => {
                let text: Vec<String> = default.iter().map(|i| i.to_string()).collect();
                self.record(key, text.join(","));
                default.to_vec()
            }
        })
    }

    /// The resolved configuration. Config keys the command never asked for
    /// are an error, since they usually mean a typo.
    pub fn finish(&self) -> CliResult<BTreeMap<String, String>> {
        let used = self.used.borrow();
        let resolved = self.resolved.borrow();
        if let Some(k) = self
            .file
            .keys()
            .find(|k| !used.contains(*k) && !resolved.contains_key(*k))
        {
            return Err(CliError::usage(format!("config: unknown key {k:?}")));
        }
        Ok(resolved.clone())
    }
}
