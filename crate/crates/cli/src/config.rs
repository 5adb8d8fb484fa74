//! Flat `section.key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key a run
//! reads is recorded with its resolved value (defaults included) so the
//! artifact headers describe the run completely, and keys nobody read are
//! reported as errors.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<Vec<(String, String)>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::validation(format!("line {}: expected `section.key = value`", i + 1)))?;
            let key = k.trim();
            if key.is_empty() || !key.contains('.') {
                return Err(CliError::validation(format!("line {}: key {key:?} needs a section", i + 1)));
            }
            if values.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::validation(format!("{key}: given twice")));
            }
        }
        Ok(Self {
            values,
            ..Default::default()
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Records a resolved value for the header without reading the file.
    pub fn note(&self, key: &str, value: impl Display) {
        let mut r = self.resolved.borrow_mut();
        let value = value.to_string();
        match r.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => r.push((key.to_string(), value)),
        }
    }

    pub fn get<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
    {
        let v = match self.raw(key) {
            Some(s) => s
                .parse()
                .map_err(|_| CliError::validation(format!("{key}: cannot parse {s:?}")))?,
            None => default,
        };
        self.note(key, &v);
        Ok(v)
    }

    pub fn get_opt<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
    {
        match self.raw(key) {
            Some(s) => {
                let v: T = s
                    .parse()
                    .map_err(|_| CliError::validation(format!("{key}: cannot parse {s:?}")))?;
                self.note(key, &v);
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>, CliError>
    where
        T: FromStr + Display + Clone,
    {
        let v: Vec<T> = match self.raw(key) {
            Some(s) => s
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| CliError::validation(format!("{key}: cannot parse {x:?}")))
                })
                .collect::<Result<_, _>>()?,
            None => default.to_vec(),
        };
        let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        self.note(key, text.join(","));
        Ok(v)
    }

    /// Distinct `<prefix>.<id>.` indices present in the file, e.g. device ids.
    pub fn indices(&self, prefix: &str) -> Result<Vec<u32>, CliError> {
        let head = format!("{prefix}.");
        let mut ids = BTreeSet::new();
        for k in self.values.keys() {
            if let Some(rest) = k.strip_prefix(&head) {
                let id = rest.split('.').next().unwrap_or_default();
                let id = id
                    .parse()
                    .map_err(|_| CliError::validation(format!("{k}: {prefix} index must be an integer")))?;
                ids.insert(id);
            }
        }
        Ok(ids.into_iter().collect())
    }

    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        match self.values.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(CliError::validation(format!("{k}: unknown key for this experiment"))),
            None => Ok(()),
        }
    }

    /// Every resolved key in the order it was read.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.resolved.borrow().clone()
    }
}
