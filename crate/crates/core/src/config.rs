//! `key = value` settings files.
//!
//! ```text
//! # tadpole with a varying potential on edge 1
//! graph = tadpole
//! beta = 0.75
//! h = 0.01
//! kappa2 = 1
//! kappa2.1 = [1, 0.5]
//! H = 1
//! alpha = 1
//! ```
//!
//! Lines starting with `#` are comments. Polynomial coefficients are listed
//! lowest degree first.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fem::{CoefficientField, Polynomial};

/// Keys accepted in settings files, besides `kappa2.<edge>` and `H.<edge>`.
pub const KNOWN_KEYS: &[&str] = &[
    "graph",
    "beta",
    "betas",
    "h",
    "alpha",
    "kappa2",
    "H",
    "k",
    "f",
    "seed",
    "n",
    "mode",
    "format",
    "count",
    "vertex",
    "condition",
    "levels",
    "overkill",
    "replicates",
    "out",
    "vectors",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            if !is_known(key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if map.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { map })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Overrides or adds a value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidArgument(format!("`{key}` must be a number, got `{v}`")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    Error::InvalidArgument(format!("`{key}` must be a nonnegative integer, got `{v}`"))
                })
            })
            .transpose()
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(parse_number_list).transpose()
    }

    /// `kappa2`, `H` and their per-edge `kappa2.<id>`, `H.<id>` overrides.
    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        let poly = |key: &str| -> Result<Option<Polynomial>> {
            self.get_list(key)?.map(|c| Polynomial::new(&c)).transpose()
        };
        let mut field = CoefficientField::new(
            poly("kappa2")?.unwrap_or(Polynomial::constant(1.0)),
            poly("H")?.unwrap_or(Polynomial::constant(1.0)),
        );
        for key in self.map.keys() {
            if let Some((name, id)) = key.split_once('.') {
                let id: u64 = id
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad edge id in `{key}`")))?;
                let p = poly(key)?.expect("key present");
                field = match name {
                    "kappa2" => field.with_edge_kappa2(id, p),
                    _ => field.with_edge_h(id, p),
                };
            }
        }
        Ok(field)
    }

    /// `lo..hi` inclusive.
    pub fn get_levels(&self, key: &str) -> Result<Option<(u32, u32)>> {
        self.get(key)
            .map(|v| {
                let bad = || Error::InvalidArgument(format!("`{key}` must look like `3..6`, got `{v}`"));
                let (lo, hi) = v.split_once("..").ok_or_else(bad)?;
                Ok((
                    lo.trim().parse().map_err(|_| bad())?,
                    hi.trim().parse().map_err(|_| bad())?,
                ))
            })
            .transpose()
    }
}

fn is_known(key: &str) -> bool {
    if KNOWN_KEYS.contains(&key) {
        return true;
    }
    matches!(key.split_once('.'), Some(("kappa2" | "H", id)) if !id.is_empty())
}

/// Numbers separated by commas or whitespace, optionally in brackets.
pub fn parse_number_list(s: &str) -> Result<Vec<f64>> {
    let inner = s.trim();
    let inner = inner
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .unwrap_or(inner);
    let out = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("`{t}` is not a number in `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("empty number list `{s}`")));
    }
    Ok(out)
}
