//! Open key/value hyperparameter maps with per-model validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Bool(bool),
    Number(f64),
    Text(String),
    List(Vec<HpValue>),
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Bool(b) => write!(f, "{b}"),
            HpValue::Number(v) => write!(f, "{v}"),
            HpValue::Text(s) => f.write_str(s),
            HpValue::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl HpValue {
    /// Parses a command-line value: bool, number, `[a;b;...]` list, else text.
    pub fn parse(text: &str) -> Self {
        let t = text.trim();
        if let Some(inner) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            if inner.trim().is_empty() {
                return HpValue::List(vec![]);
            }
            return HpValue::List(inner.split([';', ',']).map(HpValue::parse).collect());
        }
        match t {
            "true" => HpValue::Bool(true),
            "false" => HpValue::Bool(false),
            _ => t
                .parse::<f64>()
                .map(HpValue::Number)
                .unwrap_or_else(|_| HpValue::Text(t.to_string())),
        }
    }
}

impl From<f64> for HpValue {
    fn from(v: f64) -> Self {
        HpValue::Number(v)
    }
}

impl From<usize> for HpValue {
    fn from(v: usize) -> Self {
        HpValue::Number(v as f64)
    }
}

impl From<bool> for HpValue {
    fn from(v: bool) -> Self {
        HpValue::Bool(v)
    }
}

impl From<&str> for HpValue {
    fn from(v: &str) -> Self {
        HpValue::Text(v.to_string())
    }
}

impl From<Vec<usize>> for HpValue {
    fn from(v: Vec<usize>) -> Self {
        HpValue::List(v.into_iter().map(HpValue::from).collect())
    }
}

/// Ordered hyperparameter map. Ordering keeps serialized output stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperparameterSet(BTreeMap<String, HpValue>);

impl HyperparameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<HpValue>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, key: &str, value: impl Into<HpValue>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&HpValue> {
        self.0.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &HpValue)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` overlaid with `other`.
    pub fn merged(&self, other: &HyperparameterSet) -> Self {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.0.insert(k.clone(), v.clone());
        }
        out
    }

    /// Rejects any key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.0.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::hp(
                    key,
                    format!("unknown key (allowed: {})", allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(HpValue::Number(v)) if v.is_finite() => Ok(*v),
            Some(other) => Err(Error::hp(key, format!("expected a number, got `{other}`"))),
        }
    }

    pub fn positive_f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::hp(key, format!("must be > 0, got {v}")))
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.0.get(key) {
            None => Ok(default),
            Some(HpValue::Number(v)) => as_count(key, *v),
            Some(other) => Err(Error::hp(key, format!("expected an integer, got `{other}`"))),
        }
    }

    /// Integer, or unbounded when absent / `"none"`.
    pub fn opt_usize_or(&self, key: &str, default: Option<usize>) -> Result<Option<usize>> {
        match self.0.get(key) {
            None => Ok(default),
            Some(HpValue::Text(t)) if t == "none" || t == "None" => Ok(None),
            Some(HpValue::Number(v)) => as_count(key, *v).map(Some),
            Some(other) => Err(Error::hp(key, format!("expected an integer or `none`, got `{other}`"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.0.get(key) {
            None => Ok(default),
            Some(HpValue::Bool(b)) => Ok(*b),
            Some(other) => Err(Error::hp(key, format!("expected true/false, got `{other}`"))),
        }
    }

    pub fn text_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str> {
        match self.0.get(key) {
            None => Ok(default),
            Some(HpValue::Text(t)) => Ok(t),
            Some(other) => Err(Error::hp(key, format!("expected text, got `{other}`"))),
        }
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.0.get(key) {
            None => Ok(default.to_vec()),
            Some(HpValue::List(items)) => items
                .iter()
                .map(|v| match v {
                    HpValue::Number(x) => as_count(key, *x),
                    other => Err(Error::hp(key, format!("expected integers, got `{other}`"))),
                })
                .collect(),
            Some(other) => Err(Error::hp(key, format!("expected a list, got `{other}`"))),
        }
    }
}

fn as_count(key: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::hp(key, format!("expected a non-negative integer, got {v}")))
    }
}
