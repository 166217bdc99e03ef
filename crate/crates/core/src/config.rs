//! Configurations: ordered hyperparameter maps identified by a content hash.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::to_canonical_string;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Token(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Real(x) => Some(x),
            ParamValue::Token(_) => None,
        }
    }

    /// Parses the right-hand side of a `name=value` selector.
    pub fn parse_loose(s: &str) -> ParamValue {
        if let Ok(i) = s.parse::<i64>() {
            ParamValue::Int(i)
        } else if let Ok(x) = s.parse::<f64>() {
            ParamValue::Real(x)
        } else {
            ParamValue::Token(s.to_string())
        }
    }

    /// Numeric values compare by value (within 1e-12 relative), tokens by text.
    pub fn loosely_equals(&self, other: &ParamValue) -> bool {
        match (self, other) {
            (ParamValue::Token(a), ParamValue::Token(b)) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-12 * x.abs().max(y.abs()),
                _ => false,
            },
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Token(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration id mismatch: recorded {recorded}, computed {computed}")]
    IdMismatch { recorded: String, computed: String },
    #[error("parameter `{0}` is not a finite number")]
    NonFinite(String),
}

/// A hyperparameter map with a content-derived id.
///
/// The id is the first 16 hex digits of the SHA-256 of the canonical
/// rendering, so equal maps always share an id regardless of insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration")]
pub struct Configuration {
    id: String,
    params: BTreeMap<String, ParamValue>,
}

#[derive(Deserialize)]
struct RawConfiguration {
    #[serde(default)]
    id: Option<String>,
    params: BTreeMap<String, ParamValue>,
}

impl TryFrom<RawConfiguration> for Configuration {
    type Error = ConfigError;

    fn try_from(raw: RawConfiguration) -> Result<Self, ConfigError> {
        let cfg = Configuration::new(raw.params)?;
        match raw.id {
            Some(id) if id != cfg.id => Err(ConfigError::IdMismatch {
                recorded: id,
                computed: cfg.id,
            }),
            _ => Ok(cfg),
        }
    }
}

impl Configuration {
    pub fn new(params: BTreeMap<String, ParamValue>) -> Result<Self, ConfigError> {
        for (k, v) in &params {
            if let ParamValue::Real(x) = v {
                if !x.is_finite() {
                    return Err(ConfigError::NonFinite(k.clone()));
                }
            }
        }
        let canonical = to_canonical_string(&params).expect("finite params render");
        let digest = Sha256::digest(canonical.as_bytes());
        let id = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { id, params })
    }

    pub fn from_pairs<I, K>(pairs: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, ParamValue)>,
        K: Into<String>,
    {
        Self::new(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// The id as a 64-bit integer, for keying deterministic generators.
    pub fn fingerprint(&self) -> u64 {
        u64::from_str_radix(&self.id, 16).expect("id is 16 hex digits")
    }

    pub fn params(&self) -> &BTreeMap<String, ParamValue> {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.params.get(name)
    }

    pub fn with(&self, name: &str, value: ParamValue) -> Configuration {
        let mut params = self.params.clone();
        params.insert(name.to_string(), value);
        Configuration::new(params).expect("mutated value is finite")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.id)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}
