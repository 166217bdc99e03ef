//! Canonical JSON rendering.
//!
//! Object keys are sorted and every floating-point number is written with 17
//! significant digits in scientific notation (`{:.16e}`), which round-trips
//! any `f64` exactly. Integers are written as integers. Two equal values always
//! render to the same bytes.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("non-finite number {0} cannot be rendered")]
    NonFinite(f64),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `{:.16e}` rendering of a finite float.
pub fn format_real(x: f64) -> Result<String, CanonicalError> {
    if !x.is_finite() {
        return Err(CanonicalError::NonFinite(x));
    }
    Ok(format!("{x:.16e}"))
}

pub fn to_canonical_string<S: Serialize + ?Sized>(value: &S) -> Result<String, CanonicalError> {
    let v = serde_json::to_value(value)?;
    render_value(&v)
}

pub fn render_value(v: &Value) -> Result<String, CanonicalError> {
    let mut out = String::new();
    write_value(&mut out, v)?;
    Ok(out)
}

fn write_value(out: &mut String, v: &Value) -> Result<(), CanonicalError> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                out.push_str(&format_real(f)?);
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k)?);
                out.push(':');
                write_value(out, &map[k])?;
            }
            out.push('}');
        }
    }
    Ok(())
}
