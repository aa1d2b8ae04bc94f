//! Small helpers for the one-line `key=value` text records embedded in
//! checkpoints and manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! parsed back from a record is bit-identical to the one written.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub(crate) fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn split_floats(text: &str) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number {t:?}")))
        })
        .collect()
}

/// Parses `k1=v1 k2=v2 ...` into a map. Values may not contain spaces.
pub(crate) fn parse_fields(record: &str) -> Result<BTreeMap<&str, &str>> {
    let mut out = BTreeMap::new();
    for tok in record.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("field without '=': {tok:?}")))?;
        if out.insert(k, v).is_some() {
            return Err(Error::InvalidInput(format!("duplicate field {k:?}")));
        }
    }
    Ok(out)
}

pub(crate) fn field<'a>(fields: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("missing field {key:?}")))
}

pub(crate) fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::InvalidInput(format!("bad {what}: {text:?}")))
}
