//! Scalar values, records, and their canonical serialization.
//!
//! Every digest in the system (cache keys, module parameter digests,
//! record digests) is computed over the canonical form defined here, so
//! the rendering must stay byte-stable: field names sorted, numbers in
//! a fixed decimal form.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A scalar value flowing through the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
    List(Vec<String>),
}

impl Value {
    pub fn as_text(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Number(n) => render_number(*n),
            Value::List(items) => format!("[{}]", items.join(", ")),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_text())
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Number(n)
    }
}

/// Render a number without locale or exponent surprises.
///
/// Integers drop the fractional part; everything else uses the shortest
/// round-trippable decimal form.
pub fn render_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// One data record: a mapping from field name to value.
///
/// Fields are kept sorted so canonical serialization is free.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Record {
    pub fields: BTreeMap<String, Value>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.fields.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.get(name)
    }

    /// Canonical text form: `name=value` lines, fields sorted by name.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.fields {
            out.push_str(name);
            out.push('=');
            out.push_str(&value.as_text());
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }
}

/// Stable 64-bit FNV-1a content hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sorts_fields() {
        let r = Record::new().with("b", "2").with("a", "1");
        assert_eq!(r.canonical(), "a=1\nb=2\n");
    }

    #[test]
    fn digest_stable_across_insertion_order() {
        let r1 = Record::new().with("x", 1.0).with("y", "t");
        let r2 = Record::new().with("y", "t").with("x", 1.0);
        assert_eq!(r1.digest(), r2.digest());
    }

    #[test]
    fn digest_sensitive_to_content() {
        let r1 = Record::new().with("x", "a");
        let r2 = Record::new().with("x", "b");
        assert_ne!(r1.digest(), r2.digest());
    }

    #[test]
    fn number_rendering() {
        assert_eq!(render_number(3.0), "3");
        assert_eq!(render_number(19.99), "19.99");
        assert_eq!(render_number(-2.0), "-2");
    }
}
