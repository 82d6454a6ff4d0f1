use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::graph::{AttrValue, Scalar};
use crate::num::format_number;

/// Scalar usable as a set member or for sorting. Text covers both strings
/// and node ids, which compare equal by content.
#[derive(Debug, Clone)]
pub enum Key {
    Missing,
    Bool(bool),
    Num(f64),
    Text(String),
}

impl Key {
    fn rank(&self) -> u8 {
        match self {
            Key::Missing => 0,
            Key::Bool(_) => 1,
            Key::Num(_) => 2,
            Key::Text(_) => 3,
        }
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Key::Bool(a), Key::Bool(b)) => a.cmp(b),
            (Key::Num(a), Key::Num(b)) => a.total_cmp(b),
            (Key::Text(a), Key::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl From<Key> for Value {
    fn from(k: Key) -> Self {
        match k {
            Key::Missing => Value::Missing,
            Key::Bool(b) => Value::Bool(b),
            Key::Num(n) => Value::Num(n),
            Key::Text(s) => Value::Str(s),
        }
    }
}

/// Runtime value of the snippet language.
#[derive(Debug, Clone)]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    Missing,
    NodeId(String),
    List(Vec<Value>),
    Set(BTreeSet<Key>),
    Dict(BTreeMap<String, Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Missing => "Missing",
            Value::NodeId(_) => "node id",
            Value::List(_) => "list",
            Value::Set(_) => "set",
            Value::Dict(_) => "dict",
        }
    }

    /// String content of a string or node id.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::NodeId(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_key(&self) -> Option<Key> {
        Some(match self {
            Value::Missing => Key::Missing,
            Value::Bool(b) => Key::Bool(*b),
            Value::Num(n) => Key::Num(if *n == 0.0 { 0.0 } else { *n }),
            Value::Str(s) | Value::NodeId(s) => Key::Text(s.clone()),
            _ => return None,
        })
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Num(n) => *n != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::NodeId(_) => true,
            Value::Missing => false,
            Value::List(l) => !l.is_empty(),
            Value::Set(s) => !s.is_empty(),
            Value::Dict(d) => !d.is_empty(),
        }
    }

    /// Structural equality. Strings equal node ids with the same text.
    /// Any comparison involving Missing is false.
    pub fn loose_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Missing, _) | (_, Value::Missing) => false,
            (Value::Num(a), Value::Num(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.loose_eq(y))
            }
            (Value::Set(a), Value::Set(b)) => a == b,
            (Value::Dict(a), Value::Dict(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|((ka, va), (kb, vb))| ka == kb && va.loose_eq(vb))
            }
            _ => match (self.as_text(), other.as_text()) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            },
        }
    }

    pub fn from_attr(v: Option<AttrValue>) -> Value {
        fn scalar(s: Scalar) -> Value {
            match s {
                Scalar::Bool(b) => Value::Bool(b),
                Scalar::Num(n) => Value::Num(n),
                Scalar::Str(s) => Value::Str(s),
            }
        }
        match v {
            None => Value::Missing,
            Some(AttrValue::Scalar(s)) => scalar(s),
            Some(AttrValue::List(items)) => Value::List(items.into_iter().map(scalar).collect()),
        }
    }
}

fn write_seq<'a, T: fmt::Display + 'a>(
    f: &mut fmt::Formatter<'_>,
    items: impl Iterator<Item = T>,
) -> fmt::Result {
    for (i, item) in items.enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Value::from(self.clone()).fmt(f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) | Value::NodeId(s) => f.write_str(s),
            Value::Num(n) => f.write_str(&format_number(*n)),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Missing => f.write_str("Missing"),
            Value::List(items) => {
                f.write_str("[")?;
                write_seq(f, items.iter())?;
                f.write_str("]")
            }
            Value::Set(items) if items.is_empty() => f.write_str("set()"),
            Value::Set(items) => {
                f.write_str("{")?;
                write_seq(f, items.iter())?;
                f.write_str("}")
            }
            Value::Dict(map) => {
                f.write_str("{")?;
                write_seq(f, map.iter().map(|(k, v)| format!("{k}: {v}")))?;
                f.write_str("}")
            }
        }
    }
}
