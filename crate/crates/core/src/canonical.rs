//! Canonical JSON writer and content digests.
//!
//! Objects are written with lexicographically sorted keys and no
//! insignificant whitespace. Floats are written either in shortest
//! round-trip form (scenes, event logs, manifests) or with exactly six
//! decimals (heatmap and phantom exports). Integers are always written
//! as integers.

use serde_json::Value;
use sha2::{Digest, Sha256};

/// Float formatting used by [`to_string`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatStyle {
    /// Shortest representation that parses back to the identical `f64`.
    Shortest,
    /// Exactly six digits after the decimal point.
    Fixed6,
}

pub fn to_string(value: &Value, style: FloatStyle) -> String {
    let mut out = String::new();
    write_value(&mut out, value, style);
    out
}

pub fn to_bytes(value: &Value, style: FloatStyle) -> Vec<u8> {
    to_string(value, style).into_bytes()
}

fn write_value(out: &mut String, value: &Value, style: FloatStyle) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().unwrap_or(0.0);
                match style {
                    FloatStyle::Shortest => out.push_str(&n.to_string()),
                    FloatStyle::Fixed6 => {
                        let s = format!("{f:.6}");
                        // "-0.000000" and "0.000000" must not diverge.
                        if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
                            out.push_str(&s[1..]);
                        } else {
                            out.push_str(&s);
                        }
                    }
                }
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => write_str(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item, style);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_str(out, key);
                out.push(':');
                write_value(out, &map[key], style);
            }
            out.push('}');
        }
    }
}

fn write_str(out: &mut String, s: &str) {
    // serde_json's string escaping is already canonical (minimal escapes).
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

/// A float as a JSON number that is always written in float form.
pub fn float(f: f64) -> Value {
    serde_json::Number::from_f64(f)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_recursively() {
        let v = json!({"b": 1, "a": {"z": true, "c": null}});
        assert_eq!(
            to_string(&v, FloatStyle::Shortest),
            r#"{"a":{"c":null,"z":true},"b":1}"#
        );
    }

    #[test]
    fn fixed6_formats_floats_but_not_integers() {
        let v = json!({"count": 3, "mean": float(0.4), "max": float(1.0)});
        assert_eq!(
            to_string(&v, FloatStyle::Fixed6),
            r#"{"count":3,"max":1.000000,"mean":0.400000}"#
        );
    }

    #[test]
    fn fixed6_parse_then_write_is_identity() {
        let v = json!({"a": [float(0.123456789), float(0.5)], "n": 7});
        let once = to_string(&v, FloatStyle::Fixed6);
        let parsed: Value = serde_json::from_str(&once).unwrap();
        assert_eq!(to_string(&parsed, FloatStyle::Fixed6), once);
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(to_string(&float(-1e-9), FloatStyle::Fixed6), "0.000000");
    }

    #[test]
    fn shortest_round_trips_exactly() {
        let x = 0.1 + 0.2;
        let s = to_string(&float(x), FloatStyle::Shortest);
        assert_eq!(s.parse::<f64>().unwrap(), x);
    }
}
