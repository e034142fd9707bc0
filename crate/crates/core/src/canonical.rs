//! Deterministic JSON encoding shared by document signing and the audit chain.
//!
//! Rules:
//! - object keys sorted bytewise
//! - array members sorted bytewise by their own canonical encoding
//! - no insignificant whitespace
//! - strings carry only the mandatory JSON escapes; everything else is raw UTF-8
//! - numbers must be integers, written in shortest decimal form

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalError {
    #[error("non-integer number {0} has no canonical form")]
    NonIntegerNumber(String),
}

/// Encode `value` canonically.
pub fn to_canonical_bytes(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(CanonicalError::NonIntegerNumber(n.to_string()));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            let mut encoded = items
                .iter()
                .map(to_canonical_bytes)
                .collect::<Result<Vec<_>, _>>()?;
            encoded.sort();
            out.push(b'[');
            for (i, item) in encoded.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend_from_slice(item);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, val)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(val, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    out.push(b'"');
    for &b in s.as_bytes() {
        match b {
            b'"' => out.extend_from_slice(b"\\\""),
            b'\\' => out.extend_from_slice(b"\\\\"),
            0x08 => out.extend_from_slice(b"\\b"),
            0x0c => out.extend_from_slice(b"\\f"),
            b'\n' => out.extend_from_slice(b"\\n"),
            b'\r' => out.extend_from_slice(b"\\r"),
            b'\t' => out.extend_from_slice(b"\\t"),
            0x00..=0x1f => {
                out.extend_from_slice(b"\\u00");
                out.push(HEX[(b >> 4) as usize]);
                out.push(HEX[(b & 0x0f) as usize]);
            }
            _ => out.push(b),
        }
    }
    out.push(b'"');
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn enc(v: Value) -> String {
        String::from_utf8(to_canonical_bytes(&v).unwrap()).unwrap()
    }

    #[test]
    fn keys_sorted_no_whitespace() {
        assert_eq!(enc(json!({"z": 1, "a": 2, "m": [3]})), r#"{"a":2,"m":[3],"z":1}"#);
    }

    #[test]
    fn arrays_sorted_bytewise() {
        assert_eq!(enc(json!(["b", "a", "B", "ä"])), r#"["B","a","b","ä"]"#);
        assert_eq!(enc(json!([10, 9, 1])), "[1,10,9]");
    }

    #[test]
    fn minimal_escapes() {
        assert_eq!(enc(json!("a\"b\\c\n\u{1}/é")), r#""a\"b\\c\n\u0001/é""#);
        assert_eq!(enc(json!("\u{7f}")), "\"\u{7f}\"");
    }

    #[test]
    fn floats_rejected() {
        assert!(matches!(
            to_canonical_bytes(&json!({"v": 1.5})),
            Err(CanonicalError::NonIntegerNumber(_))
        ));
    }

    #[test]
    fn nested_keys_sorted() {
        assert_eq!(
            enc(json!({"b": {"y": null, "x": true}, "a": false})),
            r#"{"a":false,"b":{"x":true,"y":null}}"#
        );
    }
}
