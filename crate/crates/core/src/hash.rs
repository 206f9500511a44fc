//! Content digests and canonical JSON encoding.
//!
//! Every value that flows through the engine is hashed over its canonical
//! form: compact JSON with object keys in ascending byte order and
//! integral floating point numbers written as integers. Two values that are
//! semantically equal therefore always hash the same, across runs and
//! platforms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

/// SHA-256 digest of canonical bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash([u8; 32]);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First two hex characters, used for directory fan-out.
    pub fn prefix(&self) -> String {
        hex::encode(&self.0[..1])
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", &self.to_hex()[..12])
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid content hash {0:?}: expected 64 lowercase hex characters")]
pub struct ParseHashError(String);

impl FromStr for ContentHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseHashError(s.to_string()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseHashError(s.to_string()))?;
        Ok(Self(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rewrites numbers into their normalized form: floats with no fractional
/// part (and within the exactly representable integer range) become
/// integers. Object key order is already canonical because `serde_json`
/// maps are ordered.
pub fn normalize(value: Value) -> Value {
    const EXACT: f64 = 9_007_199_254_740_992.0; // 2^53
    match value {
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().unwrap_or_default();
                if f.fract() == 0.0 && f.abs() < EXACT {
                    // -0.0 collapses to 0 as well
                    return Value::Number(Number::from(f as i64));
                }
            }
            Value::Number(n)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k, normalize(v)))
                .collect::<Map<_, _>>(),
        ),
        other => other,
    }
}

/// Canonical compact bytes of a serializable value.
pub fn canonical_bytes<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let v = normalize(serde_json::to_value(value)?);
    serde_json::to_vec(&v)
}

/// Canonical pretty form used for files meant to be read and diffed:
/// two-space indent, sorted keys, trailing LF.
pub fn canonical_pretty<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let v = normalize(serde_json::to_value(value)?);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

pub fn hash_canonical<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<ContentHash> {
    Ok(ContentHash::of(&canonical_bytes(value)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn known_digest() {
        assert_eq!(
            ContentHash::of(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hex_round_trip_and_rejects_garbage() {
        let h = ContentHash::of(b"x");
        assert_eq!(h.to_hex().parse::<ContentHash>().unwrap(), h);
        assert!("zz".parse::<ContentHash>().is_err());
        assert!(h.to_hex().to_uppercase().parse::<ContentHash>().is_err());
    }

    #[test]
    fn keys_sorted_and_numbers_normalized() {
        let a = json!({"b": 1.0, "a": [2.5, 3.0, -0.0]});
        assert_eq!(
            canonical_bytes(&a).unwrap(),
            br#"{"a":[2.5,3,0],"b":1}"#.to_vec()
        );
        let b = json!({"a": [2.5, 3, 0], "b": 1});
        assert_eq!(hash_canonical(&a).unwrap(), hash_canonical(&b).unwrap());
    }

    #[test]
    fn pretty_form_ends_with_lf() {
        let bytes = canonical_pretty(&json!({"z": 1, "a": 2})).unwrap();
        assert_eq!(bytes, b"{\n  \"a\": 2,\n  \"z\": 1\n}\n".to_vec());
    }
}
