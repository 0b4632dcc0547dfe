//! Serde helpers that store numeric vectors as base64 blocks of
//! little-endian `f64`, so bundles round-trip every bit (NaN included).

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

use crate::scalar::Scalar;

pub fn encode<T: Scalar>(v: &[T]) -> String {
    let mut bytes = Vec::with_capacity(v.len() * 8);
    for x in v {
        bytes.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode<T: Scalar>(s: &str) -> Result<Vec<T>, String> {
    let bytes = STANDARD.decode(s.trim()).map_err(|e| format!("bad numeric block: {e}"))?;
    if bytes.len() % 8 != 0 {
        return Err(format!("numeric block length {} is not a multiple of 8", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

/// `#[serde(with = "crate::codec::block")]` for `Vec<T>` fields.
pub mod block {
    use super::*;

    #[allow(clippy::ptr_arg)]
    pub fn serialize<T: Scalar, S: Serializer>(v: &Vec<T>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(v))
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        let s = String::deserialize(d)?;
        decode(&s).map_err(D::Error::custom)
    }
}

/// `#[serde(with = "crate::codec::blocks")]` for `Vec<Vec<T>>` fields.
pub mod blocks {
    use super::*;
    use serde::ser::SerializeSeq;

    #[allow(clippy::ptr_arg)]
    pub fn serialize<T: Scalar, S: Serializer>(v: &Vec<Vec<T>>, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for b in v {
            seq.serialize_element(&encode(b))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<T>>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| decode(s).map_err(D::Error::custom)).collect()
    }
}

/// `#[serde(with = "crate::codec::real")]` for a single `T` that may be non-finite.
pub mod real {
    use super::*;

    pub fn serialize<T: Scalar, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(std::slice::from_ref(v)))
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let s = String::deserialize(d)?;
        let v: Vec<T> = decode(&s).map_err(D::Error::custom)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(D::Error::custom("expected a single value")),
        }
    }
}

/// `#[serde(with = "crate::codec::lenient")]` for report floats that are
/// usually finite. Finite values stay plain JSON numbers; infinities and NaN
/// are written as the strings `"inf"`, `"-inf"` and `"nan"`, since JSON has
/// no literal for them.
pub mod lenient {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("expected a number, \"inf\", \"-inf\" or \"nan\", got {other:?}"))),
            },
        }
    }
}
