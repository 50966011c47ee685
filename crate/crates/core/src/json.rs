//! JSON layout: complex numbers are `[re, im]`, matrices are row-major nested
//! arrays, top-level documents carry `"schema": "orbit-twistor/1"`. Floats are
//! written with 17 significant digits so that output is byte-stable.

use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "orbit-twistor/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub schema: String,
    pub kind: String,
    pub data: T,
}

impl<T> Document<T> {
    pub fn new(kind: &str, data: T) -> Self {
        Self { schema: SCHEMA.to_string(), kind: kind.to_string(), data }
    }
}

struct FixedFormatter;

impl serde_json::ser::Formatter for FixedFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            // JSON has no representation for these.
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFormatter);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn document<T: Serialize>(kind: &str, value: &T) -> String {
    to_string(&Document::new(kind, value))
}

/// Parses a document, accepting either the wrapped form or a bare payload.
pub fn from_str<T: DeserializeOwned>(s: &str) -> Result<T> {
    let v: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
    let payload = match v {
        serde_json::Value::Object(ref m) if m.contains_key("schema") => {
            let schema = m["schema"].as_str().unwrap_or_default();
            if schema != SCHEMA {
                return Err(Error::Parse(format!("unsupported schema {schema:?}")));
            }
            m.get("data").cloned().ok_or_else(|| Error::Parse("missing data".into()))?
        }
        other => other,
    };
    serde_json::from_value(payload).map_err(|e| Error::Parse(e.to_string()))
}

pub mod complex {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

pub mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

pub mod complex_rows {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Complex64>>, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
            .collect())
    }
}

pub mod matrix {
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<Complex64>, s: S) -> Result<S::Ok, S::Error> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<Complex64>, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let rows = raw.len();
        let cols = raw.first().map_or(0, Vec::len);
        if raw.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| Complex64::new(raw[i][j][0], raw[i][j][1])))
    }
}

/// Real matrices as row-major nested arrays.
pub mod real_matrix {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        let rows = raw.len();
        let cols = raw.first().map_or(0, Vec::len);
        if raw.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| raw[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(to_string(&vec![0.1f64, -2.0]), "[1.0000000000000001e-1,-2.0000000000000000e0]");
        let back: Vec<f64> = serde_json::from_str(&to_string(&vec![0.1f64, 1e-300])).unwrap();
        assert_eq!(back, vec![0.1, 1e-300]);
    }

    #[test]
    fn wrapped_and_bare_documents_parse() {
        let s = document("numbers", &vec![1.5f64]);
        assert!(s.starts_with("{\"schema\":\"orbit-twistor/1\""));
        let v: Vec<f64> = from_str(&s).unwrap();
        assert_eq!(v, vec![1.5]);
        let v: Vec<f64> = from_str("[2.5]").unwrap();
        assert_eq!(v, vec![2.5]);
        assert!(matches!(from_str::<Vec<f64>>("{\"schema\":\"other\",\"data\":[]}"), Err(Error::Parse(_))));
        assert!(matches!(from_str::<Vec<f64>>("{oops"), Err(Error::Parse(_))));
    }
}
