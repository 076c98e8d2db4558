//! Report envelopes, input digests and flat comparison tables.

use std::io::Write;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON has no infinities: non-finite floats are written as strings.
pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn ser_vec_f64<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct F(#[serde(serialize_with = "ser_f64")] f64);
    s.collect_seq(v.iter().map(|&x| F(x)))
}

pub fn ser_opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser_f64(x, s),
        None => s.serialize_none(),
    }
}

/// Hex SHA-256 of the JSON encoding of `inputs`.
pub fn inputs_digest<T: Serialize + ?Sized>(inputs: &T) -> Result<String> {
    let bytes = serde_json::to_vec(inputs).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One JSON document per test run.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T> {
    pub test: String,
    pub mode: String,
    pub library_version: String,
    pub inputs_digest: String,
    pub pass: bool,
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new<I: Serialize + ?Sized>(
        test: &str,
        mode: &str,
        inputs: &I,
        pass: bool,
        body: T,
    ) -> Result<Self> {
        Ok(Self {
            test: test.to_string(),
            mode: mode.to_string(),
            library_version: LIBRARY_VERSION.to_string(),
            inputs_digest: inputs_digest(inputs)?,
            pass,
            body,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// One observed-versus-target comparison, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub section: String,
    pub key: String,
    #[serde(serialize_with = "ser_f64")]
    pub observed: f64,
    #[serde(serialize_with = "ser_f64")]
    pub target: f64,
    #[serde(serialize_with = "ser_f64")]
    pub residual: f64,
    #[serde(serialize_with = "ser_f64")]
    pub bound: f64,
}

fn csv_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "+inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_cells_csv<W: Write>(out: W, rows: &[CellRow]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["section", "key", "observed", "target", "residual", "bound"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.section.clone(),
            r.key.clone(),
            csv_float(r.observed),
            csv_float(r.target),
            csv_float(r.residual),
            csv_float(r.bound),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Probe {
        #[serde(serialize_with = "ser_f64")]
        a: f64,
        #[serde(serialize_with = "ser_vec_f64")]
        b: Vec<f64>,
    }

    #[test]
    fn infinities_become_strings() {
        let p = Probe {
            a: f64::INFINITY,
            b: vec![1.5, f64::NEG_INFINITY, f64::NAN],
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"a":"+inf","b":[1.5,"-inf","nan"]}"#);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = inputs_digest(&(1, "x")).unwrap();
        assert_eq!(a, inputs_digest(&(1, "x")).unwrap());
        assert_ne!(a, inputs_digest(&(2, "x")).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn envelope_and_csv() {
        let r = Report::new("t", "exact", &[1.0], true, vec![2]).unwrap();
        let json = r.to_json().unwrap();
        assert!(json.contains("\"library_version\""));
        assert!(json.contains(LIBRARY_VERSION));
        let mut buf = Vec::new();
        write_cells_csv(
            &mut buf,
            &[CellRow {
                section: "s".into(),
                key: "n=1".into(),
                observed: 0.5,
                target: f64::INFINITY,
                residual: 0.0,
                bound: 1e-10,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "section,key,observed,target,residual,bound\ns,n=1,5e-1,+inf,0e0,1e-10\n"
        );
    }
}
