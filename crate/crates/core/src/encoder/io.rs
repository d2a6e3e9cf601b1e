//! Embedding file format:
//!
//! ```text
//! srpo-emb v1 <D> <count>
//! <key> <v_1> ... <v_D>
//! ```
//!
//! Keys contain no whitespace. Window embeddings of a trajectory use the key
//! produced by [`window_key`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Embedding;
use crate::{Error, Result};

/// Key for the `k`-th cumulative window of trajectory `key`.
pub fn window_key(key: &str, k: usize) -> String {
    format!("{key}@{k}")
}

pub fn export_embeddings(path: impl AsRef<Path>, records: &[(String, Embedding)]) -> Result<()> {
    let path = path.as_ref();
    let dim = records.first().map_or(0, |(_, e)| e.dim());
    let mut out = format!("srpo-emb v1 {dim} {}\n", records.len());
    for (key, e) in records {
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(Error::Contract(format!("embedding key {key:?} is empty or has whitespace")));
        }
        if e.dim() != dim {
            return Err(Error::shape(dim, e.dim()));
        }
        out.push_str(key);
        for v in &e.0 {
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn import_external_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<String, Embedding>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    if header.len() != 4 || header[0] != "srpo-emb" || header[1] != "v1" {
        return Err(Error::parse(&ctx, format!("malformed header {header:?}")));
    }
    let dim: usize = header[2]
        .parse()
        .map_err(|_| Error::parse(&ctx, format!("bad dimension {:?}", header[2])))?;
    let count: usize = header[3]
        .parse()
        .map_err(|_| Error::parse(&ctx, format!("bad count {:?}", header[3])))?;
    let mut out = BTreeMap::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let mut toks = line.split_whitespace();
        let key = toks.next().expect("non-empty line").to_string();
        let values: Vec<f64> = toks
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(&ctx, format!("record {i}: bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                &ctx,
                format!("record {i}: {} values, header says {dim}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(&ctx, format!("record {i}: non-finite value")));
        }
        if out.insert(key.clone(), Embedding(values)).is_some() {
            return Err(Error::parse(&ctx, format!("record {i}: duplicate key {key}")));
        }
    }
    if out.len() != count {
        return Err(Error::parse(
            &ctx,
            format!("header declares {count} records, found {}", out.len()),
        ));
    }
    Ok(out)
}
