//! Versioned textual parameter records.
//!
//! A checkpoint is a header line, `meta` key/value lines, then one block per
//! matrix with a shape header and one row per line. Floats are written with
//! Rust's shortest round-trip formatting, so a given model always serializes
//! to identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

const HEADER: &str = "bngnn-checkpoint v1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub matrices: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            meta: BTreeMap::new(),
            matrices: Vec::new(),
        }
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta_str(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("meta key {key} failed to parse")))
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Checkpoint(format!("missing matrix {name}")))
    }

    pub fn to_string_stable(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
            for i in 0..m.rows() {
                let row = m.row(i);
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{v}");
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string_stable())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == HEADER => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "bad header {:?}, expected {HEADER:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut ck = Checkpoint::new();
        let mut pending: Option<(String, usize, usize, Vec<f64>)> = None;
        let mut saw_end = false;
        for line in lines {
            if let Some((name, rows, cols, data)) = pending.as_mut() {
                let before = data.len();
                for tok in line.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::Checkpoint(format!("bad float {tok} in {name}")))?;
                    data.push(v);
                }
                if data.len() == before + *cols && data.len() == *rows * *cols {
                    let (name, rows, cols, data) = pending.take().unwrap();
                    ck.matrices.push((name, Matrix::new(rows, cols, data)?));
                }
                continue;
            }
            if line == "end" {
                saw_end = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Checkpoint(format!("bad meta line {line:?}")))?;
                ck.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Checkpoint(format!("bad matrix header {line:?}")));
                }
                let rows: usize = parts[1]
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad matrix rows".into()))?;
                let cols: usize = parts[2]
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad matrix cols".into()))?;
                if rows * cols == 0 {
                    ck.matrices
                        .push((parts[0].to_string(), Matrix::zeros(rows, cols)));
                } else {
                    pending = Some((parts[0].to_string(), rows, cols, Vec::new()));
                }
            } else {
                return Err(Error::Checkpoint(format!("unexpected line {line:?}")));
            }
        }
        if pending.is_some() {
            return Err(Error::Checkpoint("truncated matrix block".into()));
        }
        if !saw_end {
            return Err(Error::Checkpoint("missing end marker".into()));
        }
        Ok(ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}
