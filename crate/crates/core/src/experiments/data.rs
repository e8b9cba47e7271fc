//! Dataset directory I/O.
//!
//! A dataset directory holds `labels.csv` (lines of `id,class`) and one
//! matrix file per instance (`<id>.csv`, dense comma-separated rows).
//! Generated synthetic datasets also carry `depths.csv` (`id,depth`) with
//! per-instance ground-truth optimal depths; the loader treats it as
//! optional supplementary data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::netbuild::WeightedGraph;
use crate::numerics::matrix::Matrix;

fn data_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a dataset directory; graphs come back ordered by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<WeightedGraph>> {
    let labels_path = dir.join("labels.csv");
    let text = std::fs::read_to_string(&labels_path)
        .map_err(|e| data_err(&labels_path, 0, format!("cannot read labels: {e}")))?;
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, class) = line
            .split_once(',')
            .ok_or_else(|| data_err(&labels_path, lineno + 1, "expected id,class"))?;
        let class: usize = class
            .trim()
            .parse()
            .map_err(|_| data_err(&labels_path, lineno + 1, format!("bad class {class:?}")))?;
        if class > 1 {
            return Err(data_err(
                &labels_path,
                lineno + 1,
                format!("labels must be 0 or 1, got {class}"),
            ));
        }
        if labels.insert(id.trim().to_string(), class).is_some() {
            return Err(data_err(
                &labels_path,
                lineno + 1,
                format!("duplicate id {id:?}"),
            ));
        }
    }
    if labels.is_empty() {
        return Err(data_err(&labels_path, 0, "no labeled instances"));
    }

    let mut graphs = Vec::with_capacity(labels.len());
    let mut expected_n: Option<usize> = None;
    for (id, class) in labels {
        let mpath = dir.join(format!("{id}.csv"));
        let w = load_matrix(&mpath)?;
        if w.rows() != w.cols() {
            return Err(data_err(
                &mpath,
                0,
                format!("matrix must be square, got {}x{}", w.rows(), w.cols()),
            ));
        }
        match expected_n {
            None => expected_n = Some(w.rows()),
            Some(n) if n != w.rows() => {
                return Err(data_err(
                    &mpath,
                    0,
                    format!("inconsistent node count {} (dataset uses {n})", w.rows()),
                ))
            }
            _ => {}
        }
        graphs.push(WeightedGraph::new(id, w, class)?);
    }
    Ok(graphs)
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(path, 0, format!("cannot read matrix: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| {
                data_err(path, lineno + 1, format!("bad value {:?}", tok.trim()))
            })?;
            if !v.is_finite() {
                return Err(data_err(path, lineno + 1, format!("non-finite value {v}")));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(data_err(
                    path,
                    lineno + 1,
                    format!("ragged row: {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err(path, 0, "empty matrix file"));
    }
    Matrix::from_rows(&rows)
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes a dataset directory (labels and matrices; depths when given).
pub fn save_dataset(
    dir: &Path,
    graphs: &[WeightedGraph],
    depths: Option<&BTreeMap<String, usize>>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut labels = String::new();
    for g in graphs {
        let _ = writeln!(labels, "{},{}", g.id, g.label);
        std::fs::write(dir.join(format!("{}.csv", g.id)), matrix_to_csv(&g.w))?;
    }
    std::fs::write(dir.join("labels.csv"), labels)?;
    if let Some(depths) = depths {
        let mut text = String::new();
        for (id, d) in depths {
            let _ = writeln!(text, "{id},{d}");
        }
        std::fs::write(dir.join("depths.csv"), text)?;
    }
    Ok(())
}

/// Ground-truth depths written by the synthetic generator, when present.
pub fn load_depths(dir: &Path) -> Result<Option<BTreeMap<String, usize>>> {
    let path: PathBuf = dir.join("depths.csv");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, d) = line
            .split_once(',')
            .ok_or_else(|| data_err(&path, lineno + 1, "expected id,depth"))?;
        let d: usize = d
            .trim()
            .parse()
            .map_err(|_| data_err(&path, lineno + 1, format!("bad depth {d:?}")))?;
        out.insert(id.trim().to_string(), d);
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tmpdir();
        let g0 = WeightedGraph::new(
            "a0",
            Matrix::from_rows(&[vec![0.0, 1.5], vec![1.5, 0.0]]).unwrap(),
            0,
        )
        .unwrap();
        let g1 = WeightedGraph::new(
            "a1",
            Matrix::from_rows(&[vec![0.0, 0.25], vec![0.25, 0.0]]).unwrap(),
            1,
        )
        .unwrap();
        save_dataset(dir.path(), &[g0.clone(), g1.clone()], None).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].id, "a0");
        assert_eq!(back[0].label, 0);
        assert_eq!(back[1].label, 1);
        // bit-equal matrices after the round trip
        assert_eq!(back[0].w, g0.w);
        assert_eq!(back[1].w, g1.w);
    }

    #[test]
    fn rejects_nan_token() {
        let dir = tmpdir();
        std::fs::write(dir.path().join("labels.csv"), "x,0\n").unwrap();
        std::fs::write(dir.path().join("x.csv"), "0.0,NaN\n1.0,0.0\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("x.csv"), "{err}");
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tmpdir();
        std::fs::write(dir.path().join("labels.csv"), "x,0\n").unwrap();
        std::fs::write(dir.path().join("x.csv"), "0.0,1.0\n1.0\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("ragged"), "{err}");
    }

    #[test]
    fn rejects_missing_matrix() {
        let dir = tmpdir();
        std::fs::write(dir.path().join("labels.csv"), "x,0\ny,1\n").unwrap();
        std::fs::write(dir.path().join("x.csv"), "0.0,1.0\n1.0,0.0\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn rejects_inconsistent_node_count() {
        let dir = tmpdir();
        std::fs::write(dir.path().join("labels.csv"), "x,0\ny,1\n").unwrap();
        std::fs::write(dir.path().join("x.csv"), "0.0,1.0\n1.0,0.0\n").unwrap();
        std::fs::write(
            dir.path().join("y.csv"),
            "0.0,1.0,2.0\n1.0,0.0,1.0\n2.0,1.0,0.0\n",
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("inconsistent"), "{err}");
    }

    #[test]
    fn depths_round_trip() {
        let dir = tmpdir();
        let g = WeightedGraph::new("z", Matrix::zeros(2, 2), 0).unwrap();
        let mut depths = BTreeMap::new();
        depths.insert("z".to_string(), 2usize);
        save_dataset(dir.path(), &[g], Some(&depths)).unwrap();
        let back = load_depths(dir.path()).unwrap().unwrap();
        assert_eq!(back.get("z"), Some(&2));
    }
}
