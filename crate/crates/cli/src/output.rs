//! Atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use kpcert::grid::{node, GridPair};

use crate::CliError;

/// Writes `bytes` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.as_file().sync_all().map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

/// CSV with columns `x_label, u1, u2` on the uniform grid of `[0, 1]`.
pub fn grid_pair_csv(u: &GridPair, x_label: &str) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record([x_label, "u1", "u2"]).map_err(io)?;
    let n = u.len();
    for k in 0..n {
        let row = [node(k, n), u.u1.values()[k], u.u2.values()[k]];
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Reads a CSV written by [`grid_pair_csv`]. The first column must hold the
/// uniform grid.
pub fn read_grid_pair_csv(path: &Path) -> Result<GridPair, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (c1, c2) = match (col("u1"), col("u2")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(bad("need columns u1 and u2".into())),
    };
    let cx = col("r").or_else(|| col("t")).ok_or_else(|| bad("need a column r or t".into()))?;
    let mut xs = Vec::new();
    let mut u1 = Vec::new();
    let mut u2 = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |c: usize| -> Result<f64, CliError> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 2, c + 1)))
        };
        xs.push(field(cx)?);
        u1.push(field(c1)?);
        u2.push(field(c2)?);
    }
    let n = xs.len();
    if n < 2 {
        return Err(bad(format!("need at least 2 rows, got {n}")));
    }
    for (k, &x) in xs.iter().enumerate() {
        if (x - node(k, n)).abs() > 1e-9 {
            return Err(bad(format!("row {}: grid value {x} is not the uniform node {}", k + 2, node(k, n))));
        }
    }
    let f = |v| kpcert::grid::GridFunction::new(v).map_err(|e| bad(e.to_string()));
    GridPair::new(f(u1)?, f(u2)?).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let u = GridPair::new(
            kpcert::grid::GridFunction::from_fn(9, |t| 1.0 - t * t).unwrap(),
            kpcert::grid::GridFunction::from_fn(9, |t| (1.0 - t) / 3.0).unwrap(),
        )
        .unwrap();
        let path = write_atomic(dir.path(), "u.csv", &grid_pair_csv(&u, "r").unwrap()).unwrap();
        assert_eq!(read_grid_pair_csv(&path).unwrap(), u);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", b"first").unwrap();
        let p = write_atomic(dir.path(), "a.txt", b"second").unwrap();
        assert_eq!(std::fs::read(p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn rejects_nonuniform_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_atomic(dir.path(), "u.csv", b"r,u1,u2\n0,1,1\n0.7,0.5,0.5\n1,0,0\n").unwrap();
        assert!(read_grid_pair_csv(&p).is_err());
    }
}
