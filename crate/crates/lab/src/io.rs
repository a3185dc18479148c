//! Point files, output files and hashing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use riesz_core::Points;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Numeric rows of a text file. Fields split on whitespace or commas; `#`
/// starts a comment; blank lines are skipped.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: not a number", path.display(), no + 1))?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                bail!("{}:{}: expected {first} columns, found {}", path.display(), no + 1, row.len());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(rows)
}

/// A point per row; `dim` checks the column count when given.
pub fn read_points(path: &Path, dim: Option<usize>) -> Result<Points> {
    let rows = read_rows(path)?;
    let d = rows[0].len();
    if let Some(want) = dim {
        if d != want {
            bail!("{}: points have {d} coordinates, expected {want}", path.display());
        }
    }
    Ok(Points::from_rows(d, &rows)?)
}

/// Rows `x1 … xd value`.
pub fn read_weighted_points(path: &Path, dim: usize) -> Result<(Points, Vec<f64>)> {
    let rows = read_rows(path)?;
    if rows[0].len() != dim + 1 {
        bail!("{}: expected {} columns (point then value), found {}", path.display(), dim + 1, rows[0].len());
    }
    let coords: Vec<&[f64]> = rows.iter().map(|r| &r[..dim]).collect();
    let values = rows.iter().map(|r| r[dim]).collect();
    Ok((Points::from_rows(dim, &coords)?, values))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// A CSV table built in memory. Floats use Rust's shortest round-trip
/// formatting, so equal values always print the same.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    /// Header `x1_1,…,x1_d,x2_1,…` for flattened configurations.
    pub fn configurations(n: usize, d: usize) -> Self {
        let cols: Vec<String> = (1..=n).flat_map(|i| (1..=d).map(move |k| format!("x{i}_{k}"))).collect();
        Self { text: format!("{}\n", cols.join(",")), columns: n * d }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Int(v) => write!(self.text, "{v}"),
                Cell::Num(v) => write!(self.text, "{v:?}"),
            }
            .expect("writing to a String");
        }
        self.text.push('\n');
    }

    pub fn values(&mut self, xs: &[f64]) {
        let cells: Vec<Cell> = xs.iter().map(|x| Cell::Num(*x)).collect();
        self.row(&cells);
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum Cell {
    Int(usize),
    Num(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

/// Output directory of one run; remembers every file it writes.
pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        // a stale error report from an earlier failed run would mislead
        let _ = fs::remove_file(dir.join("error.json"));
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.retain(|f| f.name != name);
        self.files.push(OutputFile { name: name.into(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &to_json(value)?)
    }

    pub fn csv(&mut self, name: &str, table: Csv) -> Result<()> {
        self.write(name, &table.into_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_mixed_separators_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.txt");
        fs::write(&p, "# header\n1, 0 0\n\n0 1,0  # tail\n").unwrap();
        let pts = read_points(&p, Some(3)).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts.get(1), &[0.0, 1.0, 0.0]);
        assert!(read_points(&p, Some(4)).is_err());
        fs::write(&p, "1 2 3\n1 2\n").unwrap();
        assert!(read_rows(&p).is_err());
    }

    #[test]
    fn csv_formatting_round_trips() {
        let mut t = Csv::new(&["n", "v"]);
        t.row(&[Cell::Int(3), Cell::Num(0.1 + 0.2)]);
        t.row(&[Cell::Int(4), Cell::Num(1.0)]);
        let s = t.into_string();
        assert_eq!(s, "n,v\n3,0.30000000000000004\n4,1.0\n");
        assert_eq!(Csv::configurations(2, 2).into_string(), "x1_1,x1_2,x2_1,x2_2\n");
    }
}
