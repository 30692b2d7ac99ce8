//! Node-ordered field files with the header `x,y,region,u`.
//!
//! Values are written with 17 significant digits so that reading a file back
//! reproduces every `f64` bit for bit.

use std::io::Write;
use std::path::{Path, PathBuf};

use varinf_core::{Error, Grid, Region, ScalarField};

pub const HEADER: [&str; 4] = ["x", "y", "region", "u"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: expected header x,y,region,u")]
    Header { path: PathBuf },
    #[error("{path}: record {record}: {message}")]
    Record {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Shape { path: PathBuf, source: Error },
}

/// One row of a field file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub region: Region,
    pub u: f64,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `u` on `grid` to `path`.
pub fn write_field(path: &Path, grid: &Grid, u: &ScalarField) -> Result<(), CsvError> {
    let io = |source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "{}", HEADER.join(",")).map_err(io)?;
    for (node, v) in u.values().iter().enumerate() {
        let [x, y] = grid.coords(node);
        writeln!(
            out,
            "{},{},{},{}",
            fmt17(x),
            fmt17(y),
            grid.label(node).name(),
            fmt17(*v)
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads every row of a field file.
pub fn read_field(path: &Path) -> Result<Vec<FieldRow>, CsvError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| CsvError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let header = reader.headers().map_err(|source| CsvError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(CsvError::Header {
            path: path.to_path_buf(),
        });
    }
    let mut rows = Vec::new();
    for (record, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| CsvError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |message: String| CsvError::Record {
            path: path.to_path_buf(),
            record: record + 1,
            message,
        };
        let num = |i: usize| -> Result<f64, CsvError> {
            let s = rec[i].trim();
            s.parse().map_err(|_| bad(format!("`{s}` is not a number")))
        };
        let region = Region::from_name(rec[2].trim())
            .ok_or_else(|| bad(format!("unknown region `{}`", &rec[2])))?;
        rows.push(FieldRow {
            x: num(0)?,
            y: num(1)?,
            region,
            u: num(3)?,
        });
    }
    Ok(rows)
}

/// Reads a field file and checks it against `grid`.
pub fn read_field_on(path: &Path, grid: &Grid) -> Result<ScalarField, CsvError> {
    let rows = read_field(path)?;
    let values: Vec<f64> = rows.iter().map(|r| r.u).collect();
    ScalarField::new(grid, values).map_err(|source| CsvError::Shape {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use varinf_core::{build_grid, DomainSpec, Rect};

    #[test]
    fn round_trip_is_bit_exact() {
        let d = Rect::new(0.25, 0.75, 0.25, 0.75).unwrap();
        let grid = build_grid(&DomainSpec::new(Rect::unit(), Some(d), (9, 9))).unwrap();
        let u = ScalarField::from_fn(&grid, |x, y| (x * 3.7).sin() / (1.0 + y) * 1e-7 + 1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_field(&path, &grid, &u).unwrap();
        let rows = read_field(&path).unwrap();
        for (node, row) in rows.iter().enumerate() {
            assert_eq!(row.u.to_bits(), u.values()[node].to_bits());
            assert_eq!(row.region, grid.label(node));
            assert_eq!([row.x, row.y], grid.coords(node));
        }
        let back = read_field_on(&path, &grid).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn wrong_node_count_is_a_shape_mismatch() {
        let small = build_grid(&DomainSpec::new(Rect::unit(), None, (5, 5))).unwrap();
        let big = build_grid(&DomainSpec::new(Rect::unit(), None, (6, 6))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_field(&path, &small, &ScalarField::zeros(&small)).unwrap();
        match read_field_on(&path, &big) {
            Err(CsvError::Shape {
                source: Error::ShapeMismatch { expected, found },
                ..
            }) => assert_eq!((expected, found), (36, 25)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        std::fs::write(&path, "a,b,c,d\n0,0,INNER,0\n").unwrap();
        assert!(matches!(read_field(&path), Err(CsvError::Header { .. })));
    }
}
