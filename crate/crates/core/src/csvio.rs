//! CSV readers and writers for grid fields, kernels and per-type curves.
//!
//! Grid files list one row per cell with type outermost (`j` outer, `i`
//! inner). Floats are written in shortest round-trip form, so reloading a
//! file reproduces the in-memory values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a three-column numeric CSV whose header must equal `header`.
pub fn read_triples(path: &Path, header: [&str; 3]) -> Result<Vec<[f64; 3]>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(parse_err(
            path,
            format!("expected header {}, found {}", header.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        if rec.len() != 3 {
            return Err(parse_err(path, format!("row {}: expected 3 fields", line + 2)));
        }
        let mut row = [0.0; 3];
        for (k, v) in row.iter_mut().enumerate() {
            *v = rec[k]
                .parse()
                .map_err(|e| parse_err(path, format!("row {}: {e}", line + 2)))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Converts a 1-based index column entry to a 0-based index below `n`.
pub(crate) fn as_index(v: f64, n: usize, path: &Path, line: usize, name: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || v > n as f64 {
        return Err(parse_err(
            path,
            format!("row {}: {name} = {v} is not an index in 1..={n}", line + 2),
        ));
    }
    Ok(v as usize - 1)
}

/// Writes `x,y,<name>` rows for every cell.
pub fn write_field(path: &Path, grid: &Grid, field: &Field, name: &str) -> Result<()> {
    field.check_grid(grid)?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "x,y,{name}")?;
        for j in 0..grid.ny() {
            let y = fmt_f64(grid.y_centers()[j]);
            for (i, v) in field.col(j).iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_f64(grid.x_centers()[i]), y, fmt_f64(*v))?;
            }
        }
        w.flush()
    };
    body().map_err(|e| io_err(path, e))
}

/// Reads a field written by [`write_field`]; the cell coordinates must match `grid`.
pub fn read_field(path: &Path, grid: &Grid, name: &str) -> Result<Field> {
    let rows = read_triples(path, ["x", "y", name])?;
    if rows.len() != grid.cells() {
        return Err(parse_err(
            path,
            format!("expected {} rows, found {}", grid.cells(), rows.len()),
        ));
    }
    let mut data = Vec::with_capacity(rows.len());
    for (k, [x, y, v]) in rows.into_iter().enumerate() {
        let (i, j) = (k % grid.nx(), k / grid.nx());
        let tol = 1e-9 * grid.dx().min(grid.dy());
        if (x - grid.x_centers()[i]).abs() > tol || (y - grid.y_centers()[j]).abs() > tol {
            return Err(parse_err(
                path,
                format!("row {}: ({x}, {y}) is not cell ({}, {})", k + 2, i + 1, j + 1),
            ));
        }
        data.push(v);
    }
    Field::from_columns(grid.nx(), grid.ny(), data)
}

/// Writes a per-type table: `y,<columns...>`.
pub fn write_type_table(path: &Path, grid: &Grid, columns: &[(&str, &[f64])]) -> Result<()> {
    for (_, c) in columns {
        if c.len() != grid.ny() {
            return Err(Error::LengthMismatch {
                expected: grid.ny(),
                got: c.len(),
            });
        }
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
        writeln!(w, "y,{}", names.join(","))?;
        for j in 0..grid.ny() {
            write!(w, "{}", fmt_f64(grid.y_centers()[j]))?;
            for (_, c) in columns {
                write!(w, ",{}", fmt_f64(c[j]))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    body().map_err(|e| io_err(path, e))
}

/// Reads back a per-type table as `(header, rows)`.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(path, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn field_round_trip(nx in 2usize..6, ny in 1usize..5, vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 30)) {
            let g = Grid::new(nx, ny).unwrap();
            let f = Field::from_fn(nx, ny, |i, j| vals[(i + nx * j) % vals.len()]);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.csv");
            write_field(&p, &g, &f, "phi").unwrap();
            let back = read_field(&p, &g, "phi").unwrap();
            for (a, b) in f.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn header_mismatch_is_reported() {
        let g = Grid::new(2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "x,y,q\n0.25,0.5,1\n0.75,0.5,1\n").unwrap();
        assert!(matches!(read_field(&p, &g, "p"), Err(Error::Parse { .. })));
    }

    #[test]
    fn type_table_round_trip() {
        let g = Grid::new(2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let a = [0.1, 1.0 / 3.0, 2e-300];
        write_type_table(&p, &g, &[("alpha", &a)]).unwrap();
        let (h, rows) = read_table(&p).unwrap();
        assert_eq!(h, ["y", "alpha"]);
        for (r, v) in rows.iter().zip(a) {
            assert_eq!(r[1].to_bits(), v.to_bits());
        }
    }
}
