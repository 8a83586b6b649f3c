//! Plain-text field snapshots.
//!
//! Line 1: `dim n1 [n2] h1 [h2] time`, then one value per line in row-major
//! order, each written with 17 significant digits.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Field, Grid, GridError};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot header: {0}")]
    Header(String),
    #[error("malformed value on line {line}: {text:?}")]
    Value { line: usize, text: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub fn write_snapshot(mut out: impl Write, field: &Field, time: f64) -> std::io::Result<()> {
    let g = field.grid();
    let mut header = format!("{}", g.dim());
    for n in g.cells() {
        header.push_str(&format!(" {n}"));
    }
    for axis in 0..g.dim() {
        header.push_str(&format!(" {:.16e}", g.spacing(axis)));
    }
    header.push_str(&format!(" {time:.16e}"));
    writeln!(out, "{header}")?;
    for v in field.values() {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

/// Reads a snapshot back; the grid extent is rebuilt as `cells * h`.
pub fn read_snapshot(input: impl BufRead) -> Result<(Field, f64), SnapshotError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| SnapshotError::Header("empty file".into()))??;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let dim: usize = tokens
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| SnapshotError::Header(header.clone()))?;
    if !(1..=2).contains(&dim) || tokens.len() != 2 * dim + 2 {
        return Err(SnapshotError::Header(header.clone()));
    }
    let bad = || SnapshotError::Header(header.clone());
    let cells: Vec<usize> = tokens[1..=dim]
        .iter()
        .map(|t| t.parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let spacing: Vec<f64> = tokens[dim + 1..=2 * dim]
        .iter()
        .map(|t| t.parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let time: f64 = tokens[2 * dim + 1].parse().map_err(|_| bad())?;
    let extent: Vec<f64> = cells.iter().zip(&spacing).map(|(n, h)| *n as f64 * h).collect();
    let grid = Grid::new(&cells, &extent)?;

    let mut values = Vec::with_capacity(grid.len());
    for (k, line) in lines.enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let v = text
            .parse()
            .map_err(|_| SnapshotError::Value { line: k + 2, text: text.to_string() })?;
        values.push(v);
    }
    Ok((Field::new(grid, values)?, time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let g = Grid::new_2d([3, 4], [1.5, 2.0]).unwrap();
        let f = Field::from_fn(g, |[x, y]| x - y);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, 0.25).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "2 3 4 5.0000000000000000e-1 5.0000000000000000e-1 2.5000000000000000e-1");
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_snapshot("".as_bytes()).is_err());
        assert!(read_snapshot("3 4 4 4 1 1 1 0\n".as_bytes()).is_err());
        assert!(read_snapshot("1 3 0.5 0\n1\n2\n".as_bytes()).is_err());
        assert!(read_snapshot("1 3 0.5 0\n1\nx\n3\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 5), t in 0.0f64..100.0) {
            let g = Grid::new_1d(5, 1.0).unwrap();
            let f = Field::new(g, values).unwrap();
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &f, t).unwrap();
            let (back, t2) = read_snapshot(buf.as_slice()).unwrap();
            prop_assert_eq!(back.values(), f.values());
            prop_assert_eq!(t2, t);
            prop_assert_eq!(back.grid().cells(), g.cells());
        }
    }
}
