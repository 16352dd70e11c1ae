//! File formats: field snapshots (plain-text header + ASCII or little-endian
//! binary payload), diagnostics CSV, 1D slice CSV and portable-pixmap
//! heatmaps. ASCII floats use shortest round-trip formatting, so both
//! snapshot modes reproduce fields bit-exactly.

use crate::diagnostics::DiagnosticsRecord;
use crate::grid::{Grid, ScalarField};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot header: {0}")]
    Header(String),
    #[error("payload ended after {got} of {expected} values")]
    Truncated { got: usize, expected: usize },
    #[error("bad value in ASCII payload at index {index}: {token:?}")]
    BadValue { index: usize, token: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotMode {
    Ascii,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub field: ScalarField,
    pub time: f64,
    pub name: String,
}

/// Write a cell field with header `nx ny lx ly time name mode` followed by
/// row-major values (row `j = 0` first).
pub fn write_snapshot(
    field: &ScalarField,
    name: &str,
    time: f64,
    mode: SnapshotMode,
    path: &Path,
) -> Result<(), SnapshotError> {
    assert!(
        !name.is_empty() && !name.contains(char::is_whitespace),
        "snapshot name must be a single token"
    );
    let g = field.grid;
    let mut out = BufWriter::new(File::create(path)?);
    let tag = match mode {
        SnapshotMode::Ascii => "ascii",
        SnapshotMode::Binary => "binary",
    };
    writeln!(out, "{} {} {} {} {} {} {}", g.nx, g.ny, g.lx, g.ly, time, name, tag)?;
    match mode {
        SnapshotMode::Ascii => {
            for j in 0..g.ny {
                let mut line = String::new();
                for i in 0..g.nx {
                    if i > 0 {
                        line.push(' ');
                    }
                    line.push_str(&format!("{}", field.at(i, j)));
                }
                writeln!(out, "{line}")?;
            }
        }
        SnapshotMode::Binary => {
            for v in &field.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 7 {
        return Err(SnapshotError::Header(format!(
            "expected 7 header tokens (nx ny lx ly time name mode), got {}",
            tokens.len()
        )));
    }
    let nx: usize = tokens[0]
        .parse()
        .map_err(|_| SnapshotError::Header(format!("bad nx {:?}", tokens[0])))?;
    let ny: usize = tokens[1]
        .parse()
        .map_err(|_| SnapshotError::Header(format!("bad ny {:?}", tokens[1])))?;
    let lx: f64 = tokens[2]
        .parse()
        .map_err(|_| SnapshotError::Header(format!("bad lx {:?}", tokens[2])))?;
    let ly: f64 = tokens[3]
        .parse()
        .map_err(|_| SnapshotError::Header(format!("bad ly {:?}", tokens[3])))?;
    let time: f64 = tokens[4]
        .parse()
        .map_err(|_| SnapshotError::Header(format!("bad time {:?}", tokens[4])))?;
    let name = tokens[5].to_string();
    if nx < 4 || ny < 4 || !(lx > 0.0) || !(ly > 0.0) {
        return Err(SnapshotError::Header(format!(
            "inadmissible grid {nx}x{ny} over {lx}x{ly}"
        )));
    }
    let grid = Grid::new(nx, ny, lx, ly);
    let n = grid.n_cells();
    let mut field = ScalarField::zeros(grid);
    match tokens[6] {
        "ascii" => {
            let mut count = 0usize;
            let mut body = String::new();
            reader.read_to_string(&mut body)?;
            for token in body.split_whitespace() {
                if count >= n {
                    return Err(SnapshotError::Header("trailing data in payload".into()));
                }
                field.values[count] = token.parse().map_err(|_| SnapshotError::BadValue {
                    index: count,
                    token: token.to_string(),
                })?;
                count += 1;
            }
            if count != n {
                return Err(SnapshotError::Truncated {
                    got: count,
                    expected: n,
                });
            }
        }
        "binary" => {
            let mut bytes = Vec::new();
            reader.read_to_end(&mut bytes)?;
            if bytes.len() != 8 * n {
                return Err(SnapshotError::Truncated {
                    got: bytes.len() / 8,
                    expected: n,
                });
            }
            for (k, chunk) in bytes.chunks_exact(8).enumerate() {
                field.values[k] = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        other => {
            return Err(SnapshotError::Header(format!("unknown mode {other:?}")));
        }
    }
    Ok(Snapshot { field, time, name })
}

/// Diagnostics series as CSV (one row per record, fixed column set).
pub fn write_records_csv(records: &[DiagnosticsRecord], path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", DiagnosticsRecord::CSV_HEADER)?;
    for rec in records {
        writeln!(out, "{}", rec.to_csv_row())?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    /// Fixed `j`: values along x.
    Row,
    /// Fixed `i`: values along y.
    Column,
}

/// Export a 1D slice through cell centers as `coordinate,value` CSV.
pub fn write_slice_csv(
    field: &ScalarField,
    axis: SliceAxis,
    index: usize,
    path: &Path,
) -> std::io::Result<()> {
    let g = field.grid;
    let mut out = BufWriter::new(File::create(path)?);
    match axis {
        SliceAxis::Row => {
            writeln!(out, "x,value")?;
            for i in 0..g.nx {
                let (x, _) = g.cell_center(i, index);
                writeln!(out, "{},{}", x, field.at(i, index))?;
            }
        }
        SliceAxis::Column => {
            writeln!(out, "y,value")?;
            for j in 0..g.ny {
                let (_, y) = g.cell_center(index, j);
                writeln!(out, "{},{}", y, field.at(index, j))?;
            }
        }
    }
    out.flush()
}

/// Binary portable pixmap (P6) with a linear grayscale map over `range`
/// (field min/max when absent, midpoint gray for constant fields). One pixel
/// per cell, top image row at `j = ny - 1`.
pub fn write_heatmap_ppm(
    field: &ScalarField,
    range: Option<(f64, f64)>,
    path: &Path,
) -> std::io::Result<()> {
    let g = field.grid;
    let (lo, hi) = range.unwrap_or_else(|| (field.min(), field.max()));
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{} {}\n255\n", g.nx, g.ny)?;
    let span = hi - lo;
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let v = field.at(i, j);
            let byte = if span > 0.0 {
                (((v - lo) / span * 255.0).round().clamp(0.0, 255.0)) as u8
            } else {
                128
            };
            out.write_all(&[byte, byte, byte])?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::spinodal_phi;

    #[test]
    fn binary_snapshot_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.snap");
        let grid = Grid::new(12, 9, 1.25, 0.75);
        let field = spinodal_phi(grid, 0.1, 0.7, 4);
        write_snapshot(&field, "phi", 0.625, SnapshotMode::Binary, &path).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.field, field);
        assert_eq!(snap.time, 0.625);
        assert_eq!(snap.name, "phi");
    }

    #[test]
    fn ascii_snapshot_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigma.snap");
        let grid = Grid::new(8, 5, 1.0, 2.0);
        let field = spinodal_phi(grid, -0.3, 0.9, 99);
        write_snapshot(&field, "sigma", 1.5, SnapshotMode::Ascii, &path).unwrap();
        let snap = read_snapshot(&path).unwrap();
        assert_eq!(snap.field, field);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.snap");
        std::fs::write(&path, "8 5 1.0 2.0 0.0 phi ascii\n1.0 2.0 3.0\n").unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(SnapshotError::Truncated { .. })
        ));
    }

    #[test]
    fn heatmap_has_expected_size_and_midgray_for_zero_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.ppm");
        let grid = Grid::new(6, 4, 1.0, 1.0);
        let field = ScalarField::zeros(grid);
        write_heatmap_ppm(&field, Some((-1.0, 1.0)), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P6\n6 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let pixels = &bytes[header.len()..];
        assert_eq!(pixels.len(), 6 * 4 * 3);
        assert!(pixels.iter().all(|&b| b == 128));
    }

    #[test]
    fn slice_csv_lists_cell_centers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slice.csv");
        let grid = Grid::new(4, 4, 1.0, 1.0);
        let field = ScalarField::from_fn(grid, |x, _| x);
        write_slice_csv(&field, SliceAxis::Row, 2, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "x,value");
        assert!(lines[1].starts_with("0.125,"));
    }
}
