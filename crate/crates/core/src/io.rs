//! Text formats for sequences, point samples and grids.
//!
//! Sequences are a single column with optional header `y`; point samples a
//! single column with optional header `x`; grids a comma-separated matrix,
//! one row per line. Blank lines are ignored. Errors name the 1-based line.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::densmodel::PointSample;
use crate::error::{Error, Result};
use crate::scanner::GridData;
use crate::seqmodel::Sequence;

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let field = field.trim();
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("'{}' is not a decimal number", truncate(field)) })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("'{}' is not finite", truncate(field)) });
    }
    Ok(v)
}

fn truncate(s: &str) -> String {
    s.chars().take(40).collect()
}

/// `(line, value)` pairs of a single-column file.
fn parse_column(text: &str, header: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if line.eq_ignore_ascii_case(header) {
                continue;
            }
        }
        if line.contains(',') {
            return Err(Error::Parse { line: idx + 1, message: "expected a single column".into() });
        }
        out.push((idx + 1, parse_value(line, idx + 1)?));
    }
    Ok(out)
}

pub fn parse_sequence(text: &str) -> Result<Sequence> {
    let values: Vec<f64> = parse_column(text, "y")?.into_iter().map(|(_, v)| v).collect();
    if values.is_empty() {
        return Err(Error::Parse { line: 0, message: "no observations".into() });
    }
    Sequence::new(values)
}

pub fn parse_points(text: &str) -> Result<PointSample> {
    let rows = parse_column(text, "x")?;
    if let Some((line, v)) = rows.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
        return Err(Error::Parse { line: *line, message: format!("point {v} outside [0, 1]") });
    }
    let values = rows.into_iter().map(|(_, v)| v).collect();
    PointSample::new(values)
}

pub fn parse_grid(text: &str) -> Result<GridData> {
    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut cols: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let start = values.len();
        for field in line.split(',') {
            values.push(parse_value(field, idx + 1)?);
        }
        let width = values.len() - start;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse { line: idx + 1, message: format!("row has {width} columns, expected {c}") });
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse { line: 0, message: "empty grid".into() })?;
    GridData::new(rows, cols, values)
}

pub fn sequence_to_csv(seq: &Sequence) -> String {
    let mut out = String::from("y\n");
    for v in seq.values() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn points_to_csv(sample: &PointSample) -> String {
    let mut out = String::from("x\n");
    for v in sample.points() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn grid_to_csv(grid: &GridData) -> String {
    let (_, n2) = grid.dims();
    let mut out = String::new();
    for row in grid.values().chunks(n2) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `contents` to `path` through a temp file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Storage(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_with_and_without_header() {
        assert_eq!(parse_sequence("y\n1\n2.5\n-3e-1\n").unwrap().values(), &[1.0, 2.5, -0.3]);
        assert_eq!(parse_sequence("1\n\n2\n").unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn malformed_line_is_named() {
        match parse_sequence("y\n1\nabc\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_sequence("1\nNaN\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_sequence("1,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_sequence("y\n").is_err());
        assert!(parse_sequence("").is_err());
    }

    #[test]
    fn points_are_sorted_and_bounded() {
        let p = parse_points("x\n0.9\n0.1\n0.5\n").unwrap();
        assert_eq!(p.points(), &[0.1, 0.5, 0.9]);
        assert!(matches!(parse_points("x\n0.2\n1.5\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_points("0.2\n-0.5\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_points("x\n0.5\n").is_err());
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("1,2,3\n4,5,6\n").unwrap();
        assert_eq!(g.dims(), (2, 3));
        assert_eq!(g.get(2, 1), 4.0);
        assert!(matches!(parse_grid("1,2\n3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_grid("1,x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_grid("\n\n").is_err());
    }

    #[test]
    fn writers_round_trip() {
        let s = Sequence::new(vec![0.1, -2.0, 1e-300, 12345.678]).unwrap();
        assert_eq!(parse_sequence(&sequence_to_csv(&s)).unwrap(), s);
        let p = PointSample::new(vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(parse_points(&points_to_csv(&p)).unwrap(), p);
        let g = GridData::new(2, 2, vec![1.5, -2.0, 0.0, 3.25]).unwrap();
        assert_eq!(parse_grid(&grid_to_csv(&g)).unwrap(), g);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
