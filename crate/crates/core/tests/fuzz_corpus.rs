//! Replays the checked-in fuzz corpus through the fuzz targets' invariants.

use std::path::PathBuf;

use multiscan::calibrate::{CalibrationKind, Model, TableEntry};
use multiscan::io::{grid_to_csv, parse_grid, parse_points, parse_sequence, points_to_csv, sequence_to_csv};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus for {target}");
    files.into_iter().map(|p| (p.display().to_string(), std::fs::read(&p).unwrap())).collect()
}

#[test]
fn sequences() {
    let mut ok = 0;
    for (name, bytes) in corpus("parse_sequence") {
        if let Ok(seq) = parse_sequence(std::str::from_utf8(&bytes).unwrap()) {
            assert_eq!(parse_sequence(&sequence_to_csv(&seq)).unwrap(), seq, "{name}");
            ok += 1;
        }
    }
    assert!(ok >= 2);
}

#[test]
fn points() {
    for (name, bytes) in corpus("parse_points") {
        let parsed = parse_points(std::str::from_utf8(&bytes).unwrap());
        if name.ends_with("out_of_range") {
            assert!(parsed.is_err());
            continue;
        }
        let sample = parsed.unwrap();
        assert!(sample.points().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(parse_points(&points_to_csv(&sample)).unwrap(), sample);
    }
}

#[test]
fn grids() {
    for (name, bytes) in corpus("parse_grid") {
        match parse_grid(std::str::from_utf8(&bytes).unwrap()) {
            Ok(grid) => assert_eq!(parse_grid(&grid_to_csv(&grid)).unwrap(), grid),
            Err(e) => assert!(name.ends_with("ragged") || name.ends_with("nan"), "{name}: {e}"),
        }
    }
}

#[test]
fn table_entries() {
    for (name, bytes) in corpus("decode_table_entry") {
        let entry = TableEntry::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(TableEntry::decode(&entry.encode().unwrap()).unwrap(), entry);
        let mut tampered = bytes.clone();
        let pos = tampered.iter().position(|b| b.is_ascii_digit()).unwrap();
        tampered[pos] = if tampered[pos] == b'9' { b'8' } else { tampered[pos] + 1 };
        assert!(TableEntry::decode(&tampered).is_err(), "{name}");
    }
}

#[test]
fn names() {
    for (name, bytes) in corpus("parse_names") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let kind = text.parse::<CalibrationKind>().ok();
        let model = text.parse::<Model>().ok();
        assert!(kind.is_some() || model.is_some(), "{name}");
        if let Some(k) = kind {
            assert_eq!(k.to_string().parse::<CalibrationKind>().unwrap(), k);
        }
    }
}
