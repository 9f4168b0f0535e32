//! Dataset files: a little-endian binary values file plus a JSON sidecar,
//! and plain `t,x,u` CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{GridDataset, Metadata, SampleSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"PDRD1";
const HEADER: usize = MAGIC.len() + 16;

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes `path` (binary values) and `path.json` (metadata).
pub fn write_dataset(ds: &GridDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER + 8 * (ds.x.len() + ds.t.len() + ds.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(ds.t.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.x.len() as u64).to_le_bytes());
    for v in ds.x.iter().chain(&ds.t).chain(ds.values.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&ds.meta)?;
    let side = sidecar(path);
    fs::write(&side, meta).map_err(|e| Error::io(&side, e))
}

/// Reads a binary dataset (with its sidecar) or a complete-grid CSV.
pub fn read_dataset(path: &Path) -> Result<GridDataset> {
    if is_csv(path) {
        return grid_from_samples(&read_samples_csv(path)?, path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format(path, "not a dataset file (bad magic)"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes")) as usize;
    let (nt, nx) = (word(MAGIC.len()), word(MAGIC.len() + 8));
    let expected = nx
        .checked_mul(nt)
        .and_then(|c| c.checked_add(nx + nt))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER))
        .ok_or_else(|| Error::format(path, "header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    let floats: Vec<f64> = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let x = floats[..nx].to_vec();
    let t = floats[nx..nx + nt].to_vec();
    let values = Array2::from_shape_vec((nt, nx), floats[nx + nt..].to_vec())
        .map_err(|e| Error::format(path, e.to_string()))?;
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Metadata =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
    GridDataset::new(x, t, values, meta).map_err(|e| Error::format(path, e.to_string()))
}

fn grid_from_samples(s: &SampleSet, path: &Path) -> Result<GridDataset> {
    let key = |v: f64| v.to_bits();
    let mut ts: Vec<f64> = s.t.clone();
    let mut xs: Vec<f64> = s.x.clone();
    for v in [&mut ts, &mut xs] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    if ts.len() * xs.len() != s.len() {
        return Err(Error::format(path, "samples do not form a complete grid"));
    }
    let ti: BTreeMap<u64, usize> = ts.iter().enumerate().map(|(i, &v)| (key(v), i)).collect();
    let xi: BTreeMap<u64, usize> = xs.iter().enumerate().map(|(i, &v)| (key(v), i)).collect();
    let mut values = Array2::from_elem((ts.len(), xs.len()), f64::NAN);
    for k in 0..s.len() {
        values[(ti[&key(s.t[k])], xi[&key(s.x[k])])] = s.u[k];
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::format(path, "samples do not form a complete grid"));
    }
    GridDataset::new(xs, ts, values, Metadata::new("external", "csv"))
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Reads `t,x,u` samples, one per line after the header.
pub fn read_samples_csv(path: &Path) -> Result<SampleSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .unwrap_or_default();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["t", "x", "u"] {
        return Err(Error::format(path, format!("expected header t,x,u, found {header:?}")));
    }
    let mut s = SampleSet::default();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        match vals[..] {
            [t, x, u] if t.is_finite() && x.is_finite() && u.is_finite() => s.push(t, x, u),
            _ => return Err(Error::format(path, format!("line {}: expected 3 finite values", n + 2))),
        }
    }
    if s.is_empty() {
        return Err(Error::format(path, "no samples"));
    }
    Ok(s)
}

pub fn write_samples_csv(s: &SampleSet, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        writeln!(w, "t,x,u")?;
        for k in 0..s.len() {
            writeln!(w, "{:?},{:?},{:?}", s.t[k], s.x[k], s.u[k])?;
        }
        w.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ds() -> GridDataset {
        let x = vec![0.0, 0.1, 0.30000000000000004];
        let t = vec![0.0, 1.0 / 3.0];
        let values = Array2::from_shape_fn((2, 3), |(i, j)| (i as f64 + 0.1) / (j as f64 + 7.0));
        let mut meta = Metadata::new("heat", "sine");
        meta.coefficients.insert("alpha".into(), 0.05);
        GridDataset::new(x, t, values, meta).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pdrd");
        let ds = sample_ds();
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_and_foreign_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pdrd");
        write_dataset(&sample_ds(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::SizeMismatch { .. })));
        let mut foreign = bytes.clone();
        foreign[..5].copy_from_slice(b"NOPE!");
        fs::write(&path, foreign).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_samples_round_trip_and_form_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let ds = sample_ds();
        write_samples_csv(&ds.all_samples(), &path).unwrap();
        assert_eq!(read_samples_csv(&path).unwrap(), ds.all_samples());
        let back = read_dataset(&path).unwrap();
        assert_eq!((back.x, back.t, back.values), (ds.x, ds.t, ds.values));
    }
}
