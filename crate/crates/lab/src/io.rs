//! JSONL, CSV, JSON and checkpoint files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use solopo_core::policy::{PolicyError, ToyLm};
use solopo_core::train::Curve;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: PolicyError },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(fs_err(path))
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(fs_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
        w.write_all(b"\n").map_err(fs_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").map_err(fs_err(path))?;
    w.flush().map_err(fs_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(fs_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

/// Writes flat serializable rows with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let w = create(path)?;
    let mut csv = csv::Writer::from_writer(w);
    let err = |source| IoError::Csv { path: path.to_path_buf(), source };
    for row in rows {
        csv.serialize(row).map_err(err)?;
    }
    csv.flush().map_err(fs_err(path))
}

#[derive(Serialize)]
struct CurveRow<'a> {
    config: &'a str,
    seed: u64,
    step: usize,
    reward_margin_long: f64,
    lp_rejected_long: f64,
    ra_term: f64,
}

/// Long-context margin curves in long format, one row per (config, seed, step).
pub fn write_curves_csv(path: &Path, curves: &[Curve]) -> Result<(), IoError> {
    let rows: Vec<CurveRow> = curves
        .iter()
        .flat_map(|c| {
            c.steps.iter().map(move |s| CurveRow {
                config: &c.config,
                seed: c.seed,
                step: s.step,
                reward_margin_long: s.reward_margin_long,
                lp_rejected_long: s.lp_rejected_long,
                ra_term: s.ra_term,
            })
        })
        .collect();
    write_csv(path, &rows)
}

pub fn save_checkpoint(path: &Path, model: &ToyLm) -> Result<(), IoError> {
    let mut w = create(path)?;
    w.write_all(&model.to_bytes()).map_err(fs_err(path))?;
    w.flush().map_err(fs_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<ToyLm, IoError> {
    let bytes = fs::read(path).map_err(fs_err(path))?;
    ToyLm::from_bytes(&bytes).map_err(|source| IoError::Checkpoint { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use solopo_core::forge::ForgedSample;

    fn sample(i: usize) -> ForgedSample {
        ForgedSample {
            question: format!("q{i}"),
            answer: "a".into(),
            x_short: "s".into(),
            x_long: "l".into(),
            y_w: "w".into(),
            y_l: "x".into(),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d/x.jsonl");
        let items: Vec<_> = (0..3).map(sample).collect();
        write_jsonl(&p, &items).unwrap();
        assert_eq!(read_jsonl::<ForgedSample>(&p).unwrap(), items);
    }

    #[test]
    fn malformed_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let good = serde_json::to_string(&sample(0)).unwrap();
        fs::write(&p, format!("{good}\n\n{{\"question\": 3}}\n")).unwrap();
        let err = read_jsonl::<ForgedSample>(&p).unwrap_err().to_string();
        assert!(err.contains("x.jsonl:3:"), "{err}");
    }
}
