//! File formats: Matrix Market coordinate files for matrices, single-column
//! CSV for marginal vectors, and JSONL for choice observations. All loaders
//! reject NaN and infinite values.

use crate::choice::{decompose_ranking, ChoiceError, ChoiceObservation};
use crate::model::{ModelError, NonnegMatrix};
use serde::Deserialize;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a Matrix Market `matrix coordinate real general` file (1-based
/// indices, `%` comments). Integer-typed files are accepted as reals.
pub fn read_matrix_market(path: &Path) -> Result<NonnegMatrix, IoError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<String> = header
        .trim()
        .to_ascii_lowercase()
        .split_whitespace()
        .map(String::from)
        .collect();
    let ok = header.starts_with("%%MatrixMarket")
        && fields.len() >= 5
        && fields[1] == "matrix"
        && fields[2] == "coordinate"
        && (fields[3] == "real" || fields[3] == "integer")
        && fields[4] == "general";
    if !ok {
        return Err(parse_err(
            path,
            1,
            format!("expected '%%MatrixMarket matrix coordinate real general' header, got '{header}'"),
        ));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match dims {
            None => {
                if tokens.len() != 3 {
                    return Err(parse_err(path, line_no, "expected 'rows cols nnz'"));
                }
                let parse = |s: &str| -> Result<usize, IoError> {
                    s.parse()
                        .map_err(|_| parse_err(path, line_no, format!("bad integer '{s}'")))
                };
                dims = Some((parse(tokens[0])?, parse(tokens[1])?, parse(tokens[2])?));
                triplets.reserve(dims.unwrap().2);
            }
            Some((n_rows, n_cols, _)) => {
                if tokens.len() != 3 {
                    return Err(parse_err(path, line_no, "expected 'i j value'"));
                }
                let i: usize = tokens[0]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad row index '{}'", tokens[0])))?;
                let j: usize = tokens[1]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad col index '{}'", tokens[1])))?;
                let v: f64 = tokens[2]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad value '{}'", tokens[2])))?;
                if !v.is_finite() {
                    return Err(parse_err(path, line_no, format!("non-finite value {v}")));
                }
                if i == 0 || j == 0 || i > n_rows || j > n_cols {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("index ({i}, {j}) outside 1..={n_rows} x 1..={n_cols}"),
                    ));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (n_rows, n_cols, nnz) = dims.ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(parse_err(
            path,
            0,
            format!("expected {nnz} entries, found {}", triplets.len()),
        ));
    }
    Ok(NonnegMatrix::from_triplets(n_rows, n_cols, &triplets)?)
}

pub fn write_matrix_market(path: &Path, a: &NonnegMatrix) -> Result<(), IoError> {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", a.n_rows(), a.n_cols(), a.nnz()));
    for (i, j, v) in a.triplets() {
        out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
    }
    write_file(path, &out)
}

/// Reads a single-column CSV with the header `value`.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>, IoError> {
    let text = read_to_string(path)?;
    let mut values = Vec::new();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if header.trim() != "value" {
        return Err(parse_err(
            path,
            1,
            format!("expected header 'value', got '{}'", header.trim()),
        ));
    }
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad value '{line}'")))?;
        if !v.is_finite() {
            return Err(parse_err(path, idx + 1, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    Ok(values)
}

pub fn write_vector_csv(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut out = String::from("value\n");
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    write_file(path, &out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChoiceLine {
    Choice { chosen: String, set: Vec<String> },
    Ranking { ranking: Vec<String> },
}

/// Reads choice data as JSONL: one object per line, either
/// `{"chosen": id, "set": [ids]}` or `{"ranking": [ids]}`. Rankings are
/// decomposed into their top-out observations.
pub fn read_choice_jsonl(path: &Path) -> Result<Vec<ChoiceObservation>, IoError> {
    let text = read_to_string(path)?;
    let mut observations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: ChoiceLine = serde_json::from_str(line)
            .map_err(|e| parse_err(path, idx + 1, format!("bad observation: {e}")))?;
        match parsed {
            ChoiceLine::Choice { chosen, set } => {
                observations.push(ChoiceObservation {
                    chosen,
                    choice_set: set,
                });
            }
            ChoiceLine::Ranking { ranking } => {
                observations.extend(
                    decompose_ranking(&ranking)
                        .map_err(|e| parse_err(path, idx + 1, e.to_string()))?,
                );
            }
        }
    }
    if observations.is_empty() {
        return Err(parse_err(path, 0, "no observations"));
    }
    Ok(observations)
}

pub fn write_choice_jsonl(path: &Path, observations: &[ChoiceObservation]) -> Result<(), IoError> {
    let mut out = String::new();
    for obs in observations {
        let set: Vec<&str> = obs.choice_set.iter().map(String::as_str).collect();
        out.push_str(&
            serde_json::json!({"chosen": obs.chosen, "set": set}).to_string(),
        );
        out.push('\n');
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    let mut f = fs::File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(contents.as_bytes()).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        let a = NonnegMatrix::from_dense(&[vec![3.0, 1.0], vec![0.0, 2.0]]).unwrap();
        write_matrix_market(&path, &a).unwrap();
        let b = read_matrix_market(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_market_rejects_bad_inputs() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 inf\n")
            .unwrap();
        assert!(matches!(
            read_matrix_market(&path),
            Err(IoError::Parse { .. })
        ));
        fs::write(&path, "%%MatrixMarket matrix array real general\n2 2\n1\n").unwrap();
        assert!(read_matrix_market(&path).is_err());
        fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
            .unwrap();
        assert!(read_matrix_market(&path).is_err());
    }

    #[test]
    fn vector_csv_round_trip_and_validation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_vector_csv(&path, &[1.5, 2.0, 0.25]).unwrap();
        assert_eq!(read_vector_csv(&path).unwrap(), vec![1.5, 2.0, 0.25]);

        fs::write(&path, "value\nNaN\n").unwrap();
        assert!(read_vector_csv(&path).is_err());
        fs::write(&path, "not_value\n1.0\n").unwrap();
        assert!(read_vector_csv(&path).is_err());
    }

    #[test]
    fn choice_jsonl_reads_choices_and_rankings() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        fs::write(
            &path,
            r#"{"chosen": "a", "set": ["a", "b"]}
{"ranking": ["c", "a", "b"]}
"#,
        )
        .unwrap();
        let observations = read_choice_jsonl(&path).unwrap();
        // 1 direct + 2 from the ranking decomposition.
        assert_eq!(observations.len(), 3);
        assert_eq!(observations[1].chosen, "c");
        assert_eq!(observations[1].choice_set, vec!["c", "a", "b"]);
        assert_eq!(observations[2].choice_set, vec!["a", "b"]);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            read_matrix_market(Path::new("/nonexistent/file.mtx")),
            Err(IoError::File { .. })
        ));
    }
}
