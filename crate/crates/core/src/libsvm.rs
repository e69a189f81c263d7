//! LIBSVM text format (`label idx:val idx:val ...`, 1-based ascending
//! indices) and the JSON sidecar written next to generated datasets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{LassoError, Result};
use crate::model::{DesignMatrix, LossKind};

/// How labels are interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Labels kept as reals.
    Regression,
    /// `-1 -> 0`, `0` and `1` kept, anything else rejected.
    Classification,
}

impl LabelMode {
    pub fn loss(self) -> LossKind {
        match self {
            LabelMode::Regression => LossKind::LeastSquaresHalf,
            LabelMode::Classification => LossKind::LogisticNLL,
        }
    }
}

struct Row {
    label: f64,
    entries: Vec<(usize, f64)>,
}

fn parse_line(text: &str, line: usize, mode: LabelMode) -> Result<Option<Row>> {
    let err = |msg: String| LassoError::Parse { line, msg };
    let body = match text.find('#') {
        Some(i) => &text[..i],
        None => text,
    };
    let mut tokens = body.split_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let raw: f64 = label_tok
        .parse()
        .map_err(|_| err(format!("invalid label {label_tok:?}")))?;
    if !raw.is_finite() {
        return Err(err(format!("non-finite label {label_tok:?}")));
    }
    let label = match mode {
        LabelMode::Regression => raw,
        LabelMode::Classification => match raw {
            v if v == -1.0 || v == 0.0 => 0.0,
            v if v == 1.0 => 1.0,
            _ => return Err(err(format!("classification label must be -1, 0 or 1, got {label_tok}"))),
        },
    };
    let mut entries = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| err(format!("invalid feature index {idx:?}")))?;
        if idx == 0 {
            return Err(err("feature indices are 1-based".into()));
        }
        if idx <= last {
            return Err(err(format!("feature index {idx} does not follow {last}")));
        }
        last = idx;
        let val: f64 = val
            .parse()
            .map_err(|_| err(format!("invalid feature value {val:?}")))?;
        if !val.is_finite() {
            return Err(err(format!("non-finite value at index {idx}")));
        }
        entries.push((idx - 1, val));
    }
    Ok(Some(Row { label, entries }))
}

/// Parses LIBSVM text. The column count is the largest index seen unless
/// `dim` is given, in which case larger indices are an error.
pub fn parse_libsvm<R: BufRead>(reader: R, mode: LabelMode, dim: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        if let Some(row) = parse_line(&line?, line_no, mode)? {
            if let (Some(d), Some(&(j, _))) = (dim, row.entries.last()) {
                if j >= d {
                    return Err(LassoError::Parse {
                        line: line_no,
                        msg: format!("feature index {} exceeds dimension {d}", j + 1),
                    });
                }
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(LassoError::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let cols = dim.unwrap_or_else(|| {
        rows.iter()
            .filter_map(|r| r.entries.last().map(|&(j, _)| j + 1))
            .max()
            .unwrap_or(0)
    });
    if cols == 0 {
        return Err(LassoError::Parse {
            line: 0,
            msg: "no feature columns".into(),
        });
    }
    let mut values = vec![0.0; rows.len() * cols];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in &row.entries {
            values[i * cols + j] = v;
        }
    }
    let design = DesignMatrix::from_row_slice(rows.len(), cols, &values)?;
    let labels = rows.iter().map(|r| r.label).collect();
    Dataset::new(design, labels, mode.loss())
}

pub fn read_libsvm(path: impl AsRef<Path>, mode: LabelMode) -> Result<Dataset> {
    parse_libsvm(BufReader::new(File::open(path)?), mode, None)
}

/// Reads a dataset and, if present, its sidecar; the sidecar fixes the
/// column count and restores seed and ground truth.
pub fn read_dataset(path: impl AsRef<Path>, mode: LabelMode) -> Result<(Dataset, Option<Sidecar>)> {
    let path = path.as_ref();
    let side_path = sidecar_path(path);
    let sidecar = if side_path.exists() {
        Some(Sidecar::read(&side_path)?)
    } else {
        None
    };
    let dim = sidecar.as_ref().map(|s| s.cols);
    let mut ds = parse_libsvm(BufReader::new(File::open(path)?), mode, dim)?;
    if let Some(s) = &sidecar {
        ds.seed = s.seed;
        ds.ground_truth = s.ground_truth.clone();
    }
    Ok((ds, sidecar))
}

/// Writes nonzero entries only; values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_libsvm_to<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let a = &ds.design;
    for i in 0..a.rows() {
        write!(out, "{}", ds.response[i])?;
        for j in 0..a.cols() {
            let v = a.get(i, j);
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_libsvm(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_libsvm_to(ds, BufWriter::new(File::create(path)?))
}

/// `data.libsvm -> data.libsvm.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub rows: usize,
    pub cols: usize,
    pub kind: LossKind,
    pub seed: Option<u64>,
    pub generator: String,
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<f64>>,
}

impl Sidecar {
    pub fn describe(ds: &Dataset, generator: &str, params: serde_json::Value) -> Self {
        Self {
            rows: ds.n_obs(),
            cols: ds.dim(),
            kind: ds.kind,
            seed: ds.seed,
            generator: generator.to_string(),
            params,
            ground_truth: ds.ground_truth.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush()?;
        Ok(())
    }
}

/// Writes `path` and its sidecar.
pub fn write_dataset(
    ds: &Dataset,
    path: impl AsRef<Path>,
    generator: &str,
    params: serde_json::Value,
) -> Result<Sidecar> {
    let path = path.as_ref();
    write_libsvm(ds, path)?;
    let sidecar = Sidecar::describe(ds, generator, params);
    sidecar.write(&sidecar_path(path))?;
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mode: LabelMode) -> Result<Dataset> {
        parse_libsvm(text.as_bytes(), mode, None)
    }

    #[test]
    fn format_example() {
        let ds = parse("1 3:0.5 7:-1.2\n", LabelMode::Regression).unwrap();
        assert_eq!(ds.response, vec![1.0]);
        assert_eq!(ds.dim(), 7);
        assert_eq!(ds.design.row(0), vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.0, -1.2]);
    }

    #[test]
    fn empty_feature_list_is_zero_row() {
        let ds = parse("2.5\n-1 2:1\n", LabelMode::Regression).unwrap();
        assert_eq!(ds.design.row(0), vec![0.0, 0.0]);
        assert_eq!(ds.response, vec![2.5, -1.0]);
    }

    #[test]
    fn classification_labels() {
        let ds = parse("-1 1:1\n+1 1:2\n0 1:3\n", LabelMode::Classification).unwrap();
        assert_eq!(ds.response, vec![0.0, 1.0, 0.0]);
        assert_eq!(ds.kind, LossKind::LogisticNLL);
        assert!(matches!(
            parse("2 1:1\n", LabelMode::Classification),
            Err(LassoError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn comments_and_blank_lines() {
        let ds = parse("# header\n\n1 1:2 # trailing\n", LabelMode::Regression).unwrap();
        assert_eq!(ds.n_obs(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("1 1:1\n1 3:1 2:1\n", 2),
            ("1 1:1\n\n1 0:1\n", 3),
            ("1 1:x\n", 1),
            ("abc 1:1\n", 1),
            ("1 1:1 1:2\n", 1),
            ("1 4\n", 1),
        ];
        for (text, want) in cases {
            match parse(text, LabelMode::Regression) {
                Err(LassoError::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn fixed_dimension() {
        let ds = parse_libsvm("1 2:1\n".as_bytes(), LabelMode::Regression, Some(5)).unwrap();
        assert_eq!(ds.dim(), 5);
        assert!(parse_libsvm("1 6:1\n".as_bytes(), LabelMode::Regression, Some(5)).is_err());
    }

    #[test]
    fn write_then_read_is_exact() {
        let a = DesignMatrix::from_row_slice(2, 3, &[0.1, 0.0, -1.0 / 3.0, 0.0, 0.0, 0.0]).unwrap();
        let ds = Dataset::new(a, vec![0.7, -2.0], LossKind::LeastSquaresHalf).unwrap();
        let mut buf = Vec::new();
        write_libsvm_to(&ds, &mut buf).unwrap();
        let back = parse_libsvm(&buf[..], LabelMode::Regression, Some(3)).unwrap();
        assert_eq!(back.design, ds.design);
        assert_eq!(back.response, ds.response);
    }
}
