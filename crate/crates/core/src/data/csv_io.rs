use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::ad::Tensor;
use crate::error::{Error, Result};

/// Which CSV column, if any, holds the binary labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// `last`, a zero-based index, or a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: Option<&LabelColumn>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(File::open(path)?, label, name)
}

fn parse_label(cell: f64, row: usize, column: usize) -> Result<u8> {
    if cell == 0.0 {
        Ok(0)
    } else if cell == 1.0 {
        Ok(1)
    } else {
        Err(Error::Parse {
            row,
            column,
            reason: format!("label {cell} is not 0 or 1"),
        })
    }
}

/// Parse comma-separated numeric records. A first row containing any
/// non-numeric cell is taken as the header. Rows and columns in errors are
/// 1-based.
pub fn parse_csv(reader: impl Read, label: Option<&LabelColumn>, name: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            column: 0,
            reason: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Arity {
                row: line,
                expected,
                found: record.len(),
            });
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if i == 0 && parsed.iter().any(|p| p.is_err()) {
            header = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let mut values = Vec::with_capacity(expected);
        for (j, (p, cell)) in parsed.into_iter().zip(record.iter()).enumerate() {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row: line,
                        column: j + 1,
                        reason: format!("'{cell}' is not a finite number"),
                    })
                }
            }
        }
        rows.push((line, values));
    }
    let width = width.ok_or_else(|| Error::Data("CSV input has no rows".into()))?;
    if rows.is_empty() {
        return Err(Error::Data("CSV input has a header but no data rows".into()));
    }

    let label_idx = match label {
        None => None,
        Some(LabelColumn::Last) => Some(width - 1),
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(n)) => {
            let header = header
                .as_ref()
                .ok_or_else(|| Error::Data(format!("label column '{n}' named but the file has no header")))?;
            Some(
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::Data(format!("no column named '{n}'")))?,
            )
        }
    };
    if let Some(idx) = label_idx {
        if idx >= width {
            return Err(Error::Data(format!("label column {idx} out of range for {width} columns")));
        }
        if width < 2 {
            return Err(Error::Data("a label column leaves no features".into()));
        }
    }

    let feat_width = width - usize::from(label_idx.is_some());
    let mut data = Vec::with_capacity(rows.len() * feat_width);
    let mut labels = label_idx.map(|_| Vec::with_capacity(rows.len()));
    for (line, values) in &rows {
        for (j, &v) in values.iter().enumerate() {
            if Some(j) == label_idx {
                labels.as_mut().expect("label column set").push(parse_label(v, *line, j + 1)?);
            } else {
                data.push(v);
            }
        }
    }
    let features = Tensor::matrix(rows.len(), feat_width, data)?;
    Dataset::new(features, labels, name)
}

/// Header `x0,…,x{D−1}[,label]`, then one row per sample. Floats are written
/// in shortest round-trip form.
pub fn write_csv(dataset: &Dataset, mut w: impl Write) -> Result<()> {
    let d = dataset.dim();
    let mut head: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if dataset.labels.is_some() {
        head.push("label".into());
    }
    writeln!(w, "{}", head.join(","))?;
    for i in 0..dataset.n() {
        let mut cells: Vec<String> = dataset.features.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = &dataset.labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_csv(dataset, &mut f)?;
    f.flush()?;
    Ok(())
}
