use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, LabelSet, TaskKind, TextInput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Tsv,
    Jsonl,
}

impl DataFormat {
    /// Guesses from the file extension; anything but `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::Jsonl,
            _ => DataFormat::Tsv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Tsv => "tsv",
            DataFormat::Jsonl => "jsonl",
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(DataFormat::Tsv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

/// One raw row of a dataset file. Transformed datasets additionally carry
/// `source_id` and `transform`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub text_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
}

fn non_empty(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

/// Reads rows with their 1-based line numbers (header is line 1 for TSV).
pub fn read_records(path: &Path, format: DataFormat) -> Result<Vec<(usize, Record)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        DataFormat::Tsv => read_tsv(path, file),
        DataFormat::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                rec.text_b = non_empty(rec.text_b.as_deref());
                rec.label = non_empty(rec.label.as_deref());
                out.push((i + 1, rec));
            }
            Ok(out)
        }
    }
}

fn read_tsv(path: &Path, file: File) -> Result<Vec<(usize, Record)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (c_id, c_a, c_b, c_label) = (col("id"), col("text_a"), col("text_b"), col("label"));
    let (c_src, c_xf) = (col("source_id"), col("transform"));
    let c_a = c_a.ok_or_else(|| parse_err(1, "missing `text_a` column".into()))?;

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let get = |c: Option<usize>| c.and_then(|c| row.get(c));
        out.push((
            line,
            Record {
                id: get(c_id).unwrap_or("").trim().to_string(),
                text_a: get(Some(c_a)).unwrap_or("").to_string(),
                text_b: non_empty(get(c_b)),
                label: non_empty(get(c_label)),
                source_id: non_empty(get(c_src)),
                transform: non_empty(get(c_xf)),
            },
        ));
    }
    Ok(out)
}

pub fn write_records(path: &Path, format: DataFormat, records: &[Record]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    match format {
        DataFormat::Tsv => {
            let extended = records
                .iter()
                .any(|r| r.source_id.is_some() || r.transform.is_some());
            let mut header = vec!["id", "text_a", "text_b", "label"];
            if extended {
                header.extend(["source_id", "transform"]);
            }
            writeln!(w, "{}", header.join("\t")).map_err(io_err)?;
            for r in records {
                let mut fields = vec![
                    r.id.as_str(),
                    r.text_a.as_str(),
                    r.text_b.as_deref().unwrap_or(""),
                    r.label.as_deref().unwrap_or(""),
                ];
                if extended {
                    fields.push(r.source_id.as_deref().unwrap_or(""));
                    fields.push(r.transform.as_deref().unwrap_or(""));
                }
                if let Some(bad) = fields.iter().find(|f| f.contains(['\t', '\n', '\r'])) {
                    return Err(Error::InvalidArgument(format!(
                        "row `{}`: field {bad:?} cannot be written as TSV",
                        r.id
                    )));
                }
                writeln!(w, "{}", fields.join("\t")).map_err(io_err)?;
            }
        }
        DataFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                writeln!(w).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    /// Rows dropped because a required input was missing.
    pub skipped: usize,
}

pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    labels: &LabelSet,
    task_kind: TaskKind,
) -> Result<LoadedDataset> {
    let records = read_records(path, format)?;
    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for (row_idx, (line, rec)) in records.into_iter().enumerate() {
        let has_b = rec.text_b.is_some();
        let shape_ok = match task_kind {
            TaskKind::Single => !has_b,
            TaskKind::Pair => has_b,
        };
        if rec.text_a.trim().is_empty() || !shape_ok {
            skipped += 1;
            continue;
        }
        let id = if rec.id.is_empty() {
            row_idx.to_string()
        } else {
            rec.id
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let gold_label = match rec.label {
            Some(name) => Some(labels.index_of(&name).ok_or(Error::UnknownLabel {
                row: line,
                label: name,
            })?),
            None => None,
        };
        let input = TextInput {
            text_a: rec.text_a,
            text_b: rec.text_b,
        };
        examples.push(Example::new(id, input, gold_label));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed row(s)", path.display());
    }
    Ok(LoadedDataset {
        dataset: Dataset::new(examples, labels.clone(), task_kind)?,
        skipped,
    })
}

impl Record {
    pub fn from_example(ex: &Example, labels: &LabelSet) -> Record {
        Record {
            id: ex.id.clone(),
            text_a: ex.input.text_a.clone(),
            text_b: ex.input.text_b.clone(),
            label: ex.gold_label.and_then(|y| labels.name(y)).map(str::to_string),
            source_id: None,
            transform: None,
        }
    }
}

pub fn write_dataset(path: &Path, format: DataFormat, ds: &Dataset) -> Result<()> {
    let records: Vec<Record> = ds
        .examples
        .iter()
        .map(|e| Record::from_example(e, &ds.labels))
        .collect();
    write_records(path, format, &records)
}
