//! The tabular citation dataset: ten fixed columns, as CSV or JSON Lines.
//!
//! List-valued columns are JSON arrays inside a CSV cell. Absent optional
//! text is an empty cell in CSV and `null` in JSONL; present text is never
//! empty, so both encodings are lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::classify::Label;
use crate::harmonize::{Citation, Identifier};

pub const SCHEMA_VERSION: &str = "1";

pub const COLUMNS: [&str; 10] = [
    "type_of_citation",
    "page_title",
    "title",
    "url",
    "tld",
    "authors",
    "id_list",
    "citation",
    "actual_label",
    "acquired_id_list",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }

    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "jsonl" | "json" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format {other:?}, expected csv or jsonl")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub type_of_citation: String,
    pub page_title: String,
    pub title: Option<String>,
    pub url: Option<String>,
    pub tld: Option<String>,
    pub authors: Vec<String>,
    pub id_list: Vec<Identifier>,
    pub citation: String,
    pub actual_label: Label,
    pub acquired_id_list: Vec<Identifier>,
    /// Properties beyond the ten columns.
    pub extra: BTreeMap<String, Value>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.is_empty())
}

impl DatasetRow {
    /// Row for a labeled citation. The extra map carries the remaining
    /// template properties and where the citation came from.
    pub fn from_citation(c: &Citation, label: Label) -> Self {
        let mut extra: BTreeMap<String, Value> =
            c.extra.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        extra.insert("source_language".into(), Value::String(c.source_language.clone()));
        extra.insert("local_template".into(), Value::String(c.local_template.clone()));
        extra.insert("inside_ref".into(), Value::Bool(c.inside_ref));
        DatasetRow {
            type_of_citation: c.type_of_citation.clone(),
            page_title: c.page_title.clone(),
            title: non_empty(c.title.clone()),
            url: non_empty(c.url.clone()),
            tld: non_empty(c.tld.clone()),
            authors: c.authors.clone(),
            id_list: c.id_list.clone(),
            citation: c.citation_text.clone(),
            actual_label: label,
            acquired_id_list: Vec::new(),
            extra,
        }
    }

    fn ids_json(ids: &[Identifier]) -> String {
        serde_json::to_string(ids).expect("identifiers serialize")
    }

    fn csv_record(&self) -> [String; 10] {
        [
            self.type_of_citation.clone(),
            self.page_title.clone(),
            self.title.clone().unwrap_or_default(),
            self.url.clone().unwrap_or_default(),
            self.tld.clone().unwrap_or_default(),
            serde_json::to_string(&self.authors).expect("strings serialize"),
            Self::ids_json(&self.id_list),
            self.citation.clone(),
            self.actual_label.to_string(),
            Self::ids_json(&self.acquired_id_list),
        ]
    }

    fn to_json(&self, extended: bool) -> Value {
        let opt = |s: &Option<String>| s.clone().map_or(Value::Null, Value::String);
        let mut map = Map::new();
        map.insert("type_of_citation".into(), self.type_of_citation.clone().into());
        map.insert("page_title".into(), self.page_title.clone().into());
        map.insert("title".into(), opt(&self.title));
        map.insert("url".into(), opt(&self.url));
        map.insert("tld".into(), opt(&self.tld));
        map.insert("authors".into(), serde_json::to_value(&self.authors).expect("strings serialize"));
        map.insert("id_list".into(), serde_json::to_value(&self.id_list).expect("ids serialize"));
        map.insert("citation".into(), self.citation.clone().into());
        map.insert("actual_label".into(), self.actual_label.as_str().into());
        map.insert(
            "acquired_id_list".into(),
            serde_json::to_value(&self.acquired_id_list).expect("ids serialize"),
        );
        if extended {
            map.insert("extra".into(), Value::Object(self.extra.clone().into_iter().collect()));
        }
        Value::Object(map)
    }
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: String, column: String },
    #[error("{path}, row {row}: bad value in column {column:?}: {message}")]
    BadValue {
        path: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}, line {line}: not a JSON object: {message}")]
    BadLine { path: String, line: usize, message: String },
    #[error("no dataset files found at {0}")]
    NoInput(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WriterOptions {
    pub format: Format,
    /// Start a new part file after this many rows.
    pub rows_per_file: Option<usize>,
    /// Emit the `extra` object in JSONL output.
    pub extended: bool,
}

impl Default for WriterOptions {
    fn default() -> Self {
        WriterOptions {
            format: Format::Csv,
            rows_per_file: None,
            extended: false,
        }
    }
}

enum Sink {
    Csv(Box<csv::Writer<BufWriter<File>>>),
    Jsonl(BufWriter<File>),
}

/// Writes rows to `part-NNNNN.<ext>` files in a directory.
///
/// Parts are written under temporary names and renamed by [`finish`]. If the
/// writer is dropped before that, or a write fails, the temporary files are
/// removed.
///
/// [`finish`]: DatasetWriter::finish
pub struct DatasetWriter {
    dir: PathBuf,
    options: WriterOptions,
    sink: Option<Sink>,
    rows_in_part: usize,
    rows_total: usize,
    pending: Vec<(PathBuf, PathBuf)>,
    finished: bool,
}

impl DatasetWriter {
    pub fn create(dir: impl AsRef<Path>, options: WriterOptions) -> Result<Self, OutputError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut writer = DatasetWriter {
            dir,
            options,
            sink: None,
            rows_in_part: 0,
            rows_total: 0,
            pending: Vec::new(),
            finished: false,
        };
        writer.open_part()?;
        Ok(writer)
    }

    fn open_part(&mut self) -> Result<(), OutputError> {
        self.close_part()?;
        let index = self.pending.len();
        let name = format!("part-{index:05}.{}", self.options.format.extension());
        let final_path = self.dir.join(&name);
        let tmp_path = self.dir.join(format!(".{name}.tmp"));
        let file = File::create(&tmp_path).map_err(io_err(&tmp_path))?;
        self.pending.push((tmp_path.clone(), final_path));
        let buf = BufWriter::new(file);
        self.sink = Some(match self.options.format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(buf);
                w.write_record(COLUMNS).map_err(|source| OutputError::Csv {
                    path: tmp_path.display().to_string(),
                    source,
                })?;
                Sink::Csv(Box::new(w))
            }
            Format::Jsonl => Sink::Jsonl(buf),
        });
        self.rows_in_part = 0;
        Ok(())
    }

    fn close_part(&mut self) -> Result<(), OutputError> {
        let path = self.pending.last().map(|(tmp, _)| tmp.clone()).unwrap_or_default();
        match self.sink.take() {
            Some(Sink::Csv(mut w)) => w.flush().map_err(io_err(&path)),
            Some(Sink::Jsonl(mut w)) => w.flush().map_err(io_err(&path)),
            None => Ok(()),
        }
    }

    pub fn write(&mut self, row: &DatasetRow) -> Result<(), OutputError> {
        if self.options.rows_per_file.is_some_and(|cap| self.rows_in_part >= cap.max(1)) {
            self.open_part()?;
        }
        let path = self.pending.last().expect("a part is open").0.clone();
        match self.sink.as_mut().expect("a part is open") {
            Sink::Csv(w) => w.write_record(row.csv_record()).map_err(|source| OutputError::Csv {
                path: path.display().to_string(),
                source,
            })?,
            Sink::Jsonl(w) => {
                let line = serde_json::to_string(&row.to_json(self.options.extended)).expect("row serializes");
                w.write_all(line.as_bytes()).map_err(io_err(&path))?;
                w.write_all(b"\n").map_err(io_err(&path))?;
            }
        }
        self.rows_in_part += 1;
        self.rows_total += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> usize {
        self.rows_total
    }

    /// Flush and move every part to its final name. Returns the part paths.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, OutputError> {
        self.close_part()?;
        let mut done = Vec::with_capacity(self.pending.len());
        for (tmp, fin) in &self.pending {
            std::fs::rename(tmp, fin).map_err(io_err(fin))?;
            done.push(fin.clone());
        }
        self.finished = true;
        Ok(done)
    }
}

impl Drop for DatasetWriter {
    fn drop(&mut self) {
        if !self.finished {
            self.sink = None;
            for (tmp, _) in &self.pending {
                let _ = std::fs::remove_file(tmp);
            }
        }
    }
}

/// Write all rows into `dir`. Returns the part files.
pub fn write_rows<'a, I>(rows: I, dir: impl AsRef<Path>, options: WriterOptions) -> Result<Vec<PathBuf>, OutputError>
where
    I: IntoIterator<Item = &'a DatasetRow>,
{
    let mut writer = DatasetWriter::create(dir, options)?;
    for row in rows {
        writer.write(row)?;
    }
    writer.finish()
}

fn parse_ids(path: &Path, row: usize, column: &str, text: &str) -> Result<Vec<Identifier>, OutputError> {
    serde_json::from_str(text).map_err(|e| OutputError::BadValue {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        message: e.to_string(),
    })
}

fn bad(path: &Path, row: usize, column: &str, message: impl Into<String>) -> OutputError {
    OutputError::BadValue {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_label(path: &Path, row: usize, text: &str) -> Result<Label, OutputError> {
    text.parse().map_err(|e: String| bad(path, row, "actual_label", e))
}

fn read_csv(path: &Path) -> Result<Vec<DatasetRow>, OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut index = BTreeMap::new();
    for column in COLUMNS {
        let i = headers.iter().position(|h| h == column).ok_or_else(|| OutputError::MissingColumn {
            path: path.display().to_string(),
            column: column.to_string(),
        })?;
        index.insert(column, i);
    }
    let extra_columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row_no = n + 1;
        let get = |c: &str| record.get(index[c]).unwrap_or_default();
        let opt = |c: &str| non_empty(Some(get(c).to_string()));
        let authors: Vec<String> =
            serde_json::from_str(get("authors")).map_err(|e| bad(path, row_no, "authors", e.to_string()))?;
        rows.push(DatasetRow {
            type_of_citation: get("type_of_citation").to_string(),
            page_title: get("page_title").to_string(),
            title: opt("title"),
            url: opt("url"),
            tld: opt("tld"),
            authors,
            id_list: parse_ids(path, row_no, "id_list", get("id_list"))?,
            citation: get("citation").to_string(),
            actual_label: parse_label(path, row_no, get("actual_label"))?,
            acquired_id_list: parse_ids(path, row_no, "acquired_id_list", get("acquired_id_list"))?,
            extra: extra_columns
                .iter()
                .map(|(i, h)| (h.clone(), Value::String(record.get(*i).unwrap_or_default().to_string())))
                .collect(),
        });
    }
    Ok(rows)
}

fn row_from_json(path: &Path, line: usize, value: Value) -> Result<DatasetRow, OutputError> {
    let Value::Object(mut map) = value else {
        return Err(OutputError::BadLine {
            path: path.display().to_string(),
            line,
            message: "expected an object".into(),
        });
    };
    for column in COLUMNS {
        if !map.contains_key(column) {
            return Err(OutputError::MissingColumn {
                path: path.display().to_string(),
                column: column.to_string(),
            });
        }
    }
    let mut take = |c: &str| map.remove(c).unwrap_or(Value::Null);
    let text = |c: &str, v: Value| match v {
        Value::String(s) => Ok(s),
        other => Err(bad(path, line, c, format!("expected a string, got {other}"))),
    };
    let opt = |c: &str, v: Value| match v {
        Value::Null => Ok(None),
        Value::String(s) => Ok(non_empty(Some(s))),
        other => Err(bad(path, line, c, format!("expected a string or null, got {other}"))),
    };

    let type_of_citation = text("type_of_citation", take("type_of_citation"))?;
    let page_title = text("page_title", take("page_title"))?;
    let title = opt("title", take("title"))?;
    let url = opt("url", take("url"))?;
    let tld = opt("tld", take("tld"))?;
    let authors = decode(path, line, "authors", take("authors"))?;
    let id_list = decode(path, line, "id_list", take("id_list"))?;
    let citation = text("citation", take("citation"))?;
    let label_text = text("actual_label", take("actual_label"))?;
    let acquired_id_list = decode(path, line, "acquired_id_list", take("acquired_id_list"))?;

    let mut extra: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(Value::Object(nested)) = map.remove("extra") {
        extra.extend(nested);
    }
    extra.extend(map);
    Ok(DatasetRow {
        type_of_citation,
        page_title,
        title,
        url,
        tld,
        authors,
        id_list,
        citation,
        actual_label: parse_label(path, line, &label_text)?,
        acquired_id_list,
        extra,
    })
}

fn decode<T: serde::de::DeserializeOwned>(path: &Path, line: usize, column: &str, value: Value) -> Result<T, OutputError> {
    serde_json::from_value(value).map_err(|e| bad(path, line, column, e.to_string()))
}

fn read_jsonl(path: &Path) -> Result<Vec<DatasetRow>, OutputError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| OutputError::BadLine {
            path: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        rows.push(row_from_json(path, n + 1, value)?);
    }
    Ok(rows)
}

/// Dataset files at `path`: the file itself, or the sorted `part-*` files of
/// a directory.
pub fn dataset_files(path: &Path, format: Format) -> Result<Vec<PathBuf>, OutputError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(io_err(path))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            name.starts_with("part-") && name.ends_with(&format!(".{}", format.extension()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(OutputError::NoInput(path.display().to_string()));
    }
    Ok(files)
}

/// Read every row at `path` (a file or a directory of parts), in order.
pub fn read_rows(path: impl AsRef<Path>, format: Format) -> Result<Vec<DatasetRow>, OutputError> {
    let mut rows = Vec::new();
    for file in dataset_files(path.as_ref(), format)? {
        rows.extend(match format {
            Format::Csv => read_csv(&file)?,
            Format::Jsonl => read_jsonl(&file)?,
        });
    }
    Ok(rows)
}
