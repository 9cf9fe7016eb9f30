use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::record::{normalize_doi, AbstractSource, BibRecord, RecordSet};
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "ndjson" => Ok(InputFormat::Jsonl),
            other => Err(CorpusError::Config(format!(
                "unknown input format '{other}' (expected csv or jsonl)"
            ))),
        }
    }
}

impl InputFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
        ext.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Field {
    RecordId,
    Publication,
    Authors,
    Year,
    Type,
    Abstract,
    Cites,
    Doi,
    Title,
    Language,
}

fn field_for(header: &str) -> Option<Field> {
    let h = header.trim().trim_start_matches('\u{feff}').to_ascii_lowercase();
    Some(match h.as_str() {
        "record_id" | "id" => Field::RecordId,
        "publication" | "source" | "journal" => Field::Publication,
        "authors" | "author" => Field::Authors,
        "year" => Field::Year,
        "type" | "pub_type" => Field::Type,
        "abstract" | "abstracts" => Field::Abstract,
        "cites" | "citations" => Field::Cites,
        "doi" => Field::Doi,
        "title" => Field::Title,
        "language" | "lang" => Field::Language,
        _ => return None,
    })
}

type Row = HashMap<Field, String>;

/// Reads one `BibRecord` per input row. Nothing is excluded here; range and
/// content rules run in [`super::screen`].
pub fn ingest_records<R: Read>(source: R, format: InputFormat) -> Result<RecordSet, CorpusError> {
    let rows = match format {
        InputFormat::Csv => read_csv(source)?,
        InputFormat::Jsonl => read_jsonl(source)?,
    };
    if rows.is_empty() {
        log::warn!("input contained no records");
    }
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| to_record(i + 1, row))
        .collect();
    RecordSet::new(records)
}

pub fn ingest_path(path: &Path, format: Option<InputFormat>) -> Result<RecordSet, CorpusError> {
    let format = match format {
        Some(f) => f,
        None => InputFormat::from_path(path)?,
    };
    let file = File::open(path).map_err(|e| CorpusError::Ingest {
        row: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    ingest_records(BufReader::new(file), format)
}

fn read_csv<R: Read>(source: R) -> Result<Vec<Row>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if is_empty_input(&e) => return Ok(Vec::new()),
        Err(e) => {
            return Err(CorpusError::Ingest {
                row: 0,
                message: e.to_string(),
            })
        }
    };
    let columns: Vec<Option<Field>> = headers.iter().map(field_for).collect();
    let mut rows = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let record = result.map_err(|e| CorpusError::Ingest {
            row: i + 1,
            message: e.to_string(),
        })?;
        let mut row = Row::new();
        for (col, value) in columns.iter().zip(record.iter()) {
            if let Some(field) = col {
                row.insert(*field, value.to_string());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn is_empty_input(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof)
}

fn read_jsonl<R: Read>(source: R) -> Result<Vec<Row>, CorpusError> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Ingest {
            row: i + 1,
            message: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(CorpusError::Ingest {
                row: i + 1,
                message: "expected a JSON object".into(),
            });
        };
        let mut row = Row::new();
        for (key, value) in map {
            if let Some(field) = field_for(&key) {
                let text = match value {
                    Value::Null => String::new(),
                    Value::String(s) => s,
                    Value::Array(items) => items
                        .iter()
                        .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
                        .collect::<Vec<_>>()
                        .join("; "),
                    other => other.to_string(),
                };
                row.insert(field, text);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn non_blank(row: &Row, field: Field) -> Option<String> {
    row.get(&field)
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn split_authors(raw: &str) -> Vec<String> {
    let sep = if raw.contains(';') { ';' } else { ',' };
    raw.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn to_record(row_number: usize, row: Row) -> BibRecord {
    let id = non_blank(&row, Field::RecordId).unwrap_or_else(|| format!("r{row_number:06}"));
    let mut record = BibRecord::new(id);
    record.title = non_blank(&row, Field::Title);
    record.publication = non_blank(&row, Field::Publication);
    record.authors = non_blank(&row, Field::Authors)
        .map(|a| split_authors(&a))
        .unwrap_or_default();
    record.year = non_blank(&row, Field::Year).and_then(|y| match y.parse::<i32>() {
        Ok(y) => Some(y),
        Err(_) => {
            log::warn!("row {row_number}: unreadable year '{y}'");
            None
        }
    });
    record.pub_type = non_blank(&row, Field::Type);
    record.abstract_text = non_blank(&row, Field::Abstract);
    if record.abstract_text.is_some() {
        record.abstract_source = Some(AbstractSource::Input);
    }
    record.cites = non_blank(&row, Field::Cites)
        .map(|c| match c.parse::<u64>() {
            Ok(n) => n,
            Err(_) => {
                log::warn!("row {row_number}: unreadable cites '{c}', using 0");
                0
            }
        })
        .unwrap_or(0);
    record.doi = row.get(&Field::Doi).and_then(|d| normalize_doi(d));
    record.language = non_blank(&row, Field::Language);
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Status;

    const TWO_ROWS: &str = "\
title,publication,authors,year,type,abstract,cites,doi
A study,J Inf Dis,\"A Smith, B Jones\",2015,article,Some text,12,10.1/ABC
Another,Lancet,C Lee,1999,review,,3,
";

    #[test]
    fn optional_doi_passes_through() {
        let set = ingest_records(TWO_ROWS.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.records[0].doi.as_deref(), Some("10.1/abc"));
        assert_eq!(set.records[0].authors, vec!["A Smith", "B Jones"]);
        assert_eq!(set.records[1].doi, None);
        assert_eq!(set.ledger.initial, 2);
        assert!(set.records.iter().all(|r| r.status == Status::Ingested));
    }

    #[test]
    fn out_of_range_year_is_kept_at_ingest() {
        let set = ingest_records(TWO_ROWS.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(set.records[1].year, Some(1999));
        assert_eq!(set.records[1].status, Status::Ingested);
    }

    #[test]
    fn empty_file_gives_empty_set() {
        let set = ingest_records("".as_bytes(), InputFormat::Csv).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.ledger.initial, 0);
        let set = ingest_records("".as_bytes(), InputFormat::Jsonl).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn headers_are_order_free_and_case_insensitive() {
        let csv = "DOI,Abstract,Year,Title\n10.2/x,text,2020,T\n";
        let set = ingest_records(csv.as_bytes(), InputFormat::Csv).unwrap();
        let r = &set.records[0];
        assert_eq!(r.doi.as_deref(), Some("10.2/x"));
        assert_eq!(r.year, Some(2020));
        assert_eq!(r.title.as_deref(), Some("T"));
    }

    #[test]
    fn jsonl_rows() {
        let jsonl = r#"{"title":"T","authors":["A","B"],"year":2010,"cites":4,"doi":"doi:10.3/Y"}
{"title":"U","year":null}
"#;
        let set = ingest_records(jsonl.as_bytes(), InputFormat::Jsonl).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.records[0].authors, vec!["A", "B"]);
        assert_eq!(set.records[0].cites, 4);
        assert_eq!(set.records[0].doi.as_deref(), Some("10.3/y"));
        assert_eq!(set.records[1].year, None);
    }

    #[test]
    fn unknown_format_is_config_error() {
        assert!(matches!("xml".parse::<InputFormat>(), Err(CorpusError::Config(_))));
    }

    #[test]
    fn unreadable_source_is_ingest_error() {
        let err = ingest_path(Path::new("/nonexistent/pop.csv"), None).unwrap_err();
        assert!(matches!(err, CorpusError::Ingest { .. }));
    }
}
