use std::io::Read;

use serde_json::{Map, Value};

use super::mapping::{FieldMapping, FieldPath};
use super::{IngestError, Ingested, ProfileBuilder, RecordView};

struct CsvRecord<'a> {
    headers: &'a [String],
    cells: Vec<String>,
}

impl RecordView for CsvRecord<'_> {
    fn values(&self, path: &FieldPath) -> Vec<String> {
        self.headers
            .iter()
            .position(|h| h == path.as_str())
            .map(|i| vec![self.cells[i].clone()])
            .unwrap_or_default()
    }

    fn raw(&self) -> Map<String, Value> {
        self.headers
            .iter()
            .cloned()
            .zip(self.cells.iter().map(|c| Value::String(c.clone())))
            .collect()
    }
}

/// Ingests a CSV dump with a header row. Quoted cells may contain commas,
/// doubled quotes and line breaks.
///
/// Ragged rows are skipped. A quoting error (an unterminated quoted cell or
/// text after a closing quote) makes the whole dump unreadable.
pub fn ingest_multiline_csv<R: Read>(
    mut reader: R,
    mapping: &FieldMapping,
) -> Result<Ingested, IngestError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    check_quoting(&String::from_utf8_lossy(&bytes))
        .map_err(|(line, message)| IngestError::Quoting { line, message })?;

    let mut builder = ProfileBuilder::new(mapping);
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(bytes.as_slice());

    let headers: Vec<String> = csv
        .byte_headers()
        .map_err(|e| IngestError::Unreadable {
            registry: mapping.registry,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().to_string())
        .collect();

    for (index, row) in csv.byte_records().enumerate() {
        let row = row.map_err(|e| IngestError::Unreadable {
            registry: mapping.registry,
            message: e.to_string(),
        })?;
        if row.len() != headers.len() {
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            builder.skip(
                index,
                format!(
                    "ragged row at line {line}: expected {} fields, found {}",
                    headers.len(),
                    row.len()
                ),
            );
            continue;
        }
        let mut lossy = false;
        let cells = row
            .iter()
            .map(|c| match String::from_utf8_lossy(c) {
                std::borrow::Cow::Borrowed(s) => s.to_string(),
                std::borrow::Cow::Owned(s) => {
                    lossy = true;
                    s
                }
            })
            .collect();
        if lossy {
            builder.warn(
                Some(index),
                "record is not valid UTF-8; invalid sequences replaced",
            );
        }
        builder.accept(
            index,
            &CsvRecord {
                headers: &headers,
                cells,
            },
        );
    }
    Ok(builder.finish())
}

/// Strict quote scan. The csv reader is lenient about broken quoting, so
/// structural errors are caught here first. Returns (line, message).
fn check_quoting(text: &str) -> Result<(), (usize, String)> {
    #[derive(PartialEq)]
    enum State {
        FieldStart,
        Unquoted,
        Quoted,
        ClosingQuote,
    }
    let mut state = State::FieldStart;
    let mut line = 1;
    let mut opened_at = 0;
    for c in text.chars() {
        state = match state {
            State::FieldStart => match c {
                '"' => {
                    opened_at = line;
                    State::Quoted
                }
                ',' => State::FieldStart,
                '\n' => {
                    line += 1;
                    State::FieldStart
                }
                _ => State::Unquoted,
            },
            State::Unquoted => match c {
                ',' => State::FieldStart,
                '\n' => {
                    line += 1;
                    State::FieldStart
                }
                _ => State::Unquoted,
            },
            State::Quoted => match c {
                '"' => State::ClosingQuote,
                '\n' => {
                    line += 1;
                    State::Quoted
                }
                _ => State::Quoted,
            },
            State::ClosingQuote => match c {
                '"' => State::Quoted,
                ',' => State::FieldStart,
                '\r' => State::ClosingQuote,
                '\n' => {
                    line += 1;
                    State::FieldStart
                }
                other => return Err((line, format!("unexpected {other:?} after closing quote"))),
            },
        };
    }
    if state == State::Quoted {
        return Err((opened_at, "unterminated quoted field".into()));
    }
    Ok(())
}
