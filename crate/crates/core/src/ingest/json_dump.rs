use std::io::{BufRead, BufReader, Read};

use serde_json::{Map, Value};

use super::mapping::{DumpFormat, FieldMapping, FieldPath};
use super::{IngestError, Ingested, ProfileBuilder, RecordView};

struct JsonRecord<'a>(&'a Value);

impl RecordView for JsonRecord<'_> {
    fn values(&self, path: &FieldPath) -> Vec<String> {
        path.extract(self.0)
    }

    fn raw(&self) -> Map<String, Value> {
        self.0.as_object().cloned().unwrap_or_default()
    }
}

/// Ingests a JSON dump: either a single document (`format = "json"`) or one
/// record per line (`format = "jsonl"`).
///
/// Invalid UTF-8 is replaced with U+FFFD and reported as a warning.
pub fn ingest_json_dump<R: Read>(
    reader: R,
    mapping: &FieldMapping,
) -> Result<Ingested, IngestError> {
    let mut builder = ProfileBuilder::new(mapping);
    match mapping.format {
        DumpFormat::Jsonl => read_lines(reader, &mut builder)?,
        _ => read_document(reader, mapping, &mut builder)?,
    }
    Ok(builder.finish())
}

fn read_document<R: Read>(
    mut reader: R,
    mapping: &FieldMapping,
    builder: &mut ProfileBuilder<'_>,
) -> Result<(), IngestError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let text = String::from_utf8_lossy(&bytes);
    if let std::borrow::Cow::Owned(_) = text {
        builder.warn(None, "dump is not valid UTF-8; invalid sequences replaced");
    }
    if text.trim().is_empty() {
        return Ok(());
    }
    let unreadable = |message: String| IngestError::Unreadable {
        registry: mapping.registry,
        message,
    };
    let doc: Value = serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))?;

    let records = match &mapping.records {
        Some(path) => {
            let mut hits = Vec::new();
            walk(&doc, path, &mut hits);
            match hits.as_slice() {
                [Value::Array(items)] => items.clone(),
                _ => {
                    return Err(unreadable(format!(
                        "no record array at {:?}",
                        path.as_str()
                    )))
                }
            }
        }
        None => match doc {
            Value::Array(items) => items,
            _ => return Err(unreadable("expected a top-level array of records".into())),
        },
    };

    for (index, record) in records.iter().enumerate() {
        if record.is_object() {
            builder.accept(index, &JsonRecord(record));
        } else {
            builder.skip(index, "record is not a JSON object");
        }
    }
    Ok(())
}

// Like FieldPath::extract but returns the raw node (arrays included).
fn walk<'a>(doc: &'a Value, path: &FieldPath, out: &mut Vec<&'a Value>) {
    let mut node = doc;
    for key in path.as_str().split('.').filter(|s| !s.is_empty()) {
        match node.get(key) {
            Some(next) => node = next,
            None => return,
        }
    }
    out.push(node);
}

fn read_lines<R: Read>(reader: R, builder: &mut ProfileBuilder<'_>) -> Result<(), IngestError> {
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    let mut index = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let line = String::from_utf8_lossy(&buf);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let std::borrow::Cow::Owned(_) = line {
            builder.warn(
                Some(index),
                "record is not valid UTF-8; invalid sequences replaced",
            );
        }
        match serde_json::from_str::<Value>(trimmed) {
            Ok(record) if record.is_object() => builder.accept(index, &JsonRecord(&record)),
            Ok(_) => builder.skip(index, "record is not a JSON object"),
            Err(e) => builder.skip(index, format!("invalid JSON record: {e}")),
        }
        index += 1;
    }
    Ok(())
}
