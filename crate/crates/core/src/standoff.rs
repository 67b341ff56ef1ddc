//! Standoff annotation and corpus file IO.
//!
//! Both formats are UTF-8 line-delimited JSON: one `AnnotationSet` record
//! per line for annotations, one `{id, context, summary}` record per line
//! for corpora.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{parse_label, AnnotationSet, DocumentPair, SpanAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum StandoffError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record {index}: {message}")]
    Schema { index: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct SpanRecord {
    start: usize,
    end: usize,
    class: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SetRecord {
    doc_id: String,
    annotator: String,
    spans: Vec<SpanRecord>,
}

/// Parse line-delimited standoff records. Document references stay
/// unresolved strings; offset checks happen later in `validate` once the
/// texts are attached.
pub fn read_standoff(reader: impl Read) -> Result<Vec<AnnotationSet>, StandoffError> {
    let reader = BufReader::new(reader);
    let mut sets = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SetRecord =
            serde_json::from_str(&line).map_err(|e| StandoffError::Schema {
                index,
                message: e.to_string(),
            })?;
        let mut spans = Vec::with_capacity(record.spans.len());
        for span in record.spans {
            if span.end <= span.start {
                return Err(StandoffError::Schema {
                    index,
                    message: format!("span end {} <= start {}", span.end, span.start),
                });
            }
            let class = match span.class {
                Some(name) => Some(parse_label(&name).map_err(|e| StandoffError::Schema {
                    index,
                    message: e.to_string(),
                })?),
                None => None,
            };
            spans.push(SpanAnnotation::new(span.start, span.end, class));
        }
        sets.push(AnnotationSet::new(record.doc_id, record.annotator, spans));
    }
    Ok(sets)
}

pub fn load_standoff(path: impl AsRef<Path>) -> Result<Vec<AnnotationSet>, StandoffError> {
    read_standoff(File::open(path)?)
}

pub fn write_standoff(
    writer: impl Write,
    sets: &[AnnotationSet],
) -> Result<(), StandoffError> {
    let mut writer = BufWriter::new(writer);
    for set in sets {
        let record = SetRecord {
            doc_id: set.doc_id.clone(),
            annotator: set.annotator.clone(),
            spans: set
                .spans
                .iter()
                .map(|s| SpanRecord {
                    start: s.start,
                    end: s.end,
                    class: s.class.map(|c| c.canonical_name().to_string()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &record).map_err(|e| StandoffError::Schema {
            index: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_standoff(
    path: impl AsRef<Path>,
    sets: &[AnnotationSet],
) -> Result<(), StandoffError> {
    write_standoff(File::create(path)?, sets)
}

/// Parse line-delimited `{id, context, summary}` corpus records.
pub fn read_corpus(reader: impl Read) -> Result<Vec<DocumentPair>, StandoffError> {
    let reader = BufReader::new(reader);
    let mut docs = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocumentPair =
            serde_json::from_str(&line).map_err(|e| StandoffError::Schema {
                index,
                message: e.to_string(),
            })?;
        if doc.id.is_empty() {
            return Err(StandoffError::Schema {
                index,
                message: "empty document id".to_string(),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<DocumentPair>, StandoffError> {
    read_corpus(File::open(path)?)
}

pub fn write_corpus(writer: impl Write, docs: &[DocumentPair]) -> Result<(), StandoffError> {
    let mut writer = BufWriter::new(writer);
    for doc in docs {
        serde_json::to_writer(&mut writer, doc).map_err(|e| StandoffError::Schema {
            index: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[DocumentPair]) -> Result<(), StandoffError> {
    write_corpus(File::create(path)?, docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HallucinationClass;

    #[test]
    fn empty_file_yields_empty_list() {
        assert!(read_standoff("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn single_record_maps_fields() {
        let input = r#"{"doc_id":"d1","annotator":"a1","spans":[{"start":12,"end":14,"class":"unsupported_number"}]}"#;
        let sets = read_standoff(input.as_bytes()).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].doc_id, "d1");
        assert_eq!(sets[0].spans[0].start, 12);
        assert_eq!(sets[0].spans[0].end, 14);
        assert_eq!(
            sets[0].spans[0].class,
            Some(HallucinationClass::UnsupportedNumber)
        );
    }

    #[test]
    fn end_before_start_is_schema_error() {
        let input = r#"{"doc_id":"d1","annotator":"a1","spans":[{"start":14,"end":12,"class":null}]}"#;
        match read_standoff(input.as_bytes()) {
            Err(StandoffError::Schema { index: 0, .. }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_sets() {
        let sets = vec![AnnotationSet::new(
            "d1",
            "a1",
            vec![
                SpanAnnotation::new(0, 4, Some(HallucinationClass::UnsupportedWord)),
                SpanAnnotation::new(6, 9, None),
            ],
        )];
        let mut buf = Vec::new();
        write_standoff(&mut buf, &sets).unwrap();
        let reread = read_standoff(buf.as_slice()).unwrap();
        assert_eq!(reread, sets);
    }
}
