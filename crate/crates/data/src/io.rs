//! JSON-Lines corpus files: one document object per line, UTF-8.

use std::fs;
use std::path::Path;

use crate::error::{DataError, Result};
use crate::schema::{Corpus, Document, Provenance};
use crate::validate::validate;

/// Reads and validates a corpus file.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus_str(
        &text,
        Provenance::File {
            path: path.display().to_string(),
        },
    )
}

/// Parses JSON-Lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus_str(text: &str, provenance: Provenance) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| DataError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let violations = validate(&doc);
        if !violations.is_empty() {
            return Err(DataError::Validation {
                doc_id: doc.id,
                violations,
            });
        }
        documents.push(doc);
    }
    Ok(Corpus::from_documents(documents, &[], provenance))
}

pub fn to_jsonl(documents: &[Document]) -> String {
    let mut out = String::new();
    for d in documents {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(&corpus.documents)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::ViolationCode;

    const MINIMAL: &str = r#"{"id":"a","tokens":["x","y"],"frames":[],"entities":[],"chains":[],"relations":[],"regions":[],"modality_mask":"full"}"#;

    #[test]
    fn empty_file_gives_empty_corpus() {
        let c = parse_corpus_str("", Provenance::InMemory).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn minimal_document_parses() {
        let c = parse_corpus_str(&format!("{MINIMAL}\n\n"), Provenance::InMemory).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.labels.relations.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{MINIMAL}\n{{not json\n");
        match parse_corpus_str(&text, Provenance::InMemory) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_a_parse_error() {
        let text = MINIMAL.replace(r#""modality_mask":"full""#, r#""modality_mask":"partial""#);
        assert!(matches!(parse_corpus_str(&text, Provenance::InMemory), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn entity_past_end_names_document_and_index() {
        let text = MINIMAL.replace(
            r#""entities":[],"chains":[]"#,
            r#""entities":[{"start":0,"end":1,"type":"PER"},{"start":1,"end":3,"type":"LOC"}],"chains":[[0],[1]]"#,
        );
        match parse_corpus_str(&text, Provenance::InMemory) {
            Err(DataError::Validation { doc_id, violations }) => {
                assert_eq!(doc_id, "a");
                assert_eq!(violations[0].code, ViolationCode::EntityRange);
                assert_eq!(violations[0].path, "entities[1]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exact_keys_on_the_wire() {
        let c = parse_corpus_str(MINIMAL, Provenance::InMemory).unwrap();
        assert_eq!(to_jsonl(&c.documents).trim_end(), MINIMAL);
    }
}
