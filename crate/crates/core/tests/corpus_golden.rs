use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use shroud_core::corpus::{
    chunk_document, read_index, render_index, ChunkConfig, Corpus, Document, DocumentMetadata, HeuristicExtractor,
    METADATA_FILE,
};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn copy_texts(to: &Path) {
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "txt") {
            fs::copy(&path, to.join(path.file_name().unwrap())).unwrap();
        }
    }
}

#[test]
fn ingest_matches_golden_metadata() {
    let dir = tempfile::tempdir().unwrap();
    copy_texts(dir.path());
    Corpus::ingest_dir(dir.path(), ChunkConfig::default(), &HeuristicExtractor).unwrap();
    let produced = fs::read_to_string(dir.path().join(METADATA_FILE)).unwrap();
    let golden_path = fixture_dir().join(METADATA_FILE);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden_path, &produced).unwrap();
    }
    let golden = fs::read_to_string(golden_path).unwrap();
    assert_eq!(produced, golden);
}

#[test]
fn golden_records_name_the_parties_and_dates() {
    let records = read_index(&fixture_dir().join(METADATA_FILE)).unwrap();
    let supply = records.iter().find(|r| r.parties.contains(&"Acme Corp".to_string())).unwrap();
    assert_eq!(supply.parties, vec!["Acme Corp", "Beta LLC"]);
    assert!(supply.dates.contains(&"2023-01-01".to_string()));
    assert_eq!(supply.governing_law.as_deref(), Some("Delaware"));
    assert_eq!(supply.doc_type.as_deref(), Some("supply"));
}

#[test]
fn load_reads_the_checked_in_index() {
    let corpus = Corpus::load(fixture_dir(), ChunkConfig::default()).unwrap();
    assert_eq!(corpus.len(), 3);
    assert_eq!(render_index(&corpus.metadata_index()), fs::read_to_string(fixture_dir().join(METADATA_FILE)).unwrap());
}

#[test]
fn reingesting_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    copy_texts(dir.path());
    Corpus::ingest_dir(dir.path(), ChunkConfig::default(), &HeuristicExtractor).unwrap();
    let first = fs::read(dir.path().join(METADATA_FILE)).unwrap();
    Corpus::ingest_dir(dir.path(), ChunkConfig::default(), &HeuristicExtractor).unwrap();
    assert_eq!(first, fs::read(dir.path().join(METADATA_FILE)).unwrap());
}

fn doc(text: &str) -> Document {
    Document { doc_id: "doc-0000000000000000".into(), title: "t".into(), text: text.into(), source_path: "t.txt".into() }
}

/// Rebuilds the text from chunks by skipping each chunk's overlap with the
/// previous one.
fn reassemble(text: &str, size: usize, overlap: usize) -> String {
    let chunks = chunk_document(&doc(text), size, overlap).unwrap();
    let mut out = String::new();
    let mut covered = 0;
    for c in &chunks {
        assert_eq!(&text[c.char_start..c.char_end], c.text);
        assert!(c.char_start <= covered, "gap before chunk {}", c.chunk_id);
        out.push_str(&text[covered.max(c.char_start)..c.char_end]);
        covered = c.char_end;
    }
    out
}

proptest! {
    #[test]
    fn chunks_reassemble_to_the_document(text in "[a-zA-Z0-9 é€\n]{1,400}", size in 2usize..80, overlap_frac in 0.0f64..0.9) {
        let overlap = ((size as f64) * overlap_frac) as usize;
        prop_assume!(overlap < size);
        prop_assert_eq!(reassemble(&text, size, overlap), text);
    }

    #[test]
    fn chunk_sizes_respect_the_limit(text in "[a-z ]{1,300}", size in 2usize..50) {
        for c in chunk_document(&doc(&text), size, size / 3).unwrap() {
            prop_assert!(c.text.chars().count() <= size);
        }
    }

    #[test]
    fn metadata_round_trips_through_the_index(
        parties in prop::collection::vec("[A-Z][a-z]{1,8}( [A-Z][a-z]{1,8})?", 0..4),
        law in prop::option::of("[A-Z][a-z]{2,10}"),
    ) {
        let record = DocumentMetadata {
            doc_id: "doc-0123456789abcdef".into(),
            parties,
            dates: vec!["2023-01-01".into()],
            governing_law: law,
            doc_type: Some("supply".into()),
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METADATA_FILE);
        shroud_core::corpus::write_index(&path, std::slice::from_ref(&record)).unwrap();
        prop_assert_eq!(read_index(&path).unwrap(), vec![record]);
    }
}

#[test]
fn overlap_not_smaller_than_size_is_rejected() {
    assert!(chunk_document(&doc("abc"), 4, 4).is_err());
}
