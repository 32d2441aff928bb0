//! Contract corpus: ingestion, the persistent metadata index and chunking.
//!
//! A corpus directory holds one `.txt` file per contract. An optional
//! `<name>.meta.json` sidecar overrides whatever the extractor found, and the
//! merged records are persisted to `metadata.json` in the same directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dates;
use crate::provider::LocalModel;

pub const DEFAULT_CHUNK_SIZE: usize = 1200;
pub const DEFAULT_CHUNK_OVERLAP: usize = 200;
pub const METADATA_FILE: &str = "metadata.json";
/// Key in [`DocumentMetadata::extra`] set when extraction failed.
pub const EXTRACTION_WARNING_KEY: &str = "extraction_warning";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty text: {0}")]
    EmptyText(PathBuf),
    #[error("chunk size {size} must exceed overlap {overlap}")]
    InvalidChunking { size: usize, overlap: usize },
    #[error("malformed metadata file {path}: {source}")]
    MalformedIndex {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("metadata index references unknown document {0}")]
    UnknownDocument(String),
    #[error("invalid date {date:?} in metadata for {doc_id}")]
    InvalidDate { doc_id: String, date: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub source_path: String,
}

/// One record of `metadata.json`. Field order is the on-disk key order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    pub doc_id: String,
    pub parties: Vec<String>,
    /// ISO-8601 calendar dates.
    pub dates: Vec<String>,
    pub governing_law: Option<String>,
    pub doc_type: Option<String>,
    pub extra: BTreeMap<String, String>,
}

impl DocumentMetadata {
    pub fn empty(doc_id: &str) -> Self {
        Self { doc_id: doc_id.to_string(), ..Self::default() }
    }

    pub fn extraction_warning(&self) -> Option<&str> {
        self.extra.get(EXTRACTION_WARNING_KEY).map(String::as_str)
    }
}

/// A retrievable fragment of a document. `char_start`/`char_end` are byte
/// offsets on char boundaries; `text == doc.text[char_start..char_end]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_id: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

/// Fields an extractor produced for one document (no doc id yet).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractedFields {
    pub parties: Vec<String>,
    pub dates: Vec<String>,
    pub governing_law: Option<String>,
    pub doc_type: Option<String>,
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
#[error("metadata extraction failed: {0}")]
pub struct ExtractError(pub String);

pub trait MetadataExtractor: Send + Sync {
    fn extract(&self, title: &str, text: &str) -> Result<ExtractedFields, ExtractError>;
}

/// Regex and keyword extractor; needs no model.
#[derive(Debug, Clone, Default)]
pub struct HeuristicExtractor;

/// How much of a document counts as its "first page" for party extraction.
const FIRST_PAGE_CHARS: usize = 4000;

const NAME_PART: &str = r"[A-Z][A-Za-z0-9&\-']*\.?";

static BETWEEN_RE: LazyLock<Regex> = LazyLock::new(|| {
    let name = format!(r"(?:the\s+)?({NAME_PART}(?:[ \t]+(?:of[ \t]+|and[ \t]+Co\.?)?{NAME_PART})*)");
    Regex::new(&format!(r"(?i:between)\s+{name}(?:\s*\([^)]*\))?,?\s+(?i:and)\s+{name}")).expect("between regex")
});

static GOVERNING_LAW_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i:governed\s+by(?:\s+and\s+construed\s+in\s+accordance\s+with)?\s+the\s+laws\s+of\s+(?:the\s+)?(?:(?:State|Commonwealth|Province)\s+of\s+)?)([A-Z][A-Za-z]+(?:\s+[A-Z][A-Za-z]+)*)")
        .expect("governing law regex")
});

const DOC_TYPES: &[(&str, &str)] = &[
    ("non-disclosure", "nda"),
    ("confidentiality agreement", "nda"),
    ("joint venture", "joint_venture"),
    ("strategic alliance", "strategic_alliance"),
    ("co-branding", "co_branding"),
    ("license", "license"),
    ("licence", "license"),
    ("supply", "supply"),
    ("distribution", "distribution"),
    ("distributor", "distribution"),
    ("reseller", "reseller"),
    ("franchise", "franchise"),
    ("employment", "employment"),
    ("consulting", "consulting"),
    ("manufacturing", "manufacturing"),
    ("maintenance", "maintenance"),
    ("hosting", "hosting"),
    ("outsourcing", "outsourcing"),
    ("sponsorship", "sponsorship"),
    ("endorsement", "endorsement"),
    ("marketing", "marketing"),
    ("development", "development"),
    ("agency", "agency"),
    ("lease", "lease"),
    ("services", "services"),
];

/// Strips sentence punctuation from a captured party name while keeping
/// abbreviations such as `Inc.`.
fn clean_party(raw: &str) -> String {
    let mut s = raw.trim().trim_end_matches([',', ';', ':']).to_string();
    if s.ends_with('.') {
        let last = s.rsplit(' ').next().unwrap_or("");
        let keep = ["inc.", "co.", "corp.", "ltd.", "l.p.", "n.a.", "s.a.", "plc."];
        if !keep.contains(&last.to_lowercase().as_str()) {
            s.pop();
        }
    }
    s
}

impl MetadataExtractor for HeuristicExtractor {
    fn extract(&self, title: &str, text: &str) -> Result<ExtractedFields, ExtractError> {
        let first_page = &text[..crate::text::char_to_byte(text, FIRST_PAGE_CHARS)];
        let mut fields = ExtractedFields::default();
        for caps in BETWEEN_RE.captures_iter(first_page) {
            for group in [1, 2] {
                let party = clean_party(&caps[group]);
                if !party.is_empty() && !fields.parties.contains(&party) {
                    fields.parties.push(party);
                }
            }
        }
        for m in dates::find_dates(text) {
            let iso = dates::iso(m.date);
            if !fields.dates.contains(&iso) {
                fields.dates.push(iso);
            }
        }
        fields.governing_law = GOVERNING_LAW_RE.captures(text).map(|c| c[1].to_string());
        let lower_title = title.to_lowercase();
        let lower_page = first_page.to_lowercase();
        fields.doc_type = DOC_TYPES
            .iter()
            .find(|(kw, _)| lower_title.contains(kw))
            .or_else(|| DOC_TYPES.iter().find(|(kw, _)| lower_page.contains(kw)))
            .map(|(_, ty)| ty.to_string());
        Ok(fields)
    }
}

/// Extractor backed by a local model that answers with a JSON object of
/// [`ExtractedFields`].
pub struct LlmMetadataExtractor<M> {
    model: M,
}

pub const METADATA_PROMPT: &str = include_str!("../assets/metadata_fields.v1.txt");

impl<M: LocalModel> LlmMetadataExtractor<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }
}

impl<M: LocalModel> MetadataExtractor for LlmMetadataExtractor<M> {
    fn extract(&self, title: &str, text: &str) -> Result<ExtractedFields, ExtractError> {
        let first_page = &text[..crate::text::char_to_byte(text, FIRST_PAGE_CHARS)];
        let user = format!("Title: {title}\n\n{first_page}");
        let raw = self
            .model
            .complete(METADATA_PROMPT, &user)
            .map_err(|e| ExtractError(e.to_string()))?;
        let json = crate::query::extract_json_object(&raw)
            .ok_or_else(|| ExtractError("model output contained no JSON object".into()))?;
        let mut fields: ExtractedFields =
            serde_json::from_str(json).map_err(|e| ExtractError(e.to_string()))?;
        fields.dates = fields
            .dates
            .iter()
            .filter_map(|d| dates::parse_date(d).map(|(date, _)| dates::iso(date)))
            .collect();
        Ok(fields)
    }
}

/// Stable document id derived from the normalized source path.
pub fn doc_id_for(path: &Path) -> String {
    let normalized = normalize_path(path);
    let digest = Sha256::digest(normalized.as_bytes());
    format!("doc-{}", &hex::encode(digest)[..16])
}

/// True if `s` has the shape of an id produced by [`doc_id_for`].
pub fn is_valid_doc_id(s: &str) -> bool {
    s.strip_prefix("doc-")
        .is_some_and(|h| h.len() == 16 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
}

fn normalize_path(path: &Path) -> String {
    let mut parts: Vec<String> = Vec::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                parts.pop();
            }
            Component::RootDir => parts.clear(),
            other => parts.push(other.as_os_str().to_string_lossy().into_owned()),
        }
    }
    parts.join("/")
}

/// Splits `doc.text` into windows of `size` chars advancing by
/// `size - overlap`. The last window ends at the end of the text.
pub fn chunk_document(doc: &Document, size: usize, overlap: usize) -> Result<Vec<Chunk>, CorpusError> {
    if size <= overlap {
        return Err(CorpusError::InvalidChunking { size, overlap });
    }
    // byte offset of every char start, plus the end sentinel
    let mut bounds: Vec<usize> = doc.text.char_indices().map(|(b, _)| b).collect();
    let n_chars = bounds.len();
    bounds.push(doc.text.len());
    let stride = size - overlap;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n_chars {
        let end = (start + size).min(n_chars);
        let (b0, b1) = (bounds[start], bounds[end]);
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            chunk_id: chunks.len(),
            char_start: b0,
            char_end: b1,
            text: doc.text[b0..b1].to_string(),
        });
        if end == n_chars {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

/// Sidecar override record; every present field replaces the extracted one.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SidecarOverride {
    parties: Option<Vec<String>>,
    dates: Option<Vec<String>>,
    governing_law: Option<String>,
    doc_type: Option<String>,
    extra: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkConfig {
    pub size: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self { size: DEFAULT_CHUNK_SIZE, overlap: DEFAULT_CHUNK_OVERLAP }
    }
}

/// Outcome of [`Corpus::ingest_document`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub doc_id: String,
    pub replaced: bool,
    pub warning: Option<String>,
}

/// Documents, their metadata records and chunks. Mutated only during
/// ingestion; readers share it behind an `Arc` afterwards.
#[derive(Debug, Clone)]
pub struct Corpus {
    root: PathBuf,
    chunking: ChunkConfig,
    docs: BTreeMap<String, Document>,
    metadata: BTreeMap<String, DocumentMetadata>,
    chunks: BTreeMap<String, Vec<Chunk>>,
}

impl Corpus {
    pub fn new(root: impl Into<PathBuf>, chunking: ChunkConfig) -> Result<Self, CorpusError> {
        if chunking.size <= chunking.overlap {
            return Err(CorpusError::InvalidChunking { size: chunking.size, overlap: chunking.overlap });
        }
        Ok(Self {
            root: root.into(),
            chunking,
            docs: BTreeMap::new(),
            metadata: BTreeMap::new(),
            chunks: BTreeMap::new(),
        })
    }

    /// Ingests every `.txt` file under `root` (non-recursive, sorted by name)
    /// and persists the metadata index.
    pub fn ingest_dir(
        root: impl Into<PathBuf>,
        chunking: ChunkConfig,
        extractor: &dyn MetadataExtractor,
    ) -> Result<(Self, Vec<Ingested>), CorpusError> {
        let mut corpus = Self::new(root, chunking)?;
        let mut outcomes = Vec::new();
        for path in corpus.text_files()? {
            outcomes.push(corpus.ingest_document(&path, extractor)?);
        }
        corpus.save_index()?;
        Ok((corpus, outcomes))
    }

    /// Loads documents and an existing `metadata.json` without running the
    /// extractor; documents missing from the index get empty records.
    pub fn load(root: impl Into<PathBuf>, chunking: ChunkConfig) -> Result<Self, CorpusError> {
        let mut corpus = Self::new(root, chunking)?;
        let index_path = corpus.root.join(METADATA_FILE);
        let index = if index_path.exists() { read_index(&index_path)? } else { Vec::new() };
        for path in corpus.text_files()? {
            let doc = corpus.read_document(&path)?;
            corpus.insert_document(doc)?;
        }
        for record in index {
            if !corpus.docs.contains_key(&record.doc_id) {
                return Err(CorpusError::UnknownDocument(record.doc_id));
            }
            corpus.metadata.insert(record.doc_id.clone(), record);
        }
        for id in corpus.docs.keys() {
            corpus.metadata.entry(id.clone()).or_insert_with(|| DocumentMetadata::empty(id));
        }
        Ok(corpus)
    }

    fn text_files(&self) -> Result<Vec<PathBuf>, CorpusError> {
        let io = |source| CorpusError::Io { path: self.root.clone(), source };
        let mut files: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        Ok(files)
    }

    fn relative<'a>(&self, path: &'a Path) -> &'a Path {
        path.strip_prefix(&self.root).unwrap_or(path)
    }

    fn read_document(&self, path: &Path) -> Result<Document, CorpusError> {
        let bytes = fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        let text = String::from_utf8_lossy(&bytes).replace("\r\n", "\n");
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText(path.to_path_buf()));
        }
        let rel = self.relative(path);
        let title = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_default()
            .to_string();
        Ok(Document {
            doc_id: doc_id_for(rel),
            title,
            text,
            source_path: normalize_path(rel),
        })
    }

    fn insert_document(&mut self, doc: Document) -> Result<bool, CorpusError> {
        let chunks = chunk_document(&doc, self.chunking.size, self.chunking.overlap)?;
        self.chunks.insert(doc.doc_id.clone(), chunks);
        Ok(self.docs.insert(doc.doc_id.clone(), doc).is_some())
    }

    /// Reads, extracts and stores one document, replacing any previous record
    /// for the same path. Extractor failure keeps the document with an empty
    /// record carrying a warning.
    pub fn ingest_document(
        &mut self,
        path: &Path,
        extractor: &dyn MetadataExtractor,
    ) -> Result<Ingested, CorpusError> {
        let doc = self.read_document(path)?;
        let doc_id = doc.doc_id.clone();
        let mut record = DocumentMetadata::empty(&doc_id);
        let mut warning = None;
        match extractor.extract(&doc.title, &doc.text) {
            Ok(fields) => {
                record.parties = fields.parties;
                record.dates = fields.dates;
                record.governing_law = fields.governing_law;
                record.doc_type = fields.doc_type;
                record.extra = fields.extra;
            }
            Err(e) => {
                tracing::warn!(doc_id = %doc_id, "metadata extraction failed");
                record.extra.insert(EXTRACTION_WARNING_KEY.to_string(), e.to_string());
                warning = Some(e.to_string());
            }
        }
        apply_sidecar(path, &mut record)?;
        validate_dates(&record)?;
        let replaced = self.insert_document(doc)?;
        self.metadata.insert(doc_id.clone(), record);
        Ok(Ingested { doc_id, replaced, warning })
    }

    /// Writes `metadata.json` into the corpus root.
    pub fn save_index(&self) -> Result<(), CorpusError> {
        let path = self.root.join(METADATA_FILE);
        write_index(&path, &self.metadata_index())
    }

    /// Metadata records sorted by doc id.
    pub fn metadata_index(&self) -> Vec<DocumentMetadata> {
        self.metadata.values().cloned().collect()
    }

    pub fn metadata(&self, doc_id: &str) -> Option<&DocumentMetadata> {
        self.metadata.get(doc_id)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.docs.keys().cloned().collect()
    }

    pub fn chunks(&self, doc_id: &str) -> &[Chunk] {
        self.chunks.get(doc_id).map_or(&[], Vec::as_slice)
    }

    pub fn all_chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Adds an in-memory document (used by fixtures that never touch disk).
    pub fn insert(&mut self, doc: Document, mut metadata: DocumentMetadata) -> Result<(), CorpusError> {
        if doc.text.trim().is_empty() {
            return Err(CorpusError::EmptyText(PathBuf::from(&doc.source_path)));
        }
        metadata.doc_id = doc.doc_id.clone();
        validate_dates(&metadata)?;
        self.metadata.insert(doc.doc_id.clone(), metadata);
        self.insert_document(doc)?;
        Ok(())
    }
}

fn apply_sidecar(path: &Path, record: &mut DocumentMetadata) -> Result<(), CorpusError> {
    let Some(stem) = path.file_stem() else { return Ok(()) };
    let sidecar = path.with_file_name(format!("{}.meta.json", stem.to_string_lossy()));
    if !sidecar.exists() {
        return Ok(());
    }
    let raw = fs::read_to_string(&sidecar).map_err(|source| CorpusError::Io { path: sidecar.clone(), source })?;
    let o: SidecarOverride =
        serde_json::from_str(&raw).map_err(|source| CorpusError::MalformedIndex { path: sidecar, source })?;
    if let Some(v) = o.parties {
        record.parties = v;
    }
    if let Some(v) = o.dates {
        record.dates = v;
    }
    if o.governing_law.is_some() {
        record.governing_law = o.governing_law;
    }
    if o.doc_type.is_some() {
        record.doc_type = o.doc_type;
    }
    if let Some(v) = o.extra {
        record.extra.extend(v);
    }
    Ok(())
}

fn validate_dates(record: &DocumentMetadata) -> Result<(), CorpusError> {
    for d in &record.dates {
        if chrono::NaiveDate::parse_from_str(d, "%Y-%m-%d").is_err() {
            return Err(CorpusError::InvalidDate { doc_id: record.doc_id.clone(), date: d.clone() });
        }
    }
    Ok(())
}

/// Serializes the index as pretty JSON with a trailing newline.
pub fn render_index(records: &[DocumentMetadata]) -> String {
    let mut s = serde_json::to_string_pretty(records).expect("metadata serializes");
    s.push('\n');
    s
}

pub fn write_index(path: &Path, records: &[DocumentMetadata]) -> Result<(), CorpusError> {
    fs::write(path, render_index(records)).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

pub fn read_index(path: &Path) -> Result<Vec<DocumentMetadata>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let records: Vec<DocumentMetadata> = serde_json::from_str(&raw)
        .map_err(|source| CorpusError::MalformedIndex { path: path.to_path_buf(), source })?;
    for r in &records {
        validate_dates(r)?;
    }
    Ok(records)
}
