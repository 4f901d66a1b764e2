//! Corpus ingestion: documents, metadata, vocabulary, and the sparse
//! document-term matrix the estimators consume.
//!
//! Documents are kept in a stable order — sorted by `(year, doc_id)` — so that
//! every downstream artifact (scales, topic series, exports) is reproducible
//! independent of filesystem enumeration order. Tokenization is whitespace
//! splitting plus lowercasing; inputs are expected to be pre-cleaned text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Per-document metadata.
///
/// `doc_id` is unique across the corpus; `year` drives the stable ordering and
/// year subsetting; `party`/`speaker` are optional grouping labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub doc_id: String,
    pub year: i32,
    pub party: Option<String>,
    pub speaker: Option<String>,
}

/// A tokenized document plus its metadata.
#[derive(Debug, Clone)]
pub struct Document {
    pub meta: DocumentMeta,
    pub tokens: Vec<String>,
}

/// An ordered collection of documents (sorted by `(year, doc_id)`).
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    /// Build a corpus from documents, sorting into the stable order and
    /// rejecting duplicate ids or an empty collection.
    pub fn from_documents(mut docs: Vec<Document>) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::NoDocuments);
        }
        docs.sort_by(|a, b| {
            (a.meta.year, a.meta.doc_id.as_str()).cmp(&(b.meta.year, b.meta.doc_id.as_str()))
        });
        for pair in docs.windows(2) {
            if pair[0].meta.doc_id == pair[1].meta.doc_id {
                return Err(Error::DuplicateDocId {
                    doc_id: pair[0].meta.doc_id.clone(),
                });
            }
        }
        Ok(Corpus { docs })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Whitespace tokenization with lowercasing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Load a corpus from a document source plus a metadata table.
///
/// The document source is either a directory of `<doc_id>.txt` files or a
/// JSONL file with one `{"doc_id": …, "text": …}` object per line. The
/// metadata table is delimited text (comma, or tab when the header contains
/// tabs) with a header row naming at least `doc_id` and `year`; `party` and
/// `speaker` are picked up when present. Every document must have a metadata
/// row; extra metadata rows are ignored.
pub fn load_documents(doc_source: &Path, meta_source: &Path) -> Result<Corpus> {
    let texts = read_texts(doc_source)?;
    if texts.is_empty() {
        return Err(Error::NoDocuments);
    }
    let meta = read_metadata(meta_source)?;
    let mut docs = Vec::with_capacity(texts.len());
    for (doc_id, text) in texts {
        let m = meta
            .get(&doc_id)
            .ok_or_else(|| Error::MissingMetadata {
                doc_id: doc_id.clone(),
            })?
            .clone();
        docs.push(Document {
            meta: m,
            tokens: tokenize(&text),
        });
    }
    Corpus::from_documents(docs)
}

#[derive(Deserialize)]
struct JsonlDoc {
    doc_id: String,
    text: String,
}

fn read_texts(source: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if source.is_dir() {
        let mut paths: Vec<_> = std::fs::read_dir(source)
            .map_err(|e| Error::io(source.display().to_string(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let doc_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            out.push((doc_id, text));
        }
    } else {
        let file =
            std::fs::File::open(source).map_err(|e| Error::io(source.display().to_string(), e))?;
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(source.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: JsonlDoc = serde_json::from_str(&line)?;
            out.push((doc.doc_id, doc.text));
        }
    }
    Ok(out)
}

fn read_metadata(source: &Path) -> Result<HashMap<String, DocumentMeta>> {
    let raw =
        std::fs::read_to_string(source).map_err(|e| Error::io(source.display().to_string(), e))?;
    let delimiter = match raw.lines().next() {
        Some(header) if header.contains('\t') => b'\t',
        _ => b',',
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let id_col = col("doc_id")
        .ok_or_else(|| Error::BadMetadata("header must name a doc_id column".into()))?;
    let year_col =
        col("year").ok_or_else(|| Error::BadMetadata("header must name a year column".into()))?;
    let party_col = col("party");
    let speaker_col = col("speaker");

    let mut map = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let doc_id = record
            .get(id_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::BadMetadata("row with empty doc_id".into()))?
            .to_string();
        let year: i32 = record
            .get(year_col)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::BadMetadata(format!("row {doc_id}: year is not an integer")))?;
        let optional = |idx: Option<usize>| {
            idx.and_then(|i| record.get(i))
                .filter(|s| !s.is_empty())
                .map(|s| s.to_string())
        };
        let meta = DocumentMeta {
            doc_id: doc_id.clone(),
            year,
            party: optional(party_col),
            speaker: optional(speaker_col),
        };
        if map.insert(doc_id.clone(), meta).is_some() {
            return Err(Error::DuplicateDocId { doc_id });
        }
    }
    Ok(map)
}

/// Keep only documents with `from ≤ year ≤ to` (stable order preserved).
pub fn subset_by_year(corpus: &Corpus, from: i32, to: i32) -> Result<Corpus> {
    if from > to {
        return Err(Error::InvalidConfig(format!(
            "year range [{from}, {to}] is empty"
        )));
    }
    let docs: Vec<Document> = corpus
        .docs
        .iter()
        .filter(|d| d.meta.year >= from && d.meta.year <= to)
        .cloned()
        .collect();
    if docs.is_empty() {
        return Err(Error::NoDocumentsInRange { from, to });
    }
    Ok(Corpus { docs })
}

/// The retained term list, in a deterministic (lexicographic) order, with a
/// reverse index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn new(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { terms, index }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        Vocabulary::new(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

/// Sparse document-term matrix.
///
/// Row `d` holds `(term_id, count)` pairs sorted by term id with every stored
/// count > 0; rows follow the corpus document order. Terms whose corpus-wide
/// count fell below the `min_count` used to build the matrix are absent, and
/// documents emptied by that filter are dropped (their ids are recorded in
/// [`DocumentTermMatrix::dropped_docs`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentTermMatrix {
    pub meta: Vec<DocumentMeta>,
    pub vocab: Vocabulary,
    rows: Vec<Vec<(u32, u32)>>,
    /// doc_ids dropped because filtering left them with no tokens.
    pub dropped_docs: Vec<String>,
    /// The min_count the matrix was built with.
    pub min_count: u32,
}

impl DocumentTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocab.len()
    }

    /// Sparse row for document `d`: `(term_id, count)` sorted by term id.
    pub fn row(&self, d: usize) -> &[(u32, u32)] {
        &self.rows[d]
    }

    /// Total token count of document `d`.
    pub fn doc_total(&self, d: usize) -> u64 {
        self.rows[d].iter().map(|&(_, c)| c as u64).sum()
    }

    /// Corpus-wide count of term `w`.
    pub fn term_total(&self, w: usize) -> u64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .filter(|&&(t, _)| t as usize == w)
            .map(|&(_, c)| c as u64)
            .sum()
    }

    /// Sum of all stored counts.
    pub fn total_count(&self) -> u64 {
        (0..self.n_docs()).map(|d| self.doc_total(d)).sum()
    }

    /// Dense `D×W` copy (f64) for the dense-path estimators.
    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::<f64>::zeros((self.n_docs(), self.n_terms()));
        for (d, row) in self.rows.iter().enumerate() {
            for &(w, c) in row {
                m[(d, w as usize)] = c as f64;
            }
        }
        m
    }

    /// Three-column dump `doc_id,term,count`, rows ordered by (document,
    /// term id). UTF-8, comma-delimited, header row.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("doc_id,term,count\n");
        for (d, row) in self.rows.iter().enumerate() {
            for &(w, c) in row {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    csv_field(&self.meta[d].doc_id),
                    csv_field(self.vocab.term(w as usize)),
                    c
                );
            }
        }
        out
    }
}

/// Minimal CSV quoting for a single field.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Count tokens into a document-term matrix, dropping terms with corpus-wide
/// count < `min_count` and then dropping documents left empty.
pub fn build_dtm(corpus: &Corpus, min_count: u32) -> Result<DocumentTermMatrix> {
    if min_count < 1 {
        return Err(Error::InvalidConfig("min_count must be at least 1".into()));
    }
    // Per-document counts and corpus totals in one pass.
    let mut doc_counts: Vec<BTreeMap<&str, u32>> = Vec::with_capacity(corpus.len());
    let mut totals: HashMap<&str, u64> = HashMap::new();
    for doc in corpus.docs() {
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for tok in &doc.tokens {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
        for (&term, &c) in &counts {
            *totals.entry(term).or_insert(0) += c as u64;
        }
        doc_counts.push(counts);
    }

    let mut kept: Vec<&str> = totals
        .iter()
        .filter(|&(_, &total)| total >= min_count as u64)
        .map(|(&term, _)| term)
        .collect();
    kept.sort_unstable();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary { min_count });
    }
    let vocab = Vocabulary::new(kept.iter().map(|t| t.to_string()).collect());

    let mut meta = Vec::new();
    let mut rows = Vec::new();
    let mut dropped_docs = Vec::new();
    for (doc, counts) in corpus.docs().iter().zip(&doc_counts) {
        // BTreeMap iteration is sorted by term, matching vocab's lexicographic
        // ids, so rows come out sorted by term id.
        let row: Vec<(u32, u32)> = counts
            .iter()
            .filter_map(|(&term, &c)| vocab.id(term).map(|w| (w as u32, c)))
            .collect();
        if row.is_empty() {
            dropped_docs.push(doc.meta.doc_id.clone());
        } else {
            meta.push(doc.meta.clone());
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::NoDocuments);
    }
    Ok(DocumentTermMatrix {
        meta,
        vocab,
        rows,
        dropped_docs,
        min_count,
    })
}
