//! Embedding corpora on disk and in memory.
//!
//! A corpus directory holds a JSON manifest, two headerless little-endian
//! binary32 row-major matrices (contexts and responses) and two
//! line-delimited JSON record files. Every file named in the manifest carries
//! a SHA-256 digest that is verified on load.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ndjson;

pub const SCHEMA_VERSION: u32 = 1;

const NORM_FLOOR: f64 = 1e-12;
const UNIT_NORM_TOLERANCE: f64 = 1e-4;

pub const CONTEXTS: &str = "contexts";
pub const RESPONSES: &str = "responses";
pub const CONTEXT_RECORDS: &str = "context_records";
pub const RESPONSE_RECORDS: &str = "response_records";

/// Dense row-major matrix of binary32 embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data, rejecting ragged or non-finite input.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        let m = EmbeddingMatrix { dim, data };
        m.check_finite("matrix")?;
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    /// Decodes raw little-endian bytes. `count` is the row count the manifest claims.
    pub fn from_le_bytes(name: &str, dim: usize, count: usize, bytes: &[u8]) -> Result<Self> {
        let expected = (dim as u64) * (count as u64) * 4;
        if bytes.len() as u64 != expected {
            return Err(Error::Truncated {
                name: name.to_string(),
                expected,
                found: bytes.len() as u64,
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let m = EmbeddingMatrix { dim, data };
        m.check_finite(name)?;
        Ok(m)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn check_finite(&self, name: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: name.to_string(),
                row: pos / self.dim,
                col: pos % self.dim,
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copies the selected rows, in the order given, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
        }
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.dim, self.data.iter().map(|v| v * factor).collect())
    }

    fn check_unit_norm(&self, name: &str) -> Result<()> {
        for (row, r) in self.rows().enumerate() {
            let norm = euclidean_norm(r);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    name: name.to_string(),
                    row,
                    norm,
                });
            }
        }
        Ok(())
    }
}

fn euclidean_norm(row: &[f32]) -> f64 {
    row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(matrix.data.len());
    for (row, r) in matrix.rows().enumerate() {
        let norm = euclidean_norm(r);
        if norm < NORM_FLOOR {
            return Err(Error::ZeroVector {
                name: "matrix".into(),
                row,
            });
        }
        data.extend(r.iter().map(|&v| ((v as f64) / norm) as f32));
    }
    Ok(EmbeddingMatrix {
        dim: matrix.dim,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextRecord {
    pub id: String,
    pub embedding_row: usize,
    #[serde(default)]
    pub community: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub id: String,
    pub context_id: String,
    pub embedding_row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_meta: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub dim: usize,
    pub normalized: bool,
    pub context_count: usize,
    pub response_count: usize,
    #[serde(default)]
    pub encoder_name: String,
    pub files: BTreeMap<String, FileEntry>,
}

/// A validated, immutable embedding corpus.
///
/// The matrices are kept exactly as stored. When the corpus is flagged as
/// normalized, unit-norm copies are built once and served by
/// [`Corpus::contexts`] and [`Corpus::responses`].
#[derive(Debug, Clone)]
pub struct Corpus {
    raw_contexts: EmbeddingMatrix,
    raw_responses: EmbeddingMatrix,
    unit_contexts: Option<EmbeddingMatrix>,
    unit_responses: Option<EmbeddingMatrix>,
    context_records: Vec<ContextRecord>,
    response_records: Vec<ResponseRecord>,
    normalized: bool,
    encoder_name: String,
    /// Context record indices per context matrix row.
    row_contexts: Vec<Vec<usize>>,
    /// Response matrix rows attached to each context record.
    context_responses: Vec<Vec<usize>>,
    /// Ordering key per context row: rank of its smallest record id, rows
    /// without records sort after every recorded row.
    row_tie_keys: Vec<u64>,
}

impl Corpus {
    pub fn new(
        contexts: EmbeddingMatrix,
        responses: EmbeddingMatrix,
        context_records: Vec<ContextRecord>,
        response_records: Vec<ResponseRecord>,
        normalized: bool,
        encoder_name: impl Into<String>,
    ) -> Result<Self> {
        if contexts.dim() != responses.dim() {
            return Err(Error::DimMismatch {
                expected: contexts.dim(),
                found: responses.dim(),
            });
        }

        let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(context_records.len());
        let mut row_contexts = vec![Vec::new(); contexts.len()];
        for (i, rec) in context_records.iter().enumerate() {
            if by_id.insert(rec.id.as_str(), i).is_some() {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            if rec.embedding_row >= contexts.len() {
                return Err(Error::DanglingRef(format!(
                    "context {:?} points at row {} of {} context rows",
                    rec.id,
                    rec.embedding_row,
                    contexts.len()
                )));
            }
            row_contexts[rec.embedding_row].push(i);
        }

        let mut seen = HashSet::with_capacity(response_records.len());
        let mut context_responses = vec![Vec::new(); context_records.len()];
        for rec in &response_records {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            let Some(&owner) = by_id.get(rec.context_id.as_str()) else {
                return Err(Error::DanglingRef(format!(
                    "response {:?} refers to missing context {:?}",
                    rec.id, rec.context_id
                )));
            };
            if rec.embedding_row >= responses.len() {
                return Err(Error::DanglingRef(format!(
                    "response {:?} points at row {} of {} response rows",
                    rec.id,
                    rec.embedding_row,
                    responses.len()
                )));
            }
            context_responses[owner].push(rec.embedding_row);
        }

        let mut order: Vec<usize> = (0..context_records.len()).collect();
        order.sort_by(|&a, &b| context_records[a].id.cmp(&context_records[b].id));
        let mut id_rank = vec![0u64; context_records.len()];
        for (rank, &i) in order.iter().enumerate() {
            id_rank[i] = rank as u64;
        }
        let unrecorded = context_records.len() as u64;
        let row_tie_keys = row_contexts
            .iter()
            .enumerate()
            .map(|(row, recs)| {
                recs.iter()
                    .map(|&i| id_rank[i])
                    .min()
                    .unwrap_or(unrecorded + row as u64)
            })
            .collect();

        let (unit_contexts, unit_responses) = if normalized {
            let c = normalize_named(&contexts, CONTEXTS)?;
            let r = normalize_named(&responses, RESPONSES)?;
            c.check_unit_norm(CONTEXTS)?;
            r.check_unit_norm(RESPONSES)?;
            (Some(c), Some(r))
        } else {
            (None, None)
        };

        Ok(Corpus {
            raw_contexts: contexts,
            raw_responses: responses,
            unit_contexts,
            unit_responses,
            context_records,
            response_records,
            normalized,
            encoder_name: encoder_name.into(),
            row_contexts,
            context_responses,
            row_tie_keys,
        })
    }

    /// A corpus of bare embeddings with no records, e.g. the embeddings a
    /// labeled pair file points into.
    pub fn embeddings_only(contexts: EmbeddingMatrix, responses: EmbeddingMatrix) -> Result<Self> {
        Self::new(contexts, responses, Vec::new(), Vec::new(), false, "")
    }

    /// Working context matrix (unit-norm when the corpus is normalized).
    pub fn contexts(&self) -> &EmbeddingMatrix {
        self.unit_contexts.as_ref().unwrap_or(&self.raw_contexts)
    }

    pub fn responses(&self) -> &EmbeddingMatrix {
        self.unit_responses.as_ref().unwrap_or(&self.raw_responses)
    }

    /// Context matrix exactly as stored.
    pub fn raw_contexts(&self) -> &EmbeddingMatrix {
        &self.raw_contexts
    }

    pub fn raw_responses(&self) -> &EmbeddingMatrix {
        &self.raw_responses
    }

    pub fn context_records(&self) -> &[ContextRecord] {
        &self.context_records
    }

    pub fn response_records(&self) -> &[ResponseRecord] {
        &self.response_records
    }

    pub fn dim(&self) -> usize {
        self.raw_contexts.dim()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    /// Context record indices stored at a context matrix row.
    pub fn contexts_at_row(&self, row: usize) -> &[usize] {
        &self.row_contexts[row]
    }

    /// Response rows attached to the context record at `context_index`.
    pub fn responses_of(&self, context_index: usize) -> &[usize] {
        &self.context_responses[context_index]
    }

    pub(crate) fn row_tie_keys(&self) -> &[u64] {
        &self.row_tie_keys
    }

    /// Returns a copy with normalization switched on or off.
    pub fn with_normalization(&self, normalized: bool) -> Result<Corpus> {
        if normalized == self.normalized {
            return Ok(self.clone());
        }
        Corpus::new(
            self.raw_contexts.clone(),
            self.raw_responses.clone(),
            self.context_records.clone(),
            self.response_records.clone(),
            normalized,
            self.encoder_name.clone(),
        )
    }

    /// Returns a copy with every stored embedding multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Corpus> {
        Corpus::new(
            self.raw_contexts.scaled(factor)?,
            self.raw_responses.scaled(factor)?,
            self.context_records.clone(),
            self.response_records.clone(),
            self.normalized,
            self.encoder_name.clone(),
        )
    }

    /// Restricts the corpus to the given context records (by index) and the
    /// responses attached to them. Matrices are compacted; relative order is
    /// preserved.
    pub fn subset(&self, context_indices: &[usize]) -> Result<Corpus> {
        let mut keep: Vec<usize> = context_indices.to_vec();
        keep.sort_unstable();
        keep.dedup();

        let mut ctx_rows = Vec::with_capacity(keep.len());
        let mut ctx_records = Vec::with_capacity(keep.len());
        let mut kept_ids = HashSet::with_capacity(keep.len());
        for &i in &keep {
            let rec = self.context_records.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("context index {i} out of range"))
            })?;
            kept_ids.insert(rec.id.as_str());
            ctx_records.push(ContextRecord {
                embedding_row: ctx_rows.len(),
                ..rec.clone()
            });
            ctx_rows.push(rec.embedding_row);
        }

        let mut resp_rows = Vec::new();
        let mut resp_records = Vec::new();
        for rec in &self.response_records {
            if kept_ids.contains(rec.context_id.as_str()) {
                resp_records.push(ResponseRecord {
                    embedding_row: resp_rows.len(),
                    ..rec.clone()
                });
                resp_rows.push(rec.embedding_row);
            }
        }

        Corpus::new(
            self.raw_contexts.select_rows(&ctx_rows),
            self.raw_responses.select_rows(&resp_rows),
            ctx_records,
            resp_records,
            self.normalized,
            self.encoder_name.clone(),
        )
    }
}

fn normalize_named(m: &EmbeddingMatrix, name: &str) -> Result<EmbeddingMatrix> {
    l2_normalize(m).map_err(|e| match e {
        Error::ZeroVector { row, .. } => Error::ZeroVector {
            name: name.to_string(),
            row,
        },
        other => other,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a manifest-listed file and checks its digest. With `expected_len`
/// a wrong size is reported as truncation before the digest is compared.
fn read_verified(
    base: &Path,
    manifest: &CorpusManifest,
    name: &str,
    expected_len: Option<usize>,
) -> Result<Option<Vec<u8>>> {
    let Some(entry) = manifest.files.get(name) else {
        return Ok(None);
    };
    let path = base.join(&entry.path);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if let Some(expected) = expected_len {
        if bytes.len() != expected {
            return Err(Error::Truncated {
                name: name.to_string(),
                expected: expected as u64,
                found: bytes.len() as u64,
            });
        }
    }
    let found = sha256_hex(&bytes);
    if !found.eq_ignore_ascii_case(&entry.sha256) {
        return Err(Error::DigestMismatch {
            name: name.to_string(),
            expected: entry.sha256.clone(),
            found,
        });
    }
    Ok(Some(bytes))
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: manifest.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if manifest.dim == 0 {
        return Err(Error::DimMismatch {
            expected: 1,
            found: 0,
        });
    }
    Ok(manifest)
}

/// Loads and fully validates the corpus described by a manifest file.
///
/// Matrix files are required; record files are optional (a corpus holding
/// only embeddings, such as the test side of a pair file, may omit them).
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let matrix = |name: &str, count: usize| -> Result<EmbeddingMatrix> {
        let len = count
            .checked_mul(manifest.dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::InvalidArgument(format!("{name}: {count} rows overflow")))?;
        let bytes = read_verified(base, &manifest, name, Some(len))?.ok_or_else(|| {
            Error::DanglingRef(format!("manifest names no {name:?} file"))
        })?;
        EmbeddingMatrix::from_le_bytes(name, manifest.dim, count, &bytes)
    };
    let contexts = matrix(CONTEXTS, manifest.context_count)?;
    let responses = matrix(RESPONSES, manifest.response_count)?;

    let records = |name: &str| -> Result<Option<(Vec<u8>, PathBuf)>> {
        Ok(read_verified(base, &manifest, name, None)?
            .map(|b| (b, base.join(&manifest.files[name].path))))
    };
    let context_records = match records(CONTEXT_RECORDS)? {
        Some((bytes, path)) => ndjson::parse(&utf8(&bytes, &path)?, &path)?,
        None => Vec::new(),
    };
    let response_records = match records(RESPONSE_RECORDS)? {
        Some((bytes, path)) => ndjson::parse(&utf8(&bytes, &path)?, &path)?,
        None => Vec::new(),
    };

    Corpus::new(
        contexts,
        responses,
        context_records,
        response_records,
        manifest.normalized,
        manifest.encoder_name.clone(),
    )
}

fn utf8(bytes: &[u8], path: &Path) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

/// Writes `corpus` into `dir` (created if needed) and returns the manifest
/// written to `dir/manifest.json`. Matrices are written exactly as stored.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<CorpusManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let payloads: [(&str, &str, Vec<u8>); 4] = [
        (CONTEXTS, "contexts.f32bin", corpus.raw_contexts.to_le_bytes()),
        (RESPONSES, "responses.f32bin", corpus.raw_responses.to_le_bytes()),
        (
            CONTEXT_RECORDS,
            "contexts.ndjson",
            ndjson::to_bytes(&corpus.context_records),
        ),
        (
            RESPONSE_RECORDS,
            "responses.ndjson",
            ndjson::to_bytes(&corpus.response_records),
        ),
    ];

    let mut files = BTreeMap::new();
    for (name, file, bytes) in &payloads {
        let path = dir.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        files.insert(
            name.to_string(),
            FileEntry {
                path: file.to_string(),
                sha256: sha256_hex(bytes),
            },
        );
    }

    let manifest = CorpusManifest {
        schema_version: SCHEMA_VERSION,
        dim: corpus.dim(),
        normalized: corpus.normalized,
        context_count: corpus.raw_contexts.len(),
        response_count: corpus.raw_responses.len(),
        encoder_name: corpus.encoder_name.clone(),
        files,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_corpus() -> Corpus {
        let contexts = EmbeddingMatrix::from_rows(
            4,
            &[[1.0f32, 0.0, 0.0, 0.0], [0.0, 1.0, 0.5, -2.0]],
        )
        .unwrap();
        let responses = EmbeddingMatrix::from_rows(
            4,
            &[
                [0.1f32, 0.2, 0.3, 0.4],
                [-1.5, 2.5, 0.0, 1e-7],
                [3.0, 4.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        let ctx = vec![
            ContextRecord {
                id: "c0".into(),
                embedding_row: 0,
                community: "askhr".into(),
                text: Some("how do I ask for a raise".into()),
            },
            ContextRecord {
                id: "c1".into(),
                embedding_row: 1,
                community: "askhr".into(),
                text: None,
            },
        ];
        let mut meta = BTreeMap::new();
        meta.insert("upvotes".to_string(), 42.0);
        meta.insert("replies".to_string(), 3.0);
        let resp = vec![
            ResponseRecord {
                id: "r0".into(),
                context_id: "c0".into(),
                embedding_row: 0,
                text: None,
                acceptance_meta: Some(meta),
            },
            ResponseRecord {
                id: "r1".into(),
                context_id: "c0".into(),
                embedding_row: 1,
                text: Some("talk to your manager".into()),
                acceptance_meta: None,
            },
            ResponseRecord {
                id: "r2".into(),
                context_id: "c1".into(),
                embedding_row: 2,
                text: None,
                acceptance_meta: None,
            },
        ];
        Corpus::new(contexts, responses, ctx, resp, false, "test-encoder").unwrap()
    }

    #[test]
    fn load_reproduces_written_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus();
        let manifest = write_corpus(&corpus, dir.path()).unwrap();
        assert_eq!(manifest.dim, 4);
        assert_eq!(manifest.context_count, 2);
        assert_eq!(manifest.response_count, 3);

        let loaded = load_corpus(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded.contexts().len(), 2);
        assert_eq!(loaded.responses().len(), 3);
        assert_eq!(loaded.raw_responses().to_le_bytes(), corpus.raw_responses().to_le_bytes());
        assert_eq!(loaded.response_records(), corpus.response_records());
        assert_eq!(
            loaded.response_records()[0].acceptance_meta.as_ref().unwrap()["upvotes"],
            42.0
        );
        assert_eq!(loaded.encoder_name(), "test-encoder");
        assert_eq!(loaded.responses_of(0), &[0, 1]);
    }

    #[test]
    fn short_matrix_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&small_corpus(), dir.path()).unwrap();
        let path = dir.path().join("responses.f32bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        // the size check fires before the (now stale) digest
        let mpath = dir.path().join("manifest.json");
        let err = load_corpus(&mpath).unwrap_err();
        assert!(matches!(err, Error::Truncated { expected: 48, found: 47, .. }), "{err}");
    }

    #[test]
    fn tampered_file_fails_digest() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&small_corpus(), dir.path()).unwrap();
        let path = dir.path().join("contexts.f32bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes[3] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        let err = load_corpus(&dir.path().join("manifest.json")).unwrap_err();
        assert!(matches!(err, Error::DigestMismatch { .. }), "{err}");
    }

    #[test]
    fn dangling_context_reference() {
        let c = small_corpus();
        let mut responses = c.response_records().to_vec();
        responses[2].context_id = "missing".into();
        let err = Corpus::new(
            c.raw_contexts().clone(),
            c.raw_responses().clone(),
            c.context_records().to_vec(),
            responses,
            false,
            "",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingRef(_)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let c = small_corpus();
        let mut contexts = c.context_records().to_vec();
        contexts[1].id = "c0".into();
        let err = Corpus::new(
            c.raw_contexts().clone(),
            c.raw_responses().clone(),
            contexts,
            Vec::new(),
            false,
            "",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
    }

    #[test]
    fn non_finite_entries_rejected() {
        let bytes: Vec<u8> = [1.0f32, f32::NAN, 0.0, 2.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let err = EmbeddingMatrix::from_le_bytes("m", 2, 2, &bytes).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1, .. }));
        assert!(EmbeddingMatrix::new(2, vec![f32::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn mismatched_dims_rejected() {
        let c = EmbeddingMatrix::new(4, vec![0.0; 8]).unwrap();
        let r = EmbeddingMatrix::new(3, vec![0.0; 9]).unwrap();
        assert!(matches!(
            Corpus::embeddings_only(c, r),
            Err(Error::DimMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn write_into_read_only_location_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("not-a-dir");
        fs::write(&blocker, b"x").unwrap();
        let err = write_corpus(&small_corpus(), &blocker.join("corpus")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn normalize_three_four_five() {
        let m = EmbeddingMatrix::from_rows(2, &[[3.0f32, 4.0]]).unwrap();
        let n = l2_normalize(&m).unwrap();
        assert!((n.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let m = EmbeddingMatrix::from_rows(2, &[[1.0f32, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(l2_normalize(&m), Err(Error::ZeroVector { row: 1, .. })));
    }

    #[test]
    fn normalized_flag_applies_at_load_and_keeps_raw_bytes() {
        let c = small_corpus().with_normalization(true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&c, dir.path()).unwrap();
        let loaded = load_corpus(&dir.path().join("manifest.json")).unwrap();
        assert!(loaded.is_normalized());
        assert_eq!(loaded.raw_responses().row(2), &[3.0, 4.0, 0.0, 0.0]);
        assert!((loaded.responses().row(2)[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn subset_keeps_attached_responses() {
        let c = small_corpus();
        let s = c.subset(&[1]).unwrap();
        assert_eq!(s.contexts().len(), 1);
        assert_eq!(s.responses().len(), 1);
        assert_eq!(s.responses().row(0), c.responses().row(2));
        assert_eq!(s.responses_of(0), &[0]);
    }

    #[test]
    fn tie_keys_follow_context_ids() {
        let contexts = EmbeddingMatrix::new(1, vec![0.0, 0.0, 0.0]).unwrap();
        let recs = ["b", "a"]
            .iter()
            .enumerate()
            .map(|(i, id)| ContextRecord {
                id: id.to_string(),
                embedding_row: i,
                community: String::new(),
                text: None,
            })
            .collect();
        let c = Corpus::new(contexts, EmbeddingMatrix::empty(1).unwrap(), recs, vec![], false, "")
            .unwrap();
        assert_eq!(c.row_tie_keys(), &[1, 0, 4]);
    }

    fn random_matrix(dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
        (1usize..17).prop_flat_map(move |rows| {
            prop::collection::vec(
                prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO,
                dim * rows,
            )
            .prop_map(move |data| EmbeddingMatrix::new(dim, data).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn write_then_load_is_bit_exact(m in random_matrix(8)) {
            let dir = tempfile::tempdir().unwrap();
            let corpus = Corpus::embeddings_only(m.clone(), m.clone()).unwrap();
            write_corpus(&corpus, dir.path()).unwrap();
            let loaded = load_corpus(&dir.path().join("manifest.json")).unwrap();
            let bits = |m: &EmbeddingMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(loaded.raw_contexts()), bits(&m));
            prop_assert_eq!(bits(loaded.raw_responses()), bits(&m));
        }

        #[test]
        fn any_single_byte_corruption_is_detected(
            file in 0usize..4,
            pos in any::<prop::sample::Index>(),
            flip in 1u8..=255,
        ) {
            let dir = tempfile::tempdir().unwrap();
            write_corpus(&small_corpus(), dir.path()).unwrap();
            let name = ["contexts.f32bin", "responses.f32bin", "contexts.ndjson", "responses.ndjson"][file];
            let path = dir.path().join(name);
            let mut bytes = fs::read(&path).unwrap();
            let i = pos.index(bytes.len());
            bytes[i] ^= flip;
            fs::write(&path, &bytes).unwrap();
            prop_assert!(load_corpus(&dir.path().join("manifest.json")).is_err());
        }

        #[test]
        fn normalize_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-100f32..100.0, 6), 1..8)) {
            prop_assume!(rows.iter().all(|r| euclidean_norm(r) > 1e-3));
            let m = EmbeddingMatrix::from_rows(6, &rows).unwrap();
            let once = l2_normalize(&m).unwrap();
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-7);
            }
            for r in once.rows() {
                prop_assert!((euclidean_norm(r) - 1.0).abs() < 1e-6);
            }
        }
    }
}
