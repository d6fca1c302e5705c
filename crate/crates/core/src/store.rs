//! Embedding files shared with the external embedder.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic  "CCRLEMB1"            8 bytes
//! count  u32                   number of vectors
//! dim    u32                   components per vector
//! data   count * dim * f32     row-major
//! ```
//!
//! Keys live in a JSON sidecar at `<path>.keys.json`, one entry per vector in
//! file order. Image sets key each vector by `{concept_id, language, index}`;
//! text sets key each vector by its bare `concept_id` string.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lang::Lang;

pub const MAGIC: &[u8; 8] = b"CCRLEMB1";
pub const HEADER_LEN: usize = 16;
/// Allowed deviation of a stored vector's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated header ({len} bytes)")]
    TruncatedHeader { path: PathBuf, len: usize },
    #[error("{path}: declared {count}x{dim} vectors need {expected} bytes, file has {actual}")]
    LengthMismatch {
        path: PathBuf,
        count: u32,
        dim: u32,
        expected: u64,
        actual: u64,
    },
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("vector {key} has L2 norm {norm:.6}, expected 1 within {NORM_TOLERANCE}")]
    NormViolation { key: String, norm: f64 },
    #[error("vector {key} contains a non-finite component")]
    NonFinite { key: String },
    #[error("{count} vectors but {keys} keys")]
    KeyCountMismatch { count: usize, keys: usize },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("data length {len} is not a multiple of dim {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("{path}: malformed key sidecar: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Identifies one generated image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImageKey {
    pub concept_id: String,
    pub language: Lang,
    pub index: u32,
}

impl std::fmt::Display for ImageKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.concept_id, self.language, self.index)
    }
}

/// Vector component. Files store `f32`; scoring also accepts `f64`.
pub trait Element: Copy + PartialEq + std::fmt::Debug + Into<f64> + Send + Sync + 'static {}

impl Element for f32 {}
impl Element for f64 {}

/// Dense row-major matrix of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Vectors<T: Element = f32> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Element> Vectors<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(StoreError::Ragged {
                len: data.len(),
                dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<T>]) -> Result<Self, StoreError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(StoreError::Ragged { len: r.len(), dim });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    fn check_norms<K: std::fmt::Display>(&self, keys: &[K]) -> Result<(), StoreError> {
        for (row, key) in self.rows().zip(keys) {
            if row.iter().any(|&x| !Into::<f64>::into(x).is_finite()) {
                return Err(StoreError::NonFinite {
                    key: key.to_string(),
                });
            }
            let norm = row
                .iter()
                .map(|&x| {
                    let x: f64 = x.into();
                    x * x
                })
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::NormViolation {
                    key: key.to_string(),
                    norm,
                });
            }
        }
        Ok(())
    }
}

fn check_keys<K: std::fmt::Display + Eq + std::hash::Hash>(
    vectors: &Vectors,
    keys: &[K],
) -> Result<(), StoreError> {
    if keys.len() != vectors.len() {
        return Err(StoreError::KeyCountMismatch {
            count: vectors.len(),
            keys: keys.len(),
        });
    }
    let mut seen = HashSet::with_capacity(keys.len());
    for k in keys {
        if !seen.insert(k) {
            return Err(StoreError::DuplicateKey(k.to_string()));
        }
    }
    vectors.check_norms(keys)
}

/// Image embeddings with one key per vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vectors,
    keys: Vec<ImageKey>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vectors, keys: Vec<ImageKey>) -> Result<Self, StoreError> {
        check_keys(&vectors, &keys)?;
        Ok(Self { vectors, keys })
    }

    pub fn vectors(&self) -> &Vectors {
        &self.vectors
    }

    pub fn keys(&self) -> &[ImageKey] {
        &self.keys
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageKey, &[f32])> + '_ {
        self.keys.iter().zip(self.vectors.rows())
    }

    /// Keep only the entries whose key satisfies `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&ImageKey) -> bool) -> Self {
        let mut data = Vec::new();
        let mut keys = Vec::new();
        for (k, row) in self.iter() {
            if keep(k) {
                keys.push(k.clone());
                data.extend_from_slice(row);
            }
        }
        Self {
            vectors: Vectors {
                dim: self.dim(),
                data,
            },
            keys,
        }
    }
}

/// Text embeddings `F_t(c)` keyed by concept id.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingSet {
    vectors: Vectors,
    keys: Vec<String>,
}

impl TextEmbeddingSet {
    pub fn new(vectors: Vectors, keys: Vec<String>) -> Result<Self, StoreError> {
        check_keys(&vectors, &keys)?;
        Ok(Self { vectors, keys })
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn vectors(&self) -> &Vectors {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, concept_id: &str) -> Option<&[f32]> {
        self.keys
            .iter()
            .position(|k| k == concept_id)
            .map(|i| self.vectors.row(i))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".keys.json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Encode the binary body (header + data) of an embedding file.
pub fn encode(vectors: &Vectors) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + vectors.as_flat().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(vectors.dim() as u32).to_le_bytes());
    for x in vectors.as_flat() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

/// Decode and structurally validate the binary body. Norms are not checked here.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vectors, StoreError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::TruncatedHeader {
            path: path.to_path_buf(),
            len: bytes.len(),
        });
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let expected = HEADER_LEN as u64 + u64::from(count) * u64::from(dim) * 4;
    if expected != bytes.len() as u64 {
        return Err(StoreError::LengthMismatch {
            path: path.to_path_buf(),
            count,
            dim,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Vectors::new(dim as usize, data)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_with_keys<K: Serialize>(
    path: &Path,
    vectors: &Vectors,
    keys: &[K],
) -> Result<(), StoreError> {
    let sidecar = sidecar_path(path);
    let json = serde_json::to_vec_pretty(keys).map_err(|source| StoreError::Sidecar {
        path: sidecar.clone(),
        source,
    })?;
    write_atomic(path, &encode(vectors))?;
    write_atomic(&sidecar, &json)
}

fn read_with_keys<K: for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<(Vectors, Vec<K>), StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let vectors = decode(path, &bytes)?;
    let sidecar = sidecar_path(path);
    let raw = fs::read(&sidecar).map_err(io_err(&sidecar))?;
    let keys: Vec<K> = serde_json::from_slice(&raw).map_err(|source| StoreError::Sidecar {
        path: sidecar.clone(),
        source,
    })?;
    Ok((vectors, keys))
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<(), StoreError> {
    check_keys(&set.vectors, &set.keys)?;
    write_with_keys(path, &set.vectors, &set.keys)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, StoreError> {
    let (vectors, keys) = read_with_keys(path)?;
    EmbeddingSet::new(vectors, keys)
}

pub fn write_text_embeddings(set: &TextEmbeddingSet, path: &Path) -> Result<(), StoreError> {
    check_keys(&set.vectors, &set.keys)?;
    write_with_keys(path, &set.vectors, &set.keys)
}

pub fn read_text_embeddings(path: &Path) -> Result<TextEmbeddingSet, StoreError> {
    let (vectors, keys) = read_with_keys(path)?;
    TextEmbeddingSet::new(vectors, keys)
}

/// Scale `v` to unit L2 norm in place. Returns `false` for a zero vector.
pub fn normalize_in_place(v: &mut [f32]) -> bool {
    let norm = v
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}
