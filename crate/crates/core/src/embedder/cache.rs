//! Persistent, content-addressed sentence-vector cache.
//!
//! Layout of a cache directory:
//!
//! ```text
//! meta.json     {"model_id": "...", "dim": 1024, "format": 1}
//! index.tsv     <hex digest>\t<byte offset>\n   (one line per vector)
//! vectors.bin   little-endian f32 vectors, appended back to back
//! ```
//!
//! A vector is written to the blob before its index line, and the in-memory
//! index is updated last, so a reader never sees a partially written vector.
//! On open, a torn trailing index line and index entries pointing past the end
//! of the blob are dropped.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_parts;

const META_FILE: &str = "meta.json";
const INDEX_FILE: &str = "index.tsv";
const BLOB_FILE: &str = "vectors.bin";
const FORMAT: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache at {dir} belongs to model `{found}`, not `{expected}`")]
    ModelMismatch { dir: PathBuf, expected: String, found: String },
    #[error("cache at {dir} holds {found}-dimensional vectors, expected {expected}")]
    DimMismatch { dir: PathBuf, expected: usize, found: usize },
    #[error("corrupt cache at {dir}: {reason}")]
    Corrupt { dir: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Digest over `(model_id, exact text bytes)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(CacheKey(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", self.to_hex())
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn cache_key(model_id: &str, text: &str) -> CacheKey {
    CacheKey(sha256_parts(&[b"sentence-vector", model_id.as_bytes(), text.as_bytes()]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheMeta {
    model_id: String,
    dim: usize,
    format: u32,
}

struct Appender {
    blob: File,
    index: File,
    blob_len: u64,
}

pub struct VectorCache {
    dir: PathBuf,
    model_id: String,
    dim: OnceLock<usize>,
    index: RwLock<HashMap<CacheKey, u64>>,
    reader: File,
    appender: Mutex<Appender>,
}

impl fmt::Debug for VectorCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorCache")
            .field("dir", &self.dir)
            .field("model_id", &self.model_id)
            .field("dim", &self.dim.get())
            .field("entries", &self.len())
            .finish()
    }
}

impl VectorCache {
    /// Open or create a cache for `model_id`. When `dim` is `None` the
    /// dimension is fixed by the first stored vector. Refuses a cache written
    /// for another model or dimension.
    pub fn open(dir: &Path, model_id: &str, dim: Option<usize>) -> Result<Self, CacheError> {
        std::fs::create_dir_all(dir)?;
        let meta_path = dir.join(META_FILE);
        let stored_dim = if meta_path.exists() {
            let meta: CacheMeta = serde_json::from_slice(&std::fs::read(&meta_path)?)
                .map_err(|e| CacheError::Corrupt { dir: dir.to_path_buf(), reason: format!("meta.json: {e}") })?;
            if meta.model_id != model_id {
                return Err(CacheError::ModelMismatch {
                    dir: dir.to_path_buf(),
                    expected: model_id.to_string(),
                    found: meta.model_id,
                });
            }
            if let Some(d) = dim.filter(|&d| d != meta.dim) {
                return Err(CacheError::DimMismatch { dir: dir.to_path_buf(), expected: d, found: meta.dim });
            }
            Some(meta.dim)
        } else {
            None
        };

        let blob_path = dir.join(BLOB_FILE);
        let blob = OpenOptions::new().create(true).append(true).open(&blob_path)?;
        let blob_len = blob.metadata()?.len();
        let reader = File::open(&blob_path)?;

        let index_path = dir.join(INDEX_FILE);
        let mut raw = String::new();
        if index_path.exists() {
            File::open(&index_path)?.read_to_string(&mut raw)?;
            if !raw.is_empty() && !raw.ends_with('\n') {
                let keep = raw.rfind('\n').map_or(0, |p| p + 1);
                raw.truncate(keep);
                OpenOptions::new().write(true).open(&index_path)?.set_len(keep as u64)?;
            }
        }
        let index_file = OpenOptions::new().create(true).append(true).open(&index_path)?;

        let mut index = HashMap::new();
        if let Some(d) = stored_dim {
            let width = (d * 4) as u64;
            for line in raw.lines() {
                let (key, off) = line.split_once('\t').ok_or_else(|| CacheError::Corrupt {
                    dir: dir.to_path_buf(),
                    reason: format!("bad index line `{line}`"),
                })?;
                let (Some(key), Ok(off)) = (CacheKey::from_hex(key), off.parse::<u64>()) else {
                    return Err(CacheError::Corrupt {
                        dir: dir.to_path_buf(),
                        reason: format!("bad index line `{line}`"),
                    });
                };
                if off + width <= blob_len {
                    index.insert(key, off);
                }
            }
        }

        let dim_cell = OnceLock::new();
        if let Some(d) = stored_dim.or(dim) {
            let _ = dim_cell.set(d);
        }
        Ok(VectorCache {
            dir: dir.to_path_buf(),
            model_id: model_id.to_string(),
            dim: dim_cell,
            index: RwLock::new(index),
            reader,
            appender: Mutex::new(Appender { blob, index: index_file, blob_len }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.index.read().unwrap().contains_key(key)
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<Vec<f32>>, CacheError> {
        let Some(off) = self.index.read().unwrap().get(key).copied() else {
            return Ok(None);
        };
        let dim = self.dim().expect("indexed entries imply a known dim");
        let mut buf = vec![0u8; dim * 4];
        read_exact_at(&self.reader, &mut buf, off)?;
        Ok(Some(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
    }

    /// Store a vector; a key that is already present is left untouched.
    pub fn put(&self, key: &CacheKey, vector: &[f32]) -> Result<(), CacheError> {
        let mut app = self.appender.lock().unwrap();
        if self.contains(key) {
            return Ok(());
        }
        let dim = *self.dim.get_or_init(|| vector.len());
        if vector.len() != dim {
            return Err(CacheError::DimMismatch { dir: self.dir.clone(), expected: dim, found: vector.len() });
        }
        let meta_path = self.dir.join(META_FILE);
        if !meta_path.exists() {
            let meta = CacheMeta { model_id: self.model_id.clone(), dim, format: FORMAT };
            std::fs::write(&meta_path, serde_json::to_vec(&meta).expect("meta serializes"))?;
        }
        let bytes: Vec<u8> = vector.iter().flat_map(|v| v.to_le_bytes()).collect();
        let off = app.blob_len;
        app.blob.write_all(&bytes)?;
        app.blob.flush()?;
        app.blob_len += bytes.len() as u64;
        writeln!(app.index, "{}\t{}", key.to_hex(), off)?;
        app.index.flush()?;
        self.index.write().unwrap().insert(*key, off);
        Ok(())
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], off: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, off)
}

#[cfg(not(unix))]
fn read_exact_at(file: &File, buf: &mut [u8], off: u64) -> std::io::Result<()> {
    use std::io::{Seek, SeekFrom};
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(off))?;
    f.read_exact(buf)
}
