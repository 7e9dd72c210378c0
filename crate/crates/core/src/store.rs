//! The exemplar store: at most `alpha` labelled vectors per class, evicted
//! FIFO per class, with byte-level memory accounting and a checksummed
//! binary snapshot format.
//!
//! Snapshot layout (little-endian):
//!
//! ```text
//! "KNN1" | version u8 | alpha u32 | n u32 | q.int u8 | q.frac u8 | count u32
//! count x { seq u64 | label u8 | n x i16 }
//! crc32 u32 over every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureExtractor};
use crate::knn::{select_k_nearest, FixedVector, KnnError, Label, NeighborSet, QFormat};
use crate::signal::LabeledWindow;

pub const SAMPLE_BYTES: usize = 2;
pub const LABEL_BYTES: usize = 1;
/// Each entry carries its 64-bit insertion sequence number.
pub const INDEX_BYTES: usize = 8;
/// User-data SRAM available to the store (80 KiB).
pub const USER_DATA_BUDGET_BYTES: usize = 80 * 1024;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KNN1";
pub const SNAPSHOT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1 + 1 + 4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("alpha and feature length must be positive")]
    InvalidParams,
    #[error("vector shape {got_len}@{got_q} does not match store {want_len}@{want_q}")]
    ShapeMismatch {
        want_len: usize,
        want_q: QFormat,
        got_len: usize,
        got_q: QFormat,
    },
    #[error("adaptation needs at least one window")]
    EmptyAdaptation,
    #[error("window {index}: {source}")]
    Window { index: usize, source: FeatureError },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub vector: FixedVector,
    pub label: Label,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingStore {
    alpha: usize,
    n: usize,
    q: QFormat,
    entries: Vec<StoreEntry>,
    next_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub vector_bytes: usize,
    pub label_bytes: usize,
    pub index_bytes: usize,
    pub total_bytes: usize,
}

impl MemoryReport {
    pub fn fits(&self, budget: usize) -> bool {
        self.total_bytes <= budget
    }
}

/// Footprint of `entries` stored vectors of length `n`.
pub fn footprint_for(entries: usize, n: usize) -> MemoryReport {
    let vector_bytes = entries * n * SAMPLE_BYTES;
    let label_bytes = entries * LABEL_BYTES;
    let index_bytes = entries * INDEX_BYTES;
    MemoryReport {
        vector_bytes,
        label_bytes,
        index_bytes,
        total_bytes: vector_bytes + label_bytes + index_bytes,
    }
}

pub fn bytes_per_entry(n: usize) -> usize {
    n * SAMPLE_BYTES + LABEL_BYTES + INDEX_BYTES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub windows: usize,
    pub evicted: usize,
    #[serde(with = "duration_us")]
    pub duration: Duration,
}

mod duration_us {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

impl TrainingStore {
    pub fn new(alpha: usize, n: usize, q: QFormat) -> Result<Self, StoreError> {
        if alpha == 0 || n == 0 {
            return Err(StoreError::InvalidParams);
        }
        Ok(Self {
            alpha,
            n,
            q,
            entries: Vec::with_capacity(2 * alpha),
            next_seq: 0,
        })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn feature_len(&self) -> usize {
        self.n
    }

    pub fn q_format(&self) -> QFormat {
        self.q
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Appends an entry, first evicting the oldest entry of the same class if
    /// that class is full. Returns the evicted entry.
    pub fn insert(&mut self, vector: FixedVector, label: Label) -> Result<Option<StoreEntry>, StoreError> {
        if vector.len() != self.n || vector.q_format() != self.q {
            return Err(StoreError::ShapeMismatch {
                want_len: self.n,
                want_q: self.q,
                got_len: vector.len(),
                got_q: vector.q_format(),
            });
        }
        let evicted = if self.count(label) >= self.alpha {
            // Entries are kept in insertion order, so the first match is the oldest.
            let pos = self.entries.iter().position(|e| e.label == label).unwrap();
            Some(self.entries.remove(pos))
        } else {
            None
        };
        self.entries.push(StoreEntry {
            vector,
            label,
            seq: self.next_seq,
        });
        self.next_seq += 1;
        Ok(evicted)
    }

    /// Filters, quantises and inserts every window in order. All windows are
    /// featurised before the first insert, so on error the store is untouched.
    pub fn adapt(&mut self, windows: &[LabeledWindow], extractor: &FeatureExtractor) -> Result<AdaptReport, StoreError> {
        let start = Instant::now();
        if windows.is_empty() {
            return Err(StoreError::EmptyAdaptation);
        }
        let vectors = windows
            .iter()
            .enumerate()
            .map(|(index, w)| {
                extractor
                    .extract(&w.window)
                    .map_err(|source| StoreError::Window { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(v) = vectors.first() {
            if v.len() != self.n || v.q_format() != self.q {
                return Err(StoreError::ShapeMismatch {
                    want_len: self.n,
                    want_q: self.q,
                    got_len: v.len(),
                    got_q: v.q_format(),
                });
            }
        }
        let mut evicted = 0;
        for (v, w) in vectors.into_iter().zip(windows) {
            evicted += self.insert(v, w.label)?.is_some() as usize;
        }
        Ok(AdaptReport {
            windows: windows.len(),
            evicted,
            duration: start.elapsed(),
        })
    }

    pub fn candidates(&self) -> impl Iterator<Item = (&FixedVector, Label)> {
        self.entries.iter().map(|e| (&e.vector, e.label))
    }

    pub fn nearest(&self, query: &FixedVector, k: usize) -> Result<NeighborSet, KnnError> {
        select_k_nearest(query, self.candidates(), k)
    }

    pub fn memory_footprint(&self) -> MemoryReport {
        footprint_for(self.entries.len(), self.n)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.entries.len() * (9 + 2 * self.n) + 4);
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.push(SNAPSHOT_VERSION);
        buf.extend_from_slice(&(self.alpha as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n as u32).to_le_bytes());
        buf.push(self.q.integer_bits());
        buf.push(self.q.fraction_bits());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&e.seq.to_le_bytes());
            buf.push(e.label.as_byte());
            for v in e.vector.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let corrupt = |m: &str| StoreError::CorruptSnapshot(m.to_owned());
        if bytes.len() < HEADER_LEN + 4 {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes[4] != SNAPSHOT_VERSION {
            return Err(StoreError::CorruptSnapshot(format!("unsupported version {}", bytes[4])));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored_crc {
            return Err(corrupt("checksum mismatch"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap()) as usize;
        let alpha = u32_at(5);
        let n = u32_at(9);
        let q = QFormat::new(body[13], body[14]).map_err(|e| StoreError::CorruptSnapshot(e.to_string()))?;
        let count = u32_at(15);
        let entry_len = 8 + 1 + 2 * n;
        if body.len() != HEADER_LEN + count * entry_len {
            return Err(corrupt("length does not match entry count"));
        }
        let mut store = TrainingStore::new(alpha, n, q).map_err(|_| corrupt("zero alpha or n"))?;
        let mut last_seq = None;
        for chunk in body[HEADER_LEN..].chunks_exact(entry_len) {
            let seq = u64::from_le_bytes(chunk[..8].try_into().unwrap());
            if last_seq.is_some_and(|s| seq <= s) {
                return Err(corrupt("sequence numbers not increasing"));
            }
            last_seq = Some(seq);
            let label = Label::from_byte(chunk[8]).ok_or_else(|| corrupt("bad label byte"))?;
            let values = chunk[9..]
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]))
                .collect();
            store.entries.push(StoreEntry {
                vector: FixedVector::from_codes(values, q),
                label,
                seq,
            });
        }
        if store.count(Label::Seizure) > alpha || store.count(Label::NonSeizure) > alpha {
            return Err(corrupt("class exceeds alpha"));
        }
        store.next_seq = last_seq.map_or(0, |s| s + 1);
        Ok(store)
    }

    pub fn snapshot(&self, path: &Path) -> Result<(), StoreError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<Self, StoreError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Single-writer, many-reader handle. Writers build a modified copy and swap
/// it in; readers hold an `Arc` to an immutable store and never observe a
/// half-applied update.
#[derive(Debug)]
pub struct SharedStore {
    current: RwLock<Arc<TrainingStore>>,
    writer: std::sync::Mutex<()>,
}

impl SharedStore {
    pub fn new(store: TrainingStore) -> Self {
        Self {
            current: RwLock::new(Arc::new(store)),
            writer: std::sync::Mutex::new(()),
        }
    }

    pub fn view(&self) -> Arc<TrainingStore> {
        Arc::clone(&self.current.read().unwrap())
    }

    pub fn update<R, E>(&self, f: impl FnOnce(&mut TrainingStore) -> Result<R, E>) -> Result<R, E> {
        let _guard = self.writer.lock().unwrap();
        let mut next = (*self.view()).clone();
        let r = f(&mut next)?;
        *self.current.write().unwrap() = Arc::new(next);
        Ok(r)
    }
}
