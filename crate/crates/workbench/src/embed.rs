//! Embedding providers, cosine similarity, and an exact top-k vector index.
//!
//! The index is a brute-force scan: desk-scale corpora make exactness
//! affordable and keep the ranking contract trivial to test. The bundled
//! offline embedder (hashed character n-grams, L2-normalized) lets the
//! whole suite run without any model download.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const OFFLINE_DIM: usize = 64;
const INDEX_MAGIC: &[u8; 4] = b"DEIX";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub passage_id: String,
    pub vector: EmbeddingVector,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// (passage_id, cosine score), non-increasing; ties keep insertion order.
    pub ranked: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Offline,
    Http,
}

fn default_dim() -> usize {
    OFFLINE_DIM
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedProviderConfig {
    pub kind: EmbedKind,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl EmbedProviderConfig {
    pub fn offline() -> Self {
        Self {
            kind: EmbedKind::Offline,
            endpoint_url: String::new(),
            model: "hashed-ngram-64".into(),
            dim: OFFLINE_DIM,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("index is empty")]
    EmptyIndex,
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported index version {0}")]
    VersionMismatch(u32),
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Offline embedder: hashed character-trigram counts over the lowercased
/// text, L2-normalized. Deterministic; for tests and demos only.
fn embed_offline(text: &str, dim: usize) -> EmbeddingVector {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut counts = vec![0.0f64; dim];
    if chars.len() < 3 {
        let h = fnv1a(lowered.as_bytes()) as usize % dim;
        counts[h] = 1.0;
    } else {
        for window in chars.windows(3) {
            let gram: String = window.iter().collect();
            let h = fnv1a(gram.as_bytes()) as usize % dim;
            counts[h] += 1.0;
        }
    }
    let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut counts {
            *v /= norm;
        }
    }
    EmbeddingVector::new(counts)
}

fn embed_http(text: &str, cfg: &EmbedProviderConfig) -> Result<EmbeddingVector, EmbedError> {
    let url = format!("{}/embeddings", cfg.endpoint_url.trim_end_matches('/'));
    let body = serde_json::json!({ "model": cfg.model, "input": [text] });
    let client = reqwest::blocking::Client::new();
    let resp = client
        .post(url)
        .json(&body)
        .send()
        .map_err(|e| EmbedError::ProviderUnreachable(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(EmbedError::ProviderUnreachable(format!("HTTP {}", resp.status().as_u16())));
    }
    let value: serde_json::Value = resp
        .json()
        .map_err(|e| EmbedError::ProviderUnreachable(e.to_string()))?;
    let values: Vec<f64> = value["data"][0]["embedding"]
        .as_array()
        .ok_or_else(|| EmbedError::ProviderUnreachable("response has no data[0].embedding".into()))?
        .iter()
        .filter_map(|v| v.as_f64())
        .collect();
    if values.is_empty() {
        return Err(EmbedError::ProviderUnreachable("empty embedding".into()));
    }
    Ok(EmbeddingVector::new(values))
}

pub fn embed_text(text: &str, cfg: &EmbedProviderConfig) -> Result<EmbeddingVector, EmbedError> {
    if text.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    match cfg.kind {
        EmbedKind::Offline => Ok(embed_offline(text, cfg.dim)),
        EmbedKind::Http => embed_http(text, cfg),
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimMismatch(a.dim(), b.dim()));
    }
    if a.is_zero() || b.is_zero() {
        return Err(EmbedError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn insert(&mut self, passage_id: impl Into<String>, vector: EmbeddingVector) -> Result<(), EmbedError> {
        if vector.dim() != self.dim {
            return Err(EmbedError::DimMismatch(self.dim, vector.dim()));
        }
        let norm = vector.norm();
        self.entries.push(IndexEntry { passage_id: passage_id.into(), vector, norm });
        Ok(())
    }

    /// Exact top-k by cosine score; stable ties in insertion order.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<RetrievalResult, EmbedError> {
        if self.entries.is_empty() {
            return Err(EmbedError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(EmbedError::DimMismatch(self.dim, query.dim()));
        }
        if query.is_zero() {
            return Err(EmbedError::ZeroVector);
        }
        let qnorm = query.norm();
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let dot: f64 = query.values.iter().zip(&e.vector.values).map(|(x, y)| x * y).sum();
                let denom = qnorm * e.norm;
                let score = if denom > 0.0 { (dot / denom).clamp(-1.0, 1.0) } else { 0.0 };
                (i, score)
            })
            .collect();
        // Stable sort keeps insertion order on equal scores.
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        scored.truncate(k);
        Ok(RetrievalResult {
            ranked: scored
                .into_iter()
                .map(|(i, s)| (self.entries[i].passage_id.clone(), s))
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut payload = Vec::new();
        for e in &self.entries {
            let id = e.passage_id.as_bytes();
            payload.extend_from_slice(&(id.len() as u32).to_le_bytes());
            payload.extend_from_slice(id);
            for v in &e.vector.values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(INDEX_MAGIC)?;
        file.write_all(&INDEX_VERSION.to_le_bytes())?;
        file.write_all(&(self.dim as u32).to_le_bytes())?;
        file.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        file.write_all(&fnv1a(&payload).to_le_bytes())?;
        file.write_all(&payload)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let mut file = std::fs::File::open(path)?;
        let mut header = [0u8; 4 + 4 + 4 + 8 + 8];
        file.read_exact(&mut header)
            .map_err(|_| EmbedError::CorruptIndex("truncated header".into()))?;
        if &header[0..4] != INDEX_MAGIC {
            return Err(EmbedError::CorruptIndex("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(EmbedError::VersionMismatch(version));
        }
        let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        let checksum = u64::from_le_bytes(header[20..28].try_into().unwrap());

        let mut payload = Vec::new();
        file.read_to_end(&mut payload)?;
        if fnv1a(&payload) != checksum {
            return Err(EmbedError::CorruptIndex("checksum mismatch".into()));
        }

        let mut index = VectorIndex::new(dim);
        let mut offset = 0usize;
        let take = |payload: &[u8], offset: &mut usize, n: usize| -> Result<Vec<u8>, EmbedError> {
            if *offset + n > payload.len() {
                return Err(EmbedError::CorruptIndex("truncated record".into()));
            }
            let bytes = payload[*offset..*offset + n].to_vec();
            *offset += n;
            Ok(bytes)
        };
        for _ in 0..count {
            let id_len = u32::from_le_bytes(take(&payload, &mut offset, 4)?.try_into().unwrap()) as usize;
            let id = String::from_utf8(take(&payload, &mut offset, id_len)?)
                .map_err(|_| EmbedError::CorruptIndex("non-utf8 passage id".into()))?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(f64::from_le_bytes(take(&payload, &mut offset, 8)?.try_into().unwrap()));
            }
            index.insert(id, EmbeddingVector::new(values))?;
        }
        if offset != payload.len() {
            return Err(EmbedError::CorruptIndex("trailing bytes".into()));
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn vec_of(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec())
    }

    #[test]
    fn offline_embedding_is_deterministic_and_unit_norm() {
        let cfg = EmbedProviderConfig::offline();
        let a = embed_text("The mammal collection is worldwide in coverage.", &cfg).unwrap();
        let b = embed_text("The mammal collection is worldwide in coverage.", &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(a.dim(), OFFLINE_DIM);
    }

    #[test]
    fn embed_rejects_empty_text() {
        assert!(matches!(
            embed_text("", &EmbedProviderConfig::offline()),
            Err(EmbedError::EmptyText)
        ));
    }

    #[test]
    fn unrelated_strings_are_not_near_duplicates() {
        // Empirical check: random-word pairs stay below cosine 0.9.
        let cfg = EmbedProviderConfig::offline();
        let words = [
            "lymphocyte", "granite", "photosynthesis", "torque", "enzyme", "glacier", "neutrino",
            "chromosome", "aquifer", "polymer", "synapse", "isotope", "mitosis", "plasma",
        ];
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let pick = |rng: &mut StdRng| {
                (0..8).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ")
            };
            let (s1, s2) = (pick(&mut rng), pick(&mut rng));
            if s1 == s2 {
                continue;
            }
            let a = embed_text(&s1, &cfg).unwrap();
            let b = embed_text(&s2, &cfg).unwrap();
            assert!(cosine_similarity(&a, &b).unwrap() < 0.9, "{s1:?} vs {s2:?}");
        }
    }

    #[test]
    fn cosine_hand_cases() {
        let v = vec_of(&[0.3, 0.4, 0.5]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let x = vec_of(&[1.0, 0.0]);
        let y = vec_of(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        // dot = 8, norms 3 and 3.
        let a = vec_of(&[1.0, 2.0, 2.0]);
        let b = vec_of(&[2.0, 1.0, 2.0]);
        assert!((cosine_similarity(&a, &b).unwrap() - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        let a = vec_of(&[1.0, 2.0]);
        assert!(matches!(
            cosine_similarity(&a, &vec_of(&[1.0, 2.0, 3.0])),
            Err(EmbedError::DimMismatch(2, 3))
        ));
        assert!(matches!(
            cosine_similarity(&a, &vec_of(&[0.0, 0.0])),
            Err(EmbedError::ZeroVector)
        ));
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let a = vec_of(&(0..8).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            let b = vec_of(&(0..8).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            if a.is_zero() || b.is_zero() {
                continue;
            }
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            let alpha = rng.gen_range(0.1..10.0);
            let scaled = vec_of(&a.values.iter().map(|v| v * alpha).collect::<Vec<f64>>());
            assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-9);
        }
    }

    #[test]
    fn top_k_trivial_cases() {
        let mut index = VectorIndex::new(2);
        index.insert("a", vec_of(&[1.0, 0.0])).unwrap();
        index.insert("b", vec_of(&[0.0, 1.0])).unwrap();
        let result = index.top_k(&vec_of(&[1.0, 0.0]), 1).unwrap();
        assert_eq!(result.ranked.len(), 1);
        assert_eq!(result.ranked[0].0, "a");
        assert!((result.ranked[0].1 - 1.0).abs() < 1e-12);
        // k beyond index size saturates.
        let all = index.top_k(&vec_of(&[1.0, 0.0]), 10).unwrap();
        assert_eq!(all.ranked.len(), 2);
    }

    #[test]
    fn top_k_matches_full_sort_oracle() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut index = VectorIndex::new(16);
        let mut vectors = Vec::new();
        for i in 0..200 {
            let v = vec_of(&(0..16).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            index.insert(format!("p{i}"), v.clone()).unwrap();
            vectors.push((format!("p{i}"), v));
        }
        let query = vec_of(&(0..16).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());

        // Independent oracle: score everything, full stable sort.
        let mut oracle: Vec<(String, f64)> = vectors
            .iter()
            .map(|(id, v)| (id.clone(), cosine_similarity(&query, v).unwrap()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        oracle.truncate(30);

        let got = index.top_k(&query, 30).unwrap();
        assert_eq!(got.ranked.len(), 30);
        for (g, o) in got.ranked.iter().zip(&oracle) {
            assert_eq!(g.0, o.0);
            assert!((g.1 - o.1).abs() < 1e-12);
        }
        // Scores are non-increasing.
        for pair in got.ranked.windows(2) {
            assert!(pair[0].1 >= pair[1].1);
        }
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut index = VectorIndex::new(2);
        index.insert("first", vec_of(&[1.0, 0.0])).unwrap();
        index.insert("second", vec_of(&[2.0, 0.0])).unwrap();
        let result = index.top_k(&vec_of(&[3.0, 0.0]), 2).unwrap();
        assert_eq!(result.ranked[0].0, "first");
        assert_eq!(result.ranked[1].0, "second");
    }

    #[test]
    fn index_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.deix");

        let empty = VectorIndex::new(8);
        empty.save(&path).unwrap();
        let loaded = VectorIndex::load(&path).unwrap();
        assert_eq!(loaded.dim(), 8);
        assert!(loaded.is_empty());

        let mut rng = StdRng::seed_from_u64(5);
        let mut index = VectorIndex::new(8);
        for i in 0..10_000 {
            let v = vec_of(&(0..8).map(|_| rng.gen::<f64>() - 0.5).collect::<Vec<f64>>());
            index.insert(format!("chunk-{i}"), v).unwrap();
        }
        index.save(&path).unwrap();
        let loaded = VectorIndex::load(&path).unwrap();
        assert_eq!(loaded.len(), index.len());
        for (a, b) in index.entries().iter().zip(loaded.entries()) {
            assert_eq!(a.passage_id, b.passage_id);
            // Bit-exact IEEE-754 round trip.
            for (x, y) in a.vector.values.iter().zip(&b.vector.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.deix");
        let mut index = VectorIndex::new(4);
        index.insert("a", vec_of(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        index.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(VectorIndex::load(&path), Err(EmbedError::CorruptIndex(_))));
    }

    #[test]
    fn version_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ver.deix");
        VectorIndex::new(4).save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9; // bump version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(VectorIndex::load(&path), Err(EmbedError::VersionMismatch(9))));
    }
}
