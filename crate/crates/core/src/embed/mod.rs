//! CLIPScore from precomputed embeddings, and the CLIPScore + CIDEr-D hybrid.
//!
//! Embeddings live in an [`EmbeddingStore`] keyed by string id. Caption
//! embeddings use the key `text:<caption>` and image embeddings the key
//! `image:<image_ref>`; see [`text_key`] and [`image_key`].

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Metric, MetricScore};
use crate::ngram::{cider_d, IdfTable};
use crate::tokenize::TokenSeq;

mod remote;

pub use remote::{fetch_remote, RemoteConfig, RemoteInput};

/// Rescaling weight applied to the clamped cosine.
pub const CLIPSCORE_WEIGHT: f64 = 2.5;

const NORM_TOLERANCE: f64 = 1e-6;
const EMB1_MAGIC: &[u8; 4] = b"EMB1";

pub fn text_key(caption: &str) -> String {
    format!("text:{caption}")
}

pub fn image_key(image_ref: &str) -> String {
    format!("image:{image_ref}")
}

/// A unit-normalized embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    id: String,
    vector: Vec<f64>,
}

impl Embedding {
    /// Validates and L2-normalizes `vector`.
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if vector.is_empty() {
            return Err(Error::InvalidInput(format!("embedding {id:?} is empty")));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("embedding {id:?} has non-finite entries")));
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!("embedding {id:?} has zero norm")));
        }
        Ok(Embedding {
            id,
            vector: vector.into_iter().map(|x| x / norm).collect(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} ({}) vs {} ({})",
                self.id,
                self.dim(),
                other.id,
                other.dim()
            )));
        }
        Ok(self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum())
    }
}

/// Reference-free CLIPScore: `2.5 * max(cos(text, image), 0)`.
///
/// ```
/// use capbias::embed::{clipscore, Embedding};
///
/// let t = Embedding::new("t", vec![1.0, 0.0]).unwrap();
/// let i = Embedding::new("i", vec![0.3, (1.0f64 - 0.09).sqrt()]).unwrap();
/// assert!((clipscore(&t, &i).unwrap().value - 0.75).abs() < 1e-12);
/// ```
pub fn clipscore(text_emb: &Embedding, image_emb: &Embedding) -> Result<MetricScore> {
    let cos = text_emb.cosine(image_emb)?;
    if (text_emb.norm() - 1.0).abs() > NORM_TOLERANCE || (image_emb.norm() - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::InvalidInput("embeddings must be unit-normalized".into()));
    }
    // Rounding can push the dot product of unit vectors a hair past 1.
    let value = (CLIPSCORE_WEIGHT * cos.max(0.0)).min(CLIPSCORE_WEIGHT);
    Ok(MetricScore::new(Metric::ClipScore, value))
}

/// CLIPScore and CIDEr-D components together with their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridScore {
    pub clip: f64,
    pub cider: f64,
    pub total: f64,
}

impl HybridScore {
    /// Unweighted sum of the two components.
    pub fn from_parts(clip: f64, cider: f64) -> Self {
        HybridScore {
            clip,
            cider,
            total: clip + cider,
        }
    }

    /// Weighted sum; [`HybridWeights::default`] is 1:1.
    pub fn weighted(clip: f64, cider: f64, weights: HybridWeights) -> Self {
        let clip = weights.clip * clip;
        let cider = weights.cider * cider;
        Self::from_parts(clip, cider)
    }
}

/// Component weights of the hybrid metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridWeights {
    pub clip: f64,
    pub cider: f64,
}

impl Default for HybridWeights {
    fn default() -> Self {
        HybridWeights { clip: 1.0, cider: 1.0 }
    }
}

/// CLIPScore of the candidate against the image plus CIDEr-D against the
/// references, with equal weights.
pub fn hybrid(
    candidate: &TokenSeq,
    references: &[TokenSeq],
    text_emb: &Embedding,
    image_emb: &Embedding,
    idf: &IdfTable,
) -> Result<HybridScore> {
    let clip = clipscore(text_emb, image_emb)?.value;
    let cider = cider_d(candidate, references, idf)?.value;
    Ok(HybridScore::from_parts(clip, cider))
}

/// An immutable collection of same-dimension embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, Embedding>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            entries: BTreeMap::new(),
        }
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

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.entries.get(id)
    }

    pub fn text(&self, caption: &str) -> Option<&Embedding> {
        self.get(&text_key(caption))
    }

    pub fn image(&self, image_ref: &str) -> Option<&Embedding> {
        self.get(&image_key(image_ref))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Embedding> {
        self.entries.values()
    }

    pub fn insert(&mut self, embedding: Embedding) -> Result<()> {
        if embedding.dim() != self.dim {
            return Err(Error::InvalidInput(format!(
                "embedding {:?} has dim {}, store expects {}",
                embedding.id,
                embedding.dim(),
                self.dim
            )));
        }
        if self.entries.contains_key(&embedding.id) {
            return Err(Error::InvalidInput(format!("duplicate embedding id {:?}", embedding.id)));
        }
        self.entries.insert(embedding.id.clone(), embedding);
        Ok(())
    }

    /// Reads an EMB1 binary or JSON store, detected by the leading bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::InvalidInput(reason) => Error::load(path, reason),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(EMB1_MAGIC) {
            Self::read_emb1(bytes)
        } else if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
            Self::from_json(std::str::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))?)
        } else {
            Err(Error::InvalidInput("unrecognized embedding file: bad magic".into()))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            entries: BTreeMap<String, Vec<Option<f64>>>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut store = EmbeddingStore::new(raw.dim);
        for (id, values) in raw.entries {
            // JSON has no NaN literal; nulls stand in for it.
            let vector: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            store.insert(Embedding::new(id, vector)?)?;
        }
        Ok(store)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(id, e)| (id.clone(), serde_json::json!(e.vector)))
            .collect();
        serde_json::json!({ "dim": self.dim, "entries": entries })
    }

    fn read_emb1(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        let dim = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)? as usize;
        if dim == 0 {
            return Err(Error::InvalidInput("EMB1 header declares dim 0".into()));
        }
        let mut store = EmbeddingStore::new(dim);
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut id)?;
            let id = String::from_utf8(id).map_err(|e| Error::InvalidInput(format!("record id is not UTF-8: {e}")))?;
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                read_exact(&mut r, &mut b)
                    .map_err(|_| Error::InvalidInput(format!("record {id:?} is truncated (dim {dim})")))?;
                vector.push(f32::from_le_bytes(b) as f64);
            }
            store.insert(Embedding::new(id, vector)?)?;
        }
        if !r.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} trailing bytes after {count} records; dim mismatch?",
                r.len()
            )));
        }
        Ok(store)
    }

    /// Writes the EMB1 binary format (vectors as little-endian f32).
    pub fn write_emb1<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(EMB1_MAGIC)?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (id, e) in &self.entries {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::InvalidInput(format!("id {id:?} longer than 65535 bytes")))?;
            out.write_all(&len.to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            for &x in &e.vector {
                out.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Alias for [`EmbeddingStore::load`].
pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::load(path)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::InvalidInput("unexpected end of EMB1 data".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(id: &str, v: &[f64]) -> Embedding {
        Embedding::new(id, v.to_vec()).unwrap()
    }

    fn emb1_bytes(dim: u32, records: &[(&str, Vec<f32>)]) -> Vec<u8> {
        let mut out = b"EMB1".to_vec();
        out.extend(dim.to_le_bytes());
        out.extend((records.len() as u32).to_le_bytes());
        for (id, v) in records {
            out.extend((id.len() as u16).to_le_bytes());
            out.extend(id.as_bytes());
            for x in v {
                out.extend(x.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn clipscore_extremes() {
        let a = emb("a", &[1.0, 2.0, 3.0]);
        assert!((clipscore(&a, &a).unwrap().value - 2.5).abs() < 1e-12);
        let x = emb("x", &[1.0, 0.0]);
        let y = emb("y", &[0.0, 1.0]);
        assert_eq!(clipscore(&x, &y).unwrap().value, 0.0);
        let neg = emb("n", &[-1.0, 0.0]);
        assert_eq!(clipscore(&x, &neg).unwrap().value, 0.0);
    }

    #[test]
    fn clipscore_cos_point_three() {
        let t = emb("t", &[1.0, 0.0]);
        let i = emb("i", &[0.3, (1.0f64 - 0.09).sqrt()]);
        assert!((clipscore(&t, &i).unwrap().value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn clipscore_dim_mismatch() {
        assert!(clipscore(&emb("a", &[1.0]), &emb("b", &[1.0, 0.0])).is_err());
    }

    #[test]
    fn embedding_rejects_nan_and_zero() {
        assert!(Embedding::new("nan", vec![f64::NAN, 1.0]).is_err());
        assert!(Embedding::new("zero", vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn hybrid_table_examples() {
        let good = HybridScore::from_parts(0.6699, 7.0039);
        let bad = HybridScore::from_parts(0.7119, 2.9982);
        assert_eq!(format!("{:.4}", good.total), "7.6738");
        assert_eq!(format!("{:.4}", bad.total), "3.7101");
        // CLIPScore alone prefers the bad caption; the sum does not.
        assert!(bad.clip > good.clip && good.total > bad.total);
    }

    #[test]
    fn hybrid_weights_default_to_one() {
        let h = HybridScore::weighted(0.5, 2.0, HybridWeights::default());
        assert_eq!(h, HybridScore::from_parts(0.5, 2.0));
        let h = HybridScore::weighted(0.5, 2.0, HybridWeights { clip: 2.0, cider: 0.5 });
        assert_eq!(h.total, 2.0);
    }

    #[test]
    fn emb1_three_records() {
        let bytes = emb1_bytes(
            4,
            &[
                ("a", vec![1.0, 0.0, 0.0, 0.0]),
                ("b", vec![0.0, 2.0, 0.0, 0.0]),
                ("c", vec![1.0, 1.0, 1.0, 1.0]),
            ],
        );
        let store = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.dim(), 4);
        let b = store.get("b").unwrap();
        assert!((b.norm() - 1.0).abs() < 1e-12);
        assert_eq!(b.vector()[1], 1.0);
    }

    #[test]
    fn emb1_nan_names_record() {
        let bytes = emb1_bytes(2, &[("ok", vec![1.0, 0.0]), ("broken", vec![f32::NAN, 1.0])]);
        let err = EmbeddingStore::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("broken"), "{err}");
    }

    #[test]
    fn emb1_duplicate_and_magic_errors() {
        let bytes = emb1_bytes(1, &[("x", vec![1.0]), ("x", vec![2.0])]);
        let err = EmbeddingStore::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("\"x\""), "{err}");
        assert!(EmbeddingStore::from_bytes(b"EMB2\x01\0\0\0").is_err());
    }

    #[test]
    fn emb1_dim_mismatch_detected() {
        // Header claims dim 3 but records carry 2 floats.
        let mut bytes = emb1_bytes(2, &[("a", vec![1.0, 0.0])]);
        bytes[4] = 3;
        assert!(EmbeddingStore::from_bytes(&bytes).is_err());
    }

    #[test]
    fn json_store_and_emb1_round_trip() {
        let json = r#"{"dim":2,"entries":{"text:a man":[3.0,4.0],"image:x":[0.0,1.0]}}"#;
        let store = EmbeddingStore::from_json(json).unwrap();
        assert_eq!(store.text("a man").unwrap().vector(), &[0.6, 0.8]);
        let mut buf = Vec::new();
        store.write_emb1(&mut buf).unwrap();
        let back = EmbeddingStore::from_bytes(&buf).unwrap();
        assert_eq!(back.len(), 2);
        let c1 = clipscore(store.text("a man").unwrap(), store.image("x").unwrap()).unwrap().value;
        let c2 = clipscore(back.text("a man").unwrap(), back.image("x").unwrap()).unwrap().value;
        assert!((c1 - c2).abs() < 1e-6);
        assert!(EmbeddingStore::from_json(r#"{"dim":2,"entries":{"n":[null,1.0]}}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn clipscore_bounded_and_scale_invariant(
            a in proptest::collection::vec(-1.0f64..1.0, 8),
            b in proptest::collection::vec(-1.0f64..1.0, 8),
            sa in 0.1f64..50.0,
            sb in 0.1f64..50.0,
        ) {
            let (Ok(x), Ok(y)) = (Embedding::new("a", a.clone()), Embedding::new("b", b.clone())) else {
                return Ok(());
            };
            let s = clipscore(&x, &y).unwrap().value;
            proptest::prop_assert!((0.0..=2.5).contains(&s));
            let xs = Embedding::new("a", a.iter().map(|v| v * sa).collect()).unwrap();
            let ys = Embedding::new("b", b.iter().map(|v| v * sb).collect()).unwrap();
            let s2 = clipscore(&xs, &ys).unwrap().value;
            proptest::prop_assert!((s - s2).abs() < 1e-12);
            if x.cosine(&y).unwrap() <= 0.0 {
                proptest::prop_assert_eq!(s, 0.0);
            }
        }

        #[test]
        fn hybrid_sum_is_exact(clip in 0.0f64..2.5, cider in 0.0f64..10.0) {
            let h = HybridScore::from_parts(clip, cider);
            proptest::prop_assert_eq!(h.total, clip + cider);
        }
    }
}
