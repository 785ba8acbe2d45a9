//! Text embedding providers.
//!
//! [`SyntheticEmbedder`] produces deterministic unit vectors whose pairwise
//! cosines reproduce a declared label-affinity matrix; [`RemoteEmbedder`]
//! fetches vectors from an HTTP endpoint.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::belief_map::Embedding;
use crate::error::{Error, Result};
use crate::remote::{post_with_retry, EndpointConfig, HttpTransport, JsonTransport};

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Deterministic unit embedding of `label`.
    fn embed(&self, label: &str) -> Result<Embedding>;
}

/// Lowercased, trimmed, single-spaced form of a label.
pub fn canonical_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Sparse, symmetric label-affinity table (`affinity[a][b]` = target cosine).
///
/// Missing pairs default to 0 and the diagonal to 1. One direction of a pair
/// is enough; if both are given they must agree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Affinity(pub BTreeMap<String, BTreeMap<String, f64>>);

/// Dense, validated affinity matrix over a sorted label list.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

const SYM_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

impl Affinity {
    pub fn insert(&mut self, a: &str, b: &str, v: f64) {
        self.0
            .entry(canonical_label(a))
            .or_default()
            .insert(canonical_label(b), v);
    }

    /// Adds `label` to the vocabulary with no off-diagonal affinity.
    pub fn declare(&mut self, label: &str) {
        self.0.entry(canonical_label(label)).or_default();
    }

    /// Densifies and validates: symmetric, unit diagonal, entries in
    /// `[-1, 1]`, positive semidefinite.
    pub fn to_matrix(&self) -> Result<AffinityMatrix> {
        let mut labels: Vec<String> = Vec::new();
        for (a, row) in &self.0 {
            labels.push(canonical_label(a));
            labels.extend(row.keys().map(|b| canonical_label(b)));
        }
        labels.sort();
        labels.dedup();
        let idx: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let n = labels.len();
        let mut values = vec![vec![f64::NAN; n]; n];
        for (a, row) in &self.0 {
            let i = idx[canonical_label(a).as_str()];
            for (b, &v) in row {
                let j = idx[canonical_label(b).as_str()];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::InvalidWorld(format!(
                        "affinity {a}/{b} = {v} outside [-1, 1]"
                    )));
                }
                if i == j && (v - 1.0).abs() > SYM_TOL {
                    return Err(Error::InvalidWorld(format!(
                        "affinity diagonal for {a} must be 1, got {v}"
                    )));
                }
                for (r, c) in [(i, j), (j, i)] {
                    let cur = values[r][c];
                    if !cur.is_nan() && (cur - v).abs() > SYM_TOL {
                        return Err(Error::InvalidWorld(format!(
                            "affinity between {a} and {b} is not symmetric ({cur} vs {v})"
                        )));
                    }
                    values[r][c] = v;
                }
            }
        }
        for (i, row) in values.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if v.is_nan() {
                    *v = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        let m = AffinityMatrix { labels, values };
        m.factor()?;
        Ok(m)
    }
}

impl AffinityMatrix {
    /// Pivot-free Cholesky tolerant of semidefinite matrices: rows `L` with
    /// `L Lᵀ = A`. Fails if `A` has a negative direction.
    pub fn factor(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.labels.len();
        let a = &self.values;
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
            if d < -PSD_TOL {
                return Err(Error::InvalidWorld(format!(
                    "affinity matrix is not positive semidefinite (pivot {d} at {})",
                    self.labels[j]
                )));
            }
            let djj = d.max(0.0).sqrt();
            l[j][j] = djj;
            for i in j + 1..n {
                let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if djj > PSD_TOL {
                    l[i][j] = s / djj;
                } else if s.abs() > 1e-7 {
                    return Err(Error::InvalidWorld(format!(
                        "affinity matrix is not positive semidefinite near {}",
                        self.labels[j]
                    )));
                }
            }
        }
        Ok(l)
    }
}

/// Deterministic embedder realizing a declared affinity matrix.
///
/// Declared labels get the rows of the Cholesky factor in the first `n`
/// coordinates; any other label gets a hash-seeded Gaussian direction in the
/// remaining `dim - n` coordinates, so it is orthogonal to every declared
/// label.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    dim: usize,
    seed: u64,
    strict: bool,
    declared: BTreeMap<String, Embedding>,
    n_declared: usize,
}

impl SyntheticEmbedder {
    pub fn new(dim: usize, seed: u64, affinity: &Affinity) -> Result<Self> {
        let m = affinity.to_matrix()?;
        let n = m.labels.len();
        if n >= dim {
            return Err(Error::Argument(format!(
                "embedding dim {dim} too small for {n} declared labels"
            )));
        }
        let l = m.factor()?;
        let declared = m
            .labels
            .iter()
            .zip(l)
            .map(|(label, row)| {
                let mut v = vec![0.0; dim];
                v[..n].copy_from_slice(&row);
                (label.clone(), Embedding::normalized(v))
            })
            .collect();
        Ok(Self {
            dim,
            seed,
            strict: false,
            declared,
            n_declared: n,
        })
    }

    /// In strict mode undeclared labels are an error.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    fn residual(&self, label: &str) -> Embedding {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let mut v = vec![0.0; self.dim];
        for x in &mut v[self.n_declared..] {
            *x = StandardNormal.sample(&mut rng);
        }
        Embedding::normalized(v)
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, label: &str) -> Result<Embedding> {
        let key = canonical_label(label);
        if key.is_empty() {
            return Err(Error::Argument("cannot embed an empty label".into()));
        }
        if let Some(e) = self.declared.get(&key) {
            return Ok(e.clone());
        }
        if self.strict {
            return Err(Error::UnknownLabel(key));
        }
        Ok(self.residual(&key))
    }
}

/// Embeddings fetched from `POST {"texts": [...]}` → `{"embeddings": [[...]]}`.
pub struct RemoteEmbedder {
    endpoint: EndpointConfig,
    dim: usize,
    transport: Arc<dyn JsonTransport>,
    cache: Mutex<BTreeMap<String, Embedding>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: EndpointConfig, dim: usize) -> Self {
        Self::with_transport(endpoint, dim, Arc::new(HttpTransport::default()))
    }

    pub fn with_transport(
        endpoint: EndpointConfig,
        dim: usize,
        transport: Arc<dyn JsonTransport>,
    ) -> Self {
        Self {
            endpoint,
            dim,
            transport,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    /// Embeds several labels in one request; cached labels are not re-sent.
    pub fn embed_batch(&self, labels: &[&str]) -> Result<Vec<Embedding>> {
        let keys: Vec<String> = labels.iter().map(|l| canonical_label(l)).collect();
        if keys.iter().any(String::is_empty) {
            return Err(Error::Argument("cannot embed an empty label".into()));
        }
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("embedding cache poisoned");
            let mut m: Vec<String> = keys.iter().filter(|k| !cache.contains_key(*k)).cloned().collect();
            m.dedup();
            m
        };
        if !missing.is_empty() {
            let reply = post_with_retry(
                self.transport.as_ref(),
                &self.endpoint,
                &json!({ "texts": missing }),
            )?;
            let rows = reply
                .get("embeddings")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::ProviderContract("reply lacks an `embeddings` array".into()))?;
            if rows.len() != missing.len() {
                return Err(Error::ProviderContract(format!(
                    "asked for {} embeddings, got {}",
                    missing.len(),
                    rows.len()
                )));
            }
            let mut fetched = Vec::with_capacity(rows.len());
            for row in rows {
                let values: Vec<f64> = serde_json::from_value(row.clone())
                    .map_err(|e| Error::ProviderContract(format!("bad embedding row: {e}")))?;
                if values.len() != self.dim {
                    return Err(Error::ProviderContract(format!(
                        "endpoint returned dim {}, configured {}",
                        values.len(),
                        self.dim
                    )));
                }
                let e = Embedding::normalized(values);
                if e.is_zero() {
                    return Err(Error::ProviderContract("endpoint returned a zero vector".into()));
                }
                fetched.push(e);
            }
            let mut cache = self.cache.lock().expect("embedding cache poisoned");
            for (k, e) in missing.into_iter().zip(fetched) {
                cache.insert(k, e);
            }
        }
        let cache = self.cache.lock().expect("embedding cache poisoned");
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, label: &str) -> Result<Embedding> {
        Ok(self.embed_batch(&[label])?.remove(0))
    }
}
