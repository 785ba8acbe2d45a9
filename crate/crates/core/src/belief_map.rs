//! Spatial-semantic belief map.
//!
//! Every cell stores a language-aligned unit feature vector together with an
//! observation confidence in `[0, 1]`. Observations are fused with a
//! confidence-weighted running mean, features can be spatially blurred, and
//! the map answers text-embedding queries with a per-cell similarity surface
//! rescaled to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{Cell, GridSpec, Mask};

/// Allowed deviation from unit norm for embeddings.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A fixed-length feature vector: either all-zero or unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Wraps `values`, rejecting vectors that are neither zero nor unit length.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = l2(&values);
        if norm != 0.0 && (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::ProviderContract(format!(
                "embedding norm {norm} is neither 0 nor 1"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ProviderContract("non-finite embedding component".into()));
        }
        Ok(Self { values })
    }

    /// Normalizes `values` to unit length; a zero vector stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2(&values);
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_unit(&self) -> bool {
        (l2(&self.values) - 1.0).abs() <= UNIT_TOLERANCE
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        cosine(&self.values, &other.values)
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = na.sqrt() * nb.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(-1.0, 1.0)
    }
}

/// One labelled (or label-free) observation of a grid cell.
///
/// An empty label marks a cell that was inside the sensed footprint but
/// carried no semantics; it only raises confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticHit {
    pub label: String,
    pub cell: Cell,
    /// In `(0, 1]`.
    pub strength: f64,
}

impl SemanticHit {
    pub fn new(label: impl Into<String>, cell: Cell, strength: f64) -> Self {
        Self {
            label: label.into(),
            cell,
            strength,
        }
    }

    pub fn footprint(cell: Cell, strength: f64) -> Self {
        Self::new(String::new(), cell, strength)
    }
}

/// The belief map: per-cell feature plus observation confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    spec: GridSpec,
    dim: usize,
    /// Row-major, `dim` values per cell.
    features: Vec<f64>,
    confidence: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(spec: GridSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        if dim == 0 {
            return Err(Error::Argument("feature dimension must be positive".into()));
        }
        Ok(Self {
            spec,
            dim,
            features: vec![0.0; spec.len() * dim],
            confidence: vec![0.0; spec.len()],
        })
    }

    /// Builds a grid from raw per-cell data, checking every invariant.
    pub fn from_parts(
        spec: GridSpec,
        dim: usize,
        features: Vec<f64>,
        confidence: Vec<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        if features.len() != spec.len() * dim || confidence.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells of dim {dim}, got {} features / {} confidences",
                spec.len(),
                features.len(),
                confidence.len()
            )));
        }
        let grid = Self {
            spec,
            dim,
            features,
            confidence,
        };
        for i in 0..spec.len() {
            let c = grid.confidence[i];
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Argument(format!("confidence {c} outside [0, 1]")));
            }
            if c == 0.0 && grid.feature_idx(i).iter().any(|&v| v != 0.0) {
                return Err(Error::Argument(format!(
                    "cell {i} has zero confidence but a nonzero feature"
                )));
            }
        }
        Ok(grid)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn confidence(&self, cell: Cell) -> f64 {
        self.confidence[self.spec.index(cell)]
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidence
    }

    pub fn feature(&self, cell: Cell) -> &[f64] {
        self.feature_idx(self.spec.index(cell))
    }

    fn feature_idx(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw_features(&self) -> &[f64] {
        &self.features
    }

    /// Cells with nonzero confidence.
    pub fn observed_mask(&self) -> Mask {
        Mask::from_fn(&self.spec, |c| self.confidence(c) > 0.0)
    }

    /// Fuses a batch of hits into the map.
    ///
    /// Each labelled hit moves the cell feature to the renormalized
    /// confidence-weighted mean of the old feature and the label embedding
    /// scaled by the hit strength; every hit raises confidence by
    /// `strength * (1 - confidence)`. All cells are bounds-checked before any
    /// cell is modified.
    pub fn integrate(
        &mut self,
        hits: &[SemanticHit],
        embed: &dyn EmbeddingProvider,
    ) -> Result<()> {
        for hit in hits {
            self.spec.checked_index(hit.cell)?;
            if !(hit.strength > 0.0 && hit.strength <= 1.0) {
                return Err(Error::Argument(format!(
                    "hit strength {} outside (0, 1]",
                    hit.strength
                )));
            }
        }
        for hit in hits {
            let i = self.spec.index(hit.cell);
            let c = self.confidence[i];
            if !hit.label.is_empty() {
                let e = embed.embed(&hit.label)?;
                if e.dim() != self.dim {
                    return Err(Error::ProviderContract(format!(
                        "embedding dim {} != map dim {}",
                        e.dim(),
                        self.dim
                    )));
                }
                if !e.is_unit() {
                    return Err(Error::ProviderContract(format!(
                        "embedding for {:?} is not unit length",
                        hit.label
                    )));
                }
                let feat = &mut self.features[i * self.dim..(i + 1) * self.dim];
                for (f, v) in feat.iter_mut().zip(e.values()) {
                    *f = c * *f + hit.strength * v;
                }
                let norm = l2(feat);
                if norm > 0.0 {
                    feat.iter_mut().for_each(|f| *f /= norm);
                }
            }
            self.confidence[i] = (c + hit.strength * (1.0 - c)).min(1.0);
        }
        Ok(())
    }

    /// Owned-value form of [`FeatureGrid::integrate`].
    pub fn integrate_observation(
        mut self,
        hits: &[SemanticHit],
        embed: &dyn EmbeddingProvider,
    ) -> Result<Self> {
        self.integrate(hits, embed)?;
        Ok(self)
    }

    /// Confidence-weighted Gaussian blur (σ = radius / 2) over the
    /// `(2r+1)²` neighbourhood, kernel renormalized at the grid boundary.
    /// Features are renormalized to unit length afterwards.
    pub fn blur_features(&self, radius: usize) -> FeatureGrid {
        if radius == 0 {
            return self.clone();
        }
        let kernel = gaussian_kernel_1d(radius);
        let (w, h, d) = (self.spec.width, self.spec.height, self.dim);

        // Channel layout per cell: [c, c*f_0, ..., c*f_{d-1}]
        let stride = d + 1;
        let mut field = vec![0.0; self.spec.len() * stride];
        for i in 0..self.spec.len() {
            let c = self.confidence[i];
            field[i * stride] = c;
            for (k, v) in self.feature_idx(i).iter().enumerate() {
                field[i * stride + 1 + k] = c * v;
            }
        }

        let r = radius as isize;
        let mut tmp = vec![0.0; field.len()];
        let mut norm_x = vec![0.0; w];
        // Horizontal pass.
        for col in 0..w {
            norm_x[col] = (-r..=r)
                .filter(|o| (0..w as isize).contains(&(col as isize + o)))
                .map(|o| kernel[(o + r) as usize])
                .sum();
        }
        for row in 0..h {
            for col in 0..w {
                let out = (row * w + col) * stride;
                for o in -r..=r {
                    let cc = col as isize + o;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    let k = kernel[(o + r) as usize];
                    let src = (row * w + cc as usize) * stride;
                    for ch in 0..stride {
                        tmp[out + ch] += k * field[src + ch];
                    }
                }
            }
        }
        // Vertical pass.
        let mut norm_y = vec![0.0; h];
        for row in 0..h {
            norm_y[row] = (-r..=r)
                .filter(|o| (0..h as isize).contains(&(row as isize + o)))
                .map(|o| kernel[(o + r) as usize])
                .sum();
        }
        let mut acc = vec![0.0; field.len()];
        for row in 0..h {
            for o in -r..=r {
                let rr = row as isize + o;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                let k = kernel[(o + r) as usize];
                for col in 0..w {
                    let out = (row * w + col) * stride;
                    let src = (rr as usize * w + col) * stride;
                    for ch in 0..stride {
                        acc[out + ch] += k * tmp[src + ch];
                    }
                }
            }
        }

        let mut features = vec![0.0; self.features.len()];
        let mut confidence = vec![0.0; self.spec.len()];
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let total = norm_x[col] * norm_y[row];
                confidence[i] = (acc[i * stride] / total).clamp(0.0, 1.0);
                let feat = &mut features[i * d..(i + 1) * d];
                feat.copy_from_slice(&acc[i * stride + 1..(i + 1) * stride]);
                let n = l2(feat);
                if n > 0.0 && confidence[i] > 0.0 {
                    feat.iter_mut().for_each(|f| *f /= n);
                } else {
                    feat.iter_mut().for_each(|f| *f = 0.0);
                }
            }
        }
        FeatureGrid {
            spec: self.spec,
            dim: d,
            features,
            confidence,
        }
    }

    /// Similarity of every cell to `q`, as `(cos + 1) / 2`. Cells never
    /// observed score exactly 0.
    pub fn query(&self, q: &Embedding) -> Result<SimilarityMap> {
        self.query_with(q, Exec::Auto)
    }

    pub fn query_with(&self, q: &Embedding, exec: Exec) -> Result<SimilarityMap> {
        if q.dim() != self.dim {
            return Err(Error::ProviderContract(format!(
                "query dim {} != map dim {}",
                q.dim(),
                self.dim
            )));
        }
        if !q.is_unit() {
            return Err(Error::ProviderContract("query embedding is not unit length".into()));
        }
        let qv = q.values();
        let scores = exec.map_indices(self.spec.len(), |i| {
            if self.confidence[i] <= 0.0 {
                0.0
            } else {
                ((cosine(self.feature_idx(i), qv) + 1.0) / 2.0).clamp(0.0, 1.0)
            }
        });
        Ok(SimilarityMap {
            spec: self.spec,
            scores,
        })
    }
}

/// Unnormalized Gaussian weights for offsets `-r..=r`, σ = r / 2.
fn gaussian_kernel_1d(radius: usize) -> Vec<f64> {
    let sigma = radius as f64 / 2.0;
    let r = radius as isize;
    (-r..=r)
        .map(|o| (-(o * o) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Per-cell score in `[0, 1]` for a single query (or a fused surface).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMap {
    spec: GridSpec,
    scores: Vec<f64>,
}

impl SimilarityMap {
    pub fn new(spec: GridSpec, scores: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if scores.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} scores for {} cells",
                scores.len(),
                spec.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Argument(format!("score {s} outside [0, 1]")));
        }
        Ok(Self { spec, scores })
    }

    pub fn filled(spec: GridSpec, value: f64) -> Result<Self> {
        Self::new(spec, vec![value; spec.len()])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.scores[self.spec.index(cell)]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Zeroes every cell outside `keep`.
    pub fn masked(mut self, keep: &Mask) -> Self {
        for (i, s) in self.scores.iter_mut().enumerate() {
            if !keep.get_idx(i) {
                *s = 0.0;
            }
        }
        self
    }
}
