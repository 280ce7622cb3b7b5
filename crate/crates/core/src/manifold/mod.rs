//! The similarity manifold: labeled feat embeddings with exact KNN search.

mod io;
mod threshold;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::PairLabel;
use crate::error::{Error, Result};
use crate::network::{euclidean, MultiLevelEmbedding};

pub use io::{load_index, read_embeddings_tsv, read_index, save_index, write_embeddings_tsv, write_index, EmbeddingRow,
    INDEX_VERSION};
pub use threshold::{select_similarity_threshold, threshold_candidates, ThresholdChoice};

pub const DEFAULT_K: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub id: String,
    pub feat: Vec<f64>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
    /// Ascending by distance, ties by id.
    pub neighbors: Vec<Neighbor>,
}

/// Turns a sorted neighborhood into a label and a confidence in `(0, 1]`.
pub trait ConfidencePolicy: Send + Sync {
    fn vote(&self, neighbors: &[Neighbor]) -> (String, f64);
}

/// Each neighbor votes with weight `1/(1+d)`; confidence is the winning
/// label's share of the total weight. Equal shares go to the label whose
/// nearest member comes first.
#[derive(Clone, Copy, Debug, Default)]
pub struct DistanceWeightedVote;

/// Unweighted vote share.
#[derive(Clone, Copy, Debug, Default)]
pub struct MajorityVote;

fn tally(neighbors: &[Neighbor], weight: impl Fn(&Neighbor) -> f64) -> (String, f64) {
    // (label, mass) in order of first appearance
    let mut mass: Vec<(&str, f64)> = Vec::new();
    let mut total = 0.0;
    for n in neighbors {
        let w = weight(n);
        total += w;
        match mass.iter_mut().find(|(l, _)| *l == n.label) {
            Some((_, m)) => *m += w,
            None => mass.push((&n.label, w)),
        }
    }
    let mut best = 0;
    for (i, (_, m)) in mass.iter().enumerate() {
        if *m > mass[best].1 {
            best = i;
        }
    }
    (mass[best].0.to_string(), mass[best].1 / total)
}

impl ConfidencePolicy for DistanceWeightedVote {
    fn vote(&self, neighbors: &[Neighbor]) -> (String, f64) {
        tally(neighbors, |n| 1.0 / (1.0 + n.distance))
    }
}

impl ConfidencePolicy for MajorityVote {
    fn vote(&self, neighbors: &[Neighbor]) -> (String, f64) {
        tally(neighbors, |_| 1.0)
    }
}

/// Exact linear-scan index over feat vectors.
#[derive(Clone, Debug, Default)]
pub struct ManifoldIndex {
    dim: usize,
    entries: Vec<Entry>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for ManifoldIndex {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl ManifoldIndex {
    /// An empty index accepting vectors of length `dim`.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Index("feat dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            entries: Vec::new(),
            by_id: HashMap::new(),
        })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = Entry>) -> Result<Self> {
        let mut it = entries.into_iter().peekable();
        let dim = it
            .peek()
            .map(|e| e.feat.len())
            .ok_or_else(|| Error::Index("cannot build an index from zero entries".into()))?;
        let mut index = Self::new(dim)?;
        for e in it {
            index.insert(e.id, e.feat, e.label)?;
        }
        Ok(index)
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

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Entry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn insert(&mut self, id: impl Into<String>, feat: Vec<f64>, label: impl Into<String>) -> Result<()> {
        let id = id.into();
        if feat.len() != self.dim {
            return Err(Error::Index(format!(
                "entry `{id}` has {} dimensions, index holds {}",
                feat.len(),
                self.dim
            )));
        }
        if feat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feat vector of `{id}`")));
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.by_id.insert(id.clone(), self.entries.len());
        self.entries.push(Entry {
            id,
            feat,
            label: label.into(),
        });
        Ok(())
    }

    /// The `k` nearest entries, ascending by distance with ties broken by id.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if self.entries.is_empty() {
            return Err(Error::Index("query against an empty index".into()));
        }
        if k == 0 || k > self.entries.len() {
            return Err(Error::InvalidArgument(format!(
                "k must lie in 1..={}, got {k}",
                self.entries.len()
            )));
        }
        if query.len() != self.dim {
            return Err(Error::Index(format!(
                "query has {} dimensions, index holds {}",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, usize)> =
            self.entries.iter().enumerate().map(|(i, e)| (euclidean(query, &e.feat), i)).collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0).then_with(|| self.entries[a.1].id.cmp(&self.entries[b.1].id))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(distance, i)| Neighbor {
                id: self.entries[i].id.clone(),
                distance,
                label: self.entries[i].label.clone(),
            })
            .collect())
    }

    pub fn knn_predict(&self, query: &[f64], k: usize) -> Result<Prediction> {
        self.knn_predict_with(query, k, &DistanceWeightedVote)
    }

    pub fn knn_predict_with(&self, query: &[f64], k: usize, policy: &dyn ConfidencePolicy) -> Result<Prediction> {
        let neighbors = self.nearest(query, k)?;
        let (label, confidence) = policy.vote(&neighbors);
        Ok(Prediction {
            label,
            confidence,
            neighbors,
        })
    }
}

/// Builds an index from the feat heads of labeled embeddings.
pub fn build_index<'a, I>(embeddings: I) -> Result<ManifoldIndex>
where
    I: IntoIterator<Item = (&'a str, &'a MultiLevelEmbedding, &'a str)>,
{
    ManifoldIndex::from_entries(embeddings.into_iter().map(|(id, e, label)| Entry {
        id: id.to_string(),
        feat: e.feat.clone(),
        label: label.to_string(),
    }))
}

/// `d ≤ θ` is similar.
pub fn classify_pair(d: f64, theta: f64) -> PairLabel {
    if d <= theta {
        PairLabel::Similar
    } else {
        PairLabel::Dissimilar
    }
}
