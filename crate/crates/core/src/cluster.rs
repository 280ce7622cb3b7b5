//! Clustering of embedding vectors and agreement scoring against truth.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::euclidean;

/// Item ids with a dense cluster id per item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
}

/// Renumbers arbitrary labels to `0..m` in order of first appearance.
pub fn dense_labels<T: Hash + Eq>(raw: &[T]) -> Vec<usize> {
    let mut seen: HashMap<&T, usize> = HashMap::new();
    raw.iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(l).or_insert(next)
        })
        .collect()
}

impl Partition {
    pub fn new(ids: Vec<String>, labels: Vec<usize>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::Shape(format!("{} ids but {} labels", ids.len(), labels.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let m = labels.iter().max().map_or(0, |&x| x + 1);
        let mut used = vec![false; m];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::InvalidArgument("cluster ids must be dense".into()));
        }
        Ok(Self { ids, labels })
    }

    pub fn from_raw<T: Hash + Eq>(ids: Vec<String>, raw: &[T]) -> Result<Self> {
        Self::new(ids, dense_labels(raw))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |&x| x + 1)
    }

    /// `{item id: cluster id}` ordered by id.
    pub fn to_map(&self) -> BTreeMap<&str, usize> {
        self.ids.iter().map(String::as_str).zip(self.labels.iter().copied()).collect()
    }
}

fn check_vectors(vectors: &[Vec<f64>]) -> Result<usize> {
    let dim = vectors.first().map_or(0, Vec::len);
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("vectors differ in dimension".into()));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("clustering input".into()));
    }
    Ok(dim)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned center after each
    /// assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn nearest_center(v: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(v, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from k-means++ seeding. A cluster that loses all its
/// points is restarted at the point farthest from its current center.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    let dim = check_vectors(vectors)?;
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={n}, got {k}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers = vec![vectors[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(vectors[pick].clone());
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &centers[centers.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dist = vec![0.0; n];
        for (i, v) in vectors.iter().enumerate() {
            let (c, d) = nearest_center(v, &centers);
            changed |= labels[i] != c;
            labels[i] = c;
            dist[i] = d;
            inertia += d;
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&labels) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("n > 0");
                centers[c] = vectors[far].clone();
                dist[far] = 0.0;
            }
        }
    }
    Ok(KMeans {
        labels: dense_labels(&labels),
        centers,
        inertia_history: history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    /// Merge until this many clusters remain.
    Clusters(usize),
    /// Merge while the closest pair is at most this far apart.
    Distance(f64),
}

/// Bottom-up average-linkage clustering. Equal merge distances are resolved
/// in favor of the pair with the smallest indices.
pub fn agglomerative(vectors: &[Vec<f64>], stop: Stop) -> Result<Vec<usize>> {
    check_vectors(vectors)?;
    let n = vectors.len();
    match stop {
        Stop::Clusters(k) if k == 0 || k > n => {
            return Err(Error::InvalidArgument(format!("cluster count must lie in 1..={n}, got {k}")))
        }
        Stop::Distance(t) if t.is_nan() || t < 0.0 => {
            return Err(Error::InvalidArgument(format!("distance threshold must be ≥ 0, got {t}")))
        }
        _ => {}
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(&vectors[i], &vectors[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut clusters = n;
    loop {
        if let Stop::Clusters(k) = stop {
            if clusters <= k {
                break;
            }
        }
        if clusters == 1 {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (dist, i, j) = best;
        if let Stop::Distance(t) = stop {
            if dist > t {
                break;
            }
        }
        // average linkage update: d(k, i∪j) = (|i|·d(k,i) + |j|·d(k,j)) / (|i|+|j|)
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for m in (0..n).filter(|&m| active[m] && m != i && m != j) {
            let v = (si * d[m * n + i] + sj * d[m * n + j]) / (si + sj);
            d[m * n + i] = v;
            d[i * n + m] = v;
        }
        size[i] += size[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        clusters -= 1;
    }
    Ok(dense_labels(&owner))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dbscan {
    /// Noise points carry the id `n_clusters`.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub noise: usize,
}

/// Median distance from each point to its `k`-th nearest other point.
pub fn median_knn_distance(vectors: &[Vec<f64>], k: usize) -> Result<f64> {
    check_vectors(vectors)?;
    let n = vectors.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k must lie in 1..{n}, got {k}")));
    }
    let mut kth: Vec<f64> = (0..n)
        .map(|i| {
            let mut ds: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| euclidean(&vectors[i], &vectors[j])).collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    Ok(if n % 2 == 1 {
        kth[n / 2]
    } else {
        0.5 * (kth[n / 2 - 1] + kth[n / 2])
    })
}

pub const DBSCAN_MIN_PTS: usize = 4;

/// Density clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `eps`.
pub fn dbscan(vectors: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Dbscan> {
    check_vectors(vectors)?;
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::InvalidArgument(format!(
            "DBSCAN needs eps > 0 and min_pts ≥ 1, got eps={eps}, min_pts={min_pts}"
        )));
    }
    let n = vectors.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| euclidean(&vectors[i], &vectors[j]) <= eps).collect()
    };
    const UNSET: usize = usize::MAX;
    let mut labels = vec![UNSET; n];
    let mut noise = vec![false; n];
    let mut cluster = 0;
    for p in 0..n {
        if labels[p] != UNSET {
            continue;
        }
        let seeds = neighbors(p);
        if seeds.len() < min_pts {
            noise[p] = true;
            continue;
        }
        labels[p] = cluster;
        noise[p] = false;
        let mut queue: VecDeque<usize> = seeds.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] != UNSET {
                continue;
            }
            labels[q] = cluster;
            noise[q] = false;
            let nq = neighbors(q);
            if nq.len() >= min_pts {
                queue.extend(nq.into_iter().filter(|&r| labels[r] == UNSET));
            }
        }
        cluster += 1;
    }
    let noise_count = labels.iter().filter(|&&l| l == UNSET).count();
    for l in labels.iter_mut().filter(|l| **l == UNSET) {
        *l = cluster;
    }
    Ok(Dbscan {
        labels,
        n_clusters: cluster,
        noise: noise_count,
    })
}

fn comb2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand Index of two labelings of the same items. Returns 1 when
/// the chance-corrected denominator vanishes.
pub fn ari_labels(p: &[usize], q: &[usize]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("labelings cover {} and {} items", p.len(), q.len())));
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in p.iter().zip(q) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: u128 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: u128 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: u128 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(p.len() as u64);
    if total == 0 {
        return Ok(1.0);
    }
    // scaled by 2·C(n,2) so numerator and denominator are exact integers
    let (index, sum_a, sum_b, total) = (index as i128, sum_a as i128, sum_b as i128, total as i128);
    let num = 2 * total * index - 2 * sum_a * sum_b;
    let den = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

/// [`ari_labels`] after aligning two partitions by item id.
pub fn adjusted_rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    let pos: HashMap<&str, usize> = q.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pos.len() != p.len() || q.len() != p.len() {
        return Err(Error::InvalidArgument("partitions cover different items".into()));
    }
    let mut aligned = Vec::with_capacity(p.len());
    for id in &p.ids {
        let &i = pos
            .get(id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("item `{id}` missing from second partition")))?;
        aligned.push(q.labels[i]);
    }
    ari_labels(&p.labels, &aligned)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub algorithm: String,
    pub params: serde_json::Value,
    pub head: String,
    pub n_clusters: usize,
    pub ari: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64, per: usize, centers: &[(f64, f64)], spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        let mut truth = Vec::new();
        for (c, &(x, y)) in centers.iter().enumerate() {
            for _ in 0..per {
                v.push(vec![x + rng.gen_range(-spread..spread), y + rng.gen_range(-spread..spread)]);
                truth.push(c);
            }
        }
        (v, truth)
    }

    #[test]
    fn dense_relabeling() {
        assert_eq!(dense_labels(&["b", "a", "b", "c"]), vec![0, 1, 0, 2]);
        assert!(Partition::new(vec!["x".into(), "y".into()], vec![0, 2]).is_err());
        assert!(Partition::new(vec!["x".into(), "x".into()], vec![0, 1]).is_err());
    }

    #[test]
    fn kmeans_cases() {
        let same = vec![vec![1.0, 2.0]; 6];
        let r = kmeans(&same, 1, 0, 100).unwrap();
        assert_eq!(r.inertia(), 0.0);
        assert!(r.labels.iter().all(|&l| l == 0));

        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * i as f64]).collect();
        let r = kmeans(&pts, 7, 3, 100).unwrap();
        assert_eq!(r.labels.iter().copied().collect::<std::collections::HashSet<_>>().len(), 7);

        let (v, truth) = blobs(1, 30, &[(0.0, 0.0), (10.0, 10.0)], 1.0);
        let r = kmeans(&v, 2, 9, 100).unwrap();
        assert_eq!(ari_labels(&r.labels, &truth).unwrap(), 1.0);
        assert!(r.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(kmeans(&v, 61, 0, 10).is_err());
        assert_eq!(kmeans(&v, 2, 9, 100).unwrap(), r);
    }

    #[test]
    fn agglomerative_extremes() {
        let (v, _) = blobs(2, 5, &[(0.0, 0.0), (5.0, 0.0)], 1.0);
        let single = agglomerative(&v, Stop::Distance(0.0)).unwrap();
        assert_eq!(single, (0..10).collect::<Vec<_>>());
        let one = agglomerative(&v, Stop::Distance(f64::INFINITY)).unwrap();
        assert!(one.iter().all(|&l| l == 0));
        assert!(agglomerative(&v, Stop::Clusters(0)).is_err());
        assert!(agglomerative(&v, Stop::Distance(-1.0)).is_err());
    }

    #[test]
    fn dbscan_cases() {
        let tight = vec![vec![0.0], vec![0.1], vec![0.2], vec![0.05]];
        let r = dbscan(&tight, 1.0, 4).unwrap();
        assert_eq!((r.n_clusters, r.noise), (1, 0));
        let mut with_outlier = tight.clone();
        with_outlier.push(vec![50.0]);
        let r = dbscan(&with_outlier, 1.0, 4).unwrap();
        assert_eq!(r.labels[4], r.n_clusters);
        assert_eq!(r.noise, 1);
        assert!(dbscan(&tight, 0.0, 4).is_err());
    }

    #[test]
    fn ari_values() {
        assert_eq!(ari_labels(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // contingency all ones: index 0, expected (2·2)/6, max 2 → −0.5
        assert_eq!(ari_labels(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari_labels(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
        assert!(ari_labels(&[0], &[0, 1]).is_err());
        let p = Partition::from_raw(vec!["a".into(), "b".into(), "c".into()], &[1, 1, 2]).unwrap();
        let q = Partition::from_raw(vec!["c".into(), "a".into(), "b".into()], &[5, 7, 7]).unwrap();
        assert_eq!(adjusted_rand_index(&p, &q).unwrap(), 1.0);
        let r = Partition::from_raw(vec!["a".into(), "b".into(), "d".into()], &[0, 0, 1]).unwrap();
        assert!(adjusted_rand_index(&p, &r).is_err());
    }

    #[test]
    fn median_knn() {
        let v: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        // 1-NN distance is 1 for every point
        assert_eq!(median_knn_distance(&v, 1).unwrap(), 1.0);
        assert!(median_knn_distance(&v, 5).is_err());
    }
}
