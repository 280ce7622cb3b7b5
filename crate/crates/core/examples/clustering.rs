//! Clusters word embeddings three ways and scores each against the truth
//! with the adjusted Rand index.
//!
//! ```bash
//! cargo run --release --example clustering
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtext::cluster::{agglomerative, ari_labels, dbscan, dense_labels, kmeans, median_knn_distance, Stop, DBSCAN_MIN_PTS};
use simtext::data::{synthetic_corpus, Canvas, SyntheticStyle};
use simtext::network::{train, Adadelta, Network, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let words = ["OAK", "ELM", "FIR"];
    let style = SyntheticStyle::default();
    let train_set = synthetic_corpus(&words, 20, &style, 1, Canvas::TEXT)?;
    let mut net = Network::new(NetworkSpec::for_canvas(Canvas::TEXT), 2)?;
    let mut opt = Adadelta::with_defaults(&net.params);
    let config = TrainConfig { epochs: 1, pairs_per_epoch: 1500 };
    train(&mut net, &mut opt, &train_set, config, &mut ChaCha8Rng::seed_from_u64(2), |_| {})?;

    let samples = synthetic_corpus(&words, 30, &style, 5, Canvas::TEXT)?;
    let vectors: Vec<Vec<f64>> = samples.iter().map(|s| Ok(net.embed(&s.pixels)?.feat)).collect::<anyhow::Result<_>>()?;
    let truth = dense_labels(&samples.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());

    let km = kmeans(&vectors, 3, 0, 100)?;
    println!("k-means       ARI {:.3} (inertia {:.3})", ari_labels(&km.labels, &truth)?, km.inertia());
    let ag = agglomerative(&vectors, Stop::Clusters(3))?;
    println!("agglomerative ARI {:.3}", ari_labels(&ag, &truth)?);
    let eps = median_knn_distance(&vectors, 4)?;
    let db = dbscan(&vectors, eps, DBSCAN_MIN_PTS)?;
    println!("dbscan        ARI {:.3} ({} clusters, {} noise, eps {eps:.3})", ari_labels(&db.labels, &truth)?, db.n_clusters, db.noise);
    Ok(())
}
