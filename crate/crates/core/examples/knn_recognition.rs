//! Labels unseen word images by their nearest neighbors in the embedding
//! space of a briefly trained network.
//!
//! ```bash
//! cargo run --release --example knn_recognition
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtext::data::{synthetic_corpus, Canvas, SyntheticStyle};
use simtext::manifold::{build_index, MajorityVote};
use simtext::network::{train, Adadelta, Network, NetworkSpec, TrainConfig};

const WORDS: [&str; 4] = ["OAK", "ELM", "FIR", "ASH"];

fn main() -> anyhow::Result<()> {
    let style = SyntheticStyle::default();
    let known = synthetic_corpus(&WORDS, 20, &style, 1, Canvas::TEXT)?;
    let unseen = synthetic_corpus(&WORDS, 5, &style, 2, Canvas::TEXT)?;

    let mut net = Network::new(NetworkSpec::for_canvas(Canvas::TEXT), 3)?;
    let mut opt = Adadelta::with_defaults(&net.params);
    let config = TrainConfig { epochs: 1, pairs_per_epoch: 1500 };
    train(&mut net, &mut opt, &known, config, &mut ChaCha8Rng::seed_from_u64(3), |_| {})?;

    let embedded: Vec<_> = known.iter().map(|s| Ok((s, net.embed(&s.pixels)?))).collect::<anyhow::Result<_>>()?;
    let index = build_index(embedded.iter().map(|(s, e)| (s.id.as_str(), e, s.label.as_str())))?;

    let mut correct = 0;
    for s in &unseen {
        let feat = net.embed(&s.pixels)?.feat;
        let weighted = index.knn_predict(&feat, 5)?;
        let majority = index.knn_predict_with(&feat, 5, &MajorityVote)?;
        correct += usize::from(weighted.label == s.label);
        println!(
            "{:>4} -> {:>4} (confidence {:.3}, majority vote {:.2}), nearest {:.3}",
            s.label, weighted.label, weighted.confidence, majority.confidence, weighted.neighbors[0].distance
        );
    }
    println!("{correct}/{} correct", unseen.len());
    Ok(())
}
