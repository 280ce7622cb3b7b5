//! Picks the distance threshold that separates similar from dissimilar
//! pairs and reports its error rates.
//!
//! ```bash
//! cargo run --release --example similarity_threshold
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtext::data::{synthetic_corpus, Canvas, PairSampler, SyntheticStyle};
use simtext::manifold::{classify_pair, select_similarity_threshold};
use simtext::network::{euclidean, train, Adadelta, Network, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let words = ["OAK", "ELM", "FIR", "ASH", "YEW"];
    let corpus = synthetic_corpus(&words, 20, &SyntheticStyle::default(), 4, Canvas::TEXT)?;
    let mut net = Network::new(NetworkSpec::for_canvas(Canvas::TEXT), 4)?;
    let mut opt = Adadelta::with_defaults(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = TrainConfig { epochs: 1, pairs_per_epoch: 1500 };
    train(&mut net, &mut opt, &corpus, config, &mut rng, |_| {})?;

    let sampler = PairSampler::new(&corpus)?;
    let mut pairs = Vec::new();
    for i in 0..1000 {
        let p = if i % 2 == 0 { sampler.similar(&mut rng) } else { sampler.dissimilar(&mut rng) };
        let d = euclidean(&net.embed(&p.a.pixels)?.feat, &net.embed(&p.b.pixels)?.feat);
        pairs.push((d, p.y));
    }
    let choice = select_similarity_threshold(&pairs)?;
    println!("theta_sim = {:.4}", choice.theta);
    println!(
        "similar called dissimilar {:.1}%, dissimilar called similar {:.1}%, error {:.1}%",
        100.0 * choice.fp_rate,
        100.0 * choice.fn_rate,
        100.0 * choice.error
    );
    let (d, y) = pairs[0];
    println!("first pair: distance {d:.3}, truth {y:?}, predicted {:?}", classify_pair(d, choice.theta));
    Ok(())
}
