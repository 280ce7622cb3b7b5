//! Trains the Siamese network on MNIST digits and saves a checkpoint.
//!
//! ```bash
//! cargo run --release --example train_mnist -- data/mnist 20000 5 /tmp/mnist.ckpt
//! ```
//!
//! Arguments: IDX directory, pairs per epoch, epochs, checkpoint path.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtext::data::{load_dataset, Canvas};
use simtext::network::{save_checkpoint, train, Adadelta, Network, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let pairs_per_epoch = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4000);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "mnist.ckpt".into()));

    let mut samples = load_dataset(&dir, Canvas::DIGIT)?;
    samples.truncate(5000);
    let mut net = Network::new(NetworkSpec::for_canvas(Canvas::DIGIT), 1)?;
    let mut opt = Adadelta::with_defaults(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = TrainConfig { epochs, pairs_per_epoch };
    train(&mut net, &mut opt, &samples, config, &mut rng, |r| {
        println!("epoch {} ({} steps): mean loss {:.4}", r.epoch, r.steps, r.mean_loss)
    })?;
    save_checkpoint(&net, &out)?;
    println!("{} parameters saved to {}", net.params.parameter_count(), out.display());
    Ok(())
}
