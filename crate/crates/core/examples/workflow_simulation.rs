//! Runs the labeling workflow in both modes against a simulated annotator
//! and prints the effort and error metrics.
//!
//! ```bash
//! cargo run --release --example workflow_simulation
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtext::data::{synthetic_corpus, Canvas, SyntheticStyle};
use simtext::manifold::build_index;
use simtext::network::{train, Adadelta, Network, NetworkSpec, TrainConfig};
use simtext::workflow::{run, Engine, EngineConfig, Mode, SimulatedOracle, Thresholds, WorkItem};

const WORDS: [&str; 4] = ["OAK", "ELM", "FIR", "ASH"];

fn main() -> anyhow::Result<()> {
    let style = SyntheticStyle::default();
    let known = synthetic_corpus(&WORDS, 20, &style, 1, Canvas::TEXT)?;
    let incoming = synthetic_corpus(&WORDS, 15, &style, 2, Canvas::TEXT)?;

    let mut net = Network::new(NetworkSpec::for_canvas(Canvas::TEXT), 3)?;
    let mut opt = Adadelta::with_defaults(&net.params);
    let config = TrainConfig { epochs: 1, pairs_per_epoch: 1500 };
    train(&mut net, &mut opt, &known, config, &mut ChaCha8Rng::seed_from_u64(3), |_| {})?;

    let embedded: Vec<_> = known.iter().map(|s| Ok((s, net.embed(&s.pixels)?))).collect::<anyhow::Result<_>>()?;
    let index = build_index(embedded.iter().map(|(s, e)| (s.id.as_str(), e, s.label.as_str())))?;
    let items: Vec<WorkItem> = incoming
        .iter()
        .map(|s| {
            Ok(WorkItem {
                id: format!("new/{}", s.id),
                feat: net.embed(&s.pixels)?.feat,
                truth: Some(s.label.clone()),
            })
        })
        .collect::<anyhow::Result<_>>()?;

    for mode in [Mode::Robotic, Mode::Assistive] {
        let mut engine = Engine::new(index.clone(), EngineConfig::new(Thresholds::new(0.8, 0.95)?, mode))?;
        let mut oracle = SimulatedOracle::new(0.05, 9, WORDS.iter().map(|w| w.to_string()))?;
        let report = run(&mut engine, items.clone(), &mut oracle)?;
        let wrong = report.records.iter().filter(|r| r.truth.as_ref() != Some(&r.final_label)).count();
        let m = simtext::workflow::metrics(&report.counters);
        println!("{mode:?}: {} items, {} human labels, {wrong} wrong finals", report.counters.t, report.counters.human_estimates);
        println!("  {}", serde_json::to_string(&m)?);
        println!("  dictionary holds {} entries", engine.index().len());
    }
    Ok(())
}
