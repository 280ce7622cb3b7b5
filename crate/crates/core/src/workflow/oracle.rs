use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WorkItem;
use crate::error::{Error, Result};

/// Source of human labels. `annotator` is the position of the requested
/// label within the item (0 for the first human, 1 for the second, ...).
pub trait HumanOracle {
    fn annotator_id(&self, annotator: usize) -> String {
        format!("sim-{annotator}")
    }

    fn label(&mut self, item: &WorkItem, annotator: usize) -> Result<String>;
}

/// Answers from ground truth, replacing it with a different vocabulary label
/// at a fixed per-annotator error rate. Answers depend only on
/// `(seed, item id, annotator)`.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    pub error_rate: f64,
    pub seed: u64,
    vocabulary: Vec<String>,
}

impl SimulatedOracle {
    pub fn new(error_rate: f64, seed: u64, vocabulary: impl IntoIterator<Item = String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&error_rate) {
            return Err(Error::InvalidArgument(format!(
                "oracle error rate must lie in [0, 1], got {error_rate}"
            )));
        }
        let mut vocabulary: Vec<String> = vocabulary.into_iter().collect();
        vocabulary.sort();
        vocabulary.dedup();
        Ok(Self {
            error_rate,
            seed,
            vocabulary,
        })
    }

    pub fn perfect() -> Self {
        Self {
            error_rate: 0.0,
            seed: 0,
            vocabulary: Vec::new(),
        }
    }

    fn stream(&self, item: &str, annotator: usize) -> ChaCha8Rng {
        // FNV-1a over the item id, mixed with the seed and annotator slot
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in item.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(h ^ self.seed.rotate_left(17) ^ (annotator as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

impl HumanOracle for SimulatedOracle {
    fn label(&mut self, item: &WorkItem, annotator: usize) -> Result<String> {
        let truth = item.truth.as_ref().ok_or_else(|| Error::Oracle {
            item: item.id.clone(),
            reason: "no ground truth to simulate from".into(),
        })?;
        if self.error_rate == 0.0 {
            return Ok(truth.clone());
        }
        let mut rng = self.stream(&item.id, annotator);
        if !rng.gen_bool(self.error_rate) {
            return Ok(truth.clone());
        }
        let others: Vec<&String> = self.vocabulary.iter().filter(|l| *l != truth).collect();
        Ok(if others.is_empty() {
            format!("{truth}?")
        } else {
            others[rng.gen_range(0..others.len())].clone()
        })
    }
}
