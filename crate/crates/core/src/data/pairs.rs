use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::ImageSample;
use crate::error::{Error, Result};

/// Pair indicator in the contrastive-loss convention: `Y = 0` for a similar
/// pair, `Y = 1` for a dissimilar one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Similar,
    Dissimilar,
}

impl PairLabel {
    pub fn y(self) -> f64 {
        match self {
            PairLabel::Similar => 0.0,
            PairLabel::Dissimilar => 1.0,
        }
    }

    pub fn of(a: &ImageSample, b: &ImageSample) -> Self {
        if a.label == b.label {
            PairLabel::Similar
        } else {
            PairLabel::Dissimilar
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PairExample<'a> {
    pub a: &'a ImageSample,
    pub b: &'a ImageSample,
    pub y: PairLabel,
}

/// Pairs per minibatch with each indicator value.
pub const PAIRS_PER_KIND: usize = 5;

/// Precomputed label groups for drawing balanced pair minibatches.
#[derive(Clone, Debug)]
pub struct PairSampler<'a> {
    samples: &'a [ImageSample],
    groups: Vec<Vec<usize>>,
    eligible: Vec<usize>,
}

impl<'a> PairSampler<'a> {
    pub fn new(samples: &'a [ImageSample]) -> Result<Self> {
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            by_label.entry(s.label.as_str()).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = by_label.into_values().collect();
        if groups.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "pair sampling needs at least 2 labels, dataset has {}",
                groups.len()
            )));
        }
        let eligible: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].len() >= 2).collect();
        if eligible.is_empty() {
            return Err(Error::InvalidArgument(
                "pair sampling needs a label with at least 2 samples".into(),
            ));
        }
        Ok(Self {
            samples,
            groups,
            eligible,
        })
    }

    pub fn label_count(&self) -> usize {
        self.groups.len()
    }

    /// A similar pair: a uniformly chosen label with ≥ 2 samples, then two
    /// distinct samples from it.
    pub fn similar<R: Rng + ?Sized>(&self, rng: &mut R) -> PairExample<'a> {
        let g = &self.groups[*self.eligible.choose(rng).expect("non-empty")];
        let picked: Vec<&usize> = g.choose_multiple(rng, 2).collect();
        PairExample {
            a: &self.samples[*picked[0]],
            b: &self.samples[*picked[1]],
            y: PairLabel::Similar,
        }
    }

    /// A dissimilar pair: two distinct labels chosen uniformly, then one
    /// sample from each.
    pub fn dissimilar<R: Rng + ?Sized>(&self, rng: &mut R) -> PairExample<'a> {
        let labels: Vec<usize> = (0..self.groups.len()).collect();
        let picked: Vec<&usize> = labels.choose_multiple(rng, 2).collect();
        let a = *self.groups[*picked[0]].choose(rng).expect("non-empty group");
        let b = *self.groups[*picked[1]].choose(rng).expect("non-empty group");
        PairExample {
            a: &self.samples[a],
            b: &self.samples[b],
            y: PairLabel::Dissimilar,
        }
    }

    /// Five similar pairs followed by five dissimilar pairs.
    pub fn minibatch<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PairExample<'a>> {
        let mut batch = Vec::with_capacity(2 * PAIRS_PER_KIND);
        for _ in 0..PAIRS_PER_KIND {
            batch.push(self.similar(rng));
        }
        for _ in 0..PAIRS_PER_KIND {
            batch.push(self.dissimilar(rng));
        }
        batch
    }
}

/// One balanced minibatch of 10 pairs (5 similar, 5 dissimilar).
pub fn sample_pair_minibatch<'a, R: Rng + ?Sized>(
    samples: &'a [ImageSample],
    rng: &mut R,
) -> Result<Vec<PairExample<'a>>> {
    Ok(PairSampler::new(samples)?.minibatch(rng))
}
