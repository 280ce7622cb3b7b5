use serde::{Deserialize, Serialize};

use crate::data::PairLabel;
use crate::error::{Error, Result};

/// Weight of the false-negative rate in the selection objective.
const FN_WEIGHT: f64 = 0.9;
const FP_WEIGHT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub theta: f64,
    /// Similar pairs predicted dissimilar, over all similar pairs.
    pub fp_rate: f64,
    /// Dissimilar pairs predicted similar, over all dissimilar pairs.
    pub fn_rate: f64,
    pub objective: f64,
    /// Misclassified pairs over all pairs.
    pub error: f64,
}

/// Candidate thresholds in ascending order: one below the smallest distance,
/// the midpoints between consecutive distinct distances, and the largest
/// distance.
pub fn threshold_candidates(distances: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = distances.to_vec();
    d.sort_by(f64::total_cmp);
    d.dedup();
    let Some(&first) = d.first() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(d.len() + 1);
    out.push(first - 1.0);
    out.extend(d.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(*d.last().expect("non-empty"));
    out
}

fn choice(theta: f64, fp: usize, fneg: usize, similar: usize, dissimilar: usize) -> ThresholdChoice {
    let fp_rate = fp as f64 / similar as f64;
    let fn_rate = fneg as f64 / dissimilar as f64;
    ThresholdChoice {
        theta,
        fp_rate,
        fn_rate,
        objective: FN_WEIGHT * fn_rate + FP_WEIGHT * fp_rate,
        error: (fp + fneg) as f64 / (similar + dissimilar) as f64,
    }
}

/// Picks the threshold minimizing `0.9·FN + 0.1·FP` over
/// [`threshold_candidates`]; ties go to the smaller threshold.
pub fn select_similarity_threshold(pairs: &[(f64, PairLabel)]) -> Result<ThresholdChoice> {
    if pairs.iter().any(|(d, _)| !d.is_finite()) {
        return Err(Error::NonFinite("pair distance".into()));
    }
    let similar = pairs.iter().filter(|(_, y)| *y == PairLabel::Similar).count();
    let dissimilar = pairs.len() - similar;
    if similar == 0 || dissimilar == 0 {
        return Err(Error::InvalidArgument(
            "threshold selection needs both similar and dissimilar pairs".into(),
        ));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let candidates = threshold_candidates(&sorted.iter().map(|p| p.0).collect::<Vec<_>>());

    // sweep: pairs with d ≤ θ are predicted similar
    let (mut sim_below, mut dis_below, mut next) = (0usize, 0usize, 0usize);
    let mut best: Option<ThresholdChoice> = None;
    for theta in candidates {
        while next < sorted.len() && sorted[next].0 <= theta {
            match sorted[next].1 {
                PairLabel::Similar => sim_below += 1,
                PairLabel::Dissimilar => dis_below += 1,
            }
            next += 1;
        }
        let c = choice(theta, similar - sim_below, dis_below, similar, dissimilar);
        if best.map_or(true, |b| c.objective < b.objective) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least two candidates"))
}
