//! Threshold grid search on a labeled validation run.
//!
//! Each validation item contributes its model confidence and whether the
//! model label was right. Outcomes are evaluated as a ROBOTIC run with a
//! perfect human: verification always ends on the true label.

use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Metrics, WorkflowCounters};
use super::Thresholds;
use crate::error::{Error, Result};

pub const DEFAULT_TARGET_HCFN: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lo: 0.5,
            hi: 1.0,
            step: 0.01,
        }
    }
}

/// `lo + i·step` for every `i` that stays within `hi` (up to rounding).
pub fn grid_points(grid: Grid) -> Result<Vec<f64>> {
    let Grid { lo, hi, step } = grid;
    if !(step > 0.0) || !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "grid needs 0 ≤ lo ≤ hi ≤ 1 and step > 0, got {grid:?}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub thresholds: Thresholds,
    pub metrics: Metrics,
    pub counters: WorkflowCounters,
    /// False when no grid point meets the HCFN target; the result then
    /// minimizes HCFN instead.
    pub feasible: bool,
    pub evaluated: usize,
}

/// Counters of a perfect-oracle ROBOTIC run with a frozen dictionary.
/// `verify_wrong` verified items get a rejection and a confirming second
/// label.
fn counters_at(t: u64, auto: u64, auto_wrong: u64, verify: u64, verify_wrong: u64) -> WorkflowCounters {
    let two_human = t - auto - verify;
    WorkflowCounters {
        a2: auto_wrong,
        b2: auto - auto_wrong,
        b1: verify,
        t,
        two_human,
        model_routed: auto + verify,
        model_routed_correct: auto - auto_wrong + verify,
        model_label_wrong: auto_wrong,
        human_estimates: verify + verify_wrong + 2 * two_human,
        verify_rejections: verify_wrong,
        multi_human_items: verify_wrong + two_human,
        ..Default::default()
    }
}

/// Finds `(θ₁, θ₂)` with `θ₁ ≤ θ₂` on the grid maximizing efficiency
/// subject to `HCFN ≤ target_hcfn`. Ties prefer the larger θ₂, then the
/// larger θ₁.
pub fn grid_search(validation: &[(f64, bool)], grid: Grid, target_hcfn: f64) -> Result<GridResult> {
    if validation.is_empty() {
        return Err(Error::InvalidArgument("grid search needs a non-empty validation set".into()));
    }
    if validation.iter().any(|(c, _)| !c.is_finite()) {
        return Err(Error::NonFinite("validation confidence".into()));
    }
    let points = grid_points(grid)?;
    let mut sorted = validation.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // wrong_prefix[i] = wrong items among the i smallest confidences
    let mut wrong_prefix = vec![0u64; sorted.len() + 1];
    for (i, (_, ok)) in sorted.iter().enumerate() {
        wrong_prefix[i + 1] = wrong_prefix[i] + u64::from(!ok);
    }
    let n = sorted.len() as u64;
    let total_wrong = wrong_prefix[sorted.len()];
    let above = |theta: f64| {
        let below = sorted.partition_point(|(c, _)| *c <= theta);
        (n - below as u64, total_wrong - wrong_prefix[below])
    };

    // better(a, b): is candidate a preferred over b
    let better = |a: &GridResult, b: &GridResult| {
        let key = |r: &GridResult| (r.thresholds.theta2, r.thresholds.theta1);
        if a.feasible != b.feasible {
            return a.feasible;
        }
        let (ea, eb) = (a.metrics.efficiency, b.metrics.efficiency);
        if !a.feasible {
            let (ha, hb) = (a.metrics.hcfn.unwrap_or(0.0), b.metrics.hcfn.unwrap_or(0.0));
            if ha != hb {
                return ha < hb;
            }
        }
        if ea != eb {
            return ea > eb;
        }
        key(a) > key(b)
    };

    let mut best: Option<GridResult> = None;
    let mut evaluated = 0;
    for (j, &t2) in points.iter().enumerate() {
        let (auto, auto_wrong) = above(t2);
        for &t1 in &points[..=j] {
            let (model, model_wrong) = above(t1);
            let counters = counters_at(n, auto, auto_wrong, model - auto, model_wrong - auto_wrong);
            let m = metrics(&counters);
            let cand = GridResult {
                thresholds: Thresholds { theta1: t1, theta2: t2 },
                metrics: m,
                counters,
                feasible: m.hcfn.unwrap_or(0.0) <= target_hcfn,
                evaluated: 0,
            };
            evaluated += 1;
            if best.as_ref().map_or(true, |b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    let mut best = best.expect("grid is non-empty");
    best.evaluated = evaluated;
    Ok(best)
}
