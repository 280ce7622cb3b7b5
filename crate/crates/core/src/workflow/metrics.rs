use serde::{Deserialize, Serialize};

/// Tallies of one workflow run.
///
/// `a2`/`b2` count auto-accepted items whose label was wrong/right, `a1`/`b1`
/// count items routed to single verification whose final label was
/// wrong/right, and `t` counts every finalized item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowCounters {
    pub a1: u64,
    pub b1: u64,
    pub a2: u64,
    pub b2: u64,
    pub t: u64,
    /// Items routed to two blind labels.
    pub two_human: u64,
    /// Auto-accepted plus verification-routed items.
    pub model_routed: u64,
    /// Model-routed items whose final label is correct.
    pub model_routed_correct: u64,
    /// Model-routed items finalized with a wrong model label.
    pub model_label_wrong: u64,
    pub human_estimates: u64,
    /// Verifications where the first human rejected the model label.
    pub verify_rejections: u64,
    /// Items that collected at least two human labels.
    pub multi_human_items: u64,
    /// Items whose human labels were not unanimous.
    pub human_disagreements: u64,
    pub dictionary_updates: u64,
}

/// Derived ratios. Ratios whose denominator is zero are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub efficiency: f64,
    pub ac: Option<f64>,
    pub hcac: Option<f64>,
    pub hvac: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_rate: Option<f64>,
    pub hcfn: Option<f64>,
    pub disagreement_rate: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Saved human effort relative to labeling every item twice:
/// `((A₁+B₁)/2 + A₂ + B₂) / T`, reported as 0 for an empty run.
pub fn efficiency(c: &WorkflowCounters) -> f64 {
    if c.t == 0 {
        return 0.0;
    }
    ((c.a1 + c.b1) as f64 / 2.0 + (c.a2 + c.b2) as f64) / c.t as f64
}

pub fn metrics(c: &WorkflowCounters) -> Metrics {
    Metrics {
        efficiency: efficiency(c),
        ac: ratio(c.model_routed_correct, c.model_routed),
        hcac: ratio(c.b2, c.a2 + c.b2),
        hvac: ratio(c.b1, c.a1 + c.b1),
        fn_rate: ratio(c.model_label_wrong, c.model_routed),
        hcfn: ratio(c.a2, c.t),
        disagreement_rate: ratio(c.human_disagreements, c.multi_human_items),
    }
}

/// Metrics plus the raw counters they were derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub metrics: Metrics,
    pub counters: WorkflowCounters,
}

impl MetricsSnapshot {
    pub fn of(counters: &WorkflowCounters) -> Self {
        Self {
            metrics: metrics(counters),
            counters: *counters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_by_substitution() {
        let c = WorkflowCounters {
            a1: 2,
            b1: 2,
            a2: 3,
            b2: 3,
            t: 10,
            ..Default::default()
        };
        assert_eq!(efficiency(&c), 0.8);
    }

    #[test]
    fn empty_run_reports_zero_and_absent_ratios() {
        let m = metrics(&WorkflowCounters::default());
        assert_eq!(m.efficiency, 0.0);
        assert_eq!(m.hcfn, None);
        assert_eq!(m.ac, None);
        let json = serde_json::to_value(m).unwrap();
        assert!(json["hcac"].is_null());
        assert!(json.get("fn").is_some());
    }

    #[test]
    fn all_auto_accepted_correct() {
        let c = WorkflowCounters {
            b2: 7,
            t: 7,
            model_routed: 7,
            model_routed_correct: 7,
            ..Default::default()
        };
        let m = metrics(&c);
        assert_eq!((m.efficiency, m.hcac, m.hcfn), (1.0, Some(1.0), Some(0.0)));
    }

    #[test]
    fn moving_b1_to_b2_adds_half_over_t() {
        let before = WorkflowCounters {
            b1: 4,
            b2: 1,
            t: 8,
            ..Default::default()
        };
        let after = WorkflowCounters {
            b1: 3,
            b2: 2,
            ..before
        };
        assert!((efficiency(&after) - efficiency(&before) - 0.5 / 8.0).abs() < 1e-15);
    }
}
