//! Brute-force oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use std::collections::HashMap;

use simtext::data::PairLabel;
use simtext::manifold::{ConfidencePolicy, Entry, ManifoldIndex, Neighbor, ThresholdChoice};
use simtext::workflow::{
    grid_points, run, Engine, EngineConfig, Grid, Metrics, Mode, SimulatedOracle, Thresholds, WorkItem,
    WorkflowCounters,
};

/// Every candidate threshold scored by a direct count over all pairs.
pub fn brute_threshold(pairs: &[(f64, PairLabel)]) -> ThresholdChoice {
    let mut ds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    let mut cands = vec![ds[0] - 1.0];
    for i in 1..ds.len() {
        cands.push((ds[i - 1] + ds[i]) / 2.0);
    }
    cands.push(ds[ds.len() - 1]);

    let similar = pairs.iter().filter(|p| p.1 == PairLabel::Similar).count();
    let dissimilar = pairs.len() - similar;
    let mut best: Option<ThresholdChoice> = None;
    for theta in cands {
        let mut fp = 0;
        let mut fneg = 0;
        for &(d, y) in pairs {
            let predicted_similar = d <= theta;
            match y {
                PairLabel::Similar if !predicted_similar => fp += 1,
                PairLabel::Dissimilar if predicted_similar => fneg += 1,
                _ => {}
            }
        }
        let fp_rate = fp as f64 / similar as f64;
        let fn_rate = fneg as f64 / dissimilar as f64;
        let c = ThresholdChoice {
            theta,
            fp_rate,
            fn_rate,
            objective: 0.9 * fn_rate + 0.1 * fp_rate,
            error: (fp + fneg) as f64 / pairs.len() as f64,
        };
        let replace = match &best {
            None => true,
            Some(b) => c.objective < b.objective || (c.objective == b.objective && c.theta < b.theta),
        };
        if replace {
            best = Some(c);
        }
    }
    best.unwrap()
}

/// Reports a preset confidence for the nearest entry, keyed by its id.
struct Table(HashMap<String, f64>);

impl ConfidencePolicy for Table {
    fn vote(&self, neighbors: &[Neighbor]) -> (String, f64) {
        let n = &neighbors[0];
        (n.label.clone(), self.0[&n.id])
    }
}

/// Runs the real engine (ROBOTIC, perfect oracle, frozen dictionary) on
/// items whose model confidence and correctness are given.
pub fn engine_counters(validation: &[(f64, bool)], th: Thresholds) -> WorkflowCounters {
    let entries = (0..validation.len()).map(|i| Entry {
        id: format!("e{i}"),
        feat: vec![i as f64 * 1000.0],
        label: format!("L{i}"),
    });
    let index = ManifoldIndex::from_entries(entries).unwrap();
    let table = validation
        .iter()
        .enumerate()
        .map(|(i, (c, _))| (format!("e{i}"), *c))
        .collect();
    let mut config = EngineConfig::new(th, Mode::Robotic);
    config.k = 1;
    config.update_dictionary = false;
    let mut engine = Engine::new(index, config).unwrap().with_policy(Box::new(Table(table)));
    let items: Vec<WorkItem> = validation
        .iter()
        .enumerate()
        .map(|(i, (_, ok))| WorkItem {
            id: format!("q{i}"),
            feat: vec![i as f64 * 1000.0],
            truth: Some(if *ok { format!("L{i}") } else { "wrong".into() }),
        })
        .collect();
    run(&mut engine, items, &mut SimulatedOracle::perfect()).unwrap().counters
}

/// Evaluates every grid pair through the engine and applies the selection
/// rule directly.
pub fn brute_grid(validation: &[(f64, bool)], grid: Grid, target: f64) -> (Thresholds, Metrics, bool) {
    let points = grid_points(grid).unwrap();
    let mut all = Vec::new();
    for (j, &t2) in points.iter().enumerate() {
        for &t1 in &points[..=j] {
            let th = Thresholds { theta1: t1, theta2: t2 };
            let m = simtext::workflow::metrics(&engine_counters(validation, th));
            all.push((th, m));
        }
    }
    let hcfn = |m: &Metrics| m.hcfn.unwrap_or(0.0);
    let feasible: Vec<_> = all.iter().filter(|(_, m)| hcfn(m) <= target).collect();
    let pool: Vec<_> = if feasible.is_empty() {
        let min = all.iter().map(|(_, m)| hcfn(m)).fold(f64::INFINITY, f64::min);
        all.iter().filter(|(_, m)| hcfn(m) == min).collect()
    } else {
        feasible.clone()
    };
    let best_eff = pool.iter().map(|(_, m)| m.efficiency).fold(f64::NEG_INFINITY, f64::max);
    let (th, m) = pool
        .into_iter()
        .filter(|(_, m)| m.efficiency == best_eff)
        .max_by(|a, b| {
            (a.0.theta2, a.0.theta1)
                .partial_cmp(&(b.0.theta2, b.0.theta1))
                .unwrap()
        })
        .unwrap();
    (*th, *m, !feasible.is_empty())
}

/// ARI from the four pair counts over all item pairs.
pub fn brute_ari(p: &[usize], q: &[usize]) -> f64 {
    let n = p.len();
    let (mut a, mut b, mut c, mut d) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            match (p[i] == p[j], q[i] == q[j]) {
                (true, true) => a += 1,
                (true, false) => b += 1,
                (false, true) => c += 1,
                (false, false) => d += 1,
            }
        }
    }
    let num = 2 * (a * d - b * c);
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub mod pipeline;
