//! Interactive labeling: route each model prediction to zero, one or two
//! humans depending on its confidence, keep the KNN dictionary up to date
//! with human-confirmed labels, and account for the human effort saved.
//!
//! [`Engine`] is a resumable state machine. [`Engine::begin`] predicts and
//! routes an item; items that need a human stay pending until enough labels
//! arrive through [`Engine::submit_label`]. [`run`] drives it synchronously
//! with a [`HumanOracle`]; the HTTP service drives the same engine with live
//! annotators.

mod grid;
mod metrics;
mod oracle;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ConfidencePolicy, DistanceWeightedVote, ManifoldIndex, Prediction, DEFAULT_K};

pub use grid::{grid_points, grid_search, Grid, GridResult, DEFAULT_TARGET_HCFN};
pub use metrics::{efficiency, metrics, Metrics, MetricsSnapshot, WorkflowCounters};
pub use oracle::{HumanOracle, SimulatedOracle};

pub const AUDIT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Robotic,
    Assistive,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "robotic" => Ok(Mode::Robotic),
            "assistive" => Ok(Mode::Assistive),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
}

impl Thresholds {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta1) || !(0.0..=1.0).contains(&theta2) || theta1 > theta2 {
            return Err(Error::InvalidArgument(format!(
                "thresholds need 0 ≤ θ₁ ≤ θ₂ ≤ 1, got θ₁={theta1}, θ₂={theta2}"
            )));
        }
        Ok(Self { theta1, theta2 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Route {
    AutoAccept,
    VerifyOne,
    TwoHuman,
}

pub fn route(confidence: f64, thresholds: Thresholds, mode: Mode) -> Route {
    match mode {
        Mode::Robotic if confidence > thresholds.theta2 => Route::AutoAccept,
        _ if confidence > thresholds.theta1 => Route::VerifyOne,
        _ => Route::TwoHuman,
    }
}

/// An item to label: its feat embedding and, in simulation, the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkItem {
    pub id: String,
    pub feat: Vec<f64>,
    pub truth: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanLabel {
    pub annotator: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub schema: u32,
    pub item: String,
    pub route: Route,
    pub model_label: String,
    pub confidence: f64,
    pub human_labels: Vec<HumanLabel>,
    pub final_label: String,
    pub human_estimates: usize,
    pub dictionary_updated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

/// What an in-progress item needs next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Confirm or correct the proposed model label.
    Verify { proposed: String },
    /// Label without seeing anyone else's answer.
    Blind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Done(AuditRecord),
    Awaiting(TaskKind),
}

#[derive(Clone, Debug)]
struct Pending {
    item: WorkItem,
    prediction: Prediction,
    route: Route,
    labels: Vec<HumanLabel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub thresholds: Thresholds,
    pub mode: Mode,
    pub k: usize,
    /// Insert human-established labels into the index as they are decided.
    pub update_dictionary: bool,
}

impl EngineConfig {
    pub fn new(thresholds: Thresholds, mode: Mode) -> Self {
        Self {
            thresholds,
            mode,
            k: DEFAULT_K,
            update_dictionary: true,
        }
    }
}

pub struct Engine {
    config: EngineConfig,
    index: ManifoldIndex,
    policy: Box<dyn ConfidencePolicy>,
    counters: WorkflowCounters,
    pending: HashMap<String, Pending>,
    parked: Vec<WorkItem>,
}

impl Engine {
    pub fn new(index: ManifoldIndex, config: EngineConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if index.is_empty() {
            return Err(Error::Index("the workflow needs a non-empty dictionary".into()));
        }
        Ok(Self {
            config,
            index,
            policy: Box::new(DistanceWeightedVote),
            counters: WorkflowCounters::default(),
            pending: HashMap::new(),
            parked: Vec::new(),
        })
    }

    pub fn with_policy(mut self, policy: Box<dyn ConfidencePolicy>) -> Self {
        self.policy = policy;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn index(&self) -> &ManifoldIndex {
        &self.index
    }

    pub fn counters(&self) -> &WorkflowCounters {
        &self.counters
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot::of(&self.counters)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn is_pending(&self, item: &str) -> bool {
        self.pending.contains_key(item)
    }

    pub fn parked(&self) -> &[WorkItem] {
        &self.parked
    }

    pub fn predict(&self, feat: &[f64]) -> Result<Prediction> {
        let k = self.config.k.min(self.index.len());
        self.index.knn_predict_with(feat, k, self.policy.as_ref())
    }

    /// Predicts and routes `item`. Auto-accepted items finish immediately.
    pub fn begin(&mut self, item: WorkItem) -> Result<Step> {
        if self.pending.contains_key(&item.id) {
            return Err(Error::DuplicateId(item.id));
        }
        if self.config.update_dictionary && self.index.get(&item.id).is_some() {
            return Err(Error::DuplicateId(item.id));
        }
        let prediction = self.predict(&item.feat)?;
        let route = route(prediction.confidence, self.config.thresholds, self.config.mode);
        let p = Pending {
            item,
            prediction,
            route,
            labels: Vec::new(),
        };
        if route == Route::AutoAccept {
            let label = p.prediction.label.clone();
            return Ok(Step::Done(self.finalize(p, label, false)?));
        }
        let kind = match route {
            Route::VerifyOne => TaskKind::Verify {
                proposed: p.prediction.label.clone(),
            },
            _ => TaskKind::Blind,
        };
        self.pending.insert(p.item.id.clone(), p);
        Ok(Step::Awaiting(kind))
    }

    /// Records one human label for a pending item and advances it.
    pub fn submit_label(&mut self, item: &str, annotator: &str, label: &str) -> Result<Step> {
        let mut p = self
            .pending
            .remove(item)
            .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
        p.labels.push(HumanLabel {
            annotator: annotator.to_string(),
            label: label.to_string(),
        });
        let labels: Vec<&str> = p.labels.iter().map(|h| h.label.as_str()).collect();
        let model = p.prediction.label.as_str();
        let decision = match (p.route, labels.as_slice()) {
            (Route::VerifyOne, [a]) if *a == model => Some((model.to_string(), false)),
            (Route::VerifyOne, [_]) => None,
            (Route::VerifyOne, [a, b]) if a == b => Some((a.to_string(), true)),
            (Route::VerifyOne, [_, _]) => Some((model.to_string(), false)),
            (Route::TwoHuman, [_]) => None,
            (Route::TwoHuman, [a, b]) if a == b => Some((a.to_string(), true)),
            (Route::TwoHuman, [_, _]) => None,
            (Route::TwoHuman, [a, b, c]) => {
                let winner = if a == b || a == c { a } else { c };
                Some((winner.to_string(), true))
            }
            _ => unreachable!("route {:?} with {} labels", p.route, labels.len()),
        };
        match decision {
            Some((final_label, update)) => Ok(Step::Done(self.finalize(p, final_label, update)?)),
            None => {
                self.pending.insert(item.to_string(), p);
                Ok(Step::Awaiting(TaskKind::Blind))
            }
        }
    }

    /// Withdraws a pending item after an oracle failure. It is not counted.
    pub fn park(&mut self, item: &str) -> Result<()> {
        let p = self
            .pending
            .remove(item)
            .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
        self.parked.push(p.item);
        Ok(())
    }

    fn finalize(&mut self, p: Pending, final_label: String, human_decided: bool) -> Result<AuditRecord> {
        let mut dictionary_updated = false;
        if human_decided && self.config.update_dictionary {
            self.index.insert(p.item.id.clone(), p.item.feat.clone(), final_label.clone())?;
            dictionary_updated = true;
            self.counters.dictionary_updates += 1;
        }

        let c = &mut self.counters;
        c.t += 1;
        c.human_estimates += p.labels.len() as u64;
        let reference = p.item.truth.as_deref().unwrap_or(&final_label);
        let final_correct = final_label == reference;
        match p.route {
            Route::AutoAccept => {
                if final_correct {
                    c.b2 += 1
                } else {
                    c.a2 += 1
                }
            }
            Route::VerifyOne => {
                if final_correct {
                    c.b1 += 1
                } else {
                    c.a1 += 1
                }
                if p.labels[0].label != p.prediction.label {
                    c.verify_rejections += 1;
                }
            }
            Route::TwoHuman => c.two_human += 1,
        }
        if p.route != Route::TwoHuman {
            c.model_routed += 1;
            if final_correct {
                c.model_routed_correct += 1;
            } else if final_label == p.prediction.label {
                c.model_label_wrong += 1;
            }
        }
        if p.labels.len() >= 2 {
            c.multi_human_items += 1;
            if p.labels.iter().any(|h| h.label != p.labels[0].label) {
                c.human_disagreements += 1;
            }
        }

        Ok(AuditRecord {
            schema: AUDIT_SCHEMA_VERSION,
            item: p.item.id,
            route: p.route,
            model_label: p.prediction.label,
            confidence: p.prediction.confidence,
            human_estimates: p.labels.len(),
            human_labels: p.labels,
            final_label,
            dictionary_updated,
            truth: p.item.truth,
        })
    }
}

/// Runs one item to completion against `oracle`. Returns `None` if the
/// oracle failed and the item was parked.
pub fn process_item(engine: &mut Engine, item: WorkItem, oracle: &mut dyn HumanOracle) -> Result<Option<AuditRecord>> {
    let probe = item.clone();
    let mut step = engine.begin(item)?;
    let mut asked = 0;
    loop {
        match step {
            Step::Done(record) => return Ok(Some(record)),
            Step::Awaiting(_) => match oracle.label(&probe, asked) {
                Ok(label) => {
                    let annotator = oracle.annotator_id(asked);
                    asked += 1;
                    step = engine.submit_label(&probe.id, &annotator, &label)?;
                }
                Err(_) => {
                    engine.park(&probe.id)?;
                    return Ok(None);
                }
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub counters: WorkflowCounters,
    pub records: Vec<AuditRecord>,
    pub parked: Vec<String>,
}

/// Streams `items` through the engine in order.
pub fn run(
    engine: &mut Engine,
    items: impl IntoIterator<Item = WorkItem>,
    oracle: &mut dyn HumanOracle,
) -> Result<RunReport> {
    let mut records = Vec::new();
    let mut parked = Vec::new();
    for item in items {
        let id = item.id.clone();
        match process_item(engine, item, oracle)? {
            Some(r) => records.push(r),
            None => parked.push(id),
        }
    }
    Ok(RunReport {
        counters: *engine.counters(),
        records,
        parked,
    })
}

pub fn write_audit_jsonl<W: Write>(records: &[AuditRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).expect("audit records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io("<audit>", e))?;
    }
    Ok(())
}

pub fn read_audit_jsonl<R: BufRead>(input: R) -> Result<Vec<AuditRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<audit>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AuditRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: "<audit>".into(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if r.schema != AUDIT_SCHEMA_VERSION {
            return Err(Error::Manifest {
                path: "<audit>".into(),
                line: i + 1,
                reason: format!("unsupported audit schema {}", r.schema),
            });
        }
        out.push(r);
    }
    Ok(out)
}
