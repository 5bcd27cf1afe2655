//! Multi-replica output arbitration.
//!
//! `M + 2` replicas run identical software on identical inputs; their outputs
//! are clustered under a comparison relation and the largest cluster wins if
//! it is a strict plurality of at least two. Up to `M` corrupted replicas are
//! masked as long as their outputs differ from each other.
//!
//! Static mode votes on checkpoints of a deterministic computation and
//! permanently excludes dissenters. Dynamic mode votes once per control
//! period and holds the previous command when quorum is lost.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Comparison {
    /// Bitwise equality of every component.
    Exact,
    /// Max-norm distance to the cluster representative at most `epsilon`.
    Tolerance { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Granularity {
    FinalOnly,
    PerStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbiterConfig {
    pub faults_to_catch: usize,
    pub replica_count: usize,
    pub mode: Mode,
    pub comparison: Comparison,
    pub granularity: Granularity,
    /// Dynamic mode only: exclude dissenters for the rest of the run, as
    /// static mode always does.
    #[serde(default)]
    pub exclude_dissenters: bool,
}

/// Builds a configuration with `M + 2` replicas.
pub fn make_config(
    faults_to_catch: usize,
    mode: Mode,
    comparison: Comparison,
    granularity: Granularity,
) -> Result<ArbiterConfig> {
    if faults_to_catch < 1 {
        return Err(Error::FaultsToCatch(faults_to_catch));
    }
    if let Comparison::Tolerance { epsilon } = comparison {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Epsilon(epsilon));
        }
    }
    Ok(ArbiterConfig {
        faults_to_catch,
        replica_count: faults_to_catch + 2,
        mode,
        comparison,
        granularity,
        exclude_dissenters: false,
    })
}

impl ArbiterConfig {
    pub fn validate(&self) -> Result<()> {
        let rebuilt = make_config(
            self.faults_to_catch,
            self.mode,
            self.comparison,
            self.granularity,
        )?;
        if rebuilt.replica_count != self.replica_count {
            return Err(Error::ReplicaCount {
                expected: rebuilt.replica_count,
                got: self.replica_count,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaOutput {
    pub replica_id: usize,
    pub payload: Vec<f64>,
    pub stage_label: String,
    /// Control step (dynamic) or checkpoint ordinal (static).
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    /// Winning value; empty when quorum failed and no fallback value exists.
    pub arbitrated: Vec<f64>,
    pub agreeing_set: BTreeSet<usize>,
    pub dissenting_set: BTreeSet<usize>,
    pub quorum_met: bool,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    /// Dissenters outvoted; the majority value was issued.
    Masked,
    /// Dissenters outvoted and removed from later votes.
    Excluded,
    /// No quorum; the previous arbitrated value was held.
    HeldPrevious,
    /// No quorum in static mode; the run was abandoned.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub step: usize,
    pub label: String,
    pub dissenters: Vec<usize>,
    /// Largest max-norm distance of an active dissenter from the issued
    /// value. `None` when not finite or when nothing was issued.
    pub max_deviation: Option<f64>,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub events: Vec<FaultEvent>,
}

impl FaultReport {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(FaultReport { events })
    }

    fn log(&mut self, step: usize, label: &str, vote: &VoteResult, deviation: Option<f64>, action: Action) {
        self.events.push(FaultEvent {
            step,
            label: label.to_string(),
            dissenters: vote.dissenting_set.iter().copied().collect(),
            max_deviation: deviation,
            action,
        });
    }
}

fn max_norm_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(d)
        }
    })
}

fn matches(cmp: Comparison, a: &[f64], b: &[f64]) -> bool {
    match cmp {
        Comparison::Exact => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
        // NaN distances compare false and never join a cluster.
        Comparison::Tolerance { epsilon } => a.len() == b.len() && max_norm_distance(a, b) <= epsilon,
    }
}

/// Component-wise median. Even-sized clusters take the midpoint of the two
/// middle values.
fn median(members: &[&[f64]]) -> Vec<f64> {
    let len = members[0].len();
    let mut column = Vec::with_capacity(members.len());
    (0..len)
        .map(|j| {
            column.clear();
            column.extend(members.iter().map(|m| m[j]));
            column.sort_by(f64::total_cmp);
            let n = column.len();
            if n % 2 == 1 {
                column[n / 2]
            } else {
                let (a, b) = (column[n / 2 - 1], column[n / 2]);
                if a.to_bits() == b.to_bits() {
                    a
                } else {
                    a + (b - a) / 2.0
                }
            }
        })
        .collect()
}

/// Core tally. `items` are `(replica, payload)` for the replicas taking part;
/// a `None` payload (missing or malformed) never agrees with anyone.
/// `all` is every replica id, so excluded replicas end up dissenting.
fn tally(items: &[(usize, Option<&[f64]>)], all: &BTreeSet<usize>, cmp: Comparison) -> VoteResult {
    let mut clusters: Vec<Vec<(usize, &[f64])>> = Vec::new();
    for &(id, payload) in items {
        let Some(p) = payload else { continue };
        match clusters.iter_mut().find(|c| matches(cmp, c[0].1, p)) {
            Some(c) => c.push((id, p)),
            None => clusters.push(vec![(id, p)]),
        }
    }
    let best = clusters.iter().map(Vec::len).max().unwrap_or(0);
    let winners: Vec<&Vec<(usize, &[f64])>> = clusters.iter().filter(|c| c.len() == best).collect();
    if best >= 2 && winners.len() == 1 {
        let win = winners[0];
        let agreeing: BTreeSet<usize> = win.iter().map(|(id, _)| *id).collect();
        let payloads: Vec<&[f64]> = win.iter().map(|(_, p)| *p).collect();
        let arbitrated = match cmp {
            Comparison::Exact => payloads[0].to_vec(),
            Comparison::Tolerance { .. } => median(&payloads),
        };
        VoteResult {
            arbitrated,
            dissenting_set: all.difference(&agreeing).copied().collect(),
            agreeing_set: agreeing,
            quorum_met: true,
            fallback_used: false,
        }
    } else {
        VoteResult {
            arbitrated: Vec::new(),
            agreeing_set: BTreeSet::new(),
            dissenting_set: all.clone(),
            quorum_met: false,
            fallback_used: true,
        }
    }
}

fn deviation(items: &[(usize, Option<&[f64]>)], vote: &VoteResult, issued: &[f64]) -> Option<f64> {
    if issued.is_empty() {
        return None;
    }
    let mut worst: Option<f64> = Some(0.0);
    let mut any = false;
    for &(id, payload) in items {
        if !vote.dissenting_set.contains(&id) {
            continue;
        }
        any = true;
        let d = match payload {
            Some(p) if p.len() == issued.len() => max_norm_distance(p, issued),
            _ => f64::INFINITY,
        };
        worst = match worst {
            Some(w) if d.is_finite() => Some(w.max(d)),
            _ => None,
        };
    }
    if any {
        worst
    } else {
        None
    }
}

fn check_structure(outputs: &[ReplicaOutput], config: &ArbiterConfig) -> Result<Vec<usize>> {
    if outputs.len() != config.replica_count {
        return Err(Error::ReplicaCount {
            expected: config.replica_count,
            got: outputs.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for o in outputs {
        if o.replica_id >= config.replica_count {
            return Err(Error::ReplicaId {
                id: o.replica_id,
                count: config.replica_count,
            });
        }
        if !seen.insert(o.replica_id) {
            return Err(Error::DuplicateReplica(o.replica_id));
        }
    }
    let first = &outputs[0];
    for o in outputs {
        if o.stage_label != first.stage_label || o.step_index != first.step_index {
            return Err(Error::StepMismatch(format!(
                "replica {} at ({}, {}) vs replica {} at ({}, {})",
                o.replica_id, o.stage_label, o.step_index, first.replica_id, first.stage_label, first.step_index
            )));
        }
        if o.payload.len() != first.payload.len() {
            return Err(Error::PayloadLength {
                replica: o.replica_id,
                expected: first.payload.len(),
                got: o.payload.len(),
            });
        }
    }
    // Order-insensitive: cluster in replica-id order.
    let mut order: Vec<usize> = (0..outputs.len()).collect();
    order.sort_by_key(|&i| outputs[i].replica_id);
    Ok(order)
}

/// Votes on one set of replica outputs.
///
/// Clusters are formed in replica-id order with the first member as the
/// representative. The result does not depend on the order of `outputs`.
pub fn vote(outputs: &[ReplicaOutput], config: &ArbiterConfig) -> Result<VoteResult> {
    vote_excluding(outputs, config, &BTreeSet::new())
}

fn vote_excluding(
    outputs: &[ReplicaOutput],
    config: &ArbiterConfig,
    excluded: &BTreeSet<usize>,
) -> Result<VoteResult> {
    let order = check_structure(outputs, config)?;
    let all: BTreeSet<usize> = (0..config.replica_count).collect();
    let items: Vec<(usize, Option<&[f64]>)> = order
        .iter()
        .map(|&i| &outputs[i])
        .filter(|o| !excluded.contains(&o.replica_id))
        .map(|o| (o.replica_id, Some(o.payload.as_slice())))
        .collect();
    Ok(tally(&items, &all, config.comparison))
}

/// A deterministic computation that can be run once per replica.
pub trait ReplicatedTask: Sync {
    fn run(&self, replica: usize) -> ReplicaRun;
}

/// Everything one replica produced: ordered checkpoints and the final output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicaRun {
    pub checkpoints: Vec<Checkpoint>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub label: String,
    pub step: usize,
    pub payload: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticOutcome {
    pub output: Vec<f64>,
    pub report: FaultReport,
    pub excluded: BTreeSet<usize>,
    pub votes: Vec<VoteResult>,
}

const FINAL_LABEL: &str = "FINAL";

/// Static-mode arbitration.
///
/// All replicas run to completion independently (in parallel), then their
/// checkpoints are voted on in order. Checkpoints are aligned by ordinal; a
/// replica whose checkpoint at an ordinal is missing or carries a different
/// `(label, step, length)` than the most common one counts as dissenting.
/// Dissenters are excluded from every later vote. Quorum loss aborts with
/// [`Error::QuorumLost`].
pub fn run_static<T: ReplicatedTask + ?Sized>(task: &T, config: &ArbiterConfig) -> Result<StaticOutcome> {
    config.validate()?;
    if config.mode != Mode::Static {
        return Err(Error::WrongMode {
            expected: Mode::Static,
            found: config.mode,
        });
    }
    let runs: Vec<ReplicaRun> = (0..config.replica_count)
        .into_par_iter()
        .map(|r| task.run(r))
        .collect();
    arbitrate_runs(&runs, config)
}

/// Static-mode voting over already-collected replica runs.
pub fn arbitrate_runs(runs: &[ReplicaRun], config: &ArbiterConfig) -> Result<StaticOutcome> {
    if runs.len() != config.replica_count {
        return Err(Error::ReplicaCount {
            expected: config.replica_count,
            got: runs.len(),
        });
    }
    let all: BTreeSet<usize> = (0..config.replica_count).collect();
    let mut excluded = BTreeSet::new();
    let mut report = FaultReport::default();
    let mut votes = Vec::new();

    let ordinals = match config.granularity {
        Granularity::FinalOnly => 0,
        Granularity::PerStage => runs.iter().map(|r| r.checkpoints.len()).max().unwrap_or(0),
    };
    for ord in 0..=ordinals {
        let is_final = ord == ordinals;
        let entry = |r: &ReplicaRun| -> Option<(String, usize, Vec<f64>)> {
            if is_final {
                Some((FINAL_LABEL.to_string(), 0, r.output.clone()))
            } else {
                r.checkpoints
                    .get(ord)
                    .map(|c| (c.label.clone(), c.step, c.payload.clone()))
            }
        };
        let entries: Vec<Option<(String, usize, Vec<f64>)>> = runs.iter().map(entry).collect();

        // Most common (label, step, len) among active replicas; first seen wins ties.
        let mut keys: Vec<((String, usize, usize), usize)> = Vec::new();
        for (id, e) in entries.iter().enumerate() {
            if excluded.contains(&id) {
                continue;
            }
            if let Some((l, s, p)) = e {
                let k = (l.clone(), *s, p.len());
                match keys.iter_mut().find(|(kk, _)| *kk == k) {
                    Some((_, c)) => *c += 1,
                    None => keys.push((k, 1)),
                }
            }
        }
        let Some(top) = keys.iter().map(|(_, c)| *c).max() else {
            return Err(Error::QuorumLost {
                checkpoint: ord,
                label: String::from("<none>"),
                report,
            });
        };
        let key = keys.iter().find(|(_, c)| *c == top).map(|(k, _)| k.clone()).expect("non-empty");

        let items: Vec<(usize, Option<&[f64]>)> = entries
            .iter()
            .enumerate()
            .filter(|(id, _)| !excluded.contains(id))
            .map(|(id, e)| {
                let p = e
                    .as_ref()
                    .filter(|(l, s, p)| *l == key.0 && *s == key.1 && p.len() == key.2)
                    .map(|(_, _, p)| p.as_slice());
                (id, p)
            })
            .collect();
        let result = tally(&items, &all, config.comparison);
        let label = format!("{}@{}", key.0, key.1);
        if !result.quorum_met {
            report.log(ord, &label, &result, None, Action::Aborted);
            return Err(Error::QuorumLost {
                checkpoint: ord,
                label,
                report,
            });
        }
        if !result.dissenting_set.is_empty() {
            let fresh = result.dissenting_set.iter().any(|d| !excluded.contains(d));
            let dev = deviation(&items, &result, &result.arbitrated);
            let action = if fresh { Action::Excluded } else { Action::Masked };
            report.log(ord, &label, &result, dev, action);
            excluded.extend(result.dissenting_set.iter().copied());
        }
        votes.push(result);
    }
    let output = votes.last().map(|v| v.arbitrated.clone()).unwrap_or_default();
    Ok(StaticOutcome {
        output,
        report,
        excluded,
        votes,
    })
}

/// Per-period arbitration for closed-loop control.
///
/// Each call votes on the outputs of one control period and returns before
/// the caller advances the plant, so a fault is detected and arbitrated in
/// the period it appears.
#[derive(Debug, Clone)]
pub struct DynamicArbiter {
    config: ArbiterConfig,
    previous: Vec<f64>,
    excluded: BTreeSet<usize>,
    report: FaultReport,
}

impl DynamicArbiter {
    /// `initial` is issued if quorum is lost before any successful vote.
    pub fn new(config: ArbiterConfig, initial: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if config.mode != Mode::Dynamic {
            return Err(Error::WrongMode {
                expected: Mode::Dynamic,
                found: config.mode,
            });
        }
        Ok(DynamicArbiter {
            config,
            previous: initial,
            excluded: BTreeSet::new(),
            report: FaultReport::default(),
        })
    }

    pub fn config(&self) -> &ArbiterConfig {
        &self.config
    }

    pub fn report(&self) -> &FaultReport {
        &self.report
    }

    pub fn into_report(self) -> FaultReport {
        self.report
    }

    pub fn arbitrate_step(&mut self, outputs: &[ReplicaOutput]) -> Result<VoteResult> {
        let mut result = vote_excluding(outputs, &self.config, &self.excluded)?;
        let step = outputs[0].step_index;
        let label = outputs[0].stage_label.clone();
        let items: Vec<(usize, Option<&[f64]>)> = outputs
            .iter()
            .map(|o| (o.replica_id, Some(o.payload.as_slice())))
            .collect();
        if result.quorum_met {
            if !result.dissenting_set.is_empty() {
                let dev = deviation(&items, &result, &result.arbitrated);
                let action = if self.config.exclude_dissenters {
                    Action::Excluded
                } else {
                    Action::Masked
                };
                self.report.log(step, &label, &result, dev, action);
                if self.config.exclude_dissenters {
                    self.excluded.extend(result.dissenting_set.iter().copied());
                }
            }
            self.previous = result.arbitrated.clone();
        } else {
            result.arbitrated = self.previous.clone();
            result.fallback_used = true;
            let dev = deviation(&items, &result, &result.arbitrated);
            self.report.log(step, &label, &result, dev, Action::HeldPrevious);
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outs(payloads: &[Vec<f64>]) -> Vec<ReplicaOutput> {
        payloads
            .iter()
            .enumerate()
            .map(|(i, p)| ReplicaOutput {
                replica_id: i,
                payload: p.clone(),
                stage_label: "S".into(),
                step_index: 0,
            })
            .collect()
    }

    fn exact(m: usize) -> ArbiterConfig {
        make_config(m, Mode::Static, Comparison::Exact, Granularity::PerStage).unwrap()
    }

    #[test]
    fn replica_count_is_m_plus_two() {
        assert_eq!(exact(1).replica_count, 3);
        assert_eq!(exact(2).replica_count, 4);
        assert!(matches!(
            make_config(0, Mode::Static, Comparison::Exact, Granularity::PerStage),
            Err(Error::FaultsToCatch(0))
        ));
        assert!(make_config(1, Mode::Static, Comparison::Tolerance { epsilon: -1.0 }, Granularity::PerStage).is_err());
    }

    #[test]
    fn unanimity() {
        let p = vec![1.0, 2.0];
        let r = vote(&outs(&[p.clone(), p.clone(), p.clone(), p.clone()]), &exact(2)).unwrap();
        assert_eq!(r.arbitrated, p);
        assert!(r.dissenting_set.is_empty() && r.quorum_met && !r.fallback_used);
    }

    #[test]
    fn single_outlier_dissents() {
        let p = vec![1.0, 2.0, 3.0];
        let mut q = p.clone();
        q[1] += 1e3;
        let r = vote(&outs(&[p.clone(), q, p.clone(), p.clone()]), &exact(2)).unwrap();
        assert_eq!(r.arbitrated, p);
        assert_eq!(r.dissenting_set, BTreeSet::from([1]));
        assert_eq!(r.agreeing_set, BTreeSet::from([0, 2, 3]));
    }

    #[test]
    fn two_pairs_tie_fails_quorum() {
        let a = vec![0.0];
        let b = vec![1.0];
        let r = vote(&outs(&[a.clone(), b.clone(), a, b]), &exact(2)).unwrap();
        assert!(!r.quorum_met && r.fallback_used);
        assert!(r.agreeing_set.is_empty());
        assert_eq!(r.dissenting_set.len(), 4);
    }

    #[test]
    fn structural_errors_are_distinct() {
        let cfg = exact(1);
        assert!(matches!(vote(&outs(&[vec![1.0], vec![1.0]]), &cfg), Err(Error::ReplicaCount { .. })));
        assert!(matches!(
            vote(&outs(&[vec![1.0], vec![1.0], vec![1.0, 2.0]]), &cfg),
            Err(Error::PayloadLength { replica: 2, .. })
        ));
        let mut o = outs(&[vec![1.0], vec![1.0], vec![1.0]]);
        o[2].step_index = 9;
        assert!(matches!(vote(&o, &cfg), Err(Error::StepMismatch(_))));
        let mut o = outs(&[vec![1.0], vec![1.0], vec![1.0]]);
        o[2].replica_id = 0;
        assert!(matches!(vote(&o, &cfg), Err(Error::DuplicateReplica(0))));
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut o = outs(&[vec![1.0], vec![2.0], vec![1.0], vec![3.0]]);
        let a = vote(&o, &exact(2)).unwrap();
        o.reverse();
        let b = vote(&o, &exact(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tolerance_mode_takes_median_of_winning_cluster() {
        let cfg = make_config(2, Mode::Static, Comparison::Tolerance { epsilon: 0.1 }, Granularity::FinalOnly).unwrap();
        let r = vote(&outs(&[vec![1.0], vec![1.05], vec![0.98], vec![5.0]]), &cfg).unwrap();
        assert!(r.quorum_met);
        assert_eq!(r.dissenting_set, BTreeSet::from([3]));
        assert_eq!(r.arbitrated, vec![1.0]);
    }

    #[test]
    fn nan_payloads_never_cluster_under_tolerance() {
        let cfg = make_config(1, Mode::Static, Comparison::Tolerance { epsilon: 1.0 }, Granularity::FinalOnly).unwrap();
        let r = vote(&outs(&[vec![f64::NAN], vec![1.0], vec![1.0]]), &cfg).unwrap();
        assert_eq!(r.dissenting_set, BTreeSet::from([0]));
    }

    #[test]
    fn dynamic_holds_previous_on_quorum_loss() {
        let cfg = make_config(1, Mode::Dynamic, Comparison::Exact, Granularity::PerStage).unwrap();
        let mut arb = DynamicArbiter::new(cfg, vec![0.0]).unwrap();
        let r = arb.arbitrate_step(&outs(&[vec![1.0], vec![1.0], vec![1.0]])).unwrap();
        assert_eq!(r.arbitrated, vec![1.0]);
        assert!(arb.report().is_empty());
        let mut o = outs(&[vec![2.0], vec![3.0], vec![4.0]]);
        o.iter_mut().for_each(|x| x.step_index = 1);
        let r = arb.arbitrate_step(&o).unwrap();
        assert_eq!(r.arbitrated, vec![1.0]);
        assert!(r.fallback_used && !r.quorum_met);
        assert_eq!(arb.report().events.len(), 1);
        assert_eq!(arb.report().events[0].action, Action::HeldPrevious);
    }

    #[test]
    fn dynamic_rejects_static_config() {
        assert!(matches!(DynamicArbiter::new(exact(1), vec![]), Err(Error::WrongMode { .. })));
    }

    #[test]
    fn report_jsonl_round_trip() {
        let report = FaultReport {
            events: vec![FaultEvent {
                step: 3,
                label: "CMD".into(),
                dissenters: vec![1],
                max_deviation: Some(0.5),
                action: Action::Masked,
            }],
        };
        let text = report.to_jsonl();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(FaultReport::from_jsonl(&text).unwrap(), report);
    }
}
