#[path = "support/partitions.rs"]
mod partitions;

use std::collections::BTreeSet;

use ftsc_core::arbiter::*;
use ftsc_core::Error;
use proptest::prelude::*;

fn outputs(payloads: Vec<Vec<f64>>) -> Vec<ReplicaOutput> {
    payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| ReplicaOutput {
            replica_id: i,
            payload,
            stage_label: "GRADIENT".into(),
            step_index: 3,
        })
        .collect()
}

fn config(m: usize, cmp: Comparison) -> ArbiterConfig {
    make_config(m, Mode::Static, cmp, Granularity::PerStage).unwrap()
}

fn truth() -> Vec<f64> {
    vec![1.5, -2.25, 1e-3, 0.0, 42.0]
}

/// Distinct corruption number `c` of the true payload.
fn corrupt(c: usize) -> Vec<f64> {
    let mut p = truth();
    let i = c % p.len();
    p[i] += (c + 1) as f64 * 10.0;
    p
}

#[test]
fn every_subset_of_at_most_m_faults_is_masked() {
    for m in 1..=3 {
        let n = m + 2;
        for cmp in [Comparison::Exact, Comparison::Tolerance { epsilon: 1e-6 }] {
            let cfg = config(m, cmp);
            for mask in 0u32..(1 << n) {
                let bad: BTreeSet<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                if bad.len() > m {
                    continue;
                }
                let payloads = (0..n)
                    .map(|i| if bad.contains(&i) { corrupt(i) } else { truth() })
                    .collect();
                let r = vote(&outputs(payloads), &cfg).unwrap();
                assert!(r.quorum_met, "m={m} mask={mask:b}");
                assert_eq!(r.arbitrated, truth());
                assert_eq!(r.dissenting_set, bad);
                assert!(!r.fallback_used);
            }
        }
    }
}

#[test]
fn every_partition_matches_the_plurality_rule() {
    for m in 1..=3 {
        let n = m + 2;
        let cfg = config(m, Comparison::Exact);
        for labels in partitions::all(n) {
            let payloads = labels.iter().map(|&b| vec![b as f64, -(b as f64)]).collect();
            let r = vote(&outputs(payloads), &cfg).unwrap();
            assert_eq!(r.quorum_met, partitions::has_quorum(&labels), "{labels:?}");
            let all: BTreeSet<usize> = (0..n).collect();
            let union: BTreeSet<usize> = r.agreeing_set.union(&r.dissenting_set).copied().collect();
            assert_eq!(union, all);
            assert!(r.agreeing_set.is_disjoint(&r.dissenting_set));
            if r.quorum_met {
                let winner = labels[*r.agreeing_set.iter().next().unwrap()];
                assert!(r.agreeing_set.iter().all(|&i| labels[i] == winner));
                assert_eq!(r.arbitrated, vec![winner as f64, -(winner as f64)]);
            } else {
                assert!(r.fallback_used && r.agreeing_set.is_empty());
            }
        }
    }
}

#[test]
fn over_capacity_ties_fail_quorum() {
    // M + 1 replicas split evenly, or every replica different.
    for m in 1..=3 {
        let n = m + 2;
        let cfg = config(m, Comparison::Exact);
        let all_distinct = (0..n).map(corrupt).collect();
        assert!(!vote(&outputs(all_distinct), &cfg).unwrap().quorum_met);
        if n % 2 == 0 {
            let halves = (0..n).map(|i| if i < n / 2 { truth() } else { corrupt(0) }).collect();
            let r = vote(&outputs(halves), &cfg).unwrap();
            assert!(!r.quorum_met && r.fallback_used);
        }
    }
}

struct Fixed(Vec<ReplicaRun>);
impl ReplicatedTask for Fixed {
    fn run(&self, replica: usize) -> ReplicaRun {
        self.0[replica].clone()
    }
}

fn run_of(stages: &[(&str, Vec<f64>)], output: Vec<f64>) -> ReplicaRun {
    ReplicaRun {
        checkpoints: stages
            .iter()
            .enumerate()
            .map(|(i, (label, payload))| Checkpoint {
                label: label.to_string(),
                step: i,
                payload: payload.clone(),
            })
            .collect(),
        output,
    }
}

#[test]
fn static_mode_excludes_dissenters_per_stage() {
    let cfg = config(2, Comparison::Exact);
    let good = run_of(&[("INIT", vec![1.0]), ("GRADIENT", vec![2.0]), ("VALIDATE", vec![3.0])], vec![9.0]);
    // Replica 2 diverges at the gradient stage, then happens to agree again.
    let mut bad = good.clone();
    bad.checkpoints[1].payload = vec![2.5];
    let task = Fixed(vec![good.clone(), good.clone(), bad, good.clone()]);
    let out = run_static(&task, &cfg).unwrap();
    assert_eq!(out.output, vec![9.0]);
    assert_eq!(out.excluded, BTreeSet::from([2]));
    assert_eq!(out.report.events[0].step, 1);
    assert_eq!(out.report.events[0].action, Action::Excluded);
    assert_eq!(out.report.events[0].dissenters, vec![2]);
    assert_eq!(out.report.events[0].max_deviation, Some(0.5));
    assert_eq!(out.votes.len(), 4);
}

#[test]
fn final_only_ignores_intermediate_disagreement() {
    let cfg = make_config(1, Mode::Static, Comparison::Exact, Granularity::FinalOnly).unwrap();
    let good = run_of(&[("INIT", vec![1.0])], vec![9.0]);
    let mut odd = good.clone();
    odd.checkpoints[0].payload = vec![7.0];
    let out = run_static(&Fixed(vec![good.clone(), odd, good]), &cfg).unwrap();
    assert!(out.report.is_empty());
    assert_eq!(out.votes.len(), 1);
}

#[test]
fn static_quorum_loss_is_an_error_with_report() {
    let cfg = config(1, Comparison::Exact);
    let runs = (0..3).map(|i| run_of(&[("INIT", vec![i as f64])], vec![0.0])).collect();
    match run_static(&Fixed(runs), &cfg) {
        Err(Error::QuorumLost { checkpoint, report, .. }) => {
            assert_eq!(checkpoint, 0);
            assert_eq!(report.events.len(), 1);
            assert_eq!(report.events[0].action, Action::Aborted);
        }
        other => panic!("expected quorum loss, got {other:?}"),
    }
}

#[test]
fn missing_checkpoints_count_as_dissent() {
    let cfg = config(1, Comparison::Exact);
    let good = run_of(&[("INIT", vec![1.0]), ("GRADIENT", vec![2.0])], vec![3.0]);
    let short = run_of(&[("INIT", vec![1.0])], vec![3.0]);
    let out = run_static(&Fixed(vec![good.clone(), short, good]), &cfg).unwrap();
    assert_eq!(out.excluded, BTreeSet::from([1]));
}

proptest! {
    #[test]
    fn vote_ignores_input_order(
        values in prop::collection::vec(0u8..3, 4),
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let cfg = config(2, Comparison::Exact);
        let outs = outputs(values.iter().map(|&v| vec![v as f64]).collect());
        let shuffled: Vec<ReplicaOutput> = perm.iter().map(|&i| outs[i].clone()).collect();
        prop_assert_eq!(vote(&outs, &cfg).unwrap(), vote(&shuffled, &cfg).unwrap());
    }

    #[test]
    fn tolerance_median_lies_within_winning_cluster(
        base in -100.0f64..100.0,
        offsets in prop::collection::vec(-1e-7f64..1e-7, 5),
    ) {
        let cfg = config(3, Comparison::Tolerance { epsilon: 1e-6 });
        let payloads: Vec<Vec<f64>> = offsets.iter().map(|o| vec![base + o, base - o]).collect();
        let r = vote(&outputs(payloads.clone()), &cfg).unwrap();
        prop_assert!(r.quorum_met);
        for (j, &got) in r.arbitrated.iter().enumerate() {
            let members = r.agreeing_set.iter().map(|&i| payloads[i][j]);
            let lo = members.clone().fold(f64::INFINITY, f64::min);
            let hi = members.fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(got >= lo && got <= hi);
        }
    }

    #[test]
    fn unanimous_payload_is_returned_unchanged(p in prop::collection::vec(any::<f64>(), 1..8), m in 1usize..4) {
        let cfg = config(m, Comparison::Exact);
        let r = vote(&outputs(vec![p.clone(); m + 2]), &cfg).unwrap();
        prop_assert!(r.quorum_met && r.dissenting_set.is_empty());
        prop_assert!(r.arbitrated.iter().zip(&p).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
