//! Properties of delivered message-set sequences.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::Verdict;
use crate::types::{MsgId, ProcessId};

/// What each process delivered, in order, and whether it crashed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryLog {
    pub sets: Vec<Vec<BTreeSet<MsgId>>>,
    pub faulty: Vec<bool>,
}

impl DeliveryLog {
    pub fn new(n: usize) -> Self {
        DeliveryLog {
            sets: vec![Vec::new(); n],
            faulty: vec![false; n],
        }
    }

    /// Builds a log from literal id lists, all processes non-faulty.
    pub fn from_ids(sets: Vec<Vec<Vec<MsgId>>>) -> Self {
        let n = sets.len();
        DeliveryLog {
            sets: sets
                .into_iter()
                .map(|seq| seq.into_iter().map(|s| s.into_iter().collect()).collect())
                .collect(),
            faulty: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    /// Index of the set in which each message was (first) delivered.
    fn positions(&self, k: usize) -> HashMap<MsgId, usize> {
        let mut pos = HashMap::new();
        for (x, set) in self.sets[k].iter().enumerate() {
            for id in set {
                pos.entry(*id).or_insert(x);
            }
        }
        pos
    }

    pub fn delivered_by(&self, k: usize) -> BTreeSet<MsgId> {
        self.sets[k].iter().flatten().copied().collect()
    }
}

fn pid(k: usize) -> ProcessId {
    ProcessId::from_index(k)
}

pub fn check_validity(log: &DeliveryLog, broadcasts: &BTreeSet<MsgId>) -> Verdict {
    for (k, seq) in log.sets.iter().enumerate() {
        for (x, set) in seq.iter().enumerate() {
            if let Some(id) = set.iter().find(|id| !broadcasts.contains(id)) {
                return Verdict::fail(
                    "validity",
                    format!(
                        "p{} delivered {id} in set #{x} but nobody broadcast it",
                        pid(k)
                    ),
                );
            }
        }
    }
    Verdict::pass("validity")
}

pub fn check_integrity(log: &DeliveryLog) -> Verdict {
    for (k, seq) in log.sets.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for set in seq {
            if set.is_empty() {
                return Verdict::fail("integrity", format!("p{} delivered an empty set", pid(k)));
            }
            for id in set {
                if !seen.insert(*id) {
                    return Verdict::fail("integrity", format!("p{} delivered {id} twice", pid(k)));
                }
            }
        }
    }
    Verdict::pass("integrity")
}

/// A pair of processes and messages delivered in opposite strict order:
/// `i` delivers `m` before `m2`, `j` delivers `m2` before `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderViolation {
    pub i: ProcessId,
    pub j: ProcessId,
    pub m: MsgId,
    pub m2: MsgId,
}

/// For each ordered pair of processes, sweeps `i`'s sets in order while
/// tracking the latest position at `j` of anything `i` delivered earlier.
/// A message that `j` delivered before that position is a violation.
pub fn find_ms_ordering_violation(log: &DeliveryLog) -> Option<OrderViolation> {
    let positions: Vec<_> = (0..log.n()).map(|k| log.positions(k)).collect();
    for i in 0..log.n() {
        for j in 0..log.n() {
            if i == j {
                continue;
            }
            // Latest position at j among i's strictly earlier sets.
            let mut latest: Option<(usize, MsgId)> = None;
            for set in &log.sets[i] {
                let mut here: Option<(usize, MsgId)> = None;
                for &m2 in set {
                    let Some(&pj) = positions[j].get(&m2) else {
                        continue;
                    };
                    if let Some((pm, m)) = latest {
                        if pj < pm {
                            return Some(OrderViolation {
                                i: pid(i),
                                j: pid(j),
                                m,
                                m2,
                            });
                        }
                    }
                    if here.is_none_or(|(h, _)| pj > h) {
                        here = Some((pj, m2));
                    }
                }
                if let Some((h, id)) = here {
                    if latest.is_none_or(|(l, _)| h > l) {
                        latest = Some((h, id));
                    }
                }
            }
        }
    }
    None
}

pub fn check_ms_ordering(log: &DeliveryLog) -> Verdict {
    match find_ms_ordering_violation(log) {
        None => Verdict::pass("ms_ordering"),
        Some(v) => Verdict::fail(
            "ms_ordering",
            format!(
                "p{} delivered {} before {} but p{} delivered {} before {}",
                v.i, v.m, v.m2, v.j, v.m2, v.m
            ),
        ),
    }
}

/// Every pair of delivery prefixes, across all processes, must be
/// comparable under inclusion.
pub fn check_containment(log: &DeliveryLog) -> Verdict {
    let positions: Vec<_> = (0..log.n()).map(|k| log.positions(k)).collect();
    for i in 0..log.n() {
        for j in (i + 1)..log.n() {
            // within[y] = 1 + the last set index at i needed to cover j's
            // first y sets, or usize::MAX if i never delivers one of them.
            let cover = |a: usize, b: usize| -> Vec<usize> {
                let mut out = vec![0];
                let mut acc = 0usize;
                for set in &log.sets[b] {
                    for id in set {
                        acc = acc.max(positions[a].get(id).map_or(usize::MAX, |p| p + 1));
                    }
                    out.push(acc);
                }
                out
            };
            let j_in_i = cover(i, j);
            let i_in_j = cover(j, i);
            for x in 0..=log.sets[i].len() {
                for y in 0..=log.sets[j].len() {
                    let b_sub_a = j_in_i[y] <= x;
                    let a_sub_b = i_in_j[x] <= y;
                    if !b_sub_a && !a_sub_b {
                        return Verdict::fail(
                            "containment",
                            format!(
                                "first {x} sets of p{} and first {y} sets of p{} are incomparable",
                                pid(i),
                                pid(j)
                            ),
                        );
                    }
                }
            }
        }
    }
    Verdict::pass("containment")
}

/// Inputs to the termination check besides the log.
pub struct TerminationInput<'a> {
    /// Broadcaster of every message.
    pub broadcasts: &'a BTreeMap<MsgId, ProcessId>,
    /// Messages whose broadcast returned.
    pub completed: &'a BTreeSet<MsgId>,
    pub quiescent: bool,
}

pub fn check_termination(log: &DeliveryLog, input: &TerminationInput<'_>) -> Verdict {
    if !input.quiescent {
        return Verdict::not_applicable("termination", "run did not reach quiescence");
    }
    let live: Vec<usize> = (0..log.n()).filter(|k| !log.faulty[*k]).collect();
    let mut required: BTreeSet<MsgId> = input
        .broadcasts
        .iter()
        .filter(|(_, p)| !log.faulty[p.index()])
        .map(|(id, _)| *id)
        .collect();
    for k in &live {
        required.extend(log.delivered_by(*k));
    }
    for (id, p) in input.broadcasts {
        if !log.faulty[p.index()] && !input.completed.contains(id) {
            return Verdict::fail(
                "termination",
                format!("broadcast of {id} by non-faulty p{p} never returned"),
            );
        }
    }
    for k in live {
        let got = log.delivered_by(k);
        if let Some(id) = required.difference(&got).next() {
            return Verdict::fail(
                "termination",
                format!("non-faulty p{} never delivered {id}", pid(k)),
            );
        }
    }
    Verdict::pass("termination")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(k: u64) -> MsgId {
        MsgId::new(ProcessId::from_index(0), k)
    }

    fn log(seqs: &[&[&[u64]]]) -> DeliveryLog {
        DeliveryLog::from_ids(
            seqs.iter()
                .map(|seq| {
                    seq.iter()
                        .map(|s| s.iter().map(|k| m(*k)).collect())
                        .collect()
                })
                .collect(),
        )
    }

    /// Pairwise comparison of every message pair at every process pair.
    fn naive_ms_violation(log: &DeliveryLog) -> bool {
        let n = log.n();
        for i in 0..n {
            for j in 0..n {
                let pi = log.positions(i);
                let pj = log.positions(j);
                for (a, xa) in &pi {
                    for (b, xb) in &pi {
                        if xa < xb {
                            if let (Some(ya), Some(yb)) = (pj.get(a), pj.get(b)) {
                                if yb < ya {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
        }
        false
    }

    fn naive_containment_violation(log: &DeliveryLog) -> bool {
        let prefixes = |k: usize| -> Vec<BTreeSet<MsgId>> {
            let mut acc = BTreeSet::new();
            let mut out = vec![acc.clone()];
            for s in &log.sets[k] {
                acc.extend(s.iter().copied());
                out.push(acc.clone());
            }
            out
        };
        for i in 0..log.n() {
            for j in 0..log.n() {
                for a in prefixes(i) {
                    for b in prefixes(j) {
                        if !a.is_subset(&b) && !b.is_subset(&a) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    // p1: {m1,m2},{m3,m4,m5},{m6},{m7,m8}
    // p2: {m1},{m3,m2},{m6,m4,m5},{m7},{m8}
    // p3: {m3,m1,m2},{m6,m4,m5},{m7},{m8}
    fn three_process_example() -> DeliveryLog {
        log(&[
            &[&[1, 2], &[3, 4, 5], &[6], &[7, 8]],
            &[&[1], &[3, 2], &[6, 4, 5], &[7], &[8]],
            &[&[3, 1, 2], &[6, 4, 5], &[7], &[8]],
        ])
    }

    #[test]
    fn three_process_example_is_valid() {
        let l = three_process_example();
        assert!(check_ms_ordering(&l).passed());
        assert!(check_containment(&l).passed());
        assert!(check_integrity(&l).passed());
    }

    #[test]
    fn opposite_strict_order_is_rejected() {
        // p1: {m1,m2},{m3,m4,m5}; p2: {m1,m3},{m2}
        let l = log(&[&[&[1, 2], &[3, 4, 5]], &[&[1, 3], &[2]]]);
        let v = find_ms_ordering_violation(&l).unwrap();
        assert_eq!((v.m, v.m2), (m(2), m(3)));
        assert!(!check_ms_ordering(&l).passed());
    }

    #[test]
    fn identical_singleton_orders_pass() {
        let l = log(&[&[&[1], &[2], &[3]], &[&[1], &[2], &[3]]]);
        assert!(check_ms_ordering(&l).passed());
        assert!(check_containment(&l).passed());
    }

    #[test]
    fn disjoint_singletons_break_containment() {
        let l = log(&[&[&[1]], &[&[2]]]);
        assert!(!check_containment(&l).passed());
        // Neither process delivers both, so MS-Ordering has nothing to say.
        assert!(check_ms_ordering(&l).passed());
    }

    #[test]
    fn validity_and_integrity() {
        assert!(check_validity(&DeliveryLog::new(2), &BTreeSet::new()).passed());
        let l = log(&[&[&[1]], &[&[9]]]);
        let known: BTreeSet<MsgId> = [m(1)].into();
        assert!(!check_validity(&l, &known).passed());
        assert!(!check_integrity(&log(&[&[&[1], &[1, 2]]])).passed());
        assert!(check_integrity(&log(&[&[&[1], &[2]]])).passed());
    }

    #[test]
    fn termination_cases() {
        let broadcasts: BTreeMap<MsgId, ProcessId> = [(m(1), ProcessId::from_index(0))].into();
        let completed: BTreeSet<MsgId> = [m(1)].into();
        let input = TerminationInput {
            broadcasts: &broadcasts,
            completed: &completed,
            quiescent: true,
        };
        assert!(check_termination(&log(&[&[&[1]], &[&[1]]]), &input).passed());
        assert!(!check_termination(&log(&[&[&[1]], &[]]), &input).passed());
        // A faulty sender's message reached p2, so p3 must have it too.
        let mut l = log(&[&[], &[&[1]], &[]]);
        l.faulty[0] = true;
        assert!(!check_termination(&l, &input).passed());
        let stalled = TerminationInput {
            quiescent: false,
            ..input
        };
        assert_eq!(
            check_termination(&l, &stalled).outcome,
            super::super::Outcome::NotApplicable
        );
    }

    fn arb_log() -> impl Strategy<Value = DeliveryLog> {
        // Each process delivers a random subset of 6 messages in random
        // order, cut into random sets.
        let proc = (
            Just((0..6u64).collect::<Vec<_>>()).prop_shuffle(),
            0..=6usize,
            proptest::collection::vec(any::<bool>(), 6),
        );
        proptest::collection::vec(proc, 2..4).prop_map(|ps| {
            let sets = ps
                .into_iter()
                .map(|(order, keep, cuts)| {
                    let mut seq: Vec<Vec<MsgId>> = Vec::new();
                    for (k, id) in order.into_iter().take(keep).enumerate() {
                        if seq.is_empty() || cuts[k] {
                            seq.push(Vec::new());
                        }
                        seq.last_mut().unwrap().push(m(id));
                    }
                    seq
                })
                .collect();
            DeliveryLog::from_ids(sets)
        })
    }

    proptest! {
        #[test]
        fn ms_ordering_matches_pairwise_oracle(l in arb_log()) {
            prop_assert_eq!(find_ms_ordering_violation(&l).is_some(), naive_ms_violation(&l));
        }

        #[test]
        fn containment_matches_prefix_oracle(l in arb_log()) {
            prop_assert_eq!(!check_containment(&l).passed(), naive_containment_violation(&l));
        }

        #[test]
        fn ordered_and_complete_logs_are_contained(l in arb_log()) {
            let all = l.delivered_by(0);
            let complete = (0..l.n()).all(|k| l.delivered_by(k) == all);
            if complete && check_ms_ordering(&l).passed() {
                prop_assert!(check_containment(&l).passed());
            }
        }
    }
}
