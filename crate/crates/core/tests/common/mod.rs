#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use scdkit::check::{check_delivery_suite, DeliveryLog, TerminationInput, Verdict};
use scdkit::scd_rw::{ExploreConfig, Leaf};
use scdkit::sim::{run, ScenarioConfig, Trace};
use scdkit::types::{AppMessage, MsgId, ProcessId};

pub fn pid(p: u32) -> ProcessId {
    ProcessId::new(p).unwrap()
}

pub fn msg(p: u32, seq: u64) -> MsgId {
    MsgId::new(pid(p), seq)
}

pub fn trace_of(config: &ScenarioConfig) -> Trace {
    run(config).expect("valid config").trace
}

/// `counts[k]` messages broadcast by process `k + 1`.
pub fn explore_config(counts: &[usize], allow_crash: bool) -> ExploreConfig {
    ExploreConfig {
        broadcasts: counts
            .iter()
            .enumerate()
            .map(|(k, c)| {
                (0..*c as u64)
                    .map(|s| {
                        let id = MsgId::new(ProcessId::from_index(k), s);
                        AppMessage::new(id, format!("{k}/{s}").into_bytes())
                    })
                    .collect()
            })
            .collect(),
        allow_crash,
    }
}

/// The SCD property suite on one terminal state of the explorer. A leaf
/// has no enabled event, so it counts as quiescent.
pub fn leaf_verdicts(config: &ExploreConfig, leaf: &Leaf) -> Vec<Verdict> {
    let broadcasts: BTreeMap<MsgId, ProcessId> = config
        .broadcasts
        .iter()
        .flatten()
        .map(|m| (m.id, m.id.sender))
        .collect();
    let log = DeliveryLog {
        sets: leaf
            .delivered
            .iter()
            .map(|seq| seq.iter().map(|s| s.id_set()).collect())
            .collect(),
        faulty: leaf.crashed.clone(),
    };
    let completed: BTreeSet<MsgId> = leaf.completed.clone();
    check_delivery_suite(
        &log,
        &TerminationInput {
            broadcasts: &broadcasts,
            completed: &completed,
            quiescent: true,
        },
    )
}
