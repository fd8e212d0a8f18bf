//! Linearizability and sequential consistency of snapshot histories.
//!
//! Two independent methods. The brute-force search tries every order
//! compatible with the required precedence and is exact but exponential.
//! The witness method orders operations by the timestamp arrays the
//! replicas recorded and only has to validate that one order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use super::history::{History, OpKind, OpRecord};
use super::Verdict;
use crate::objects::Value;
use crate::types::{Timestamp, TimestampArray, TsaOrdering};

pub const DEFAULT_LIN_BOUND: usize = 10;
pub const DEFAULT_SC_BOUND: usize = 14;

/// Which precedence an order has to respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precedence {
    /// An operation that returned before another was invoked comes first.
    RealTime,
    /// Only each process's own order counts.
    ProgramOrder,
}

impl Precedence {
    fn property(self) -> &'static str {
        match self {
            Precedence::RealTime => "linearizability",
            Precedence::ProgramOrder => "sequential_consistency",
        }
    }

    fn precedes(self, a: &OpRecord, b: &OpRecord) -> bool {
        match self {
            Precedence::RealTime => a.ret.is_some_and(|r| r < b.invoke),
            Precedence::ProgramOrder => a.proc == b.proc && a.invoke < b.invoke,
        }
    }
}

/// Applies `op` to `state` if the sequential specification allows it.
fn apply(state: &mut [Value], op: &OpRecord) -> Result<(), String> {
    match &op.kind {
        OpKind::Write { r, v } => {
            let slot = state
                .get_mut(r.wrapping_sub(1))
                .ok_or_else(|| format!("write to register {r} out of range"))?;
            *slot = v.clone();
            Ok(())
        }
        OpKind::Snapshot => {
            let got = op.values.as_deref().unwrap_or_default();
            if got == state {
                Ok(())
            } else {
                Err(format!(
                    "snapshot by p{} at step {} returned [{}], expected [{}]",
                    op.proc,
                    op.invoke,
                    crate::objects::render_values(got),
                    crate::objects::render_values(state)
                ))
            }
        }
    }
}

/// Operations the search may place: every complete one plus pending
/// writes, which may also be left out.
fn candidates(h: &History) -> Vec<&OpRecord> {
    h.ops
        .iter()
        .filter(|o| o.is_complete() || o.is_write())
        .collect()
}

/// Exhaustive search for a legal order. Returns indices into the
/// candidate list on success.
fn search(ops: &[&OpRecord], m: usize, prec: Precedence) -> Option<Vec<usize>> {
    let k = ops.len();
    assert!(k <= 64, "search supports at most 64 operations");
    let preds: Vec<u64> = (0..k)
        .map(|b| {
            (0..k)
                .filter(|&a| a != b && prec.precedes(ops[a], ops[b]))
                .fold(0, |acc, a| acc | 1 << a)
        })
        .collect();
    let required: u64 = (0..k)
        .filter(|&a| ops[a].is_complete())
        .fold(0, |acc, a| acc | 1 << a);
    let mut dead: HashSet<(u64, Vec<Value>)> = HashSet::new();
    let mut order = Vec::new();

    fn go(
        ops: &[&OpRecord],
        preds: &[u64],
        required: u64,
        mask: u64,
        state: &mut Vec<Value>,
        order: &mut Vec<usize>,
        dead: &mut HashSet<(u64, Vec<Value>)>,
    ) -> bool {
        if mask & required == required {
            return true;
        }
        if dead.contains(&(mask, state.clone())) {
            return false;
        }
        for b in 0..ops.len() {
            if mask & (1 << b) != 0 || preds[b] & !mask != 0 {
                continue;
            }
            let saved = state.clone();
            if apply(state, ops[b]).is_ok() {
                order.push(b);
                if go(ops, preds, required, mask | 1 << b, state, order, dead) {
                    return true;
                }
                order.pop();
            }
            *state = saved;
        }
        dead.insert((mask, state.clone()));
        false
    }

    let mut state = vec![Value::default(); m];
    go(ops, &preds, required, 0, &mut state, &mut order, &mut dead).then_some(order)
}

fn bruteforce(h: &History, bound: usize, prec: Precedence) -> Verdict {
    let name = format!("{}_bruteforce", prec.property());
    let complete = h.complete_count();
    if complete > bound {
        return Verdict::not_applicable(
            &name,
            format!("{complete} complete ops exceed bound {bound}"),
        );
    }
    let ops = candidates(h);
    if ops.len() > 64 {
        return Verdict::not_applicable(&name, format!("{} candidate ops", ops.len()));
    }
    match search(&ops, h.m, prec) {
        Some(order) => Verdict::pass_with(&name, format!("{} ops placed", order.len())),
        None => Verdict::fail(&name, format!("no legal order of {complete} complete ops")),
    }
}

/// Exact linearizability check for small histories.
pub fn check_linearizable_bruteforce(h: &History, bound: usize) -> Verdict {
    bruteforce(h, bound, Precedence::RealTime)
}

/// Exact sequential-consistency check for small histories.
pub fn check_sequentially_consistent(h: &History, bound: usize) -> Verdict {
    bruteforce(h, bound, Precedence::ProgramOrder)
}

/// All timestamp arrays the replicas held, plus the initial one, sorted
/// and deduplicated. Fails if two of them are incomparable.
pub fn ordered_arrays(h: &History) -> Result<Vec<TimestampArray>, String> {
    let mut arrays: Vec<TimestampArray> = h.tsa_log.iter().map(|(_, a)| a.clone()).collect();
    arrays.extend(h.ops.iter().filter_map(|o| o.tsa.clone()));
    arrays.push(TimestampArray::initial(h.m));
    for a in &arrays {
        if a.len() != h.m {
            return Err(format!(
                "timestamp array {a} has {} entries, expected {}",
                a.len(),
                h.m
            ));
        }
    }
    arrays.sort_by(|a, b| a.entries().cmp(b.entries()));
    arrays.dedup();
    for w in arrays.windows(2) {
        if !w[0].le(&w[1]) {
            return Err(format!(
                "timestamp arrays {} and {} are incomparable",
                w[0], w[1]
            ));
        }
    }
    Ok(arrays)
}

pub fn check_tsa_total_order(h: &History) -> Verdict {
    match ordered_arrays(h) {
        Ok(a) => Verdict::pass_with("tsa_total_order", format!("{} distinct arrays", a.len())),
        Err(e) => Verdict::fail("tsa_total_order", e),
    }
}

/// Each replica's array only grows.
pub fn check_tsa_monotone(h: &History) -> Verdict {
    let mut last: Vec<Option<&TimestampArray>> = Vec::new();
    for (p, a) in &h.tsa_log {
        let k = p.index();
        if last.len() <= k {
            last.resize(k + 1, None);
        }
        if let Some(prev) = last[k] {
            if !matches!(prev.compare(a), Ok(TsaOrdering::Less | TsaOrdering::Equal)) {
                return Verdict::fail("tsa_monotone", format!("p{p} went from {prev} to {a}"));
            }
        }
        last[k] = Some(a);
    }
    Verdict::pass("tsa_monotone")
}

/// Distinct writes to one register never share a timestamp.
pub fn check_write_ts_unique(h: &History) -> Verdict {
    let mut seen: HashSet<(usize, Timestamp)> = HashSet::new();
    for op in &h.ops {
        if let (OpKind::Write { r, .. }, Some(ts)) = (&op.kind, op.ts) {
            if !seen.insert((*r, ts)) {
                return Verdict::fail(
                    "write_ts_unique",
                    format!("two writes to register {r} carry {ts}"),
                );
            }
        }
    }
    Verdict::pass("write_ts_unique")
}

/// Completed operations issue exactly the expected number of broadcasts.
pub fn check_op_message_cost(h: &History, write_cost: usize, snapshot_cost: usize) -> Verdict {
    for op in h.ops.iter().filter(|o| o.is_complete()) {
        let want = if op.is_write() {
            write_cost
        } else {
            snapshot_cost
        };
        if op.broadcasts != want {
            return Verdict::fail(
                "op_message_cost",
                format!(
                    "operation by p{} at step {} issued {} scbroadcasts, expected {want}",
                    op.proc, op.invoke, op.broadcasts
                ),
            );
        }
    }
    Verdict::pass_with(
        "op_message_cost",
        format!("write={write_cost} snapshot={snapshot_cost}"),
    )
}

/// Rank of the op's array, 0 for writes and 1 for snapshots, timestamp.
type WitnessKey = (usize, u8, Timestamp);

/// Orders the history by timestamp arrays and returns the order as indices
/// into `h.ops`.
///
/// A snapshot's array is the one it returned with; a write's is the
/// smallest recorded array that already reflects the write. Pending writes
/// take part only if their WRITE was delivered somewhere, pending snapshots
/// never. `a` goes before `b` if `a` precedes `b`, if `a`'s array is
/// smaller, if the arrays are equal and `a` is a write while `b` is a
/// snapshot, or if both write the same register and `a`'s timestamp is
/// smaller.
pub fn witness_order(h: &History, prec: Precedence) -> Result<Vec<usize>, String> {
    let arrays = ordered_arrays(h)?;
    let included: Vec<usize> = (0..h.ops.len())
        .filter(|&k| {
            let op = &h.ops[k];
            op.is_complete() || (op.is_write() && op.visible)
        })
        .collect();
    let mut keys: Vec<WitnessKey> = Vec::with_capacity(included.len());
    for &k in &included {
        let op = &h.ops[k];
        let key = match &op.kind {
            OpKind::Snapshot => {
                let tsa = op
                    .tsa
                    .as_ref()
                    .ok_or("snapshot returned without an array")?;
                let rank = arrays.binary_search_by(|a| a.entries().cmp(tsa.entries()));
                (
                    rank.expect("every returned array is recorded"),
                    1u8,
                    Timestamp::INITIAL,
                )
            }
            OpKind::Write { r, .. } => {
                let ts = op.ts.ok_or_else(|| {
                    format!(
                        "write by p{} at step {} has no timestamp",
                        op.proc, op.invoke
                    )
                })?;
                let rank = arrays.partition_point(|a| a.get(*r) < ts);
                if rank == arrays.len() {
                    return Err(format!(
                        "no recorded array reflects the write of {ts} to register {r}"
                    ));
                }
                (rank, 0u8, ts)
            }
        };
        keys.push(key);
    }
    let before = |x: usize, y: usize| -> bool {
        let (a, b) = (&h.ops[included[x]], &h.ops[included[y]]);
        let (ka, kb) = (keys[x], keys[y]);
        prec.precedes(a, b)
            || ka.0 < kb.0
            || (ka.0 == kb.0 && ka.1 == 0 && kb.1 == 1)
            || (ka.0 == kb.0
                && matches!((&a.kind, &b.kind), (OpKind::Write { r: ra, .. }, OpKind::Write { r: rb, .. }) if ra == rb)
                && ka.2 < kb.2)
    };
    let count = included.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut indegree = vec![0usize; count];
    for x in 0..count {
        for y in 0..count {
            if x != y && before(x, y) {
                succ[x].push(y);
                indegree[y] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<(WitnessKey, usize)>> = (0..count)
        .filter(|&x| indegree[x] == 0)
        .map(|x| Reverse((keys[x], x)))
        .collect();
    let mut order = Vec::with_capacity(count);
    while let Some(Reverse((_, x))) = ready.pop() {
        order.push(x);
        for &y in &succ[x] {
            indegree[y] -= 1;
            if indegree[y] == 0 {
                ready.push(Reverse((keys[y], y)));
            }
        }
    }
    if order.len() < count {
        let stuck = (0..count)
            .find(|&y| indegree[y] > 0)
            .expect("some op is left");
        let culprit = (0..count)
            .find(|&x| indegree[x] > 0 && before(x, stuck))
            .expect("a left-over op has a left-over predecessor");
        let (a, b) = (&h.ops[included[culprit]], &h.ops[included[stuck]]);
        return Err(format!(
            "ordering cycle through ops of p{} (step {}) and p{} (step {})",
            a.proc, a.invoke, b.proc, b.invoke
        ));
    }
    Ok(order.into_iter().map(|x| included[x]).collect())
}

fn witness(h: &History, prec: Precedence) -> Verdict {
    let name = format!("{}_witness", prec.property());
    let order = match witness_order(h, prec) {
        Ok(o) => o,
        Err(e) => return Verdict::fail(&name, e),
    };
    let mut state = vec![Value::default(); h.m];
    for &k in &order {
        if let Err(e) = apply(&mut state, &h.ops[k]) {
            return Verdict::fail(&name, e);
        }
    }
    Verdict::pass_with(&name, format!("{} ops ordered", order.len()))
}

/// Linearizability through the timestamp-array witness order.
pub fn check_linearizable_witness(h: &History) -> Verdict {
    witness(h, Precedence::RealTime)
}

/// Sequential consistency through the same order with program order in
/// place of real time.
pub fn check_sc_witness(h: &History) -> Verdict {
    witness(h, Precedence::ProgramOrder)
}
