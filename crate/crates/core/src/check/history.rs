//! Operation histories of snapshot and register workloads.

use std::collections::BTreeSet;

use crate::objects::{parse_values, Payload, Value};
use crate::sim::{Kind, Trace};
use crate::types::{parse_ids, MsgId, ProcessId, Timestamp, TimestampArray};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    /// A snapshot, or a register read (a snapshot of one register).
    Snapshot,
    /// `r` counts from 1.
    Write { r: usize, v: Value },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    pub proc: ProcessId,
    pub kind: OpKind,
    /// Trace step of the invocation.
    pub invoke: u64,
    /// Trace step of the return; `None` while pending.
    pub ret: Option<u64>,
    /// Snapshot result.
    pub values: Option<Vec<Value>>,
    /// Snapshot: the replica's timestamp array at return.
    pub tsa: Option<TimestampArray>,
    /// Write: the timestamp its WRITE message carried.
    pub ts: Option<Timestamp>,
    /// Write: its WRITE message was delivered by at least one process.
    pub visible: bool,
    /// scbroadcasts issued while the operation ran.
    pub broadcasts: usize,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.ret.is_some()
    }

    pub fn is_write(&self) -> bool {
        matches!(self.kind, OpKind::Write { .. })
    }

    /// Completed snapshot with the given result.
    pub fn snapshot(proc: ProcessId, invoke: u64, ret: u64, values: Vec<Value>) -> Self {
        OpRecord {
            proc,
            kind: OpKind::Snapshot,
            invoke,
            ret: Some(ret),
            values: Some(values),
            tsa: None,
            ts: None,
            visible: false,
            broadcasts: 0,
        }
    }

    /// Write; `ret` is `None` for a pending one.
    pub fn write(proc: ProcessId, r: usize, v: Value, invoke: u64, ret: Option<u64>) -> Self {
        OpRecord {
            proc,
            kind: OpKind::Write { r, v },
            invoke,
            ret,
            values: None,
            tsa: None,
            ts: None,
            visible: ret.is_some(),
            broadcasts: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    /// Number of registers.
    pub m: usize,
    pub ops: Vec<OpRecord>,
    /// Every timestamp array a replica held after a delivery, in trace
    /// order.
    pub tsa_log: Vec<(ProcessId, TimestampArray)>,
}

impl History {
    pub fn new(m: usize, ops: Vec<OpRecord>) -> Self {
        History {
            m,
            ops,
            tsa_log: Vec::new(),
        }
    }

    pub fn complete_count(&self) -> usize {
        self.ops.iter().filter(|o| o.is_complete()).count()
    }

    /// Extracts the history of an object workload.
    pub fn from_trace(trace: &Trace, n: usize, m: usize) -> Result<History, String> {
        let mut h = History {
            m,
            ..History::default()
        };
        let mut current: Vec<Option<usize>> = vec![None; n];
        let mut write_msg: Vec<Option<MsgId>> = Vec::new();
        let mut delivered: BTreeSet<MsgId> = BTreeSet::new();
        for e in &trace.events {
            match e.kind {
                Kind::OpInvoke => {
                    let p = e.process()?;
                    if current[p.index()].is_some() {
                        return Err(format!("p{p} invokes at step {} while busy", e.step));
                    }
                    let kind = match e.field("kind")? {
                        "snapshot" | "read" => OpKind::Snapshot,
                        "write" => OpKind::Write {
                            r: e.parse_field("r")?,
                            v: e.parse_field("v")?,
                        },
                        other => return Err(format!("unknown operation `{other}`")),
                    };
                    current[p.index()] = Some(h.ops.len());
                    write_msg.push(None);
                    h.ops.push(OpRecord {
                        proc: p,
                        kind,
                        invoke: e.step,
                        ret: None,
                        values: None,
                        tsa: None,
                        ts: None,
                        visible: false,
                        broadcasts: 0,
                    });
                }
                Kind::ScBroadcast => {
                    let p = e.process()?;
                    let Some(k) = current[p.index()] else {
                        continue;
                    };
                    h.ops[k].broadcasts += 1;
                    let bytes = hex::decode(e.field("payload")?)
                        .map_err(|_| format!("bad payload hex at step {}", e.step))?;
                    if let Ok(Payload::Write { ts, .. }) = Payload::decode(&bytes) {
                        h.ops[k].ts = Some(ts);
                        write_msg[k] = Some(e.parse_field("msg")?);
                    }
                }
                Kind::OpReturn => {
                    let p = e.process()?;
                    let k = current[p.index()].take().ok_or_else(|| {
                        format!("p{p} returns at step {} with nothing pending", e.step)
                    })?;
                    let op = &mut h.ops[k];
                    op.ret = Some(e.step);
                    match op.kind {
                        OpKind::Snapshot => {
                            op.values = Some(
                                parse_values(e.field("values")?).map_err(|err| err.to_string())?,
                            );
                            op.tsa = Some(e.parse_field("tsa")?);
                        }
                        OpKind::Write { .. } => {
                            let ts: Timestamp = e.parse_field("ts")?;
                            if op.ts.is_some_and(|sent| sent != ts) {
                                return Err(format!(
                                    "write returning at step {} reports {ts}, its WRITE carried {}",
                                    e.step,
                                    op.ts.unwrap()
                                ));
                            }
                            op.ts = Some(ts);
                        }
                    }
                }
                Kind::ObjTsa => h.tsa_log.push((e.process()?, e.parse_field("tsa")?)),
                Kind::ScdDeliver => {
                    delivered.extend(parse_ids(e.field("set")?).map_err(|err| err.to_string())?)
                }
                _ => {}
            }
        }
        for (op, msg) in h.ops.iter_mut().zip(write_msg) {
            op.visible = msg.is_some_and(|id| delivered.contains(&id));
        }
        Ok(h)
    }
}
