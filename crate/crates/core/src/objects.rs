//! Shared objects built on top of any SCD-broadcast service.
//!
//! The replicas in this module are pure state machines. An invocation or a
//! delivered message set yields a list of [`Action`]s: either a payload to
//! hand to the local SCD-broadcast, or the completion of the pending
//! operation. The caller owns the broadcast layer and must not request a new
//! broadcast before the previous one has been delivered locally; the
//! replicas never ask for that.
//!
//! * [`SnapshotObject`]: an `m`-register multi-writer snapshot. Both
//!   operations first broadcast a `SYNC` and wait for it to come back, which
//!   pulls in every write that must be visible; a write then broadcasts its
//!   `WRITE` and waits for it too.
//! * [`MwmrRegister`]: the same object restricted to one register.
//! * [`SwmrRegister`]: one designated writer, dates instead of full
//!   timestamps.
//! * The `sc_*` operations drop the `SYNC` round trips. The result is
//!   sequentially consistent but not linearizable.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::types::{MessageSet, ProcessId, Timestamp, TimestampArray};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObjectError {
    #[error("process {0} already has an operation in progress")]
    OperationPending(ProcessId),
    #[error("register index {r} outside 1..={m}")]
    RegisterOutOfRange { r: usize, m: usize },
    #[error("process {proc} may not write; the writer is {writer}")]
    NotWriter { proc: ProcessId, writer: ProcessId },
    #[error("malformed object payload `{0}`")]
    BadPayload(String),
}

/// An opaque register value. Equality is byte equality; the initial value of
/// every register is the empty byte string.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(pub Vec<u8>);

impl Value {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value(s.as_bytes().to_vec())
    }
}

/// Hex rendering, so values survive the line-oriented trace format.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.0))
    }
}

impl FromStr for Value {
    type Err = ObjectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        hex::decode(s)
            .map(Value)
            .map_err(|_| ObjectError::BadPayload(s.to_string()))
    }
}

/// Renders a value vector as comma-separated hex.
pub fn render_values(values: &[Value]) -> String {
    values
        .iter()
        .map(Value::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_values(s: &str) -> Result<Vec<Value>, ObjectError> {
    s.split(',').map(str::parse).collect()
}

/// What the object layer puts inside an application message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Sync {
        origin: ProcessId,
    },
    /// `r` counts from 1.
    Write {
        r: usize,
        v: Value,
        ts: Timestamp,
    },
}

impl Payload {
    /// Canonical encoding: `SYNC origin=<p>` or `WRITE r=<r> v=<hex> ts=<d>:<p>`.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Payload::Sync { origin } => format!("SYNC origin={origin}"),
            Payload::Write { r, v, ts } => format!("WRITE r={r} v={v} ts={ts}"),
        }
        .into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Payload, ObjectError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| ObjectError::BadPayload(String::from_utf8_lossy(bytes).into_owned()))?;
        let bad = || ObjectError::BadPayload(text.to_string());
        let mut parts = text.split(' ');
        let tag = parts.next().ok_or_else(bad)?;
        let mut field = |name: &str| -> Result<&str, ObjectError> {
            let part = parts.next().ok_or_else(bad)?;
            part.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(bad)
        };
        let payload = match tag {
            "SYNC" => Payload::Sync {
                origin: field("origin")?.parse().map_err(|_| bad())?,
            },
            "WRITE" => {
                let r = field("r")?.parse().map_err(|_| bad())?;
                let v = field("v")?.parse()?;
                let ts = field("ts")?.parse().map_err(|_| bad())?;
                Payload::Write { r, v, ts }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(payload)
    }
}

/// Result of a completed operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpResult {
    /// A snapshot (or register read): the values returned and the replica's
    /// timestamp array at return time.
    Snapshot {
        values: Vec<Value>,
        tsa: TimestampArray,
    },
    /// A write, with the timestamp it was tagged with.
    Write { ts: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Hand this payload to the local SCD-broadcast.
    Broadcast(Payload),
    /// The pending operation returns.
    Complete(OpResult),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Pending {
    Snapshot,
    /// Waiting for the SYNC that precedes a write.
    WriteSync {
        r: usize,
        v: Value,
    },
    /// Waiting for the write's own WRITE message.
    WriteApply {
        ts: Timestamp,
    },
}

/// Common surface the simulator drives.
pub trait Replica {
    /// Processes one delivered message set.
    fn on_set_delivered(&mut self, ms: &MessageSet) -> Vec<Action>;
    /// Current timestamp array.
    fn tsa(&self) -> TimestampArray;
    /// True when no operation is pending.
    fn is_idle(&self) -> bool;
}

/// Replica of an `m`-register multi-writer snapshot object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SnapshotObject {
    me: ProcessId,
    reg: Vec<Value>,
    tsa: TimestampArray,
    done: bool,
    pending: Option<Pending>,
}

impl SnapshotObject {
    pub fn new(me: ProcessId, m: usize) -> Self {
        assert!(m >= 1, "a snapshot object needs at least one register");
        SnapshotObject {
            me,
            reg: vec![Value::default(); m],
            tsa: TimestampArray::initial(m),
            done: true,
            pending: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.me
    }

    pub fn registers(&self) -> &[Value] {
        &self.reg
    }

    pub fn timestamps(&self) -> &TimestampArray {
        &self.tsa
    }

    pub fn done(&self) -> bool {
        self.done
    }

    fn idle(&self) -> Result<(), ObjectError> {
        match self.pending {
            Some(_) => Err(ObjectError::OperationPending(self.me)),
            None => Ok(()),
        }
    }

    fn check_index(&self, r: usize) -> Result<(), ObjectError> {
        if r == 0 || r > self.reg.len() {
            return Err(ObjectError::RegisterOutOfRange {
                r,
                m: self.reg.len(),
            });
        }
        Ok(())
    }

    fn sync(&mut self, pending: Pending) -> Vec<Action> {
        self.done = false;
        self.pending = Some(pending);
        vec![Action::Broadcast(Payload::Sync { origin: self.me })]
    }

    fn broadcast_write(&mut self, r: usize, v: Value) -> Vec<Action> {
        let ts = Timestamp::new(self.tsa.get(r).date + 1, self.me);
        self.done = false;
        self.pending = Some(Pending::WriteApply { ts });
        vec![Action::Broadcast(Payload::Write { r, v, ts })]
    }

    fn snapshot_result(&self) -> OpResult {
        OpResult::Snapshot {
            values: self.reg.clone(),
            tsa: self.tsa.clone(),
        }
    }

    /// Starts a linearizable snapshot.
    pub fn snapshot(&mut self) -> Result<Vec<Action>, ObjectError> {
        self.idle()?;
        Ok(self.sync(Pending::Snapshot))
    }

    /// Starts a linearizable write of `v` into register `r` (from 1).
    pub fn write(&mut self, r: usize, v: Value) -> Result<Vec<Action>, ObjectError> {
        self.idle()?;
        self.check_index(r)?;
        Ok(self.sync(Pending::WriteSync { r, v }))
    }

    /// Sequentially consistent snapshot: returns the local copy at once.
    pub fn sc_snapshot(&mut self) -> Result<Vec<Action>, ObjectError> {
        self.idle()?;
        Ok(vec![Action::Complete(self.snapshot_result())])
    }

    /// Sequentially consistent write: no SYNC round before the WRITE.
    pub fn sc_write(&mut self, r: usize, v: Value) -> Result<Vec<Action>, ObjectError> {
        self.idle()?;
        self.check_index(r)?;
        Ok(self.broadcast_write(r, v))
    }
}

impl Replica for SnapshotObject {
    fn on_set_delivered(&mut self, ms: &MessageSet) -> Vec<Action> {
        let mut own = false;
        let mut greatest: Vec<Option<(Timestamp, &Value)>> = vec![None; self.reg.len()];
        let decoded: Vec<(bool, Option<Payload>)> = ms
            .iter()
            .map(|msg| {
                (
                    msg.id.sender == self.me,
                    Payload::decode(msg.payload()).ok(),
                )
            })
            .collect();
        for (from_me, payload) in &decoded {
            own |= *from_me;
            if let Some(Payload::Write { r, v, ts }) = payload {
                // WRITEs for registers this replica doesn't have are ignored.
                if let Some(slot) = greatest.get_mut(r.wrapping_sub(1)) {
                    if slot.is_none_or(|(best, _)| best < *ts) {
                        *slot = Some((*ts, v));
                    }
                }
            }
        }
        for (r, slot) in greatest.into_iter().enumerate() {
            if let Some((ts, v)) = slot {
                if self.tsa.get(r + 1) < ts {
                    self.reg[r] = v.clone();
                    self.tsa.set(r + 1, ts);
                }
            }
        }
        if !own {
            return Vec::new();
        }
        self.done = true;
        match self.pending.take() {
            Some(Pending::Snapshot) => vec![Action::Complete(self.snapshot_result())],
            Some(Pending::WriteSync { r, v }) => self.broadcast_write(r, v),
            Some(Pending::WriteApply { ts }) => vec![Action::Complete(OpResult::Write { ts })],
            None => Vec::new(),
        }
    }

    fn tsa(&self) -> TimestampArray {
        self.tsa.clone()
    }

    fn is_idle(&self) -> bool {
        self.pending.is_none()
    }
}

/// Multi-writer multi-reader register: a one-register snapshot object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MwmrRegister(SnapshotObject);

impl MwmrRegister {
    pub fn new(me: ProcessId) -> Self {
        MwmrRegister(SnapshotObject::new(me, 1))
    }

    pub fn value(&self) -> &Value {
        &self.0.registers()[0]
    }

    pub fn read(&mut self) -> Result<Vec<Action>, ObjectError> {
        self.0.snapshot()
    }

    pub fn write(&mut self, v: Value) -> Result<Vec<Action>, ObjectError> {
        self.0.write(1, v)
    }

    pub fn sc_read(&mut self) -> Result<Vec<Action>, ObjectError> {
        self.0.sc_snapshot()
    }

    pub fn sc_write(&mut self, v: Value) -> Result<Vec<Action>, ObjectError> {
        self.0.sc_write(1, v)
    }
}

impl Replica for MwmrRegister {
    fn on_set_delivered(&mut self, ms: &MessageSet) -> Vec<Action> {
        self.0.on_set_delivered(ms)
    }

    fn tsa(&self) -> TimestampArray {
        self.0.tsa()
    }

    fn is_idle(&self) -> bool {
        self.0.is_idle()
    }
}

/// Single-writer multi-reader register. Only `writer` may write; it numbers
/// its writes 1, 2, 3, ... and every replica keeps the value with the
/// highest date it has seen.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwmrRegister {
    me: ProcessId,
    writer: ProcessId,
    value: Value,
    /// Date of `value` (0 for the initial value).
    date: u64,
    /// Writer only: dates handed out so far.
    next_date: u64,
    done: bool,
    pending: Option<Pending>,
}

impl SwmrRegister {
    pub fn new(me: ProcessId, writer: ProcessId) -> Self {
        SwmrRegister {
            me,
            writer,
            value: Value::default(),
            date: 0,
            next_date: 0,
            done: true,
            pending: None,
        }
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    pub fn writer(&self) -> ProcessId {
        self.writer
    }

    fn timestamp(&self) -> Timestamp {
        if self.date == 0 {
            Timestamp::INITIAL
        } else {
            Timestamp::new(self.date, self.writer)
        }
    }

    fn idle(&self) -> Result<(), ObjectError> {
        match self.pending {
            Some(_) => Err(ObjectError::OperationPending(self.me)),
            None => Ok(()),
        }
    }

    pub fn read(&mut self) -> Result<Vec<Action>, ObjectError> {
        self.idle()?;
        self.done = false;
        self.pending = Some(Pending::Snapshot);
        Ok(vec![Action::Broadcast(Payload::Sync { origin: self.me })])
    }

    pub fn write(&mut self, v: Value) -> Result<Vec<Action>, ObjectError> {
        if self.me != self.writer {
            return Err(ObjectError::NotWriter {
                proc: self.me,
                writer: self.writer,
            });
        }
        self.idle()?;
        self.done = false;
        self.pending = Some(Pending::WriteSync { r: 1, v });
        Ok(vec![Action::Broadcast(Payload::Sync { origin: self.me })])
    }
}

impl Replica for SwmrRegister {
    fn on_set_delivered(&mut self, ms: &MessageSet) -> Vec<Action> {
        let mut own = false;
        let mut best: Option<(u64, Value)> = None;
        for msg in ms {
            own |= msg.id.sender == self.me;
            if let Ok(Payload::Write { v, ts, .. }) = Payload::decode(msg.payload()) {
                if best.as_ref().is_none_or(|(d, _)| *d < ts.date) {
                    best = Some((ts.date, v));
                }
            }
        }
        if let Some((date, v)) = best {
            if date > self.date {
                self.date = date;
                self.value = v;
            }
        }
        if !own {
            return Vec::new();
        }
        self.done = true;
        match self.pending.take() {
            Some(Pending::Snapshot) => vec![Action::Complete(OpResult::Snapshot {
                values: vec![self.value.clone()],
                tsa: self.tsa(),
            })],
            Some(Pending::WriteSync { v, .. }) => {
                self.next_date += 1;
                let ts = Timestamp::new(self.next_date, self.me);
                self.done = false;
                self.pending = Some(Pending::WriteApply { ts });
                vec![Action::Broadcast(Payload::Write { r: 1, v, ts })]
            }
            Some(Pending::WriteApply { ts }) => vec![Action::Complete(OpResult::Write { ts })],
            None => Vec::new(),
        }
    }

    fn tsa(&self) -> TimestampArray {
        TimestampArray::from_vec(vec![self.timestamp()])
    }

    fn is_idle(&self) -> bool {
        self.pending.is_none()
    }
}
