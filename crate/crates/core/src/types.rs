//! Process identities, timestamps, message identities and message sets.
//!
//! Everything here is a plain value type. The orders defined on timestamps
//! and timestamp arrays are the ones the snapshot construction and its
//! linearization argument rely on.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// Errors raised when parsing the canonical textual forms of the types in
/// this module, or when combining values of mismatched shape.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("invalid process id `{0}`")]
    BadProcessId(String),
    #[error("invalid timestamp `{0}`")]
    BadTimestamp(String),
    #[error("invalid message id `{0}`")]
    BadMsgId(String),
    #[error("timestamp arrays differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("message set is empty")]
    EmptySet,
    #[error("message {0} appears twice in one set")]
    DuplicateMessage(MsgId),
}

/// Identity of one of the `n` processes, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(u32);

impl ProcessId {
    /// Builds a process id. Ids start at 1; `0` is rejected.
    pub fn new(id: u32) -> Result<Self, TypeError> {
        if id == 0 {
            return Err(TypeError::BadProcessId(id.to_string()));
        }
        Ok(ProcessId(id))
    }

    /// The id of the process stored at zero-based position `index`.
    pub fn from_index(index: usize) -> Self {
        ProcessId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position, for indexing per-process arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// All process ids of an `n`-process system, in order.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> {
        (0..n).map(ProcessId::from_index)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ProcessId {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id: u32 = s
            .parse()
            .map_err(|_| TypeError::BadProcessId(s.to_string()))?;
        ProcessId::new(id).map_err(|_| TypeError::BadProcessId(s.to_string()))
    }
}

/// A version tag `⟨date, proc⟩` attached to every written value.
///
/// `proc` is `None` only for the initial value `⟨0, none⟩`. Since `None`
/// sorts below every `Some`, the derived lexicographic order is exactly the
/// timestamp order used by the register protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub date: u64,
    pub proc: Option<ProcessId>,
}

impl Timestamp {
    /// The timestamp of every register's initial value.
    pub const INITIAL: Timestamp = Timestamp {
        date: 0,
        proc: None,
    };

    pub fn new(date: u64, proc: ProcessId) -> Self {
        Timestamp {
            date,
            proc: Some(proc),
        }
    }
}

/// Strict lexicographic order on timestamps: by date, then by process.
pub fn ts_less(a: Timestamp, b: Timestamp) -> bool {
    a < b
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.proc {
            Some(p) => write!(f, "{}:{}", self.date, p),
            None => write!(f, "{}:-", self.date),
        }
    }
}

impl FromStr for Timestamp {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TypeError::BadTimestamp(s.to_string());
        let (date, proc) = s.split_once(':').ok_or_else(bad)?;
        let date: u64 = date.parse().map_err(|_| bad())?;
        let proc = match proc {
            "-" => None,
            p => Some(p.parse().map_err(|_| bad())?),
        };
        Ok(Timestamp { date, proc })
    }
}

/// Result of comparing two timestamp arrays under the pointwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsaOrdering {
    Less,
    Equal,
    Greater,
    Incomparable,
}

/// One timestamp per register of a snapshot object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimestampArray(Vec<Timestamp>);

impl TimestampArray {
    /// `m` initial timestamps.
    pub fn initial(m: usize) -> Self {
        TimestampArray(vec![Timestamp::INITIAL; m])
    }

    pub fn from_vec(entries: Vec<Timestamp>) -> Self {
        TimestampArray(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entry for register `r`, counting from 1.
    pub fn get(&self, r: usize) -> Timestamp {
        self.0[r - 1]
    }

    pub fn set(&mut self, r: usize, ts: Timestamp) {
        self.0[r - 1] = ts;
    }

    pub fn entries(&self) -> &[Timestamp] {
        &self.0
    }

    /// Pointwise comparison. Arrays of different lengths are a usage error.
    pub fn compare(&self, other: &TimestampArray) -> Result<TsaOrdering, TypeError> {
        tsa_compare(self, other)
    }

    /// `self ≤ other` pointwise.
    pub fn le(&self, other: &TimestampArray) -> bool {
        matches!(
            tsa_compare(self, other),
            Ok(TsaOrdering::Less | TsaOrdering::Equal)
        )
    }
}

/// Compares two timestamp arrays entry by entry.
pub fn tsa_compare(a: &TimestampArray, b: &TimestampArray) -> Result<TsaOrdering, TypeError> {
    if a.len() != b.len() {
        return Err(TypeError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut some_less = false;
    let mut some_greater = false;
    for (x, y) in a.0.iter().zip(&b.0) {
        match x.cmp(y) {
            Ordering::Less => some_less = true,
            Ordering::Greater => some_greater = true,
            Ordering::Equal => {}
        }
    }
    Ok(match (some_less, some_greater) {
        (false, false) => TsaOrdering::Equal,
        (true, false) => TsaOrdering::Less,
        (false, true) => TsaOrdering::Greater,
        (true, true) => TsaOrdering::Incomparable,
    })
}

impl fmt::Display for TimestampArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ts) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{ts}")?;
        }
        Ok(())
    }
}

impl FromStr for TimestampArray {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Ok(TimestampArray(Vec::new()));
        }
        s.split(',')
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(TimestampArray)
    }
}

/// Identity of a broadcast message: its sender and the sender's local count
/// of messages broadcast before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId {
    pub sender: ProcessId,
    pub seq: u64,
}

impl MsgId {
    pub fn new(sender: ProcessId, seq: u64) -> Self {
        MsgId { sender, seq }
    }
}

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.sender, self.seq)
    }
}

impl FromStr for MsgId {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TypeError::BadMsgId(s.to_string());
        let (sender, seq) = s.split_once('.').ok_or_else(bad)?;
        Ok(MsgId {
            sender: sender.parse().map_err(|_| bad())?,
            seq: seq.parse().map_err(|_| bad())?,
        })
    }
}

/// An application message: identity plus an opaque, immutable payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AppMessage {
    pub id: MsgId,
    payload: Arc<[u8]>,
}

impl AppMessage {
    pub fn new(id: MsgId, payload: impl Into<Vec<u8>>) -> Self {
        AppMessage {
            id,
            payload: payload.into().into(),
        }
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

impl PartialOrd for AppMessage {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AppMessage {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id
            .cmp(&other.id)
            .then_with(|| self.payload.cmp(&other.payload))
    }
}

/// A non-empty set of application messages, delivered as one unit.
///
/// Messages are kept sorted by id and no id occurs twice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageSet(Vec<AppMessage>);

impl MessageSet {
    /// Builds a set, rejecting empty input and duplicate ids.
    pub fn new(msgs: impl IntoIterator<Item = AppMessage>) -> Result<Self, TypeError> {
        let mut msgs: Vec<AppMessage> = msgs.into_iter().collect();
        if msgs.is_empty() {
            return Err(TypeError::EmptySet);
        }
        msgs.sort();
        for pair in msgs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(TypeError::DuplicateMessage(pair[0].id));
            }
        }
        Ok(MessageSet(msgs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AppMessage> {
        self.0.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = MsgId> + '_ {
        self.0.iter().map(|m| m.id)
    }

    pub fn id_set(&self) -> BTreeSet<MsgId> {
        self.ids().collect()
    }

    pub fn contains(&self, id: MsgId) -> bool {
        self.0.binary_search_by(|m| m.id.cmp(&id)).is_ok()
    }
}

impl<'a> IntoIterator for &'a MessageSet {
    type Item = &'a AppMessage;
    type IntoIter = std::slice::Iter<'a, AppMessage>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Renders a collection of message ids as `a.b,c.d`, the form used in traces.
pub fn render_ids<'a>(ids: impl IntoIterator<Item = &'a MsgId>) -> String {
    let mut out = String::new();
    for (i, id) in ids.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&id.to_string());
    }
    out
}

/// Inverse of [`render_ids`].
pub fn parse_ids(s: &str) -> Result<Vec<MsgId>, TypeError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}
