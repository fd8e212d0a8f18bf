//! SCD-broadcast over reliable FIFO channels, tolerating any minority of
//! crashes.
//!
//! Each process runs an [`ScdProcess`]: a run-to-completion state machine
//! that never blocks. The caller (normally the simulator) feeds it local
//! broadcast requests and incoming [`ForwardMsg`]s, and carries out the
//! point-to-point sends it returns in [`Effects`]. Sends must reach each
//! destination in the order they were emitted.
//!
//! A broadcast request does not block the process either: it is recorded as
//! pending and reported complete (in [`Effects::completed`]) once no
//! message of this process is left in its buffer.

use std::fmt;

use thiserror::Error;

use crate::types::{AppMessage, MessageSet, MsgId, ProcessId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScdError {
    #[error("process {proc} already has broadcast {pending} in progress")]
    BroadcastPending { proc: ProcessId, pending: MsgId },
    #[error("message {id} was not created by process {proc}")]
    ForeignMessage { proc: ProcessId, id: MsgId },
}

/// Local progress of a forwarder as recorded in a buffer entry. `Infinity`
/// means the forwarder has not been heard from for this message yet.
///
/// The derived order puts every finite value below `Infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClockValue {
    Finite(u64),
    Infinity,
}

impl ClockValue {
    pub fn is_finite(self) -> bool {
        matches!(self, ClockValue::Finite(_))
    }
}

impl fmt::Display for ClockValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockValue::Finite(v) => write!(f, "{v}"),
            ClockValue::Infinity => f.write_str("inf"),
        }
    }
}

/// The protocol message `FORWARD(m, sd, sn_sd, f, sn_f)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ForwardMsg {
    pub m: AppMessage,
    /// Original sender of `m`.
    pub sd: ProcessId,
    /// Progress counter of `sd` when it first forwarded `m`.
    pub sn_sd: u64,
    /// The forwarding process.
    pub f: ProcessId,
    /// Progress counter of `f` when it forwarded `m`.
    pub sn_f: u64,
}

/// A message waiting in a process's buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferEntry {
    pub m: AppMessage,
    pub sd: ProcessId,
    pub sn: u64,
    /// `cl[f]` is the progress of forwarder `f` when it forwarded `m`.
    pub cl: Vec<ClockValue>,
}

impl BufferEntry {
    /// Number of processes known to have forwarded this message.
    pub fn seen_count(&self) -> usize {
        self.cl.iter().filter(|c| c.is_finite()).count()
    }

    /// Number of forwarders that forwarded `self` strictly before `other`.
    fn before_count(&self, other: &BufferEntry) -> usize {
        self.cl.iter().zip(&other.cl).filter(|(a, b)| a < b).count()
    }
}

/// A point-to-point send produced by a handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Send {
    pub to: ProcessId,
    pub msg: ForwardMsg,
}

/// Everything a handler asks the environment to do or to report.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Effects {
    /// Sends, in emission order. A FIFO broadcast is `n` consecutive sends
    /// addressed to processes `1..=n`.
    pub sends: Vec<Send>,
    /// The message set delivered by this handler, if any.
    pub delivered: Option<MessageSet>,
    /// The local broadcast that completed during this handler, if any.
    pub completed: Option<MsgId>,
}

/// Deliberate protocol defects, used to show the checkers catch them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Deliver every majority-seen message without the ordering purge.
    SkipPurge,
    /// Treat a message seen by exactly half of the processes as deliverable.
    HalfQuorum,
}

/// Per-process state of the message-passing SCD-broadcast.
#[derive(Debug, Clone)]
pub struct ScdProcess {
    me: ProcessId,
    n: usize,
    buffer: Vec<BufferEntry>,
    /// Greatest delivered sequence number per origin; `None` until the first
    /// delivery from that origin (sequence numbers start at 0).
    clock: Vec<Option<u64>>,
    sn: u64,
    pending: Option<MsgId>,
    fault: Option<Fault>,
}

impl ScdProcess {
    pub fn new(me: ProcessId, n: usize) -> Self {
        assert!(me.index() < n, "process {me} outside 1..={n}");
        ScdProcess {
            me,
            n,
            buffer: Vec::new(),
            clock: vec![None; n],
            sn: 0,
            pending: None,
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn id(&self) -> ProcessId {
        self.me
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn buffer(&self) -> &[BufferEntry] {
        &self.buffer
    }

    pub fn clock(&self) -> &[Option<u64>] {
        &self.clock
    }

    pub fn sn(&self) -> u64 {
        self.sn
    }

    pub fn pending_broadcast(&self) -> Option<MsgId> {
        self.pending
    }

    /// Starts broadcasting `m`. The message is forwarded locally right away;
    /// completion is reported by a later handler.
    pub fn scbroadcast(&mut self, m: AppMessage) -> Result<Effects, ScdError> {
        if let Some(pending) = self.pending {
            return Err(ScdError::BroadcastPending {
                proc: self.me,
                pending,
            });
        }
        if m.id.sender != self.me {
            return Err(ScdError::ForeignMessage {
                proc: self.me,
                id: m.id,
            });
        }
        let mut effects = Effects::default();
        self.pending = Some(m.id);
        let sn = self.sn;
        self.forward(
            ForwardMsg {
                m,
                sd: self.me,
                sn_sd: sn,
                f: self.me,
                sn_f: sn,
            },
            &mut effects.sends,
        );
        Ok(effects)
    }

    /// Handles a FORWARD message received from `fmsg.f`.
    pub fn on_forward(&mut self, fmsg: ForwardMsg) -> Effects {
        let mut effects = Effects::default();
        self.forward(fmsg, &mut effects.sends);
        effects.delivered = self.try_deliver();
        if let Some(id) = self.pending {
            if !self.buffer.iter().any(|e| e.sd == self.me) {
                self.pending = None;
                effects.completed = Some(id);
            }
        }
        effects
    }

    fn forward(&mut self, fmsg: ForwardMsg, out: &mut Vec<Send>) {
        let ForwardMsg {
            m,
            sd,
            sn_sd,
            f,
            sn_f,
        } = fmsg;
        if self.clock[sd.index()].is_some_and(|c| sn_sd <= c) {
            return;
        }
        if let Some(entry) = self.buffer.iter_mut().find(|e| e.sd == sd && e.sn == sn_sd) {
            entry.cl[f.index()] = ClockValue::Finite(sn_f);
            return;
        }
        let mut cl = vec![ClockValue::Infinity; self.n];
        cl[f.index()] = ClockValue::Finite(sn_f);
        self.buffer.push(BufferEntry {
            m: m.clone(),
            sd,
            sn: sn_sd,
            cl,
        });
        for to in ProcessId::all(self.n) {
            out.push(Send {
                to,
                msg: ForwardMsg {
                    m: m.clone(),
                    sd,
                    sn_sd,
                    f: self.me,
                    sn_f: self.sn,
                },
            });
        }
        self.sn += 1;
    }

    /// Delivers the largest set of buffered messages that is safe to deliver
    /// now, if it is non-empty.
    pub fn try_deliver(&mut self) -> Option<MessageSet> {
        let chosen = match self.fault {
            Some(Fault::SkipPurge) => majority_seen(&self.buffer, self.n),
            Some(Fault::HalfQuorum) => {
                let seen: Vec<bool> = self
                    .buffer
                    .iter()
                    .map(|e| 2 * e.seen_count() >= self.n)
                    .collect();
                purge_from(&self.buffer, self.n, seen, None)
            }
            None => deliverable(&self.buffer, self.n),
        };
        if !chosen.iter().any(|&c| c) {
            return None;
        }
        let mut taken = Vec::new();
        let mut kept = Vec::with_capacity(self.buffer.len());
        for (entry, take) in self.buffer.drain(..).zip(chosen) {
            if take {
                taken.push(entry);
            } else {
                kept.push(entry);
            }
        }
        self.buffer = kept;
        taken.sort_by_key(|e| (e.sd, e.sn));
        for e in &taken {
            let slot = &mut self.clock[e.sd.index()];
            debug_assert!(
                slot.is_none_or(|c| c < e.sn),
                "delivered entry {}/{} not above clock",
                e.sd,
                e.sn
            );
            if slot.is_none_or(|c| c < e.sn) {
                *slot = Some(e.sn);
            }
        }
        Some(
            MessageSet::new(taken.into_iter().map(|e| e.m))
                .expect("buffer holds at most one entry per message"),
        )
    }
}

fn majority_seen(buffer: &[BufferEntry], n: usize) -> Vec<bool> {
    buffer.iter().map(|e| 2 * e.seen_count() > n).collect()
}

/// Marks the buffer entries that form the next deliverable set: entries seen
/// by a majority, minus any entry that a non-deliverable entry may have to
/// precede, repeated until nothing more is removed.
pub fn deliverable(buffer: &[BufferEntry], n: usize) -> Vec<bool> {
    purge_from(buffer, n, majority_seen(buffer, n), None)
}

/// The purge loop, examining candidates in `order` (all indices, ascending,
/// when `None`). The result does not depend on the order; the parameter is
/// there so tests can check that.
#[doc(hidden)]
pub fn purge_from(
    buffer: &[BufferEntry],
    n: usize,
    mut chosen: Vec<bool>,
    order: Option<&[usize]>,
) -> Vec<bool> {
    let default_order: Vec<usize>;
    let order = match order {
        Some(o) => o,
        None => {
            default_order = (0..buffer.len()).collect();
            &default_order
        }
    };
    loop {
        let mut removed = false;
        for &i in order {
            if !chosen[i] {
                continue;
            }
            let blocked = buffer
                .iter()
                .enumerate()
                .any(|(j, other)| !chosen[j] && 2 * buffer[i].before_count(other) <= n);
            if blocked {
                chosen[i] = false;
                removed = true;
            }
        }
        if !removed {
            return chosen;
        }
    }
}
