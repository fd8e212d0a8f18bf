//! SCD-broadcast on top of two single-writer snapshot objects.
//!
//! `SENT[i]` holds everything process `i` has broadcast and `SETSEQ[i]` the
//! sequence of sets it has delivered. A process delivers by first copying
//! the set boundaries other processes already committed to (catch-up) and
//! then delivering whatever is left in `SENT` as one set.
//!
//! [`RwProcess`] is a step machine: every call to [`RwProcess::step`] does
//! exactly one shared-memory operation plus the local work that follows it,
//! so a scheduler can interleave processes at memory-operation granularity.
//! A process runs at most one `progress` frame at a time.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{AppMessage, MessageSet, MsgId, ProcessId};

pub type SentCell = Arc<BTreeSet<AppMessage>>;
pub type SeqCell = Arc<Vec<MessageSet>>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RwError {
    #[error("process {0} is inside a progress frame")]
    Busy(ProcessId),
    #[error("message {id} does not belong to process {proc}")]
    ForeignMessage { proc: ProcessId, id: MsgId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemObject {
    Sent,
    SetSeq,
}

impl fmt::Display for MemObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemObject::Sent => "SENT",
            MemObject::SetSeq => "SETSEQ",
        })
    }
}

/// The shared memory both snapshot objects live in.
///
/// Versions count writes across both objects, starting from 0 for the
/// initial state.
pub trait SharedMemory {
    fn write_sent(&mut self, writer: ProcessId, value: SentCell) -> u64;
    fn write_setseq(&mut self, writer: ProcessId, value: SeqCell) -> u64;
    fn snapshot_sent(&mut self, reader: ProcessId) -> (Vec<SentCell>, u64);
    fn snapshot_setseq(&mut self, reader: ProcessId) -> (Vec<SeqCell>, u64);
}

/// Linearizable memory: every snapshot sees the latest state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AtomicMemory {
    sent: Vec<SentCell>,
    setseq: Vec<SeqCell>,
    version: u64,
}

impl AtomicMemory {
    pub fn new(n: usize) -> Self {
        AtomicMemory {
            sent: vec![SentCell::default(); n],
            setseq: vec![SeqCell::default(); n],
            version: 0,
        }
    }
}

impl SharedMemory for AtomicMemory {
    fn write_sent(&mut self, writer: ProcessId, value: SentCell) -> u64 {
        self.sent[writer.index()] = value;
        self.version += 1;
        self.version
    }

    fn write_setseq(&mut self, writer: ProcessId, value: SeqCell) -> u64 {
        self.setseq[writer.index()] = value;
        self.version += 1;
        self.version
    }

    fn snapshot_sent(&mut self, _reader: ProcessId) -> (Vec<SentCell>, u64) {
        (self.sent.clone(), self.version)
    }

    fn snapshot_setseq(&mut self, _reader: ProcessId) -> (Vec<SeqCell>, u64) {
        (self.setseq.clone(), self.version)
    }
}

/// Sequentially consistent memory.
///
/// Writes are appended to one global history. A snapshot returns the state
/// at a randomly chosen version no older than the newest version the reader
/// has already observed or produced, so each process moves forward through
/// the history while possibly lagging behind others. Ordering every
/// operation at its version gives one total order that respects program
/// order, which is all sequential consistency asks for.
#[derive(Debug, Clone)]
pub struct SeqConsistentMemory {
    sent: Vec<Vec<(u64, SentCell)>>,
    setseq: Vec<Vec<(u64, SeqCell)>>,
    version: u64,
    cursor: Vec<u64>,
    rng: ChaCha8Rng,
}

impl SeqConsistentMemory {
    pub fn new(n: usize, seed: u64) -> Self {
        SeqConsistentMemory {
            sent: vec![vec![(0, SentCell::default())]; n],
            setseq: vec![vec![(0, SeqCell::default())]; n],
            version: 0,
            cursor: vec![0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn pick(&mut self, reader: ProcessId) -> u64 {
        let v = self
            .rng
            .gen_range(self.cursor[reader.index()]..=self.version);
        self.cursor[reader.index()] = v;
        v
    }

    fn at<T: Clone>(history: &[Vec<(u64, T)>], v: u64) -> Vec<T> {
        history
            .iter()
            .map(|h| {
                let k = h.partition_point(|(stamp, _)| *stamp <= v);
                h[k - 1].1.clone()
            })
            .collect()
    }
}

impl SharedMemory for SeqConsistentMemory {
    fn write_sent(&mut self, writer: ProcessId, value: SentCell) -> u64 {
        self.version += 1;
        self.sent[writer.index()].push((self.version, value));
        self.cursor[writer.index()] = self.version;
        self.version
    }

    fn write_setseq(&mut self, writer: ProcessId, value: SeqCell) -> u64 {
        self.version += 1;
        self.setseq[writer.index()].push((self.version, value));
        self.cursor[writer.index()] = self.version;
        self.version
    }

    fn snapshot_sent(&mut self, reader: ProcessId) -> (Vec<SentCell>, u64) {
        let v = self.pick(reader);
        (Self::at(&self.sent, v), v)
    }

    fn snapshot_setseq(&mut self, reader: ProcessId) -> (Vec<SeqCell>, u64) {
        let v = self.pick(reader);
        (Self::at(&self.setseq, v), v)
    }
}

/// The shared-memory operation a step performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemAccess {
    Write {
        object: MemObject,
        index: ProcessId,
        version: u64,
    },
    Snapshot {
        object: MemObject,
        version: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RwStep {
    pub access: MemAccess,
    pub delivered: Option<MessageSet>,
    /// Set when this step ended the frame of a broadcast.
    pub completed: Option<MsgId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Phase {
    Idle,
    /// Next: add the message to `SENT[i]`.
    Invoke(AppMessage),
    /// Next: snapshot `SETSEQ`.
    CatchUp,
    /// Next: append this residue to `SETSEQ[i]` and deliver it.
    CatchUpWrite(MessageSet),
    /// Next: snapshot `SENT`.
    SentSnapshot,
    /// Next: append the fresh set to `SETSEQ[i]` and deliver it.
    FinalWrite(MessageSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Frame {
    Broadcast(MsgId),
    Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RwProcess {
    me: ProcessId,
    sent: Vec<SentCell>,
    setseq: Vec<SeqCell>,
    /// Ids in `setseq[me]`, kept in sync with it.
    members: BTreeSet<MsgId>,
    phase: Phase,
    frame: Option<Frame>,
}

impl RwProcess {
    pub fn new(me: ProcessId, n: usize) -> Self {
        RwProcess {
            me,
            sent: vec![SentCell::default(); n],
            setseq: vec![SeqCell::default(); n],
            members: BTreeSet::new(),
            phase: Phase::Idle,
            frame: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.me
    }

    /// True when no frame is running and no broadcast is waiting to start.
    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    /// Ids of every message delivered so far.
    pub fn members(&self) -> &BTreeSet<MsgId> {
        &self.members
    }

    /// The sets delivered so far, in order.
    pub fn delivered(&self) -> &[MessageSet] {
        &self.setseq[self.me.index()]
    }

    /// Starts a broadcast. Nothing touches memory until the next
    /// [`step`](Self::step).
    pub fn scbroadcast(&mut self, m: AppMessage) -> Result<(), RwError> {
        if m.id.sender != self.me {
            return Err(RwError::ForeignMessage {
                proc: self.me,
                id: m.id,
            });
        }
        if !self.is_idle() {
            return Err(RwError::Busy(self.me));
        }
        self.phase = Phase::Invoke(m);
        Ok(())
    }

    /// Starts one iteration of the background task.
    pub fn start_tick(&mut self) -> Result<(), RwError> {
        if !self.is_idle() {
            return Err(RwError::Busy(self.me));
        }
        self.phase = Phase::CatchUp;
        self.frame = Some(Frame::Tick);
        Ok(())
    }

    /// Runs the next shared-memory operation. Returns `None` when idle.
    pub fn step(&mut self, mem: &mut impl SharedMemory) -> Option<RwStep> {
        let me = self.me;
        let i = me.index();
        let phase = std::mem::replace(&mut self.phase, Phase::Idle);
        let (access, delivered) = match phase {
            Phase::Idle => return None,
            Phase::Invoke(m) => {
                let id = m.id;
                let mut mine = (*self.sent[i]).clone();
                mine.insert(m);
                self.sent[i] = Arc::new(mine);
                let version = mem.write_sent(me, self.sent[i].clone());
                assert!(self.frame.is_none(), "progress frames of {me} overlap");
                self.frame = Some(Frame::Broadcast(id));
                self.phase = Phase::CatchUp;
                let access = MemAccess::Write {
                    object: MemObject::Sent,
                    index: me,
                    version,
                };
                return Some(RwStep {
                    access,
                    delivered: None,
                    completed: None,
                });
            }
            Phase::CatchUp => {
                let (snap, version) = mem.snapshot_setseq(me);
                debug_assert_eq!(snap[i], self.setseq[i], "own SETSEQ entry went stale");
                self.setseq = snap;
                self.phase = self.after_catch_up_step();
                (
                    MemAccess::Snapshot {
                        object: MemObject::SetSeq,
                        version,
                    },
                    None,
                )
            }
            Phase::CatchUpWrite(set) => {
                let version = self.append(mem, set.clone());
                self.phase = self.after_catch_up_step();
                (version, Some(set))
            }
            Phase::SentSnapshot => {
                let (snap, version) = mem.snapshot_sent(me);
                self.sent = snap;
                let fresh: Vec<AppMessage> = self
                    .sent
                    .iter()
                    .flat_map(|cell| cell.iter())
                    .filter(|m| !self.members.contains(&m.id))
                    .cloned()
                    .collect();
                if let Ok(set) = MessageSet::new(fresh) {
                    self.phase = Phase::FinalWrite(set);
                }
                (
                    MemAccess::Snapshot {
                        object: MemObject::Sent,
                        version,
                    },
                    None,
                )
            }
            Phase::FinalWrite(set) => {
                let version = self.append(mem, set.clone());
                (version, Some(set))
            }
        };
        let completed = match self.phase {
            Phase::Idle => match self.frame.take() {
                Some(Frame::Broadcast(id)) => Some(id),
                _ => None,
            },
            _ => None,
        };
        Some(RwStep {
            access,
            delivered,
            completed,
        })
    }

    fn append(&mut self, mem: &mut impl SharedMemory, set: MessageSet) -> MemAccess {
        let i = self.me.index();
        self.members.extend(set.ids());
        let mut seq = (*self.setseq[i]).clone();
        seq.push(set);
        self.setseq[i] = Arc::new(seq);
        let version = mem.write_setseq(self.me, self.setseq[i].clone());
        MemAccess::Write {
            object: MemObject::SetSeq,
            index: self.me,
            version,
        }
    }

    fn after_catch_up_step(&self) -> Phase {
        match catch_up_residue(&self.setseq, &self.members) {
            Some(set) => Phase::CatchUpWrite(set),
            None => Phase::SentSnapshot,
        }
    }
}

/// For the smallest `j` whose sequence has a set not contained in
/// `members`, the part of the first such set that is not yet delivered.
pub fn catch_up_residue(setseq: &[SeqCell], members: &BTreeSet<MsgId>) -> Option<MessageSet> {
    setseq.iter().find_map(|seq| {
        seq.iter()
            .find(|set| set.ids().any(|id| !members.contains(&id)))
            .map(|set| {
                MessageSet::new(set.iter().filter(|m| !members.contains(&m.id)).cloned())
                    .expect("residue of an uncovered set is non-empty")
            })
    })
}

/// Bounds for [`explore`].
#[derive(Debug, Clone)]
pub struct ExploreConfig {
    /// Messages each process broadcasts, in invocation order.
    pub broadcasts: Vec<Vec<AppMessage>>,
    /// Whether the adversary may crash one process at any point.
    pub allow_crash: bool,
}

/// A terminal state of the exploration.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub delivered: Vec<Vec<MessageSet>>,
    pub crashed: Vec<bool>,
    /// Messages whose `SENT` write happened.
    pub written: BTreeSet<MsgId>,
    /// Broadcasts whose frame ended.
    pub completed: BTreeSet<MsgId>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ExploreStats {
    pub states: usize,
    pub leaves: usize,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    procs: Vec<RwProcess>,
    mem: AtomicMemory,
    next_invoke: Vec<usize>,
    crashed: Vec<bool>,
    written: BTreeSet<MsgId>,
    completed: BTreeSet<MsgId>,
}

/// Enumerates every interleaving of memory operations over atomic memory
/// and hands each terminal state to `check`. Broadcasts are invoked as soon
/// as their process is idle; background ticks run only while a process is
/// missing a message that is already in `SENT`. Stops at the first error.
pub fn explore(
    config: &ExploreConfig,
    mut check: impl FnMut(&Leaf) -> Result<(), String>,
) -> Result<ExploreStats, String> {
    let n = config.broadcasts.len();
    let start = State {
        procs: ProcessId::all(n).map(|p| RwProcess::new(p, n)).collect(),
        mem: AtomicMemory::new(n),
        next_invoke: vec![0; n],
        crashed: vec![false; n],
        written: BTreeSet::new(),
        completed: BTreeSet::new(),
    };
    let mut seen = HashSet::new();
    let mut stack = vec![start];
    let mut stats = ExploreStats::default();
    while let Some(state) = stack.pop() {
        if !seen.insert(state.clone()) {
            continue;
        }
        stats.states += 1;
        let mut successors = Vec::new();
        let may_crash = config.allow_crash && !state.crashed.iter().any(|c| *c);
        for k in 0..n {
            if state.crashed[k] {
                continue;
            }
            let proc = &state.procs[k];
            let mut next = state.clone();
            let runnable = if !proc.is_idle() {
                true
            } else if let Some(m) = config.broadcasts[k].get(state.next_invoke[k]) {
                next.procs[k].scbroadcast(m.clone()).expect("idle owner");
                next.next_invoke[k] += 1;
                true
            } else if !state.written.is_subset(proc.members()) {
                next.procs[k].start_tick().expect("idle");
                true
            } else {
                false
            };
            if runnable {
                let step = next.procs[k]
                    .step(&mut next.mem)
                    .expect("runnable process has a step");
                if let MemAccess::Write {
                    object: MemObject::Sent,
                    ..
                } = step.access
                {
                    next.written = next.procs[k].sent[k]
                        .iter()
                        .map(|m| m.id)
                        .chain(next.written.iter().copied())
                        .collect();
                }
                if let Some(id) = step.completed {
                    next.completed.insert(id);
                }
                successors.push(next);
            }
            if may_crash {
                let mut crashed = state.clone();
                crashed.crashed[k] = true;
                successors.push(crashed);
            }
        }
        if successors.is_empty() {
            stats.leaves += 1;
            check(&Leaf {
                delivered: state.procs.iter().map(|p| p.delivered().to_vec()).collect(),
                crashed: state.crashed.clone(),
                written: state.written.clone(),
                completed: state.completed.clone(),
            })?;
        }
        stack.extend(successors);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i).unwrap()
    }

    fn msg(s: u32, q: u64) -> AppMessage {
        AppMessage::new(MsgId::new(p(s), q), vec![q as u8])
    }

    fn set(ms: &[AppMessage]) -> MessageSet {
        MessageSet::new(ms.iter().cloned()).unwrap()
    }

    fn run_until_idle(proc: &mut RwProcess, mem: &mut impl SharedMemory) -> Vec<RwStep> {
        std::iter::from_fn(|| proc.step(mem)).collect()
    }

    fn delivered(steps: &[RwStep]) -> Vec<MessageSet> {
        steps.iter().filter_map(|s| s.delivered.clone()).collect()
    }

    #[test]
    fn lone_broadcast_delivers_itself() {
        let mut mem = AtomicMemory::new(1);
        let mut proc = RwProcess::new(p(1), 1);
        proc.scbroadcast(msg(1, 0)).unwrap();
        let steps = run_until_idle(&mut proc, &mut mem);
        assert_eq!(delivered(&steps), vec![set(&[msg(1, 0)])]);
        assert_eq!(steps.last().unwrap().completed, Some(MsgId::new(p(1), 0)));
        // write SENT, snapshot SETSEQ, snapshot SENT, write SETSEQ
        assert_eq!(steps.len(), 4);
    }

    #[test]
    fn foreign_pending_messages_join_own_set() {
        let mut mem = AtomicMemory::new(3);
        let mut a = RwProcess::new(p(1), 3);
        let mut b = RwProcess::new(p(2), 3);
        let mut c = RwProcess::new(p(3), 3);
        a.scbroadcast(msg(1, 0)).unwrap();
        a.step(&mut mem);
        b.scbroadcast(msg(2, 0)).unwrap();
        b.step(&mut mem);
        c.scbroadcast(msg(3, 0)).unwrap();
        let steps = run_until_idle(&mut c, &mut mem);
        assert_eq!(
            delivered(&steps),
            vec![set(&[msg(1, 0), msg(2, 0), msg(3, 0)])]
        );
    }

    #[test]
    fn catch_up_delivers_residue() {
        let seqs = vec![
            Arc::new(vec![set(&[msg(1, 0), msg(1, 1)])]),
            SeqCell::default(),
        ];
        let members = [MsgId::new(p(1), 0)].into_iter().collect();
        assert_eq!(catch_up_residue(&seqs, &members), Some(set(&[msg(1, 1)])));
    }

    #[test]
    fn covered_sequences_give_no_residue() {
        let seqs = vec![Arc::new(vec![set(&[msg(1, 0)])]), SeqCell::default()];
        let members = [MsgId::new(p(1), 0)].into_iter().collect();
        assert_eq!(catch_up_residue(&seqs, &members), None);
    }

    #[test]
    fn catch_up_preserves_foreign_order() {
        let mut mem = AtomicMemory::new(2);
        let mut a = RwProcess::new(p(1), 2);
        a.scbroadcast(msg(1, 0)).unwrap();
        run_until_idle(&mut a, &mut mem);
        a.scbroadcast(msg(1, 1)).unwrap();
        run_until_idle(&mut a, &mut mem);
        assert_eq!(a.delivered(), &[set(&[msg(1, 0)]), set(&[msg(1, 1)])]);

        let mut b = RwProcess::new(p(2), 2);
        b.start_tick().unwrap();
        let steps = run_until_idle(&mut b, &mut mem);
        assert_eq!(
            delivered(&steps),
            vec![set(&[msg(1, 0)]), set(&[msg(1, 1)])]
        );
        assert_eq!(steps.last().unwrap().completed, None);
    }

    #[test]
    fn idle_ticks_change_nothing() {
        let mut mem = AtomicMemory::new(2);
        let mut a = RwProcess::new(p(1), 2);
        a.scbroadcast(msg(1, 0)).unwrap();
        run_until_idle(&mut a, &mut mem);
        let before = (a.clone(), mem.clone());
        for _ in 0..3 {
            a.start_tick().unwrap();
            let steps = run_until_idle(&mut a, &mut mem);
            assert!(delivered(&steps).is_empty());
        }
        assert_eq!(before, (a, mem));
    }

    #[test]
    fn busy_and_foreign_broadcasts_are_rejected() {
        let mut a = RwProcess::new(p(1), 2);
        assert_eq!(
            a.scbroadcast(msg(2, 0)),
            Err(RwError::ForeignMessage {
                proc: p(1),
                id: MsgId::new(p(2), 0)
            })
        );
        a.start_tick().unwrap();
        assert_eq!(a.scbroadcast(msg(1, 0)), Err(RwError::Busy(p(1))));
        assert_eq!(a.start_tick(), Err(RwError::Busy(p(1))));
    }

    #[test]
    fn seq_consistent_memory_never_goes_backwards() {
        let mut mem = SeqConsistentMemory::new(2, 7);
        let mut last = 0;
        let mut mine = BTreeSet::new();
        for k in 0..50u64 {
            mine.insert(msg(1, k));
            mem.write_sent(p(1), Arc::new(mine.clone()));
            let (snap, v) = mem.snapshot_sent(p(2));
            assert!(v >= last);
            last = v;
            assert_eq!(snap[0].len() as u64, v);
            // A writer always sees its own latest write.
            let (own, _) = mem.snapshot_sent(p(1));
            assert_eq!(own[0].len() as u64, k + 1);
        }
    }

    #[test]
    fn explorer_visits_every_leaf_of_a_tiny_run() {
        let config = ExploreConfig {
            broadcasts: vec![vec![msg(1, 0)], vec![msg(2, 0)]],
            allow_crash: false,
        };
        let stats = explore(&config, |leaf| {
            for d in &leaf.delivered {
                let ids: BTreeSet<MsgId> = d.iter().flat_map(|s| s.ids()).collect();
                if ids != leaf.written {
                    return Err(format!("incomplete delivery {d:?}"));
                }
            }
            Ok(())
        })
        .unwrap();
        assert!(stats.leaves > 1);
        assert!(stats.states > stats.leaves);
    }
}
