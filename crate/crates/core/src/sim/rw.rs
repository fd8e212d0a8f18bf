use std::collections::{BTreeSet, VecDeque};

use super::trace::{Kind, Trace};
use super::{Candidate, OpSpec, RunStatus, ScenarioConfig, Scheduler, Workload};
use crate::scd_rw::{AtomicMemory, MemAccess, RwProcess, RwStep, SeqConsistentMemory};
use crate::types::{render_ids, AppMessage, MsgId, ProcessId};

#[derive(Debug, Clone, Copy)]
pub(super) enum Event {
    Invoke(ProcessId),
    /// Next memory operation of a running frame.
    Step(ProcessId),
    /// Background progress call.
    Tick(ProcessId),
}

enum Memory {
    Atomic(AtomicMemory),
    Sc(Box<SeqConsistentMemory>),
}

pub(super) struct RwSim<'a> {
    config: &'a ScenarioConfig,
    trace: &'a mut Trace,
    mem: Memory,
    procs: Vec<RwProcess>,
    plan: Vec<VecDeque<OpSpec>>,
    /// Stamp of each process's last activity.
    last: Vec<u64>,
    /// Messages whose `SENT` write has happened.
    written: BTreeSet<MsgId>,
    next_seq: Vec<u64>,
    crashed: Vec<bool>,
}

impl<'a> RwSim<'a> {
    pub fn new(
        config: &'a ScenarioConfig,
        plan: Vec<VecDeque<OpSpec>>,
        trace: &'a mut Trace,
        memory_seed: u64,
    ) -> Self {
        let n = config.n;
        let mem = match config.workload {
            Workload::RwEquivalenceSc => {
                Memory::Sc(Box::new(SeqConsistentMemory::new(n, memory_seed)))
            }
            _ => Memory::Atomic(AtomicMemory::new(n)),
        };
        RwSim {
            config,
            trace,
            mem,
            procs: ProcessId::all(n).map(|p| RwProcess::new(p, n)).collect(),
            plan,
            last: vec![0; n],
            written: BTreeSet::new(),
            next_seq: vec![0; n],
            crashed: vec![false; n],
        }
    }

    pub fn run(mut self, sched: &mut Scheduler, crashes: &[(u64, ProcessId)]) -> (RunStatus, u64) {
        let mut crashes = crashes.iter().peekable();
        let mut step = 0;
        loop {
            while let Some((_, p)) = crashes.next_if(|(at, _)| *at <= step) {
                if !self.crashed[p.index()] {
                    self.crashed[p.index()] = true;
                    self.trace
                        .push(Kind::Crash, Some(*p), Vec::<(&str, String)>::new());
                }
            }
            let candidates = self.candidates();
            if candidates.is_empty() {
                // Ticks keep running while anything is undelivered, so an
                // empty candidate list means every live process is done.
                return (RunStatus::Quiescent, step);
            }
            if step >= self.config.step_budget {
                return (RunStatus::BudgetExhausted, step);
            }
            let event = sched.pick(&candidates);
            let p = match event {
                Event::Invoke(p) => {
                    self.invoke(p);
                    p
                }
                Event::Tick(p) => {
                    self.procs[p.index()]
                        .start_tick()
                        .expect("ticks start idle");
                    p
                }
                Event::Step(p) => p,
            };
            self.step(p);
            self.last[p.index()] = sched.stamp();
            step += 1;
        }
    }

    fn candidates(&self) -> Vec<Candidate<Event>> {
        let mut out = Vec::new();
        for (k, proc) in self.procs.iter().enumerate() {
            if self.crashed[k] {
                continue;
            }
            let p = proc.id();
            let stamp = self.last[k];
            let mut push = |event| {
                out.push(Candidate {
                    event,
                    stamp,
                    actor: p,
                })
            };
            if !proc.is_idle() {
                push(Event::Step(p));
                continue;
            }
            if !self.plan[k].is_empty() {
                push(Event::Invoke(p));
            }
            if !self.written.is_subset(proc.members()) {
                push(Event::Tick(p));
            }
        }
        out
    }

    fn invoke(&mut self, p: ProcessId) {
        let k = p.index();
        let Some(OpSpec::Broadcast(payload)) = self.plan[k].pop_front() else {
            unreachable!("shared-memory workloads only broadcast")
        };
        let m = AppMessage::new(MsgId::new(p, self.next_seq[k]), payload);
        self.next_seq[k] += 1;
        self.trace.push(
            Kind::ScBroadcast,
            Some(p),
            [
                ("msg", m.id.to_string()),
                ("payload", hex::encode(m.payload())),
            ],
        );
        // The SENT write is the step that immediately follows, in the same
        // scheduler step.
        self.written.insert(m.id);
        self.procs[k].scbroadcast(m).expect("invoked while idle");
    }

    fn step(&mut self, p: ProcessId) {
        let proc = &mut self.procs[p.index()];
        let step: RwStep = match &mut self.mem {
            Memory::Atomic(mem) => proc.step(mem),
            Memory::Sc(mem) => proc.step(mem.as_mut()),
        }
        .expect("a scheduled process has work");
        match step.access {
            MemAccess::Write {
                object,
                index,
                version,
            } => {
                self.trace.push(
                    Kind::MemWrite,
                    Some(p),
                    [
                        ("index", index.to_string()),
                        ("object", object.to_string()),
                        ("version", version.to_string()),
                    ],
                );
            }
            MemAccess::Snapshot { object, version } => self.trace.push(
                Kind::MemSnapshot,
                Some(p),
                [
                    ("object", object.to_string()),
                    ("version", version.to_string()),
                ],
            ),
        }
        if let Some(set) = &step.delivered {
            self.trace.push(
                Kind::ScdDeliver,
                Some(p),
                [("set", render_ids(&set.id_set()))],
            );
        }
        if let Some(id) = step.completed {
            self.trace
                .push(Kind::BroadcastComplete, Some(p), [("msg", id)]);
        }
    }
}
