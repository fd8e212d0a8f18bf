//! Deterministic simulation of crash-prone asynchronous systems.
//!
//! A run is a pure function of its [`ScenarioConfig`]: one seeded ChaCha
//! generator fixes the operation plan, the crash times and every scheduling
//! choice. At each scheduler step the simulator lists the enabled events
//! (invoke an operation, emit the next send of a broadcast, receive the head
//! of a channel, run a shared-memory step), lets the delay policy pick one,
//! and records what happened in a [`Trace`].

mod config;
mod mp;
mod rw;
mod trace;

use std::collections::VecDeque;
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{
    fault_name, parse_fault, ConfigError, CrashPlan, DelayPolicy, ScenarioConfig, Workload,
    DEFAULT_STEP_BUDGET,
};
pub use trace::{Kind, Trace, TraceEvent, TraceParseError};

use crate::objects::Value;
use crate::types::ProcessId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Nothing left to do: every non-faulty process finished its operations.
    Quiescent,
    /// The step budget ran out.
    BudgetExhausted,
    /// No event is enabled but some non-faulty process is still waiting.
    Stuck,
}

impl RunStatus {
    pub fn is_quiescent(self) -> bool {
        self == RunStatus::Quiescent
    }

    /// `(status, reason)` as written in the `end` record.
    pub fn fields(self) -> (&'static str, Option<&'static str>) {
        match self {
            RunStatus::Quiescent => ("quiescent", None),
            RunStatus::BudgetExhausted => ("nonterminated", Some("budget")),
            RunStatus::Stuck => ("nonterminated", Some("stuck")),
        }
    }

    pub fn from_fields(status: &str, reason: Option<&str>) -> Option<RunStatus> {
        match (status, reason) {
            ("quiescent", None) => Some(RunStatus::Quiescent),
            ("nonterminated", Some("budget")) => Some(RunStatus::BudgetExhausted),
            ("nonterminated", Some("stuck")) => Some(RunStatus::Stuck),
            _ => None,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.fields() {
            (status, None) => f.write_str(status),
            (status, Some(reason)) => write!(f, "{status} ({reason})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub status: RunStatus,
    /// Scheduler steps taken.
    pub steps: u64,
}

/// Runs a scenario to quiescence, deadlock or the step budget.
pub fn run(config: &ScenarioConfig) -> Result<RunOutcome, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let plan = plan_ops(config, &mut rng);
    let crashes = plan_crashes(config, &mut rng);
    let mut trace = Trace::default();
    trace.push(Kind::Config, None, config.to_fields());
    let mut sched = Scheduler::new(config.delay.clone(), rng);
    let (status, steps) = if config.workload.is_message_passing() {
        mp::MpSim::new(config, plan, &mut trace).run(&mut sched, &crashes)
    } else {
        rw::RwSim::new(config, plan, &mut trace, sched.rng.gen()).run(&mut sched, &crashes)
    };
    let (s, reason) = status.fields();
    let mut end = vec![("status", s.to_string()), ("steps", steps.to_string())];
    if let Some(r) = reason {
        end.push(("reason", r.to_string()));
    }
    trace.push(Kind::End, None, end);
    Ok(RunOutcome {
        trace,
        status,
        steps,
    })
}

/// One operation a process will invoke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum OpSpec {
    Broadcast(Vec<u8>),
    Snapshot,
    Write { r: usize, v: Value },
    Read,
}

/// Deals `ops` operations out to processes at random. Write values are
/// unique (`<proc>.<index>`), which lets checkers tell writes apart.
pub(crate) fn plan_ops(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<VecDeque<OpSpec>> {
    let mut plan = vec![VecDeque::new(); config.n];
    let m = config.registers();
    for k in 0..config.ops {
        let proc = rng.gen_range(0..config.n);
        let pid = ProcessId::from_index(proc);
        let write = rng.gen_bool(0.5);
        let value = || Value(format!("{pid}.{k}").into_bytes());
        let op = match config.workload {
            Workload::RawBroadcast | Workload::RwEquivalence | Workload::RwEquivalenceSc => {
                OpSpec::Broadcast(format!("m{k}").into_bytes())
            }
            Workload::Snapshot | Workload::ScSnapshot => {
                if write {
                    OpSpec::Write {
                        r: rng.gen_range(1..=m),
                        v: value(),
                    }
                } else {
                    OpSpec::Snapshot
                }
            }
            Workload::Register | Workload::ScRegister => {
                if write {
                    OpSpec::Write { r: 1, v: value() }
                } else {
                    OpSpec::Read
                }
            }
            Workload::SwmrRegister => {
                if write && proc == 0 {
                    OpSpec::Write { r: 1, v: value() }
                } else {
                    OpSpec::Read
                }
            }
        };
        plan[proc].push_back(op);
    }
    plan
}

/// Crash times sorted by step. Random crashes hit distinct processes at
/// steps spread over a rough estimate of the run length.
pub(crate) fn plan_crashes(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<(u64, ProcessId)> {
    let mut crashes: Vec<(u64, ProcessId)> = match &config.crash {
        CrashPlan::None => Vec::new(),
        CrashPlan::Explicit(list) => list.iter().map(|(p, s)| (*s, *p)).collect(),
        CrashPlan::Random(k) => {
            let horizon = (config.ops.max(1) * 2 * config.n * config.n) as u64;
            sample(rng, config.n, *k)
                .into_iter()
                .map(|i| (rng.gen_range(0..horizon), ProcessId::from_index(i)))
                .collect()
        }
    };
    crashes.sort();
    crashes
}

/// An enabled event as the scheduler sees it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate<E> {
    pub event: E,
    /// When the event became enabled; smaller is older.
    pub stamp: u64,
    /// The process whose speed governs the event.
    pub actor: ProcessId,
}

/// Weight of a targeted process's events relative to everyone else's.
const SLOW_WEIGHT: u32 = 1;
const FAST_WEIGHT: u32 = 16;

pub(crate) struct Scheduler {
    policy: DelayPolicy,
    pub rng: ChaCha8Rng,
    next_stamp: u64,
}

impl Scheduler {
    fn new(policy: DelayPolicy, rng: ChaCha8Rng) -> Self {
        Scheduler {
            policy,
            rng,
            next_stamp: 0,
        }
    }

    /// A fresh enable stamp.
    pub fn stamp(&mut self) -> u64 {
        self.next_stamp += 1;
        self.next_stamp
    }

    pub fn pick<E: Copy>(&mut self, candidates: &[Candidate<E>]) -> E {
        assert!(!candidates.is_empty(), "nothing to schedule");
        match &self.policy {
            DelayPolicy::Uniform => candidates[self.rng.gen_range(0..candidates.len())].event,
            DelayPolicy::FifoMinimal => {
                candidates
                    .iter()
                    .min_by_key(|c| c.stamp)
                    .expect("non-empty")
                    .event
            }
            DelayPolicy::TargetedSlow(slow) => {
                let weight = |c: &Candidate<E>| {
                    if slow.contains(&c.actor) {
                        SLOW_WEIGHT
                    } else {
                        FAST_WEIGHT
                    }
                };
                let total: u32 = candidates.iter().map(weight).sum();
                let mut roll = self.rng.gen_range(0..total);
                for c in candidates {
                    let w = weight(c);
                    if roll < w {
                        return c.event;
                    }
                    roll -= w;
                }
                unreachable!("roll below total weight")
            }
        }
    }
}
