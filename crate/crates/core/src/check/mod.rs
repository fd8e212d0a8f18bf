//! Checkers that judge a run from its trace alone.
//!
//! [`check_trace`] is the single entry point used both right after a run
//! and when replaying a stored trace, so the two always agree.

mod consistency;
mod history;
mod scd;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

pub use consistency::{
    check_linearizable_bruteforce, check_linearizable_witness, check_op_message_cost,
    check_sc_witness, check_sequentially_consistent, check_tsa_monotone, check_tsa_total_order,
    check_write_ts_unique, ordered_arrays, witness_order, Precedence, DEFAULT_LIN_BOUND,
    DEFAULT_SC_BOUND,
};
pub use history::{History, OpKind, OpRecord};
pub use scd::{
    check_containment, check_integrity, check_ms_ordering, check_termination, check_validity,
    find_ms_ordering_violation, DeliveryLog, OrderViolation, TerminationInput,
};

use crate::sim::{Kind, RunStatus, ScenarioConfig, Trace, TraceEvent};
use crate::types::{parse_ids, MsgId, ProcessId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub property: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl Verdict {
    pub fn pass(property: &str) -> Self {
        Self::pass_with(property, "")
    }

    pub fn pass_with(property: &str, detail: impl Into<String>) -> Self {
        Verdict {
            property: property.into(),
            outcome: Outcome::Pass,
            detail: detail.into(),
        }
    }

    pub fn fail(property: &str, detail: impl Into<String>) -> Self {
        Verdict {
            property: property.into(),
            outcome: Outcome::Fail,
            detail: detail.into(),
        }
    }

    pub fn not_applicable(property: &str, detail: impl Into<String>) -> Self {
        Verdict {
            property: property.into(),
            outcome: Outcome::NotApplicable,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    pub fn failed(&self) -> bool {
        self.outcome == Outcome::Fail
    }
}

/// `verdict|property|outcome|detail`
impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "verdict|{}|{}|{}",
            self.property,
            self.outcome.as_str(),
            self.detail
        )
    }
}

/// The trace could not be interpreted at all.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed trace: {0}")]
pub struct CheckError(pub String);

/// Facts about a run gathered in one pass over its trace.
#[derive(Debug, Clone)]
pub struct TraceFacts {
    pub config: ScenarioConfig,
    pub log: DeliveryLog,
    /// Broadcaster of every scbroadcast message.
    pub broadcasts: BTreeMap<MsgId, ProcessId>,
    pub completed: BTreeSet<MsgId>,
    /// `None` when the trace has no `end` record.
    pub status: Option<RunStatus>,
    /// FORWARD sends per message.
    pub sends: BTreeMap<MsgId, usize>,
}

impl TraceFacts {
    pub fn from_trace(trace: &Trace) -> Result<TraceFacts, CheckError> {
        Self::gather(trace).map_err(CheckError)
    }

    fn gather(trace: &Trace) -> Result<TraceFacts, String> {
        let first = trace.events.first().ok_or("empty trace")?;
        if first.kind != Kind::Config {
            return Err("trace does not start with a config record".into());
        }
        let config =
            ScenarioConfig::from_fields(first.fields.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .map_err(|e| e.to_string())?;
        let n = config.n;
        let mut facts = TraceFacts {
            config,
            log: DeliveryLog::new(n),
            broadcasts: BTreeMap::new(),
            completed: BTreeSet::new(),
            status: None,
            sends: BTreeMap::new(),
        };
        for e in &trace.events[1..] {
            if let Some(p) = e.proc {
                if p.index() >= n {
                    return Err(format!("step {} names p{p} but n={n}", e.step));
                }
            }
            match e.kind {
                Kind::ScBroadcast => {
                    let id: MsgId = e.parse_field("msg")?;
                    if facts.broadcasts.insert(id, e.process()?).is_some() {
                        return Err(format!("{id} broadcast twice"));
                    }
                }
                Kind::ScdDeliver => {
                    let set = parse_ids(e.field("set")?).map_err(|err| err.to_string())?;
                    facts.log.sets[e.process()?.index()].push(set.into_iter().collect());
                }
                Kind::BroadcastComplete => {
                    facts.completed.insert(e.parse_field("msg")?);
                }
                Kind::Send => *facts.sends.entry(e.parse_field("m")?).or_default() += 1,
                Kind::Crash => facts.log.faulty[e.process()?.index()] = true,
                Kind::End => {
                    let status = e.field("status")?;
                    facts.status = Some(
                        RunStatus::from_fields(status, e.get("reason"))
                            .ok_or_else(|| format!("unknown run status `{status}`"))?,
                    );
                }
                _ => {}
            }
        }
        Ok(facts)
    }

    pub fn quiescent(&self) -> bool {
        self.status == Some(RunStatus::Quiescent)
    }
}

/// FORWARD sends per broadcast message; each process forwards a message at
/// most once to each of the `n` processes.
pub fn count_messages(trace: &Trace) -> Result<BTreeMap<MsgId, usize>, CheckError> {
    Ok(TraceFacts::from_trace(trace)?.sends)
}

fn check_message_bound(facts: &TraceFacts) -> Verdict {
    let n = facts.config.n;
    let bound = n * n;
    let failure_free = !facts.log.faulty.iter().any(|f| *f) && facts.quiescent();
    for id in facts.broadcasts.keys() {
        let sent = facts.sends.get(id).copied().unwrap_or(0);
        if sent > bound {
            return Verdict::fail(
                "message_bound",
                format!("{id} used {sent} sends > n²={bound}"),
            );
        }
        if failure_free && sent != bound {
            return Verdict::fail(
                "message_bound",
                format!("{id} used {sent} sends in a failure-free run, expected n²={bound}"),
            );
        }
    }
    let max = facts.sends.values().max().copied().unwrap_or(0);
    Verdict::pass_with("message_bound", format!("max={max} bound={bound}"))
}

/// Forwarded-message fields that identify one FORWARD.
fn forward_key(e: &TraceEvent) -> Result<[String; 5], String> {
    Ok(["m", "sd", "sn_sd", "f", "sn_f"].map(|k| e.get(k).unwrap_or_default().to_string()))
}

/// Every channel hands messages over in the order they were sent, and
/// nothing arrives that was never sent.
pub fn check_fifo(trace: &Trace) -> Verdict {
    let mut channels: HashMap<(ProcessId, ProcessId), VecDeque<[String; 5]>> = HashMap::new();
    let result = (|| -> Result<(), String> {
        for e in &trace.events {
            match e.kind {
                Kind::Send => {
                    let key = (e.process()?, e.parse_field::<ProcessId>("to")?);
                    channels.entry(key).or_default().push_back(forward_key(e)?);
                }
                Kind::Recv => {
                    let key = (e.parse_field::<ProcessId>("from")?, e.process()?);
                    let got = forward_key(e)?;
                    match channels.entry(key).or_default().pop_front() {
                        Some(head) if head == got => {}
                        Some(head) => {
                            return Err(format!(
                                "step {}: p{} received {} from p{} ahead of {}",
                                e.step, key.1, got[0], key.0, head[0]
                            ))
                        }
                        None => {
                            return Err(format!(
                                "step {}: p{} received {} that p{} never sent",
                                e.step, key.1, got[0], key.0
                            ))
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => Verdict::pass("fifo"),
        Err(e) => Verdict::fail("fifo", e),
    }
}

/// A crashed process records nothing after its crash.
pub fn check_crash_silence(trace: &Trace) -> Verdict {
    let mut crashed = BTreeSet::new();
    for e in &trace.events {
        let Some(p) = e.proc else { continue };
        if crashed.contains(&p) {
            return Verdict::fail(
                "crash_silence",
                format!("p{p} recorded {} at step {} after crashing", e.kind, e.step),
            );
        }
        if e.kind == Kind::Crash {
            crashed.insert(p);
        }
    }
    Verdict::pass("crash_silence")
}

/// Every broadcast that returned had been delivered locally by then.
fn check_own_delivery_before_return(trace: &Trace) -> Verdict {
    let mut delivered: BTreeSet<(ProcessId, MsgId)> = BTreeSet::new();
    for e in &trace.events {
        match e.kind {
            Kind::ScdDeliver => {
                let Ok(p) = e.process() else { continue };
                if let Ok(ids) = parse_ids(e.get("set").unwrap_or_default()) {
                    delivered.extend(ids.into_iter().map(|id| (p, id)));
                }
            }
            Kind::BroadcastComplete => {
                let (Ok(p), Ok(id)) = (e.process(), e.parse_field::<MsgId>("msg")) else {
                    continue;
                };
                if !delivered.contains(&(p, id)) {
                    return Verdict::fail(
                        "own_delivery",
                        format!("p{p} returned from broadcasting {id} before delivering it"),
                    );
                }
            }
            _ => {}
        }
    }
    Verdict::pass("own_delivery")
}

/// Validity, Integrity, MS-Ordering, Containment and Termination.
pub fn check_delivery_suite(log: &DeliveryLog, input: &TerminationInput<'_>) -> Vec<Verdict> {
    let ids: BTreeSet<MsgId> = input.broadcasts.keys().copied().collect();
    vec![
        check_validity(log, &ids),
        check_integrity(log),
        check_ms_ordering(log),
        check_containment(log),
        check_termination(log, input),
    ]
}

/// Runs every checker that applies to the trace's workload.
pub fn check_trace(trace: &Trace) -> Result<Vec<Verdict>, CheckError> {
    let facts = TraceFacts::from_trace(trace)?;
    let mut out = check_delivery_suite(
        &facts.log,
        &TerminationInput {
            broadcasts: &facts.broadcasts,
            completed: &facts.completed,
            quiescent: facts.quiescent(),
        },
    );
    out.push(check_own_delivery_before_return(trace));
    out.push(check_crash_silence(trace));
    let workload = facts.config.workload;
    if workload.is_message_passing() {
        out.push(check_message_bound(&facts));
        out.push(check_fifo(trace));
    }
    if workload.has_objects() {
        let h = History::from_trace(trace, facts.config.n, facts.config.registers())
            .map_err(CheckError)?;
        out.push(check_tsa_total_order(&h));
        out.push(check_tsa_monotone(&h));
        out.push(check_write_ts_unique(&h));
        if workload.is_sequentially_consistent() {
            out.push(check_op_message_cost(&h, 1, 0));
            out.push(check_sc_witness(&h));
            out.push(check_sequentially_consistent(&h, DEFAULT_SC_BOUND));
        } else {
            out.push(check_op_message_cost(&h, 2, 1));
            out.push(check_linearizable_witness(&h));
            out.push(check_linearizable_bruteforce(&h, DEFAULT_LIN_BOUND));
        }
    }
    Ok(out)
}

/// Renders verdicts one per line.
pub fn render_verdicts(verdicts: &[Verdict]) -> String {
    verdicts.iter().map(|v| format!("{v}\n")).collect()
}
