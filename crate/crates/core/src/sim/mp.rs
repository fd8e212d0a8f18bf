use std::collections::VecDeque;

use super::trace::{Kind, Trace};
use super::{Candidate, OpSpec, RunStatus, ScenarioConfig, Scheduler, Workload};
use crate::objects::{
    render_values, Action, MwmrRegister, OpResult, Replica, SnapshotObject, SwmrRegister,
};
use crate::scd_mp::{Effects, ForwardMsg, ScdProcess, Send};
use crate::types::{render_ids, AppMessage, MsgId, ProcessId};

#[derive(Debug, Clone, Copy)]
pub(super) enum Event {
    Invoke(ProcessId),
    /// Emit the next queued send of a process onto its channel.
    Emit(ProcessId),
    Recv {
        from: ProcessId,
        to: ProcessId,
    },
}

enum Object {
    Snapshot(SnapshotObject),
    Register(MwmrRegister),
    Swmr(SwmrRegister),
}

impl Object {
    fn replica(&mut self) -> &mut dyn Replica {
        match self {
            Object::Snapshot(o) => o,
            Object::Register(o) => o,
            Object::Swmr(o) => o,
        }
    }
}

pub(super) struct MpSim<'a> {
    config: &'a ScenarioConfig,
    trace: &'a mut Trace,
    procs: Vec<ScdProcess>,
    objects: Vec<Option<Object>>,
    plan: Vec<VecDeque<OpSpec>>,
    /// Invocation stamp while a process is idle.
    idle_since: Vec<Option<u64>>,
    outbox: Vec<VecDeque<(u64, Send)>>,
    /// Indexed by `from * n + to`.
    channels: Vec<VecDeque<(u64, ForwardMsg)>>,
    next_seq: Vec<u64>,
    crashed: Vec<bool>,
}

impl<'a> MpSim<'a> {
    pub fn new(
        config: &'a ScenarioConfig,
        plan: Vec<VecDeque<OpSpec>>,
        trace: &'a mut Trace,
    ) -> Self {
        let n = config.n;
        let writer = ProcessId::from_index(0);
        let objects = ProcessId::all(n)
            .map(|p| match config.workload {
                Workload::RawBroadcast => None,
                Workload::Snapshot | Workload::ScSnapshot => {
                    Some(Object::Snapshot(SnapshotObject::new(p, config.m)))
                }
                Workload::Register | Workload::ScRegister => {
                    Some(Object::Register(MwmrRegister::new(p)))
                }
                Workload::SwmrRegister => Some(Object::Swmr(SwmrRegister::new(p, writer))),
                Workload::RwEquivalence | Workload::RwEquivalenceSc => {
                    unreachable!("shared-memory workload in the message-passing driver")
                }
            })
            .collect();
        MpSim {
            config,
            trace,
            procs: ProcessId::all(n)
                .map(|p| ScdProcess::new(p, n).with_fault(config.inject))
                .collect(),
            objects,
            plan,
            idle_since: vec![Some(0); n],
            outbox: vec![VecDeque::new(); n],
            channels: vec![VecDeque::new(); n * n],
            next_seq: vec![0; n],
            crashed: vec![false; n],
        }
    }

    pub fn run(mut self, sched: &mut Scheduler, crashes: &[(u64, ProcessId)]) -> (RunStatus, u64) {
        let mut crashes = crashes.iter().peekable();
        let mut step = 0;
        loop {
            while let Some((_, p)) = crashes.next_if(|(at, _)| *at <= step) {
                self.crash(*p);
            }
            let candidates = self.candidates();
            if candidates.is_empty() {
                return (self.final_status(), step);
            }
            if step >= self.config.step_budget {
                return (RunStatus::BudgetExhausted, step);
            }
            match sched.pick(&candidates) {
                Event::Invoke(p) => self.invoke(p, sched),
                Event::Emit(p) => self.emit(p, sched),
                Event::Recv { from, to } => self.recv(from, to, sched),
            }
            step += 1;
        }
    }

    fn final_status(&self) -> RunStatus {
        let waiting = (0..self.config.n).any(|k| {
            !self.crashed[k] && (self.idle_since[k].is_none() || !self.plan[k].is_empty())
        });
        if waiting {
            RunStatus::Stuck
        } else {
            RunStatus::Quiescent
        }
    }

    fn candidates(&self) -> Vec<Candidate<Event>> {
        let n = self.config.n;
        let mut out = Vec::new();
        for k in 0..n {
            if self.crashed[k] {
                continue;
            }
            let p = ProcessId::from_index(k);
            if let (Some(stamp), Some(_)) = (self.idle_since[k], self.plan[k].front()) {
                out.push(Candidate {
                    event: Event::Invoke(p),
                    stamp,
                    actor: p,
                });
            }
            if let Some((stamp, _)) = self.outbox[k].front() {
                out.push(Candidate {
                    event: Event::Emit(p),
                    stamp: *stamp,
                    actor: p,
                });
            }
        }
        for from in 0..n {
            for to in 0..n {
                if self.crashed[to] {
                    continue;
                }
                if let Some((stamp, _)) = self.channels[from * n + to].front() {
                    let to = ProcessId::from_index(to);
                    out.push(Candidate {
                        event: Event::Recv {
                            from: ProcessId::from_index(from),
                            to,
                        },
                        stamp: *stamp,
                        actor: to,
                    });
                }
            }
        }
        out
    }

    fn crash(&mut self, p: ProcessId) {
        let k = p.index();
        if self.crashed[k] {
            return;
        }
        self.crashed[k] = true;
        // Sends not yet emitted die with the process.
        self.outbox[k].clear();
        self.trace
            .push(Kind::Crash, Some(p), Vec::<(&str, String)>::new());
    }

    fn fresh_message(&mut self, p: ProcessId, payload: Vec<u8>) -> AppMessage {
        let seq = &mut self.next_seq[p.index()];
        let m = AppMessage::new(MsgId::new(p, *seq), payload);
        *seq += 1;
        m
    }

    fn broadcast(&mut self, p: ProcessId, payload: Vec<u8>, sched: &mut Scheduler) {
        let m = self.fresh_message(p, payload);
        self.trace.push(
            Kind::ScBroadcast,
            Some(p),
            [
                ("msg", m.id.to_string()),
                ("payload", hex::encode(m.payload())),
            ],
        );
        let effects = self.procs[p.index()]
            .scbroadcast(m)
            .expect("the simulator never overlaps broadcasts");
        self.apply(p, effects, sched);
    }

    fn invoke(&mut self, p: ProcessId, sched: &mut Scheduler) {
        let k = p.index();
        let op = self.plan[k].pop_front().expect("invoke needs a planned op");
        self.idle_since[k] = None;
        let sc = self.config.workload.is_sequentially_consistent();
        let actions = match op {
            OpSpec::Broadcast(payload) => {
                self.broadcast(p, payload, sched);
                return;
            }
            OpSpec::Snapshot => {
                self.trace
                    .push(Kind::OpInvoke, Some(p), [("kind", "snapshot")]);
                let Some(Object::Snapshot(o)) = &mut self.objects[k] else {
                    unreachable!("snapshot op without a snapshot object")
                };
                if sc {
                    o.sc_snapshot()
                } else {
                    o.snapshot()
                }
            }
            OpSpec::Read => {
                self.trace.push(Kind::OpInvoke, Some(p), [("kind", "read")]);
                match &mut self.objects[k] {
                    Some(Object::Register(o)) if sc => o.sc_read(),
                    Some(Object::Register(o)) => o.read(),
                    Some(Object::Swmr(o)) => o.read(),
                    _ => unreachable!("read op without a register"),
                }
            }
            OpSpec::Write { r, v } => {
                self.trace.push(
                    Kind::OpInvoke,
                    Some(p),
                    [
                        ("kind", "write".to_string()),
                        ("r", r.to_string()),
                        ("v", v.to_string()),
                    ],
                );
                match &mut self.objects[k] {
                    Some(Object::Snapshot(o)) if sc => o.sc_write(r, v),
                    Some(Object::Snapshot(o)) => o.write(r, v),
                    Some(Object::Register(o)) if sc => o.sc_write(v),
                    Some(Object::Register(o)) => o.write(v),
                    Some(Object::Swmr(o)) => o.write(v),
                    None => unreachable!("write op without an object"),
                }
            }
        }
        .expect("the simulator invokes one operation at a time");
        self.act(p, actions, sched);
    }

    fn emit(&mut self, p: ProcessId, sched: &mut Scheduler) {
        let n = self.config.n;
        let (_, send) = self.outbox[p.index()]
            .pop_front()
            .expect("emit needs a queued send");
        let f = &send.msg;
        self.trace.push(
            Kind::Send,
            Some(p),
            [
                ("to", send.to.to_string()),
                ("m", f.m.id.to_string()),
                ("sd", f.sd.to_string()),
                ("sn_sd", f.sn_sd.to_string()),
                ("f", f.f.to_string()),
                ("sn_f", f.sn_f.to_string()),
            ],
        );
        let stamp = sched.stamp();
        self.channels[p.index() * n + send.to.index()].push_back((stamp, send.msg));
    }

    fn recv(&mut self, from: ProcessId, to: ProcessId, sched: &mut Scheduler) {
        let n = self.config.n;
        let (_, f) = self.channels[from.index() * n + to.index()]
            .pop_front()
            .expect("recv needs a message in flight");
        self.trace.push(
            Kind::Recv,
            Some(to),
            [
                ("from", from.to_string()),
                ("m", f.m.id.to_string()),
                ("sd", f.sd.to_string()),
                ("sn_sd", f.sn_sd.to_string()),
                ("f", f.f.to_string()),
                ("sn_f", f.sn_f.to_string()),
            ],
        );
        let effects = self.procs[to.index()].on_forward(f);
        self.apply(to, effects, sched);
    }

    fn apply(&mut self, p: ProcessId, effects: Effects, sched: &mut Scheduler) {
        let k = p.index();
        for send in effects.sends {
            let stamp = sched.stamp();
            self.outbox[k].push_back((stamp, send));
        }
        let mut actions = Vec::new();
        if let Some(set) = &effects.delivered {
            self.trace.push(
                Kind::ScdDeliver,
                Some(p),
                [("set", render_ids(&set.id_set()))],
            );
            if let Some(obj) = &mut self.objects[k] {
                let replica = obj.replica();
                actions = replica.on_set_delivered(set);
                let tsa = replica.tsa();
                self.trace.push(Kind::ObjTsa, Some(p), [("tsa", tsa)]);
            }
        }
        if let Some(id) = effects.completed {
            self.trace
                .push(Kind::BroadcastComplete, Some(p), [("msg", id)]);
            if self.objects[k].is_none() {
                self.idle_since[k] = Some(sched.stamp());
            }
        }
        self.act(p, actions, sched);
    }

    fn act(&mut self, p: ProcessId, actions: Vec<Action>, sched: &mut Scheduler) {
        for action in actions {
            match action {
                Action::Broadcast(payload) => self.broadcast(p, payload.encode(), sched),
                Action::Complete(result) => {
                    self.record_return(p, result);
                    self.idle_since[p.index()] = Some(sched.stamp());
                }
            }
        }
    }

    fn record_return(&mut self, p: ProcessId, result: OpResult) {
        let read = self.config.workload.is_register();
        let fields = match result {
            OpResult::Snapshot { values, tsa } => vec![
                ("kind", if read { "read" } else { "snapshot" }.to_string()),
                ("tsa", tsa.to_string()),
                ("values", render_values(&values)),
            ],
            OpResult::Write { ts } => vec![("kind", "write".to_string()), ("ts", ts.to_string())],
        };
        self.trace.push(Kind::OpReturn, Some(p), fields);
    }
}
