//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is printed even
//! when test output is captured.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use common::{explore_config, leaf_verdicts, msg, pid, trace_of};
use scdkit::check::{
    check_linearizable_bruteforce, check_linearizable_witness, check_sc_witness,
    check_sequentially_consistent, check_trace, History, Outcome, Verdict, DEFAULT_LIN_BOUND,
    DEFAULT_SC_BOUND,
};
use scdkit::scd_rw::explore;
use scdkit::sim::{run, CrashPlan, DelayPolicy, Kind, RunStatus, ScenarioConfig, Trace, Workload};
use scdkit::types::{parse_ids, render_ids, MsgId, ProcessId};

type Criterion = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("scd property suite over message passing", scd_suite_mp),
        ("forward sends per scbroadcast", message_complexity),
        (
            "linearizability of snapshot over broadcast",
            linearizability,
        ),
        ("resiliency boundary", resiliency),
        ("broadcast over read/write memory", shared_memory),
        ("register variants", registers),
        ("checker mutation fixtures", mutations),
        ("determinism and replay", determinism),
    ];
    let mut failed = 0;
    for (k, (name, criterion)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = criterion();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {} {tag} {name}: {detail} ({secs:.1}s)", k + 1);
    }
    if failed == 0 {
        println!("acceptance: all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria fail", criteria.len());
        ExitCode::FAILURE
    }
}

/// Cycles delay policies across seeds so each criterion sees all three.
fn delay_for(seed: u64, n: usize) -> DelayPolicy {
    match seed % 3 {
        0 => DelayPolicy::Uniform,
        1 => DelayPolicy::FifoMinimal,
        _ => DelayPolicy::TargetedSlow(vec![ProcessId::from_index((seed / 3) as usize % n)]),
    }
}

fn failures(verdicts: &[Verdict]) -> Vec<&Verdict> {
    verdicts.iter().filter(|v| v.failed()).collect()
}

/// Runs `config`, checks it, and reports the first failing verdict.
fn run_and_check(config: &ScenarioConfig) -> Result<(Trace, Vec<Verdict>), String> {
    let outcome = run(config).map_err(|e| e.to_string())?;
    let verdicts = check_trace(&outcome.trace).map_err(|e| e.to_string())?;
    if let Some(v) = failures(&verdicts).first() {
        return Err(format!("{}: {v}", config.render_text().replace('\n', " ")));
    }
    Ok((outcome.trace, verdicts))
}

fn first_error<T>(results: Vec<Result<T, String>>) -> Result<Vec<T>, String> {
    results.into_iter().collect()
}

fn scd_suite_mp() -> Result<String, String> {
    const SUITE: [&str; 5] = [
        "validity",
        "integrity",
        "ms_ordering",
        "containment",
        "termination",
    ];
    let mut total = 0;
    for n in [3usize, 5, 7] {
        let t = (n - 1) / 2;
        let results: Vec<Result<(), String>> = (0..1000u64)
            .into_par_iter()
            .map(|seed| {
                let ops = 20 + (seed % 31) as usize;
                let config = ScenarioConfig::new(n, t, Workload::RawBroadcast, ops)
                    .with_seed(seed)
                    .with_crash(CrashPlan::Random(t))
                    .with_delay(delay_for(seed, n));
                let (_, verdicts) = run_and_check(&config)?;
                for name in SUITE {
                    let v = verdicts.iter().find(|v| v.property == name);
                    if v.map(|v| v.outcome) != Some(Outcome::Pass) {
                        return Err(format!("seed {seed} n={n}: {name} did not pass: {v:?}"));
                    }
                }
                Ok(())
            })
            .collect();
        total += first_error(results)?.len();
    }
    Ok(format!(
        "{total} runs (n=3,5,7 x 1000 seeds, 20-50 broadcasts, t crashes) all quiescent, all five properties pass"
    ))
}

/// FORWARD sends per broadcast message, counted straight from the trace.
fn sends_per_message(trace: &Trace) -> Result<(BTreeSet<MsgId>, BTreeMap<MsgId, usize>), String> {
    let mut broadcast = BTreeSet::new();
    let mut sends = BTreeMap::new();
    for e in &trace.events {
        match e.kind {
            Kind::ScBroadcast => {
                broadcast.insert(e.parse_field::<MsgId>("msg")?);
            }
            Kind::Send => *sends.entry(e.parse_field::<MsgId>("m")?).or_insert(0) += 1,
            _ => {}
        }
    }
    Ok((broadcast, sends))
}

fn message_complexity() -> Result<String, String> {
    let mut cases = Vec::new();
    for n in [3usize, 5, 7] {
        let t = (n - 1) / 2;
        for seed in 0..200u64 {
            for crash in [CrashPlan::None, CrashPlan::Random(t)] {
                let ops = if seed % 10 == 0 {
                    100
                } else {
                    20 + (seed % 31) as usize
                };
                cases.push(
                    ScenarioConfig::new(n, t, Workload::RawBroadcast, ops)
                        .with_seed(seed)
                        .with_crash(crash)
                        .with_delay(delay_for(seed, n)),
                );
            }
        }
    }
    let results: Vec<Result<usize, String>> = cases
        .par_iter()
        .map(|config| {
            let outcome = run(config).map_err(|e| e.to_string())?;
            let (broadcast, sends) = sends_per_message(&outcome.trace)?;
            let bound = config.n * config.n;
            let exact = config.crash == CrashPlan::None;
            if exact && outcome.status != RunStatus::Quiescent {
                return Err(format!("failure-free seed {} did not quiesce", config.seed));
            }
            for id in &broadcast {
                let got = sends.get(id).copied().unwrap_or(0);
                if got > bound || (exact && got != bound) {
                    return Err(format!(
                        "seed {} n={} crash={}: {id} used {got} sends, bound n²={bound}",
                        config.seed, config.n, config.crash
                    ));
                }
            }
            Ok(broadcast.len())
        })
        .collect();
    let messages: usize = first_error(results)?.iter().sum();
    Ok(format!(
        "{} runs, {messages} broadcasts: every one <= n², exactly n² in all failure-free runs",
        cases.len()
    ))
}

fn snapshot_history(trace: &Trace, config: &ScenarioConfig) -> Result<History, String> {
    History::from_trace(trace, config.n, config.registers())
}

/// Brute force and witness must both pass, and agree, on small histories.
fn small_histories(workload: Workload, seeds: u64, lin: bool) -> Result<usize, String> {
    let mut cases = Vec::new();
    for n in [3usize, 5] {
        for m in [1usize, 2, 3] {
            if workload.is_register() && m > 1 {
                continue;
            }
            for seed in 0..seeds {
                let bound = if lin {
                    DEFAULT_LIN_BOUND
                } else {
                    DEFAULT_SC_BOUND
                };
                let ops = 3 + (seed as usize % (bound - 2));
                let t = (n - 1) / 2;
                cases.push(
                    ScenarioConfig::new(n, t, workload, ops)
                        .with_seed(seed)
                        .with_m(m)
                        .with_crash(CrashPlan::Random((seed % (t as u64 + 1)) as usize))
                        .with_delay(delay_for(seed, n)),
                );
            }
        }
    }
    let results: Vec<Result<(), String>> = cases
        .par_iter()
        .map(|config| {
            let (trace, _) = run_and_check(config)?;
            let h = snapshot_history(&trace, config)?;
            let (brute, witness) = if lin {
                (
                    check_linearizable_bruteforce(&h, DEFAULT_LIN_BOUND),
                    check_linearizable_witness(&h),
                )
            } else {
                (
                    check_sequentially_consistent(&h, DEFAULT_SC_BOUND),
                    check_sc_witness(&h),
                )
            };
            if !brute.passed() || !witness.passed() || brute.outcome != witness.outcome {
                return Err(format!("seed {}: {brute} / {witness}", config.seed));
            }
            Ok(())
        })
        .collect();
    Ok(first_error(results)?.len())
}

/// Larger histories, witness only.
fn large_histories(workload: Workload, sizes: &[(usize, u64)]) -> Result<usize, String> {
    let mut cases = Vec::new();
    for &(ops, seeds) in sizes {
        for seed in 0..seeds {
            let n = if seed % 2 == 0 { 3 } else { 5 };
            let t = (n - 1) / 2;
            cases.push(
                ScenarioConfig::new(n, t, workload, ops)
                    .with_seed(seed)
                    .with_m(1 + seed as usize % 3)
                    .with_crash(CrashPlan::Random(t))
                    .with_delay(delay_for(seed, n)),
            );
        }
    }
    let results: Vec<Result<(), String>> = cases
        .par_iter()
        .map(|config| run_and_check(config).map(|_| ()))
        .collect();
    Ok(first_error(results)?.len())
}

fn linearizability() -> Result<String, String> {
    let small = small_histories(Workload::Snapshot, 300, true)?;
    let large = large_histories(Workload::Snapshot, &[(200, 60), (2000, 4)])?;
    Ok(format!(
        "{small} histories of <=10 ops: brute force and witness both pass; {large} histories of 200-2000 ops pass the witness"
    ))
}

fn resiliency() -> Result<String, String> {
    let mut stalled = 0;
    let mut completed = 0;
    for n in 3usize..=7 {
        let half = n.div_ceil(2);
        for seed in 0..40u64 {
            // Majority loss: crash ceil(n/2) processes before anything happens.
            let crash = CrashPlan::Explicit((1..=half as u32).map(|p| (pid(p), 0)).collect());
            let config = ScenarioConfig::new(n, half, Workload::RawBroadcast, 12)
                .with_seed(seed)
                .with_crash(crash)
                .with_delay(delay_for(seed, n));
            let outcome = run(&config).map_err(|e| e.to_string())?;
            let invoked = outcome.trace.of_kind(Kind::ScBroadcast).count();
            let done = outcome.trace.of_kind(Kind::BroadcastComplete).count();
            if outcome.status.is_quiescent() || done > 0 || invoked == 0 {
                return Err(format!(
                    "n={n} seed {seed}: {half} crashes yet status={} with {done}/{invoked} broadcasts complete",
                    outcome.status
                ));
            }
            stalled += 1;
            // Minority loss: every survivor operation completes.
            for k in 0..=(n - 1) / 2 {
                let plans = [
                    CrashPlan::Explicit((1..=k as u32).map(|p| (pid(p), 0)).collect()),
                    CrashPlan::Random(k),
                ];
                for (crash, workload) in plans
                    .into_iter()
                    .zip([Workload::RawBroadcast, Workload::Snapshot])
                {
                    let config = ScenarioConfig::new(n, (n - 1) / 2, workload, 20)
                        .with_seed(seed)
                        .with_crash(crash)
                        .with_delay(delay_for(seed, n));
                    let (trace, _) = run_and_check(&config)?;
                    survivors_complete(&trace)
                        .map_err(|e| format!("n={n} seed {seed} {k} crashes: {e}"))?;
                    completed += 1;
                }
            }
        }
    }
    Ok(format!(
        "{stalled} runs with ceil(n/2) crashes stall with no broadcast completing; {completed} runs with <=floor((n-1)/2) crashes complete every survivor operation"
    ))
}

/// Every operation and broadcast of a process that never crashed returned.
fn survivors_complete(trace: &Trace) -> Result<(), String> {
    let crashed: BTreeSet<ProcessId> = trace.of_kind(Kind::Crash).filter_map(|e| e.proc).collect();
    let mut open: BTreeMap<ProcessId, i64> = BTreeMap::new();
    for e in &trace.events {
        let Some(p) = e.proc else { continue };
        let delta = match e.kind {
            Kind::OpInvoke | Kind::ScBroadcast => 1,
            Kind::OpReturn | Kind::BroadcastComplete => -1,
            _ => 0,
        };
        *open.entry(p).or_default() += delta;
    }
    match open.iter().find(|(p, c)| **c != 0 && !crashed.contains(p)) {
        Some((p, c)) => Err(format!("p{p} has {c} unfinished invocations")),
        None => Ok(()),
    }
}

fn shared_memory() -> Result<String, String> {
    let mut states = 0;
    let mut leaves = 0;
    for counts in [[1usize, 0], [1, 1], [2, 0], [2, 1], [3, 0]] {
        for allow_crash in [false, true] {
            let config = explore_config(&counts, allow_crash);
            let stats = explore(&config, |leaf| {
                match failures(&leaf_verdicts(&config, leaf)).first() {
                    Some(v) => Err(format!("{counts:?} crash={allow_crash}: {v}")),
                    None => Ok(()),
                }
            })?;
            states += stats.states;
            leaves += stats.leaves;
        }
    }
    let mut randomized = 0;
    for workload in [Workload::RwEquivalence, Workload::RwEquivalenceSc] {
        for n in [3usize, 5] {
            let results: Vec<Result<(), String>> = (0..1000u64)
                .into_par_iter()
                .map(|seed| {
                    let crashes = (seed % n as u64) as usize;
                    let config = ScenarioConfig::new(n, n - 1, workload, 5 + (seed % 16) as usize)
                        .with_seed(seed)
                        .with_crash(CrashPlan::Random(crashes))
                        .with_delay(delay_for(seed, n));
                    let (_, verdicts) = run_and_check(&config)?;
                    match verdicts.iter().find(|v| v.property == "termination") {
                        Some(v) if v.passed() => Ok(()),
                        other => Err(format!("seed {seed}: termination {other:?}")),
                    }
                })
                .collect();
            randomized += first_error(results)?.len();
        }
    }
    Ok(format!(
        "n=2 exhaustive: {states} states, {leaves} terminal interleavings pass; {randomized} randomized runs (n=3,5, up to n-1 crashes, atomic and sequentially consistent memory) pass"
    ))
}

/// scbroadcasts per completed operation, grouped by operation kind.
fn broadcasts_per_op(trace: &Trace) -> Result<BTreeMap<String, BTreeSet<usize>>, String> {
    let mut current: BTreeMap<ProcessId, (String, usize)> = BTreeMap::new();
    let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for e in &trace.events {
        match e.kind {
            Kind::OpInvoke => {
                current.insert(e.process()?, (e.field("kind")?.to_string(), 0));
            }
            Kind::ScBroadcast => {
                if let Some(op) = current.get_mut(&e.process()?) {
                    op.1 += 1;
                }
            }
            Kind::OpReturn => {
                let (kind, count) = current
                    .remove(&e.process()?)
                    .ok_or("return without invoke")?;
                out.entry(kind).or_default().insert(count);
            }
            _ => {}
        }
    }
    Ok(out)
}

fn registers() -> Result<String, String> {
    let mut lin = 0;
    for workload in [Workload::Register, Workload::SwmrRegister] {
        lin += small_histories(workload, 300, true)?;
        lin += large_histories(workload, &[(200, 40), (2000, 2)])?;
    }
    let mut sc = 0;
    for workload in [Workload::ScRegister, Workload::ScSnapshot] {
        sc += small_histories(workload, 300, false)?;
        sc += large_histories(workload, &[(200, 40), (2000, 2)])?;
    }
    let mut costs = Vec::new();
    for (workload, write, read) in [
        (Workload::Snapshot, 2, 1),
        (Workload::Register, 2, 1),
        (Workload::ScSnapshot, 1, 0),
        (Workload::ScRegister, 1, 0),
    ] {
        let mut seen: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for seed in 0..30 {
            let trace = trace_of(&ScenarioConfig::new(3, 1, workload, 30).with_seed(seed));
            for (kind, counts) in broadcasts_per_op(&trace)? {
                seen.entry(kind).or_default().extend(counts);
            }
        }
        let writes = seen.get("write").cloned().unwrap_or_default();
        let reads: BTreeSet<usize> = ["snapshot", "read"]
            .iter()
            .filter_map(|k| seen.get(*k))
            .flatten()
            .copied()
            .collect();
        if writes != BTreeSet::from([write]) || reads != BTreeSet::from([read]) {
            return Err(format!(
                "{}: writes used {writes:?} scbroadcasts, reads {reads:?}; expected {write} and {read}",
                workload.as_str()
            ));
        }
        costs.push(format!("{}={write}/{read}", workload.as_str()));
    }
    Ok(format!(
        "{lin} register histories linearizable, {sc} sequentially consistent histories pass; scbroadcasts per write/read: {}",
        costs.join(" ")
    ))
}

/// Renumbers steps after records were removed.
fn renumber(trace: &mut Trace) {
    for (k, e) in trace.events.iter_mut().enumerate() {
        e.step = k as u64;
    }
}

fn delivery_indices(trace: &Trace, p: ProcessId) -> Vec<usize> {
    trace
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == Kind::ScdDeliver && e.proc == Some(p))
        .map(|(k, _)| k)
        .collect()
}

fn set_of(trace: &Trace, k: usize) -> BTreeSet<MsgId> {
    parse_ids(trace.events[k].get("set").unwrap())
        .unwrap()
        .into_iter()
        .collect()
}

fn put_set(trace: &mut Trace, k: usize, ids: &BTreeSet<MsgId>) {
    trace.events[k].fields.insert("set".into(), render_ids(ids));
}

fn verdict_of(trace: &Trace, property: &str) -> Result<Outcome, String> {
    let verdicts = check_trace(trace).map_err(|e| e.to_string())?;
    verdicts
        .iter()
        .find(|v| v.property == property)
        .map(|v| v.outcome)
        .ok_or_else(|| format!("no {property} verdict"))
}

/// A crash-free raw broadcast trace in which p1 and p2 both deliver at
/// least three sets, with each of p1's first three sets delivered in a
/// different set by p2.
fn base_trace() -> Trace {
    for seed in 0.. {
        let trace = trace_of(&ScenarioConfig::new(3, 1, Workload::RawBroadcast, 8).with_seed(seed));
        let (p1, p2) = (
            delivery_indices(&trace, pid(1)),
            delivery_indices(&trace, pid(2)),
        );
        if p1.len() < 3 || p2.len() < 3 {
            continue;
        }
        let pos = |id: &MsgId| p2.iter().position(|k| set_of(&trace, *k).contains(id));
        let firsts: Vec<Option<usize>> = p1[..3]
            .iter()
            .map(|k| pos(set_of(&trace, *k).iter().next().unwrap()))
            .collect();
        if firsts[0] < firsts[1] && firsts[1] < firsts[2] {
            return trace;
        }
    }
    unreachable!()
}

/// The negative two-process example: p1 delivers {m1,m2} then {m3,m4,m5},
/// p2 delivers {m1,m3} then {m2}.
fn ms_negative_example() -> Trace {
    let mut trace = Trace::default();
    let config = ScenarioConfig::new(2, 0, Workload::RawBroadcast, 5);
    trace.push(Kind::Config, None, config.to_fields());
    let m: Vec<MsgId> = (1..=5).map(|k| msg(1 + (k % 2) as u32, k)).collect();
    for id in &m {
        trace.push(
            Kind::ScBroadcast,
            Some(id.sender),
            [("msg", id.to_string()), ("payload", String::new())],
        );
    }
    for (p, sets) in [
        (1, vec![vec![0, 1], vec![2, 3, 4]]),
        (2, vec![vec![0, 2], vec![1]]),
    ] {
        for set in sets {
            let ids: Vec<MsgId> = set.into_iter().map(|k| m[k]).collect();
            trace.push(Kind::ScdDeliver, Some(pid(p)), [("set", render_ids(&ids))]);
        }
    }
    trace
}

fn object_trace(workload: Workload) -> Trace {
    (0..)
        .map(|seed| {
            trace_of(
                &ScenarioConfig::new(3, 1, workload, 8)
                    .with_seed(seed)
                    .with_m(2),
            )
        })
        .find(|t| {
            t.of_kind(Kind::OpReturn).any(|e| {
                e.get("kind") == Some("snapshot")
                    && e.get("values").is_some_and(|v| v.contains(|c| c != ','))
            })
        })
        .unwrap()
}

fn corrupt_snapshot(trace: &mut Trace) {
    let e = trace
        .events
        .iter_mut()
        .find(|e| e.kind == Kind::OpReturn && e.get("kind") == Some("snapshot"))
        .unwrap();
    let width = e.get("values").unwrap().split(',').count();
    e.fields
        .insert("values".into(), vec!["ff"; width].join(","));
}

fn mutations() -> Result<String, String> {
    let base = base_trace();
    if let Some(v) = failures(&check_trace(&base).map_err(|e| e.to_string())?).first() {
        return Err(format!("base trace fails: {v}"));
    }
    let p1 = delivery_indices(&base, pid(1));
    let mut fixtures: Vec<(&str, Trace)> = Vec::new();

    let mut t = base.clone();
    let mut first = set_of(&t, p1[0]);
    first.insert(msg(3, 99));
    put_set(&mut t, p1[0], &first);
    fixtures.push(("validity", t));

    let mut t = base.clone();
    let mut second = set_of(&t, p1[1]);
    second.extend(set_of(&t, p1[0]));
    put_set(&mut t, p1[1], &second);
    fixtures.push(("integrity", t));

    let mut t = base.clone();
    let (a, b) = (set_of(&t, p1[0]), set_of(&t, p1[1]));
    put_set(&mut t, p1[0], &b);
    put_set(&mut t, p1[1], &a);
    fixtures.push(("ms_ordering", t));
    fixtures.push(("ms_ordering", ms_negative_example()));

    let mut t = base.clone();
    t.events.remove(p1[1]);
    renumber(&mut t);
    fixtures.push(("containment", t));

    let mut t = base.clone();
    t.events.remove(*p1.last().unwrap());
    renumber(&mut t);
    fixtures.push(("termination", t));

    for (workload, property) in [
        (Workload::Snapshot, "linearizability_witness"),
        (Workload::Snapshot, "linearizability_bruteforce"),
        (Workload::ScSnapshot, "sequential_consistency_witness"),
        (Workload::ScSnapshot, "sequential_consistency_bruteforce"),
    ] {
        let mut t = object_trace(workload);
        if verdict_of(&t, property)? != Outcome::Pass {
            return Err(format!("{property}: uncorrupted fixture does not pass"));
        }
        corrupt_snapshot(&mut t);
        fixtures.push((property, t));
    }

    let mut t = base.clone();
    let recvs: Vec<usize> = (0..t.events.len())
        .filter(|k| t.events[*k].kind == Kind::Recv)
        .collect();
    let pair = recvs
        .iter()
        .flat_map(|a| recvs.iter().map(move |b| (*a, *b)))
        .find(|(a, b)| {
            a < b && {
                let (x, y) = (&t.events[*a], &t.events[*b]);
                x.proc == y.proc && x.get("from") == y.get("from") && x.get("m") != y.get("m")
            }
        })
        .ok_or("no channel carried two messages")?;
    let (x, y) = (
        t.events[pair.0].fields.clone(),
        t.events[pair.1].fields.clone(),
    );
    t.events[pair.0].fields = y;
    t.events[pair.1].fields = x;
    fixtures.push(("fifo", t));

    let mut t = base.clone();
    let tail = t.events.pop().unwrap();
    t.push(Kind::Crash, Some(pid(2)), Vec::<(&str, String)>::new());
    let mut ghost = t.events[p1[0]].clone();
    ghost.proc = Some(pid(2));
    ghost.step = t.events.len() as u64;
    t.events.push(ghost);
    t.push(tail.kind, None, tail.fields);
    fixtures.push(("crash_silence", t));

    let mut caught = Vec::new();
    for (property, trace) in &fixtures {
        let outcome = verdict_of(trace, property)?;
        if outcome != Outcome::Fail {
            return Err(format!(
                "{property} fixture was not caught ({})",
                outcome.as_str()
            ));
        }
        caught.push(*property);
    }
    caught.dedup();
    Ok(format!(
        "{} corrupted traces caught: {}",
        fixtures.len(),
        caught.join(", ")
    ))
}

fn determinism() -> Result<String, String> {
    let mut cases = Vec::new();
    for workload in Workload::ALL {
        for seed in 0..25u64 {
            let n = 3 + 2 * (seed as usize % 2);
            let t = if workload.is_message_passing() {
                (n - 1) / 2
            } else {
                n - 1
            };
            cases.push(
                ScenarioConfig::new(n, t, workload, 15)
                    .with_seed(seed)
                    .with_m(2)
                    .with_crash(CrashPlan::Random(seed as usize % (t + 1)))
                    .with_delay(delay_for(seed, n)),
            );
        }
    }
    let results: Vec<Result<(), String>> = cases
        .par_iter()
        .map(|config| {
            let a = trace_of(config);
            let b = trace_of(config);
            let text = a.render();
            if text != b.render() {
                return Err(format!(
                    "{} seed {}: traces differ",
                    config.workload.as_str(),
                    config.seed
                ));
            }
            let replayed = Trace::parse(&text).map_err(|e| e.to_string())?;
            let live = check_trace(&a).map_err(|e| e.to_string())?;
            let again = check_trace(&replayed).map_err(|e| e.to_string())?;
            if live != again {
                return Err(format!(
                    "{} seed {}: replay verdicts differ",
                    config.workload.as_str(),
                    config.seed
                ));
            }
            Ok(())
        })
        .collect();
    let runs = first_error(results)?.len();
    Ok(format!("{runs} configs over all workloads: identical traces on rerun, replay verdicts equal live verdicts"))
}
