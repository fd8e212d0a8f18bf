//! Reports derived from a trace alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use scdkit::check::{check_trace, CheckError, TraceFacts, Verdict};
use scdkit::sim::{Kind, RunStatus, ScenarioConfig, Trace};
use scdkit::types::ProcessId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Records,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "records" => Ok(Format::Records),
            _ => Err(format!("unknown format `{s}` (text or records)")),
        }
    }
}

/// Overall judgement of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgement {
    Pass,
    Fail,
    /// Did not terminate, as the crash budget allows.
    ExpectedNonterminating,
}

impl Judgement {
    pub fn as_str(self) -> &'static str {
        match self {
            Judgement::Pass => "pass",
            Judgement::Fail => "fail",
            Judgement::ExpectedNonterminating => "expected-nonterminating",
        }
    }
}

/// FORWARD sends per scbroadcast. Zero for shared-memory workloads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageStats {
    pub broadcasts: usize,
    pub max: usize,
    pub mean: f64,
    pub bound: usize,
}

impl MessageStats {
    fn of(facts: &TraceFacts) -> Self {
        let counts: Vec<usize> = facts
            .broadcasts
            .keys()
            .map(|id| facts.sends.get(id).copied().unwrap_or(0))
            .collect();
        let total: usize = counts.iter().sum();
        MessageStats {
            broadcasts: counts.len(),
            max: counts.iter().copied().max().unwrap_or(0),
            mean: if counts.is_empty() {
                0.0
            } else {
                total as f64 / counts.len() as f64
            },
            bound: facts.config.n * facts.config.n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub status: Option<RunStatus>,
    pub steps: Option<u64>,
    pub verdicts: Vec<Verdict>,
    pub messages: MessageStats,
    pub wall: Option<Duration>,
}

impl RunReport {
    pub fn from_trace(trace: &Trace, wall: Option<Duration>) -> Result<Self, CheckError> {
        let facts = TraceFacts::from_trace(trace)?;
        let verdicts = check_trace(trace)?;
        let steps = trace
            .of_kind(Kind::End)
            .last()
            .and_then(|e| e.get("steps"))
            .and_then(|s| s.parse().ok());
        Ok(RunReport {
            messages: MessageStats::of(&facts),
            config: facts.config,
            status: facts.status,
            steps,
            verdicts,
            wall,
        })
    }

    pub fn judgement(&self) -> Judgement {
        if self.verdicts.iter().any(Verdict::failed) {
            return Judgement::Fail;
        }
        match self.status {
            Some(s) if !s.is_quiescent() => {
                if self.config.expected_nonterminating() {
                    Judgement::ExpectedNonterminating
                } else {
                    Judgement::Fail
                }
            }
            _ => Judgement::Pass,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.render_text(),
            Format::Records => self.render_records(),
        }
    }

    fn status_text(&self) -> String {
        match self.status {
            Some(s) => s.to_string(),
            None => "unknown (no end record)".into(),
        }
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let config: Vec<String> = self
            .config
            .to_fields()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "config    {}", config.join(" "));
        let _ = write!(out, "status    {}", self.status_text());
        if let Some(steps) = self.steps {
            let _ = write!(out, " after {steps} steps");
        }
        out.push('\n');
        if self.config.expected_nonterminating() {
            let _ = writeln!(
                out,
                "liveness  not guaranteed: t={} crashes may reach n/2 (expected-nonterminating)",
                self.config.t
            );
        }
        if self.config.workload.is_message_passing() {
            let m = &self.messages;
            let _ = writeln!(
                out,
                "messages  {} broadcasts, sends per broadcast max {} mean {:.2} (n²={})",
                m.broadcasts, m.max, m.mean, m.bound
            );
        } else {
            let _ = writeln!(
                out,
                "messages  {} broadcasts over shared memory",
                self.messages.broadcasts
            );
        }
        let width = self
            .verdicts
            .iter()
            .map(|v| v.property.len())
            .max()
            .unwrap_or(0);
        for v in &self.verdicts {
            let _ = write!(out, "  {:<width$}  {}", v.property, v.outcome.as_str());
            if !v.detail.is_empty() {
                let _ = write!(out, "  {}", v.detail);
            }
            out.push('\n');
        }
        if let Some(wall) = self.wall {
            let _ = writeln!(out, "time      {:.3}s", wall.as_secs_f64());
        }
        let _ = writeln!(out, "result    {}", self.judgement().as_str());
        out
    }

    fn render_records(&self) -> String {
        let mut out = String::new();
        let config: Vec<String> = self
            .config
            .to_fields()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "config|{}", config.join(";"));
        let (status, reason) = match self.status {
            Some(s) => s.fields(),
            None => ("unknown", None),
        };
        let _ = write!(out, "status|");
        if let Some(r) = reason {
            let _ = write!(out, "reason={r};");
        }
        let _ = writeln!(
            out,
            "status={status};steps={}",
            self.steps.map_or("-".into(), |s| s.to_string())
        );
        let _ = writeln!(
            out,
            "liveness|guaranteed={}",
            !self.config.expected_nonterminating()
        );
        let m = &self.messages;
        let _ = writeln!(
            out,
            "messages|bound={};broadcasts={};max={};mean={:.2}",
            m.bound, m.broadcasts, m.max, m.mean
        );
        for v in &self.verdicts {
            let _ = writeln!(out, "{v}");
        }
        if let Some(wall) = self.wall {
            let _ = writeln!(out, "time|ms={}", wall.as_millis());
        }
        let _ = writeln!(out, "result|{}", self.judgement().as_str());
        out
    }
}

/// Aggregate over a fuzz sweep.
#[derive(Debug, Clone, Default)]
pub struct FuzzSummary {
    pub attempted: usize,
    pub passed: usize,
    pub failed: usize,
    /// Runs that stalled as their crash budget allows.
    pub nonterminated: usize,
    /// Smallest failing `(seed, n)` per property.
    pub first_failure: BTreeMap<String, (u64, usize)>,
    /// Smallest `n² - max sends` seen over message-passing runs.
    pub bound_margin: Option<usize>,
    /// Configs that could not run at all.
    pub errors: Vec<String>,
}

impl FuzzSummary {
    pub fn add(&mut self, report: &RunReport) {
        self.attempted += 1;
        match report.judgement() {
            Judgement::Pass => self.passed += 1,
            Judgement::ExpectedNonterminating => self.nonterminated += 1,
            Judgement::Fail => {
                self.failed += 1;
                let key = (report.config.seed, report.config.n);
                let mut failing: Vec<String> = report
                    .verdicts
                    .iter()
                    .filter(|v| v.failed())
                    .map(|v| v.property.clone())
                    .collect();
                if failing.is_empty() {
                    failing.push("termination".into());
                }
                for property in failing {
                    let slot = self.first_failure.entry(property).or_insert(key);
                    *slot = (*slot).min(key);
                }
            }
        }
        if report.config.workload.is_message_passing() && report.messages.broadcasts > 0 {
            let margin = report.messages.bound.saturating_sub(report.messages.max);
            self.bound_margin = Some(self.bound_margin.map_or(margin, |m| m.min(margin)));
        }
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        let margin = self.bound_margin.map_or("-".into(), |m| m.to_string());
        match format {
            Format::Text => {
                let _ = writeln!(
                    out,
                    "runs {}: {} passed, {} failed, {} nonterminated (expected)",
                    self.attempted, self.passed, self.failed, self.nonterminated
                );
                let _ = writeln!(out, "message bound margin (n² - max sends): {margin}");
                for (property, (seed, n)) in &self.first_failure {
                    let _ = writeln!(out, "first failure of {property}: seed {seed} (n={n})");
                }
                for e in &self.errors {
                    let _ = writeln!(out, "error: {e}");
                }
            }
            Format::Records => {
                let _ = writeln!(
                    out,
                    "fuzz|attempted={};failed={};margin={margin};nonterminated={};passed={}",
                    self.attempted, self.failed, self.nonterminated, self.passed
                );
                for (property, (seed, n)) in &self.first_failure {
                    let _ = writeln!(out, "first_failure|n={n};property={property};seed={seed}");
                }
                for e in &self.errors {
                    let _ = writeln!(out, "error|{e}");
                }
            }
        }
        out
    }
}

/// Counts and shapes of a trace, independent of any checker.
pub fn stats(trace: &Trace, format: Format) -> Result<String, CheckError> {
    let facts = TraceFacts::from_trace(trace)?;
    let n = facts.config.n;
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &trace.events {
        *kinds.entry(e.kind.as_str()).or_default() += 1;
    }
    let mut latency: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    let mut open: BTreeMap<ProcessId, (String, u64)> = BTreeMap::new();
    for e in &trace.events {
        let Some(p) = e.proc else { continue };
        match e.kind {
            Kind::OpInvoke => {
                open.insert(p, (e.get("kind").unwrap_or("?").to_string(), e.step));
            }
            Kind::OpReturn => {
                if let Some((kind, start)) = open.remove(&p) {
                    let slot = latency.entry(kind).or_default();
                    slot.0 += e.step - start;
                    slot.1 += 1;
                }
            }
            _ => {}
        }
    }
    let messages = MessageStats::of(&facts);
    let mut out = String::new();
    match format {
        Format::Text => {
            let _ = writeln!(out, "records   {}", trace.events.len());
            for (kind, count) in &kinds {
                let _ = writeln!(out, "  {kind:<18} {count}");
            }
            let _ = writeln!(
                out,
                "sends     {} broadcasts, max {} mean {:.2} per broadcast (n²={})",
                messages.broadcasts, messages.max, messages.mean, messages.bound
            );
            for k in 0..n {
                let sets = &facts.log.sets[k];
                let total: usize = sets.iter().map(|s| s.len()).sum();
                let largest = sets.iter().map(|s| s.len()).max().unwrap_or(0);
                let _ = writeln!(
                    out,
                    "p{:<8} {} sets, {} messages, largest set {}{}",
                    k + 1,
                    sets.len(),
                    total,
                    largest,
                    if facts.log.faulty[k] { ", crashed" } else { "" }
                );
            }
            for (kind, (sum, count)) in &latency {
                let _ = writeln!(
                    out,
                    "{kind:<9} {count} completed, mean latency {:.1} records",
                    *sum as f64 / *count as f64
                );
            }
        }
        Format::Records => {
            for (kind, count) in &kinds {
                let _ = writeln!(out, "records|count={count};kind={kind}");
            }
            let _ = writeln!(
                out,
                "messages|bound={};broadcasts={};max={};mean={:.2}",
                messages.bound, messages.broadcasts, messages.max, messages.mean
            );
            for k in 0..n {
                let sets = &facts.log.sets[k];
                let total: usize = sets.iter().map(|s| s.len()).sum();
                let largest = sets.iter().map(|s| s.len()).max().unwrap_or(0);
                let _ = writeln!(
                    out,
                    "process|crashed={};largest={largest};messages={total};proc={};sets={}",
                    facts.log.faulty[k],
                    k + 1,
                    sets.len()
                );
            }
            for (kind, (sum, count)) in &latency {
                let _ = writeln!(
                    out,
                    "latency|completed={count};kind={kind};mean={:.1}",
                    *sum as f64 / *count as f64
                );
            }
        }
    }
    Ok(out)
}
