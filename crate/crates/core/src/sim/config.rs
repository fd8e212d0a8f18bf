use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scd_mp::Fault;
use crate::types::ProcessId;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing config key `{0}`")]
    MissingKey(&'static str),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected key=value, got `{text}`")]
    BadLine { line: usize, text: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workload {
    /// Bare scbroadcasts over the message-passing implementation.
    RawBroadcast,
    Snapshot,
    ScSnapshot,
    /// Multi-writer register.
    Register,
    ScRegister,
    /// Single-writer register; process 1 writes.
    SwmrRegister,
    /// Bare scbroadcasts over atomic shared memory.
    RwEquivalence,
    /// Bare scbroadcasts over sequentially consistent shared memory.
    RwEquivalenceSc,
}

impl Workload {
    pub const ALL: [Workload; 8] = [
        Workload::RawBroadcast,
        Workload::Snapshot,
        Workload::ScSnapshot,
        Workload::Register,
        Workload::ScRegister,
        Workload::SwmrRegister,
        Workload::RwEquivalence,
        Workload::RwEquivalenceSc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Workload::RawBroadcast => "raw_broadcast",
            Workload::Snapshot => "snapshot",
            Workload::ScSnapshot => "sc_snapshot",
            Workload::Register => "register",
            Workload::ScRegister => "sc_register",
            Workload::SwmrRegister => "swmr_register",
            Workload::RwEquivalence => "rw_equivalence",
            Workload::RwEquivalenceSc => "rw_equivalence_sc",
        }
    }

    /// Runs over message passing (as opposed to shared memory).
    pub fn is_message_passing(self) -> bool {
        !matches!(self, Workload::RwEquivalence | Workload::RwEquivalenceSc)
    }

    /// Runs snapshot or register operations on top of the broadcast.
    pub fn has_objects(self) -> bool {
        !matches!(
            self,
            Workload::RawBroadcast | Workload::RwEquivalence | Workload::RwEquivalenceSc
        )
    }

    pub fn is_sequentially_consistent(self) -> bool {
        matches!(self, Workload::ScSnapshot | Workload::ScRegister)
    }

    /// Register workloads always have exactly one register.
    pub fn is_register(self) -> bool {
        matches!(
            self,
            Workload::Register | Workload::ScRegister | Workload::SwmrRegister
        )
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workload {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let alias = match s {
            "snapshot_ops" => "snapshot",
            "register_ops" => "register",
            other => other,
        };
        Workload::ALL
            .into_iter()
            .find(|w| w.as_str() == alias)
            .ok_or_else(|| ConfigError::BadValue {
                key: "workload".into(),
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrashPlan {
    None,
    /// `k` distinct processes crash at seeded random scheduler steps.
    Random(usize),
    /// Each process crashes at the start of the given scheduler step.
    Explicit(Vec<(ProcessId, u64)>),
}

impl CrashPlan {
    pub fn count(&self) -> usize {
        match self {
            CrashPlan::None => 0,
            CrashPlan::Random(k) => *k,
            CrashPlan::Explicit(list) => list.len(),
        }
    }
}

impl fmt::Display for CrashPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrashPlan::None => f.write_str("none"),
            CrashPlan::Random(k) => write!(f, "random:{k}"),
            CrashPlan::Explicit(list) => {
                let parts: Vec<String> = list.iter().map(|(p, s)| format!("{p}@{s}")).collect();
                write!(f, "explicit:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for CrashPlan {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadValue {
            key: "crash".into(),
            value: s.into(),
        };
        if s == "none" {
            return Ok(CrashPlan::None);
        }
        if let Some(k) = s.strip_prefix("random:") {
            return k.parse().map(CrashPlan::Random).map_err(|_| bad());
        }
        if let Some(list) = s.strip_prefix("explicit:") {
            if list.is_empty() {
                return Ok(CrashPlan::Explicit(Vec::new()));
            }
            return list
                .split(',')
                .map(|entry| {
                    let (p, step) = entry.split_once('@').ok_or_else(bad)?;
                    Ok((
                        p.parse().map_err(|_| bad())?,
                        step.parse().map_err(|_| bad())?,
                    ))
                })
                .collect::<Result<_, _>>()
                .map(CrashPlan::Explicit);
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayPolicy {
    /// Every enabled event is equally likely.
    Uniform,
    /// The event that has been enabled longest goes first.
    FifoMinimal,
    /// Events of the listed processes are much less likely to be picked.
    TargetedSlow(Vec<ProcessId>),
}

impl fmt::Display for DelayPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayPolicy::Uniform => f.write_str("uniform"),
            DelayPolicy::FifoMinimal => f.write_str("fifo_minimal"),
            DelayPolicy::TargetedSlow(ps) => {
                let parts: Vec<String> = ps.iter().map(ProcessId::to_string).collect();
                write!(f, "targeted_slow:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for DelayPolicy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadValue {
            key: "delay".into(),
            value: s.into(),
        };
        match s {
            "uniform" | "uniform_random" => Ok(DelayPolicy::Uniform),
            "fifo_minimal" => Ok(DelayPolicy::FifoMinimal),
            _ => {
                let list = s.strip_prefix("targeted_slow:").ok_or_else(bad)?;
                list.split(',')
                    .map(|p| p.parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()
                    .map(DelayPolicy::TargetedSlow)
            }
        }
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub workload: Workload,
    pub ops: usize,
    pub m: usize,
    pub crash: CrashPlan,
    pub delay: DelayPolicy,
    pub step_budget: u64,
    #[doc(hidden)]
    pub inject: Option<Fault>,
}

impl ScenarioConfig {
    pub fn new(n: usize, t: usize, workload: Workload, ops: usize) -> Self {
        ScenarioConfig {
            n,
            t,
            seed: 0,
            workload,
            ops,
            m: 1,
            crash: CrashPlan::None,
            delay: DelayPolicy::Uniform,
            step_budget: DEFAULT_STEP_BUDGET,
            inject: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_crash(mut self, crash: CrashPlan) -> Self {
        self.crash = crash;
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_delay(mut self, delay: DelayPolicy) -> Self {
        self.delay = delay;
        self
    }

    /// Message-passing runs lose liveness once half the processes may crash.
    pub fn expected_nonterminating(&self) -> bool {
        self.workload.is_message_passing() && 2 * self.t >= self.n
    }

    /// Register count actually used by the workload.
    pub fn registers(&self) -> usize {
        if self.workload.is_register() {
            1
        } else {
            self.m
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n == 0 {
            return invalid("n must be at least 1".into());
        }
        if self.t >= self.n {
            return invalid(format!("t={} must be below n={}", self.t, self.n));
        }
        if self.m == 0 {
            return invalid("m must be at least 1".into());
        }
        let crashes = self.crash.count();
        if crashes > self.t {
            return invalid(format!("{crashes} crashes exceed the budget t={}", self.t));
        }
        if let CrashPlan::Explicit(list) = &self.crash {
            let mut seen = Vec::new();
            for (p, _) in list {
                if p.index() >= self.n {
                    return invalid(format!("crash of unknown process {p}"));
                }
                if seen.contains(p) {
                    return invalid(format!("process {p} crashes twice"));
                }
                seen.push(*p);
            }
        }
        if let DelayPolicy::TargetedSlow(ps) = &self.delay {
            if let Some(p) = ps.iter().find(|p| p.index() >= self.n) {
                return invalid(format!("targeted_slow names unknown process {p}"));
            }
        }
        Ok(())
    }

    /// Canonical key=value pairs, sorted by key.
    pub fn to_fields(&self) -> BTreeMap<String, String> {
        let mut f = BTreeMap::new();
        f.insert("crash".into(), self.crash.to_string());
        f.insert("delay".into(), self.delay.to_string());
        f.insert("m".into(), self.m.to_string());
        f.insert("n".into(), self.n.to_string());
        f.insert("ops".into(), self.ops.to_string());
        f.insert("seed".into(), self.seed.to_string());
        f.insert("step_budget".into(), self.step_budget.to_string());
        f.insert("t".into(), self.t.to_string());
        f.insert("workload".into(), self.workload.to_string());
        if let Some(fault) = self.inject {
            f.insert("inject".into(), fault_name(fault).into());
        }
        f
    }

    pub fn from_fields<'a>(
        fields: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (k, v) in fields {
            map.insert(k, v);
        }
        fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
            raw.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: raw.into(),
            })
        }
        let required =
            |key: &'static str| map.get(key).copied().ok_or(ConfigError::MissingKey(key));
        let mut config = ScenarioConfig::new(
            value("n", required("n")?)?,
            value("t", required("t")?)?,
            required("workload")?.parse()?,
            value("ops", required("ops")?)?,
        );
        for (key, raw) in &map {
            match *key {
                "n" | "t" | "workload" | "ops" => {}
                "seed" => config.seed = value(key, raw)?,
                "m" => config.m = value(key, raw)?,
                "crash" => config.crash = raw.parse()?,
                "delay" => config.delay = raw.parse()?,
                "step_budget" => config.step_budget = value(key, raw)?,
                "inject" => {
                    config.inject = Some(parse_fault(raw).ok_or_else(|| ConfigError::BadValue {
                        key: (*key).into(),
                        value: (*raw).into(),
                    })?)
                }
                other => return Err(ConfigError::UnknownKey(other.into())),
            }
        }
        Ok(config)
    }

    /// Parses a flat `key=value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: k + 1,
                text: line.into(),
            })?;
            pairs.push((key.trim(), value.trim()));
        }
        Self::from_fields(pairs)
    }

    pub fn render_text(&self) -> String {
        self.to_fields()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

pub fn fault_name(fault: Fault) -> &'static str {
    match fault {
        Fault::SkipPurge => "skip_purge",
        Fault::HalfQuorum => "half_quorum",
    }
}

pub fn parse_fault(s: &str) -> Option<Fault> {
    match s {
        "skip_purge" => Some(Fault::SkipPurge),
        "half_quorum" => Some(Fault::HalfQuorum),
        _ => None,
    }
}
