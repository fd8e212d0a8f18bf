//! Turning flags and config files into scenarios.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use scdkit::sim::ScenarioConfig;

/// Scenario flags. Each one mirrors a config key; flags override a
/// `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Flat key=value scenario file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Number of processes.
    #[arg(long)]
    pub n: Option<String>,
    /// Crash budget.
    #[arg(long)]
    pub t: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// raw_broadcast, snapshot, sc_snapshot, register, sc_register,
    /// swmr_register, rw_equivalence or rw_equivalence_sc.
    #[arg(long)]
    pub workload: Option<String>,
    /// Operations (or broadcasts) dealt out across processes.
    #[arg(long)]
    pub ops: Option<String>,
    /// Registers of a snapshot workload.
    #[arg(long)]
    pub m: Option<String>,
    /// none, random:K or explicit:P@STEP,...
    #[arg(long)]
    pub crash: Option<String>,
    /// uniform, fifo_minimal or targeted_slow:P,...
    #[arg(long)]
    pub delay: Option<String>,
    #[arg(long)]
    pub step_budget: Option<u64>,
    #[arg(long, hide = true)]
    pub inject_bug: Option<String>,
}

impl ScenarioArgs {
    /// Config-file pairs overlaid with flags, before any interpretation.
    pub fn fields(&self) -> Result<BTreeMap<String, String>> {
        let mut fields = BTreeMap::new();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let base = ScenarioConfig::parse_text(&text)
                .with_context(|| format!("bad config file {}", path.display()))?;
            fields = base.to_fields();
        }
        let flags = [
            ("n", self.n.clone()),
            ("t", self.t.clone()),
            ("seed", self.seed.map(|s| s.to_string())),
            ("workload", self.workload.clone()),
            ("ops", self.ops.clone()),
            ("m", self.m.clone()),
            ("crash", self.crash.clone()),
            ("delay", self.delay.clone()),
            ("step_budget", self.step_budget.map(|s| s.to_string())),
            ("inject", self.inject_bug.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                fields.insert(key.to_string(), v);
            }
        }
        Ok(fields)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        build(&self.fields()?)
    }
}

pub fn build(fields: &BTreeMap<String, String>) -> Result<ScenarioConfig> {
    let config = ScenarioConfig::from_fields(fields.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    config.validate()?;
    Ok(config)
}

/// `a` or `a..b` (inclusive).
pub fn parse_range(key: &str, raw: &str) -> Result<(u64, u64)> {
    let num = |s: &str| -> Result<u64> {
        s.trim()
            .parse()
            .with_context(|| format!("bad value `{raw}` for `{key}`"))
    };
    let (lo, hi) = match raw.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
        None => (num(raw)?, num(raw)?),
    };
    if lo > hi {
        bail!("empty range `{raw}` for `{key}`");
    }
    Ok((lo, hi))
}

/// Expands fuzz-only shorthands for one run: `n` and `ops` ranges, `t=max`
/// and `crash=random:t`.
pub fn expand(
    base: &BTreeMap<String, String>,
    n: u64,
    seed: u64,
) -> Result<BTreeMap<String, String>> {
    let mut fields = base.clone();
    fields.insert("n".into(), n.to_string());
    fields.insert("seed".into(), seed.to_string());
    if let Some(ops) = base.get("ops") {
        let (lo, hi) = parse_range("ops", ops)?;
        fields.insert("ops".into(), (lo + seed % (hi - lo + 1)).to_string());
    }
    let workload = fields.get("workload").cloned().unwrap_or_default();
    let t = match fields.get("t").map(String::as_str) {
        Some("max") => {
            let message_passing = build_probe(&workload)?;
            let t = if message_passing {
                (n.max(1) - 1) / 2
            } else {
                n.max(1) - 1
            };
            fields.insert("t".into(), t.to_string());
            t
        }
        Some(t) => t.parse().unwrap_or(0),
        None => 0,
    };
    if fields.get("crash").map(String::as_str) == Some("random:t") {
        fields.insert("crash".into(), format!("random:{t}"));
    }
    Ok(fields)
}

fn build_probe(workload: &str) -> Result<bool> {
    let w: scdkit::sim::Workload = workload
        .parse()
        .with_context(|| format!("bad value `{workload}` for `workload`"))?;
    Ok(w.is_message_passing())
}
