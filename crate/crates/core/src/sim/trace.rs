use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::types::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

macro_rules! kinds {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Kind {
            $($variant),*
        }

        impl Kind {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Kind::$variant => $name),*
                }
            }
        }

        impl FromStr for Kind {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Kind::$variant),)*
                    other => Err(format!("unknown record kind `{other}`")),
                }
            }
        }
    };
}

kinds! {
    Config => "config",
    OpInvoke => "op_invoke",
    OpReturn => "op_return",
    ScBroadcast => "scbroadcast",
    Send => "send",
    Recv => "recv",
    ScdDeliver => "scd_deliver",
    BroadcastComplete => "broadcast_complete",
    ObjTsa => "obj_tsa",
    MemWrite => "mem_write",
    MemSnapshot => "mem_snapshot",
    Crash => "crash",
    End => "end",
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One trace line: `step|kind|proc|k=v;k=v`, with `-` for a global record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: Kind,
    pub proc: Option<ProcessId>,
    pub fields: BTreeMap<String, String>,
}

impl TraceEvent {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    /// Field lookup that reports which record lacked it.
    pub fn field(&self, key: &str) -> Result<&str, String> {
        self.get(key)
            .ok_or_else(|| format!("{} record at step {} has no `{key}`", self.kind, self.step))
    }

    pub fn parse_field<T: FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.field(key)?;
        raw.parse().map_err(|_| {
            format!(
                "{} record at step {}: bad `{key}={raw}`",
                self.kind, self.step
            )
        })
    }

    pub fn process(&self) -> Result<ProcessId, String> {
        self.proc.ok_or_else(|| {
            format!(
                "{} record at step {} names no process",
                self.kind, self.step
            )
        })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|", self.step, self.kind)?;
        match self.proc {
            Some(p) => write!(f, "{p}|")?,
            None => f.write_str("-|")?,
        }
        for (k, (key, value)) in self.fields.iter().enumerate() {
            if k > 0 {
                f.write_str(";")?;
            }
            write!(f, "{key}={value}")?;
        }
        Ok(())
    }
}

fn parse_line(line: &str) -> Result<TraceEvent, String> {
    let mut parts = line.splitn(4, '|');
    let (Some(step), Some(kind), Some(proc), Some(payload)) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err("expected step|kind|proc|payload".into());
    };
    let step = step.parse().map_err(|_| format!("bad step `{step}`"))?;
    let kind = kind.parse()?;
    let proc = match proc {
        "-" => None,
        p => Some(p.parse().map_err(|_| format!("bad process `{p}`"))?),
    };
    let mut fields = BTreeMap::new();
    if !payload.is_empty() {
        for pair in payload.split(';') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("bad payload field `{pair}`"))?;
            if fields.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("duplicate payload key `{k}`"));
            }
        }
    }
    Ok(TraceEvent {
        step,
        kind,
        proc,
        fields,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    /// Appends a record, numbering it after the previous one.
    pub fn push<K, V>(
        &mut self,
        kind: Kind,
        proc: Option<ProcessId>,
        fields: impl IntoIterator<Item = (K, V)>,
    ) where
        K: Into<String>,
        V: ToString,
    {
        let step = self.events.len() as u64;
        self.events.push(TraceEvent {
            step,
            kind,
            proc,
            fields: fields
                .into_iter()
                .map(|(k, v)| (k.into(), v.to_string()))
                .collect(),
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses rendered text. Steps must count up from 0 without gaps and the
    /// last line must end in a newline, so a truncated or spliced file is
    /// caught at the first bad line.
    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(TraceParseError {
                line: text.lines().count(),
                reason: "unterminated last line (truncated file?)".into(),
            });
        }
        let mut events = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let err = |reason: String| TraceParseError {
                line: k + 1,
                reason,
            };
            let event = parse_line(line).map_err(err)?;
            if event.step != k as u64 {
                return Err(err(format!("expected step {k}, found {}", event.step)));
            }
            events.push(event);
        }
        if events.is_empty() {
            return Err(TraceParseError {
                line: 1,
                reason: "empty trace".into(),
            });
        }
        Ok(Trace { events })
    }

    pub fn of_kind(&self, kind: Kind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}
