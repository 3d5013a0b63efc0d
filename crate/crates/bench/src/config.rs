//! Experiment configuration: a typed key schema per experiment, resolved
//! from defaults, an optional TOML file, and `--key value` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{key}` for experiment `{experiment}`")]
    UnknownKey { key: String, experiment: Experiment },
    #[error("key `{key}` expects {expected}, got {found}")]
    TypeMismatch { key: String, expected: &'static str, found: String },
    #[error("key `{key}` must be one of {allowed:?}, got {found:?}")]
    NotAllowed { key: String, allowed: &'static [&'static str], found: String },
    #[error("missing required key `{key}`")]
    MissingRequired { key: &'static str },
    #[error("key `experiment` is `{file}` in the file but the command is `{command}`")]
    ConflictingExperiment { file: String, command: Experiment },
    #[error("flag `{flag}`: {msg}")]
    BadFlag { flag: String, msg: String },
    #[error("config file: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Seq,
    Sim,
    Counter,
    Queue,
    Stm,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Seq, Experiment::Sim, Experiment::Counter, Experiment::Queue, Experiment::Stm];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Seq => "seq",
            Experiment::Sim => "sim",
            Experiment::Counter => "counter",
            Experiment::Queue => "queue",
            Experiment::Stm => "stm",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text,
    Choice(&'static [&'static str]),
    /// Comma list (`1,2,4`), inclusive range (`1..8`), or TOML array.
    IntList,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Int => "a nonnegative integer",
            Kind::Float => "a number",
            Kind::Bool => "true or false",
            Kind::Text | Kind::Choice(_) => "a string",
            Kind::IntList => "a list of integers",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    IntList(Vec<u64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => write!(f, "{v}"),
            Value::IntList(v) => {
                let parts: Vec<String> = v.iter().map(u64::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Default,
    Explicit,
}

struct KeyDef {
    name: &'static str,
    kind: Kind,
    default: Value,
}

const WEIGHTS: &[&str] = &["unit", "exponential"];
const ADVERSARIES: &[&str] = &["serial", "round-robin", "random-interleave", "stampede", "block-reset"];
const COUNTER_MODES: &[&str] = &["throughput", "quality", "history"];
const COUNTER_KINDS: &[&str] = &["all", "exact", "multi", "multi-padded"];
const QUEUE_MODES: &[&str] = &["rank", "stress", "history"];
const CLOCKS: &[&str] = &["all", "exact", "multicounter"];

fn schema(experiment: Experiment, hardware: usize) -> Vec<KeyDef> {
    use Value::*;
    let k = |name, kind, default| KeyDef { name, kind, default };
    let up_to_hw = IntList((1..=hardware as u64).collect());
    let mut keys = vec![k("seed", Kind::Int, Int(1)), k("prefix", Kind::Text, Text(experiment.name().into()))];
    keys.extend(match experiment {
        Experiment::Seq => vec![
            k("bins", Kind::Int, Int(64)),
            k("steps", Kind::Int, Int(1_000_000)),
            k("beta", Kind::Float, Float(1.0)),
            k("weight", Kind::Choice(WEIGHTS), Text("unit".into())),
            k("gamma", Kind::Float, Float(0.2)),
            k("snapshot_every", Kind::Int, Int(1_000)),
            k("seeds", Kind::Int, Int(1)),
        ],
        Experiment::Sim => vec![
            k("bins", Kind::Int, Int(256)),
            k("threads", Kind::Int, Int(4)),
            k("ratio", Kind::Int, Int(16)),
            k("ops", Kind::Int, Int(1_000_000)),
            k("adversary", Kind::Choice(ADVERSARIES), Text("stampede".into())),
            k("block", Kind::Int, Int(0)),
            k("serial_len", Kind::Int, Int(0)),
            k("schedule_seed", Kind::Int, Int(1)),
            k("weight", Kind::Choice(WEIGHTS), Text("unit".into())),
            k("gamma", Kind::Float, Float(0.2)),
            k("snapshot_every", Kind::Int, Int(1)),
            k("reads_per_update", Kind::Int, Int(0)),
            k("r", Kind::Float, Float(8.0)),
            k("flag_multiple", Kind::Float, Float(4.0)),
            k("write_ops", Kind::Bool, Bool(false)),
        ],
        Experiment::Counter => vec![
            k("mode", Kind::Choice(COUNTER_MODES), Text("throughput".into())),
            k("kinds", Kind::Choice(COUNTER_KINDS), Text("all".into())),
            k("threads", Kind::IntList, up_to_hw),
            k("ratios", Kind::IntList, IntList(vec![1, 2, 4])),
            k("duration_ms", Kind::Int, Int(1_000)),
            k("runs", Kind::Int, Int(10)),
            k("pin", Kind::Bool, Bool(true)),
            k("bins", Kind::Int, Int(64)),
            k("increments", Kind::Int, Int(1_000_000)),
            k("every", Kind::Int, Int(1_000)),
            k("history_threads", Kind::Int, Int(4)),
            k("history_ops", Kind::Int, Int(100_000)),
            k("read_fraction", Kind::Float, Float(0.5)),
            k("r", Kind::Float, Float(8.0)),
        ],
        Experiment::Queue => vec![
            k("mode", Kind::Choice(QUEUE_MODES), Text("rank".into())),
            k("bins", Kind::Int, Int(64)),
            k("prefill", Kind::Int, Int(1_000_000)),
            k("dequeues", Kind::Int, Int(500_000)),
            k("threads", Kind::IntList, IntList(vec![hardware as u64])),
            k("ratio", Kind::Int, Int(2)),
            k("duration_ms", Kind::Int, Int(1_000)),
            k("runs", Kind::Int, Int(10)),
            k("pin", Kind::Bool, Bool(true)),
            k("history_threads", Kind::Int, Int(4)),
            k("history_ops", Kind::Int, Int(100_000)),
            k("enqueue_fraction", Kind::Float, Float(0.5)),
            k("r", Kind::Float, Float(8.0)),
        ],
        Experiment::Stm => vec![
            k("threads", Kind::IntList, up_to_hw),
            k("objects", Kind::IntList, IntList(vec![10_000, 100_000, 1_000_000])),
            k("clocks", Kind::Choice(CLOCKS), Text("all".into())),
            k("clock_ratio", Kind::Int, Int(4)),
            k("delta", Kind::Int, Int(0)),
            k("duration_ms", Kind::Int, Int(1_000)),
            k("runs", Kind::Int, Int(10)),
            k("backoff", Kind::Int, Int(0)),
            k("pin", Kind::Bool, Bool(true)),
        ],
    });
    keys
}

/// Fully resolved configuration with the origin of every value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    entries: BTreeMap<&'static str, (Value, Provenance)>,
}

impl ExperimentConfig {
    fn get(&self, key: &str) -> &Value {
        &self.entries.get(key).unwrap_or_else(|| panic!("`{key}` is not a `{}` key", self.experiment)).0
    }

    pub fn int(&self, key: &str) -> u64 {
        match self.get(key) {
            Value::Int(v) => *v,
            other => panic!("`{key}` holds {other:?}, not an integer"),
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Float(v) => *v,
            other => panic!("`{key}` holds {other:?}, not a number"),
        }
    }

    pub fn bool(&self, key: &str) -> bool {
        match self.get(key) {
            Value::Bool(v) => *v,
            other => panic!("`{key}` holds {other:?}, not a bool"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.get(key) {
            Value::Text(v) => v,
            other => panic!("`{key}` holds {other:?}, not a string"),
        }
    }

    pub fn list(&self, key: &str) -> &[u64] {
        match self.get(key) {
            Value::IntList(v) => v,
            other => panic!("`{key}` holds {other:?}, not a list"),
        }
    }

    pub fn provenance(&self, key: &str) -> Option<Provenance> {
        self.entries.get(key).map(|e| e.1)
    }

    /// `# key = value (default|explicit)` lines, experiment first.
    pub fn header_lines(&self) -> Vec<String> {
        let mut out = vec![format!("# experiment = {} (explicit)", self.experiment)];
        for (k, (v, p)) in &self.entries {
            let origin = match p {
                Provenance::Default => "default",
                Provenance::Explicit => "explicit",
            };
            out.push(format!("# {k} = {v} ({origin})"));
        }
        out
    }
}

fn parse_int_list(key: &str, s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError::TypeMismatch { key: key.into(), expected: Kind::IntList.describe(), found: format!("{s:?}") };
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn parse_flag_value(key: &str, kind: Kind, raw: &str) -> Result<Value, ConfigError> {
    let mismatch = || ConfigError::TypeMismatch { key: key.into(), expected: kind.describe(), found: format!("{raw:?}") };
    Ok(match kind {
        Kind::Int => Value::Int(raw.parse().map_err(|_| mismatch())?),
        Kind::Float => Value::Float(raw.parse().map_err(|_| mismatch())?),
        Kind::Bool => Value::Bool(raw.parse().map_err(|_| mismatch())?),
        Kind::Text => Value::Text(raw.into()),
        Kind::Choice(allowed) => choice(key, allowed, raw)?,
        Kind::IntList => Value::IntList(parse_int_list(key, raw)?),
    })
}

fn choice(key: &str, allowed: &'static [&'static str], raw: &str) -> Result<Value, ConfigError> {
    if allowed.contains(&raw) {
        Ok(Value::Text(raw.into()))
    } else {
        Err(ConfigError::NotAllowed { key: key.into(), allowed, found: raw.into() })
    }
}

fn toml_type(v: &toml::Value) -> String {
    format!("{} `{v}`", v.type_str())
}

fn from_toml(key: &str, kind: Kind, v: &toml::Value) -> Result<Value, ConfigError> {
    let mismatch = || ConfigError::TypeMismatch { key: key.into(), expected: kind.describe(), found: toml_type(v) };
    let nonneg = |i: i64| u64::try_from(i).map_err(|_| mismatch());
    Ok(match (kind, v) {
        (Kind::Int, toml::Value::Integer(i)) => Value::Int(nonneg(*i)?),
        (Kind::Float, toml::Value::Float(x)) => Value::Float(*x),
        (Kind::Float, toml::Value::Integer(i)) => Value::Float(*i as f64),
        (Kind::Bool, toml::Value::Boolean(b)) => Value::Bool(*b),
        (Kind::Text, toml::Value::String(s)) => Value::Text(s.clone()),
        (Kind::Choice(allowed), toml::Value::String(s)) => choice(key, allowed, s)?,
        (Kind::IntList, toml::Value::String(s)) => Value::IntList(parse_int_list(key, s)?),
        (Kind::IntList, toml::Value::Integer(i)) => Value::IntList(vec![nonneg(*i)?]),
        (Kind::IntList, toml::Value::Array(items)) => Value::IntList(
            items
                .iter()
                .map(|x| x.as_integer().ok_or_else(mismatch).and_then(nonneg))
                .collect::<Result<_, _>>()?,
        ),
        _ => return Err(mismatch()),
    })
}

/// Splits `--key value` and `--key=value` pairs. Dashes in keys are read
/// as underscores.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            return Err(ConfigError::BadFlag { flag: arg.clone(), msg: "expected `--key value`".into() });
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| ConfigError::BadFlag { flag: arg.clone(), msg: "missing value".into() })?;
                (body.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Resolves a configuration. The experiment comes from the command or, if
/// absent, from the file's `experiment` key; flags override the file.
pub fn parse_config(
    command: Option<Experiment>,
    file: Option<&str>,
    flags: &[(String, String)],
    hardware: usize,
) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = match file {
        Some(text) => toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?,
        None => toml::Table::new(),
    };
    let from_file = match table.get("experiment") {
        None => None,
        Some(toml::Value::String(s)) => Some(s.parse::<Experiment>().map_err(|_| ConfigError::NotAllowed {
            key: "experiment".into(),
            allowed: &["seq", "sim", "counter", "queue", "stm"],
            found: s.clone(),
        })?),
        Some(v) => {
            return Err(ConfigError::TypeMismatch {
                key: "experiment".into(),
                expected: "a string",
                found: toml_type(v),
            })
        }
    };
    let experiment = match (command, from_file) {
        (Some(c), Some(f)) if c != f => {
            return Err(ConfigError::ConflictingExperiment { file: f.name().into(), command: c })
        }
        (Some(c), _) => c,
        (None, Some(f)) => f,
        (None, None) => return Err(ConfigError::MissingRequired { key: "experiment" }),
    };
    let defs = schema(experiment, hardware.max(1));
    let mut entries: BTreeMap<&'static str, (Value, Provenance)> =
        defs.iter().map(|s| (s.name, (s.default.clone(), Provenance::Default))).collect();
    let find = |key: &str| {
        defs
            .iter()
            .find(|s| s.name == key)
            .ok_or_else(|| ConfigError::UnknownKey { key: key.into(), experiment })
    };
    for (key, v) in table.iter().filter(|(k, _)| k.as_str() != "experiment") {
        let def = find(key)?;
        entries.insert(def.name, (from_toml(key, def.kind, v)?, Provenance::Explicit));
    }
    for (key, raw) in flags {
        let def = find(key)?;
        entries.insert(def.name, (parse_flag_value(key, def.kind, raw)?, Provenance::Explicit));
    }
    Ok(ExperimentConfig { experiment, entries })
}
