//! Flat `key = value` run configuration shared by config files, flags and
//! the config echo.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use relay_manet::NetworkParams;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SLOTS: u64 = 10_000_000;
pub const DEFAULT_WARMUP: u64 = 100_000;

/// Keys accepted in a config file, in echo order.
pub const KEYS: &[&str] = &[
    "n", "m", "B", "nu", "delta", "lambda", "rho", "seed", "slots", "warmup", "reps", "workers",
];

/// Every setting, each optional so that sources can be layered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub buffer: Option<usize>,
    pub nu: Option<usize>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub slots: Option<u64>,
    pub warmup: Option<u64>,
    pub reps: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("bad value {value:?} for {key}: {e}")))
}

pub fn parse_rho_list(value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|v| parse_value("rho", v.trim()))
        .collect()
}

impl Settings {
    /// Parses config-file text. `#` starts a comment; unknown and repeated
    /// keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| ConfigError(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(at(format!("unknown key {key:?}")));
            }
            if seen.contains(&key) {
                return Err(at(format!("duplicate key {key:?}")));
            }
            seen.push(key);
            s.set(key, value).map_err(|e| at(e.0))?;
        }
        Ok(s)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "n" => self.n = Some(parse_value(key, value)?),
            "m" => self.m = Some(parse_value(key, value)?),
            "B" => self.buffer = Some(parse_value(key, value)?),
            "nu" => self.nu = Some(parse_value(key, value)?),
            "delta" => self.delta = Some(parse_value(key, value)?),
            "lambda" => self.lambda = Some(parse_value(key, value)?),
            "rho" => self.rho = Some(parse_rho_list(value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "slots" => self.slots = Some(parse_value(key, value)?),
            "warmup" => self.warmup = Some(parse_value(key, value)?),
            "reps" => self.reps = Some(parse_value(key, value)?),
            "workers" => self.workers = Some(parse_value(key, value)?),
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    /// Values in `self` win; gaps are filled from `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            n: self.n.or(base.n),
            m: self.m.or(base.m),
            buffer: self.buffer.or(base.buffer),
            nu: self.nu.or(base.nu),
            delta: self.delta.or(base.delta),
            lambda: self.lambda.or(base.lambda),
            rho: self.rho.or(base.rho),
            seed: self.seed.or(base.seed),
            slots: self.slots.or(base.slots),
            warmup: self.warmup.or(base.warmup),
            reps: self.reps.or(base.reps),
            workers: self.workers.or(base.workers),
            out: self.out.or(base.out),
            trace: self.trace.or(base.trace),
        }
    }

    /// Network parameters with `lambda = 0`; `nu` and `delta` default to 1.
    pub fn network(&self) -> Result<NetworkParams, ConfigError> {
        let need = |v: Option<usize>, flag: &str| {
            v.ok_or_else(|| ConfigError(format!("--{flag} is required")))
        };
        Ok(NetworkParams::new(
            need(self.n, "n")?,
            need(self.m, "m")?,
            self.nu.unwrap_or(1),
            self.delta.unwrap_or(1.0),
            need(self.buffer, "B")?,
            0.0,
        ))
    }

    /// Renders the set keys as config-file text that parses back to the
    /// same values.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                writeln!(out, "{key} = {v}").expect("writing to a String");
            }
        };
        line("n", self.n.map(|v| v.to_string()));
        line("m", self.m.map(|v| v.to_string()));
        line("B", self.buffer.map(|v| v.to_string()));
        line("nu", self.nu.map(|v| v.to_string()));
        line("delta", self.delta.map(|v| v.to_string()));
        line("lambda", self.lambda.map(|v| v.to_string()));
        line(
            "rho",
            self.rho
                .as_ref()
                .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",")),
        );
        line("seed", self.seed.map(|v| v.to_string()));
        line("slots", self.slots.map(|v| v.to_string()));
        line("warmup", self.warmup.map(|v| v.to_string()));
        line("reps", self.reps.map(|v| v.to_string()));
        line("workers", self.workers.map(|v| v.to_string()));
        out
    }
}
