//! Key-value engine configuration, loadable from a text file and overridable
//! by CLI flags. Unset keys fall back to defaults derived from the lane pool.

use crate::exec::{ExecutorConfig, Strategy};
use crate::planner::{GroupingConfig, StrategyThresholds};
use crate::storage::LockAddressing;
use std::time::Duration;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StrategyChoice {
    Auto,
    Fixed(Strategy),
    /// Single-threaded reference execution (baseline / oracle runs).
    Sequential,
}

impl StrategyChoice {
    pub fn parse(s: &str) -> Option<StrategyChoice> {
        match s {
            "auto" => Some(StrategyChoice::Auto),
            "seq" | "sequential" => Some(StrategyChoice::Sequential),
            other => Strategy::parse(other).map(StrategyChoice::Fixed),
        }
    }

    pub fn name(&self) -> String {
        match self {
            StrategyChoice::Auto => "auto".into(),
            StrategyChoice::Sequential => "seq".into(),
            StrategyChoice::Fixed(s) => s.name().into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub lane_count: usize,
    pub warp_size: usize,
    pub partition_size: u64,
    pub bits_per_pass: u32,
    /// None = enough passes for fully homogeneous groups.
    pub passes: Option<u32>,
    /// None = lane_count.
    pub w0_bar: Option<usize>,
    pub c_bar: usize,
    /// None = max_bulk / lane_count.
    pub d_bar: Option<u32>,
    pub strategy: StrategyChoice,
    pub max_bulk: usize,
    /// Logical batching interval in microseconds.
    pub interval_us: u64,
    /// Logical arrival rate, transactions per second.
    pub arrival_rate: f64,
    pub parallel: bool,
    /// Some(n) switches the lock table to n hashed slots.
    pub lock_slots: Option<usize>,
    pub watchdog_secs: u64,
    /// Gate every run on equality with the sequential oracle.
    pub verify: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            lane_count: 8,
            warp_size: 32,
            partition_size: 128,
            bits_per_pass: 3,
            passes: None,
            w0_bar: None,
            c_bar: 0,
            d_bar: None,
            strategy: StrategyChoice::Auto,
            max_bulk: 4096,
            interval_us: 10_000,
            arrival_rate: 1_000_000.0,
            parallel: crate::par::parallel_available(),
            lock_slots: None,
            watchdog_secs: 60,
            verify: true,
        }
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl EngineConfig {
    pub fn executor(&self) -> ExecutorConfig {
        ExecutorConfig {
            lanes: self.lane_count,
            warp_size: self.warp_size,
            partition_size: self.partition_size,
            lock_addressing: match self.lock_slots {
                Some(n) => LockAddressing::Hashed(n),
                None => LockAddressing::Exact,
            },
            parallel: self.parallel && crate::par::parallel_available(),
            trace: false,
            watchdog: Duration::from_secs(self.watchdog_secs),
        }
    }

    pub fn thresholds(&self) -> StrategyThresholds {
        let d = StrategyThresholds::defaults(self.lane_count, self.max_bulk);
        StrategyThresholds {
            w0_bar: self.w0_bar.unwrap_or(d.w0_bar),
            c_bar: self.c_bar,
            d_bar: self.d_bar.unwrap_or(d.d_bar),
        }
    }

    pub fn grouping(&self, type_count: u32) -> GroupingConfig {
        match self.passes {
            Some(p) => GroupingConfig::new(self.bits_per_pass, p, type_count),
            None => GroupingConfig::full(type_count, self.bits_per_pass),
        }
    }

    /// Parses `key = value` lines over the defaults.
    pub fn parse(text: &str) -> Result<EngineConfig, ConfigError> {
        let mut cfg = EngineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (key, value) = l.split_once('=').ok_or(ConfigError::Parse {
                line,
                msg: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|msg| ConfigError::Parse { line, msg })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("bad value {v:?}: {e}"))
        }
        match key {
            "lane_count" => self.lane_count = num(value)?,
            "warp_size" => self.warp_size = num(value)?,
            "partition_size" => self.partition_size = num(value)?,
            "bits_per_pass" => self.bits_per_pass = num(value)?,
            "passes" => {
                self.passes = if value == "full" {
                    None
                } else {
                    Some(num(value)?)
                }
            }
            "w0_bar" => self.w0_bar = Some(num(value)?),
            "c_bar" => self.c_bar = num(value)?,
            "d_bar" => self.d_bar = Some(num(value)?),
            "strategy" => {
                self.strategy = StrategyChoice::parse(value)
                    .ok_or_else(|| format!("unknown strategy {value:?}"))?
            }
            "max_bulk" => self.max_bulk = num(value)?,
            "interval_us" => self.interval_us = num(value)?,
            "arrival_rate" => self.arrival_rate = num(value)?,
            "parallel" => self.parallel = num(value)?,
            "lock_slots" => {
                self.lock_slots = if value == "exact" {
                    None
                } else {
                    Some(num(value)?)
                }
            }
            "watchdog_secs" => self.watchdog_secs = num(value)?,
            "verify" => self.verify = num(value)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overrides_defaults() {
        let cfg = EngineConfig::parse(
            "# comment\nlane_count = 64\nstrategy = kset\npasses = 2\nlock_slots = 1024\n",
        )
        .unwrap();
        assert_eq!(cfg.lane_count, 64);
        assert_eq!(cfg.strategy, StrategyChoice::Fixed(Strategy::Kset));
        assert_eq!(cfg.passes, Some(2));
        assert_eq!(cfg.lock_slots, Some(1024));
        assert_eq!(cfg.warp_size, 32);
    }

    #[test]
    fn parse_errors() {
        assert!(EngineConfig::parse("nonsense\n").is_err());
        assert!(EngineConfig::parse("strategy = warp\n").is_err());
        assert!(EngineConfig::parse("lane_count = many\n").is_err());
    }

    #[test]
    fn derived_defaults() {
        let cfg = EngineConfig::default();
        let thr = cfg.thresholds();
        assert_eq!(thr.w0_bar, cfg.lane_count);
        assert_eq!(thr.c_bar, 0);
        assert_eq!(thr.d_bar as usize, cfg.max_bulk / cfg.lane_count);
        let g = cfg.grouping(8);
        assert_eq!(g.passes, 1);
    }
}
