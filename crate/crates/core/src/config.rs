//! Knobs shared by the IR loader, the engines and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

/// Where rollback states rejoin the normal flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    /// Join the rollback state into the normal state at the correct arm's entry.
    #[serde(rename = "rollback")]
    RollbackMerge,
    /// Carry the rollback state in its own slot through the correct arm and
    /// join it into the normal state at the branch's merge block.
    #[serde(rename = "jit")]
    JustInTime,
}

/// How a `ref region[*]` access is modeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// The touched line is unknown: every cached variable may age.
    Havoc,
    /// The access is pinned to the region's next line each time the site's
    /// incoming state changes (`r.0`, then `r.1`, ...). Not proven sound.
    Rotating,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jit" | "just_in_time" | "just-in-time" => Ok(Strategy::JustInTime),
            "rollback" | "rollback_merge" | "rollback-merge" => Ok(Strategy::RollbackMerge),
            other => Err(format!("unknown strategy `{other}` (expected jit|rollback)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::JustInTime => "jit",
            Strategy::RollbackMerge => "rollback",
        })
    }
}

impl FromStr for RegionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "havoc" => Ok(RegionMode::Havoc),
            "rotating" => Ok(RegionMode::Rotating),
            other => Err(format!("unknown region mode `{other}` (expected havoc|rotating)")),
        }
    }
}

impl fmt::Display for RegionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionMode::Havoc => "havoc",
            RegionMode::Rotating => "rotating",
        })
    }
}

pub(crate) fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected on|off, got `{other}`")),
    }
}

/// Settings carried by an IR file's `config` line. Every field is optional;
/// callers layer CLI flags and defaults on top.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FileConfig {
    pub lines: Option<u32>,
    pub depth_hit: Option<u32>,
    pub depth_miss: Option<u32>,
    pub strategy: Option<Strategy>,
    pub shadow: Option<bool>,
    pub region_mode: Option<RegionMode>,
    pub colors: Option<bool>,
}

impl FileConfig {
    pub fn is_empty(&self) -> bool {
        *self == FileConfig::default()
    }

    /// Applies one `key=value` pair.
    pub(crate) fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num(v: &str) -> Result<u32, String> {
            v.parse::<u32>().map_err(|_| format!("expected a non-negative integer, got `{v}`"))
        }
        match key {
            "lines" => {
                let n = num(value)?;
                if n == 0 {
                    return Err("lines must be at least 1".into());
                }
                self.lines = Some(n);
            }
            "depth_hit" => self.depth_hit = Some(num(value)?),
            "depth_miss" => self.depth_miss = Some(num(value)?),
            "strategy" => self.strategy = Some(value.parse()?),
            "shadow" => self.shadow = Some(parse_switch(value)?),
            "region_mode" => self.region_mode = Some(value.parse()?),
            "colors" => self.colors = Some(parse_switch(value)?),
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    pub(crate) fn render(&self) -> String {
        let mut parts = Vec::new();
        if let Some(n) = self.lines {
            parts.push(format!("lines={n}"));
        }
        if let Some(d) = self.depth_hit {
            parts.push(format!("depth_hit={d}"));
        }
        if let Some(d) = self.depth_miss {
            parts.push(format!("depth_miss={d}"));
        }
        if let Some(s) = self.strategy {
            parts.push(format!("strategy={s}"));
        }
        if let Some(s) = self.shadow {
            parts.push(format!("shadow={}", if s { "on" } else { "off" }));
        }
        if let Some(m) = self.region_mode {
            parts.push(format!("region_mode={m}"));
        }
        if let Some(c) = self.colors {
            parts.push(format!("colors={}", if c { "on" } else { "off" }));
        }
        parts.join(" ")
    }
}
