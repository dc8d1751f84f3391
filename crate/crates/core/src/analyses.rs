//! Verdicts derived from a fixpoint: hit classification per access, miss
//! counts and secret-indexed leaks.

use std::fmt::Write;

use serde::Serialize;

use crate::config::{RegionMode, Strategy};
use crate::domain::{render_state, AbstractCacheState};
use crate::fixpoint::FixpointResult;
use crate::ir::{Instruction, Program, Site, VarId};
use crate::speculation::Color;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    MustHit,
    MayMiss,
    /// No flow of this kind reaches the site.
    Unreachable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SlotVerdict {
    pub color: u32,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SiteVerdict {
    #[serde(skip)]
    pub site: Site,
    pub block: String,
    pub index: u32,
    pub copy: u32,
    pub access: String,
    pub normal: Verdict,
    pub speculative: Vec<SlotVerdict>,
    /// Lines a rotating `ref r[*]` was pinned to.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lines: Vec<String>,
}

impl SiteVerdict {
    /// Must-hit on every flow that reaches the site.
    pub fn overall(&self) -> Verdict {
        let mut any = false;
        for v in std::iter::once(self.normal).chain(self.speculative.iter().map(|s| s.verdict)) {
            match v {
                Verdict::MayMiss => return Verdict::MayMiss,
                Verdict::MustHit => any = true,
                Verdict::Unreachable => {}
            }
        }
        if any {
            Verdict::MustHit
        } else {
            Verdict::Unreachable
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakKind {
    None,
    /// Some lines must hit, others may miss: timing depends on the index.
    Mixed,
    /// No line is known to hit; timing may still be uniform.
    AllPossiblyMissing,
    Unreachable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LeakEntry {
    pub block: String,
    pub index: u32,
    pub copy: u32,
    pub region: String,
    pub leaking: bool,
    pub kind: LeakKind,
    pub must_hit_lines: Vec<String>,
    pub possibly_evicted_lines: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReportConfig {
    pub lines: u32,
    pub shadow: bool,
    pub speculative: bool,
    pub depth_hit: Option<u32>,
    pub depth_miss: Option<u32>,
    pub strategy: Option<Strategy>,
    pub colors: Option<bool>,
    pub region_mode: RegionMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnalysisReport {
    pub config: ReportConfig,
    pub verdicts: Vec<SiteVerdict>,
    pub miss_count: usize,
    pub spec_miss_count: usize,
    pub leaks: Vec<LeakEntry>,
    pub iterations: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn has_leak(&self) -> bool {
        self.leaks.iter().any(|l| l.leaking)
    }

    pub fn verdict_at(&self, block: &str, index: u32) -> Option<&SiteVerdict> {
        self.verdicts.iter().find(|v| v.block == block && v.index == index)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn state_verdict(result: &FixpointResult, program: &Program, site: Site, s: &AbstractCacheState) -> Verdict {
    if !s.reached {
        return Verdict::Unreachable;
    }
    let cfg = &result.engine.cache;
    let hit = match program.instruction(site) {
        Instruction::Ref(v) => s.must_hit(*v, cfg),
        Instruction::RefRegionUnknown(_) if result.engine.region_mode == RegionMode::Rotating => {
            match result.site_lines.get(&site) {
                Some(lines) if !lines.is_empty() => lines.iter().all(|l| s.must_hit(*l, cfg)),
                _ => false,
            }
        }
        Instruction::RefRegionUnknown(_) | Instruction::SecretRef(_) => false,
        Instruction::Nop => true,
    };
    if hit {
        Verdict::MustHit
    } else {
        Verdict::MayMiss
    }
}

/// Verdicts for every memory access, in site order.
pub fn classify(result: &FixpointResult, program: &Program) -> Vec<SiteVerdict> {
    let mut out = Vec::new();
    for site in program.sites() {
        let inst = program.instruction(site);
        if !inst.is_memory() {
            continue;
        }
        let normal = result
            .per_site_in
            .get(&site)
            .map_or(Verdict::Unreachable, |s| state_verdict(result, program, site, s));
        let speculative = result
            .per_site_slots
            .get(&site)
            .map(|v| {
                v.iter()
                    .map(|(c, s)| SlotVerdict {
                        color: c.0,
                        verdict: state_verdict(result, program, site, s),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let lines = result
            .site_lines
            .get(&site)
            .map(|ls| ls.iter().map(|l| program.var_name(*l).to_string()).collect())
            .unwrap_or_default();
        out.push(SiteVerdict {
            site,
            block: program.block(site.block).name.clone(),
            index: site.index,
            copy: site.copy,
            access: program.render_instruction(inst),
            normal,
            speculative,
            lines,
        });
    }
    out
}

/// `(miss_count, spec_miss_count)`.
pub fn count_misses(verdicts: &[SiteVerdict]) -> (usize, usize) {
    let mut miss = 0;
    let mut spec = 0;
    for v in verdicts {
        let slot_miss = v.speculative.iter().any(|s| s.verdict == Verdict::MayMiss);
        match v.normal {
            Verdict::MayMiss => miss += 1,
            Verdict::MustHit | Verdict::Unreachable if slot_miss => spec += 1,
            _ => {}
        }
    }
    (miss, spec)
}

/// One entry per `secret_ref`: leaking unless every line of the region is a
/// must-hit on every flow reaching the access.
pub fn detect_leaks(result: &FixpointResult, program: &Program) -> Vec<LeakEntry> {
    let cfg = &result.engine.cache;
    let mut out = Vec::new();
    for site in program.sites() {
        let Instruction::SecretRef(r) = program.instruction(site) else {
            continue;
        };
        let region = program.region(*r);
        let mut states: Vec<&AbstractCacheState> = Vec::new();
        if let Some(s) = result.per_site_in.get(&site) {
            if s.reached {
                states.push(s);
            }
        }
        if let Some(v) = result.per_site_slots.get(&site) {
            states.extend(v.iter().map(|(_, s)| s).filter(|s| s.reached));
        }
        let (hit, evicted): (Vec<VarId>, Vec<VarId>) = region
            .lines()
            .partition(|l| !states.is_empty() && states.iter().all(|s| s.must_hit(*l, cfg)));
        let kind = if states.is_empty() {
            LeakKind::Unreachable
        } else if evicted.is_empty() {
            LeakKind::None
        } else if hit.is_empty() {
            LeakKind::AllPossiblyMissing
        } else {
            LeakKind::Mixed
        };
        let names = |vs: &[VarId]| vs.iter().map(|v| program.var_name(*v).to_string()).collect();
        out.push(LeakEntry {
            block: program.block(site.block).name.clone(),
            index: site.index,
            copy: site.copy,
            region: region.name.clone(),
            leaking: matches!(kind, LeakKind::Mixed | LeakKind::AllPossiblyMissing),
            kind,
            must_hit_lines: if states.is_empty() { Vec::new() } else { names(&hit) },
            possibly_evicted_lines: names(&evicted),
        });
    }
    out
}

pub fn build_report(result: &FixpointResult, program: &Program) -> AnalysisReport {
    let verdicts = classify(result, program);
    let (miss_count, spec_miss_count) = count_misses(&verdicts);
    let e = &result.engine;
    let mut warnings = Vec::new();
    if e.region_mode == RegionMode::Rotating {
        warnings.push("rotating region mode is not proven sound; verdicts on `ref r[*]` are not guaranteed".into());
    }
    if !result.stable {
        warnings.push("fixpoint check failed: a further sweep would change states".into());
    }
    AnalysisReport {
        config: ReportConfig {
            lines: e.cache.num_lines,
            shadow: e.cache.shadow,
            speculative: e.spec.is_some(),
            depth_hit: e.spec.map(|s| s.depth_hit),
            depth_miss: e.spec.map(|s| s.depth_miss),
            strategy: e.spec.map(|s| s.strategy),
            colors: e.spec.map(|s| s.colors_enabled),
            region_mode: e.region_mode,
        },
        verdicts,
        miss_count,
        spec_miss_count,
        leaks: detect_leaks(result, program),
        iterations: result.iterations,
        warnings,
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::MustHit => "hit",
        Verdict::MayMiss => "miss?",
        Verdict::Unreachable => "-",
    }
}

/// Human-readable table.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let c = &report.config;
    let _ = write!(out, "lines={} shadow={} ", c.lines, if c.shadow { "on" } else { "off" });
    if c.speculative {
        let _ = write!(
            out,
            "speculative strategy={} depth_hit={} depth_miss={}",
            c.strategy.map(|s| s.to_string()).unwrap_or_default(),
            c.depth_hit.unwrap_or(0),
            c.depth_miss.unwrap_or(0)
        );
    } else {
        out.push_str("baseline");
    }
    let _ = writeln!(out, " region_mode={}", c.region_mode);
    let _ = writeln!(out, "{:<16} {:<24} {:<7} speculative", "site", "access", "normal");
    for v in &report.verdicts {
        let spec: Vec<String> = v
            .speculative
            .iter()
            .map(|s| format!("c{}:{}", s.color, verdict_str(s.verdict)))
            .collect();
        let mut access = v.access.clone();
        if !v.lines.is_empty() {
            let _ = write!(access, " ({})", v.lines.join(","));
        }
        let _ = writeln!(
            out,
            "{:<16} {:<24} {:<7} {}",
            format!("{}:{}", v.block, v.index),
            access,
            verdict_str(v.normal),
            spec.join(" ")
        );
    }
    let _ = writeln!(
        out,
        "#Miss {}  #SpMiss {}  #Iteration {}",
        report.miss_count, report.spec_miss_count, report.iterations
    );
    if !report.leaks.is_empty() {
        let _ = writeln!(out, "{:<16} {:<12} {:<22} possibly evicted", "site", "region", "Leak Detected");
        for l in &report.leaks {
            let kind = match l.kind {
                LeakKind::None => "no",
                LeakKind::Mixed => "yes (mixed)",
                LeakKind::AllPossiblyMissing => "yes (all may miss)",
                LeakKind::Unreachable => "unreachable",
            };
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:<22} {}",
                format!("{}:{}", l.block, l.index),
                l.region,
                kind,
                l.possibly_evicted_lines.join(",")
            );
        }
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Per-block states in bucket notation: entry, speculative slots, exit.
pub fn render_states(result: &FixpointResult, program: &Program) -> String {
    let cfg = &result.engine.cache;
    let mut out = String::new();
    for b in program.block_ids() {
        let name = &program.block(b).name;
        let _ = writeln!(out, "{name} in:  {}", render_state(&result.states[b.idx()], program, cfg));
        for (c, s) in result.slots[b.idx()].iter().enumerate() {
            if s.reached {
                let Color(col) = result.slot_color(c);
                let _ = writeln!(out, "{name} c{col}:  {}", render_state(s, program, cfg));
            }
        }
        let _ = writeln!(out, "{name} out: {}", render_state(&result.out_states[b.idx()], program, cfg));
    }
    out
}
