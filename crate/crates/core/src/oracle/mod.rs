//! Ground truth by exhaustive concrete execution.
//!
//! Every nondeterministic decision (branch outcome, prediction, rollback
//! point, branch inside a wrong-path window, unknown index) is a numbered
//! choice; runs are enumerated by walking the choice tree like an odometer.

mod gen;
mod sim;

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gen::{gen_program, FuzzSpec};
pub use sim::{
    simulate, BranchEvent, ConcreteCache, ConcreteRun, Flavor, OracleParams, SimError, TracePoint,
};

use crate::analyses::{classify, SiteVerdict, Verdict};
use crate::config::{RegionMode, Strategy};
use crate::domain::{AbstractCacheState, CacheConfig};
use crate::fixpoint::{analyze, EngineConfig, FixpointError, FixpointResult};
use crate::ir::{Instruction, Program, Site, VarId};
use crate::speculation::SpecConfig;

/// Default cap on enumerated runs per program.
pub const RUN_BUDGET: u64 = 1_000_000;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EnumStats {
    pub runs: u64,
    pub truncated_runs: u64,
    /// The run budget stopped enumeration early.
    pub budget_exhausted: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration budget of {0} runs exhausted; coverage is partial")]
    Budget(u64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Calls `f` on every run, in lexicographic order of choice vectors.
pub fn enumerate_runs<F>(program: &Program, params: OracleParams, budget: u64, mut f: F) -> EnumStats
where
    F: FnMut(&ConcreteRun) -> ControlFlow<()>,
{
    let mut stats = EnumStats::default();
    let mut prefix: Vec<u32> = Vec::new();
    loop {
        if stats.runs >= budget {
            stats.budget_exhausted = true;
            return stats;
        }
        let (run, ch) = sim::explore(program, params, prefix);
        stats.runs += 1;
        if run.truncated {
            stats.truncated_runs += 1;
        }
        if f(&run).is_break() {
            return stats;
        }
        // Advance the odometer.
        let mut i = ch.taken.len();
        loop {
            if i == 0 {
                return stats;
            }
            i -= 1;
            if ch.taken[i] + 1 < ch.arities[i] {
                let mut next = ch.taken[..i].to_vec();
                next.push(ch.taken[i] + 1);
                prefix = next;
                break;
            }
        }
    }
}

/// Collects all runs; small programs only.
pub fn all_runs(program: &Program, params: OracleParams) -> Result<Vec<ConcreteRun>, OracleError> {
    let mut out = Vec::new();
    let stats = enumerate_runs(program, params, RUN_BUDGET, |r| {
        out.push(r.clone());
        ControlFlow::Continue(())
    });
    if stats.budget_exhausted {
        return Err(OracleError::Budget(RUN_BUDGET));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Which abstract configuration was violated.
    pub label: String,
    pub choices: Vec<u32>,
    pub params: OracleParams,
    /// `block:index`
    pub site: String,
    pub violation: String,
}

/// One abstract result to hold against concrete runs.
pub struct Subject<'a> {
    pub label: String,
    pub result: &'a FixpointResult,
    verdicts: Vec<Option<SiteVerdict>>,
    sites: Vec<Site>,
}

impl<'a> Subject<'a> {
    pub fn new(label: impl Into<String>, result: &'a FixpointResult, program: &Program) -> Self {
        let sites = program.sites();
        let mut verdicts: Vec<Option<SiteVerdict>> = vec![None; sites.len()];
        let idx: std::collections::HashMap<Site, usize> =
            sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        for v in classify(result, program) {
            let i = idx[&v.site];
            verdicts[i] = Some(v);
        }
        Subject {
            label: label.into(),
            result,
            verdicts,
            sites,
        }
    }

    fn verdict(&self, site: Site) -> Option<&SiteVerdict> {
        let i = self.sites.binary_search(&site).ok()?;
        self.verdicts[i].as_ref()
    }
}

fn in_gamma(s: &AbstractCacheState, cache: &[VarId], n: u32) -> bool {
    if !s.reached {
        return false;
    }
    let absent = n + 1;
    for (v, &must) in s.must.iter().enumerate() {
        let age = cache
            .iter()
            .position(|x| x.0 as usize == v)
            .map_or(absent, |i| i as u32 + 1);
        if age > must {
            return false;
        }
        if let Some(may) = &s.may {
            if age < may[v] {
                return false;
            }
        }
    }
    true
}

/// First violation of `subject` on `run`, if any.
pub fn check_run(subject: &Subject<'_>, program: &Program, run: &ConcreteRun, params: &OracleParams) -> Option<Counterexample> {
    let n = subject.result.engine.cache.num_lines;
    for tp in run.trace.iter().filter(|t| t.flavor == Flavor::Normal) {
        let site = tp.site;
        let mut states: Vec<&AbstractCacheState> = Vec::new();
        if let Some(s) = subject.result.per_site_in.get(&site) {
            states.push(s);
        }
        if let Some(v) = subject.result.per_site_slots.get(&site) {
            states.extend(v.iter().map(|(_, s)| s));
        }
        let violation = if !states.iter().any(|s| in_gamma(s, &tp.before, n)) {
            let names: Vec<&str> = tp.before.iter().map(|v| program.var_name(*v)).collect();
            Some(format!(
                "concrete cache [{}] is outside every abstract state at the access",
                names.join(",")
            ))
        } else if !tp.hit && subject.verdict(site).is_some_and(|v| v.overall() == Verdict::MustHit) {
            Some(format!(
                "access to {} classified must-hit but missed",
                program.var_name(tp.var)
            ))
        } else {
            None
        };
        if let Some(violation) = violation {
            return Some(Counterexample {
                label: subject.label.clone(),
                choices: run.choices.clone(),
                params: *params,
                site: program.site_label(site),
                violation,
            });
        }
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SoundnessReport {
    pub stats: EnumStats,
    pub counterexample: Option<Counterexample>,
}

/// Enumerates once and checks every subject on every run; stops at the
/// first (lexicographically least) violation.
pub fn check_soundness(
    program: &Program,
    subjects: &[Subject<'_>],
    params: OracleParams,
    budget: u64,
) -> SoundnessReport {
    let mut cex = None;
    let stats = enumerate_runs(program, params, budget, |run| {
        for s in subjects {
            if let Some(c) = check_run(s, program, run, &params) {
                cex = Some(c);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    });
    SoundnessReport {
        stats,
        counterexample: cex,
    }
}

/// Which abstract configurations [`check_program`] holds against the oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckPlan {
    pub lines: u32,
    pub depth_hit: u32,
    pub depth_miss: u32,
    pub strategies: Vec<Strategy>,
    pub shadows: Vec<bool>,
    pub region_modes: Vec<RegionMode>,
    pub colors: Vec<bool>,
    /// Also check the non-speculative analysis on non-speculative runs.
    pub baseline: bool,
    pub strict: bool,
    pub block_visit_cap: u32,
    pub budget: u64,
}

impl CheckPlan {
    /// Every strategy, shadow setting, region mode and color setting.
    pub fn exhaustive(lines: u32, depth_hit: u32, depth_miss: u32) -> Self {
        CheckPlan {
            lines,
            depth_hit,
            depth_miss,
            strategies: vec![Strategy::JustInTime, Strategy::RollbackMerge],
            shadows: vec![false, true],
            region_modes: vec![RegionMode::Havoc, RegionMode::Rotating],
            colors: vec![true, false],
            baseline: true,
            strict: false,
            block_visit_cap: 3,
            budget: RUN_BUDGET,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckSummary {
    pub configurations: usize,
    pub runs: u64,
    pub truncated_runs: u64,
    pub budget_exhausted: bool,
    pub counterexample: Option<Counterexample>,
}

fn label(engine: &EngineConfig) -> String {
    match engine.spec {
        None => format!(
            "baseline shadow={} region_mode={}",
            engine.cache.shadow, engine.region_mode
        ),
        Some(s) => format!(
            "{} shadow={} region_mode={} colors={}",
            s.strategy, engine.cache.shadow, engine.region_mode, s.colors_enabled
        ),
    }
}

/// Runs every configuration in `plan` and checks it exhaustively. Each
/// family of concrete semantics is enumerated once.
pub fn check_program(program: &Program, plan: &CheckPlan) -> Result<CheckSummary, FixpointError> {
    let mut summary = CheckSummary::default();
    let has_unknown = program
        .blocks
        .iter()
        .any(|b| b.body.iter().any(|i| matches!(i, Instruction::RefRegionUnknown(_))));
    let base_params = OracleParams {
        lines: plan.lines,
        depth_hit: plan.depth_hit,
        depth_miss: plan.depth_miss,
        strict: plan.strict,
        sequential_regions: false,
        block_visit_cap: plan.block_visit_cap,
    };
    // (speculative?, sequential regions?) groups.
    let mut groups: Vec<(bool, bool, Vec<EngineConfig>)> = Vec::new();
    for speculative in [false, true] {
        if !speculative && !plan.baseline {
            continue;
        }
        for &mode in &plan.region_modes {
            let sequential = mode == RegionMode::Rotating && has_unknown;
            let mut engines = Vec::new();
            for &shadow in &plan.shadows {
                let cache = CacheConfig::new(plan.lines, shadow);
                if !speculative {
                    engines.push(EngineConfig::baseline(cache).with_region_mode(mode));
                    continue;
                }
                for &strategy in &plan.strategies {
                    for &colors in &plan.colors {
                        if strategy == Strategy::RollbackMerge && !colors {
                            continue; // no slots either way
                        }
                        let mut spec = SpecConfig::new(plan.depth_hit, plan.depth_miss, strategy);
                        spec.colors_enabled = colors;
                        engines.push(EngineConfig::speculative(cache, spec).with_region_mode(mode));
                    }
                }
            }
            match groups.iter_mut().find(|g| g.0 == speculative && g.1 == sequential) {
                Some(g) => g.2.extend(engines),
                None => groups.push((speculative, sequential, engines)),
            }
        }
    }
    for (speculative, sequential, engines) in groups {
        let results: Vec<FixpointResult> = engines
            .iter()
            .map(|e| analyze(program, e))
            .collect::<Result<_, _>>()?;
        let subjects: Vec<Subject<'_>> = results
            .iter()
            .map(|r| Subject::new(label(&r.engine), r, program))
            .collect();
        summary.configurations += subjects.len();
        let mut params = base_params;
        params.sequential_regions = sequential;
        if !speculative {
            params.depth_hit = 0;
            params.depth_miss = 0;
        }
        let rep = check_soundness(program, &subjects, params, plan.budget);
        summary.runs += rep.stats.runs;
        summary.truncated_runs += rep.stats.truncated_runs;
        summary.budget_exhausted |= rep.stats.budget_exhausted;
        if rep.counterexample.is_some() {
            summary.counterexample = rep.counterexample;
            return Ok(summary);
        }
    }
    Ok(summary)
}
