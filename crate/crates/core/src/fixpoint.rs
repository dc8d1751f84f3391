//! Worklist engines: plain abstract interpretation, and the speculative
//! variant that carries one extra state per color at every block.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::config::{RegionMode, Strategy};
use crate::domain::{join_into, transfer, AbstractCacheState, AccessEffect, CacheConfig};
use crate::ir::{BlockId, Instruction, Program, Site, VarId};
use crate::speculation::{build_spec_plan, rollback_join, select_depth, Color, SpecConfig, SpecPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub cache: CacheConfig,
    /// `None` runs the non-speculative analysis.
    pub spec: Option<SpecConfig>,
    pub region_mode: RegionMode,
    /// Guard against engine bugs; `None` derives the lattice-height bound.
    pub max_pops: Option<u64>,
}

impl EngineConfig {
    pub fn baseline(cache: CacheConfig) -> Self {
        EngineConfig {
            cache,
            spec: None,
            region_mode: RegionMode::Havoc,
            max_pops: None,
        }
    }

    pub fn speculative(cache: CacheConfig, spec: SpecConfig) -> Self {
        EngineConfig {
            cache,
            spec: Some(spec),
            region_mode: RegionMode::Havoc,
            max_pops: None,
        }
    }

    pub fn with_region_mode(mut self, m: RegionMode) -> Self {
        self.region_mode = m;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FixpointError {
    #[error("worklist exceeded {0} pops without stabilizing")]
    Budget(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixpointResult {
    pub engine: EngineConfig,
    pub plan: SpecPlan,
    /// Block-entry normal states.
    pub states: Vec<AbstractCacheState>,
    /// Block-entry speculative states, one per slot.
    pub slots: Vec<Vec<AbstractCacheState>>,
    /// Block-exit normal states.
    pub out_states: Vec<AbstractCacheState>,
    pub iterations: u64,
    /// Normal incoming state at every instruction occurrence.
    pub per_site_in: BTreeMap<Site, AbstractCacheState>,
    /// Reached speculative incoming states per occurrence.
    pub per_site_slots: BTreeMap<Site, Vec<(Color, AbstractCacheState)>>,
    /// Lines chosen for `ref r[*]` under rotating mode.
    pub site_lines: BTreeMap<Site, Vec<VarId>>,
    /// Window length used at each branch with a reached normal state.
    pub branch_depths: BTreeMap<BlockId, u32>,
    /// One more sweep over the final states changed nothing.
    pub stable: bool,
}

impl FixpointResult {
    pub fn num_slots(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }

    /// Color a slot index stands for; 0 marks the shared slot when colors
    /// are disabled.
    pub fn slot_color(&self, c: usize) -> Color {
        slot_color(&self.engine, c)
    }
}

fn slot_color(engine: &EngineConfig, c: usize) -> Color {
    match engine.spec {
        Some(s) if s.colors_enabled => Color(c as u32 + 1),
        _ => Color(0),
    }
}

/// Upper bound on worklist pops for a program under `engine`.
pub fn pops_bound(program: &Program, engine: &EngineConfig) -> u64 {
    let nodes = program.blocks.len() as u64;
    let height = 2 * program.num_vars() as u64 * (engine.cache.num_lines as u64 + 1) + 1;
    let colors = match engine.spec {
        Some(s) if s.strategy == Strategy::JustInTime => {
            if s.colors_enabled {
                program.branches().len() as u64
            } else {
                1
            }
        }
        _ => 0,
    };
    nodes.max(1) * height * (colors + 1)
}

pub fn run_baseline(program: &Program, engine: &EngineConfig) -> Result<FixpointResult, FixpointError> {
    let mut e = *engine;
    e.spec = None;
    Engine::new(program, e).run()
}

pub fn run_speculative(program: &Program, engine: &EngineConfig) -> Result<FixpointResult, FixpointError> {
    Engine::new(program, *engine).run()
}

/// Dispatches on `engine.spec`.
pub fn analyze(program: &Program, engine: &EngineConfig) -> Result<FixpointResult, FixpointError> {
    Engine::new(program, *engine).run()
}

#[derive(Default)]
struct Rotation {
    counters: Vec<u32>,
    last_in: HashMap<Site, AbstractCacheState>,
    line: HashMap<Site, u32>,
    used: BTreeMap<Site, BTreeSet<u32>>,
}

type Contribution = (BlockId, Option<usize>, AbstractCacheState);

struct Engine<'a> {
    p: &'a Program,
    cfg: EngineConfig,
    plan: SpecPlan,
    nslots: usize,
    s: Vec<AbstractCacheState>,
    ss: Vec<Vec<AbstractCacheState>>,
    rot: Rotation,
    rj_cache: HashMap<(BlockId, BlockId, u32, AbstractCacheState), AbstractCacheState>,
    frozen: bool,
    // Filled during the recording sweep.
    record: Option<Record>,
}

#[derive(Default)]
struct Record {
    out: Vec<AbstractCacheState>,
    per_site_in: BTreeMap<Site, AbstractCacheState>,
    per_site_slots: BTreeMap<Site, Vec<(Color, AbstractCacheState)>>,
    depths: BTreeMap<BlockId, u32>,
}

impl<'a> Engine<'a> {
    fn new(p: &'a Program, cfg: EngineConfig) -> Self {
        let plan = match cfg.spec {
            Some(_) => build_spec_plan(p),
            None => SpecPlan::default(),
        };
        let nslots = match cfg.spec {
            Some(s) if s.strategy == Strategy::JustInTime && !plan.entries.is_empty() => {
                if s.colors_enabled {
                    plan.num_colors()
                } else {
                    1
                }
            }
            _ => 0,
        };
        let n = p.blocks.len();
        Engine {
            p,
            cfg,
            plan,
            nslots,
            s: vec![AbstractCacheState::bottom(); n],
            ss: vec![vec![AbstractCacheState::bottom(); nslots]; n],
            rot: Rotation {
                counters: vec![0; p.regions.len()],
                ..Default::default()
            },
            rj_cache: HashMap::new(),
            frozen: false,
            record: None,
        }
    }

    fn run(mut self) -> Result<FixpointResult, FixpointError> {
        let budget = self.cfg.max_pops.unwrap_or_else(|| pops_bound(self.p, &self.cfg));
        let n = self.p.blocks.len();
        self.s[self.p.entry.idx()] = AbstractCacheState::top(self.p.num_vars(), &self.cfg.cache);
        let mut queue: VecDeque<BlockId> = VecDeque::new();
        let mut queued = vec![false; n];
        queue.push_back(self.p.entry);
        queued[self.p.entry.idx()] = true;
        let mut pops = 0u64;
        while let Some(b) = queue.pop_front() {
            queued[b.idx()] = false;
            pops += 1;
            if pops > budget {
                return Err(FixpointError::Budget(budget));
            }
            let contribs = self.process(b);
            let grown = self.apply(contribs);
            for g in grown {
                if !queued[g.idx()] {
                    queued[g.idx()] = true;
                    queue.push_back(g);
                }
            }
        }

        // Recording sweep: replays every block on the final states and checks
        // that nothing would still grow.
        self.frozen = true;
        self.record = Some(Record {
            out: vec![AbstractCacheState::bottom(); n],
            ..Default::default()
        });
        let mut stable = true;
        for b in self.p.block_ids() {
            let contribs = self.process(b);
            for (t, slot, st) in &contribs {
                let dst = match slot {
                    None => &self.s[t.idx()],
                    Some(c) => &self.ss[t.idx()][*c],
                };
                if !crate::domain::leq(st, dst) {
                    stable = false;
                }
            }
        }
        let rec = self.record.take().unwrap();
        let site_lines = self
            .rot
            .used
            .iter()
            .map(|(site, lines)| {
                let r = self.p.instruction(*site).region().expect("rotating site is a region access");
                let reg = self.p.region(r);
                (*site, lines.iter().map(|i| reg.line(*i)).collect())
            })
            .collect();
        Ok(FixpointResult {
            engine: self.cfg,
            plan: self.plan,
            states: self.s,
            slots: self.ss,
            out_states: rec.out,
            iterations: pops,
            per_site_in: rec.per_site_in,
            per_site_slots: rec.per_site_slots,
            site_lines,
            branch_depths: rec.depths,
            stable,
        })
    }

    fn apply(&mut self, contribs: Vec<Contribution>) -> Vec<BlockId> {
        let mut grown = BTreeSet::new();
        for (t, slot, st) in contribs {
            let dst = match slot {
                None => &mut self.s[t.idx()],
                Some(c) => &mut self.ss[t.idx()][c],
            };
            if join_into(dst, &st) {
                grown.insert(t);
            }
        }
        grown.into_iter().collect()
    }

    fn effect(&mut self, site: Site, state: &AbstractCacheState, normal: bool) -> AccessEffect {
        match self.p.instruction(site) {
            Instruction::Ref(v) => AccessEffect::Known(*v),
            Instruction::Nop => AccessEffect::None,
            Instruction::SecretRef(r) => AccessEffect::Havoc(*r),
            Instruction::RefRegionUnknown(r) => {
                if self.cfg.region_mode == RegionMode::Havoc {
                    return AccessEffect::Havoc(*r);
                }
                let reg = self.p.region(*r);
                let ri = r.idx();
                let changed = self.rot.last_in.get(&site) != Some(state);
                let line = if normal && changed && !self.frozen {
                    self.rot.counters[ri] = (self.rot.counters[ri] + 1).min(reg.size);
                    let l = self.rot.counters[ri] - 1;
                    self.rot.last_in.insert(site, state.clone());
                    self.rot.line.insert(site, l);
                    l
                } else {
                    match self.rot.line.get(&site) {
                        Some(l) => *l,
                        None => self.rot.counters[ri].max(1) - 1,
                    }
                };
                self.rot.used.entry(site).or_default().insert(line);
                AccessEffect::Known(reg.line(line))
            }
        }
    }

    fn run_body(&mut self, b: BlockId, state: &AbstractCacheState, slot: Option<usize>) -> AbstractCacheState {
        let mut cur = state.clone();
        for i in 0..self.p.block(b).body.len() {
            let site = self.p.site(b, i);
            if let Some(rec) = self.record.as_mut() {
                match slot {
                    None => {
                        rec.per_site_in.insert(site, cur.clone());
                    }
                    Some(c) => {
                        let color = slot_color(&self.cfg, c);
                        rec.per_site_slots.entry(site).or_default().push((color, cur.clone()));
                    }
                }
            }
            let eff = self.effect(site, &cur, slot.is_none());
            cur = transfer(&cur, eff, self.p, &self.cfg.cache).expect("reached");
        }
        cur
    }

    fn converts_at(&self, t: BlockId, slot: usize) -> bool {
        match self.cfg.spec {
            Some(s) if s.colors_enabled => self.plan.entries[slot].stop == Some(t),
            _ => self.plan.is_stop(t),
        }
    }

    fn rj(&mut self, branch: BlockId, wrong: BlockId, depth: u32, s: &AbstractCacheState) -> AbstractCacheState {
        let key = (branch, wrong, depth, s.clone());
        if let Some(r) = self.rj_cache.get(&key) {
            return r.clone();
        }
        let r = rollback_join(s, wrong, depth, self.p, &self.cfg.cache);
        self.rj_cache.insert(key, r.clone());
        r
    }

    /// Runs block `b` on its normal state and every slot, returning what
    /// flows where.
    fn process(&mut self, b: BlockId) -> Vec<Contribution> {
        let mut out = Vec::new();
        let sin = self.s[b.idx()].clone();
        if sin.reached {
            let so = self.run_body(b, &sin, None);
            self.flow(b, None, so.clone(), &mut out);
            if let Some(rec) = self.record.as_mut() {
                rec.out[b.idx()] = so;
            }
        } else if let Some(rec) = self.record.as_mut() {
            for i in 0..self.p.block(b).body.len() {
                rec.per_site_in.insert(self.p.site(b, i), AbstractCacheState::bottom());
            }
        }
        for c in 0..self.nslots {
            let ssin = self.ss[b.idx()][c].clone();
            if ssin.reached {
                let so = self.run_body(b, &ssin, Some(c));
                self.flow(b, Some(c), so, &mut out);
            }
        }
        out
    }

    fn flow(&mut self, b: BlockId, slot: Option<usize>, so: AbstractCacheState, out: &mut Vec<Contribution>) {
        for t in self.p.block(b).term.successors() {
            match slot {
                Some(c) if !self.converts_at(t, c) => out.push((t, Some(c), so.clone())),
                _ => out.push((t, None, so.clone())),
            }
        }
        let Some(spec) = self.cfg.spec else { return };
        let Some(pi) = self.plan.entries.iter().position(|e| e.branch == b) else {
            return;
        };
        let entry = self.plan.entries[pi].clone();
        let d = select_depth(&entry.cond, &so, &self.cfg.cache, &spec);
        if slot.is_none() {
            if let Some(rec) = self.record.as_mut() {
                rec.depths.insert(b, d);
            }
        }
        if d == 0 {
            return;
        }
        match spec.strategy {
            Strategy::RollbackMerge => {
                for (wrong, correct) in entry.directions() {
                    let r = self.rj(b, wrong, d, &so);
                    out.push((correct, None, r));
                }
            }
            Strategy::JustInTime => {
                let target = if spec.colors_enabled { pi } else { 0 };
                for (wrong, correct) in entry.directions() {
                    let r = self.rj(b, wrong, d, &so);
                    if self.converts_at(correct, target) {
                        out.push((correct, None, r));
                    } else {
                        out.push((correct, Some(target), r));
                    }
                }
            }
        }
    }
}
