//! Concrete LRU cache and choice-driven execution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{BlockId, Instruction, Program, Site, Terminator, VarId};

/// Fully associative LRU cache, youngest line first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcreteCache {
    pub lines: Vec<VarId>,
    pub capacity: usize,
}

impl ConcreteCache {
    pub fn new(capacity: usize) -> Self {
        ConcreteCache {
            lines: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// Accesses `v`; returns whether it hit.
    pub fn access(&mut self, v: VarId) -> bool {
        match self.lines.iter().position(|&x| x == v) {
            Some(i) => {
                self.lines[..=i].rotate_right(1);
                true
            }
            None => {
                if self.lines.len() == self.capacity {
                    self.lines.pop();
                }
                self.lines.insert(0, v);
                false
            }
        }
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.lines.contains(&v)
    }

    /// 1-based LRU age, `capacity + 1` when absent.
    pub fn age(&self, v: VarId) -> u32 {
        self.lines
            .iter()
            .position(|&x| x == v)
            .map_or(self.capacity as u32 + 1, |i| i as u32 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleParams {
    pub lines: u32,
    pub depth_hit: u32,
    pub depth_miss: u32,
    /// Always grant the miss window, even when the condition hits.
    pub strict: bool,
    /// `ref r[*]` walks the region: the k-th dynamic access touches line
    /// `min(k, m) - 1`. Otherwise any line may be touched.
    pub sequential_regions: bool,
    /// Maximum entries into any single block per run; longer runs are cut.
    pub block_visit_cap: u32,
}

impl OracleParams {
    pub fn new(lines: u32, depth_hit: u32, depth_miss: u32) -> Self {
        OracleParams {
            lines,
            depth_hit,
            depth_miss,
            strict: false,
            sequential_regions: false,
            block_visit_cap: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Normal,
    Speculative,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TracePoint {
    pub site: Site,
    pub flavor: Flavor,
    pub var: VarId,
    pub hit: bool,
    /// Cache contents just before the access.
    pub before: Vec<VarId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub block: String,
    /// 0 = then, 1 = else.
    pub outcome: u32,
    pub prediction: Option<u32>,
    pub rollback: Option<u32>,
    pub entitlement: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteRun {
    pub choices: Vec<u32>,
    pub branches: Vec<BranchEvent>,
    /// `(site label, line chosen)` for every unknown-index access.
    pub index_choices: Vec<(Site, VarId)>,
    pub trace: Vec<TracePoint>,
    /// Stopped at the block visit cap.
    pub truncated: bool,
    pub final_cache: Vec<VarId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("choice vector too short: needed choice #{0}")]
    Incomplete(usize),
    #[error("choice #{index} = {value} out of range (arity {arity})")]
    OutOfRange { index: usize, value: u32, arity: u32 },
    #[error("choice vector has {0} unused entries")]
    Trailing(usize),
}

/// Source of nondeterministic decisions.
pub(crate) trait Chooser {
    fn choose(&mut self, arity: u32) -> Result<u32, SimError>;
}

/// Replays a fixed vector strictly.
pub(crate) struct Replay<'a> {
    pub choices: &'a [u32],
    pub pos: usize,
}

impl Chooser for Replay<'_> {
    fn choose(&mut self, arity: u32) -> Result<u32, SimError> {
        if arity <= 1 {
            return Ok(0);
        }
        let i = self.pos;
        let v = *self.choices.get(i).ok_or(SimError::Incomplete(i))?;
        if v >= arity {
            return Err(SimError::OutOfRange {
                index: i,
                value: v,
                arity,
            });
        }
        self.pos += 1;
        Ok(v)
    }
}

/// Follows a prefix, then takes 0 and remembers arities (odometer step).
pub(crate) struct Explore {
    pub prefix: Vec<u32>,
    pub taken: Vec<u32>,
    pub arities: Vec<u32>,
}

impl Chooser for Explore {
    fn choose(&mut self, arity: u32) -> Result<u32, SimError> {
        if arity <= 1 {
            return Ok(0);
        }
        let i = self.taken.len();
        let v = self.prefix.get(i).copied().unwrap_or(0);
        self.taken.push(v);
        self.arities.push(arity);
        Ok(v)
    }
}

struct Machine<'p, C: Chooser> {
    p: &'p Program,
    params: OracleParams,
    ch: C,
    cache: ConcreteCache,
    walk: Vec<u32>,
    /// Blocks from which some instruction is reachable.
    live: Vec<bool>,
    run: ConcreteRun,
}

impl<'p, C: Chooser> Machine<'p, C> {
    fn pick_line(&mut self, site: Site, inst: &Instruction, speculative: bool) -> Result<VarId, SimError> {
        let (r, walk) = match inst {
            Instruction::RefRegionUnknown(r) => (*r, self.params.sequential_regions && !speculative),
            Instruction::SecretRef(r) => (*r, false),
            _ => unreachable!(),
        };
        let reg = self.p.region(r);
        let line = if walk {
            let k = &mut self.walk[r.idx()];
            let l = (*k).min(reg.size - 1);
            *k += 1;
            l
        } else {
            self.ch.choose(reg.size)?
        };
        let v = reg.line(line);
        self.run.index_choices.push((site, v));
        Ok(v)
    }

    fn exec(&mut self, site: Site, flavor: Flavor) -> Result<(), SimError> {
        let inst = self.p.instruction(site).clone();
        let v = match &inst {
            Instruction::Nop => return Ok(()),
            Instruction::Ref(v) => *v,
            _ => self.pick_line(site, &inst, flavor == Flavor::Speculative)?,
        };
        let before = if flavor == Flavor::Normal {
            self.cache.lines.clone()
        } else {
            Vec::new()
        };
        let hit = self.cache.access(v);
        self.run.trace.push(TracePoint {
            site,
            flavor,
            var: v,
            hit,
            before,
        });
        Ok(())
    }

    /// Runs the wrong path from `start` for at most `limit` instructions.
    /// Before each instruction the window may be squashed; returns how many
    /// instructions ran.
    fn window(&mut self, start: BlockId, limit: u32) -> Result<u32, SimError> {
        let (mut b, mut i) = (start, 0usize);
        let mut ran = 0;
        while ran < limit {
            if !self.ahead(b, i) || self.ch.choose(2)? == 0 {
                break;
            }
            // Settle onto the next instruction. A simple path reaches any
            // instruction the window could, so empty cycles are cut.
            let mut hops = 0;
            while i >= self.p.block(b).body.len() {
                hops += 1;
                if hops > self.p.blocks.len() {
                    return Ok(ran);
                }
                match &self.p.block(b).term {
                    Terminator::Exit => return Ok(ran),
                    Terminator::Goto(t) => b = *t,
                    Terminator::Branch { then_, else_, .. } => {
                        b = if self.ch.choose(2)? == 0 { *then_ } else { *else_ };
                    }
                }
                i = 0;
                if !self.ahead(b, 0) {
                    return Ok(ran);
                }
            }
            self.exec(self.p.site(b, i), Flavor::Speculative)?;
            i += 1;
            ran += 1;
        }
        Ok(ran)
    }

    /// Some instruction is still reachable from position `(b, i)`.
    fn ahead(&self, b: BlockId, i: usize) -> bool {
        i < self.p.block(b).body.len()
            || self.p.block(b).term.successors().iter().any(|s| self.live[s.idx()])
    }

    fn go(&mut self) -> Result<(), SimError> {
        let mut visits = vec![0u32; self.p.blocks.len()];
        let mut b = self.p.entry;
        loop {
            visits[b.idx()] += 1;
            if visits[b.idx()] > self.params.block_visit_cap {
                self.run.truncated = true;
                return Ok(());
            }
            for i in 0..self.p.block(b).body.len() {
                self.exec(self.p.site(b, i), Flavor::Normal)?;
            }
            match &self.p.block(b).term {
                Terminator::Exit => return Ok(()),
                Terminator::Goto(t) => b = *t,
                Terminator::Branch { cond, then_, else_ } => {
                    let outcome = self.ch.choose(2)?;
                    let hits = cond.iter().all(|v| self.cache.contains(*v));
                    let entitlement = if hits && !self.params.strict {
                        self.params.depth_hit
                    } else {
                        self.params.depth_miss
                    };
                    let mut ev = BranchEvent {
                        block: self.p.block(b).name.clone(),
                        outcome,
                        prediction: None,
                        rollback: None,
                        entitlement,
                    };
                    let (actual, wrong) = if outcome == 0 { (*then_, *else_) } else { (*else_, *then_) };
                    if entitlement > 0 {
                        let pred = self.ch.choose(2)?;
                        ev.prediction = Some(pred);
                        if pred != outcome {
                            let slot = self.run.branches.len();
                            self.run.branches.push(ev);
                            let k = self.window(wrong, entitlement)?;
                            self.run.branches[slot].rollback = Some(k);
                            b = actual;
                            continue;
                        }
                    }
                    self.run.branches.push(ev);
                    b = actual;
                }
            }
        }
    }
}

fn live_blocks(p: &Program) -> Vec<bool> {
    let mut live: Vec<bool> = p.blocks.iter().map(|b| !b.body.is_empty()).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for (i, b) in p.blocks.iter().enumerate() {
            if !live[i] && b.term.successors().iter().any(|s| live[s.idx()]) {
                live[i] = true;
                changed = true;
            }
        }
    }
    live
}

fn run_with<C: Chooser>(p: &Program, params: OracleParams, ch: C) -> Result<(ConcreteRun, C), SimError> {
    let mut m = Machine {
        p,
        params,
        ch,
        cache: ConcreteCache::new(params.lines as usize),
        walk: vec![0; p.regions.len()],
        live: live_blocks(p),
        run: ConcreteRun {
            choices: Vec::new(),
            branches: Vec::new(),
            index_choices: Vec::new(),
            trace: Vec::new(),
            truncated: false,
            final_cache: Vec::new(),
        },
    };
    m.go()?;
    m.run.final_cache = m.cache.lines.clone();
    Ok((m.run, m.ch))
}

/// Replays one fully resolved execution.
pub fn simulate(program: &Program, choices: &[u32], params: OracleParams) -> Result<ConcreteRun, SimError> {
    let (mut run, ch) = run_with(program, params, Replay { choices, pos: 0 })?;
    if ch.pos != choices.len() {
        return Err(SimError::Trailing(choices.len() - ch.pos));
    }
    run.choices = choices.to_vec();
    Ok(run)
}

pub(crate) fn explore(program: &Program, params: OracleParams, prefix: Vec<u32>) -> (ConcreteRun, Explore) {
    let ch = Explore {
        prefix,
        taken: Vec::new(),
        arities: Vec::new(),
    };
    let (mut run, ch) = run_with(program, params, ch).expect("exploration never runs out of choices");
    run.choices = ch.taken.clone();
    (run, ch)
}
