//! Speculative flows: one color per branch, a depth-bounded window of
//! wrongly executed instructions, and where the resulting states rejoin.

use std::collections::BTreeMap;

use crate::config::Strategy;
use crate::domain::{join_into, transfer, AbstractCacheState, AccessEffect, CacheConfig};
use crate::ir::{BlockId, Cfg, Instruction, Program, Terminator, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpecConfig {
    /// Window when every condition variable is a must-hit.
    pub depth_hit: u32,
    /// Window otherwise.
    pub depth_miss: u32,
    pub strategy: Strategy,
    /// One speculative slot per branch; when off, all speculative flows share
    /// a single slot.
    pub colors_enabled: bool,
}

impl SpecConfig {
    pub fn new(depth_hit: u32, depth_miss: u32, strategy: Strategy) -> Self {
        SpecConfig {
            depth_hit,
            depth_miss,
            strategy,
            colors_enabled: true,
        }
    }
}

impl Default for SpecConfig {
    fn default() -> Self {
        SpecConfig::new(20, 200, Strategy::JustInTime)
    }
}

/// 1-based, in block order of the branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Color(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanEntry {
    pub branch: BlockId,
    pub color: Color,
    pub cond: Vec<VarId>,
    pub then_entry: BlockId,
    pub else_entry: BlockId,
    /// Immediate postdominator; `None` when the arms only meet at program exit.
    pub stop: Option<BlockId>,
}

impl PlanEntry {
    /// `(wrong arm, correct arm)` for both mispredictions.
    pub fn directions(&self) -> [(BlockId, BlockId); 2] {
        [
            (self.then_entry, self.else_entry),
            (self.else_entry, self.then_entry),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpecPlan {
    pub entries: Vec<PlanEntry>,
}

impl SpecPlan {
    pub fn entry_for(&self, b: BlockId) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.branch == b)
    }

    pub fn num_colors(&self) -> usize {
        self.entries.len()
    }

    pub fn is_stop(&self, b: BlockId) -> bool {
        self.entries.iter().any(|e| e.stop == Some(b))
    }
}

pub fn build_spec_plan(program: &Program) -> SpecPlan {
    let cfg = Cfg::new(program);
    let mut entries = Vec::new();
    for b in program.branches() {
        if let Terminator::Branch { cond, then_, else_ } = &program.block(b).term {
            entries.push(PlanEntry {
                branch: b,
                color: Color(entries.len() as u32 + 1),
                cond: cond.clone(),
                then_entry: *then_,
                else_entry: *else_,
                stop: cfg.ipdom[b.idx()],
            });
        }
    }
    SpecPlan { entries }
}

/// Window length for a branch whose condition is evaluated in state `s`.
pub fn select_depth(cond: &[VarId], s: &AbstractCacheState, cfg: &CacheConfig, spec: &SpecConfig) -> u32 {
    if cond.iter().all(|v| s.must_hit(*v, cfg)) {
        spec.depth_hit
    } else {
        spec.depth_miss
    }
}

/// Effect of an instruction inside a speculative window: unknown indices
/// always havoc.
pub(crate) fn window_effect(inst: &Instruction) -> AccessEffect {
    match inst {
        Instruction::Ref(v) => AccessEffect::Known(*v),
        Instruction::RefRegionUnknown(r) | Instruction::SecretRef(r) => AccessEffect::Havoc(*r),
        Instruction::Nop => AccessEffect::None,
    }
}

type Pos = (BlockId, usize);

/// Follows terminators (which cost no step) from every frontier position
/// until each position sits in front of an instruction.
fn settle(program: &Program, frontier: BTreeMap<Pos, AbstractCacheState>) -> BTreeMap<Pos, AbstractCacheState> {
    let mut out: BTreeMap<Pos, AbstractCacheState> = BTreeMap::new();
    let mut work: Vec<(Pos, AbstractCacheState)> = frontier.into_iter().collect();
    while let Some(((b, i), s)) = work.pop() {
        let blk = program.block(b);
        if i < blk.body.len() {
            let slot = out.entry((b, i)).or_insert_with(AbstractCacheState::bottom);
            join_into(slot, &s);
            continue;
        }
        // At the terminator. Track settled block entries to cut cycles of
        // empty blocks.
        for t in blk.term.successors() {
            let key = (t, usize::MAX);
            let slot = out.entry(key).or_insert_with(AbstractCacheState::bottom);
            if join_into(slot, &s) {
                work.push(((t, 0), s.clone()));
            }
        }
    }
    out.retain(|(_, i), _| *i != usize::MAX);
    out
}

/// Join of the cache states after every prefix of length `0..=depth` of the
/// wrong path starting at `wrong_entry`. Branches inside the window fan out
/// to both arms; the window may run past the join point.
pub fn rollback_join(
    s0: &AbstractCacheState,
    wrong_entry: BlockId,
    depth: u32,
    program: &Program,
    cfg: &CacheConfig,
) -> AbstractCacheState {
    let mut acc = s0.clone();
    if !s0.reached || depth == 0 {
        return acc;
    }
    let mut frontier = BTreeMap::new();
    frontier.insert((wrong_entry, 0), s0.clone());
    let mut frontier = settle(program, frontier);
    for _ in 0..depth {
        if frontier.is_empty() {
            break;
        }
        let mut next: BTreeMap<Pos, AbstractCacheState> = BTreeMap::new();
        for ((b, i), s) in &frontier {
            let inst = &program.block(*b).body[*i];
            let s2 = transfer(s, window_effect(inst), program, cfg).expect("frontier states are reached");
            join_into(&mut acc, &s2);
            let slot = next.entry((*b, i + 1)).or_insert_with(AbstractCacheState::bottom);
            join_into(slot, &s2);
        }
        frontier = settle(program, next);
    }
    acc
}

/// Where a misprediction's rollback state enters the fixpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub node: BlockId,
    /// `None` targets the normal state.
    pub slot: Option<Color>,
    pub state: AbstractCacheState,
}

/// Placement of `rj` for the misprediction whose correct arm is `correct`.
pub fn inject(entry: &PlanEntry, correct: BlockId, rj: AbstractCacheState, spec: &SpecConfig) -> Injection {
    match spec.strategy {
        Strategy::RollbackMerge => Injection {
            node: correct,
            slot: None,
            state: rj,
        },
        Strategy::JustInTime => Injection {
            node: correct,
            slot: if entry.stop == Some(correct) {
                None
            } else {
                Some(entry.color)
            },
            state: rj,
        },
    }
}
