//! Program representation: variables, regions, basic blocks and the textual
//! IR that describes them.

mod graph;
mod parse;
mod print;
mod unroll;

use std::fmt;

use thiserror::Error;

use crate::config::FileConfig;

pub use graph::{Cfg, Loop};
pub use parse::parse_program;
pub use print::print_program;
pub use unroll::unroll;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u32);

impl VarId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl RegionId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl BlockId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    /// `foo` for a plain variable, `r.3` for the fourth line of region `r`.
    pub name: String,
    pub region: Option<RegionId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub size: u32,
    /// Region lines occupy `first .. first + size` contiguously.
    pub first: VarId,
}

impl Region {
    pub fn line(&self, i: u32) -> VarId {
        debug_assert!(i < self.size);
        VarId(self.first.0 + i)
    }

    pub fn lines(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.size).map(move |i| VarId(self.first.0 + i))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    Ref(VarId),
    /// Access to some line of the region, index not known statically.
    RefRegionUnknown(RegionId),
    /// Secret-indexed access; behaves like `RefRegionUnknown` for the cache.
    SecretRef(RegionId),
    Nop,
}

impl Instruction {
    pub fn region(&self) -> Option<RegionId> {
        match self {
            Instruction::RefRegionUnknown(r) | Instruction::SecretRef(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_memory(&self) -> bool {
        !matches!(self, Instruction::Nop)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Terminator {
    Goto(BlockId),
    Branch {
        cond: Vec<VarId>,
        then_: BlockId,
        else_: BlockId,
    },
    Exit,
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Goto(b) => vec![*b],
            Terminator::Branch { then_, else_, .. } => vec![*then_, *else_],
            Terminator::Exit => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub name: String,
    pub body: Vec<Instruction>,
    pub term: Terminator,
    /// Block this one was copied from by unrolling (its own name otherwise).
    pub source: String,
    /// Unroll-copy ordinal, 0 when not unrolled. Nested unrolls compose in
    /// mixed radix (outer * k + inner ordering is fixed per block).
    pub copy: u32,
}

/// One instruction occurrence: `index` within `block` of the (possibly
/// unrolled) program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site {
    pub block: BlockId,
    pub index: u32,
    pub copy: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub vars: Vec<Variable>,
    pub regions: Vec<Region>,
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
    pub unroll_hints: Vec<(BlockId, u32)>,
    /// Settings from the file's `config` line.
    pub config: FileConfig,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: undeclared variable `{name}`")]
    UndeclaredVar { line: usize, name: String },
    #[error("line {line}: undeclared region `{name}`")]
    UndeclaredRegion { line: usize, name: String },
    #[error("line {line}: `{name}` is already declared")]
    Duplicate { line: usize, name: String },
    #[error("line {line}: successor `{name}` is not a block")]
    DanglingSuccessor { line: usize, name: String },
    #[error("line {line}: region `{region}` has no line {index} (size {size})")]
    LineOutOfRange {
        line: usize,
        region: String,
        index: u32,
        size: u32,
    },
    #[error("missing `entry` declaration")]
    MissingEntry,
    #[error("entry block `{0}` does not exist")]
    UnknownEntry(String),
    #[error("block `{0}` has no terminator")]
    MissingTerminator(String),
    #[error("invalid program: {0}")]
    Invalid(String),
    #[error("unroll hint on `{0}`, which is not a loop header")]
    NotLoopHeader(String),
    #[error("control-flow graph is irreducible (retreating edge {from} -> {to})")]
    Irreducible { from: String, to: String },
    #[error("cannot unroll loop at `{header}`: final copy has several exits")]
    AmbiguousLoopExit { header: String },
}

impl Program {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn block(&self, b: BlockId) -> &BasicBlock {
        &self.blocks[b.idx()]
    }

    pub fn block_id(&self, name: &str) -> Option<BlockId> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .map(|i| BlockId(i as u32))
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .map(|i| VarId(i as u32))
    }

    pub fn region_id(&self, name: &str) -> Option<RegionId> {
        self.regions
            .iter()
            .position(|r| r.name == name)
            .map(|i| RegionId(i as u32))
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.idx()].name
    }

    pub fn region(&self, r: RegionId) -> &Region {
        &self.regions[r.idx()]
    }

    pub fn block_ids(&self) -> impl Iterator<Item = BlockId> {
        (0..self.blocks.len() as u32).map(BlockId)
    }

    pub fn site(&self, block: BlockId, index: usize) -> Site {
        Site {
            block,
            index: index as u32,
            copy: self.blocks[block.idx()].copy,
        }
    }

    /// All instruction occurrences in block order.
    pub fn sites(&self) -> Vec<Site> {
        let mut out = Vec::new();
        for b in self.block_ids() {
            for i in 0..self.block(b).body.len() {
                out.push(self.site(b, i));
            }
        }
        out
    }

    pub fn instruction(&self, s: Site) -> &Instruction {
        &self.blocks[s.block.idx()].body[s.index as usize]
    }

    /// Blocks ending in a conditional branch, in block order.
    pub fn branches(&self) -> Vec<BlockId> {
        self.block_ids()
            .filter(|b| matches!(self.block(*b).term, Terminator::Branch { .. }))
            .collect()
    }

    pub fn site_label(&self, s: Site) -> String {
        format!("{}:{}", self.block(s.block).name, s.index)
    }

    /// Human-readable form of one instruction.
    pub fn render_instruction(&self, inst: &Instruction) -> String {
        match inst {
            Instruction::Ref(v) => format!("ref {}", self.var_name(*v)),
            Instruction::RefRegionUnknown(r) => format!("ref {}[*]", self.region(*r).name),
            Instruction::SecretRef(r) => format!("secret_ref {}", self.region(*r).name),
            Instruction::Nop => "nop".to_string(),
        }
    }

    /// Structural checks shared by the parser, the unroller and the fuzzer.
    pub fn validate(&self) -> Result<(), IrError> {
        let nv = self.vars.len() as u32;
        let nb = self.blocks.len() as u32;
        let nr = self.regions.len() as u32;
        if self.entry.0 >= nb {
            return Err(IrError::MissingEntry);
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.vars {
            if v.name.is_empty() || !seen.insert(v.name.as_str()) {
                return Err(IrError::Invalid(format!("bad or duplicate variable `{}`", v.name)));
            }
        }
        for (ri, r) in self.regions.iter().enumerate() {
            if r.size == 0 {
                return Err(IrError::Invalid(format!("region `{}` has size 0", r.name)));
            }
            if r.first.0 + r.size > nv {
                return Err(IrError::Invalid(format!("region `{}` overruns the variables", r.name)));
            }
            for (i, l) in r.lines().enumerate() {
                let var = &self.vars[l.idx()];
                if var.region != Some(RegionId(ri as u32)) || var.name != format!("{}.{}", r.name, i) {
                    return Err(IrError::Invalid(format!("region `{}` line {} is malformed", r.name, i)));
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        for b in &self.blocks {
            if !names.insert(b.name.as_str()) {
                return Err(IrError::Invalid(format!("duplicate block `{}`", b.name)));
            }
            for inst in &b.body {
                match inst {
                    Instruction::Ref(v) if v.0 >= nv => {
                        return Err(IrError::Invalid(format!("block `{}` refs unknown var", b.name)))
                    }
                    Instruction::RefRegionUnknown(r) | Instruction::SecretRef(r) if r.0 >= nr => {
                        return Err(IrError::Invalid(format!("block `{}` refs unknown region", b.name)))
                    }
                    _ => {}
                }
            }
            if let Terminator::Branch { cond, .. } = &b.term {
                if cond.iter().any(|v| v.0 >= nv) {
                    return Err(IrError::Invalid(format!("block `{}` branches on unknown var", b.name)));
                }
            }
            if b.term.successors().iter().any(|s| s.0 >= nb) {
                return Err(IrError::Invalid(format!("block `{}` has a dangling successor", b.name)));
            }
        }
        for (h, k) in &self.unroll_hints {
            if h.0 >= nb || *k == 0 {
                return Err(IrError::Invalid("bad unroll hint".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

/// Incremental construction for tests and the fuzzer.
#[derive(Default)]
pub struct ProgramBuilder {
    prog: Program,
}

impl Default for Program {
    fn default() -> Self {
        Program {
            vars: Vec::new(),
            regions: Vec::new(),
            blocks: Vec::new(),
            entry: BlockId(0),
            unroll_hints: Vec::new(),
            config: FileConfig::default(),
        }
    }
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: &str) -> VarId {
        let id = VarId(self.prog.vars.len() as u32);
        self.prog.vars.push(Variable {
            name: name.to_string(),
            region: None,
        });
        id
    }

    pub fn region(&mut self, name: &str, size: u32) -> RegionId {
        let rid = RegionId(self.prog.regions.len() as u32);
        let first = VarId(self.prog.vars.len() as u32);
        for i in 0..size {
            self.prog.vars.push(Variable {
                name: format!("{name}.{i}"),
                region: Some(rid),
            });
        }
        self.prog.regions.push(Region {
            name: name.to_string(),
            size,
            first,
        });
        rid
    }

    /// Reserves a block id; fill it later with [`ProgramBuilder::set_block`].
    pub fn block(&mut self, name: &str) -> BlockId {
        let id = BlockId(self.prog.blocks.len() as u32);
        self.prog.blocks.push(BasicBlock {
            name: name.to_string(),
            body: Vec::new(),
            term: Terminator::Exit,
            source: name.to_string(),
            copy: 0,
        });
        id
    }

    pub fn set_block(&mut self, b: BlockId, body: Vec<Instruction>, term: Terminator) {
        let blk = &mut self.prog.blocks[b.idx()];
        blk.body = body;
        blk.term = term;
    }

    pub fn entry(&mut self, b: BlockId) {
        self.prog.entry = b;
    }

    pub fn unroll_hint(&mut self, b: BlockId, k: u32) {
        self.prog.unroll_hints.push((b, k));
    }

    pub fn lines(&mut self, n: u32) {
        self.prog.config.lines = Some(n);
    }

    pub fn build(self) -> Result<Program, IrError> {
        self.prog.validate()?;
        Ok(self.prog)
    }
}
