//! Seeded random programs for fuzzing the analysis against the oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{BlockId, Instruction, Program, ProgramBuilder, RegionId, Terminator, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuzzSpec {
    /// Plain variables plus region lines.
    pub max_vars: u32,
    pub max_blocks: u32,
    pub max_branches: u32,
    pub max_region_size: u32,
    pub loop_allowed: bool,
    pub seed: u64,
}

impl Default for FuzzSpec {
    fn default() -> Self {
        FuzzSpec {
            max_vars: 10,
            max_blocks: 16,
            max_branches: 3,
            max_region_size: 3,
            loop_allowed: true,
            seed: 0,
        }
    }
}

enum Stmt {
    Inst(Instruction),
    If(Vec<VarId>, Vec<Stmt>, Vec<Stmt>),
    /// `while` loop: header branches into the body or out.
    Loop(Vec<VarId>, Vec<Stmt>),
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    spec: &'a FuzzSpec,
    vars: Vec<VarId>,
    region: Option<RegionId>,
    branches_left: u32,
    blocks_left: i64,
}

impl Gen<'_> {
    fn inst(&mut self) -> Instruction {
        let roll = self.rng.random_range(0..100);
        match (roll, self.region) {
            (0..=9, Some(r)) => Instruction::RefRegionUnknown(r),
            (10..=14, Some(r)) => Instruction::SecretRef(r),
            (15..=19, _) => Instruction::Nop,
            _ => Instruction::Ref(self.vars[self.rng.random_range(0..self.vars.len())]),
        }
    }

    fn cond(&mut self) -> Vec<VarId> {
        let k = self.rng.random_range(0..=2);
        let mut out = Vec::new();
        for _ in 0..k {
            let v = self.vars[self.rng.random_range(0..self.vars.len())];
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    fn seq(&mut self, depth: u32) -> Vec<Stmt> {
        let len = self.rng.random_range(0..=4);
        let mut out = Vec::new();
        for _ in 0..len {
            let roll = self.rng.random_range(0..100);
            if roll < 25 && self.branches_left > 0 && depth < 3 && self.blocks_left >= 3 {
                self.branches_left -= 1;
                let looping = self.spec.loop_allowed && self.rng.random_range(0..100) < 25;
                if looping {
                    self.blocks_left -= 2;
                    let c = self.cond();
                    let body = self.seq(depth + 1);
                    out.push(Stmt::Loop(c, body));
                } else {
                    self.blocks_left -= 3;
                    let c = self.cond();
                    let t = self.seq(depth + 1);
                    let e = if self.rng.random_bool(0.3) { Vec::new() } else { self.seq(depth + 1) };
                    out.push(Stmt::If(c, t, e));
                }
            } else {
                out.push(Stmt::Inst(self.inst()));
            }
        }
        out
    }
}

struct Lower {
    b: ProgramBuilder,
    cur: BlockId,
    body: Vec<Instruction>,
    n: u32,
}

impl Lower {
    fn fresh(&mut self) -> BlockId {
        self.n += 1;
        self.b.block(&format!("b{}", self.n))
    }

    fn close(&mut self, term: Terminator, next: BlockId) {
        let body = std::mem::take(&mut self.body);
        self.b.set_block(self.cur, body, term);
        self.cur = next;
    }

    fn seq(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Inst(i) => self.body.push(i.clone()),
                Stmt::If(c, t, e) => {
                    let tb = self.fresh();
                    let join = self.fresh();
                    let eb = if e.is_empty() { join } else { self.fresh() };
                    self.close(
                        Terminator::Branch {
                            cond: c.clone(),
                            then_: tb,
                            else_: eb,
                        },
                        tb,
                    );
                    self.seq(t);
                    self.close(Terminator::Goto(join), eb);
                    if !e.is_empty() {
                        self.seq(e);
                        self.close(Terminator::Goto(join), join);
                    }
                }
                Stmt::Loop(c, body) => {
                    let head = self.fresh();
                    let bb = self.fresh();
                    let exit = self.fresh();
                    self.close(Terminator::Goto(head), head);
                    self.close(
                        Terminator::Branch {
                            cond: c.clone(),
                            then_: bb,
                            else_: exit,
                        },
                        bb,
                    );
                    self.seq(body);
                    self.close(Terminator::Goto(head), exit);
                }
            }
        }
    }
}

/// Well-formed, reducible program within `spec`'s bounds; equal seeds give
/// equal programs.
pub fn gen_program(spec: &FuzzSpec) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = ProgramBuilder::new();
    let max_vars = spec.max_vars.max(1);
    let region_size = if spec.max_region_size > 0 && max_vars >= 2 && rng.random_bool(0.5) {
        rng.random_range(1..=spec.max_region_size.min(max_vars - 1))
    } else {
        0
    };
    let plain = rng.random_range(1..=(max_vars - region_size).max(1));
    let mut vars = Vec::new();
    for i in 0..plain {
        vars.push(b.var(&format!("v{i}")));
    }
    let region = (region_size > 0).then(|| b.region("r", region_size));
    // Region lines may also be referenced directly.
    for i in 0..region_size {
        vars.push(VarId(plain + i));
    }
    let mut g = Gen {
        rng,
        spec,
        vars,
        region,
        branches_left: spec.max_branches,
        blocks_left: spec.max_blocks as i64 - 1,
    };
    let stmts = g.seq(0);
    let entry = b.block("b0");
    b.entry(entry);
    let mut l = Lower {
        b,
        cur: entry,
        body: Vec::new(),
        n: 0,
    };
    l.seq(&stmts);
    let cur = l.cur;
    l.close(Terminator::Exit, cur);
    l.b.build().expect("generated programs are well formed")
}
