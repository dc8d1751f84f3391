use std::collections::{BTreeSet, HashMap};

use super::{BasicBlock, BlockId, Cfg, IrError, Program, Terminator};

/// Replaces every hinted loop by `k` sequential copies of its body. The last
/// copy loses its back edges. Inner loops are unrolled before the loops that
/// contain them; loops without hints are copied along untouched.
pub fn unroll(program: &Program) -> Result<Program, IrError> {
    let mut prog = program.clone();
    if prog.unroll_hints.is_empty() {
        return Ok(prog);
    }
    let cfg = Cfg::new(&prog);
    cfg.check_reducible(&prog)?;
    let mut pending: Vec<(String, u32, usize)> = Vec::new();
    for &(h, k) in &prog.unroll_hints {
        let name = prog.block(h).name.clone();
        let lp = cfg.natural_loop(h).ok_or_else(|| IrError::NotLoopHeader(name.clone()))?;
        pending.push((name, k, lp.body.len()));
    }
    // Smaller bodies first: a nested loop's body is a strict subset of its
    // parent's.
    pending.sort_by(|a, b| a.2.cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
    prog.unroll_hints.clear();
    for (name, k, _) in pending {
        let h = prog
            .block_id(&name)
            .ok_or_else(|| IrError::NotLoopHeader(name.clone()))?;
        prog = unroll_one(&prog, h, k)?;
    }
    prog.validate()?;
    Ok(prog)
}

fn unroll_one(p: &Program, h: BlockId, k: u32) -> Result<Program, IrError> {
    let cfg = Cfg::new(p);
    let lp = cfg
        .natural_loop(h)
        .ok_or_else(|| IrError::NotLoopHeader(p.block(h).name.clone()))?;
    let body: &BTreeSet<BlockId> = &lp.body;
    let exits: BTreeSet<BlockId> = body
        .iter()
        .flat_map(|b| p.block(*b).term.successors())
        .filter(|s| !body.contains(s))
        .collect();

    // New layout: blocks outside the loop keep their order; the copies are
    // laid out (copy-major) where the loop's first block used to be.
    let first_in_loop = *body.iter().next().unwrap();
    let mut outside: HashMap<BlockId, BlockId> = HashMap::new();
    let mut copies: HashMap<(BlockId, u32), BlockId> = HashMap::new();
    let mut order: Vec<(BlockId, Option<u32>)> = Vec::new();
    for b in p.block_ids() {
        if b == first_in_loop {
            for i in 0..k {
                for &lb in body {
                    order.push((lb, Some(i)));
                }
            }
        }
        if !body.contains(&b) {
            order.push((b, None));
        }
    }
    for (n, (b, c)) in order.iter().enumerate() {
        let id = BlockId(n as u32);
        match c {
            None => {
                outside.insert(*b, id);
            }
            Some(i) => {
                copies.insert((*b, *i), id);
            }
        }
    }

    let map_outside = |t: BlockId| -> BlockId {
        if t == h {
            copies[&(h, 0)]
        } else {
            outside[&t]
        }
    };

    let mut blocks = Vec::with_capacity(order.len());
    for &(b, c) in &order {
        let src = p.block(b);
        let term = match c {
            None => match &src.term {
                Terminator::Exit => Terminator::Exit,
                Terminator::Goto(t) => Terminator::Goto(map_outside(*t)),
                Terminator::Branch { cond, then_, else_ } => Terminator::Branch {
                    cond: cond.clone(),
                    then_: map_outside(*then_),
                    else_: map_outside(*else_),
                },
            },
            Some(i) => {
                let last = i + 1 == k;
                // None = back edge removed in the final copy.
                let map = |t: BlockId| -> Option<BlockId> {
                    if t == h {
                        if last {
                            None
                        } else {
                            Some(copies[&(h, i + 1)])
                        }
                    } else if body.contains(&t) {
                        Some(copies[&(t, i)])
                    } else {
                        Some(outside[&t])
                    }
                };
                let fall_out = || -> Result<Terminator, IrError> {
                    match exits.len() {
                        0 => Ok(Terminator::Exit),
                        1 => Ok(Terminator::Goto(outside[exits.iter().next().unwrap()])),
                        _ => Err(IrError::AmbiguousLoopExit {
                            header: p.block(h).name.clone(),
                        }),
                    }
                };
                match &src.term {
                    Terminator::Exit => Terminator::Exit,
                    Terminator::Goto(t) => match map(*t) {
                        Some(t) => Terminator::Goto(t),
                        None => fall_out()?,
                    },
                    Terminator::Branch { cond, then_, else_ } => match (map(*then_), map(*else_)) {
                        (Some(t), Some(e)) => Terminator::Branch {
                            cond: cond.clone(),
                            then_: t,
                            else_: e,
                        },
                        (Some(t), None) => Terminator::Goto(t),
                        (None, Some(e)) => Terminator::Goto(e),
                        (None, None) => fall_out()?,
                    },
                }
            }
        };
        let (name, copy) = match c {
            None => (src.name.clone(), src.copy),
            Some(i) => {
                let copy = src.copy * k + i;
                (format!("{}@{}", src.source, copy), copy)
            }
        };
        blocks.push(BasicBlock {
            name,
            body: src.body.clone(),
            term,
            source: src.source.clone(),
            copy,
        });
    }

    let entry = if body.contains(&p.entry) {
        copies[&(h, 0)]
    } else {
        outside[&p.entry]
    };
    let unroll_hints = p
        .unroll_hints
        .iter()
        .filter(|(b, _)| !body.contains(b))
        .map(|(b, n)| (outside[b], *n))
        .collect();
    let out = Program {
        vars: p.vars.clone(),
        regions: p.regions.clone(),
        blocks,
        entry,
        unroll_hints,
        config: p.config.clone(),
    };
    out.validate()?;
    Ok(out)
}
