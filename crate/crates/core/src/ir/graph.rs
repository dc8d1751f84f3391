//! Dominators, postdominators and natural loops over a program's CFG.

use std::collections::BTreeSet;

use super::{BlockId, IrError, Program, Terminator};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub header: BlockId,
    /// Header included, sorted by id.
    pub body: BTreeSet<BlockId>,
    pub latches: Vec<BlockId>,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub succs: Vec<Vec<BlockId>>,
    pub preds: Vec<Vec<BlockId>>,
    /// Reverse postorder of the blocks reachable from entry.
    pub rpo: Vec<BlockId>,
    pub idom: Vec<Option<BlockId>>,
    /// Immediate postdominator; `None` when it is the synthetic exit or the
    /// block cannot reach an exit.
    pub ipdom: Vec<Option<BlockId>>,
    entry: BlockId,
}

/// Cooper–Harvey–Kennedy over an arbitrary graph given as successor lists.
fn dominators(n: usize, root: usize, succs: &[Vec<usize>]) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut preds = vec![Vec::new(); n];
    for (u, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(u);
        }
    }
    // Iterative DFS postorder.
    let mut post = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
    seen[root] = true;
    while let Some(&mut (u, ref mut i)) = stack.last_mut() {
        if *i < succs[u].len() {
            let s = succs[u][*i];
            *i += 1;
            if !seen[s] {
                seen[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(u);
            stack.pop();
        }
    }
    let mut order = vec![usize::MAX; n];
    for (i, &u) in post.iter().enumerate() {
        order[u] = i;
    }
    let rpo: Vec<usize> = post.iter().rev().copied().collect();
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[root] = Some(root);
    let mut changed = true;
    while changed {
        changed = false;
        for &u in rpo.iter().skip(1) {
            let mut new: Option<usize> = None;
            for &p in &preds[u] {
                if idom[p].is_none() {
                    continue;
                }
                new = Some(match new {
                    None => p,
                    Some(mut a) => {
                        let mut b = p;
                        while a != b {
                            while order[a] < order[b] {
                                a = idom[a].unwrap();
                            }
                            while order[b] < order[a] {
                                b = idom[b].unwrap();
                            }
                        }
                        a
                    }
                });
            }
            if new != idom[u] {
                idom[u] = new;
                changed = true;
            }
        }
    }
    (rpo, idom)
}

impl Cfg {
    pub fn new(p: &Program) -> Cfg {
        let n = p.blocks.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for b in p.block_ids() {
            for s in p.block(b).term.successors() {
                if !succs[b.idx()].contains(&s) {
                    succs[b.idx()].push(s);
                    preds[s.idx()].push(b);
                }
            }
        }
        let fwd: Vec<Vec<usize>> = succs.iter().map(|v| v.iter().map(|b| b.idx()).collect()).collect();
        let (rpo, idom) = dominators(n, p.entry.idx(), &fwd);
        let idom = idom
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                Some(d) if *d != i => Some(BlockId(*d as u32)),
                _ => None,
            })
            .collect();

        // Reverse graph rooted at a synthetic exit numbered `n`.
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for b in p.block_ids() {
            for &pr in &preds[b.idx()] {
                rev[b.idx()].push(pr.idx());
            }
            if matches!(p.block(b).term, Terminator::Exit) {
                rev[n].push(b.idx());
            }
        }
        let (_, pdom) = dominators(n + 1, n, &rev);
        let ipdom = (0..n)
            .map(|i| match pdom[i] {
                Some(d) if d != n && d != i => Some(BlockId(d as u32)),
                _ => None,
            })
            .collect();

        Cfg {
            succs,
            preds,
            rpo: rpo.into_iter().map(|i| BlockId(i as u32)).collect(),
            idom,
            ipdom,
            entry: p.entry,
        }
    }

    pub fn reachable(&self, b: BlockId) -> bool {
        b == self.entry || self.idom[b.idx()].is_some()
    }

    /// Does `a` dominate `b`? Unreachable blocks are dominated by nothing.
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        if !self.reachable(b) {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur.idx()] {
                Some(d) => cur = d,
                None => return false,
            }
        }
    }

    /// Does `a` postdominate `b`?
    pub fn postdominates(&self, a: BlockId, b: BlockId) -> bool {
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.ipdom[cur.idx()] {
                Some(d) => cur = d,
                None => return false,
            }
        }
    }

    /// Errors if some retreating DFS edge does not target a dominator of its
    /// source.
    pub fn check_reducible(&self, p: &Program) -> Result<(), IrError> {
        let n = self.succs.len();
        let mut state = vec![0u8; n]; // 0 new, 1 on stack, 2 done
        let mut stack: Vec<(BlockId, usize)> = vec![(self.entry, 0)];
        state[self.entry.idx()] = 1;
        while let Some(&mut (u, ref mut i)) = stack.last_mut() {
            if *i < self.succs[u.idx()].len() {
                let s = self.succs[u.idx()][*i];
                *i += 1;
                match state[s.idx()] {
                    0 => {
                        state[s.idx()] = 1;
                        stack.push((s, 0));
                    }
                    1 if !self.dominates(s, u) => {
                        return Err(IrError::Irreducible {
                            from: p.block(u).name.clone(),
                            to: p.block(s).name.clone(),
                        })
                    }
                    _ => {}
                }
            } else {
                state[u.idx()] = 2;
                stack.pop();
            }
        }
        Ok(())
    }

    /// Natural loop headed at `h` (union over all its back edges), if any.
    pub fn natural_loop(&self, h: BlockId) -> Option<Loop> {
        let latches: Vec<BlockId> = self.preds[h.idx()]
            .iter()
            .copied()
            .filter(|&u| self.dominates(h, u))
            .collect();
        if latches.is_empty() {
            return None;
        }
        let mut body = BTreeSet::new();
        body.insert(h);
        let mut work: Vec<BlockId> = latches.clone();
        while let Some(u) = work.pop() {
            if body.insert(u) {
                for &pr in &self.preds[u.idx()] {
                    if self.reachable(pr) {
                        work.push(pr);
                    }
                }
            }
        }
        Some(Loop {
            header: h,
            body,
            latches,
        })
    }

    pub fn loops(&self) -> Vec<Loop> {
        let mut out: Vec<Loop> = (0..self.succs.len() as u32)
            .filter_map(|h| self.natural_loop(BlockId(h)))
            .collect();
        out.sort_by_key(|l| l.header);
        out
    }
}
