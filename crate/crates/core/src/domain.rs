//! Abstract LRU cache states.
//!
//! A state keeps, per variable, an upper bound on its LRU age (`must`) and,
//! optionally, a lower bound (`may`, printed as `∃v`). Ages run from 1
//! (youngest) to N+1, which stands for "not cached".

use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use crate::ir::{Program, RegionId, VarId};

pub type Age = u32;

/// Deliberate defects for checking that the oracle catches unsound transfers.
/// Never use outside tests.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mutation {
    #[default]
    None,
    /// Count only strictly younger shadow lines in the aging refinement.
    YoungCountStrict,
    /// Let a line age when it is as old as the accessed one (`≤` instead of `<`).
    MustAgeNonStrict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CacheConfig {
    pub num_lines: u32,
    pub shadow: bool,
    #[doc(hidden)]
    pub mutation: Mutation,
}

impl CacheConfig {
    pub fn new(num_lines: u32, shadow: bool) -> Self {
        assert!(num_lines >= 1, "cache needs at least one line");
        CacheConfig {
            num_lines,
            shadow,
            mutation: Mutation::None,
        }
    }

    #[inline]
    pub fn evicted(&self) -> Age {
        self.num_lines + 1
    }
}

/// What an instruction does to the abstract cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessEffect {
    None,
    Known(VarId),
    /// Some line of the region, which one is unknown.
    Havoc(RegionId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("transfer applied to an unreached state")]
    Unreached,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbstractCacheState {
    pub reached: bool,
    pub must: Vec<Age>,
    pub may: Option<Vec<Age>>,
}

impl AbstractCacheState {
    pub fn bottom() -> Self {
        AbstractCacheState {
            reached: false,
            must: Vec::new(),
            may: None,
        }
    }

    /// Cold cache over `nvars` variables.
    pub fn top(nvars: usize, cfg: &CacheConfig) -> Self {
        let e = cfg.evicted();
        AbstractCacheState {
            reached: true,
            must: vec![e; nvars],
            may: cfg.shadow.then(|| vec![e; nvars]),
        }
    }

    pub fn is_bottom(&self) -> bool {
        !self.reached
    }

    pub fn must_age(&self, v: VarId, cfg: &CacheConfig) -> Age {
        self.must.get(v.idx()).copied().unwrap_or(cfg.evicted())
    }

    pub fn may_age(&self, v: VarId, cfg: &CacheConfig) -> Age {
        match &self.may {
            Some(m) => m.get(v.idx()).copied().unwrap_or(cfg.evicted()),
            None => 1,
        }
    }

    pub fn must_hit(&self, v: VarId, cfg: &CacheConfig) -> bool {
        self.reached && self.must_age(v, cfg) <= cfg.num_lines
    }

    /// Checks range and `may ≤ must`.
    pub fn well_formed(&self, cfg: &CacheConfig) -> bool {
        if !self.reached {
            return self.must.is_empty() && self.may.is_none();
        }
        let e = cfg.evicted();
        if self.must.iter().any(|&a| a == 0 || a > e) {
            return false;
        }
        match &self.may {
            None => !cfg.shadow,
            Some(m) => {
                cfg.shadow
                    && m.len() == self.must.len()
                    && m.iter().zip(&self.must).all(|(&y, &u)| y >= 1 && y <= u)
            }
        }
    }
}

pub fn transfer(
    s: &AbstractCacheState,
    eff: AccessEffect,
    program: &Program,
    cfg: &CacheConfig,
) -> Result<AbstractCacheState, DomainError> {
    if !s.reached {
        return Err(DomainError::Unreached);
    }
    let mut out = s.clone();
    match eff {
        AccessEffect::None => {}
        AccessEffect::Known(v) => access_known(&mut out, v, cfg),
        AccessEffect::Havoc(r) => {
            let e = cfg.evicted();
            for a in out.must.iter_mut() {
                if *a < e {
                    *a += 1;
                }
            }
            if let Some(may) = out.may.as_mut() {
                for l in program.region(r).lines() {
                    may[l.idx()] = 1;
                }
            }
        }
    }
    Ok(out)
}

/// In-place transfer for an access to a known variable.
pub fn access_known(s: &mut AbstractCacheState, v: VarId, cfg: &CacheConfig) {
    let e = cfg.evicted();
    let vi = v.idx();
    let av = s.must[vi];
    let must_ages = |au: Age| match cfg.mutation {
        Mutation::MustAgeNonStrict => au <= av,
        _ => au < av,
    };
    match s.may.as_mut() {
        None => {
            for (u, a) in s.must.iter_mut().enumerate() {
                if u != vi && must_ages(*a) && *a < e {
                    *a += 1;
                }
            }
        }
        Some(may) => {
            let mv = may[vi];
            for (u, a) in may.iter_mut().enumerate() {
                if u != vi && *a <= mv && *a < e {
                    *a += 1;
                }
            }
            may[vi] = 1;
            // Shadow ages sorted once so each N_Young is a binary search.
            let mut sorted: Vec<Age> = may.clone();
            sorted.sort_unstable();
            for u in 0..s.must.len() {
                let au = s.must[u];
                if u == vi || !must_ages(au) || au >= e {
                    continue;
                }
                let bound = match cfg.mutation {
                    Mutation::YoungCountStrict => au - 1,
                    _ => au,
                };
                let mut young = sorted.partition_point(|&a| a <= bound);
                if may[u] <= bound {
                    young -= 1;
                }
                if young as Age >= au {
                    s.must[u] = au + 1;
                }
            }
            s.must[vi] = 1;
            for (y, u) in may.iter_mut().zip(&s.must) {
                if *y > *u {
                    *y = *u;
                }
            }
            return;
        }
    }
    s.must[vi] = 1;
}

pub fn join(s1: &AbstractCacheState, s2: &AbstractCacheState) -> AbstractCacheState {
    if !s1.reached {
        return s2.clone();
    }
    if !s2.reached {
        return s1.clone();
    }
    let mut out = s1.clone();
    join_into(&mut out, s2);
    out
}

/// `dst ⊔= src`; returns whether `dst` changed.
pub fn join_into(dst: &mut AbstractCacheState, src: &AbstractCacheState) -> bool {
    if !src.reached {
        return false;
    }
    if !dst.reached {
        *dst = src.clone();
        return true;
    }
    let mut changed = false;
    for (a, &b) in dst.must.iter_mut().zip(&src.must) {
        if b > *a {
            *a = b;
            changed = true;
        }
    }
    if let (Some(d), Some(s)) = (dst.may.as_mut(), src.may.as_ref()) {
        for (a, &b) in d.iter_mut().zip(s) {
            if b < *a {
                *a = b;
                changed = true;
            }
        }
    }
    changed
}

pub fn leq(s1: &AbstractCacheState, s2: &AbstractCacheState) -> bool {
    if !s1.reached {
        return true;
    }
    if !s2.reached {
        return false;
    }
    if s1.must.iter().zip(&s2.must).any(|(a, b)| a > b) {
        return false;
    }
    match (&s1.may, &s2.may) {
        (Some(m1), Some(m2)) => m1.iter().zip(m2).all(|(a, b)| a >= b),
        _ => true,
    }
}

/// Age buckets `1..=N`; each holds shadow entries (`∃v`) then must entries,
/// both in declaration order. Evicted entries are omitted.
pub fn buckets(
    s: &AbstractCacheState,
    names: &dyn Fn(VarId) -> String,
    cfg: &CacheConfig,
    with_must: bool,
    with_may: bool,
) -> Vec<Vec<String>> {
    let n = cfg.num_lines as usize;
    let mut out = vec![Vec::new(); n];
    if !s.reached {
        return out;
    }
    if with_may {
        if let Some(may) = &s.may {
            for (i, &a) in may.iter().enumerate() {
                if (a as usize) <= n {
                    out[a as usize - 1].push(format!("∃{}", names(VarId(i as u32))));
                }
            }
        }
    }
    if with_must {
        for (i, &a) in s.must.iter().enumerate() {
            if (a as usize) <= n {
                out[a as usize - 1].push(names(VarId(i as u32)));
            }
        }
    }
    out
}

pub fn render_buckets(b: &[Vec<String>]) -> String {
    let mut out = String::from("[");
    for (i, bucket) in b.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match bucket.len() {
            0 => out.push_str("{}"),
            1 => out.push_str(&bucket[0]),
            _ => {
                let _ = write!(out, "{{{}}}", bucket.join(","));
            }
        }
    }
    out.push(']');
    out
}

/// Combined row, e.g. `[{∃x,∃t}, {∃y,∃z}, {x,z}, {∃k,k}]`; `⊥` when unreached.
pub fn render_state(s: &AbstractCacheState, program: &Program, cfg: &CacheConfig) -> String {
    if !s.reached {
        return "⊥".to_string();
    }
    let names = |v: VarId| program.var_name(v).to_string();
    render_buckets(&buckets(s, &names, cfg, true, true))
}

/// Parses bucket rows as written in tables: `[ril, ∅, {x,z}, ⊥]`. `∅`, `⊥`
/// and `{}` all denote an empty bucket; braces around singletons are
/// optional. Trailing empty buckets are dropped so rows of different widths
/// compare equal.
pub fn parse_buckets(text: &str) -> Option<Vec<BTreeSet<String>>> {
    let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?;
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    let mut items: Vec<String> = Vec::new();
    for ch in inner.chars().chain(std::iter::once(',')) {
        match ch {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth == 0 => {
                items.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    for it in items {
        let it = it.trim();
        let body = it.strip_prefix('{').and_then(|x| x.strip_suffix('}')).unwrap_or(it);
        let set: BTreeSet<String> = body
            .split(',')
            .map(|x| x.trim().replace(' ', ""))
            .filter(|x| !x.is_empty() && x != "∅" && x != "⊥")
            .collect();
        out.push(set);
    }
    while out.last().is_some_and(|b| b.is_empty()) {
        out.pop();
    }
    Some(out)
}

/// Bucket sets of a state in the same normalized shape as [`parse_buckets`].
pub fn bucket_sets(
    s: &AbstractCacheState,
    program: &Program,
    cfg: &CacheConfig,
    with_must: bool,
    with_may: bool,
) -> Vec<BTreeSet<String>> {
    let names = |v: VarId| program.var_name(v).to_string();
    let mut out: Vec<BTreeSet<String>> = buckets(s, &names, cfg, with_must, with_may)
        .into_iter()
        .map(|b| b.into_iter().collect())
        .collect();
    while out.last().is_some_and(|b| b.is_empty()) {
        out.pop();
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BucketError {
    #[error("malformed bucket row `{0}`")]
    Malformed(String),
    #[error("unknown variable `{0}` in bucket row")]
    UnknownVar(String),
    #[error("row `{0}` has more buckets than cache lines")]
    TooWide(String),
}

/// Builds a reached state from bucket rows. `must` holds plain names; the
/// optional `may` row holds `∃v` entries (the `∃` is optional there).
/// Variables not listed are uncached.
pub fn state_from_buckets(
    program: &Program,
    cfg: &CacheConfig,
    must: &str,
    may: Option<&str>,
) -> Result<AbstractCacheState, BucketError> {
    let mut s = AbstractCacheState::top(program.num_vars(), cfg);
    let fill = |row: &str, target: &mut Vec<Age>| -> Result<(), BucketError> {
        let b = parse_buckets(row).ok_or_else(|| BucketError::Malformed(row.to_string()))?;
        if b.len() > cfg.num_lines as usize {
            return Err(BucketError::TooWide(row.to_string()));
        }
        for (i, bucket) in b.iter().enumerate() {
            for name in bucket {
                let name = name.trim_start_matches('∃');
                let v = program
                    .var_id(name)
                    .ok_or_else(|| BucketError::UnknownVar(name.to_string()))?;
                target[v.idx()] = i as Age + 1;
            }
        }
        Ok(())
    };
    fill(must, &mut s.must)?;
    if let (Some(row), Some(m)) = (may, s.may.as_mut()) {
        fill(row, m)?;
    }
    Ok(s)
}
