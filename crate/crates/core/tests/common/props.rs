//! Randomized suites shared by the `properties` and `acceptance` targets.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestError, TestRunner};
use specache::config::{RegionMode, Strategy as Merge};
use specache::domain::{join, leq, transfer, AbstractCacheState, AccessEffect, CacheConfig};
use specache::fixpoint::{analyze, EngineConfig};
use specache::ir::{Instruction, ProgramBuilder, RegionId, VarId};
use specache::oracle::{gen_program, FuzzSpec};
use specache::speculation::{rollback_join, SpecConfig};
use specache::Program;

pub const CASES: u32 = 1000;

const NVARS: u32 = 7; // v0..v4 plus r.0, r.1

fn universe() -> Program {
    let mut b = ProgramBuilder::new();
    for i in 0..5 {
        b.var(&format!("v{i}"));
    }
    b.region("r", 2);
    let e = b.block("e");
    b.entry(e);
    b.build().unwrap()
}

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Arbitrary well-formed state (not necessarily reachable).
fn raw_state(cfg: CacheConfig) -> impl Strategy<Value = AbstractCacheState> {
    let top = cfg.evicted();
    (any::<bool>(), prop::collection::vec((1..=top, 1..=top), NVARS as usize)).prop_map(move |(reached, ages)| {
        if !reached {
            return AbstractCacheState::bottom();
        }
        AbstractCacheState {
            reached: true,
            must: ages.iter().map(|a| a.0).collect(),
            may: cfg.shadow.then(|| ages.iter().map(|a| a.1.min(a.0)).collect()),
        }
    })
}

fn effect() -> impl Strategy<Value = AccessEffect> {
    prop_oneof![
        6 => (0..NVARS).prop_map(|v| AccessEffect::Known(VarId(v))),
        1 => Just(AccessEffect::Havoc(RegionId(0))),
        1 => Just(AccessEffect::None),
    ]
}

fn run(p: &Program, cfg: &CacheConfig, s: &AbstractCacheState, effs: &[AccessEffect]) -> AbstractCacheState {
    if !s.reached {
        return s.clone();
    }
    effs.iter().fold(s.clone(), |s, e| transfer(&s, *e, p, cfg).unwrap())
}

/// State reachable from top by accesses and one join.
fn reachable(cfg: CacheConfig) -> impl Strategy<Value = AbstractCacheState> {
    (prop::collection::vec(effect(), 0..12), prop::collection::vec(effect(), 0..12)).prop_map(move |(a, b)| {
        let p = universe();
        let top = AbstractCacheState::top(NVARS as usize, &cfg);
        join(&run(&p, &cfg, &top, &a), &run(&p, &cfg, &top, &b))
    })
}

fn cache_cfg() -> impl Strategy<Value = CacheConfig> {
    (1u32..6, any::<bool>()).prop_map(|(n, s)| CacheConfig::new(n, s))
}

fn fuzzed(seed: u64) -> Program {
    gen_program(&FuzzSpec { seed, ..FuzzSpec::default() })
}

fn mode(rotating: bool) -> RegionMode {
    if rotating {
        RegionMode::Rotating
    } else {
        RegionMode::Havoc
    }
}

fn merge(rollback: bool) -> Merge {
    if rollback {
        Merge::RollbackMerge
    } else {
        Merge::JustInTime
    }
}

type Outcome = Result<(), TestError<String>>;

fn lift<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Outcome {
    r.map_err(|e| match e {
        TestError::Abort(why) => TestError::Abort(why),
        TestError::Fail(why, v) => TestError::Fail(why, format!("{v:?}")),
    })
}

pub fn lattice_laws() -> Outcome {
    let s = cache_cfg().prop_flat_map(|cfg| (raw_state(cfg), raw_state(cfg), raw_state(cfg)));
    lift(runner().run(&s, |(a, b, c)| {
        let ab = join(&a, &b);
        prop_assert_eq!(&ab, &join(&b, &a));
        prop_assert_eq!(join(&ab, &c), join(&a, &join(&b, &c)));
        prop_assert_eq!(join(&a, &a), a.clone());
        prop_assert_eq!(join(&a, &AbstractCacheState::bottom()), a.clone());
        prop_assert!(leq(&a, &ab) && leq(&b, &ab));
        if leq(&a, &c) && leq(&b, &c) {
            prop_assert!(leq(&ab, &c));
        }
        prop_assert_eq!(leq(&a, &b), ab == b);
        prop_assert!(leq(&AbstractCacheState::bottom(), &a));
        Ok(())
    }))
}

pub fn transfer_monotone() -> Outcome {
    let s = cache_cfg().prop_flat_map(|cfg| {
        (Just(cfg), reachable(cfg), reachable(cfg), prop::collection::vec(effect(), 1..6))
    });
    lift(runner().run(&s, |(cfg, s1, s3, effs)| {
        let p = universe();
        let s2 = join(&s1, &s3);
        let t1 = run(&p, &cfg, &s1, &effs);
        let t2 = run(&p, &cfg, &s2, &effs);
        prop_assert!(leq(&t1, &t2), "{:?} vs {:?}", t1, t2);
        Ok(())
    }))
}

pub fn may_below_must() -> Outcome {
    let s = cache_cfg().prop_flat_map(|cfg| {
        (Just(cfg), raw_state(cfg), raw_state(cfg), prop::collection::vec(effect(), 0..10))
    });
    lift(runner().run(&s, |(cfg, s, t, effs)| {
        let p = universe();
        prop_assert!(s.well_formed(&cfg));
        let out = run(&p, &cfg, &s, &effs);
        prop_assert!(out.well_formed(&cfg));
        prop_assert!(join(&out, &t).well_formed(&cfg));
        Ok(())
    }))
}

pub fn rollback_join_monotone() -> Outcome {
    let s = (any::<u64>(), 2u32..6, any::<bool>(), 0u32..6);
    lift(runner().run(&s, |(seed, n, shadow, d)| {
        let p = fuzzed(seed);
        let cfg = CacheConfig::new(n, shadow);
        let s0 = p.block(p.entry).body.iter().fold(AbstractCacheState::top(p.num_vars(), &cfg), |s, i| match i {
            Instruction::Ref(v) => transfer(&s, AccessEffect::Known(*v), &p, &cfg).unwrap(),
            _ => s,
        });
        for b in p.block_ids() {
            let lo = rollback_join(&s0, b, d, &p, &cfg);
            let hi = rollback_join(&s0, b, d + 1, &p, &cfg);
            prop_assert!(leq(&s0, &lo));
            prop_assert!(leq(&lo, &hi), "block {:?} depth {}", b, d);
        }
        Ok(())
    }))
}

pub fn speculative_covers_baseline() -> Outcome {
    let s = (any::<u64>(), 2u32..6, any::<bool>(), 0u32..4, 0u32..4, any::<bool>(), any::<bool>(), any::<bool>());
    lift(runner().run(&s, |(seed, n, shadow, dh, extra, rollback, colors, rotating)| {
        let p = fuzzed(seed);
        let cache = CacheConfig::new(n, shadow);
        let mut spec = SpecConfig::new(dh, dh + extra, merge(rollback));
        spec.colors_enabled = colors;
        let base = analyze(&p, &EngineConfig::baseline(cache).with_region_mode(mode(rotating))).unwrap();
        let sp = analyze(&p, &EngineConfig::speculative(cache, spec).with_region_mode(mode(rotating))).unwrap();
        for (b, s) in base.states.iter().zip(&sp.states) {
            if rotating {
                // Rotating counters advance differently; only reachability carries over.
                prop_assert!(!b.reached || s.reached);
            } else {
                prop_assert!(leq(b, s));
            }
        }
        Ok(())
    }))
}

pub fn zero_depth_is_baseline() -> Outcome {
    let s = (any::<u64>(), 2u32..6, any::<bool>(), any::<bool>(), any::<bool>());
    lift(runner().run(&s, |(seed, n, shadow, rollback, rotating)| {
        let p = fuzzed(seed);
        let cache = CacheConfig::new(n, shadow);
        let base = analyze(&p, &EngineConfig::baseline(cache).with_region_mode(mode(rotating))).unwrap();
        let spec = SpecConfig::new(0, 0, merge(rollback));
        let sp = analyze(&p, &EngineConfig::speculative(cache, spec).with_region_mode(mode(rotating))).unwrap();
        prop_assert_eq!(&base.states, &sp.states);
        prop_assert_eq!(&base.out_states, &sp.out_states);
        prop_assert_eq!(&base.per_site_in, &sp.per_site_in);
        prop_assert!(sp.slots.iter().flatten().all(|s| !s.reached));
        Ok(())
    }))
}

#[allow(dead_code)]
pub fn all() -> Vec<(&'static str, fn() -> Outcome)> {
    vec![
        ("lattice laws", lattice_laws),
        ("transfer monotonicity", transfer_monotone),
        ("may <= must", may_below_must),
        ("rollback_join depth monotonicity", rollback_join_monotone),
        ("baseline <= speculative", speculative_covers_baseline),
        ("zero depths degenerate", zero_depth_is_baseline),
    ]
}
