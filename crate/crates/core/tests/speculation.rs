use specache::config::Strategy;
use specache::domain::{leq, render_state, state_from_buckets, transfer, AbstractCacheState, AccessEffect, CacheConfig};
use specache::ir::parse_program;
use specache::speculation::{build_spec_plan, inject, rollback_join, select_depth, Color, SpecConfig};
use specache::Program;

const DIAMONDS: &str = "var a b c d\nentry e\n\
    block e: ref a; branch a ? l : r\n\
    block l: ref b; branch b ? ll : lr\n\
    block ll: ref c; goto lj\n\
    block lr: nop; goto lj\n\
    block lj: goto j\n\
    block r: ref d; goto j\n\
    block j: ref a; exit\n";

fn prog(src: &str) -> Program {
    parse_program(src).unwrap()
}

#[test]
fn plan_colors_branches_in_block_order_with_postdominator_stops() {
    let p = prog(DIAMONDS);
    let plan = build_spec_plan(&p);
    assert_eq!(plan.num_colors(), 2);
    let id = |n: &str| p.block_id(n).unwrap();
    let outer = plan.entry_for(id("e")).unwrap();
    assert_eq!(outer.color, Color(1));
    assert_eq!(outer.stop, Some(id("j")));
    let inner = plan.entry_for(id("l")).unwrap();
    assert_eq!(inner.color, Color(2));
    assert_eq!(inner.stop, Some(id("lj")));
    assert!(plan.is_stop(id("j")) && plan.is_stop(id("lj")));
    assert!(!plan.is_stop(id("r")));
    // (wrong, correct) pairs.
    assert_eq!(outer.directions(), [(id("l"), id("r")), (id("r"), id("l"))]);
}

#[test]
fn depth_depends_on_condition_hits() {
    let p = prog(DIAMONDS);
    let cfg = CacheConfig::new(4, true);
    let spec = SpecConfig::new(3, 9, Strategy::JustInTime);
    let top = AbstractCacheState::top(p.num_vars(), &cfg);
    let a = p.var_id("a").unwrap();
    let s = transfer(&top, AccessEffect::Known(a), &p, &cfg).unwrap();
    assert_eq!(select_depth(&[a], &s, &cfg, &spec), 3);
    assert_eq!(select_depth(&[a], &top, &cfg, &spec), 9);
    assert_eq!(select_depth(&[a, p.var_id("b").unwrap()], &s, &cfg, &spec), 9);
    // No condition variables: nothing can miss.
    assert_eq!(select_depth(&[], &top, &cfg, &spec), 3);
}

#[test]
fn rollback_join_accumulates_prefixes() {
    let p = prog("var a b c d e\nentry b1\n\
        block b1: ref a; ref b; ref c; branch ? b2 : b3\n\
        block b2: ref d; goto b4\n\
        block b3: ref e; goto b4\n\
        block b4: ref a; exit\n");
    let cfg = CacheConfig::new(4, false);
    let s0 = state_from_buckets(&p, &cfg, "[c,b,a]", None).unwrap();
    let b3 = p.block_id("b3").unwrap();
    assert_eq!(rollback_join(&s0, b3, 0, &p, &cfg), s0);
    let d1 = rollback_join(&s0, b3, 1, &p, &cfg);
    assert_eq!(render_state(&d1, &p, &cfg), "[{},c,b,a]");
    // The window runs past the join into b4.
    let d2 = rollback_join(&s0, b3, 2, &p, &cfg);
    // e then a: s0, [e,c,b,a] and [a,e,c,b] joined.
    assert_eq!(render_state(&d2, &p, &cfg), "[{},{},c,{a,b}]");
    assert!(leq(&d1, &d2));
    // Past program exit the result stops changing.
    assert_eq!(rollback_join(&s0, b3, 50, &p, &cfg), d2);
    assert_eq!(rollback_join(&AbstractCacheState::bottom(), b3, 5, &p, &cfg), AbstractCacheState::bottom());
}

#[test]
fn rollback_join_fans_out_at_inner_branches_and_survives_loops() {
    let p = prog("var a b c\nentry s\n\
        block s: ref a; goto h\n\
        block h: branch ? x : y\n\
        block x: ref b; goto h\n\
        block y: ref c; exit\n");
    let cfg = CacheConfig::new(3, true);
    let top = AbstractCacheState::top(3, &cfg);
    let s0 = transfer(&top, AccessEffect::Known(p.var_id("a").unwrap()), &p, &cfg).unwrap();
    let h = p.block_id("h").unwrap();
    let mut prev = s0.clone();
    for d in 1..8 {
        let rj = rollback_join(&s0, h, d, &p, &cfg);
        assert!(leq(&prev, &rj), "not monotone at {d}");
        assert!(rj.well_formed(&cfg));
        prev = rj;
    }
    // Both b and c may have been loaded.
    assert_eq!(prev.may_age(p.var_id("b").unwrap(), &cfg), 1);
    assert_eq!(prev.may_age(p.var_id("c").unwrap(), &cfg), 1);
}

#[test]
fn injection_targets_slot_or_normal_state() {
    let p = prog(DIAMONDS);
    let plan = build_spec_plan(&p);
    let e = p.block_id("e").unwrap();
    let entry = plan.entry_for(e).unwrap();
    let (wrong, correct) = entry.directions()[0];
    assert_ne!(wrong, correct);
    let st = AbstractCacheState::top(p.num_vars(), &CacheConfig::new(4, false));
    let jit = inject(entry, correct, st.clone(), &SpecConfig::new(1, 1, Strategy::JustInTime));
    assert_eq!((jit.node, jit.slot), (correct, Some(entry.color)));
    let rb = inject(entry, correct, st, &SpecConfig::new(1, 1, Strategy::RollbackMerge));
    assert_eq!((rb.node, rb.slot), (correct, None));
}
