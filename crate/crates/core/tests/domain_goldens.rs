use specache::domain::{
    bucket_sets, join, leq, parse_buckets, render_state, state_from_buckets, transfer, AbstractCacheState,
    AccessEffect, CacheConfig,
};
use specache::ir::ProgramBuilder;
use specache::Program;

fn vars(names: &[&str]) -> Program {
    let mut b = ProgramBuilder::new();
    for n in names {
        b.var(n);
    }
    let bb = b.block("b0");
    b.entry(bb);
    b.build().unwrap()
}

fn st(p: &Program, cfg: &CacheConfig, must: &str, may: Option<&str>) -> AbstractCacheState {
    state_from_buckets(p, cfg, must, may).unwrap()
}

fn access(p: &Program, cfg: &CacheConfig, s: &AbstractCacheState, v: &str) -> AbstractCacheState {
    transfer(s, AccessEffect::Known(p.var_id(v).unwrap()), p, cfg).unwrap()
}

fn assert_rows(p: &Program, cfg: &CacheConfig, s: &AbstractCacheState, must: &str, may: Option<&str>) {
    assert_eq!(bucket_sets(s, p, cfg, true, false), parse_buckets(must).unwrap(), "must row");
    if let Some(may) = may {
        let want: Vec<_> = parse_buckets(may)
            .unwrap()
            .into_iter()
            .map(|b| b.into_iter().map(|x| if x.starts_with('∃') { x } else { format!("∃{x}") }).collect())
            .collect();
        assert_eq!(bucket_sets(s, p, cfg, false, true), want, "may row");
    }
}

#[test]
fn lru_transfer_on_miss_and_hit() {
    let cfg = CacheConfig::new(4, false);
    let p = vars(&["u1", "u2", "u3", "u4", "v"]);
    let s = st(&p, &cfg, "[u1,u2,u3,u4]", None);
    let out = access(&p, &cfg, &s, "v");
    assert_eq!(render_state(&out, &p, &cfg), "[v,u1,u2,u3]");
    assert_eq!(out.must[p.var_id("u4").unwrap().idx()], 5);

    let p = vars(&["u", "v", "w1", "w2"]);
    let s = st(&p, &cfg, "[u,v,w1,w2]", None);
    assert_eq!(render_state(&access(&p, &cfg, &s, "v"), &p, &cfg), "[v,u,w1,w2]");
}

#[test]
fn join_keeps_maximum_must_and_minimum_may() {
    let p = vars(&["x", "y", "z", "k", "t"]);
    let cfg = CacheConfig::new(4, false);
    let a = st(&p, &cfg, "[x,y,z,k]", None);
    let b = st(&p, &cfg, "[t,z,x,k]", None);
    let j = join(&a, &b);
    assert_eq!(render_state(&j, &p, &cfg), "[{},{},{x,z},k]");
    assert!(leq(&a, &j) && leq(&b, &j));

    let cfg = CacheConfig::new(4, true);
    let a = st(&p, &cfg, "[x,y,z,k]", Some("[x,y,z,k]"));
    let b = st(&p, &cfg, "[t,z,x,k]", Some("[t,z,x,k]"));
    let j = join(&a, &b);
    assert_eq!(render_state(&j, &p, &cfg), "[{∃x,∃t},{∃y,∃z},{x,z},{∃k,k}]");
    assert!(leq(&a, &j) && leq(&b, &j));
}

#[test]
fn bottom_and_top() {
    let p = vars(&["a", "b"]);
    let cfg = CacheConfig::new(4, true);
    let top = AbstractCacheState::top(2, &cfg);
    assert!(top.must.iter().all(|&a| a == 5));
    assert!(leq(&AbstractCacheState::bottom(), &top));
    assert!(!leq(&top, &AbstractCacheState::bottom()));
    assert_eq!(join(&AbstractCacheState::bottom(), &top), top);
    assert!(transfer(&AbstractCacheState::bottom(), AccessEffect::None, &p, &cfg).is_err());
}

const XZ_MUST: &str = "[{},{},{x,z},k]";
const XZ_MAY: &str = "[{∃x,∃t},{∃y,∃z},{},{∃k}]";

#[test]
fn original_transfer_rows() {
    let p = vars(&["x", "y", "z", "k", "t"]);
    let cfg = CacheConfig::new(4, false);
    let s = st(&p, &cfg, XZ_MUST, None);
    let rows = [
        ("x", "[x,{},z,k]"),
        ("z", "[z,{},x,k]"),
        ("k", "[k,{},{},{x,z}]"),
        ("y", "[y,{},{},{x,z}]"),
        ("t", "[t,{},{},{x,z}]"),
    ];
    for (v, want) in rows {
        assert_rows(&p, &cfg, &access(&p, &cfg, &s, v), want, None);
    }
}

#[test]
fn shadow_transfer_rows() {
    let p = vars(&["x", "y", "z", "k", "t"]);
    let cfg = CacheConfig::new(4, true);
    let s = st(&p, &cfg, XZ_MUST, Some(XZ_MAY));
    let rows = [
        ("x", "[{x},{},{z},{k}]", "[{∃x},{∃t,∃y,∃z},{},{∃k}]"),
        // Ties age: ∃y shares age 2 with ∃z, so it moves to 3.
        ("z", "[{z},{},{x},{k}]", "[{∃z},{∃t,∃x},{∃y},{∃k}]"),
        ("k", "[{k},{},{},{x,z}]", "[{∃k},{∃x,∃t},{∃y,∃z},{}]"),
        ("y", "[{y},{},{},{x,z}]", "[{∃y},{∃x,∃t},{∃z},{∃k}]"),
        ("t", "[{t},{},{},{x,z}]", "[{∃t},{∃x,∃y,∃z},{},{∃k}]"),
    ];
    for (v, must, may) in rows {
        let out = access(&p, &cfg, &s, v);
        assert!(out.well_formed(&cfg));
        assert_rows(&p, &cfg, &out, must, Some(may));
    }
}

/// The unrolled two-iteration diamond `ref a; {ref b | ref c}; {ref b | ref c}`.
#[test]
fn unrolled_diamond_trace() {
    let p = vars(&["a", "b", "c"]);
    for shadow in [false, true] {
        let cfg = CacheConfig::new(4, shadow);
        let s0 = AbstractCacheState::top(3, &cfg);
        let s1 = access(&p, &cfg, &s0, "a");
        let s2 = access(&p, &cfg, &s1, "b");
        let s3 = access(&p, &cfg, &s1, "c");
        let s4 = join(&s2, &s3);
        let s5 = access(&p, &cfg, &s4, "b");
        let s6 = access(&p, &cfg, &s4, "c");
        let s7 = join(&s5, &s6);
        let s8 = access(&p, &cfg, &s7, "b");
        let s9 = access(&p, &cfg, &s7, "c");
        let s10 = join(&s8, &s9);
        let trace = [&s0, &s1, &s2, &s3, &s4, &s5, &s6, &s7, &s8, &s9, &s10];
        let original = [
            "[⊥,⊥,⊥,⊥]",
            "[a,⊥,⊥,⊥]",
            "[b,a,⊥,⊥]",
            "[c,a,⊥,⊥]",
            "[{},a,⊥,⊥]",
            "[b,{},a,⊥]",
            "[c,{},a,⊥]",
            "[{},{},a,⊥]",
            "[b,{},{},a]",
            "[c,{},{},a]",
            "[{},{},{},a]",
        ];
        let shadow_must = [
            "[⊥,⊥,⊥,⊥]",
            "[a,⊥,⊥,⊥]",
            "[b,a,⊥,⊥]",
            "[c,a,⊥,⊥]",
            "[{},a,⊥,⊥]",
            "[b,{},a,⊥]",
            "[c,{},a,⊥]",
            "[{},{},a,⊥]",
            "[b,{},a,⊥]",
            "[c,{},a,⊥]",
            "[{},{},a,⊥]",
        ];
        let shadow_may = [
            "[⊥,⊥,⊥,⊥]",
            "[{∃a},⊥,⊥,⊥]",
            "[{∃b},{∃a},⊥,⊥]",
            "[{∃c},{∃a},⊥,⊥]",
            "[{∃b,∃c},{∃a},⊥,⊥]",
            "[{∃b},{∃a,∃c},⊥,⊥]",
            "[{∃c},{∃a,∃b},⊥,⊥]",
            "[{∃b,∃c},{∃a},⊥,⊥]",
            "[{∃b},{∃a,∃c},{},⊥]",
            "[{∃c},{∃a,∃b},{},⊥]",
            "[{∃b,∃c},{∃a},{},⊥]",
        ];
        for (i, s) in trace.iter().enumerate() {
            if shadow {
                assert_rows(&p, &cfg, s, shadow_must[i], Some(shadow_may[i]));
            } else {
                assert_rows(&p, &cfg, s, original[i], None);
            }
        }
    }
}

#[test]
fn havoc_ages_everything_cached() {
    let mut b = ProgramBuilder::new();
    b.var("a");
    let r = b.region("r", 2);
    let bb = b.block("b0");
    b.entry(bb);
    let p = b.build().unwrap();
    let cfg = CacheConfig::new(3, true);
    let s = st(&p, &cfg, "[a,r.0,{}]", Some("[a,r.0,{}]"));
    let out = transfer(&s, AccessEffect::Havoc(r), &p, &cfg).unwrap();
    assert_eq!(out.must, vec![2, 3, 4]);
    assert_eq!(out.may.as_ref().unwrap(), &vec![1, 1, 1]);
    assert!(out.well_formed(&cfg));
}
