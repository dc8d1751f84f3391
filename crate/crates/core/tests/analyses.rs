use std::path::PathBuf;

use specache::analyses::{build_report, classify, count_misses, detect_leaks, render_text, LeakKind, Verdict};
use specache::config::{RegionMode, Strategy};
use specache::domain::CacheConfig;
use specache::fixpoint::{analyze, EngineConfig};
use specache::ir::parse_program;
use specache::speculation::SpecConfig;
use specache::Program;

fn corpus(name: &str) -> Program {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name);
    parse_program(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn spec(n: u32, dh: u32, dm: u32, s: Strategy) -> EngineConfig {
    EngineConfig::speculative(CacheConfig::new(n, true), SpecConfig::new(dh, dm, s))
}

#[test]
fn final_access_flips_under_speculation() {
    let p = corpus("mispredict_evicts.cfgir");
    let base = build_report(&analyze(&p, &EngineConfig::baseline(CacheConfig::new(4, true))).unwrap(), &p);
    assert_eq!(base.verdict_at("tail", 0).unwrap().overall(), Verdict::MustHit);
    for s in [Strategy::JustInTime, Strategy::RollbackMerge] {
        let r = build_report(&analyze(&p, &spec(4, 1, 1, s)).unwrap(), &p);
        assert_eq!(r.verdict_at("tail", 0).unwrap().overall(), Verdict::MayMiss, "{s}");
        assert_eq!(r.miss_count + r.spec_miss_count, base.miss_count + base.spec_miss_count + 1);
    }
}

#[test]
fn jit_slots_show_up_as_speculative_verdicts() {
    let p = corpus("mispredict_evicts.cfgir");
    let r = analyze(&p, &spec(4, 1, 1, Strategy::JustInTime)).unwrap();
    let v = classify(&r, &p);
    let left = v.iter().find(|v| v.block == "left").unwrap();
    assert_eq!(left.speculative.len(), 1);
    // Unreached slots produce no entries; the entry block has none.
    assert!(v.iter().find(|v| v.block == "top").unwrap().speculative.is_empty());
}

#[test]
fn spec_miss_counts_hits_that_only_speculation_breaks() {
    // `b` hits normally in `y`, but the wrong path's `c`, `d` evict it in the slot.
    let p = parse_program(
        "var a b c d\nentry s\n\
         block s: ref a; ref b; branch ? x : y\n\
         block x: ref c; ref d; goto j\n\
         block y: ref b; goto j\n\
         block j: exit\n",
    )
    .unwrap();
    let r = analyze(&p, &spec(2, 2, 2, Strategy::JustInTime)).unwrap();
    let v = classify(&r, &p);
    let y = v.iter().find(|v| v.block == "y").unwrap();
    assert_eq!(y.normal, Verdict::MustHit);
    assert!(y.speculative.iter().any(|s| s.verdict == Verdict::MayMiss));
    let (miss, spec_miss) = count_misses(&v);
    assert_eq!(spec_miss, 1);
    assert!(miss >= 3);
}

#[test]
fn leak_appears_only_under_speculation() {
    let p = corpus("sbox_leak.cfgir");
    let base = analyze(&p, &EngineConfig::baseline(CacheConfig::new(4, true))).unwrap();
    let leaks = detect_leaks(&base, &p);
    assert_eq!(leaks.len(), 1);
    assert!(!leaks[0].leaking);
    assert_eq!(leaks[0].kind, LeakKind::None);

    let r = analyze(&p, &spec(4, 20, 1, Strategy::JustInTime)).unwrap();
    let leaks = detect_leaks(&r, &p);
    assert!(leaks[0].leaking);
    assert_eq!(leaks[0].kind, LeakKind::Mixed);
    assert_eq!(leaks[0].possibly_evicted_lines, ["sbox.0"]);
    assert_eq!(leaks[0].must_hit_lines, ["sbox.1"]);

    // A long window runs into the secret access itself.
    let r = analyze(&p, &spec(4, 20, 200, Strategy::JustInTime)).unwrap();
    assert_eq!(detect_leaks(&r, &p)[0].kind, LeakKind::AllPossiblyMissing);
}

#[test]
fn unreachable_secret_access_is_reported_as_such() {
    let p = parse_program(
        "var a\nregion t size=2\nentry s\n\
         block s: ref a; exit\n\
         block dead: secret_ref t; exit\n",
    )
    .unwrap();
    let r = analyze(&p, &EngineConfig::baseline(CacheConfig::new(4, true))).unwrap();
    let l = detect_leaks(&r, &p);
    assert_eq!(l[0].kind, LeakKind::Unreachable);
    assert!(!l[0].leaking);
    assert_eq!(classify(&r, &p).iter().find(|v| v.block == "dead").unwrap().normal, Verdict::Unreachable);
}

#[test]
fn rotating_mode_classifies_selected_line_and_warns() {
    let p = corpus("quantl_trace.cfgir");
    let e = EngineConfig::baseline(CacheConfig::new(16, true)).with_region_mode(RegionMode::Rotating);
    let r = analyze(&p, &e).unwrap();
    let rep = build_report(&r, &p);
    assert!(rep.warnings.iter().any(|w| w.contains("rotating")));
    let v = rep.verdict_at("bb3@1", 0).unwrap();
    assert_eq!(v.lines, ["decis_levl.1"]);
    let h = EngineConfig::baseline(CacheConfig::new(16, true));
    let rep = build_report(&analyze(&p, &h).unwrap(), &p);
    assert!(rep.warnings.is_empty());
    assert_eq!(rep.verdict_at("bb3@1", 0).unwrap().normal, Verdict::MayMiss);
}

#[test]
fn report_renders_as_json_and_text() {
    let p = corpus("sbox_leak.cfgir");
    let rep = build_report(&analyze(&p, &spec(4, 20, 1, Strategy::RollbackMerge)).unwrap(), &p);
    let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(json["config"]["strategy"], "rollback");
    assert_eq!(json["leaks"][0]["kind"], "mixed");
    assert!(json["miss_count"].is_u64() && json["iterations"].is_u64());
    let text = render_text(&rep);
    assert!(text.contains("#Miss") && text.contains("#SpMiss") && text.contains("#Iteration"));
    assert!(text.contains("Leak Detected"));
}
