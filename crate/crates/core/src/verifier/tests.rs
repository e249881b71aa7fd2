use super::*;
use crate::frontend::load_program;
use crate::product::{build_cross_product, build_semi_product, Candidate};
use crate::taint::{analyze, TaintMap};

fn cfg(mode: Mode) -> VerifierConfig {
    VerifierConfig::new(Width::W4, mode)
}

fn count(set: &VcSet, kind: VcKind) -> usize {
    set.vcs.iter().filter(|v| v.kind == kind).count()
}

#[test]
fn loop_free_product_has_one_vc_per_guard() {
    let p = load_program(
        "def main(sec k, pub p){ var a, b; a := k & 1; if a then skip; fi b := p; if b then skip; fi return; }",
    )
    .unwrap();
    let pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    let set = gen_vcs(&pp, Width::W4, &GenOptions::new(Mode::Invariant)).unwrap();
    assert_eq!(pp.guards.len(), 2);
    assert_eq!(set.vcs.len(), 2);
    assert_eq!(count(&set, VcKind::GuardValidity), 2);
}

#[test]
fn loop_with_two_candidates_and_three_guards() {
    let p = load_program(
        "def main(sec k, pub n){ var i, t, c; t := i < n; while t do i := i + 1; t := i < n; od c := k & 1; if c then skip; fi return; }",
    )
    .unwrap();
    let pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    assert_eq!(pp.guards.len(), 3);
    assert_eq!(pp.candidates.values().map(Vec::len).sum::<usize>(), 2);
    let set = gen_vcs(&pp, Width::W4, &GenOptions::new(Mode::Invariant)).unwrap();
    assert_eq!(count(&set, VcKind::InvariantInit), 2);
    assert_eq!(count(&set, VcKind::InvariantInductive), 2);
    assert_eq!(count(&set, VcKind::GuardValidity), 3);
}

#[test]
fn zero_unrolling_hits_the_bound() {
    let p =
        load_program("def main(pub n){ var i, t; t := i < n; while t do i := i + 1; t := i < n; od return; }").unwrap();
    let pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    let c = cfg(Mode::Bmc { unroll: 0 });
    let set = gen_vcs(&pp, Width::W4, &GenOptions::new(c.mode)).unwrap();
    let verdicts = check_vcs(&set, &c).unwrap();
    let unwind: Vec<_> =
        set.vcs.iter().zip(&verdicts).filter(|(vc, _)| vc.kind == VcKind::UnwindingCheck).map(|(_, v)| v).collect();
    assert_eq!(unwind.len(), 1);
    assert!(matches!(unwind[0], Verdict::Invalid(_)));
    // every guard holds but the bound was hit, so nothing counts as proved
    let r = verify_guards(&pp, &c).unwrap();
    assert!(r.guards.values().all(|v| *v == Verdict::Unknown(UnknownReason::UnwindBoundHit)));
    // 16 iterations suffice at width 4
    let r = verify_guards(&pp, &cfg(Mode::Bmc { unroll: 16 })).unwrap();
    assert!(r.guards.values().all(Verdict::is_valid));
}

#[test]
fn untainted_counter_candidate_is_confirmed() {
    let p = load_program(
        "def main(sec k, pub n){ var i, t, s; t := i < n; while t do s := s + k; i := i + 1; t := i < n; od return; }",
    )
    .unwrap();
    let mut pp = build_semi_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    prune_invariants(&mut pp, &cfg(Mode::Invariant)).unwrap();
    let cands = pp.candidates.values().next().unwrap();
    let texts: Vec<_> = cands.iter().map(|c| (crate::frontend::expr_text(&c.predicate), c.status)).collect();
    assert_eq!(
        texts,
        [("!b$i".to_string(), CandidateStatus::Confirmed), ("!b$t".to_string(), CandidateStatus::Confirmed)]
    );
    let r = verify_guards(&pp, &cfg(Mode::Invariant)).unwrap();
    assert!(r.guards.values().all(Verdict::is_valid), "{:?}", r.guards);
}

#[test]
fn secret_copy_candidate_is_dropped() {
    let p = load_program(
        "def main(sec k, pub n){ var i, y, t; t := i < n; while t do y := k; i := i + 1; t := i < n; od return; }",
    )
    .unwrap();
    let mut pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    let (l, mut cands) = pp.candidates.iter().next().map(|(l, c)| (*l, c.clone())).unwrap();
    let pred =
        crate::ast::Expr::binary(crate::ast::BinOp::Eq, crate::ast::Expr::var("y"), crate::ast::Expr::var("sh$y"));
    cands.push(Candidate { predicate: pred, status: CandidateStatus::Candidate });
    pp.set_candidates(BTreeMap::from([(l, cands)]));
    prune_invariants(&mut pp, &cfg(Mode::Invariant)).unwrap();
    let statuses: Vec<_> = pp.candidates[&l].iter().map(|c| c.status).collect();
    assert_eq!(statuses.last(), Some(&CandidateStatus::Dropped));
    assert!(statuses[..statuses.len() - 1].iter().all(|s| *s == CandidateStatus::Confirmed));
}

#[test]
fn no_candidates_means_no_invariant_vcs() {
    let p = load_program("def main(sec k){ var x; x := k; return; }").unwrap();
    let mut pp = build_semi_product(&p, &analyze(&p)).unwrap();
    assert_eq!(prune_invariants(&mut pp, &cfg(Mode::Invariant)).unwrap(), 1);
    let set = gen_vcs(&pp, Width::W4, &GenOptions { guards: false, ..GenOptions::new(Mode::Invariant) }).unwrap();
    assert!(set.vcs.is_empty());
}

#[test]
fn copy_of_secret_differs_at_width_one() {
    let p = load_program("def main(sec k){ var x; x := k; if x then skip; fi return; }").unwrap();
    let pp = build_cross_product(&p, &analyze(&p)).unwrap();
    let c = VerifierConfig::new(Width::custom(1).unwrap(), Mode::Invariant);
    let r = verify_guards(&pp, &c).unwrap();
    let Verdict::Invalid(m) = r.guards.values().next().unwrap() else { panic!("{:?}", r.guards) };
    assert_eq!((m.get("k"), m.get("sh$k")), (0, 1));
}

#[test]
fn xor_cancellation_separates_the_products() {
    let p = load_program("def main(sec k, pub p){ var x; x := k ^ p ^ k; if x then skip; fi return; }").unwrap();
    let t = analyze(&p);
    let semi = verify_guards(&build_semi_product(&p, &t).unwrap(), &cfg(Mode::Invariant)).unwrap();
    assert!(matches!(semi.guards.values().next(), Some(Verdict::Invalid(_))));
    let cross = verify_guards(&build_cross_product(&p, &t).unwrap(), &cfg(Mode::Invariant)).unwrap();
    assert_eq!(cross.guards.values().collect::<Vec<_>>(), [&Verdict::Valid]);
}

#[test]
fn leaky_branch_replays() {
    let p = load_program("def main(sec k, pub p){ var t; t := k & 1; if t then skip; fi return; }").unwrap();
    let pp = build_cross_product(&p, &analyze(&p)).unwrap();
    let r = verify_guards(&pp, &cfg(Mode::Invariant)).unwrap();
    let Some(Verdict::Invalid(m)) = r.guards.values().next() else { panic!() };
    let Replay::ConfirmedLeak(w) = witness_replay(&p, Width::W4, m, 1000).unwrap() else { panic!("spurious") };
    assert_eq!(w.divergence, 0);
    assert_eq!(w.inputs1["p"], w.inputs2["p"]);
}

#[test]
fn havoc_counterexample_is_spurious() {
    // x == sh$x holds on every real run, but without an invariant for x the loop havocs it
    let p = load_program(
        "def main(sec k, pub n){ var i, t, x; t := i < n; while t do x := x + 1; i := i + 1; t := i < n; od if x then skip; fi return; }",
    )
    .unwrap();
    let mut pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    prune_invariants(&mut pp, &cfg(Mode::Invariant)).unwrap();
    let r = verify_guards(&pp, &cfg(Mode::Invariant)).unwrap();
    let bad: Vec<_> =
        r.guards.values().filter_map(|v| if let Verdict::Invalid(m) = v { Some(m) } else { None }).collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(witness_replay(&p, Width::W4, bad[0], 1000).unwrap(), Replay::Spurious);
    let bmc = verify_guards(&pp, &cfg(Mode::Bmc { unroll: 16 })).unwrap();
    assert!(bmc.guards.values().all(Verdict::is_valid));
}

#[test]
fn while_source_needs_both_guards() {
    // the loop condition is public on entry but becomes secret after one iteration
    let p =
        load_program("def main(sec k, pub n){ var t; t := n & 1; while t do t := k & 1; t := 0; od return; }").unwrap();
    let pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    let r = verify_guards(&pp, &cfg(Mode::Bmc { unroll: 2 })).unwrap();
    assert!(r.sources.values().all(Verdict::is_valid));

    let p = load_program("def main(sec k, pub n){ var t; t := n & 1; while t do t := k & 1; od return; }").unwrap();
    let pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    let r = verify_guards(&pp, &cfg(Mode::Bmc { unroll: 3 })).unwrap();
    let guards: Vec<_> = pp
        .guards
        .iter()
        .filter(|(_, g)| g.source.var == "t" && g.kind == crate::frontend::SourceKind::LoopCond)
        .collect();
    assert_eq!(guards.len(), 2);
    let key = &guards[0].1.source;
    assert!(!r.sources[key].is_valid());
}

#[test]
fn arrays_and_calls_are_inlined() {
    let p = load_program(
        "def get(a[4], i){ var r; r := a[i]; return r; } \
         def main(pub tab[4], sec k){ var x, y, z; x := k & 3; y := get(tab, x); z := y & 0; if z then skip; fi return; }",
    )
    .unwrap();
    let pp = build_cross_product(&p, &TaintMap::all_tainted(&p)).unwrap();
    let r = verify_guards(&pp, &cfg(Mode::Invariant)).unwrap();
    let mut by_var: BTreeMap<String, bool> = BTreeMap::new();
    for (k, v) in &r.sources {
        by_var.insert(k.var.clone(), v.is_valid());
    }
    // the secret index leaks, the masked result does not
    assert_eq!(by_var.get("z"), Some(&true));
    assert!(by_var.values().any(|v| !v));
}

#[test]
fn inline_cap_is_enforced() {
    let p = load_program("def main(sec k){ var x; x := k * k; x := x * k; x := x + k; if x then skip; fi return; }")
        .unwrap();
    let pp = build_cross_product(&p, &analyze(&p)).unwrap();
    let c = VerifierConfig { max_terms: 3, ..cfg(Mode::Invariant) };
    assert!(matches!(verify_guards(&pp, &c), Err(VerifierError::InlineBlowup { .. })));
}
