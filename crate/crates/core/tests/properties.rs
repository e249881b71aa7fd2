mod common;

use common::*;
use ctprover_core::corpus::{generate_source, Features};
use ctprover_core::frontend::{load_program, parse, pretty_print};
use ctprover_core::pipeline::{report_json, run_pipeline, FinalVerdict, PipelineConfig};
use ctprover_core::product::{build_cross_product, build_semi_product};
use ctprover_core::semantics::{oracle_check_ct, OracleLimits, Width};
use ctprover_core::taint::{analyze, DenseAnalyzer, TaintMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg() -> PipelineConfig {
    PipelineConfig { width: Width::W4, ..PipelineConfig::default() }
}

#[test]
fn sparse_matches_dense_on_corpus() {
    for (name, p) in corpus_programs() {
        assert_eq!(analyze(&p), DenseAnalyzer::new(&p).run(), "{name}");
    }
}

#[test]
fn corpus_products_project() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, p) in corpus_programs() {
        let tmap = analyze(&p);
        for pp in [build_semi_product(&p, &tmap).unwrap(), build_cross_product(&p, &tmap).unwrap()] {
            for _ in 0..4 {
                let inputs = random_inputs(&p, Width::W4, &mut rng);
                if let Some(m) = projection_mismatch(&p, &pp, &inputs, Width::W4, &mut rng) {
                    panic!("{name}: {m}");
                }
            }
        }
    }
}

#[test]
fn corpus_defuse_covers_dynamic_reads() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, p) in corpus_programs() {
        for _ in 0..8 {
            let inputs = random_inputs(&p, Width::W4, &mut rng);
            if let Some(m) = defuse_mismatch(&p, &inputs, Width::W4) {
                panic!("{name}: {m}");
            }
        }
    }
}

#[test]
fn pipeline_is_deterministic() {
    for name in ["example2_chacha_ctx", "xor_cancel", "leaky_prime_leading_zeros"] {
        let p = corpus_program(name);
        let a = run_pipeline(&p, name, &cfg()).unwrap();
        let b = run_pipeline(&p, name, &cfg()).unwrap();
        assert_eq!(report_json(&a, false), report_json(&b, false));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_text_round_trips(seed in any::<u64>(), mask in 0u32..8) {
        let text = generate_source(seed, 6, Features::from_mask(mask));
        let ast = parse(&text).unwrap();
        prop_assert_eq!(parse(&pretty_print(&ast)).unwrap(), ast);
        let p = load_program(&text).unwrap();
        let printed = pretty_print(&p);
        prop_assert_eq!(pretty_print(&load_program(&printed).unwrap()), printed);
    }

    #[test]
    fn sparse_matches_dense_on_generated(seed in any::<u64>()) {
        let p = fuzz_program(seed);
        prop_assert_eq!(analyze(&p), DenseAnalyzer::new(&p).run());
    }

    #[test]
    fn sparse_facts_are_within_everything_tainted(seed in any::<u64>()) {
        let p = fuzz_program(seed);
        let top = TaintMap::all_tainted(&p);
        for (l, facts) in &analyze(&p).at {
            prop_assert!(facts.is_subset(&top.at[l]), "label {}", l);
        }
    }

    #[test]
    fn generated_products_project(seed in any::<u64>(), iseed in any::<u64>()) {
        let p = fuzz_program(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(iseed);
        let inputs = random_inputs(&p, Width::W4, &mut rng);
        for tmap in [analyze(&p), TaintMap::all_tainted(&p)] {
            for pp in [build_semi_product(&p, &tmap).unwrap(), build_cross_product(&p, &tmap).unwrap()] {
                let m = projection_mismatch(&p, &pp, &inputs, Width::W4, &mut rng);
                prop_assert!(m.is_none(), "{}", m.unwrap());
            }
        }
    }

    #[test]
    fn defuse_covers_generated_reads(seed in any::<u64>(), iseed in any::<u64>()) {
        let p = fuzz_program(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(iseed);
        let inputs = random_inputs(&p, Width::W4, &mut rng);
        let m = defuse_mismatch(&p, &inputs, Width::W4);
        prop_assert!(m.is_none(), "{}", m.unwrap());
    }

    #[test]
    fn resolved_sources_agree_across_secrets(seed in any::<u64>(), iseed in any::<u64>()) {
        let p = fuzz_program(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(iseed);
        let a = random_inputs(&p, Width::W4, &mut rng);
        for _ in 0..4 {
            let b = vary_secrets(&p, &a, Width::W4, &mut rng);
            let m = resolved_source_mismatch(&p, &a, &b, Width::W4);
            prop_assert!(m.is_none(), "{}", m.unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_agrees_with_oracle(seed in any::<u64>()) {
        let p = fuzz_program(seed);
        let report = run_pipeline(&p, "fuzz", &cfg()).unwrap();
        let c = &report.counts;
        prop_assert!(c.step2.unwrap_or(c.unresolved_after_step1) <= c.step1);
        prop_assert!(c.step3.unwrap_or(0) <= c.step2.unwrap_or(c.step1));
        let limits = OracleLimits { max_runs: 20_000, ..OracleLimits::default() };
        let oracle = oracle_check_ct(&p, Width::W4, &limits).unwrap();
        let m = ctprover_core::corpus::oracle_mismatches(&p, &report, &oracle, FUEL);
        prop_assert!(m.is_empty(), "{:?}", m);
        if report.verdict == FinalVerdict::Proved {
            prop_assert!(oracle.is_secure());
        }
    }

    #[test]
    fn ablation_keeps_confirmed_leaks(seed in any::<u64>()) {
        let p = fuzz_program(seed);
        let full = run_pipeline(&p, "fuzz", &cfg()).unwrap();
        let ablated = run_pipeline(&p, "fuzz", &PipelineConfig { no_step2: true, ..cfg() }).unwrap();
        prop_assert_eq!(ablated.counts.step2, None);
        if full.verdict != FinalVerdict::Inconclusive && ablated.verdict != FinalVerdict::Inconclusive {
            let keys = |r: &ctprover_core::pipeline::Report| r.confirmed_leaks().map(|s| s.key()).collect::<Vec<_>>();
            prop_assert_eq!(full.verdict, ablated.verdict);
            prop_assert_eq!(keys(&full), keys(&ablated));
        }
    }
}
