//! Cross-module invariants against brute-force references.

use detcap::ensemble_analysis::{exact_mean_t, QuenchedEvaluator};
use detcap::oracles::{oracle_conf_moments, oracle_quenched};
use detcap::{ConfigAlphabet, Configuration, FamilySpec, OracleBudget};
use proptest::prelude::*;

fn catalog(idx: usize) -> FamilySpec {
    let c = FamilySpec::catalog();
    c[idx % c.len()].clone()
}

fn feasible(spec: &FamilySpec, n: usize, r: usize) -> Option<detcap::SchemeFamily> {
    spec.build(n, r).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quenched_closed_forms_match_tuple_enumeration(
        idx in 0usize..6,
        n in 2usize..5,
        r in 1usize..5,
        probs in proptest::collection::vec(0.01f64..0.99, 4),
    ) {
        let spec = catalog(idx);
        let Some(fam) = feasible(&spec, n, r) else { return Ok(()) };
        let config = Configuration::from_probs_inferred(&probs[..n]).unwrap();
        let s = QuenchedEvaluator::new(&fam).unwrap().stats(&config).unwrap();
        let (t, p) = oracle_quenched(&fam, &config, &OracleBudget::default()).unwrap();
        prop_assert!((s.t_of_p - t).abs() < 1e-12, "{spec}: {} vs {t}", s.t_of_p);
        prop_assert!((s.s_of_p - p).abs() < 1e-12);
    }

    #[test]
    fn configuration_mean_matches_enumeration(
        idx in 0usize..6,
        n in 2usize..5,
        r in 1usize..4,
        v in proptest::collection::vec(0.05f64..0.95, 1..4),
    ) {
        let spec = catalog(idx);
        let Some(fam) = feasible(&spec, n, r) else { return Ok(()) };
        let Ok(a) = ConfigAlphabet::uniform(v) else { return Ok(()) };
        let exact = exact_mean_t(&fam, &a).unwrap().unwrap();
        let brute = oracle_conf_moments(&fam, &a, &OracleBudget::default()).unwrap();
        prop_assert!((exact - brute.mean_t).abs() < 1e-12, "{spec}: {exact} vs {}", brute.mean_t);
    }

    #[test]
    fn truncated_mean_is_bounded_by_worst_detector(
        idx in 0usize..6,
        n in 2usize..8,
        r in 1usize..8,
        v in proptest::collection::vec(0.05f64..0.95, 1..4),
    ) {
        let spec = catalog(idx);
        let Some(fam) = feasible(&spec, n, r) else { return Ok(()) };
        let Ok(a) = ConfigAlphabet::uniform(v) else { return Ok(()) };
        let m = exact_mean_t(&fam, &a).unwrap().unwrap();
        // every survival factor is at most 1 - p_min
        let q = 1.0 - a.p_min();
        let bound = (1.0 - q.powi(r as i32)) / a.p_min();
        prop_assert!(m >= 0.0 && m <= r as f64 + 1e-12);
        prop_assert!(m <= bound + 1e-12, "{spec}: {m} > {bound}");
    }
}
