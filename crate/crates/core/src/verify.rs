//! The invariant suite behind `detcap verify`.

use rand::Rng;

use crate::capacity_harness::{
    capacity_sweep, s_convergence_check, AchievabilityTarget, RoundSchedule, SweepSettings,
    Verdict,
};
use crate::config_model::{ConfigAlphabet, Configuration};
use crate::detection_core::detection_pmf;
use crate::ensemble_analysis::{
    delta_cross_moment, e_constant, exact_conf_alpha_means, exact_mean_t, expected_q,
    expected_q_pair, lemma_constants, QuenchedEvaluator,
};
use crate::error::Result;
use crate::oracles::{oracle_conf_moments, oracle_pmf, oracle_quenched, OracleBudget};
use crate::rng::StreamKey;
use crate::scheme_model::{advance_tuple, ConditionLimits, FamilySpec, Scheme, DEFAULT_TUPLE_BUDGET};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {}: {}", self.name, self.detail)
    }
}

fn run(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn two_point() -> ConfigAlphabet {
    ConfigAlphabet::uniform(vec![0.2, 0.8]).expect("valid alphabet")
}

/// Largest deviation between the survival-product law and the enumerated
/// law over `instances` random schemes (`n <= 6`, `r <= 10`).
pub fn pmf_oracle_deviation(instances: usize, stream: StreamKey) -> Result<f64> {
    let budget = OracleBudget::default();
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = stream.child(i as u64).rng();
        let n = rng.random_range(1..=6);
        let r = rng.random_range(1..=10);
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let assignment: Vec<usize> = (0..r).map(|_| rng.random_range(0..n)).collect();
        let config = Configuration::from_probs_inferred(&probs)?;
        let scheme = Scheme::new(assignment, n)?;
        let fast = detection_pmf(&scheme, &config)?;
        let slow = oracle_pmf(&scheme, &config, &budget)?;
        for (a, b) in fast.pmf.iter().zip(&slow.pmf) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((fast.mass_at_infinity - slow.mass_at_infinity).abs());
        let t_slow: f64 = slow.pmf.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum();
        worst = worst.max((fast.expected_truncated_time() - t_slow).abs());
    }
    Ok(worst)
}

pub fn run_suite(fast: bool, seed: u64) -> Vec<CheckResult> {
    let root = StreamKey::new(seed);
    let mut out = Vec::new();
    let instances = if fast { 200 } else { 2000 };

    out.push(run("pmf_matches_oracle", || {
        let worst = pmf_oracle_deviation(instances, root.child_str("pmf"))?;
        Ok((worst <= 1e-12, format!("{instances} instances, max deviation {worst:.2e}")))
    }));

    out.push(run("quenched_matches_oracle", || {
        let a = two_point();
        let budget = OracleBudget::default();
        let mut worst: f64 = 0.0;
        for spec in FamilySpec::catalog() {
            let fam = spec.build(4, 4)?;
            let ev = QuenchedEvaluator::new(&fam)?;
            for rep in 0..4u64 {
                let c = a.sample_configuration(4, root.child_str("quenched").child(rep))?;
                let s = ev.stats(&c)?;
                let (t, p) = oracle_quenched(&fam, &c, &budget)?;
                worst = worst.max((s.t_of_p - t).abs()).max((s.s_of_p - p).abs());
            }
        }
        Ok((worst <= 1e-12, format!("catalog at n=4, r=4, max deviation {worst:.2e}")))
    }));

    out.push(run("configuration_mean_matches_oracle", || {
        let a = two_point();
        let budget = OracleBudget::default();
        let mut worst: f64 = 0.0;
        for spec in FamilySpec::catalog() {
            for (n, r) in [(3, 2), (4, 4)] {
                let fam = spec.build(n, r)?;
                let exact = exact_mean_t(&fam, &a)?.unwrap_or(f64::NAN);
                let m = oracle_conf_moments(&fam, &a, &budget)?;
                worst = worst.max((exact - m.mean_t).abs());
            }
        }
        Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
    }));

    out.push(run("cross_moment_structure", || {
        let alphabets = [
            two_point(),
            ConfigAlphabet::new(vec![0.1, 0.5, 0.7], vec![0.2, 0.5, 0.3])?,
        ];
        let n = 5;
        let mut checked = 0usize;
        for a in &alphabets {
            for j1 in 1..=3 {
                for j2 in 1..=3 {
                    let e = e_constant(j1, j2, a);
                    let mut t1 = vec![0; j1];
                    loop {
                        let mut t2 = vec![0; j2];
                        loop {
                            let d = delta_cross_moment(&t1, &t2, a);
                            let overlap = t1.iter().any(|x| t2.contains(x));
                            let direct =
                                expected_q_pair(&t1, &t2, a) - expected_q(&t1, a) * expected_q(&t2, a);
                            let ok = (d - direct).abs() <= 1e-12
                                && if overlap { d >= e - 1e-12 && d > 0.0 } else { d == 0.0 }
                                && expected_q(&t1, a) <= a.moment(j1 as u32)? + 1e-12
                                && expected_q_pair(&t1, &t2, a)
                                    <= a.moment((j1 + j2) as u32)? + 1e-12;
                            if !ok {
                                return Ok((false, format!("violated at {t1:?}, {t2:?}")));
                            }
                            checked += 1;
                            if !advance_tuple(&mut t2, n) {
                                break;
                            }
                        }
                        if !advance_tuple(&mut t1, n) {
                            break;
                        }
                    }
                }
            }
        }
        Ok((true, format!("{checked} tuple pairs")))
    }));

    out.push(run("lemma_constant_values", || {
        let k = lemma_constants(&two_point(), 3, 3)?;
        let ok = (k.c(2).unwrap_or(f64::NAN) - 0.36).abs() < 1e-12
            && (k.c(3).unwrap_or(f64::NAN) - 0.36).abs() < 1e-12
            && (k.d(2).unwrap_or(f64::NAN) - 0.39).abs() < 1e-12
            && (k.e(1, 1).unwrap_or(f64::NAN) - 0.09).abs() < 1e-12;
        Ok((ok, "c_2, c_3, d_2, e(1,1) on {0.2, 0.8}".into()))
    }));

    out.push(run("alpha_mean_sandwich", || {
        let a = two_point();
        let (lo, hi) = (1.0 - a.p_average(), 1.0 - a.p_min());
        for spec in FamilySpec::catalog() {
            let fam = spec.build(12, 10)?;
            let al = exact_conf_alpha_means(&fam, &a, DEFAULT_TUPLE_BUDGET)?.unwrap_or_default();
            for (j, x) in al.iter().enumerate() {
                let j = j as i32;
                if *x < lo.powi(j) - 1e-15 || *x > hi.powi(j) + 1e-15 {
                    return Ok((false, format!("{spec} at j={j}: {x}")));
                }
            }
        }
        Ok((true, "catalog, j <= 10".into()))
    }));

    out.push(run("predicted_verdicts", || {
        let grid = [(100, 10), (1000, 31), (10_000, 100)];
        let mut labels = Vec::new();
        let mut ok = true;
        for spec in FamilySpec::catalog() {
            let grid: Vec<(usize, usize)> = grid
                .iter()
                .map(|&(n, _)| Ok((n, RoundSchedule::Sqrt.r_for(n, &spec)?)))
                .collect::<Result<_>>()?;
            let c = ConditionLimits::evaluate(&spec, &grid, 3, 0.05)?;
            let v = Verdict::from_conditions(c.a1_holds, c.a2_holds);
            let want = match &spec {
                FamilySpec::BlockRepeat { .. } => Verdict::FailsA1,
                FamilySpec::HotStart { .. } | FamilySpec::Fixed { .. } => Verdict::FailsA2,
                _ => Verdict::AchievesCapacity,
            };
            ok &= v == want;
            labels.push(format!("{spec}={v}"));
        }
        Ok((ok, labels.join(" ")))
    }));

    out.push(run("success_probability_floor", || {
        let grid: &[usize] = if fast { &[100, 400] } else { &[100, 1000, 10_000] };
        let reps = if fast { 200 } else { 2000 };
        let mut ok = true;
        for spec in FamilySpec::catalog() {
            let rep = s_convergence_check(
                &spec,
                &two_point(),
                grid,
                &RoundSchedule::Sqrt,
                reps,
                1e-3,
                root.child_str("s"),
            )?;
            ok &= rep.bounds_hold;
        }
        Ok((ok, "E S >= 1 - E(1-p)^r and S >= 1 - (1-p_min)^r".into()))
    }));

    if !fast {
        out.push(run("sweep_matches_prediction", || {
            let settings = SweepSettings {
                schedule: RoundSchedule::Sqrt,
                target: AchievabilityTarget::new(2.0, 0.05, 0.05)?,
                replicates: 1000,
                k: 3,
            };
            let mut labels = Vec::new();
            let mut ok = true;
            for spec in FamilySpec::catalog() {
                let v = capacity_sweep(
                    &spec,
                    &two_point(),
                    &[100, 900, 4900],
                    &settings,
                    root.child_str("sweep"),
                )?;
                ok &= v.consistent() && v.converse_holds;
                labels.push(format!("{spec}={}", v.verdict));
            }
            Ok((ok, labels.join(" ")))
        }));
    }
    out
}
