//! Detection law of a fixed (scheme, configuration) pair.
//!
//! With miss probabilities `q_i = 1 - p_i`, the survival products
//! `alpha_k = q_{pi(1)} ... q_{pi(k)}` determine everything:
//! `P(T = k) = alpha_{k-1} - alpha_k`, `P(T = inf) = alpha_r`, and the
//! truncated mean `E[T 1(T < inf)] = sum_{j<r} alpha_j - r alpha_r`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config_model::Configuration;
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scheme_model::Scheme;

/// Products below this clamp to zero and raise the underflow flag.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// `alpha_0 = 1, alpha_k = alpha_{k-1} q_{pi(k)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSequence {
    pub alphas: Vec<f64>,
    pub underflow: bool,
}

impl AlphaSequence {
    pub fn r(&self) -> usize {
        self.alphas.len() - 1
    }

    /// `sum_{j<r} alpha_j - r alpha_r`
    pub fn truncated_mean(&self) -> f64 {
        truncated_mean_from_alphas(&self.alphas)
    }

    pub fn success_probability(&self) -> f64 {
        1.0 - self.alphas[self.r()]
    }
}

/// `sum_{j<r} alpha_j - r alpha_r` for any survival sequence `alpha_0..=alpha_r`.
pub fn truncated_mean_from_alphas(alphas: &[f64]) -> f64 {
    let r = alphas.len() - 1;
    alphas[..r].iter().sum::<f64>() - r as f64 * alphas[r]
}

/// Law of the detection time: `pmf[k-1] = P(T = k)` for `k = 1..=r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDistribution {
    pub pmf: Vec<f64>,
    pub mass_at_infinity: f64,
}

impl DetectionDistribution {
    pub fn success_probability(&self) -> f64 {
        1.0 - self.mass_at_infinity
    }

    /// `E[T 1(T < inf)] = sum_k k P(T = k)`.
    pub fn expected_truncated_time(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// `E[T | T < inf]`; undefined (NaN) when detection is impossible.
    pub fn conditional_mean(&self) -> f64 {
        let s = self.success_probability();
        if s <= 0.0 {
            return f64::NAN;
        }
        self.expected_truncated_time() / s
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.mass_at_infinity
    }
}

/// Slot of the first positive decision; `Never` when the round ends silent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionTime {
    /// 1-based slot.
    At(usize),
    Never,
}

impl DetectionTime {
    pub fn slot(self) -> Option<usize> {
        match self {
            DetectionTime::At(k) => Some(k),
            DetectionTime::Never => None,
        }
    }
}

/// Decisions of the assigned detectors over one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub decisions: Vec<bool>,
    pub detection_time: DetectionTime,
}

impl DecisionTrace {
    pub fn from_decisions(decisions: Vec<bool>) -> Self {
        let detection_time = decisions
            .iter()
            .position(|&d| d)
            .map_or(DetectionTime::Never, |i| DetectionTime::At(i + 1));
        Self {
            decisions,
            detection_time,
        }
    }
}

fn check_indices(scheme: &Scheme, config: &Configuration) -> Result<()> {
    let n = config.n();
    match scheme.assignment().iter().find(|&&i| i >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

pub fn alpha_sequence(scheme: &Scheme, config: &Configuration) -> Result<AlphaSequence> {
    check_indices(scheme, config)?;
    let mut alphas = Vec::with_capacity(scheme.r() + 1);
    let mut underflow = false;
    let mut acc = 1.0;
    alphas.push(acc);
    for &i in scheme.assignment() {
        acc *= config.q(i);
        if acc != 0.0 && acc < UNDERFLOW_FLOOR {
            acc = 0.0;
            underflow = true;
        }
        alphas.push(acc);
    }
    Ok(AlphaSequence { alphas, underflow })
}

pub fn detection_pmf(scheme: &Scheme, config: &Configuration) -> Result<DetectionDistribution> {
    let a = alpha_sequence(scheme, config)?;
    let pmf = a.alphas.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(DetectionDistribution {
        pmf,
        mass_at_infinity: a.alphas[a.r()],
    })
}

pub fn expected_truncated_time(scheme: &Scheme, config: &Configuration) -> Result<f64> {
    Ok(alpha_sequence(scheme, config)?.truncated_mean())
}

pub fn success_probability(scheme: &Scheme, config: &Configuration) -> Result<f64> {
    Ok(alpha_sequence(scheme, config)?.success_probability())
}

/// One round of independent Bernoulli decisions.
pub fn simulate_round_with<R: Rng + ?Sized>(
    scheme: &Scheme,
    config: &Configuration,
    rng: &mut R,
) -> Result<DecisionTrace> {
    check_indices(scheme, config)?;
    let decisions = scheme
        .assignment()
        .iter()
        .map(|&i| rng.random::<f64>() < config.p(i))
        .collect();
    Ok(DecisionTrace::from_decisions(decisions))
}

pub fn simulate_round(
    scheme: &Scheme,
    config: &Configuration,
    stream: StreamKey,
) -> Result<DecisionTrace> {
    simulate_round_with(scheme, config, &mut stream.rng())
}

/// Empirical law of `T` over `replicates` simulated rounds.
pub fn empirical_pmf(
    scheme: &Scheme,
    config: &Configuration,
    replicates: usize,
    stream: StreamKey,
) -> Result<DetectionDistribution> {
    check_indices(scheme, config)?;
    let r = scheme.r();
    let mut counts = vec![0usize; r + 1];
    let mut rng = stream.rng();
    for _ in 0..replicates {
        // stop at the first detection; later slots do not affect T
        let mut hit = r;
        for (t, &i) in scheme.assignment().iter().enumerate() {
            if rng.random::<f64>() < config.p(i) {
                hit = t;
                break;
            }
        }
        counts[hit] += 1;
    }
    let total = replicates as f64;
    Ok(DetectionDistribution {
        pmf: counts[..r].iter().map(|&c| c as f64 / total).collect(),
        mass_at_infinity: counts[r] as f64 / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_model::ConfigAlphabet;
    use proptest::prelude::*;

    fn cfg(probs: &[f64]) -> Configuration {
        Configuration::from_probs_inferred(probs).unwrap()
    }

    fn sch(one_based: &[usize], n: usize) -> Scheme {
        Scheme::from_one_based(one_based, n).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let a = alpha_sequence(&sch(&[1, 2], 2), &cfg(&[0.5, 0.5])).unwrap();
        assert_eq!(a.alphas, vec![1.0, 0.5, 0.25]);

        let a = alpha_sequence(&sch(&[2, 1, 2], 2), &cfg(&[0.2, 0.8])).unwrap();
        let expect = [1.0, 0.2, 0.16, 0.032];
        for (x, e) in a.alphas.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }

        let c = cfg(&[0.3; 4]);
        let a = alpha_sequence(&sch(&[4, 1, 1, 3, 2], 4), &c).unwrap();
        for (k, x) in a.alphas.iter().enumerate() {
            assert!((x - 0.7f64.powi(k as i32)).abs() < 1e-15);
        }

        assert!(matches!(
            alpha_sequence(&sch(&[3], 3), &cfg(&[0.5, 0.5])),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn pmf_examples() {
        let d = detection_pmf(&sch(&[1, 2], 2), &cfg(&[0.5, 0.5])).unwrap();
        assert_eq!(d.pmf, vec![0.5, 0.25]);
        assert_eq!(d.mass_at_infinity, 0.25);
        assert_eq!(d.expected_truncated_time(), 1.0);

        // exhaustive-outcome reference for p=(0.2,0.5,0.8), pi=(3,1,2)
        let d = detection_pmf(&sch(&[3, 1, 2], 3), &cfg(&[0.2, 0.5, 0.8])).unwrap();
        let expect = [0.8, 0.04, 0.08];
        for (x, e) in d.pmf.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((d.mass_at_infinity - 0.08).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_pmf_is_truncated_geometric() {
        let c = cfg(&[0.3; 3]);
        let d = detection_pmf(&sch(&[1, 2, 3, 1, 2], 3), &c).unwrap();
        for (k, x) in d.pmf.iter().enumerate() {
            assert!((x - 0.3 * 0.7f64.powi(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn long_homogeneous_round() {
        let c = cfg(&[0.5; 50]);
        let s = Scheme::new((0..50).collect(), 50).unwrap();
        let t = expected_truncated_time(&s, &c).unwrap();
        let expect: f64 = (0..50).map(|j| 0.5f64.powi(j)).sum::<f64>() - 50.0 * 0.5f64.powi(50);
        assert!((t - expect).abs() < 1e-12);
    }

    #[test]
    fn underflow_is_flagged() {
        let a = ConfigAlphabet::uniform(vec![1e-9, 0.999_999]).unwrap();
        let c = Configuration::from_probs(&a, &[0.999_999]).unwrap();
        let s = Scheme::new(vec![0; 60], 1).unwrap();
        let seq = alpha_sequence(&s, &c).unwrap();
        assert!(seq.underflow);
        assert_eq!(*seq.alphas.last().unwrap(), 0.0);
        let d = detection_pmf(&s, &c).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_certain_detector_fires_first() {
        let a = ConfigAlphabet::uniform(vec![1.0 - 1e-9, 0.5]).unwrap();
        let c = Configuration::from_probs(&a, &[1.0 - 1e-9, 0.5]).unwrap();
        let s = sch(&[1, 2], 2);
        let mut rng = StreamKey::new(4).rng();
        let hits = (0..10_000)
            .filter(|_| simulate_round_with(&s, &c, &mut rng).unwrap().detection_time == DetectionTime::At(1))
            .count();
        assert_eq!(hits, 10_000);
    }

    #[test]
    fn simulation_matches_exact_law() {
        let c = cfg(&[0.5, 0.5]);
        let s = sch(&[1, 2], 2);
        let reps = 1_000_000;
        let emp = empirical_pmf(&s, &c, reps, StreamKey::new(17)).unwrap();
        let tol = 4.0 * (0.25f64 / reps as f64).sqrt();
        assert!((emp.pmf[0] - 0.5).abs() <= tol);
        assert!((emp.pmf[1] - 0.25).abs() <= tol);
        assert!((emp.mass_at_infinity - 0.25).abs() <= tol);
    }

    #[test]
    fn traces_are_deterministic_and_consistent() {
        let c = cfg(&[0.2, 0.5, 0.8]);
        let s = sch(&[1, 2, 3, 1, 2, 3], 3);
        let t1 = simulate_round(&s, &c, StreamKey::new(8)).unwrap();
        let t2 = simulate_round(&s, &c, StreamKey::new(8)).unwrap();
        assert_eq!(t1, t2);
        for seed in 0..200 {
            let t = simulate_round(&s, &c, StreamKey::new(seed)).unwrap();
            let first = t.decisions.iter().position(|&d| d).map(|i| i + 1);
            assert_eq!(t.detection_time.slot(), first);
        }
    }

    #[test]
    fn conditional_mean_is_separate() {
        let d = detection_pmf(&sch(&[1, 2], 2), &cfg(&[0.5, 0.5])).unwrap();
        assert!((d.conditional_mean() - 1.0 / 0.75).abs() < 1e-15);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        (1usize..7).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..0.99, n),
                prop::collection::vec(0..n, 1..12),
            )
        })
    }

    proptest! {
        #[test]
        fn pmf_alpha_consistency((probs, assign) in instance()) {
            let c = cfg(&probs);
            let s = Scheme::new(assign, probs.len()).unwrap();
            let a = alpha_sequence(&s, &c).unwrap();
            let d = detection_pmf(&s, &c).unwrap();
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
            for (k, p) in d.pmf.iter().enumerate() {
                prop_assert!(*p >= 0.0);
                prop_assert!((p - (a.alphas[k] - a.alphas[k + 1])).abs() < 1e-15);
            }
            prop_assert!(a.alphas.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!((d.expected_truncated_time() - a.truncated_mean()).abs() < 1e-12);
        }

        #[test]
        fn raising_a_probability_never_hurts((probs, assign) in instance(), slot in 0usize..12, bump in 0.0f64..0.5) {
            let s = Scheme::new(assign, probs.len()).unwrap();
            let target = s.assignment()[slot % s.r()];
            let mut better = probs.clone();
            better[target] = (better[target] + bump).min(0.999);
            let before = success_probability(&s, &cfg(&probs)).unwrap();
            let after = success_probability(&s, &cfg(&better)).unwrap();
            prop_assert!(after >= before - 1e-15);
        }
    }
}
