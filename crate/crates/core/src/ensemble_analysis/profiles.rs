//! Exact configuration-and-scheme averages `E_conf E_sch alpha_j`.
//!
//! Conditioned on the prefix, `E_conf alpha_j = prod_l m_{w_l}` over the
//! multiplicities `w_l` of the distinct detectors it visits; averaging over
//! the scheme only needs the law of that multiplicity profile.

use super::combinatorics::{log_binomial_convolve, log_binomial_power, LnFactorials};
use crate::config_model::ConfigAlphabet;
use crate::error::Result;
use crate::scheme_model::{FamilyKind, SchemeFamily};

/// Moments `m_w = E(1-p)^w` with `m_0 = 1`.
struct Moments(Vec<f64>);

impl Moments {
    fn new(alphabet: &ConfigAlphabet, max: usize) -> Self {
        let mut m = vec![1.0];
        m.extend((1..=max).map(|w| alphabet.moment(w as u32).expect("positive order")));
        Self(m)
    }

    fn get(&self, w: usize) -> f64 {
        self.0[w]
    }
}

fn profile_product(prefix: &[usize], m: &Moments, counts: &mut Vec<usize>) -> f64 {
    counts.iter_mut().for_each(|c| *c = 0);
    for &i in prefix {
        if i >= counts.len() {
            counts.resize(i + 1, 0);
        }
        counts[i] += 1;
    }
    counts.iter().filter(|&&c| c > 0).map(|&c| m.get(c)).product()
}

/// `E_conf alpha_j` along one fixed assignment, `j = 0..=r`.
fn fixed_means(assignment: &[usize], m: &Moments) -> Vec<f64> {
    let mut counts = Vec::new();
    (0..=assignment.len())
        .map(|j| profile_product(&assignment[..j], m, &mut counts))
        .collect()
}

/// `E_conf E_sch alpha_j` for `j = 0..=r`, when a closed form exists or the
/// prefix law fits in `budget` tuples.
pub fn exact_conf_alpha_means(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    budget: u128,
) -> Result<Option<Vec<f64>>> {
    let moments = Moments::new(alphabet, max_order(family));
    let lnf = LnFactorials::new(family.r() + 1);
    if let Some(v) = closed_form(family, &moments, &lnf) {
        return Ok(Some(v));
    }
    match family.prefix_law(family.r(), budget) {
        Ok(law) => {
            let mut out = vec![0.0; family.r() + 1];
            let mut counts = Vec::new();
            for (tuple, beta) in &law.entries {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += beta * profile_product(&tuple[..j], &moments, &mut counts);
                }
            }
            Ok(Some(out))
        }
        Err(crate::Error::BudgetExceeded { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn max_order(family: &SchemeFamily) -> usize {
    match family.kind() {
        FamilyKind::BlockRepeat { block, base } => block * (base.r() + 1),
        _ => family.r() + 1,
    }
}

fn closed_form(family: &SchemeFamily, m: &Moments, lnf: &LnFactorials) -> Option<Vec<f64>> {
    let (n, r) = (family.n(), family.r());
    let out = match family.kind() {
        FamilyKind::UniformInjective => (0..=r).map(|j| m.get(1).powi(j as i32)).collect(),
        FamilyKind::IidUniform => {
            // j! [x^j] (sum_w m_w x^w / (w! n^w))^n
            let ln_n = (n as f64).ln();
            let base: Vec<f64> = (0..=r).map(|w| m.get(w).ln() - w as f64 * ln_n).collect();
            log_binomial_power(&base, n, lnf)
                .into_iter()
                .map(f64::exp)
                .collect()
        }
        FamilyKind::RoundRobin(_) => (0..=r)
            .map(|j| {
                let (a, rem) = (j / n, j % n);
                m.get(a + 1).powi(rem as i32) * m.get(a).powi((n - rem) as i32)
            })
            .collect(),
        FamilyKind::BlockRepeat { block, base } => {
            let block = *block;
            match base.kind() {
                FamilyKind::UniformInjective => (0..=r)
                    .map(|j| {
                        let (b, s) = (j / block, j % block);
                        m.get(block).powi(b as i32) * m.get(s)
                    })
                    .collect(),
                FamilyKind::IidUniform => {
                    let bn = base.n();
                    let ln_n = (bn as f64).ln();
                    let b_max = r / block;
                    let lnf = LnFactorials::new(b_max + 1);
                    let f: Vec<f64> = (0..=b_max)
                        .map(|w| m.get(block * w).ln() - w as f64 * ln_n)
                        .collect();
                    let rest = log_binomial_power(&f, bn - 1, &lnf);
                    let mut by_s = Vec::with_capacity(block);
                    for s in 0..block {
                        let h: Vec<f64> = (0..=b_max)
                            .map(|w| m.get(block * w + s).ln() - w as f64 * ln_n)
                            .collect();
                        by_s.push(log_binomial_convolve(&h, &rest, &lnf));
                    }
                    (0..=r)
                        .map(|j| by_s[j % block][j / block].exp())
                        .collect()
                }
                _ => return None,
            }
        }
        FamilyKind::HotStart { base, .. } => {
            let m1 = m.get(1);
            let mut out = vec![1.0];
            match base {
                None => out.push(m1),
                Some(b) => {
                    let inner = closed_form(b, m, lnf)?;
                    out.extend(inner.iter().map(|x| m1 * x));
                }
            }
            out
        }
        FamilyKind::Fixed(s) => fixed_means(s.assignment(), m),
        FamilyKind::CustomWeighted {
            schemes, weights, ..
        } => {
            let mut out = vec![0.0; r + 1];
            for (s, w) in schemes.iter().zip(weights) {
                for (o, x) in out.iter_mut().zip(fixed_means(s.assignment(), m)) {
                    *o += w * x;
                }
            }
            out
        }
    };
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection_core::truncated_mean_from_alphas;
    use crate::scheme_model::{FamilySpec, DEFAULT_TUPLE_BUDGET};

    fn fam(s: &str, n: usize, r: usize) -> SchemeFamily {
        s.parse::<FamilySpec>().unwrap().build(n, r).unwrap()
    }

    fn enumerate(f: &SchemeFamily, a: &ConfigAlphabet) -> Vec<f64> {
        let law = f.prefix_law(f.r(), DEFAULT_TUPLE_BUDGET).unwrap();
        let mut out = vec![0.0; f.r() + 1];
        for (t, beta) in &law.entries {
            for (j, o) in out.iter_mut().enumerate() {
                *o += beta * super::super::lemmas::expected_q(&t[..j], a);
            }
        }
        out
    }

    #[test]
    fn closed_forms_match_enumeration() {
        let a = ConfigAlphabet::new(vec![0.1, 0.45, 0.9], vec![0.3, 0.3, 0.4]).unwrap();
        for spec in [
            "uniform_injective",
            "iid_uniform",
            "round_robin",
            "round_robin(start=3)",
            "block_repeat(2,uniform_injective)",
            "block_repeat(2,iid_uniform)",
            "block_repeat(3,iid_uniform,pad)",
            "block_repeat(2,round_robin)",
            "hot_start(1,uniform_injective)",
            "hot_start(2,iid_uniform)",
            "fixed(1,1,2,3)",
            "custom([1,2,3,4]:0.5,[2,2,2,1]:0.5)",
        ] {
            for n in [4usize, 5] {
                let f = fam(spec, n, 4);
                let got = exact_conf_alpha_means(&f, &a, DEFAULT_TUPLE_BUDGET)
                    .unwrap()
                    .unwrap();
                let want = enumerate(&f, &a);
                for (j, (x, y)) in got.iter().zip(&want).enumerate() {
                    assert!((x - y).abs() < 1e-12, "{spec} n={n} j={j}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn injective_geometric_sum() {
        let a = ConfigAlphabet::uniform(vec![0.2, 0.8]).unwrap();
        let f = fam("uniform_injective", 100, 50);
        let al = exact_conf_alpha_means(&f, &a, 0).unwrap().unwrap();
        let t = truncated_mean_from_alphas(&al);
        let want = 2.0 * (1.0 - 0.5f64.powi(50)) - 50.0 * 0.5f64.powi(50);
        assert!((t - want).abs() < 1e-12);
    }

    #[test]
    fn block_repeat_limit() {
        let a = ConfigAlphabet::uniform(vec![0.2, 0.8]).unwrap();
        let f = fam("block_repeat(2,uniform_injective)", 10_000, 100);
        let al = exact_conf_alpha_means(&f, &a, 0).unwrap().unwrap();
        let t = truncated_mean_from_alphas(&al);
        assert!((t - 1.5 / 0.66).abs() < 1e-6, "{t}");
    }

    #[test]
    fn sandwich_on_every_term() {
        let a = ConfigAlphabet::uniform(vec![0.2, 0.8]).unwrap();
        for spec in FamilySpec::catalog() {
            let f = spec.build(12, 10).unwrap();
            let al = exact_conf_alpha_means(&f, &a, DEFAULT_TUPLE_BUDGET)
                .unwrap()
                .unwrap();
            for (j, x) in al.iter().enumerate() {
                let lo = 0.5f64.powi(j as i32);
                let hi = 0.8f64.powi(j as i32);
                assert!(*x >= lo - 1e-15 && *x <= hi + 1e-15, "{spec} j={j}");
            }
        }
    }

    #[test]
    fn large_iid_is_finite() {
        let a = ConfigAlphabet::uniform(vec![0.2, 0.8]).unwrap();
        let f = fam("iid_uniform", 10_000, 100);
        let al = exact_conf_alpha_means(&f, &a, 0).unwrap().unwrap();
        assert!(al.iter().all(|x| x.is_finite()));
        let t = truncated_mean_from_alphas(&al);
        assert!((t - 2.0).abs() < 0.01, "{t}");
    }
}
