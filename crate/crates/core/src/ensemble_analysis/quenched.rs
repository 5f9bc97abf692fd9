//! Scheme-averaged ("quenched") quantities for a fixed configuration:
//! `T_j(p) = E_sch alpha_j`, `T(p)` and `S(p)`.
//!
//! Exact values come from per-family closed forms that only need letter
//! counts (symmetric families) or an ordered scan (round robin, fixed
//! schemes). Families without a closed form fall back to enumerating the
//! full `r`-prefix law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::combinatorics::{without_replacement_means, LnFactorials};
use crate::config_model::Configuration;
use crate::detection_core::{alpha_sequence, truncated_mean_from_alphas};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scheme_model::{FamilyKind, OffsetLaw, PrefixLaw, SchemeFamily, DEFAULT_TUPLE_BUDGET};
use crate::stats::SampleSummary;

/// `T(p)` and `S(p)` for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchedStats {
    pub t_of_p: f64,
    pub s_of_p: f64,
    pub method: QuenchedMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum QuenchedMethod {
    Exact,
    MonteCarlo {
        schemes: usize,
        se_t: f64,
        se_s: f64,
    },
}

/// `T_j(p) = E_sch alpha_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TjTerm {
    pub j: usize,
    pub value: f64,
    pub std_error: f64,
}

/// Requested route for quenched statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuenchedEvaluation {
    Exact,
    MonteCarlo { schemes: usize, stream: StreamKey },
}

/// Detector subset of a configuration: the original detectors minus a
/// sorted list of removed indices, relabeled in order.
struct View<'a> {
    config: &'a Configuration,
    removed: Vec<usize>,
}

impl<'a> View<'a> {
    fn full(config: &'a Configuration) -> Self {
        Self {
            config,
            removed: Vec::new(),
        }
    }

    fn n(&self) -> usize {
        self.config.n() - self.removed.len()
    }

    fn original(&self, i: usize) -> usize {
        let mut idx = i;
        for &r in &self.removed {
            if idx >= r {
                idx += 1;
            }
        }
        idx
    }

    fn q(&self, i: usize) -> f64 {
        self.config.q(self.original(i))
    }

    fn without(&self, i: usize) -> View<'a> {
        let orig = self.original(i);
        let mut removed = self.removed.clone();
        let pos = removed.partition_point(|&r| r < orig);
        removed.insert(pos, orig);
        View {
            config: self.config,
            removed,
        }
    }

    fn letter_counts(&self) -> Vec<usize> {
        let mut counts = self.config.letter_counts();
        for &r in &self.removed {
            counts[self.config.letters()[r] as usize] -= 1;
        }
        counts
    }

    fn letter_qs(&self) -> Vec<f64> {
        self.config.letter_values().iter().map(|p| 1.0 - p).collect()
    }
}

/// Exact `E_sch alpha_j` evaluator bound to one family; reusable across
/// configurations of the family's size.
pub struct QuenchedEvaluator<'f> {
    family: &'f SchemeFamily,
    lnf: LnFactorials,
    fallback: Option<PrefixLaw>,
}

impl<'f> QuenchedEvaluator<'f> {
    pub fn new(family: &'f SchemeFamily) -> Result<Self> {
        Self::with_budget(family, DEFAULT_TUPLE_BUDGET)
    }

    /// Families without closed forms need `n^r <= budget` for enumeration.
    pub fn with_budget(family: &'f SchemeFamily, budget: u128) -> Result<Self> {
        let fallback = if has_closed_form(family) {
            None
        } else {
            Some(family.prefix_law(family.r(), budget)?)
        };
        Ok(Self {
            family,
            lnf: LnFactorials::new(family.n()),
            fallback,
        })
    }

    pub fn family(&self) -> &SchemeFamily {
        self.family
    }

    /// `E_sch alpha_j` for `j = 0..=r`.
    pub fn alpha_means(&self, config: &Configuration) -> Result<Vec<f64>> {
        if config.n() != self.family.n() {
            return Err(Error::InvalidArgument(format!(
                "family has n={}, configuration has n={}",
                self.family.n(),
                config.n()
            )));
        }
        if let Some(law) = &self.fallback {
            return Ok(alpha_means_from_law(law, |i| config.q(i)));
        }
        Ok(closed_form_alpha_means(
            self.family,
            &View::full(config),
            &self.lnf,
        ))
    }

    pub fn stats(&self, config: &Configuration) -> Result<QuenchedStats> {
        let alphas = self.alpha_means(config)?;
        Ok(stats_from_alpha_means(&alphas))
    }
}

pub(crate) fn stats_from_alpha_means(alphas: &[f64]) -> QuenchedStats {
    let r = alphas.len() - 1;
    QuenchedStats {
        t_of_p: truncated_mean_from_alphas(alphas),
        s_of_p: 1.0 - alphas[r],
        method: QuenchedMethod::Exact,
    }
}

fn has_closed_form(family: &SchemeFamily) -> bool {
    match family.kind() {
        FamilyKind::BlockRepeat { base, .. } => matches!(
            base.kind(),
            FamilyKind::UniformInjective | FamilyKind::IidUniform
        ),
        FamilyKind::HotStart { base, .. } => base.as_deref().is_none_or(has_closed_form),
        _ => true,
    }
}

/// `sum_i beta(i) prod_{t<j} q_{i_t}` for every `j`, from the law of the full
/// `r`-prefix.
pub(crate) fn alpha_means_from_law(law: &PrefixLaw, q: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; law.j + 1];
    for (tuple, beta) in &law.entries {
        let mut acc = *beta;
        out[0] += acc;
        for (t, &i) in tuple.iter().enumerate() {
            acc *= q(i);
            out[t + 1] += acc;
        }
    }
    out
}

fn closed_form_alpha_means(family: &SchemeFamily, view: &View<'_>, lnf: &LnFactorials) -> Vec<f64> {
    let (n, r) = (family.n(), family.r());
    debug_assert_eq!(view.n(), n);
    match family.kind() {
        FamilyKind::UniformInjective => {
            without_replacement_means(&view.letter_counts(), &view.letter_qs(), r, lnf)
        }
        FamilyKind::IidUniform => {
            let qbar = mean_power(view, 1);
            (0..=r).map(|j| qbar.powi(j as i32)).collect()
        }
        FamilyKind::RoundRobin(law) => {
            let starts: Vec<usize> = match law {
                OffsetLaw::Uniform => (0..n).collect(),
                OffsetLaw::Fixed(s) => vec![*s],
            };
            let weight = 1.0 / starts.len() as f64;
            let mut out = vec![0.0; r + 1];
            for s in starts {
                let mut acc = weight;
                out[0] += acc;
                for (t, slot) in out.iter_mut().enumerate().skip(1) {
                    acc *= view.q((s + t - 1) % n);
                    *slot += acc;
                }
            }
            out
        }
        FamilyKind::BlockRepeat { block, base } => block_alpha_means(*block, base, view, r, lnf),
        FamilyKind::HotStart { pin, base } => {
            let q_pin = view.q(*pin);
            let mut out = vec![1.0];
            match base {
                None => out.push(q_pin),
                Some(b) => {
                    let rest = view.without(*pin);
                    let inner = closed_form_alpha_means(b, &rest, lnf);
                    out.extend(inner.iter().map(|a| q_pin * a));
                }
            }
            out
        }
        FamilyKind::Fixed(s) => scheme_alphas(s.assignment(), view),
        FamilyKind::CustomWeighted {
            schemes, weights, ..
        } => {
            let mut out = vec![0.0; r + 1];
            for (s, w) in schemes.iter().zip(weights) {
                for (o, a) in out.iter_mut().zip(scheme_alphas(s.assignment(), view)) {
                    *o += w * a;
                }
            }
            out
        }
    }
}

fn scheme_alphas(assignment: &[usize], view: &View<'_>) -> Vec<f64> {
    let mut out = Vec::with_capacity(assignment.len() + 1);
    let mut acc = 1.0;
    out.push(acc);
    for &i in assignment {
        acc *= view.q(i);
        out.push(acc);
    }
    out
}

/// Mean of `q^w` over the detectors of the view.
fn mean_power(view: &View<'_>, w: i32) -> f64 {
    let counts = view.letter_counts();
    let qs = view.letter_qs();
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .zip(&qs)
        .map(|(&c, q)| c as f64 * q.powi(w))
        .sum::<f64>()
        / total as f64
}

/// Base picks `sigma_1, sigma_2, ...` each repeated `block` times, so
/// `alpha_j = prod_{i<=b} q_{sigma_i}^block * q_{sigma_{b+1}}^s` with
/// `j = b*block + s`.
fn block_alpha_means(
    block: usize,
    base: &SchemeFamily,
    view: &View<'_>,
    r: usize,
    lnf: &LnFactorials,
) -> Vec<f64> {
    let m = block as i32;
    match base.kind() {
        FamilyKind::IidUniform => {
            let g = mean_power(view, m);
            (0..=r)
                .map(|j| {
                    let (b, s) = (j / block, j % block);
                    let head = g.powi(b as i32);
                    if s == 0 {
                        head
                    } else {
                        head * mean_power(view, s as i32)
                    }
                })
                .collect()
        }
        FamilyKind::UniformInjective => {
            let counts = view.letter_counts();
            let qs = view.letter_qs();
            let qm: Vec<f64> = qs.iter().map(|q| q.powi(m)).collect();
            let n = view.n();
            let b_max = r / block;
            let full = without_replacement_means(&counts, &qm, b_max, lnf);
            // one marked pick: sigma_{b+1} has letter l with probability c_l/n,
            // the remaining b picks come from the other n-1 detectors
            let reduced: Vec<Option<Vec<f64>>> = (0..counts.len())
                .map(|l| {
                    (counts[l] > 0).then(|| {
                        let mut c = counts.clone();
                        c[l] -= 1;
                        without_replacement_means(&c, &qm, b_max, lnf)
                    })
                })
                .collect();
            (0..=r)
                .map(|j| {
                    let (b, s) = (j / block, j % block);
                    if s == 0 {
                        return full[b];
                    }
                    reduced
                        .iter()
                        .enumerate()
                        .filter_map(|(l, g)| {
                            g.as_ref().map(|g| {
                                counts[l] as f64 / n as f64 * qs[l].powi(s as i32) * g[b]
                            })
                        })
                        .sum()
                })
                .collect()
        }
        _ => unreachable!("guarded by has_closed_form"),
    }
}

/// Monte Carlo `E_sch alpha_j` with per-entry standard errors.
pub fn alpha_means_monte_carlo(
    family: &SchemeFamily,
    config: &Configuration,
    schemes: usize,
    stream: StreamKey,
) -> Result<(Vec<f64>, Vec<f64>, QuenchedStats)> {
    if schemes < 2 {
        return Err(Error::InvalidArgument("need at least 2 scheme samples".into()));
    }
    let r = family.r();
    let mut rng = stream.rng();
    let mut per_j: Vec<Vec<f64>> = vec![Vec::with_capacity(schemes); r + 1];
    let mut ts = Vec::with_capacity(schemes);
    let mut ss = Vec::with_capacity(schemes);
    for _ in 0..schemes {
        let s = family.sample_with(&mut rng);
        let a = alpha_sequence(&s, config)?;
        ts.push(a.truncated_mean());
        ss.push(a.success_probability());
        for (col, v) in per_j.iter_mut().zip(&a.alphas) {
            col.push(*v);
        }
        // keep the stream shape independent of data
        let _: u8 = rng.random();
    }
    let summaries: Vec<SampleSummary> = per_j.iter().map(|c| SampleSummary::from_slice(c)).collect();
    let t = SampleSummary::from_slice(&ts);
    let s = SampleSummary::from_slice(&ss);
    Ok((
        summaries.iter().map(|x| x.mean).collect(),
        summaries.iter().map(|x| x.se_mean).collect(),
        QuenchedStats {
            t_of_p: t.mean,
            s_of_p: s.mean,
            method: QuenchedMethod::MonteCarlo {
                schemes,
                se_t: t.se_mean,
                se_s: s.se_mean,
            },
        },
    ))
}

/// `T(p)` and `S(p)` for one configuration.
pub fn quenched_stats(
    family: &SchemeFamily,
    config: &Configuration,
    eval: QuenchedEvaluation,
) -> Result<QuenchedStats> {
    match eval {
        QuenchedEvaluation::Exact => QuenchedEvaluator::new(family)?.stats(config),
        QuenchedEvaluation::MonteCarlo { schemes, stream } => {
            Ok(alpha_means_monte_carlo(family, config, schemes, stream)?.2)
        }
    }
}

/// `T_1(p), ..., T_k(p)`.
pub fn tj_terms(
    family: &SchemeFamily,
    config: &Configuration,
    k: usize,
    eval: QuenchedEvaluation,
) -> Result<Vec<TjTerm>> {
    if k == 0 || k > family.r() {
        return Err(Error::PrefixOutOfRange { k, r: family.r() });
    }
    let (values, errors) = match eval {
        QuenchedEvaluation::Exact => {
            let v = QuenchedEvaluator::new(family)?.alpha_means(config)?;
            let e = vec![0.0; v.len()];
            (v, e)
        }
        QuenchedEvaluation::MonteCarlo { schemes, stream } => {
            let (v, e, _) = alpha_means_monte_carlo(family, config, schemes, stream)?;
            (v, e)
        }
    };
    Ok((1..=k)
        .map(|j| TjTerm {
            j,
            value: values[j],
            std_error: errors[j],
        })
        .collect())
}
