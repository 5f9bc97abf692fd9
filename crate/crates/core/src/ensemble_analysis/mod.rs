//! Scheme-averaged and configuration-averaged statistics.
//!
//! For a configuration `p`, `T(p)` and `S(p)` average the detection time and
//! success probability over the scheme family. The ensemble layer samples
//! configurations, evaluates those quenched quantities (exactly when the
//! family allows it), and compares the configuration mean and variance with
//! the structural bounds built from `a_k`, `b_k`, `c_j`, `d_j`, `e(j1, j2)`.

mod combinatorics;
mod lemmas;
mod profiles;
mod quenched;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lemmas::{
    delta_cross_moment, e_constant, expected_q, expected_q_pair, lemma_constants, ETableEntry,
    LemmaConstants,
};
pub use profiles::exact_conf_alpha_means;
pub use quenched::{
    alpha_means_monte_carlo, quenched_stats, tj_terms, QuenchedEvaluation, QuenchedEvaluator,
    QuenchedMethod, QuenchedStats, TjTerm,
};

use crate::capacity_harness::RoundSchedule;
use crate::config_model::ConfigAlphabet;
use crate::detection_core::truncated_mean_from_alphas;
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scheme_model::{ConditionLimits, FamilySpec, SchemeFamily, DEFAULT_TUPLE_BUDGET};
use crate::stats::{covariance, Estimate, SampleSummary};

/// Scheme samples per configuration when the quenched value has no exact route.
pub const DEFAULT_QUENCHED_SCHEMES: usize = 2_000;

/// Slack added to every finite-`n` bound check, on top of 4 standard errors.
pub const DEFAULT_SLACK: f64 = 1e-3;

/// How `T(p)`, `S(p)` are obtained per configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuenchedMode {
    /// Exact when the family has a closed form or a small prefix law,
    /// otherwise Monte Carlo with [`DEFAULT_QUENCHED_SCHEMES`].
    Auto,
    Exact,
    MonteCarlo { schemes: usize },
}

/// Per-replicate quenched values, in replicate order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSamples {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `tj[j - 1][rep] = T_j(p_rep)` for `j <= k`.
    pub tj: Vec<Vec<f64>>,
    pub exact_quenched: bool,
}

/// Samples `replicates` configurations; replicate `i` uses `stream.child(i)`.
pub fn replicate_samples(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    replicates: usize,
    k: usize,
    mode: QuenchedMode,
    stream: StreamKey,
) -> Result<ReplicateSamples> {
    if k > family.r() {
        return Err(Error::PrefixOutOfRange { k, r: family.r() });
    }
    let evaluator = match mode {
        QuenchedMode::Exact => Some(QuenchedEvaluator::new(family)?),
        QuenchedMode::Auto => match QuenchedEvaluator::new(family) {
            Ok(e) => Some(e),
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        },
        QuenchedMode::MonteCarlo { .. } => None,
    };
    let schemes = match mode {
        QuenchedMode::MonteCarlo { schemes } => schemes,
        _ => DEFAULT_QUENCHED_SCHEMES,
    };
    let n = family.n();
    let rows: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let key = stream.child(i as u64);
            let config = alphabet.sample_configuration(n, key.child(0))?;
            let alphas = match &evaluator {
                Some(ev) => ev.alpha_means(&config)?,
                None => alpha_means_monte_carlo(family, &config, schemes, key.child(1))?.0,
            };
            let r = alphas.len() - 1;
            let mut row = Vec::with_capacity(2 + k);
            row.push(truncated_mean_from_alphas(&alphas));
            row.push(1.0 - alphas[r]);
            row.extend_from_slice(&alphas[1..=k]);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let column = |c: usize| rows.iter().map(|row| row[c]).collect::<Vec<f64>>();
    Ok(ReplicateSamples {
        t: column(0),
        s: column(1),
        tj: (0..k).map(|j| column(2 + j)).collect(),
        exact_quenched: evaluator.is_some(),
    })
}

/// Configuration mean and variance of `T(p)`, mean of `S(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n: usize,
    pub r: usize,
    pub replicates: usize,
    pub mean_t: Estimate,
    pub var_t: Estimate,
    pub mean_s: Estimate,
    /// Exact `E_conf T(p)` when available.
    pub exact_mean_t: Option<f64>,
    pub exact_quenched: bool,
}

impl EnsembleReport {
    pub fn from_samples(family: &SchemeFamily, samples: &ReplicateSamples, exact: Option<f64>) -> Self {
        let t = SampleSummary::from_slice(&samples.t);
        let s = SampleSummary::from_slice(&samples.s);
        Self {
            n: family.n(),
            r: family.r(),
            replicates: samples.t.len(),
            mean_t: t.mean_estimate(),
            var_t: t.variance_estimate(),
            mean_s: s.mean_estimate(),
            exact_mean_t: exact,
            exact_quenched: samples.exact_quenched,
        }
    }

    pub const CSV_HEADER: &'static str = "n,r,mean_T,se_mean,var_T,se_var,mean_S,exact_mean_T";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n,
            self.r,
            self.mean_t.value,
            self.mean_t.std_error,
            self.var_t.value,
            self.var_t.std_error,
            self.mean_s.value,
            self.exact_mean_t.map(|x| x.to_string()).unwrap_or_default()
        )
    }
}

/// Exact `E_conf T(p)`, when the family admits it.
pub fn exact_mean_t(family: &SchemeFamily, alphabet: &ConfigAlphabet) -> Result<Option<f64>> {
    Ok(exact_conf_alpha_means(family, alphabet, DEFAULT_TUPLE_BUDGET)?
        .map(|a| truncated_mean_from_alphas(&a)))
}

pub fn ensemble_report(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    replicates: usize,
    stream: StreamKey,
) -> Result<EnsembleReport> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    let samples = replicate_samples(family, alphabet, replicates, 0, QuenchedMode::Auto, stream)?;
    Ok(EnsembleReport::from_samples(
        family,
        &samples,
        exact_mean_t(family, alphabet)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCheck {
    pub j: usize,
    pub var: Estimate,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Variance of `T(p)` against `sum e(j,j)(1-b_j)` and `(k+1) sum (1-b_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub n: usize,
    pub r: usize,
    pub k: usize,
    pub replicates: usize,
    pub var_t: Estimate,
    pub b: Vec<f64>,
    pub e_diag: Vec<f64>,
    pub slack: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds_lower: bool,
    pub holds_upper: bool,
    pub terms: Vec<TermCheck>,
    /// Minimum over `j1 < j2 <= k` of `cov(T_j1, T_j2) / se`.
    pub min_cov_z: Option<f64>,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.holds_lower && self.holds_upper && self.terms.iter().all(|t| t.holds)
    }
}

/// The lower floor `sum_{j<=k} e(j,j)(1 - b_j)` with exact `b_j`.
pub fn variance_floor(family: &SchemeFamily, alphabet: &ConfigAlphabet, k: usize) -> Result<f64> {
    let consts = lemma_constants(alphabet, k, k)?;
    Ok((1..=k)
        .map(|j| consts.e(j, j).unwrap_or(0.0) * (1.0 - family.exact_b(j)))
        .sum())
}

pub fn variance_sandwich_check(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    k: usize,
    replicates: usize,
    stream: StreamKey,
) -> Result<SandwichReport> {
    if k == 0 || k > family.r() {
        return Err(Error::PrefixOutOfRange { k, r: family.r() });
    }
    let samples = replicate_samples(family, alphabet, replicates, k, QuenchedMode::Auto, stream)?;
    sandwich_from_samples(family, alphabet, k, &samples)
}

pub fn sandwich_from_samples(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    k: usize,
    samples: &ReplicateSamples,
) -> Result<SandwichReport> {
    let consts = lemma_constants(alphabet, k, k)?;
    let b: Vec<f64> = (1..=k).map(|j| family.exact_b(j)).collect();
    let e_diag: Vec<f64> = (1..=k).map(|j| consts.e(j, j).unwrap_or(0.0)).collect();
    let var_t = SampleSummary::from_slice(&samples.t).variance_estimate();
    let slack = DEFAULT_SLACK + 4.0 * var_t.std_error;
    let miss: f64 = b.iter().map(|x| 1.0 - x).sum();
    let lower = e_diag.iter().zip(&b).map(|(e, b)| e * (1.0 - b)).sum::<f64>() - slack;
    let upper = (k as f64 + 1.0) * miss + slack;
    let terms = (1..=k)
        .map(|j| {
            let var = SampleSummary::from_slice(&samples.tj[j - 1]).variance_estimate();
            let tol = DEFAULT_SLACK + 4.0 * var.std_error;
            let lo = e_diag[j - 1] * (1.0 - b[j - 1]);
            let hi = 1.0 - b[j - 1];
            TermCheck {
                j,
                var,
                lower: lo,
                upper: hi,
                holds: var.value >= lo - tol && var.value <= hi + tol,
            }
        })
        .collect();
    let mut min_cov_z: Option<f64> = None;
    for j1 in 0..k {
        for j2 in j1 + 1..k {
            let c = covariance(&samples.tj[j1], &samples.tj[j2]);
            let z = if c.std_error > 0.0 {
                c.value / c.std_error
            } else if c.value >= 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            min_cov_z = Some(min_cov_z.map_or(z, |m| m.min(z)));
        }
    }
    Ok(SandwichReport {
        n: family.n(),
        r: family.r(),
        k,
        replicates: samples.t.len(),
        var_t,
        b,
        e_diag,
        slack,
        lower,
        upper,
        holds_lower: var_t.value >= lower,
        holds_upper: var_t.value <= upper,
        terms,
        min_cov_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub n: usize,
    pub r: usize,
    pub mean_t: Estimate,
    pub gap: f64,
    pub exact: bool,
}

/// Approach of `E_conf T(p)` to `1/p_av` along a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanConvergence {
    pub family: String,
    pub target: f64,
    pub tolerance: f64,
    pub points: Vec<MeanPoint>,
    pub achieves: bool,
    /// From `a_k` limits.
    pub predicted_achieves: bool,
}

impl MeanConvergence {
    pub fn consistent(&self) -> bool {
        self.achieves == self.predicted_achieves
    }
}

/// `|E_conf T - 1/p_av|` on each grid point. `achieves` requires a gap
/// within `tol` at the largest `n` and gaps that do not grow along the grid
/// (beyond sampling error). Points without an exact value are estimated
/// with `fallback` replicates.
pub fn mean_convergence_check(
    spec: &FamilySpec,
    alphabet: &ConfigAlphabet,
    grid: &[usize],
    schedule: &RoundSchedule,
    tol: f64,
    fallback: Option<(usize, StreamKey)>,
) -> Result<MeanConvergence> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty n-grid".into()));
    }
    let target = 1.0 / alphabet.p_average();
    let mut points = Vec::with_capacity(grid.len());
    let mut pairs = Vec::with_capacity(grid.len());
    for &n in grid {
        let r = schedule.r_for(n, spec)?;
        pairs.push((n, r));
        let family = spec.build(n, r)?;
        let (mean_t, exact) = match exact_mean_t(&family, alphabet)? {
            Some(v) => (Estimate::exact(v), true),
            None => {
                let (reps, stream) = fallback.ok_or_else(|| {
                    Error::NoClosedForm(format!("{spec} at n={n}, r={r}"))
                })?;
                let rep = ensemble_report(&family, alphabet, reps, stream.child(n as u64))?;
                (rep.mean_t, false)
            }
        };
        points.push(MeanPoint {
            n,
            r,
            gap: (mean_t.value - target).abs(),
            mean_t,
            exact,
        });
    }
    let monotone = points.windows(2).all(|w| {
        let noise = 4.0 * (w[0].mean_t.std_error + w[1].mean_t.std_error);
        w[1].gap <= w[0].gap + noise + 1e-12
    });
    let last = points.last().expect("nonempty grid");
    let achieves = monotone && last.gap <= tol + 4.0 * last.mean_t.std_error;
    let predicted = ConditionLimits::evaluate(spec, &pairs, 3, 0.05)?;
    Ok(MeanConvergence {
        family: spec.label(),
        target,
        tolerance: tol,
        points,
        achieves,
        predicted_achieves: predicted.a1_holds,
    })
}
