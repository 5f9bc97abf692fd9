//! Brute-force references.
//!
//! Nothing here calls the survival-product or closed-form code paths: the
//! detection law comes from enumerating every decision string, the scheme
//! average from enumerating every prefix tuple, and configuration moments
//! from enumerating every configuration. Budgets are hard errors.

use serde::{Deserialize, Serialize};

use crate::config_model::{ConfigAlphabet, Configuration};
use crate::detection_core::DetectionDistribution;
use crate::error::{Error, Result};
use crate::scheme_model::{Scheme, SchemeFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    /// Cap on `2^r` decision strings.
    pub max_outcome_enum: u128,
    /// Cap on `|alphabet|^n` configurations.
    pub max_config_enum: u128,
    /// Cap on `n^r` prefix tuples.
    pub max_tuple_enum: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_outcome_enum: 1 << 12,
            max_config_enum: 1_000_000,
            max_tuple_enum: 10_000_000,
        }
    }
}

impl OracleBudget {
    pub fn new(max_outcome_enum: u128, max_config_enum: u128, max_tuple_enum: u128) -> Result<Self> {
        if max_outcome_enum == 0 || max_config_enum == 0 || max_tuple_enum == 0 {
            return Err(Error::InvalidArgument("oracle budgets must be positive".into()));
        }
        Ok(Self {
            max_outcome_enum,
            max_config_enum,
            max_tuple_enum,
        })
    }
}

fn check(what: &'static str, base: usize, exp: usize, budget: u128) -> Result<()> {
    let needed = (base as u128).checked_pow(exp as u32).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::BudgetExceeded {
            what,
            needed,
            budget,
        });
    }
    Ok(())
}

/// Detection law by summing Bernoulli-product weights over all `2^r`
/// decision strings, binned by the first detecting slot.
pub fn oracle_pmf(
    scheme: &Scheme,
    config: &Configuration,
    budget: &OracleBudget,
) -> Result<DetectionDistribution> {
    let r = scheme.r();
    check("decision strings", 2, r, budget.max_outcome_enum)?;
    let probs: Vec<f64> = scheme
        .assignment()
        .iter()
        .map(|&i| {
            config
                .probs()
                .get(i)
                .copied()
                .ok_or(Error::IndexOutOfRange { index: i, len: config.n() })
        })
        .collect::<Result<_>>()?;
    let mut pmf = vec![0.0; r];
    let mut never = 0.0;
    for bits in 0u64..(1u64 << r) {
        let mut weight = 1.0;
        for (t, p) in probs.iter().enumerate() {
            weight *= if bits >> t & 1 == 1 { *p } else { 1.0 - p };
        }
        if bits == 0 {
            never += weight;
        } else {
            pmf[bits.trailing_zeros() as usize] += weight;
        }
    }
    Ok(DetectionDistribution {
        pmf,
        mass_at_infinity: never,
    })
}

/// `(T, S)` of a detection law: `T = sum_k k P(first detection at k)`,
/// rounds without detection contributing nothing.
fn time_and_success(d: &DetectionDistribution) -> (f64, f64) {
    let t = d
        .pmf
        .iter()
        .enumerate()
        .map(|(k, p)| (k + 1) as f64 * p)
        .sum();
    (t, d.pmf.iter().sum())
}

/// Scheme-averaged `(T(p), S(p))` by enumerating every `n^r` assignment
/// with its probability under the family.
pub fn oracle_quenched(
    family: &SchemeFamily,
    config: &Configuration,
    budget: &OracleBudget,
) -> Result<(f64, f64)> {
    let (n, r) = (family.n(), family.r());
    if config.n() != n {
        return Err(Error::InvalidArgument("family and configuration sizes differ".into()));
    }
    check("prefix tuples", n, r, budget.max_tuple_enum)?;
    let mut tuple = vec![0usize; r];
    let (mut t, mut s, mut mass) = (0.0, 0.0, 0.0);
    loop {
        let beta = family.prefix_probability(&tuple);
        if beta > 0.0 {
            let scheme = Scheme::new(tuple.clone(), n)?;
            let (ti, si) = time_and_success(&oracle_pmf(&scheme, config, budget)?);
            t += beta * ti;
            s += beta * si;
            mass += beta;
        }
        // odometer
        let mut pos = r;
        loop {
            if pos == 0 {
                debug_assert!((mass - 1.0).abs() < 1e-9, "prefix law mass {mass}");
                return Ok((t, s));
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < n {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

/// Exact configuration moments of `T(p)` and mean of `S(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfMoments {
    pub mean_t: f64,
    pub var_t: f64,
    pub mean_s: f64,
}

/// Enumerates all `|alphabet|^n` configurations weighted by their
/// probability.
pub fn oracle_conf_moments(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    budget: &OracleBudget,
) -> Result<ConfMoments> {
    let n = family.n();
    let l = alphabet.len();
    check("configurations", l, n, budget.max_config_enum)?;
    let mut letters = vec![0u32; n];
    let (mut m1, mut m2, mut ms) = (0.0, 0.0, 0.0);
    loop {
        let weight: f64 = letters
            .iter()
            .map(|&x| alphabet.weights()[x as usize])
            .product();
        if weight > 0.0 {
            let config = Configuration::from_letters(alphabet, letters.clone())?;
            let (t, s) = oracle_quenched(family, &config, budget)?;
            m1 += weight * t;
            m2 += weight * t * t;
            ms += weight * s;
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(ConfMoments {
                    mean_t: m1,
                    var_t: (m2 - m1 * m1).max(0.0),
                    mean_s: ms,
                });
            }
            pos -= 1;
            letters[pos] += 1;
            if (letters[pos] as usize) < l {
                break;
            }
            letters[pos] = 0;
        }
    }
}
