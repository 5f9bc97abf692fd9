//! Deterministic `(n, r)`-detection schemes and distributions over them.
//!
//! A [`Scheme`] assigns a detector to each slot of a round. A [`SchemeFamily`]
//! is a randomized scheme: a catalog kind plus the model sizes `n` and `r`.
//! Families know how to sample, how to evaluate the probability of any scheme
//! prefix, and the closed forms of the two capacity-characterizing sequences:
//!
//! - `a_k`: probability that the first `k` picks are pairwise distinct;
//! - `b_k`: probability that the `k`-prefixes of two independent draws share
//!   no detector (set semantics, multiplicities ignored).
//!
//! Detector indices are 0-based in the API. Text formats (family strings,
//! config files, scheme files) use 1-based indices.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stats::proportion;

/// Default number of Monte Carlo draws for `a_k` / `b_k`.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Default cap on `n^j` for prefix-law enumeration.
pub const DEFAULT_TUPLE_BUDGET: u128 = 10_000_000;

/// A deterministic map from slots `0..r` to detectors `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scheme {
    assignment: Vec<usize>,
}

impl Scheme {
    pub fn new(assignment: Vec<usize>, n: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidScheme("round length must be >= 1".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        Ok(Self { assignment })
    }

    /// Scheme from 1-based detector labels.
    pub fn from_one_based(labels: &[usize], n: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidScheme("detector labels start at 1".into()));
        }
        Self::new(labels.iter().map(|i| i - 1).collect(), n)
    }

    /// Assignment without range validation; callers check against a config.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        Self::new(assignment, usize::MAX)
    }

    pub fn r(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.assignment.iter().map(|i| i + 1).collect()
    }

    pub fn prefix(&self, k: usize) -> &[usize] {
        &self.assignment[..k.min(self.assignment.len())]
    }

    pub fn prefix_is_injective(&self, k: usize) -> bool {
        all_distinct(self.prefix(k))
    }
}

pub(crate) fn all_distinct(xs: &[usize]) -> bool {
    xs.iter()
        .enumerate()
        .all(|(i, x)| !xs[i + 1..].contains(x))
}

pub(crate) fn disjoint(xs: &[usize], ys: &[usize]) -> bool {
    !xs.iter().any(|x| ys.contains(x))
}

/// Distribution of the round-robin starting offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OffsetLaw {
    Uniform,
    /// 0-based start detector.
    Fixed(usize),
}

/// Dimension-free description of a scheme family, as written in config files
/// and on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Sampling without replacement: a uniformly random ordered `r`-subset.
    UniformInjective,
    /// Each slot picks a detector uniformly, independently.
    IidUniform,
    /// `pi(t) = start + t (mod n)`; `start` is 1-based, absent means uniform.
    RoundRobin {
        #[serde(default)]
        start: Option<usize>,
    },
    /// Each pick of the base family is repeated `block` times.
    BlockRepeat {
        block: usize,
        base: Box<FamilySpec>,
        #[serde(default)]
        allow_pad: bool,
    },
    /// Slot 1 is pinned to detector `pin` (1-based); the remaining slots are a
    /// base-family draw over the other `n - 1` detectors.
    HotStart { pin: usize, base: Box<FamilySpec> },
    /// A point mass. `assignment` is 1-based; absent means `pi(t) = t mod n`.
    Fixed {
        #[serde(default)]
        assignment: Option<Vec<usize>>,
    },
    /// Explicit schemes (1-based) with weights.
    CustomWeighted {
        schemes: Vec<Vec<usize>>,
        weights: Vec<f64>,
    },
}

impl FamilySpec {
    pub fn build(&self, n: usize, r: usize) -> Result<SchemeFamily> {
        SchemeFamily::build(self, n, r)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Largest feasible round length for `n` detectors, when one exists.
    pub fn max_round(&self, n: usize) -> Option<usize> {
        match self {
            FamilySpec::UniformInjective => Some(n),
            FamilySpec::BlockRepeat { block, base, .. } => base.max_round(n).map(|m| m * block),
            FamilySpec::HotStart { base, .. } => base.max_round(n.saturating_sub(1)).map(|m| m + 1),
            _ => None,
        }
    }

    /// The families used for catalog-wide checks, in a fixed order.
    pub fn catalog() -> Vec<FamilySpec> {
        vec![
            FamilySpec::UniformInjective,
            FamilySpec::IidUniform,
            FamilySpec::RoundRobin { start: None },
            FamilySpec::BlockRepeat {
                block: 2,
                base: Box::new(FamilySpec::UniformInjective),
                allow_pad: false,
            },
            FamilySpec::HotStart {
                pin: 1,
                base: Box::new(FamilySpec::UniformInjective),
            },
            FamilySpec::Fixed { assignment: None },
        ]
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::UniformInjective => write!(f, "uniform_injective"),
            FamilySpec::IidUniform => write!(f, "iid_uniform"),
            FamilySpec::RoundRobin { start: None } => write!(f, "round_robin"),
            FamilySpec::RoundRobin { start: Some(s) } => write!(f, "round_robin(start={s})"),
            FamilySpec::BlockRepeat {
                block,
                base,
                allow_pad,
            } => {
                if *allow_pad {
                    write!(f, "block_repeat({block},{base},pad)")
                } else {
                    write!(f, "block_repeat({block},{base})")
                }
            }
            FamilySpec::HotStart { pin, base } => write!(f, "hot_start({pin},{base})"),
            FamilySpec::Fixed { assignment: None } => write!(f, "fixed"),
            FamilySpec::Fixed {
                assignment: Some(a),
            } => write!(f, "fixed({})", join(a)),
            FamilySpec::CustomWeighted { schemes, weights } => {
                let parts: Vec<String> = schemes
                    .iter()
                    .zip(weights)
                    .map(|(s, w)| format!("[{}]:{w}", join(s)))
                    .collect();
                write!(f, "custom({})", parts.join(","))
            }
        }
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl FromStr for FamilySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = SpecParser {
            src: s.as_bytes(),
            pos: 0,
        };
        let spec = p.family()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(spec)
    }
}

struct SpecParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl SpecParser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::InvalidArgument(format!(
            "bad family string at byte {}: {what}",
            self.pos
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || matches!(self.src[self.pos], b'.' | b'e' | b'E' | b'-' | b'+'))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.error("expected number"))
    }

    fn integer(&mut self) -> Result<usize> {
        let x = self.number()?;
        if x < 0.0 || x.fract() != 0.0 {
            return Err(self.error("expected nonnegative integer"));
        }
        Ok(x as usize)
    }

    fn int_list_until(&mut self, close: u8) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.integer()?);
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(b',')?;
        }
    }

    fn family(&mut self) -> Result<FamilySpec> {
        let name = self.ident()?;
        match name.as_str() {
            "uniform_injective" => Ok(FamilySpec::UniformInjective),
            "iid_uniform" => Ok(FamilySpec::IidUniform),
            "round_robin" => {
                if !self.eat(b'(') {
                    return Ok(FamilySpec::RoundRobin { start: None });
                }
                let key = self.ident()?;
                let spec = match key.as_str() {
                    "uniform" => FamilySpec::RoundRobin { start: None },
                    "start" => {
                        self.expect(b'=')?;
                        FamilySpec::RoundRobin {
                            start: Some(self.integer()?),
                        }
                    }
                    _ => return Err(self.error("expected 'uniform' or 'start='")),
                };
                self.expect(b')')?;
                Ok(spec)
            }
            "block_repeat" => {
                self.expect(b'(')?;
                let block = self.integer()?;
                self.expect(b',')?;
                let base = Box::new(self.family()?);
                let mut allow_pad = false;
                if self.eat(b',') {
                    if self.ident()? != "pad" {
                        return Err(self.error("expected 'pad'"));
                    }
                    allow_pad = true;
                }
                self.expect(b')')?;
                Ok(FamilySpec::BlockRepeat {
                    block,
                    base,
                    allow_pad,
                })
            }
            "hot_start" => {
                self.expect(b'(')?;
                let pin = self.integer()?;
                self.expect(b',')?;
                let base = Box::new(self.family()?);
                self.expect(b')')?;
                Ok(FamilySpec::HotStart { pin, base })
            }
            "fixed" => {
                if !self.eat(b'(') {
                    return Ok(FamilySpec::Fixed { assignment: None });
                }
                Ok(FamilySpec::Fixed {
                    assignment: Some(self.int_list_until(b')')?),
                })
            }
            "custom" => {
                self.expect(b'(')?;
                let mut schemes = Vec::new();
                let mut weights = Vec::new();
                loop {
                    self.expect(b'[')?;
                    schemes.push(self.int_list_until(b']')?);
                    self.expect(b':')?;
                    weights.push(self.number()?);
                    if self.eat(b')') {
                        break;
                    }
                    self.expect(b',')?;
                }
                Ok(FamilySpec::CustomWeighted { schemes, weights })
            }
            other => Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}

/// A realized family: kind plus model sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeFamily {
    kind: FamilyKind,
    n: usize,
    r: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    UniformInjective,
    IidUniform,
    RoundRobin(OffsetLaw),
    /// `base` has round length `ceil(r / block)`.
    BlockRepeat {
        block: usize,
        base: Box<SchemeFamily>,
    },
    /// `pin` is 0-based; `base` covers the other `n - 1` detectors with round
    /// length `r - 1` and is absent when `r == 1`.
    HotStart {
        pin: usize,
        base: Option<Box<SchemeFamily>>,
    },
    Fixed(Scheme),
    CustomWeighted {
        schemes: Vec<Scheme>,
        weights: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

/// How a probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum StatMethod {
    Exact,
    MonteCarlo { samples: usize, std_error: f64 },
}

impl StatMethod {
    pub fn std_error(&self) -> f64 {
        match self {
            StatMethod::Exact => 0.0,
            StatMethod::MonteCarlo { std_error, .. } => *std_error,
        }
    }
}

/// Requested evaluation route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Exact,
    MonteCarlo { samples: usize, stream: StreamKey },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixDistinctness {
    pub k: usize,
    pub a_k: f64,
    #[serde(flatten)]
    pub method: StatMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDisjointness {
    pub k: usize,
    pub b_k: f64,
    #[serde(flatten)]
    pub method: StatMethod,
}

/// The law of the first `j` picks: every tuple with positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixLaw {
    pub j: usize,
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl PrefixLaw {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, b)| b).sum()
    }
}

impl SchemeFamily {
    pub fn build(spec: &FamilySpec, n: usize, r: usize) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::InvalidArgument(format!(
                "need n >= 1 and r >= 1, got n={n}, r={r}"
            )));
        }
        let kind = match spec {
            FamilySpec::UniformInjective => {
                if r > n {
                    return Err(Error::Infeasible(format!(
                        "uniform_injective needs r <= n, got r={r}, n={n}"
                    )));
                }
                FamilyKind::UniformInjective
            }
            FamilySpec::IidUniform => FamilyKind::IidUniform,
            FamilySpec::RoundRobin { start } => match start {
                None => FamilyKind::RoundRobin(OffsetLaw::Uniform),
                Some(s) if (1..=n).contains(s) => FamilyKind::RoundRobin(OffsetLaw::Fixed(s - 1)),
                Some(s) => return Err(Error::IndexOutOfRange { index: *s, len: n }),
            },
            FamilySpec::BlockRepeat {
                block,
                base,
                allow_pad,
            } => {
                if *block == 0 {
                    return Err(Error::InvalidArgument("block length must be >= 1".into()));
                }
                if r % block != 0 && !allow_pad {
                    return Err(Error::Infeasible(format!(
                        "block {block} does not divide r={r} (padding not allowed)"
                    )));
                }
                let base_r = r.div_ceil(*block);
                FamilyKind::BlockRepeat {
                    block: *block,
                    base: Box::new(Self::build(base, n, base_r)?),
                }
            }
            FamilySpec::HotStart { pin, base } => {
                if !(1..=n).contains(pin) {
                    return Err(Error::IndexOutOfRange { index: *pin, len: n });
                }
                let base = if r == 1 {
                    None
                } else {
                    if n < 2 {
                        return Err(Error::Infeasible(
                            "hot_start with r >= 2 needs n >= 2".into(),
                        ));
                    }
                    Some(Box::new(Self::build(base, n - 1, r - 1)?))
                };
                FamilyKind::HotStart { pin: pin - 1, base }
            }
            FamilySpec::Fixed { assignment } => {
                let scheme = match assignment {
                    Some(a) => {
                        if a.len() != r {
                            return Err(Error::InvalidScheme(format!(
                                "fixed scheme has length {}, expected r={r}",
                                a.len()
                            )));
                        }
                        Scheme::from_one_based(a, n)?
                    }
                    None => Scheme::new((0..r).map(|t| t % n).collect(), n)?,
                };
                FamilyKind::Fixed(scheme)
            }
            FamilySpec::CustomWeighted { schemes, weights } => {
                if schemes.is_empty() || schemes.len() != weights.len() {
                    return Err(Error::InvalidArgument(
                        "custom family needs one weight per scheme".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidArgument("weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "custom weights sum to {total}, expected 1"
                    )));
                }
                let schemes = schemes
                    .iter()
                    .map(|s| {
                        if s.len() != r {
                            return Err(Error::InvalidScheme(format!(
                                "custom scheme has length {}, expected r={r}",
                                s.len()
                            )));
                        }
                        Scheme::from_one_based(s, n)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in weights {
                    acc += w;
                    cumulative.push(acc);
                }
                FamilyKind::CustomWeighted {
                    schemes,
                    weights: weights.clone(),
                    cumulative,
                }
            }
        };
        Ok(Self { kind, n, r })
    }

    pub fn fixed(scheme: Scheme, n: usize) -> Result<Self> {
        let r = scheme.r();
        let scheme = Scheme::new(scheme.assignment, n)?;
        Ok(Self {
            kind: FamilyKind::Fixed(scheme),
            n,
            r,
        })
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn sample(&self, stream: StreamKey) -> Scheme {
        self.sample_with(&mut stream.rng())
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Scheme {
        Scheme {
            assignment: self.sample_assignment(rng),
        }
    }

    fn sample_assignment<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let (n, r) = (self.n, self.r);
        match &self.kind {
            FamilyKind::UniformInjective => index::sample(rng, n, r).into_vec(),
            FamilyKind::IidUniform => (0..r).map(|_| rng.random_range(0..n)).collect(),
            FamilyKind::RoundRobin(law) => {
                let start = match law {
                    OffsetLaw::Uniform => rng.random_range(0..n),
                    OffsetLaw::Fixed(s) => *s,
                };
                (0..r).map(|t| (start + t) % n).collect()
            }
            FamilyKind::BlockRepeat { block, base } => {
                let picks = base.sample_assignment(rng);
                (0..r).map(|t| picks[t / block]).collect()
            }
            FamilyKind::HotStart { pin, base } => {
                let mut out = Vec::with_capacity(r);
                out.push(*pin);
                if let Some(base) = base {
                    out.extend(
                        base.sample_assignment(rng)
                            .into_iter()
                            .map(|i| if i >= *pin { i + 1 } else { i }),
                    );
                }
                out
            }
            FamilyKind::Fixed(s) => s.assignment.clone(),
            FamilyKind::CustomWeighted {
                schemes,
                cumulative,
                ..
            } => {
                let u: f64 = rng.random();
                let idx = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(schemes.len() - 1);
                schemes[idx].assignment.clone()
            }
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.r {
            return Err(Error::PrefixOutOfRange { k, r: self.r });
        }
        Ok(())
    }

    /// `a_k = P(first k picks are distinct)`.
    pub fn prefix_distinctness(&self, k: usize, eval: Evaluation) -> Result<PrefixDistinctness> {
        self.check_k(k)?;
        Ok(match eval {
            Evaluation::Exact => PrefixDistinctness {
                k,
                a_k: self.exact_a(k),
                method: StatMethod::Exact,
            },
            Evaluation::MonteCarlo { samples, stream } => {
                let mut rng = stream.rng();
                let flags: Vec<bool> = (0..samples)
                    .map(|_| all_distinct(&self.sample_assignment(&mut rng)[..k]))
                    .collect();
                let est = proportion(&flags);
                PrefixDistinctness {
                    k,
                    a_k: est.value,
                    method: StatMethod::MonteCarlo {
                        samples,
                        std_error: est.std_error,
                    },
                }
            }
        })
    }

    /// `b_k = P(k-prefixes of two independent draws are disjoint)`.
    pub fn pairwise_disjointness(
        &self,
        k: usize,
        eval: Evaluation,
    ) -> Result<PairwiseDisjointness> {
        self.check_k(k)?;
        Ok(match eval {
            Evaluation::Exact => PairwiseDisjointness {
                k,
                b_k: self.exact_b(k),
                method: StatMethod::Exact,
            },
            Evaluation::MonteCarlo { samples, stream } => {
                let mut rng = stream.rng();
                let flags: Vec<bool> = (0..samples)
                    .map(|_| {
                        let x = self.sample_assignment(&mut rng);
                        let y = self.sample_assignment(&mut rng);
                        disjoint(&x[..k], &y[..k])
                    })
                    .collect();
                let est = proportion(&flags);
                PairwiseDisjointness {
                    k,
                    b_k: est.value,
                    method: StatMethod::MonteCarlo {
                        samples,
                        std_error: est.std_error,
                    },
                }
            }
        })
    }

    /// Closed-form `a_k`; `k` may exceed `r` only through recursion bookkeeping.
    pub fn exact_a(&self, k: usize) -> f64 {
        let n = self.n;
        match &self.kind {
            FamilyKind::UniformInjective => 1.0,
            FamilyKind::IidUniform => {
                if k > n {
                    0.0
                } else {
                    (0..k).map(|i| (n - i) as f64 / n as f64).product()
                }
            }
            FamilyKind::RoundRobin(_) => {
                if k <= n {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::BlockRepeat { block, base } => {
                if *block == 1 {
                    base.exact_a(k)
                } else if k == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::HotStart { base, .. } => match base {
                Some(b) if k >= 2 => b.exact_a(k - 1),
                _ => 1.0,
            },
            FamilyKind::Fixed(s) => {
                if s.prefix_is_injective(k) {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::CustomWeighted {
                schemes, weights, ..
            } => schemes
                .iter()
                .zip(weights)
                .filter(|(s, _)| s.prefix_is_injective(k))
                .map(|(_, w)| w)
                .sum(),
        }
    }

    pub fn exact_b(&self, k: usize) -> f64 {
        let n = self.n;
        match &self.kind {
            FamilyKind::UniformInjective => {
                if 2 * k > n {
                    0.0
                } else {
                    (0..k)
                        .map(|i| (n - k - i) as f64 / (n - i) as f64)
                        .product()
                }
            }
            FamilyKind::IidUniform => iid_disjointness(n, k),
            FamilyKind::RoundRobin(OffsetLaw::Uniform) => {
                // window starts must be at cyclic distance >= k
                (n + 1).saturating_sub(2 * k) as f64 / n as f64
            }
            FamilyKind::RoundRobin(OffsetLaw::Fixed(_)) => 0.0,
            FamilyKind::BlockRepeat { block, base } => base.exact_b(k.div_ceil(*block)),
            FamilyKind::HotStart { .. } | FamilyKind::Fixed(_) => 0.0,
            FamilyKind::CustomWeighted {
                schemes, weights, ..
            } => {
                let mut total = 0.0;
                for (s1, w1) in schemes.iter().zip(weights) {
                    for (s2, w2) in schemes.iter().zip(weights) {
                        if disjoint(s1.prefix(k), s2.prefix(k)) {
                            total += w1 * w2;
                        }
                    }
                }
                total
            }
        }
    }

    /// `beta(i) = P(Pi(1..j) = i)` for a single tuple of length `j <= r`.
    pub fn prefix_probability(&self, tuple: &[usize]) -> f64 {
        let j = tuple.len();
        if j == 0 {
            return 1.0;
        }
        if j > self.r || tuple.iter().any(|&i| i >= self.n) {
            return 0.0;
        }
        let n = self.n;
        match &self.kind {
            FamilyKind::UniformInjective => {
                if all_distinct(tuple) {
                    1.0 / (0..j).map(|i| (n - i) as f64).product::<f64>()
                } else {
                    0.0
                }
            }
            FamilyKind::IidUniform => (n as f64).powi(-(j as i32)),
            FamilyKind::RoundRobin(law) => {
                let start = tuple[0];
                if tuple.iter().enumerate().any(|(t, &i)| i != (start + t) % n) {
                    return 0.0;
                }
                match law {
                    OffsetLaw::Uniform => 1.0 / n as f64,
                    OffsetLaw::Fixed(s) => f64::from(u8::from(*s == start)),
                }
            }
            FamilyKind::BlockRepeat { block, base } => {
                if tuple
                    .iter()
                    .enumerate()
                    .any(|(t, &i)| i != tuple[(t / block) * block])
                {
                    return 0.0;
                }
                let base_tuple: Vec<usize> = tuple.iter().step_by(*block).copied().collect();
                base.prefix_probability(&base_tuple)
            }
            FamilyKind::HotStart { pin, base } => {
                if tuple[0] != *pin || tuple[1..].contains(pin) {
                    return 0.0;
                }
                match base {
                    None => 1.0,
                    Some(b) => {
                        let rest: Vec<usize> = tuple[1..]
                            .iter()
                            .map(|&i| if i > *pin { i - 1 } else { i })
                            .collect();
                        b.prefix_probability(&rest)
                    }
                }
            }
            FamilyKind::Fixed(s) => f64::from(u8::from(s.prefix(j) == tuple)),
            FamilyKind::CustomWeighted {
                schemes, weights, ..
            } => schemes
                .iter()
                .zip(weights)
                .filter(|(s, _)| s.prefix(j) == tuple)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Law of the first `j` picks by enumerating all `n^j` tuples.
    pub fn prefix_law(&self, j: usize, budget: u128) -> Result<PrefixLaw> {
        self.check_k(j)?;
        let needed = (self.n as u128).checked_pow(j as u32).unwrap_or(u128::MAX);
        if needed > budget {
            return Err(Error::BudgetExceeded {
                what: "prefix tuples",
                needed,
                budget,
            });
        }
        let mut entries = Vec::new();
        let mut tuple = vec![0usize; j];
        loop {
            let beta = self.prefix_probability(&tuple);
            if beta > 0.0 {
                entries.push((tuple.clone(), beta));
            }
            if !advance_tuple(&mut tuple, self.n) {
                break;
            }
        }
        Ok(PrefixLaw { j, entries })
    }

    /// Whether the family needs `r <= n`-style structure (injective picks).
    pub fn is_injective(&self) -> bool {
        self.exact_a(self.r) == 1.0
    }
}

/// Odometer increment over `{0..base}^len`; false once it wraps.
pub fn advance_tuple(tuple: &mut [usize], base: usize) -> bool {
    for slot in tuple.iter_mut().rev() {
        *slot += 1;
        if *slot < base {
            return true;
        }
        *slot = 0;
    }
    false
}

/// `P(two iid-uniform k-tuples over n share no value)` via the occupancy law
/// of the first tuple.
fn iid_disjointness(n: usize, k: usize) -> f64 {
    let nf = n as f64;
    // occupancy[d] = P(first t draws hit exactly d distinct detectors)
    let mut occupancy = vec![0.0; k + 1];
    occupancy[0] = 1.0;
    for t in 0..k {
        let mut next = vec![0.0; k + 1];
        for d in 0..=t.min(n) {
            let p = occupancy[d];
            if p == 0.0 {
                continue;
            }
            next[d] += p * d as f64 / nf;
            if d < n {
                next[d + 1] += p * (nf - d as f64) / nf;
            }
        }
        occupancy = next;
    }
    occupancy
        .iter()
        .enumerate()
        .filter(|(d, _)| *d <= n)
        .map(|(d, p)| p * ((nf - d as f64) / nf).powi(k as i32))
        .sum()
}

/// Whether the Theorem-1 conditions hold along a grid of `(n, r)` points,
/// judged from the closed forms of `a_k` and `b_k` for `k <= k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionLimits {
    pub a1_holds: bool,
    pub a2_holds: bool,
    /// `max_k (1 - a_k)` per grid point.
    pub a_deficit: Vec<f64>,
    /// `max_k (1 - b_k)` per grid point.
    pub b_deficit: Vec<f64>,
}

impl ConditionLimits {
    /// A condition holds when its deficit is nonincreasing along the grid and
    /// at most `tolerance` at the last point.
    pub fn evaluate(
        spec: &FamilySpec,
        grid: &[(usize, usize)],
        k_max: usize,
        tolerance: f64,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        let mut a_deficit = Vec::with_capacity(grid.len());
        let mut b_deficit = Vec::with_capacity(grid.len());
        for &(n, r) in grid {
            let fam = spec.build(n, r)?;
            let kk = k_max.min(r);
            let mut da: f64 = 0.0;
            let mut db: f64 = 0.0;
            for k in 1..=kk {
                da = da.max(1.0 - fam.exact_a(k));
                db = db.max(1.0 - fam.exact_b(k));
            }
            a_deficit.push(da);
            b_deficit.push(db);
        }
        let holds = |d: &[f64]| {
            d.windows(2).all(|w| w[1] <= w[0] + 1e-12) && *d.last().unwrap() <= tolerance
        };
        Ok(Self {
            a1_holds: holds(&a_deficit),
            a2_holds: holds(&b_deficit),
            a_deficit,
            b_deficit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fam(s: &str, n: usize, r: usize) -> SchemeFamily {
        s.parse::<FamilySpec>().unwrap().build(n, r).unwrap()
    }

    fn mc(samples: usize, seed: u64) -> Evaluation {
        Evaluation::MonteCarlo {
            samples,
            stream: StreamKey::new(seed),
        }
    }

    /// Independent enumeration of a_k and b_k from the prefix law.
    fn enumerated_ab(f: &SchemeFamily, k: usize) -> (f64, f64) {
        let law = f.prefix_law(k, DEFAULT_TUPLE_BUDGET).unwrap();
        let a = law
            .entries
            .iter()
            .filter(|(t, _)| all_distinct(t))
            .map(|(_, b)| b)
            .sum();
        let mut b = 0.0;
        for (t1, b1) in &law.entries {
            for (t2, b2) in &law.entries {
                if disjoint(t1, t2) {
                    b += b1 * b2;
                }
            }
        }
        (a, b)
    }

    #[test]
    fn fixed_family_is_a_point_mass() {
        let f = fam("fixed(2,1,2)", 3, 3);
        for seed in 0..5 {
            assert_eq!(f.sample(StreamKey::new(seed)).one_based(), vec![2, 1, 2]);
        }
        let b1 = f.pairwise_disjointness(1, Evaluation::Exact).unwrap();
        assert_eq!(b1.b_k, 0.0);
        assert_eq!(f.exact_a(2), 1.0);
        assert_eq!(f.exact_a(3), 0.0);
    }

    #[test]
    fn uniform_injective_first_slot_is_exchangeable() {
        let f = fam("uniform_injective", 5, 5);
        let draws = 100_000;
        let mut counts = [0usize; 5];
        let mut rng = StreamKey::new(11).rng();
        for _ in 0..draws {
            let s = f.sample_with(&mut rng);
            assert!(s.prefix_is_injective(5));
            counts[s.assignment()[0]] += 1;
        }
        let tol = 3.0 * (0.2f64 * 0.8 / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.2).abs() <= tol, "{counts:?}");
        }
    }

    #[test]
    fn block_repeat_pattern() {
        let f = fam("block_repeat(2,uniform_injective)", 4, 4);
        for seed in 0..20 {
            let s = f.sample(StreamKey::new(seed));
            let a = s.assignment();
            assert_eq!(a[0], a[1]);
            assert_eq!(a[2], a[3]);
            assert_ne!(a[0], a[2]);
        }
        assert_eq!(f.exact_a(2), 0.0);
        assert!(matches!(
            "block_repeat(2,uniform_injective)"
                .parse::<FamilySpec>()
                .unwrap()
                .build(4, 3),
            Err(Error::Infeasible(_))
        ));
        let padded = fam("block_repeat(2,uniform_injective,pad)", 4, 3);
        assert_eq!(padded.sample(StreamKey::new(1)).r(), 3);
    }

    #[test]
    fn infeasible_and_out_of_range() {
        assert!(matches!(
            FamilySpec::UniformInjective.build(3, 4),
            Err(Error::Infeasible(_))
        ));
        let f = fam("uniform_injective", 5, 3);
        assert!(matches!(
            f.prefix_distinctness(0, Evaluation::Exact),
            Err(Error::PrefixOutOfRange { .. })
        ));
        assert!(matches!(
            f.pairwise_disjointness(4, Evaluation::Exact),
            Err(Error::PrefixOutOfRange { .. })
        ));
        assert!("hot_start(9,uniform_injective)"
            .parse::<FamilySpec>()
            .unwrap()
            .build(5, 3)
            .is_err());
        assert!("custom([1,2]:0.5,[2,1]:0.6)"
            .parse::<FamilySpec>()
            .unwrap()
            .build(2, 2)
            .is_err());
    }

    #[test]
    fn iid_uniform_a3_at_n20() {
        let f = fam("iid_uniform", 20, 5);
        let a = f.prefix_distinctness(3, Evaluation::Exact).unwrap();
        assert!((a.a_k - 0.855).abs() < 1e-15);
        assert_eq!(a.method, StatMethod::Exact);
    }

    #[test]
    fn closed_forms_match_enumeration_small_n() {
        for spec in [
            "uniform_injective",
            "iid_uniform",
            "round_robin",
            "round_robin(start=2)",
            "block_repeat(2,uniform_injective)",
            "block_repeat(2,iid_uniform)",
            "hot_start(1,uniform_injective)",
            "hot_start(3,iid_uniform)",
            "fixed",
            "custom([1,2,3,1]:0.25,[4,3,2,1]:0.5,[2,2,1,3]:0.25)",
        ] {
            for n in [4usize, 5, 6] {
                let f = fam(spec, n, 4);
                for k in 1..=4 {
                    let (a, b) = enumerated_ab(&f, k);
                    assert!((f.exact_a(k) - a).abs() < 1e-12, "{spec} n={n} k={k} a");
                    assert!((f.exact_b(k) - b).abs() < 1e-12, "{spec} n={n} k={k} b");
                }
            }
        }
    }

    #[test]
    fn iid_a_k_matches_tuple_count() {
        for n in 1..=6usize {
            let f = fam("iid_uniform", n, 4);
            for k in 1..=4 {
                let mut distinct = 0usize;
                let mut t = vec![0usize; k];
                loop {
                    if all_distinct(&t) {
                        distinct += 1;
                    }
                    if !advance_tuple(&mut t, n) {
                        break;
                    }
                }
                let expect = distinct as f64 / (n as f64).powi(k as i32);
                assert!((f.exact_a(k) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn injective_disjointness_reference_values() {
        let f = fam("uniform_injective", 20, 3);
        let b = f.pairwise_disjointness(3, Evaluation::Exact).unwrap().b_k;
        assert!((b - (17.0 * 16.0 * 15.0) / (20.0 * 19.0 * 18.0)).abs() < 1e-15);
        assert!((b - 0.596491).abs() < 1e-6);

        // exhaustive check at n=6, k=2: disjoint ordered pairs of ordered pairs
        let mut hits = 0usize;
        let mut total = 0usize;
        for a in 0..6 {
            for b2 in 0..6 {
                for c in 0..6 {
                    for d in 0..6 {
                        if a == b2 || c == d {
                            continue;
                        }
                        total += 1;
                        if ![c, d].contains(&a) && ![c, d].contains(&b2) {
                            hits += 1;
                        }
                    }
                }
            }
        }
        let f6 = fam("uniform_injective", 6, 2);
        assert!((f6.exact_b(2) - hits as f64 / total as f64).abs() < 1e-15);

        let big = fam("uniform_injective", 10_000, 3);
        assert!(big.exact_b(3) > 0.997);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_forms() {
        for spec in FamilySpec::catalog() {
            let f = spec.build(12, 4).unwrap();
            for k in 1..=4 {
                let a_mc = f.prefix_distinctness(k, mc(20_000, 3 + k as u64)).unwrap();
                let b_mc = f.pairwise_disjointness(k, mc(20_000, 99 + k as u64)).unwrap();
                let a = f.exact_a(k);
                let b = f.exact_b(k);
                let sa = a_mc.method.std_error().max(1e-9);
                let sb = b_mc.method.std_error().max(1e-9);
                assert!((a_mc.a_k - a).abs() <= 4.0 * sa, "{spec} k={k}");
                assert!((b_mc.b_k - b).abs() <= 4.0 * sb, "{spec} k={k}");
            }
        }
    }

    #[test]
    fn prefix_laws_of_small_families() {
        let law = fam("uniform_injective", 3, 2).prefix_law(2, 1000).unwrap();
        assert_eq!(law.entries.len(), 6);
        assert!(law.entries.iter().all(|(_, b)| (b - 1.0 / 6.0).abs() < 1e-15));

        let law = fam("iid_uniform", 3, 2).prefix_law(2, 1000).unwrap();
        assert_eq!(law.entries.len(), 9);
        assert!(law.entries.iter().all(|(_, b)| (b - 1.0 / 9.0).abs() < 1e-15));

        let law = fam("block_repeat(2,iid_uniform)", 3, 2)
            .prefix_law(2, 1000)
            .unwrap();
        assert_eq!(law.entries.len(), 3);
        for (t, b) in &law.entries {
            assert_eq!(t[0], t[1]);
            assert!((b - 1.0 / 3.0).abs() < 1e-15);
        }

        let err = fam("iid_uniform", 100, 5).prefix_law(5, 1000);
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn theorem_labels_from_closed_forms() {
        let grid: Vec<(usize, usize)> = [100usize, 1000, 10_000].iter().map(|&n| (n, 10)).collect();
        let expect = [
            ("uniform_injective", true, true),
            ("iid_uniform", true, true),
            ("round_robin", true, true),
            ("block_repeat(2,uniform_injective)", false, true),
            ("hot_start(1,uniform_injective)", true, false),
            ("fixed", true, false),
        ];
        for (s, a1, a2) in expect {
            let spec: FamilySpec = s.parse().unwrap();
            let lim = ConditionLimits::evaluate(&spec, &grid, 3, 0.05).unwrap();
            assert_eq!((lim.a1_holds, lim.a2_holds), (a1, a2), "{s}: {lim:?}");
        }
    }

    #[test]
    fn family_strings_round_trip() {
        for s in [
            "uniform_injective",
            "iid_uniform",
            "round_robin",
            "round_robin(start=3)",
            "block_repeat(2,uniform_injective)",
            "block_repeat(3,hot_start(1,iid_uniform),pad)",
            "hot_start(1,uniform_injective)",
            "fixed",
            "fixed(1,2,3)",
            "custom([1,2]:0.5,[2,1]:0.5)",
        ] {
            let spec: FamilySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("nope".parse::<FamilySpec>().is_err());
        assert!("block_repeat(2)".parse::<FamilySpec>().is_err());
        assert!("fixed(1,2) extra".parse::<FamilySpec>().is_err());
    }

    #[test]
    fn family_specs_deserialize_from_toml() {
        let src = r#"
            kind = "block_repeat"
            block = 2
            base = { kind = "uniform_injective" }
        "#;
        let spec: FamilySpec = toml::from_str(src).unwrap();
        assert_eq!(spec.to_string(), "block_repeat(2,uniform_injective)");
    }

    proptest! {
        #[test]
        fn a_and_b_are_nonincreasing(idx in 0usize..6, n in 4usize..40) {
            let spec = &FamilySpec::catalog()[idx];
            let r = spec.max_round(n).unwrap_or(n).min(8) & !1;
            let f = spec.build(n, r.max(2)).unwrap();
            let mut prev = (1.0f64, 1.0f64);
            for k in 1..=f.r() {
                let (a, b) = (f.exact_a(k), f.exact_b(k));
                prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
                prop_assert!(a <= prev.0 + 1e-15 && b <= prev.1 + 1e-15);
                prev = (a, b);
            }
        }

        #[test]
        fn prefix_law_is_normalized(idx in 0usize..6, n in 2usize..6, j in 1usize..4) {
            let spec = &FamilySpec::catalog()[idx];
            let r = 4;
            if let Ok(f) = spec.build(n, r) {
                let law = f.prefix_law(j, DEFAULT_TUPLE_BUDGET).unwrap();
                prop_assert!((law.total_mass() - 1.0).abs() < 1e-12);
            }
        }
    }
}
