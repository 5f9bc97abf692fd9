//! End-to-end capacity harness.
//!
//! A family achieves detection time `s` when, for large `n`, most
//! configurations (mass `> 1 - eps`) have `S(p) > 1 - eps` and
//! `T(p) < s + delta`. The harness estimates that mass along an `n`-grid,
//! tracks the mean gap to `1/p_av` and the configuration variance, and
//! classifies each family; the classification is cross-checked against the
//! one predicted from the closed-form `a_k`, `b_k`.

mod experiment;

use serde::{Deserialize, Serialize};

pub use experiment::{bundled_config, run_experiment, slug, ExperimentConfig, FamilyEntry, RunSummary};

use crate::config_model::ConfigAlphabet;
use crate::ensemble_analysis::{
    exact_mean_t, replicate_samples, sandwich_from_samples, QuenchedMode, ReplicateSamples,
    DEFAULT_SLACK,
};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scheme_model::{ConditionLimits, FamilySpec, SchemeFamily};
use crate::stats::{proportion, Estimate, SampleSummary};

/// Multiples of `1/p_av` probed by the converse check.
pub const CONVERSE_FRACTIONS: [f64; 3] = [0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityTarget {
    pub s: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl AchievabilityTarget {
    pub fn new(s: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let t = Self { s, epsilon, delta };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.s > 0.0 && self.s.is_finite()) || !unit(self.epsilon) || !unit(self.delta) {
            return Err(Error::InvalidArgument(format!(
                "target needs s > 0 and epsilon, delta in (0,1), got {self:?}"
            )));
        }
        Ok(())
    }

    /// `S(p) > 1 - eps` and `T(p) < s + delta`.
    pub fn contains(&self, t: f64, s: f64) -> bool {
        s > 1.0 - self.epsilon && t < self.s + self.delta
    }
}

/// Round length as a function of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoundSchedule {
    /// `floor(sqrt(n))`
    #[default]
    Sqrt,
    /// `ceil(c ln n)`
    Log { c: f64 },
    Fixed { r: usize },
}

impl RoundSchedule {
    pub fn raw(&self, n: usize) -> usize {
        let r = match *self {
            RoundSchedule::Sqrt => n.isqrt(),
            RoundSchedule::Log { c } => (c * (n as f64).ln()).ceil().max(0.0) as usize,
            RoundSchedule::Fixed { r } => r,
        };
        r.max(1)
    }

    /// The scheduled length, lowered to the nearest length the family can
    /// realize on `n` detectors (injective families need `r <= n`, unpadded
    /// block families need multiples of the block).
    pub fn r_for(&self, n: usize, spec: &FamilySpec) -> Result<usize> {
        if let RoundSchedule::Log { c } = self {
            if !(c.is_finite() && *c > 0.0) {
                return Err(Error::InvalidArgument(format!("log schedule needs c > 0, got {c}")));
            }
        }
        let mut r = self.raw(n);
        if let Some(cap) = spec.max_round(n) {
            r = r.min(cap);
        }
        while r >= 1 {
            match spec.build(n, r) {
                Ok(_) => return Ok(r),
                Err(Error::Infeasible(_)) => r -= 1,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Infeasible(format!("{spec} has no feasible round length on n={n}")))
    }

    pub fn grows(&self) -> bool {
        !matches!(self, RoundSchedule::Fixed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    AchievesCapacity,
    FailsA1,
    FailsA2,
    FailsBoth,
    /// The empirical rule was not met in either direction on this grid.
    Inconclusive,
}

impl Verdict {
    pub fn from_conditions(a1: bool, a2: bool) -> Self {
        match (a1, a2) {
            (true, true) => Verdict::AchievesCapacity,
            (false, true) => Verdict::FailsA1,
            (true, false) => Verdict::FailsA2,
            (false, false) => Verdict::FailsBoth,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::AchievesCapacity => "ACHIEVES_CAPACITY",
            Verdict::FailsA1 => "FAILS_A1",
            Verdict::FailsA2 => "FAILS_A2",
            Verdict::FailsBoth => "FAILS_BOTH",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(s)
    }
}

/// Fraction of configurations in `B(p, s, eps, delta)`.
pub fn b_mass_from_samples(samples: &ReplicateSamples, target: &AchievabilityTarget) -> Estimate {
    let flags: Vec<bool> = samples
        .t
        .iter()
        .zip(&samples.s)
        .map(|(&t, &s)| target.contains(t, s))
        .collect();
    proportion(&flags)
}

#[allow(clippy::too_many_arguments)]
pub fn b_mass(
    spec: &FamilySpec,
    alphabet: &ConfigAlphabet,
    n: usize,
    schedule: &RoundSchedule,
    target: &AchievabilityTarget,
    replicates: usize,
    stream: StreamKey,
) -> Result<Estimate> {
    target.validate()?;
    let r = schedule.r_for(n, spec)?;
    let family = spec.build(n, r)?;
    let samples = replicate_samples(&family, alphabet, replicates, 0, QuenchedMode::Auto, stream)?;
    Ok(b_mass_from_samples(&samples, target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverseMass {
    pub s: f64,
    pub mass: Estimate,
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub r: usize,
    pub mean_t: Estimate,
    pub var_t: Estimate,
    pub mean_s: Estimate,
    pub b_mass: Estimate,
    pub exact_mean_t: Option<f64>,
    /// `|E_conf T - 1/p_av|`, exact when available.
    pub gap: f64,
    pub gap_std_error: f64,
    /// `sum_{j<=k} e(j,j)(1 - b_j)` minus the slack.
    pub var_floor: f64,
    /// Fraction with `S(p) > 1 - eps`.
    pub a_mass: Estimate,
    pub converse: Vec<ConverseMass>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "n,r,mean_T,se_mean,var_T,se_var,mean_S,b_mass,se_mass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.r,
            self.mean_t.value,
            self.mean_t.std_error,
            self.var_t.value,
            self.var_t.std_error,
            self.mean_s.value,
            self.b_mass.value,
            self.b_mass.std_error
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityVerdict {
    pub family: String,
    pub capacity: f64,
    pub target: AchievabilityTarget,
    pub grid: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub mean_fails: bool,
    pub variance_fails: bool,
    pub achieves: bool,
    pub verdict: Verdict,
    pub predicted: Verdict,
    pub conditions: ConditionLimits,
    /// No probed `s < 1/p_av` reaches mass `> 1 - eps` at the largest `n`.
    pub converse_holds: bool,
    /// `P(A(eps)) >= 1 - 2 eps - 4 se` at the largest `n`.
    pub a_mass_holds: bool,
}

impl CapacityVerdict {
    pub fn consistent(&self) -> bool {
        self.verdict == self.predicted
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(SweepRow::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Settings shared by every grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub schedule: RoundSchedule,
    pub target: AchievabilityTarget,
    pub replicates: usize,
    /// Orders used in the variance floor.
    pub k: usize,
}

fn sweep_row(
    family: &SchemeFamily,
    alphabet: &ConfigAlphabet,
    settings: &SweepSettings,
    stream: StreamKey,
) -> Result<SweepRow> {
    let k = settings.k.min(family.r());
    let samples = replicate_samples(
        family,
        alphabet,
        settings.replicates,
        k,
        QuenchedMode::Auto,
        stream,
    )?;
    let cap = 1.0 / alphabet.p_average();
    let t = SampleSummary::from_slice(&samples.t);
    let s = SampleSummary::from_slice(&samples.s);
    let exact = exact_mean_t(family, alphabet)?;
    let (gap, gap_std_error) = match exact {
        Some(v) => ((v - cap).abs(), 0.0),
        None => ((t.mean - cap).abs(), t.se_mean),
    };
    let var_floor = if k == 0 {
        -DEFAULT_SLACK
    } else {
        sandwich_from_samples(family, alphabet, k, &samples)?.lower
    };
    let target = settings.target;
    let converse = CONVERSE_FRACTIONS
        .iter()
        .map(|f| {
            let probe = AchievabilityTarget {
                s: f * cap,
                ..target
            };
            ConverseMass {
                s: probe.s,
                mass: b_mass_from_samples(&samples, &probe),
            }
        })
        .collect();
    let a_flags: Vec<bool> = samples.s.iter().map(|&x| x > 1.0 - target.epsilon).collect();
    Ok(SweepRow {
        n: family.n(),
        r: family.r(),
        mean_t: t.mean_estimate(),
        var_t: t.variance_estimate(),
        mean_s: s.mean_estimate(),
        b_mass: b_mass_from_samples(&samples, &target),
        exact_mean_t: exact,
        gap,
        gap_std_error,
        var_floor,
        a_mass: proportion(&a_flags),
        converse,
    })
}

/// Sweeps the grid and classifies the family.
///
/// Empirical rule: the mean fails when the gap to `1/p_av` exceeds `delta`
/// at every grid point; the variance fails when the floor is positive and
/// the empirical variance stays above it at every grid point; the family
/// achieves when, at the largest `n`, the mass of `B` at `s` exceeds
/// `1 - eps` and the gap is within `delta`.
pub fn capacity_sweep(
    spec: &FamilySpec,
    alphabet: &ConfigAlphabet,
    grid: &[usize],
    settings: &SweepSettings,
    stream: StreamKey,
) -> Result<CapacityVerdict> {
    settings.target.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty n-grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n-grid must be strictly ascending".into()));
    }
    if settings.replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut pairs = Vec::with_capacity(grid.len());
    for &n in grid {
        let r = settings.schedule.r_for(n, spec)?;
        pairs.push((n, r));
        let family = spec.build(n, r)?;
        rows.push(sweep_row(&family, alphabet, settings, stream.child(n as u64))?);
    }
    let target = settings.target;
    let mean_fails = rows
        .iter()
        .all(|row| row.gap > target.delta + 4.0 * row.gap_std_error);
    let variance_fails = rows
        .iter()
        .all(|row| row.var_floor > 0.0 && row.var_t.value >= row.var_floor);
    let top = rows.last().expect("nonempty grid");
    let achieves = top.b_mass.value > 1.0 - target.epsilon && top.gap <= target.delta;
    let verdict = match (achieves, mean_fails, variance_fails) {
        (true, false, false) => Verdict::AchievesCapacity,
        (false, true, true) => Verdict::FailsBoth,
        (false, true, false) => Verdict::FailsA1,
        (false, false, true) => Verdict::FailsA2,
        _ => Verdict::Inconclusive,
    };
    let conditions = ConditionLimits::evaluate(spec, &pairs, settings.k.max(1), 0.05)?;
    let predicted = Verdict::from_conditions(conditions.a1_holds, conditions.a2_holds);
    let cap = 1.0 / alphabet.p_average();
    let converse_holds = top
        .converse
        .iter()
        .filter(|c| c.s < cap - target.delta)
        .all(|c| c.mass.value <= 1.0 - target.epsilon);
    let a_mass_holds =
        top.a_mass.value >= 1.0 - 2.0 * target.epsilon - 4.0 * top.a_mass.std_error;
    Ok(CapacityVerdict {
        family: spec.label(),
        capacity: cap,
        target,
        grid: grid.to_vec(),
        rows,
        mean_fails,
        variance_fails,
        achieves,
        verdict,
        predicted,
        conditions,
        converse_holds,
        a_mass_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SPoint {
    pub n: usize,
    pub r: usize,
    pub mean_s: Estimate,
    /// `1 - E_conf (1-p)^r`.
    pub moment_floor: f64,
    /// `1 - (1 - p_min)^r`, a bound for every configuration.
    pub worst_case_floor: f64,
    pub min_s: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SConvergence {
    pub family: String,
    pub points: Vec<SPoint>,
    /// The schedule has `r` strictly increasing along the grid.
    pub schedule_grows: bool,
    /// Every point meets both floors.
    pub bounds_hold: bool,
    /// `E_conf S` is nondecreasing (up to noise) and within `tol` of 1 at
    /// the largest `n`.
    pub converges: bool,
}

pub fn s_convergence_check(
    spec: &FamilySpec,
    alphabet: &ConfigAlphabet,
    grid: &[usize],
    schedule: &RoundSchedule,
    replicates: usize,
    tol: f64,
    stream: StreamKey,
) -> Result<SConvergence> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty n-grid".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &n in grid {
        let r = schedule.r_for(n, spec)?;
        let family = spec.build(n, r)?;
        let samples = replicate_samples(
            &family,
            alphabet,
            replicates,
            0,
            QuenchedMode::Auto,
            stream.child(n as u64),
        )?;
        let s = SampleSummary::from_slice(&samples.s);
        let moment_floor = 1.0 - alphabet.moment(r as u32)?;
        let worst_case_floor = 1.0 - (1.0 - alphabet.p_min()).powi(r as i32);
        let min_s = samples.s.iter().copied().fold(f64::INFINITY, f64::min);
        let holds = s.mean >= moment_floor - 4.0 * s.se_mean - 1e-12
            && min_s >= worst_case_floor - 1e-12;
        points.push(SPoint {
            n,
            r,
            mean_s: s.mean_estimate(),
            moment_floor,
            worst_case_floor,
            min_s,
            holds,
        });
    }
    let schedule_grows = points.windows(2).all(|w| w[1].r > w[0].r);
    let nondecreasing = points.windows(2).all(|w| {
        w[1].mean_s.value + 4.0 * (w[0].mean_s.std_error + w[1].mean_s.std_error)
            >= w[0].mean_s.value
    });
    let last = points.last().expect("nonempty grid");
    Ok(SConvergence {
        family: spec.label(),
        bounds_hold: points.iter().all(|p| p.holds),
        converges: schedule_grows && nondecreasing && last.mean_s.value >= 1.0 - tol,
        schedule_grows,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> ConfigAlphabet {
        ConfigAlphabet::uniform(vec![0.2, 0.8]).unwrap()
    }

    fn spec(s: &str) -> FamilySpec {
        s.parse().unwrap()
    }

    #[test]
    fn schedules() {
        let inj = spec("uniform_injective");
        assert_eq!(RoundSchedule::Sqrt.r_for(10_000, &inj).unwrap(), 100);
        assert_eq!(RoundSchedule::Sqrt.r_for(99, &inj).unwrap(), 9);
        assert_eq!(RoundSchedule::Fixed { r: 50 }.r_for(10, &inj).unwrap(), 10);
        assert_eq!(RoundSchedule::Log { c: 2.0 }.r_for(100, &inj).unwrap(), 10);
        let block = spec("block_repeat(2,uniform_injective)");
        assert_eq!(RoundSchedule::Sqrt.r_for(1000, &block).unwrap(), 30);
        let hot = spec("hot_start(1,uniform_injective)");
        assert_eq!(RoundSchedule::Fixed { r: 9 }.r_for(5, &hot).unwrap(), 5);
        assert!(RoundSchedule::Log { c: -1.0 }.r_for(100, &inj).is_err());
    }

    #[test]
    fn target_validation() {
        assert!(AchievabilityTarget::new(2.0, 0.05, 0.05).is_ok());
        assert!(AchievabilityTarget::new(0.0, 0.05, 0.05).is_err());
        assert!(AchievabilityTarget::new(2.0, 1.0, 0.05).is_err());
    }

    #[test]
    fn degenerate_alphabet_mass_is_one() {
        let a = ConfigAlphabet::uniform(vec![0.5]).unwrap();
        let t = AchievabilityTarget::new(2.0, 0.05, 0.01).unwrap();
        let m = b_mass(
            &spec("uniform_injective"),
            &a,
            60,
            &RoundSchedule::Fixed { r: 50 },
            &t,
            200,
            StreamKey::new(3),
        )
        .unwrap();
        assert_eq!(m.value, 1.0);
    }

    #[test]
    fn below_capacity_mass_drops() {
        let a = two_point();
        let t = AchievabilityTarget::new(1.8, 0.05, 0.05).unwrap();
        let m = b_mass(
            &spec("uniform_injective"),
            &a,
            2500,
            &RoundSchedule::Sqrt,
            &t,
            2000,
            StreamKey::new(5),
        )
        .unwrap();
        assert!(m.value < 0.95, "{m:?}");
    }

    #[test]
    fn s_convergence_examples() {
        let a = two_point();
        let rep = s_convergence_check(
            &spec("uniform_injective"),
            &a,
            &[100, 400, 2500],
            &RoundSchedule::Sqrt,
            500,
            1e-3,
            StreamKey::new(8),
        )
        .unwrap();
        assert!(rep.bounds_hold && rep.converges, "{rep:?}");
        let one = s_convergence_check(
            &spec("iid_uniform"),
            &a,
            &[100, 1000],
            &RoundSchedule::Fixed { r: 1 },
            2000,
            1e-3,
            StreamKey::new(8),
        )
        .unwrap();
        assert!(!one.schedule_grows && !one.converges);
        assert!((one.points[1].mean_s.value - 0.5).abs() < 4.0 * one.points[1].mean_s.std_error + 1e-3);
    }

    #[test]
    fn moment_floor_example() {
        let a = two_point();
        let floor = 1.0 - a.moment(50).unwrap();
        let want = 1.0 - (0.8f64.powi(50) + 0.2f64.powi(50)) / 2.0;
        assert!((floor - want).abs() < 1e-15);
        assert!((1.0 - floor - 7.1e-6).abs() < 1e-7);
    }

    #[test]
    fn small_sweep_classifies_catalog() {
        let a = two_point();
        let settings = SweepSettings {
            schedule: RoundSchedule::Sqrt,
            target: AchievabilityTarget::new(2.0, 0.05, 0.05).unwrap(),
            replicates: 1000,
            k: 3,
        };
        for s in FamilySpec::catalog() {
            let v = capacity_sweep(&s, &a, &[100, 900, 4900], &settings, StreamKey::new(11)).unwrap();
            assert!(v.consistent(), "{s}: {} vs {}", v.verdict, v.predicted);
            assert!(v.converse_holds, "{s}");
        }
    }
}
