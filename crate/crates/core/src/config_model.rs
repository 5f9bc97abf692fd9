//! Configuration alphabets, sampled configurations and the alphabet moments
//! `m_w = E(1-p)^w` that every exact formula is assembled from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Distance kept between alphabet values and the endpoints 0 and 1.
pub const PROB_MARGIN: f64 = 1e-9;

const WEIGHT_TOL: f64 = 1e-12;

/// The finite set of admissible detection probabilities with a pmf.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigAlphabet {
    values: Vec<f64>,
    weights: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// On-disk form: `{ values = [...], weights = [...] }`, weights optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphabetSpec {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl ConfigAlphabet {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidAlphabet("alphabet is empty".into()));
        }
        if values.len() != weights.len() {
            return Err(Error::InvalidAlphabet(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        for &v in &values {
            if !(v.is_finite() && v >= PROB_MARGIN && v <= 1.0 - PROB_MARGIN) {
                return Err(Error::InvalidAlphabet(format!(
                    "value {v} is not strictly inside (0,1)"
                )));
            }
        }
        for (i, a) in values.iter().enumerate() {
            if values[i + 1..].iter().any(|b| b == a) {
                return Err(Error::InvalidAlphabet(format!("value {a} repeated")));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidAlphabet("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidAlphabet(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(Self {
            values,
            weights,
            cumulative,
        })
    }

    /// Alphabet with equal weights.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let k = values.len();
        if k == 0 {
            return Err(Error::InvalidAlphabet("alphabet is empty".into()));
        }
        Self::new(values, vec![1.0 / k as f64; k])
    }

    pub fn from_spec(spec: &AlphabetSpec) -> Result<Self> {
        match &spec.weights {
            Some(w) => Self::new(spec.values.clone(), w.clone()),
            None => Self::uniform(spec.values.clone()),
        }
    }

    pub fn to_spec(&self) -> AlphabetSpec {
        AlphabetSpec {
            values: self.values.clone(),
            weights: Some(self.weights.clone()),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when the alphabet carries no configuration randomness.
    pub fn is_degenerate(&self) -> bool {
        self.weights.iter().filter(|&&w| w > 0.0).count() <= 1
    }

    /// `m_w = sum_i weight_i (1 - value_i)^w`, for `w >= 1`.
    pub fn moment(&self, w: u32) -> Result<f64> {
        if w == 0 {
            return Err(Error::InvalidArgument("moment order must be >= 1".into()));
        }
        Ok(self.raw_moment(w))
    }

    fn raw_moment(&self, w: u32) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, wt)| wt * (1.0 - v).powi(w as i32))
            .sum()
    }

    /// Memoized moments `m_0 = 1, m_1, ..., m_max_order`.
    pub fn moment_table(&self, max_order: usize) -> MomentTable {
        let mut m = Vec::with_capacity(max_order + 1);
        m.push(1.0);
        for w in 1..=max_order {
            m.push(self.raw_moment(w as u32));
        }
        MomentTable { m }
    }

    /// Weighted mean detection probability.
    pub fn p_average(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Smallest value carrying positive weight.
    pub fn p_min(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, _)| v)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the value equal to `p` (within 1e-12).
    pub fn letter_of(&self, p: f64) -> Option<usize> {
        self.values.iter().position(|v| (v - p).abs() <= 1e-12)
    }

    /// Index of the value nearest to `p`; ties go to the smaller index.
    pub fn nearest_letter(&self, p: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let d = (v - p).abs();
            if d < best_d - 1e-15 {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn sample_letter<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let last = self.cumulative.len() - 1;
        if self.cumulative.len() == 2 {
            return usize::from(u >= self.cumulative[0]);
        }
        self.cumulative[..last]
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last)
    }

    /// `n` iid draws from the alphabet using the given stream.
    pub fn sample_configuration_with<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Configuration> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one detector".into()));
        }
        let letters: Vec<u32> = (0..n).map(|_| self.sample_letter(rng) as u32).collect();
        Ok(Configuration::from_letters_unchecked(self, letters))
    }

    pub fn sample_configuration(&self, n: usize, stream: StreamKey) -> Result<Configuration> {
        self.sample_configuration_with(n, &mut stream.rng())
    }
}

/// Alphabet moments `m_0..=m_max`, with `m_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    m: Vec<f64>,
}

impl MomentTable {
    /// Panics when `w` exceeds the order the table was built for.
    pub fn get(&self, w: usize) -> f64 {
        self.m[w]
    }

    pub fn max_order(&self) -> usize {
        self.m.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }
}

/// A realized detection-probability vector `p = (p_1, ..., p_n)`.
///
/// Detectors are indexed from 0. Each entry is also stored as a letter index
/// into the parent alphabet so exact formulas can work on letter counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    probs: Vec<f64>,
    letters: Vec<u32>,
    letter_values: Vec<f64>,
}

impl Configuration {
    fn from_letters_unchecked(alphabet: &ConfigAlphabet, letters: Vec<u32>) -> Self {
        let probs = letters
            .iter()
            .map(|&l| alphabet.values[l as usize])
            .collect();
        Self {
            probs,
            letters,
            letter_values: alphabet.values.clone(),
        }
    }

    pub fn from_letters(alphabet: &ConfigAlphabet, letters: Vec<u32>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidArgument("need at least one detector".into()));
        }
        if let Some(&bad) = letters.iter().find(|&&l| l as usize >= alphabet.len()) {
            return Err(Error::InvalidArgument(format!(
                "letter {bad} outside alphabet of size {}",
                alphabet.len()
            )));
        }
        Ok(Self::from_letters_unchecked(alphabet, letters))
    }

    pub fn from_probs(alphabet: &ConfigAlphabet, probs: &[f64]) -> Result<Self> {
        let letters = probs
            .iter()
            .map(|&p| {
                alphabet.letter_of(p).map(|l| l as u32).ok_or_else(|| {
                    Error::InvalidArgument(format!("probability {p} is not an alphabet value"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_letters(alphabet, letters)
    }

    /// Configuration over the uniform alphabet of its own distinct values.
    pub fn from_probs_inferred(probs: &[f64]) -> Result<Self> {
        let mut values: Vec<f64> = Vec::new();
        for &p in probs {
            if !values.iter().any(|v| (v - p).abs() <= 1e-12) {
                values.push(p);
            }
        }
        let alphabet = ConfigAlphabet::uniform(values)?;
        Self::from_probs(&alphabet, probs)
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Miss probability `q_i = 1 - p_i`.
    pub fn q(&self, i: usize) -> f64 {
        1.0 - self.probs[i]
    }

    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    /// Alphabet values the letters refer to.
    pub fn letter_values(&self) -> &[f64] {
        &self.letter_values
    }

    /// Number of detectors carrying each alphabet letter.
    pub fn letter_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.letter_values.len()];
        for &l in &self.letters {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Map from distance-to-source to raw detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attenuation {
    /// `d -> max(floor, 1 - d)`
    LinearFloor { floor: f64 },
    /// `d -> exp(-d / scale)`
    Exponential { scale: f64 },
}

impl Attenuation {
    pub fn apply(&self, d: f64) -> f64 {
        match *self {
            Attenuation::LinearFloor { floor } => floor.max(1.0 - d),
            Attenuation::Exponential { scale } => (-d / scale).exp(),
        }
    }
}

/// Detectors placed in the unit square `[-1/2, 1/2]^2` around a source at the
/// origin; probabilities come from an attenuation map snapped to an alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricPlacement {
    positions: Vec<(f64, f64)>,
    attenuation: Attenuation,
    alphabet: ConfigAlphabet,
}

impl GeometricPlacement {
    pub fn new(
        positions: Vec<(f64, f64)>,
        attenuation: Attenuation,
        alphabet: ConfigAlphabet,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("no detector positions".into()));
        }
        for &(x, y) in &positions {
            if !(x.abs() <= 0.5 && y.abs() <= 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "position ({x}, {y}) outside the unit square"
                )));
            }
        }
        Ok(Self {
            positions,
            attenuation,
            alphabet,
        })
    }

    /// `n` positions uniform on the unit square.
    pub fn uniform(
        n: usize,
        attenuation: Attenuation,
        alphabet: ConfigAlphabet,
        stream: StreamKey,
    ) -> Result<Self> {
        let mut rng = stream.rng();
        let positions = (0..n)
            .map(|_| (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        Self::new(positions, attenuation, alphabet)
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    /// Quantized configuration: `p_i = nearest(attenuation(|omega_i|))`.
    pub fn place_and_quantize(&self) -> Result<Configuration> {
        let letters = self
            .positions
            .iter()
            .map(|&(x, y)| {
                let raw = self.attenuation.apply(x.hypot(y));
                if !(0.0..=1.0).contains(&raw) {
                    return Err(Error::Model(format!(
                        "attenuation produced {raw} outside [0,1]"
                    )));
                }
                Ok(self.alphabet.nearest_letter(raw) as u32)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Configuration::from_letters_unchecked(&self.alphabet, letters))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_point() -> ConfigAlphabet {
        ConfigAlphabet::uniform(vec![0.2, 0.8]).unwrap()
    }

    #[test]
    fn moments_of_reference_alphabets() {
        let single = ConfigAlphabet::uniform(vec![0.5]).unwrap();
        assert!((single.moment(3).unwrap() - 0.125).abs() < 1e-15);
        let a = two_point();
        assert!((a.moment(1).unwrap() - 0.5).abs() < 1e-15);
        // (0.64 + 0.04) / 2
        assert!((a.moment(2).unwrap() - 0.34).abs() < 1e-15);
        assert!((a.moment(3).unwrap() - 0.26).abs() < 1e-15);
        assert!(matches!(a.moment(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn p_average_examples() {
        assert!((two_point().p_average() - 0.5).abs() < 1e-15);
        let single = ConfigAlphabet::uniform(vec![0.5]).unwrap();
        assert_eq!(single.p_average(), 0.5);
        let three = ConfigAlphabet::uniform(vec![0.1, 0.3, 0.5]).unwrap();
        assert!((three.p_average() - 0.3).abs() < 1e-15);
        assert!((three.p_min() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn alphabet_validation() {
        assert!(ConfigAlphabet::uniform(vec![]).is_err());
        assert!(ConfigAlphabet::uniform(vec![0.0, 0.5]).is_err());
        assert!(ConfigAlphabet::uniform(vec![1.0]).is_err());
        assert!(ConfigAlphabet::uniform(vec![0.5, 0.5]).is_err());
        assert!(ConfigAlphabet::new(vec![0.2, 0.8], vec![0.5, 0.6]).is_err());
        assert!(ConfigAlphabet::new(vec![0.2, 0.8], vec![1.2, -0.2]).is_err());
        assert!(ConfigAlphabet::new(vec![0.2, 0.8], vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn degenerate_sampling_and_determinism() {
        let single = ConfigAlphabet::uniform(vec![0.5]).unwrap();
        let c = single.sample_configuration(5, StreamKey::new(0)).unwrap();
        assert_eq!(c.probs(), &[0.5; 5]);

        let a = two_point();
        let s = StreamKey::new(99);
        let c1 = a.sample_configuration(10, s).unwrap();
        let c2 = a.sample_configuration(10, s).unwrap();
        assert_eq!(c1, c2);
        assert!(a.sample_configuration(0, s).is_err());
    }

    #[test]
    fn large_sample_frequency() {
        let a = two_point();
        let mut total = 0usize;
        let reps = 4;
        let n = 1_000_000;
        for rep in 0..reps {
            let c = a.sample_configuration(n, StreamKey::new(7).child(rep)).unwrap();
            total += c.letter_counts()[0];
        }
        let freq = total as f64 / (reps as f64 * n as f64);
        assert!((0.499..=0.501).contains(&freq), "freq {freq}");
    }

    #[test]
    fn weighted_sampling_frequency() {
        let a = ConfigAlphabet::new(vec![0.1, 0.4, 0.9], vec![0.2, 0.5, 0.3]).unwrap();
        let c = a.sample_configuration(200_000, StreamKey::new(3)).unwrap();
        let counts = c.letter_counts();
        for (k, w) in counts.iter().zip(a.weights()) {
            let f = *k as f64 / 200_000.0;
            assert!((f - w).abs() < 4.0 * (w * (1.0 - w) / 200_000.0f64).sqrt());
        }
    }

    #[test]
    fn configuration_membership() {
        let a = two_point();
        assert!(Configuration::from_probs(&a, &[0.2, 0.8, 0.2]).is_ok());
        assert!(Configuration::from_probs(&a, &[0.2, 0.5]).is_err());
        assert!(Configuration::from_probs(&a, &[]).is_err());
        let c = Configuration::from_probs(&a, &[0.2, 0.8, 0.2]).unwrap();
        assert_eq!(c.letter_counts(), vec![2, 1]);
        assert!((c.q(1) - 0.2).abs() < 1e-15);
    }

    fn tenths() -> ConfigAlphabet {
        ConfigAlphabet::uniform((1..=9).map(|i| i as f64 / 10.0).collect()).unwrap()
    }

    #[test]
    fn placement_quantization() {
        let att = Attenuation::LinearFloor { floor: 0.1 };
        let origin = GeometricPlacement::new(vec![(0.0, 0.0)], att, tenths()).unwrap();
        assert!((origin.place_and_quantize().unwrap().p(0) - 0.9).abs() < 1e-12);

        // distance sqrt(0.5) ~ 0.7071, raw 0.2929 -> 0.3
        let corner = GeometricPlacement::new(vec![(0.5, 0.5)], att, tenths()).unwrap();
        assert!((corner.place_and_quantize().unwrap().p(0) - 0.3).abs() < 1e-12);

        let corners = vec![(0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-0.5, -0.5)];
        let c = GeometricPlacement::new(corners, att, tenths())
            .unwrap()
            .place_and_quantize()
            .unwrap();
        assert!(c.probs().iter().all(|&p| p == c.p(0)));

        assert!(GeometricPlacement::new(vec![(0.6, 0.0)], att, tenths()).is_err());
        let bad = GeometricPlacement::new(
            vec![(0.0, 0.0)],
            Attenuation::LinearFloor { floor: 1.5 },
            tenths(),
        )
        .unwrap();
        assert!(matches!(bad.place_and_quantize(), Err(Error::Model(_))));
    }

    #[test]
    fn uniform_placement_stays_in_square() {
        let p = GeometricPlacement::uniform(
            500,
            Attenuation::Exponential { scale: 0.5 },
            tenths(),
            StreamKey::new(5),
        )
        .unwrap();
        assert!(p
            .positions()
            .iter()
            .all(|(x, y)| x.abs() <= 0.5 && y.abs() <= 0.5));
        let c = p.place_and_quantize().unwrap();
        assert_eq!(c.n(), 500);
    }

    fn alphabet_strategy() -> impl Strategy<Value = ConfigAlphabet> {
        prop::collection::btree_set(1u32..999, 1..6).prop_flat_map(|set| {
            let values: Vec<f64> = set.into_iter().map(|v| f64::from(v) / 1000.0).collect();
            let k = values.len();
            prop::collection::vec(0.05f64..1.0, k).prop_map(move |raw| {
                let total: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
                let head: f64 = w[..k - 1].iter().sum();
                w[k - 1] = 1.0 - head;
                ConfigAlphabet::new(values.clone(), w).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn moments_decrease_and_dominate_jensen(a in alphabet_strategy(), w in 1u32..12) {
            let mw = a.moment(w).unwrap();
            let next = a.moment(w + 1).unwrap();
            prop_assert!(next < mw);
            prop_assert!(mw > 0.0 && mw < 1.0);
            let jensen = (1.0 - a.p_average()).powi(w as i32);
            prop_assert!(mw >= jensen - 1e-15);
            if w >= 2 && !a.is_degenerate() {
                prop_assert!(mw > jensen);
            }
            // power means are nondecreasing in the order
            prop_assert!(next.powf(1.0 / f64::from(w + 1)) >= mw.powf(1.0 / f64::from(w)) - 1e-14);
        }

        #[test]
        fn moment_table_matches_direct(a in alphabet_strategy()) {
            let t = a.moment_table(8);
            prop_assert_eq!(t.get(0), 1.0);
            for w in 1..=8u32 {
                prop_assert!((t.get(w as usize) - a.moment(w).unwrap()).abs() < 1e-15);
            }
        }
    }
}
