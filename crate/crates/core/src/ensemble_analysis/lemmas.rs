//! Cross-moment structure of the `Q(i) = prod q_{i_l}` terms and the derived
//! constants `c_j`, `d_j`, `e(j1, j2)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config_model::ConfigAlphabet;
use crate::error::{Error, Result};

/// Index multiplicities of a tuple, keyed by index.
fn multiplicities(tuple: &[usize]) -> BTreeMap<usize, u32> {
    let mut out = BTreeMap::new();
    for &i in tuple {
        *out.entry(i).or_insert(0) += 1;
    }
    out
}

fn moment(alphabet: &ConfigAlphabet, w: u32) -> f64 {
    if w == 0 {
        1.0
    } else {
        alphabet.moment(w).expect("positive order")
    }
}

/// `E_conf Q(i)`: product of moments over the tuple's multiplicities.
pub fn expected_q(tuple: &[usize], alphabet: &ConfigAlphabet) -> f64 {
    multiplicities(tuple)
        .values()
        .map(|&w| moment(alphabet, w))
        .product()
}

/// `E_conf Q(i1) Q(i2)`.
pub fn expected_q_pair(i1: &[usize], i2: &[usize], alphabet: &ConfigAlphabet) -> f64 {
    let joined: Vec<usize> = i1.iter().chain(i2).copied().collect();
    expected_q(&joined, alphabet)
}

/// `delta(i1, i2) = E Q(i1)Q(i2) - E Q(i1) E Q(i2)`, factored as
/// `E Q1 * E Q2 * (prod_shared m_{a+b} - prod_shared m_a m_b)` so that it is
/// exactly zero for disjoint tuples. Indices are arbitrary labels.
pub fn delta_cross_moment(i1: &[usize], i2: &[usize], alphabet: &ConfigAlphabet) -> f64 {
    let m1 = multiplicities(i1);
    let m2 = multiplicities(i2);
    let mut only1 = 1.0;
    let mut joint = 1.0;
    let mut split = 1.0;
    let mut shared = false;
    for (i, &a) in &m1 {
        match m2.get(i) {
            Some(&b) => {
                shared = true;
                joint *= moment(alphabet, a + b);
                split *= moment(alphabet, a) * moment(alphabet, b);
            }
            None => only1 *= moment(alphabet, a),
        }
    }
    if !shared {
        return 0.0;
    }
    let only2: f64 = m2
        .iter()
        .filter(|(i, _)| !m1.contains_key(i))
        .map(|(_, &b)| moment(alphabet, b))
        .product();
    only1 * only2 * (joint - split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ETableEntry {
    pub j1: usize,
    pub j2: usize,
    pub value: f64,
}

/// `c_j` (for `j >= 2`), `d_j` (for `j >= 1`) and the `e(j1, j2)` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    /// `c[j - 2] = c_j`; absent for a single-point alphabet.
    pub c: Option<Vec<f64>>,
    /// `d[j - 1] = d_j`.
    pub d: Vec<f64>,
    pub e_table: Vec<ETableEntry>,
    pub degenerate: bool,
}

impl LemmaConstants {
    pub fn c(&self, j: usize) -> Option<f64> {
        self.c.as_ref()?.get(j.checked_sub(2)?).copied()
    }

    pub fn d(&self, j: usize) -> Option<f64> {
        self.d.get(j.checked_sub(1)?).copied()
    }

    pub fn e(&self, j1: usize, j2: usize) -> Option<f64> {
        self.e_table
            .iter()
            .find(|x| x.j1 == j1 && x.j2 == j2)
            .map(|x| x.value)
    }
}

/// Integer partitions of `total` into positive parts (nonincreasing).
fn partitions(total: u32) -> Vec<Vec<u32>> {
    fn go(rest: u32, cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=rest.min(cap)).rev() {
            cur.push(part);
            go(rest - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(total, total, &mut Vec::new(), &mut out);
    out
}

/// Nonempty multisets of shared pairs `(a, b)`, `a, b >= 1`, with
/// `sum a <= j1` and `sum b <= j2`.
fn shared_profiles(j1: u32, j2: u32) -> Vec<Vec<(u32, u32)>> {
    fn go(
        r1: u32,
        r2: u32,
        min: (u32, u32),
        cur: &mut Vec<(u32, u32)>,
        out: &mut Vec<Vec<(u32, u32)>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        for a in 1..=r1 {
            for b in 1..=r2 {
                if (a, b) < min {
                    continue;
                }
                cur.push((a, b));
                go(r1 - a, r2 - b, (a, b), cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(j1, j2, (0, 0), &mut Vec::new(), &mut out);
    out
}

/// `e(j1, j2)`: the minimum of `delta` over every multiplicity profile of an
/// overlapping pair of tuples with lengths `j1`, `j2`.
pub fn e_constant(j1: usize, j2: usize, alphabet: &ConfigAlphabet) -> f64 {
    let (j1, j2) = (j1 as u32, j2 as u32);
    let mut best = f64::INFINITY;
    for shared in shared_profiles(j1, j2) {
        let s1: u32 = shared.iter().map(|x| x.0).sum();
        let s2: u32 = shared.iter().map(|x| x.1).sum();
        let joint: f64 = shared.iter().map(|&(a, b)| moment(alphabet, a + b)).product();
        let split: f64 = shared
            .iter()
            .map(|&(a, b)| moment(alphabet, a) * moment(alphabet, b))
            .product();
        let gap = joint - split;
        // the cheapest private parts: products of moments over a partition
        let cheapest = |rest: u32| {
            partitions(rest)
                .iter()
                .map(|p| p.iter().map(|&w| moment(alphabet, w)).product::<f64>())
                .fold(f64::INFINITY, f64::min)
        };
        best = best.min(cheapest(j1 - s1) * cheapest(j2 - s2) * gap);
    }
    best
}

/// The constants for `j <= j_max` and `e(j1, j2)` with `j1, j2 <= pair_max`.
pub fn lemma_constants(
    alphabet: &ConfigAlphabet,
    j_max: usize,
    pair_max: usize,
) -> Result<LemmaConstants> {
    if j_max == 0 || pair_max == 0 {
        return Err(Error::InvalidArgument("j_max and pair_max must be >= 1".into()));
    }
    let degenerate = alphabet.is_degenerate();
    let m1 = moment(alphabet, 1);
    let c = (!degenerate).then(|| {
        let mut out = Vec::new();
        let mut running = f64::INFINITY;
        for i in 2..=j_max.max(2) {
            let base = m1.powi(i as i32);
            running = running.min((moment(alphabet, i as u32) - base) / base);
            if i <= j_max {
                out.push(running);
            }
        }
        out
    });
    let qmax = 1.0 - alphabet.p_min();
    let qav = 1.0 - alphabet.p_average();
    let d = (1..=j_max)
        .map(|j| {
            if degenerate {
                0.0
            } else {
                qmax.powi(j as i32) - qav.powi(j as i32)
            }
        })
        .collect();
    let mut e_table = Vec::new();
    for j1 in 1..=pair_max {
        for j2 in 1..=pair_max {
            let value = if degenerate {
                0.0
            } else {
                e_constant(j1, j2, alphabet)
            };
            e_table.push(ETableEntry { j1, j2, value });
        }
    }
    Ok(LemmaConstants {
        c,
        d,
        e_table,
        degenerate,
    })
}
