//! Log-space helpers shared by the exact evaluators.

/// `ln(k!)` for `k = 0..=max`.
#[derive(Debug, Clone)]
pub(crate) struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub(crate) fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..=max {
            acc += (k as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    pub(crate) fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
}

/// Mean of `prod q` over a uniformly random ordered `j`-subset (drawn without
/// replacement) of a multiset holding `counts[l]` copies of `qs[l]`, for
/// `j = 0..=max_j`. Entries beyond the multiset size are zero.
pub(crate) fn without_replacement_means(
    counts: &[usize],
    qs: &[f64],
    max_j: usize,
    lnf: &LnFactorials,
) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let top = max_j.min(total);
    // ln of the degree-j coefficient of prod_l (1 + q_l x)^{c_l}
    let mut acc = vec![f64::NEG_INFINITY; top + 1];
    acc[0] = 0.0;
    let mut reach = 0usize;
    let mut scratch = Vec::with_capacity(top + 1);
    for (&c, &q) in counts.iter().zip(qs) {
        if c == 0 {
            continue;
        }
        let lq = q.ln();
        let new_reach = (reach + c).min(top);
        let mut next = vec![f64::NEG_INFINITY; top + 1];
        for (j, slot) in next.iter_mut().enumerate().take(new_reach + 1) {
            scratch.clear();
            let k_lo = j.saturating_sub(reach);
            let k_hi = j.min(c);
            for k in k_lo..=k_hi {
                let prev = acc[j - k];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                scratch.push(prev + lnf.ln_choose(c, k) + k as f64 * lq);
            }
            *slot = log_sum_exp(&scratch);
        }
        acc = next;
        reach = new_reach;
    }
    let mut out = vec![0.0; max_j + 1];
    for j in 0..=top {
        out[j] = (acc[j] - lnf.ln_choose(total, j)).exp();
    }
    out[0] = 1.0;
    out
}

/// Binomial convolution in log space: `c_j = sum_k C(j,k) a_k b_{j-k}`.
pub(crate) fn log_binomial_convolve(a: &[f64], b: &[f64], lnf: &LnFactorials) -> Vec<f64> {
    let len = a.len().min(b.len());
    let mut out = vec![f64::NEG_INFINITY; len];
    let mut scratch = Vec::with_capacity(len);
    for (j, slot) in out.iter_mut().enumerate() {
        scratch.clear();
        for k in 0..=j {
            let t = a[k] + b[j - k];
            if t > f64::NEG_INFINITY {
                scratch.push(t + lnf.ln_choose(j, k));
            }
        }
        *slot = log_sum_exp(&scratch);
    }
    out
}

/// `e`-fold binomial-convolution power of a log-space sequence.
pub(crate) fn log_binomial_power(base: &[f64], mut e: usize, lnf: &LnFactorials) -> Vec<f64> {
    let len = base.len();
    let mut result = vec![f64::NEG_INFINITY; len];
    result[0] = 0.0;
    let mut sq = base.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            result = log_binomial_convolve(&result, &sq, lnf);
        }
        e >>= 1;
        if e > 0 {
            sq = log_binomial_convolve(&sq, &sq, lnf);
        }
    }
    result
}
