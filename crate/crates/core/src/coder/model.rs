//! Integer frequency tables shared by encoder and decoder.
//!
//! Symbols `-B..=B` map to table slots `0..=2B`; slot `2B + 1` is the
//! escape. Probabilities become frequencies by giving every slot one count
//! and splitting the remaining `2^16 - (2B + 2)` counts by largest
//! remainder, ties going to the lower slot.

use crate::entropy::{gaussian_interval, FactorizedPrior};

pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolModel {
    pub bound: u32,
    pub freq: Vec<u32>,
    /// `cum[i]` is the start of slot `i`; `cum[len] = FREQ_TOTAL`.
    pub cum: Vec<u32>,
}

impl SymbolModel {
    /// Builds a table from slot probabilities (`2B + 2` entries, escape last).
    pub fn from_probs(probs: &[f64], bound: u32) -> Self {
        let n = 2 * bound as usize + 2;
        assert_eq!(probs.len(), n, "one probability per slot");
        assert!(n < FREQ_TOTAL as usize, "symbol bound too large for 16-bit tables");
        let spare = (FREQ_TOTAL as usize - n) as f64;
        let clean: Vec<f64> = probs.iter().map(|&p| if p.is_finite() && p > 0.0 { p } else { 0.0 }).collect();
        let total: f64 = clean.iter().sum();
        let ideal: Vec<f64> =
            if total > 0.0 { clean.iter().map(|p| p / total * spare).collect() } else { vec![spare / n as f64; n] };
        let mut freq: Vec<u32> = ideal.iter().map(|v| v.floor() as u32).collect();
        let assigned: u64 = freq.iter().map(|&f| f as u64).sum();
        let left = spare as u64 - assigned.min(spare as u64);
        // The `left` slots with the largest remainders (lower slot first on
        // ties) receive one extra count.
        let left = left as usize;
        for f in freq.iter_mut() {
            *f += (left / n) as u32;
        }
        let left = left % n;
        if left > 0 {
            let rem: Vec<f64> = ideal.iter().zip(&freq).map(|(v, &f)| v - f as f64).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.select_nth_unstable_by(left - 1, |&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
            for &i in &order[..left] {
                freq[i] += 1;
            }
        }
        for f in freq.iter_mut() {
            *f += 1;
        }
        let mut cum = Vec::with_capacity(n + 1);
        let mut acc = 0u32;
        for &f in &freq {
            cum.push(acc);
            acc += f;
        }
        cum.push(acc);
        debug_assert_eq!(acc, FREQ_TOTAL);
        SymbolModel { bound, freq, cum }
    }

    /// Discretized `N(mu, sigma)` on the lattice `k·q`.
    pub fn gaussian(mu: f64, sigma: f64, q: f64, bound: u32) -> Self {
        let b = bound as i64;
        // Beyond 40 sigma both CDF terms underflow to zero.
        let far = 40.0 * sigma + 0.5 * q;
        let mut probs: Vec<f64> = (-b..=b)
            .map(|k| {
                let y = k as f64 * q;
                if (y - mu).abs() > far {
                    0.0
                } else {
                    gaussian_interval(y, mu, sigma, q)
                }
            })
            .collect();
        let inside: f64 = probs.iter().sum();
        probs.push((1.0 - inside).max(0.0));
        Self::from_probs(&probs, bound)
    }

    /// Channel `c` of a factorized prior on the lattice `k·q`.
    pub fn factorized(prior: &FactorizedPrior, c: usize, q: f64, bound: u32) -> Self {
        let b = bound as i64;
        let mut probs: Vec<f64> = (-b..=b).map(|k| prior.interval(k as f64 * q, c, q)).collect();
        let lo = prior.cdf((-b as f64 - 0.5) * q, c);
        let hi = 1.0 - prior.cdf((b as f64 + 0.5) * q, c);
        probs.push(lo.max(0.0) + hi.max(0.0));
        Self::from_probs(&probs, bound)
    }

    pub fn escape_index(&self) -> usize {
        2 * self.bound as usize + 1
    }

    pub fn index_of(&self, v: i32) -> Option<usize> {
        let b = self.bound as i64;
        let v = v as i64;
        (-b..=b).contains(&v).then(|| (v + b) as usize)
    }

    pub fn symbol_of(&self, index: usize) -> i32 {
        (index as i64 - self.bound as i64) as i32
    }

    /// Slot whose interval contains the scaled target `v`.
    pub fn lookup(&self, v: u32) -> usize {
        self.cum.partition_point(|&c| c <= v) - 1
    }

    /// Bits spent on `v` by an ideal coder using this table.
    pub fn cost_bits(&self, v: i32) -> f64 {
        let bits = |f: u32| (FREQ_TOTAL as f64 / f as f64).log2();
        match self.index_of(v) {
            Some(i) => bits(self.freq[i]),
            None => bits(self.freq[self.escape_index()]) + 32.0,
        }
    }

    /// Symbol at quantile `u ∈ [0, 1)` of the table; the escape slot maps to
    /// `B + 1`.
    pub fn sample_hint(&self, u: f64) -> i32 {
        let v = ((u * FREQ_TOTAL as f64) as u32).min(FREQ_TOTAL - 1);
        let i = self.lookup(v);
        if i == self.escape_index() {
            self.bound as i32 + 1
        } else {
            self.symbol_of(i)
        }
    }
}
