//! Binomial probabilities and binary-vector utilities.
//!
//! Probabilities for up to [`DIRECT_MAX_TRIALS`] trials are evaluated as a
//! direct product with an exact binomial coefficient; larger distributions go
//! through log space so that terms like `0.5^400` do not underflow.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use statrs::function::factorial::ln_binomial;

use crate::error::{domain, Error, Result};

/// Largest trial count evaluated with the direct-product formula.
pub const DIRECT_MAX_TRIALS: u64 = 30;

/// Largest vector length accepted by exhaustive enumeration.
pub const MAX_ENUM_BITS: usize = 24;

/// Largest vector length a [`BitVector`] can hold.
pub const MAX_BITS: usize = 64;

fn pascal() -> &'static [Vec<f64>] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(DIRECT_MAX_TRIALS as usize + 1);
        rows.push(vec![1.0]);
        for n in 1..=DIRECT_MAX_TRIALS as usize {
            let prev = &rows[n - 1];
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            rows.push(row);
        }
        rows
    })
}

/// Natural log of the binomial coefficient `C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if n <= DIRECT_MAX_TRIALS {
        return pascal()[n as usize][k as usize].ln();
    }
    ln_binomial(n, k)
}

/// Binomial coefficient as a float. Exact for `n <= 30`.
pub fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= DIRECT_MAX_TRIALS {
        return pascal()[n as usize][k as usize];
    }
    ln_binomial(n, k).exp()
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(domain(format!("{what} must lie in [0, 1], got {p}")))
    }
}

/// A binomial distribution with `trials` independent draws of probability
/// `success_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binomial {
    trials: u64,
    success_prob: f64,
}

impl Binomial {
    pub fn new(trials: u64, success_prob: f64) -> Result<Self> {
        check_prob(success_prob, "success probability")?;
        Ok(Self { trials, success_prob })
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    /// `P[X = k]`; zero when `k` exceeds the trial count.
    pub fn pmf(&self, k: u64) -> f64 {
        let n = self.trials;
        if k > n {
            return 0.0;
        }
        let p = self.success_prob;
        if p == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if p == 1.0 {
            return if k == n { 1.0 } else { 0.0 };
        }
        if n <= DIRECT_MAX_TRIALS {
            pascal()[n as usize][k as usize] * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        } else {
            (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
        }
    }

    /// All probabilities `P[X = 0], ..., P[X = n]`.
    pub fn pmfs(&self) -> Vec<f64> {
        (0..=self.trials).map(|k| self.pmf(k)).collect()
    }

    /// `sum_{j=lo}^{hi} P[X = j]`.
    ///
    /// The term nearest the mode is evaluated once (in log space for large
    /// trial counts) and the others by the ratio recurrence, moving away from
    /// the mode so that only negligible terms can underflow.
    pub fn range_sum(&self, lo: u64, hi: u64) -> f64 {
        let n = self.trials;
        let hi = hi.min(n);
        if lo > hi {
            return 0.0;
        }
        let p = self.success_prob;
        if p == 0.0 || p == 1.0 {
            return (lo..=hi).map(|j| self.pmf(j)).sum();
        }
        let odds = p / (1.0 - p);
        let mode = (((n + 1) as f64) * p).floor() as u64;
        let anchor = mode.clamp(lo, hi);
        let top = self.pmf(anchor);
        let mut total = top;
        let mut term = top;
        for j in (lo..anchor).rev() {
            // P[j] = P[j+1] * (j+1) / ((n-j) * odds)
            term *= (j + 1) as f64 / ((n - j) as f64 * odds);
            total += term;
        }
        term = top;
        for j in anchor..hi {
            term *= (n - j) as f64 * odds / (j + 1) as f64;
            total += term;
        }
        total.min(1.0)
    }

    /// `P[X <= k]`.
    pub fn cdf(&self, k: u64) -> f64 {
        if k >= self.trials {
            return 1.0;
        }
        self.range_sum(0, k)
    }

    /// `P[X >= k]`.
    pub fn survival(&self, k: u64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        self.range_sum(k, self.trials)
    }

    /// `P[X < k] + P[X = k] / 2`, the pass probability of a comparison that
    /// splits ties evenly.
    pub fn lt_with_half_tie(&self, k: u64) -> f64 {
        if k > self.trials {
            return 1.0;
        }
        let below = if k == 0 { 0.0 } else { self.range_sum(0, k - 1) };
        (below + 0.5 * self.pmf(k)).min(1.0)
    }

    /// Mean of `g(X)`, summed over the support.
    pub fn expect(&self, mut g: impl FnMut(u64) -> f64) -> f64 {
        (0..=self.trials).map(|k| self.pmf(k) * g(k)).sum()
    }
}

/// `C(n,k) p^k (1-p)^(n-k)`, rejecting `k > n`.
pub fn binom_pmf(n: u64, p: f64, k: u64) -> Result<f64> {
    if k > n {
        return Err(domain(format!("k = {k} outside 0..={n}")));
    }
    Ok(Binomial::new(n, p)?.pmf(k))
}

/// `P[Binom(n,p) < k] + P[Binom(n,p) = k] / 2`.
pub fn binom_cdf_lt_with_half_tie(n: u64, p: f64, k: u64) -> Result<f64> {
    if k > n {
        return Err(domain(format!("k = {k} outside 0..={n}")));
    }
    Ok(Binomial::new(n, p)?.lt_with_half_tie(k))
}

/// A vector in `{0,1}^len`, packed into a machine word. Coordinate `i` is bit
/// `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    bits: u64,
    len: u8,
}

impl BitVector {
    pub fn new(bits: u64, len: usize) -> Result<Self> {
        if len > MAX_BITS {
            return Err(Error::Capacity { what: "bit-vector length", got: len, max: MAX_BITS });
        }
        if len < MAX_BITS && bits >> len != 0 {
            return Err(domain(format!("bits {bits:#x} do not fit in length {len}")));
        }
        Ok(Self { bits, len: len as u8 })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(0, len)
    }

    pub fn ones(len: usize) -> Result<Self> {
        Self::new(mask(len), len)
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        if bits.len() > MAX_BITS {
            return Err(Error::Capacity { what: "bit-vector length", got: bits.len(), max: MAX_BITS });
        }
        let word = bits.iter().enumerate().fold(0u64, |acc, (i, &b)| if b { acc | 1 << i } else { acc });
        Self::new(word, bits.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len() && (self.bits >> i) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn complement(&self) -> Self {
        Self { bits: !self.bits & mask(self.len()), len: self.len }
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.same_len(other)?;
        Ok(Self { bits: self.bits ^ other.bits, len: self.len })
    }

    /// Number of coordinates in which two equal-length vectors differ.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        self.same_len(other)?;
        Ok((self.bits ^ other.bits).count_ones() as usize)
    }

    fn same_len(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(domain(format!("bit-vector length mismatch: {} vs {}", self.len, other.len)));
        }
        Ok(())
    }

    /// Every vector of length `len`, in increasing numeric order.
    pub fn all(len: usize) -> Result<impl Iterator<Item = BitVector>> {
        check_enum_capacity(len)?;
        Ok((0..1u64 << len).map(move |bits| BitVector { bits, len: len as u8 }))
    }
}

/// Free-function form of [`BitVector::hamming`].
pub fn hamming_distance(x: &BitVector, y: &BitVector) -> Result<usize> {
    x.hamming(y)
}

pub(crate) fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

pub fn check_enum_capacity(len: usize) -> Result<()> {
    if len > MAX_ENUM_BITS {
        Err(Error::Capacity { what: "enumeration length N", got: len, max: MAX_ENUM_BITS })
    } else {
        Ok(())
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bools = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(domain(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bools(&bools)
    }
}
