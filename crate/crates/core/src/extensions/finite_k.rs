//! Finitely many covariates. A hacker who picks uniformly among the
//! covariates that best match the noisy outcome now hits the true cause with
//! positive probability.

use crate::error::{domain, Result};
use crate::prob::{ln_choose, Binomial};
use crate::screen::{v_maven, NoiseLevel, ScreenParams};

use super::red_herring::red_herring_maven_payoff;

/// How the red herring relates to the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedHerring {
    /// Raw red herring is the complement of the outcome.
    Complement,
    /// Raw red herring is independent of the outcome.
    Independent,
}

/// Covariate count and the static parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteKParams {
    k: usize,
    screen: ScreenParams,
}

impl FiniteKParams {
    pub fn new(k: usize, screen: ScreenParams) -> Result<Self> {
        if k < 2 {
            return Err(domain(format!("covariate count K must be at least 2, got {k}")));
        }
        Ok(Self { k, screen })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn screen(&self) -> &ScreenParams {
        &self.screen
    }
}

/// Principal's utility against a hacker at zero noise with `K` covariates and
/// an independent red herring: `E[(1-B)/(1+B)]` for `B ~ Binom(K-1, 2^-N)`,
/// which equals `2 (1 - (1-p)^K) / (p K) - 1`.
pub fn finite_k_hacker_payoff_zero_noise(n: u32, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(domain(format!("covariate count K must be at least 2, got {k}")));
    }
    Ok(chao_payoff(0.5f64.powi(n as i32), k as f64))
}

/// `2 (1 - (1-p)^m) / (p m) - 1`, the zero-noise hacker payoff when the true
/// cause competes with `m - 1` decoys that each match with probability `p`.
pub(crate) fn chao_payoff(p: f64, m: f64) -> f64 {
    let one_minus = -(m * (-p).ln_1p()).exp_m1();
    2.0 * one_minus / (p * m) - 1.0
}

/// Exact principal utility against a hacker with `K` covariates at any noise
/// level.
///
/// The hacker picks uniformly among the covariates with the most noisy
/// matches. Conditional on picking a covariate other than the true cause
/// with `m` noisy matches, it passes with probability `(1-q)^m q^(N-m)`.
/// A complementary red herring never passes.
pub fn finite_k_hacker_payoff(q: NoiseLevel, n: u32, k: usize, herring: RedHerring) -> Result<f64> {
    if k < 2 {
        return Err(domain(format!("covariate count K must be at least 2, got {k}")));
    }
    let qv = q.value();
    let n64 = n as u64;
    let truth = Binomial::new(n64, 1.0 - qv)?;
    let decoy = Binomial::new(n64, 0.5)?;
    let (decoys, herring_dist) = match herring {
        RedHerring::Complement => (k - 2, Some(Binomial::new(n64, qv)?)),
        RedHerring::Independent => (k - 1, None),
    };
    let mut total = 0.0;
    for m in 0..=n64 {
        let value = -(1.0 - qv).powi(m as i32) * qv.powi((n64 - m) as i32);
        let t_at = truth.pmf(m);
        let t_below = if m == 0 { 0.0 } else { truth.cdf(m - 1) };
        let d_at = decoy.pmf(m);
        let d_below = if m == 0 { 0.0 } else { decoy.cdf(m - 1) };
        let (r_at, r_below) = match herring_dist {
            Some(r) => (r.pmf(m), if m == 0 { 0.0 } else { r.cdf(m - 1) }),
            None => (0.0, 1.0),
        };
        for (i, pi) in [(0u32, t_below), (1, t_at)] {
            if pi == 0.0 {
                continue;
            }
            for (r, pr) in [(0u32, r_below), (1, r_at)] {
                if pr == 0.0 {
                    continue;
                }
                for j in 0..=decoys {
                    let tied = i + r + j as u32;
                    if tied == 0 {
                        continue;
                    }
                    let w = level_weight(decoys, j, d_at, d_below);
                    if w == 0.0 {
                        continue;
                    }
                    // The complementary herring contributes 0 when chosen.
                    let payoff = (i as f64 + j as f64 * value) / tied as f64;
                    total += pi * pr * w * payoff;
                }
            }
        }
    }
    Ok(total)
}

/// `C(J, j) at^j below^(J-j)`: exactly `j` of `J` decoys at the top level, the
/// rest strictly below it.
fn level_weight(total: usize, j: usize, at: f64, below: f64) -> f64 {
    let rest = total - j;
    if (j > 0 && at == 0.0) || (rest > 0 && below == 0.0) {
        return 0.0;
    }
    let mut ln = ln_choose(total as u64, j as u64);
    if j > 0 {
        ln += j as f64 * at.ln();
    }
    if rest > 0 {
        ln += rest as f64 * below.ln();
    }
    ln.exp()
}

/// Exact principal payoff with `K` covariates: hacker term from
/// [`finite_k_hacker_payoff`], maven term as in the continuum.
pub fn finite_k_payoff(q: NoiseLevel, params: &FiniteKParams, herring: RedHerring) -> Result<f64> {
    let s = params.screen;
    let hacker = finite_k_hacker_payoff(q, s.n(), params.k, herring)?;
    let maven = match herring {
        RedHerring::Complement => v_maven(q, s.n()),
        RedHerring::Independent => red_herring_maven_payoff(q, s.n()),
    };
    Ok(s.h() * hacker + (1.0 - s.h()) * maven)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nl(q: f64) -> NoiseLevel {
        NoiseLevel::new(q).unwrap()
    }

    #[test]
    fn two_covariates() {
        for n in 1..=10 {
            let v = finite_k_hacker_payoff_zero_noise(n, 2).unwrap();
            assert!((v - (1.0 - 0.5f64.powi(n as i32))).abs() < 1e-14);
        }
        assert!(finite_k_hacker_payoff_zero_noise(3, 1).is_err());
    }

    #[test]
    fn matches_direct_expectation() {
        let b = Binomial::new(99, 0.125).unwrap();
        let direct = b.expect(|j| (1.0 - j as f64) / (1.0 + j as f64));
        let closed = finite_k_hacker_payoff_zero_noise(3, 100).unwrap();
        assert!((direct - closed).abs() < 1e-12, "{direct} vs {closed}");
    }

    #[test]
    fn large_k_limit() {
        let v = finite_k_hacker_payoff_zero_noise(3, 10_000_000).unwrap();
        assert!((v + 1.0).abs() < 1e-5);
    }

    #[test]
    fn strictly_decreasing_and_bounded() {
        for n in 1..=8 {
            let vals: Vec<f64> = (2..300).map(|k| finite_k_hacker_payoff_zero_noise(n, k).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "n={n}");
            assert!(vals.iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }

    #[test]
    fn exact_payoff_reduces_to_closed_form_at_zero_noise() {
        for n in 1..=6 {
            for k in [2, 3, 10, 100, 5000] {
                let exact = finite_k_hacker_payoff(NoiseLevel::ZERO, n, k, RedHerring::Independent).unwrap();
                let closed = finite_k_hacker_payoff_zero_noise(n, k).unwrap();
                assert!((exact - closed).abs() < 1e-10, "n={n} k={k}: {exact} vs {closed}");
                // Complement herring: one fewer decoy.
                let comp = finite_k_hacker_payoff(NoiseLevel::ZERO, n, k, RedHerring::Complement).unwrap();
                let expect = chao_payoff(0.5f64.powi(n as i32), (k - 1) as f64);
                assert!((comp - expect).abs() < 1e-10, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn exact_payoff_by_enumeration_for_tiny_k() {
        // Enumerate every noisy match count of K = 3 covariates, N = 2.
        let (n, q) = (2u32, 0.2);
        let truth = Binomial::new(2, 1.0 - q).unwrap();
        let other = Binomial::new(2, 0.5).unwrap();
        let value = |m: u64| -(1.0 - q).powi(m as i32) * q.powi(2 - m as i32);
        let mut expect = 0.0;
        for a in 0..=2u64 {
            for b in 0..=2u64 {
                for c in 0..=2u64 {
                    let p = truth.pmf(a) * other.pmf(b) * other.pmf(c);
                    let top = a.max(b).max(c);
                    let mut sum = 0.0;
                    let mut cnt = 0.0;
                    if a == top {
                        sum += 1.0;
                        cnt += 1.0;
                    }
                    for x in [b, c] {
                        if x == top {
                            sum += value(x);
                            cnt += 1.0;
                        }
                    }
                    expect += p * sum / cnt;
                }
            }
        }
        let got = finite_k_hacker_payoff(nl(q), n, 3, RedHerring::Independent).unwrap();
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn large_k_approaches_continuum() {
        for q in [0.05, 0.2] {
            let v = finite_k_hacker_payoff(nl(q), 3, 200_000, RedHerring::Complement).unwrap();
            assert!((v + (1.0 - q).powi(3)).abs() < 1e-3, "q={q}: {v}");
        }
    }
}
