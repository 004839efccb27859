//! Non-i.i.d. observations: covariate vectors drawn from an arbitrary
//! full-support distribution over `{0,1}^N`, evaluated by exact enumeration.

use rand::Rng;

use crate::error::{domain, Result};
use crate::prob::{check_enum_capacity, BitVector};
use crate::screen::{v_maven, NoiseLevel};

/// A full-support distribution over binary vectors of length `n`, stored as
/// a dense table indexed by the packed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BitVectorDist {
    n: usize,
    mass: Vec<f64>,
}

impl BitVectorDist {
    pub fn new(n: usize, mass: Vec<f64>) -> Result<Self> {
        check_enum_capacity(n)?;
        if mass.len() != 1 << n {
            return Err(domain(format!("expected {} masses for N = {n}, got {}", 1usize << n, mass.len())));
        }
        if let Some((i, m)) = mass.iter().enumerate().find(|(_, &m)| !(m > 0.0 && m.is_finite())) {
            return Err(domain(format!("mass of vector {i} is {m}; full support requires every mass > 0")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(domain(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { n, mass })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_enum_capacity(n)?;
        let m = 1usize << n;
        Ok(Self { n, mass: vec![1.0 / m as f64; m] })
    }

    /// Normalizes positive weights into a distribution.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(domain("weights must have a positive sum"));
        }
        Self::new(n, weights.into_iter().map(|w| w / total).collect())
    }

    /// Random full-support distribution with weights uniform on `[0.05, 1)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        check_enum_capacity(n)?;
        let weights = (0..1usize << n).map(|_| rng.random_range(0.05..1.0)).collect();
        Self::from_weights(n, weights)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mass(&self, x: &BitVector) -> Result<f64> {
        self.check(x)?;
        Ok(self.mass[x.bits() as usize])
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    fn check(&self, x: &BitVector) -> Result<()> {
        if x.len() != self.n {
            return Err(domain(format!("vector has length {}, distribution has N = {}", x.len(), self.n)));
        }
        Ok(())
    }

    /// Mass of the vectors at Hamming distance one from `y`.
    pub fn neighbour_mass(&self, y: &BitVector) -> Result<f64> {
        self.check(y)?;
        Ok((0..self.n).map(|i| self.mass[(y.bits() ^ (1 << i)) as usize]).sum())
    }
}

fn flip_weights(q: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|d| q.powi(d as i32) * (1.0 - q).powi((n - d) as i32)).collect()
}

/// Probability of observing `x` in the release: `sum_z mu(z) q^D(z,x) (1-q)^(N-D(z,x))`.
pub fn noisy_marginal(mu: &BitVectorDist, q: NoiseLevel, x: &BitVector) -> Result<f64> {
    mu.check(x)?;
    let w = flip_weights(q.value(), mu.n);
    let xb = x.bits();
    Ok(mu.mass.iter().enumerate().map(|(z, &m)| m * w[(z as u64 ^ xb).count_ones() as usize]).sum())
}

/// The whole released distribution, applying the flip channel one
/// coordinate at a time (`O(N 2^N)`).
pub fn noisy_marginals(mu: &BitVectorDist, q: NoiseLevel) -> Vec<f64> {
    let q = q.value();
    let mut cur = mu.mass.clone();
    for i in 0..mu.n {
        let bit = 1usize << i;
        for x in 0..cur.len() {
            if x & bit == 0 {
                let (a, b) = (cur[x], cur[x | bit]);
                cur[x] = (1.0 - q) * a + q * b;
                cur[x | bit] = q * a + (1.0 - q) * b;
            }
        }
    }
    cur
}

/// `P[X = y | released X = x] = (1-q)^(N-k) q^k mu(y) / mu_q(x)` with
/// `k = D(x, y)`.
pub fn posterior_match(mu: &BitVectorDist, q: NoiseLevel, y: &BitVector, x: &BitVector) -> Result<f64> {
    let k = y.hamming(x)?;
    let n = mu.n;
    let qv = q.value();
    let num = (1.0 - qv).powi((n - k) as i32) * qv.powi(k as i32) * mu.mass(y)?;
    Ok(num / noisy_marginal(mu, q, x)?)
}

/// Pass probability of a hacker who proposes a covariate whose release equals
/// the outcome: `sum_y mu(y) P[X = y | released X = y]`.
pub fn v_hacker_noniid(mu: &BitVectorDist, q: NoiseLevel) -> f64 {
    let marg = noisy_marginals(mu, q);
    let stay = (1.0 - q.value()).powi(mu.n as i32);
    mu.mass.iter().zip(&marg).map(|(&m, &mq)| m * stay * m / mq).sum()
}

/// `d/dq v_hacker_noniid` at `q = 0`: `-sum_y mu(z : D(z,y) = 1)`.
pub fn v_hacker_noniid_derivative_at_zero(mu: &BitVectorDist) -> f64 {
    -(0..mu.mass.len()).map(|y| (0..mu.n).map(|i| mu.mass[y ^ (1 << i)]).sum::<f64>()).sum::<f64>()
}

/// Principal payoff with correlated observations. The maven's pass
/// probability does not depend on the distribution.
pub fn noniid_payoff(mu: &BitVectorDist, q: NoiseLevel, h: f64) -> f64 {
    -h * v_hacker_noniid(mu, q) + (1.0 - h) * v_maven(q, mu.n as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nl(q: f64) -> NoiseLevel {
        NoiseLevel::new(q).unwrap()
    }

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(BitVectorDist::new(2, vec![0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(BitVectorDist::new(2, vec![0.4, 0.3, 0.2, 0.2]).is_err());
        assert!(BitVectorDist::new(2, vec![0.5, 0.5]).is_err());
        assert!(matches!(BitVectorDist::uniform(25), Err(crate::Error::Capacity { .. })));
    }

    #[test]
    fn uniform_is_noise_invariant() {
        let mu = BitVectorDist::uniform(4).unwrap();
        for q in [0.0, 0.1, 0.5] {
            for x in BitVector::all(4).unwrap() {
                assert!((noisy_marginal(&mu, nl(q), &x).unwrap() - 1.0 / 16.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_noise_marginal_is_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = BitVectorDist::random(3, &mut rng).unwrap();
        for x in BitVector::all(3).unwrap() {
            assert_eq!(noisy_marginal(&mu, NoiseLevel::ZERO, &x).unwrap(), mu.mass(&x).unwrap());
        }
    }

    #[test]
    fn two_bit_hand_sum() {
        // Index = packed bits (coordinate 0 is the low bit): 00, 10, 01, 11.
        let mu = BitVectorDist::new(2, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let expect = 0.4 * 0.75 * 0.75 + 0.3 * 0.25 * 0.75 + 0.2 * 0.25 * 0.75 + 0.1 * 0.25 * 0.25;
        let got = noisy_marginal(&mu, nl(0.25), &bv("00")).unwrap();
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn channel_and_direct_sum_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=8 {
            let mu = BitVectorDist::random(n, &mut rng).unwrap();
            for q in [0.0, 0.07, 0.3, 0.5] {
                let table = noisy_marginals(&mu, nl(q));
                for x in BitVector::all(n).unwrap() {
                    let direct = noisy_marginal(&mu, nl(q), &x).unwrap();
                    assert!((direct - table[x.bits() as usize]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn posterior_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = BitVectorDist::random(4, &mut rng).unwrap();
        let y = bv("1011");
        assert!((posterior_match(&mu, NoiseLevel::ZERO, &y, &y).unwrap() - 1.0).abs() < 1e-15);
        let u = BitVectorDist::uniform(5).unwrap();
        let y = bv("10110");
        for q in [0.05, 0.2, 0.45] {
            let p = posterior_match(&u, nl(q), &y, &y).unwrap();
            assert!((p - (1.0 - q).powi(5)).abs() < 1e-14);
        }
    }

    #[test]
    fn posterior_argmax_is_the_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..200 {
            let n = 3 + trial % 6;
            let mu = BitVectorDist::random(n, &mut rng).unwrap();
            for q in [0.1, 0.3, 0.49] {
                let marg = noisy_marginals(&mu, nl(q));
                for y in BitVector::all(n).unwrap() {
                    let at = |x: &BitVector| {
                        let k = y.hamming(x).unwrap();
                        (1.0 - q).powi((n - k) as i32) * q.powi(k as i32) * mu.mass(&y).unwrap()
                            / marg[x.bits() as usize]
                    };
                    let own = at(&y);
                    for x in BitVector::all(n).unwrap() {
                        assert!(at(&x) <= own * (1.0 + 1e-12), "n={n} q={q} y={y} x={x}");
                    }
                }
            }
        }
    }

    #[test]
    fn hacker_value_reduces_to_iid() {
        for n in 1..=12 {
            let u = BitVectorDist::uniform(n).unwrap();
            for i in 0..=10 {
                let q = i as f64 * 0.05;
                let v = v_hacker_noniid(&u, nl(q));
                assert!((v - (1.0 - q).powi(n as i32)).abs() < 1e-10, "n={n} q={q}");
            }
            assert!((v_hacker_noniid_derivative_at_zero(&u) + n as f64).abs() < 1e-12);
        }
        assert_eq!(v_hacker_noniid(&BitVectorDist::uniform(3).unwrap(), NoiseLevel::ZERO), 1.0);
    }

    #[test]
    fn derivative_at_zero_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=7 {
            let mu = BitVectorDist::random(n, &mut rng).unwrap();
            let d = v_hacker_noniid_derivative_at_zero(&mu);
            assert!(d < 0.0);
            let step = 1e-5;
            let fd = (v_hacker_noniid(&mu, nl(step)) - v_hacker_noniid(&mu, NoiseLevel::ZERO)) / step;
            assert!((fd - d).abs() < 1e-3, "n={n}: {fd} vs {d}");
        }
    }
}
