//! The baseline screening model.
//!
//! A principal releases a binary dataset after flipping every covariate entry
//! independently with probability `q`. A hacker proposes any covariate that
//! matches the outcome on all `N` noisy observations; a maven compares the
//! true cause against a red herring (the complement of the outcome) and keeps
//! whichever matches more noisy observations. Proposals are tested on the raw
//! data.

use crate::error::{domain, Result};
use crate::prob::{choose, ln_choose, Binomial};
use crate::sweep::SweepTable;

/// Probability with which each released covariate bit is flipped.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub const ZERO: NoiseLevel = NoiseLevel(0.0);
    pub const HALF: NoiseLevel = NoiseLevel(0.5);

    pub fn new(q: f64) -> Result<Self> {
        if (0.0..=0.5).contains(&q) {
            Ok(Self(q))
        } else {
            Err(domain(format!("noise level q must lie in [0, 1/2], got {q}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `0, step, 2 step, ..., 1/2` (the last point is exactly 1/2).
    pub fn grid(step: f64) -> Result<Vec<NoiseLevel>> {
        if !(step > 0.0 && step <= 0.5) {
            return Err(domain(format!("grid step must lie in (0, 1/2], got {step}")));
        }
        let m = (0.5 / step).round() as usize;
        Ok((0..=m).map(|i| NoiseLevel((i as f64 * 0.5 / m as f64).min(0.5))).collect())
    }
}

/// Parameters of the static model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenParams {
    n: u32,
    h: f64,
    w_maven: f64,
    w_hacker: f64,
}

impl ScreenParams {
    /// `n` observations, hacker fraction `h`, truth weights of the two types.
    /// The weights only select the best responses; they do not enter payoffs.
    pub fn new(n: u32, h: f64, w_maven: f64, w_hacker: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain("number of observations N must be positive"));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(domain(format!("hacker fraction h must lie in (0, 1), got {h}")));
        }
        if !(w_maven > 0.5 && w_maven <= 1.0) {
            return Err(domain(format!("maven truth weight must lie in (1/2, 1], got {w_maven}")));
        }
        if !(0.0..=1.0).contains(&w_hacker) {
            return Err(domain(format!("hacker truth weight must lie in [0, 1], got {w_hacker}")));
        }
        Ok(Self { n, h, w_maven, w_hacker })
    }

    /// Default truth weights: 1 for the maven, 0 for the hacker.
    pub fn baseline(n: u32, h: f64) -> Result<Self> {
        Self::new(n, h, 1.0, 0.0)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn w_maven(&self) -> f64 {
        self.w_maven
    }

    pub fn w_hacker(&self) -> f64 {
        self.w_hacker
    }
}

/// Minimum number of raw-data matches for a proposal to pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdTest(u32);

impl ThresholdTest {
    pub fn new(pass_threshold: u32, n: u32) -> Result<Self> {
        if pass_threshold == 0 || pass_threshold > n {
            return Err(domain(format!("pass threshold must lie in 1..={n}, got {pass_threshold}")));
        }
        Ok(Self(pass_threshold))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

/// Pass probability of a maximally p-hacked proposal: `(1-q)^N`.
pub fn v_hacker(q: NoiseLevel, n: u32) -> f64 {
    (1.0 - q.0).powi(n as i32)
}

/// Pass probability of the maven: fewer than `N` of the `2N` bits on the two
/// candidate covariates flipped, or exactly `N` and a fair coin.
pub fn v_maven(q: NoiseLevel, n: u32) -> f64 {
    Binomial::new(2 * n as u64, q.0).expect("q is a probability").lt_with_half_tie(n as u64)
}

pub fn v_hacker_derivative(q: NoiseLevel, n: u32) -> f64 {
    -(n as f64) * (1.0 - q.0).powi(n as i32 - 1)
}

/// `-C(2N-1, N) N q^(N-1) (1-q)^(N-1)`.
pub fn v_maven_derivative(q: NoiseLevel, n: u32) -> f64 {
    let q = q.0;
    let n64 = n as u64;
    if n == 1 {
        return -1.0;
    }
    if q == 0.0 {
        return 0.0;
    }
    let ln = ln_choose(2 * n64 - 1, n64) + (n as f64).ln() + (n as f64 - 1.0) * (q.ln() + (-q).ln_1p());
    -ln.exp()
}

/// Principal's expected utility `-h V_hacker(q) + (1-h) V_maven(q)`.
pub fn principal_payoff(q: NoiseLevel, params: &ScreenParams) -> f64 {
    -params.h * v_hacker(q, params.n) + (1.0 - params.h) * v_maven(q, params.n)
}

pub fn principal_payoff_derivative(q: NoiseLevel, params: &ScreenParams) -> f64 {
    -params.h * v_hacker_derivative(q, params.n) + (1.0 - params.h) * v_maven_derivative(q, params.n)
}

/// Closed-form optimal noise level. Requires `N >= 2`.
///
/// Interior solution `(h/(1-h) / C(2N-1,N))^(1/(N-1))` while
/// `h/(1-h) <= C(2N-1,N) 2^-(N-1)`, otherwise the corner `1/2`.
pub fn optimal_noise(params: &ScreenParams) -> Result<NoiseLevel> {
    let n = params.n;
    if n < 2 {
        return Err(domain("optimal noise is undefined for N = 1 (exponent 1/(N-1))"));
    }
    let n64 = n as u64;
    let ln_ratio = (params.h / (1.0 - params.h)).ln();
    let ln_c = ln_choose(2 * n64 - 1, n64);
    let ln_corner = ln_c - (n as f64 - 1.0) * std::f64::consts::LN_2;
    if ln_ratio >= ln_corner {
        return Ok(NoiseLevel::HALF);
    }
    let q = ((ln_ratio - ln_c) / (n as f64 - 1.0)).exp();
    NoiseLevel::new(q.min(0.5))
}

/// First maximiser of `f` over the grid `0, step, ..., 1/2`.
pub fn grid_argmax(step: f64, f: impl Fn(NoiseLevel) -> f64) -> Result<NoiseLevel> {
    let grid = NoiseLevel::grid(step)?;
    let mut best = grid[0];
    let mut best_val = f(best);
    for &q in &grid[1..] {
        let v = f(q);
        if v > best_val {
            best = q;
            best_val = v;
        }
    }
    Ok(best)
}

/// Golden-section search for the maximiser of a unimodal `f` on `[a, b]`.
pub fn golden_section_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Numeric optimum of the principal's payoff: grid search with step `step`
/// followed by golden-section refinement to `tol` inside the neighbouring
/// grid cells.
pub fn numeric_optimal_noise(params: &ScreenParams, step: f64, tol: f64) -> Result<NoiseLevel> {
    let payoff = |q: NoiseLevel| principal_payoff(q, params);
    let coarse = grid_argmax(step, payoff)?.0;
    let lo = (coarse - step).max(0.0);
    let hi = (coarse + step).min(0.5);
    let refined = golden_section_max(lo, hi, tol, |q| payoff(NoiseLevel(q.clamp(0.0, 0.5))));
    let best = [lo, refined, hi].into_iter().map(NoiseLevel).fold(
        (NoiseLevel(coarse), payoff(NoiseLevel(coarse))),
        |acc, q| {
            let v = payoff(q);
            if v > acc.1 {
                (q, v)
            } else {
                acc
            }
        },
    );
    Ok(best.0)
}

/// Probability that the hacker's proposal (all noisy observations matching)
/// matches the outcome on at least `threshold` raw observations.
pub fn hacker_pass_with_threshold(q: NoiseLevel, threshold: ThresholdTest, n: u32) -> f64 {
    Binomial::new(n as u64, 1.0 - q.0).expect("1 - q is a probability").survival(threshold.0 as u64)
}

/// Principal payoff when a proposal passes with at least `threshold` raw
/// matches. The maven term is unchanged: the red herring never matches.
pub fn payoff_with_threshold(q: NoiseLevel, threshold: ThresholdTest, params: &ScreenParams) -> f64 {
    -params.h * hacker_pass_with_threshold(q, threshold, params.n) + (1.0 - params.h) * v_maven(q, params.n)
}

/// Threshold maximizing [`payoff_with_threshold`] at noise `q`; ties go to
/// the stricter threshold.
pub fn optimal_threshold(q: NoiseLevel, params: &ScreenParams) -> ThresholdTest {
    let mut best = ThresholdTest(params.n);
    let mut best_val = payoff_with_threshold(q, best, params);
    for t in (1..params.n).rev() {
        let v = payoff_with_threshold(q, ThresholdTest(t), params);
        if v > best_val {
            best = ThresholdTest(t);
            best_val = v;
        }
    }
    best
}

/// Payoff at the optimal noise level for each `N` (strictly ascending, each
/// at least 2). Long-format table with metrics `optimal_noise`, `payoff`,
/// `first_best` (`1-h`) and `gap_to_first_best`.
pub fn asymptotic_payoff_curve(h: f64, n_list: &[u32]) -> Result<SweepTable> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain("N list must be strictly ascending"));
    }
    let mut table = SweepTable::long();
    for &n in n_list {
        let params = ScreenParams::baseline(n, h)?;
        let q = optimal_noise(&params)?;
        let payoff = principal_payoff(q, &params);
        table.push_long(n, q.value(), "optimal_noise");
        table.push_long(n, payoff, "payoff");
        table.push_long(n, 1.0 - h, "first_best");
        table.push_long(n, 1.0 - h - payoff, "gap_to_first_best");
    }
    Ok(table)
}

/// Pass probabilities and payoff across noise levels. Metrics: `v_hacker`,
/// `bait_probability` (`1 - v_hacker`: chance that a covariate matching the
/// outcome in the release does not match it in the raw data), `v_maven` and
/// `payoff`.
pub fn static_sweep(params: &ScreenParams, qs: &[NoiseLevel]) -> SweepTable {
    let mut table = SweepTable::long();
    for &q in qs {
        let vh = v_hacker(q, params.n);
        table.push_long(q.value(), vh, "v_hacker");
        table.push_long(q.value(), 1.0 - vh, "bait_probability");
        table.push_long(q.value(), v_maven(q, params.n), "v_maven");
        table.push_long(q.value(), principal_payoff(q, params), "payoff");
    }
    table
}

/// `C(2N-1, N) 2^-(N-1)`: the hacker odds `h/(1-h)` above which no noise
/// level short of 1/2 is optimal.
pub fn corner_odds(n: u32) -> f64 {
    choose(2 * n as u64 - 1, n as u64) * 0.5f64.powi(n as i32 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nl(q: f64) -> NoiseLevel {
        NoiseLevel::new(q).unwrap()
    }

    fn params(n: u32, h: f64) -> ScreenParams {
        ScreenParams::baseline(n, h).unwrap()
    }

    // Maven pass probability by summing Binom(2N, q) probabilities directly.
    fn v_maven_oracle(q: f64, n: u32) -> f64 {
        let m = 2 * n;
        let pmf = |k: u32| {
            let mut c = 1.0;
            for i in 0..k {
                c = c * (m - i) as f64 / (i + 1) as f64;
            }
            c * q.powi(k as i32) * (1.0 - q).powi((m - k) as i32)
        };
        (0..n).map(pmf).sum::<f64>() + 0.5 * pmf(n)
    }

    #[test]
    fn validation() {
        assert!(NoiseLevel::new(0.51).is_err());
        assert!(NoiseLevel::new(-0.01).is_err());
        assert!(ScreenParams::new(5, 0.3, 0.5, 0.0).is_err());
        assert!(ScreenParams::new(5, 1.0, 0.9, 0.0).is_err());
        assert!(ScreenParams::new(0, 0.3, 0.9, 0.0).is_err());
        assert!(ScreenParams::new(5, 0.3, 0.9, 1.2).is_err());
        assert!(ThresholdTest::new(0, 5).is_err());
        assert!(ThresholdTest::new(6, 5).is_err());
        assert!(optimal_noise(&params(1, 0.3)).is_err());
    }

    #[test]
    fn v_hacker_examples() {
        for n in [1, 5, 100] {
            assert_eq!(v_hacker(NoiseLevel::ZERO, n), 1.0);
        }
        let bait = 1.0 - v_hacker(nl(0.01), 100);
        assert!((bait - 0.634).abs() < 5e-4, "{bait}");
        assert_eq!(v_hacker(NoiseLevel::HALF, 1), 0.5);
    }

    #[test]
    fn v_maven_examples() {
        for n in [1, 2, 5, 40, 150] {
            assert_eq!(v_maven(NoiseLevel::ZERO, n), 1.0);
            assert!((v_maven(NoiseLevel::HALF, n) - 0.5).abs() < 1e-12);
        }
        let v = v_maven(nl(0.1), 5);
        assert!((v - v_maven_oracle(0.1, 5)).abs() < 1e-14);
        for n in 1..=40 {
            for q in [0.01, 0.13, 0.3, 0.45] {
                assert!((v_maven(nl(q), n) - v_maven_oracle(q, n)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_at_zero() {
        for n in 2..=50 {
            assert_eq!(v_maven_derivative(NoiseLevel::ZERO, n), 0.0);
            assert_eq!(v_hacker_derivative(NoiseLevel::ZERO, n), -(n as f64));
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let step = 1e-6;
        for n in [1, 2, 3, 7, 15] {
            for q in [0.05, 0.2, 0.4] {
                let fd = |f: fn(NoiseLevel, u32) -> f64| (f(nl(q + step), n) - f(nl(q - step), n)) / (2.0 * step);
                assert!((fd(v_maven) - v_maven_derivative(nl(q), n)).abs() < 1e-5, "n={n} q={q}");
                assert!((fd(v_hacker) - v_hacker_derivative(nl(q), n)).abs() < 1e-5, "n={n} q={q}");
            }
        }
    }

    #[test]
    fn payoff_examples() {
        assert!((principal_payoff(NoiseLevel::ZERO, &params(7, 0.3)) - 0.4).abs() < 1e-15);
        for n in [1, 4, 9] {
            let h = 0.35;
            let expect = -h * 0.5f64.powi(n as i32) + (1.0 - h) * 0.5;
            assert!((principal_payoff(NoiseLevel::HALF, &params(n, h)) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_noise_examples() {
        // Frozen from a 1e-5 grid argmax of the payoff.
        let q = optimal_noise(&params(2, 0.5)).unwrap().value();
        assert!((q - 1.0 / 3.0).abs() < 1e-12);
        let g = grid_argmax(1e-5, |q| principal_payoff(q, &params(2, 0.5))).unwrap().value();
        assert!((g - 1.0 / 3.0).abs() <= 1e-5);

        assert_eq!(optimal_noise(&params(2, 0.7)).unwrap(), NoiseLevel::HALF);
        let g = grid_argmax(1e-5, |q| principal_payoff(q, &params(2, 0.7))).unwrap().value();
        assert_eq!(g, 0.5);
    }

    #[test]
    fn optimal_noise_comparative_statics() {
        for n in 2..=20 {
            let qs: Vec<f64> = (1..20).map(|i| optimal_noise(&params(n, i as f64 / 40.0)).unwrap().value()).collect();
            assert!(qs.windows(2).all(|w| w[0] < w[1] || w[1] == 0.5), "n={n}");
        }
        // In N the interior optimum tends to 1/4 from either side (C(2N-1,N)
        // grows like 4^N), so it is not monotone decreasing for small h.
        for h in [0.05, 0.3, 0.9] {
            let q = |n| optimal_noise(&params(n, h)).unwrap().value();
            assert!((q(2000) - 0.25).abs() < 5e-3, "h={h}: {}", q(2000));
        }
        assert!(optimal_noise(&params(3, 0.05)).unwrap().value() > optimal_noise(&params(2, 0.05)).unwrap().value());
        let high: Vec<f64> = (2..=40).map(|n| optimal_noise(&params(n, 0.9)).unwrap().value()).collect();
        assert!(high.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn numeric_optimum_matches_closed_form() {
        for n in [2, 3, 8, 20] {
            for h in [0.01, 0.1, 0.3, 0.6, 0.9] {
                let p = params(n, h);
                let closed = optimal_noise(&p).unwrap().value();
                let numeric = numeric_optimal_noise(&p, 1e-4, 1e-9).unwrap().value();
                assert!((closed - numeric).abs() < 1e-6, "n={n} h={h}: {closed} vs {numeric}");
            }
        }
    }

    #[test]
    fn golden_section_finds_interior_max() {
        let x = golden_section_max(0.0, 1.0, 1e-10, |x| -(x - 0.3).powi(2));
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn threshold_examples() {
        for n in [1, 3, 10] {
            for q in [0.0, 0.1, 0.4] {
                let p = params(n, 0.3);
                let full = payoff_with_threshold(nl(q), ThresholdTest::new(n, n).unwrap(), &p);
                assert!((full - principal_payoff(nl(q), &p)).abs() < 1e-12);
            }
            for t in 1..=n {
                assert_eq!(hacker_pass_with_threshold(NoiseLevel::ZERO, ThresholdTest::new(t, n).unwrap(), n), 1.0);
            }
        }
        let v = hacker_pass_with_threshold(NoiseLevel::HALF, ThresholdTest::new(1, 2).unwrap(), 2);
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_curve() {
        let ns: Vec<u32> = (2..=200).collect();
        let t = asymptotic_payoff_curve(0.3, &ns).unwrap();
        let payoffs = t.metric("payoff");
        assert_eq!(payoffs.len(), ns.len());
        let last = payoffs.last().unwrap().1;
        assert!((last - 0.7).abs() < 0.02, "{last}");
        assert!(payoffs.iter().all(|&(_, p)| p <= 0.7));
        assert!(payoffs.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9));
        assert!(asymptotic_payoff_curve(0.3, &[5, 4]).is_err());
    }

    #[test]
    fn static_sweep_reports_bait_probability() {
        let t = static_sweep(&params(100, 0.3), &[nl(0.01)]);
        let bait = t.metric("bait_probability")[0].1;
        assert!((bait - 0.634).abs() < 5e-4);
    }

    proptest! {
        #[test]
        fn closed_form_is_a_grid_maximum(n in 2u32..=30, h in 0.01f64..0.99) {
            let p = params(n, h);
            let best = principal_payoff(optimal_noise(&p).unwrap(), &p);
            for q in NoiseLevel::grid(1e-3).unwrap() {
                prop_assert!(principal_payoff(q, &p) <= best + 1e-12);
            }
        }

        #[test]
        fn strictest_threshold_is_optimal(n in 1u32..=40, h in 0.01f64..0.99, q in 0.0f64..=0.5) {
            let p = params(n, h);
            prop_assert_eq!(optimal_threshold(nl(q), &p).value(), n);
        }
    }
}
