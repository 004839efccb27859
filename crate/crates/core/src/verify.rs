//! Oracle cross-checks. Every check compares a library result with an
//! independent computation (direct sums, enumeration, finite differences or
//! simulation) and reports the worst discrepancy against its tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamic::{flow_utility, stock_transition};
use crate::extensions::*;
use crate::mc::{Moments, StreamKey};
use crate::prob::{Binomial, BitVector};
use crate::regression::*;
use crate::screen::*;
use crate::sweep::SweepTable;
use crate::Result;

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst discrepancy observed (or a violation count).
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn within(name: &'static str, error: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name, error, tolerance, passed: error <= tolerance, detail: detail.into() }
    }

    fn holds(name: &'static str, ok: bool, detail: impl Into<String>) -> Self {
        Self { name, error: if ok { 0.0 } else { 1.0 }, tolerance: 0.0, passed: ok, detail: detail.into() }
    }
}

pub const VERIFY_COLUMNS: [&str; 5] = ["check", "passed", "error", "tolerance", "detail"];

pub fn to_table(results: &[CheckResult]) -> SweepTable {
    let mut t = SweepTable::new(VERIFY_COLUMNS);
    for r in results {
        t.push(vec![
            r.name.into(),
            (if r.passed { "true" } else { "false" }).into(),
            r.error.into(),
            r.tolerance.into(),
            r.detail.clone().into(),
        ])
        .expect("row width matches header");
    }
    t
}

type CheckFn = fn(u64) -> Result<CheckResult>;

/// Names and bodies of every check, in run order.
pub const CHECKS: [(&str, CheckFn); 28] = [
    ("bait_probability_direct_product", bait_probability),
    ("binomial_pmf_summation", binomial_pmf_summation),
    ("v_maven_pmf_summation", v_maven_pmf_summation),
    ("derivatives_central_difference", derivatives_central_difference),
    ("derivatives_at_zero", derivatives_at_zero),
    ("payoff_at_half", payoff_at_half),
    ("optimal_noise_grid_examples", optimal_noise_grid_examples),
    ("optimal_noise_grid_sweep", optimal_noise_grid_sweep),
    ("threshold_pass_probability", threshold_pass_probability),
    ("threshold_dominance", threshold_dominance),
    ("asymptotic_payoff", asymptotic_payoff),
    ("noniid_hand_sum", noniid_hand_sum),
    ("noniid_uniform_reduction", noniid_uniform_reduction),
    ("noniid_argmax_and_slope", noniid_argmax_and_slope),
    ("noniid_derivative_difference", noniid_derivative_difference),
    ("red_herring_zero_noise", red_herring_zero_noise),
    ("red_herring_threshold", red_herring_threshold_check),
    ("finite_k_closed_form", finite_k_closed_form),
    ("binary_game_simulation", binary_game_simulation),
    ("no_true_cause_posteriors", no_true_cause_posterior_check),
    ("no_true_cause_noise_helps", no_true_cause_noise_helps),
    ("no_true_cause_reductions", no_true_cause_reductions),
    ("dynamic_flow_and_transition", dynamic_flow_and_transition),
    ("regression_raw_moments", regression_raw_moments),
    ("ols_normal_equations", ols_normal_equations),
    ("regression_pure_noise_symmetry", regression_pure_noise_symmetry),
    ("regression_causal_pass_rate", regression_causal_pass_rate),
    ("optimal_noise_example_n2", optimal_noise_example_n2),
];

/// Runs every check. A check that errors is reported as failed.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            f(seed).unwrap_or_else(|e| CheckResult {
                name,
                error: f64::INFINITY,
                tolerance: 0.0,
                passed: false,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}

fn nl(q: f64) -> Result<NoiseLevel> {
    NoiseLevel::new(q)
}

// Binomial coefficient by the multiplicative recurrence.
fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

fn pmf(n: u64, p: f64, k: u64) -> f64 {
    choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

fn v_maven_oracle(q: f64, n: u32) -> f64 {
    let m = 2 * n as u64;
    (0..n as u64).map(|k| pmf(m, q, k)).sum::<f64>() + 0.5 * pmf(m, q, n as u64)
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

// Second-order one-sided difference at 0.
fn forward_derivative(f: impl Fn(f64) -> f64, step: f64) -> f64 {
    (-3.0 * f(0.0) + 4.0 * f(step) - f(2.0 * step)) / (2.0 * step)
}

fn bait_probability(_: u64) -> Result<CheckResult> {
    let product = (0..100).fold(1.0, |acc, _| acc * 0.99);
    let v = v_hacker(nl(0.01)?, 100);
    let bait = 1.0 - v;
    let err = (v - product).abs().max(((bait - 0.634).abs() - 5e-4).max(0.0));
    Ok(CheckResult::within("bait_probability_direct_product", err, 1e-12, format!("bait probability {bait:.6}")))
}

fn binomial_pmf_summation(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for (n, p, k) in [(4u64, 0.25, 2u64), (10, 0.1, 5), (30, 0.37, 11), (7, 0.5, 0)] {
        let b = Binomial::new(n, p)?;
        let direct: f64 = (0..k).map(|j| pmf(n, p, j)).sum::<f64>() + 0.5 * pmf(n, p, k);
        errs.push(b.lt_with_half_tie(k) - direct);
        errs.push(b.pmf(k) - pmf(n, p, k));
    }
    Ok(CheckResult::within("binomial_pmf_summation", max_abs(errs), 1e-12, ""))
}

fn v_maven_pmf_summation(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for n in 1..=40 {
        for q in [0.01, 0.1, 0.25, 0.45] {
            errs.push(v_maven(nl(q)?, n) - v_maven_oracle(q, n));
        }
    }
    Ok(CheckResult::within("v_maven_pmf_summation", max_abs(errs), 1e-12, "N in 1..=40"))
}

fn derivatives_central_difference(_: u64) -> Result<CheckResult> {
    let step = 1e-6;
    let mut errs = Vec::new();
    for n in [1, 2, 3, 7, 15, 30] {
        for q in [0.05, 0.2, 0.4] {
            let fd = |f: fn(NoiseLevel, u32) -> f64| -> Result<f64> {
                Ok((f(nl(q + step)?, n) - f(nl(q - step)?, n)) / (2.0 * step))
            };
            errs.push(fd(v_maven)? - v_maven_derivative(nl(q)?, n));
            errs.push(fd(v_hacker)? - v_hacker_derivative(nl(q)?, n));
        }
    }
    Ok(CheckResult::within("derivatives_central_difference", max_abs(errs), 1e-5, "step 1e-6"))
}

fn derivatives_at_zero(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for n in 2..=50 {
        let vm = forward_derivative(|q| v_maven(NoiseLevel::new(q).unwrap(), n), 1e-5);
        let vh = forward_derivative(|q| v_hacker(NoiseLevel::new(q).unwrap(), n), 1e-5);
        errs.push(vm);
        errs.push(vh + n as f64);
    }
    Ok(CheckResult::within("derivatives_at_zero", max_abs(errs), 1e-4, "N in 2..=50"))
}

fn payoff_at_half(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for n in [1, 4, 9, 30] {
        for h in [0.1, 0.35, 0.8] {
            let expect = -h * 0.5f64.powi(n as i32) + (1.0 - h) * 0.5;
            errs.push(principal_payoff(NoiseLevel::HALF, &ScreenParams::baseline(n, h)?) - expect);
        }
    }
    Ok(CheckResult::within("payoff_at_half", max_abs(errs), 1e-12, ""))
}

// Argmax of the payoff over a uniform grid; first maximum wins.
fn grid_oracle(params: &ScreenParams, step: f64) -> Result<f64> {
    let steps = (0.5 / step).round() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let q = (i as f64 * step).min(0.5);
        let v = principal_payoff(nl(q)?, params);
        if v > best.1 {
            best = (q, v);
        }
    }
    Ok(best.0)
}

fn optimal_noise_grid_examples(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for (n, h, expect) in [(2, 0.5, 1.0 / 3.0), (2, 0.7, 0.5)] {
        let p = ScreenParams::baseline(n, h)?;
        errs.push(optimal_noise(&p)?.value() - expect);
        errs.push((grid_oracle(&p, 1e-5)? - expect).abs().max(1e-5) - 1e-5);
    }
    Ok(CheckResult::within("optimal_noise_grid_examples", max_abs(errs), 1e-12, "grid step 1e-5"))
}

/// Closed-form optimum against a grid argmax for `N` in `2..=30` and 99
/// values of `h`. Returns the worst gap and the number of corner solutions.
pub fn optimal_noise_sweep(step: f64) -> Result<(f64, usize, usize)> {
    let mut worst = 0.0f64;
    let mut corners = 0;
    let mut cells = 0;
    for n in 2..=30 {
        for i in 1..=99 {
            let p = ScreenParams::baseline(n, i as f64 / 100.0)?;
            let closed = optimal_noise(&p)?.value();
            let grid = grid_oracle(&p, step)?;
            worst = worst.max((closed - grid).abs());
            corners += usize::from(closed == 0.5);
            cells += 1;
        }
    }
    Ok((worst, corners, cells))
}

fn optimal_noise_grid_sweep(_: u64) -> Result<CheckResult> {
    let (worst, corners, cells) = optimal_noise_sweep(1e-4)?;
    Ok(CheckResult::within(
        "optimal_noise_grid_sweep",
        worst,
        1e-4,
        format!("{cells} cells, {corners} corner solutions"),
    ))
}

fn threshold_pass_probability(_: u64) -> Result<CheckResult> {
    let v = hacker_pass_with_threshold(NoiseLevel::HALF, ThresholdTest::new(1, 2)?, 2);
    let direct = pmf(2, 0.5, 0) + pmf(2, 0.5, 1);
    Ok(CheckResult::within("threshold_pass_probability", (v - 0.75).abs().max((v - direct).abs()), 1e-15, ""))
}

/// Draws `samples` random `(N, h, q)` and counts cases where some threshold
/// below `N` beats the strict test.
pub fn threshold_violations(samples: usize, seed: u64) -> Result<usize> {
    let mut rng = StreamKey::new(seed, "verify-threshold").rng(0);
    let mut violations = 0;
    for _ in 0..samples {
        let n = rng.random_range(1..=60u32);
        let h = rng.random_range(0.001..0.999);
        let q = rng.random_range(0.0..=0.5);
        let p = ScreenParams::baseline(n, h)?;
        let q = nl(q)?;
        let strict = payoff_with_threshold(q, ThresholdTest::new(n, n)?, &p);
        for t in 1..n {
            if payoff_with_threshold(q, ThresholdTest::new(t, n)?, &p) > strict + 1e-12 {
                violations += 1;
                break;
            }
        }
    }
    Ok(violations)
}

fn threshold_dominance(seed: u64) -> Result<CheckResult> {
    let v = threshold_violations(1000, seed)?;
    Ok(CheckResult::within("threshold_dominance", v as f64, 0.0, "1000 random (N, h, q)"))
}

fn asymptotic_payoff(_: u64) -> Result<CheckResult> {
    let ns: Vec<u32> = (2..=200).collect();
    let t = asymptotic_payoff_curve(0.3, &ns)?;
    let payoffs: Vec<f64> = t.metric("payoff").into_iter().map(|(_, p)| p).collect();
    let last = *payoffs.last().expect("nonempty");
    let drops = payoffs.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
    let ok = (last - 0.7).abs() < 0.02 && drops == 0;
    Ok(CheckResult::holds("asymptotic_payoff", ok, format!("payoff at N=200: {last:.6}, {drops} decreases")))
}

fn noniid_hand_sum(_: u64) -> Result<CheckResult> {
    let mu = BitVectorDist::new(2, vec![0.4, 0.3, 0.2, 0.1])?;
    let q: f64 = 0.25;
    let mut expect = 0.0;
    for z in 0..4u64 {
        let d = z.count_ones() as i32;
        expect += [0.4, 0.3, 0.2, 0.1][z as usize] * q.powi(d) * (1.0 - q).powi(2 - d);
    }
    let got = noisy_marginal(&mu, nl(q)?, &BitVector::zeros(2)?)?;
    Ok(CheckResult::within("noniid_hand_sum", (got - expect).abs(), 1e-15, ""))
}

fn noniid_uniform_reduction(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for n in 1..=12 {
        let u = BitVectorDist::uniform(n)?;
        for i in 0..=10 {
            let q = i as f64 * 0.05;
            errs.push(v_hacker_noniid(&u, nl(q)?) - (1.0 - q).powi(n as i32));
        }
        errs.push(v_hacker_noniid_derivative_at_zero(&u) + n as f64);
    }
    Ok(CheckResult::within("noniid_uniform_reduction", max_abs(errs), 1e-10, "N in 1..=12"))
}

/// For `trials` random full-support distributions, counts violations of the
/// posterior argmax property (the exact match is the most likely raw vector)
/// and of a negative hacker slope at zero noise.
pub fn noniid_violations(trials: usize, seed: u64) -> Result<(usize, usize)> {
    let mut rng = StreamKey::new(seed, "verify-noniid").rng(0);
    let (mut argmax, mut slope) = (0, 0);
    for trial in 0..trials {
        let n = 2 + trial % 7;
        let mu = BitVectorDist::random(n, &mut rng)?;
        for q in [0.05, 0.2, 0.45] {
            let q = nl(q)?;
            for y in BitVector::all(n)? {
                let own = posterior_match(&mu, q, &y, &y)?;
                for x in BitVector::all(n)? {
                    if posterior_match(&mu, q, &y, &x)? > own * (1.0 + 1e-12) {
                        argmax += 1;
                    }
                }
            }
        }
        if v_hacker_noniid_derivative_at_zero(&mu) >= 0.0 {
            slope += 1;
        }
    }
    Ok((argmax, slope))
}

fn noniid_argmax_and_slope(seed: u64) -> Result<CheckResult> {
    let (a, s) = noniid_violations(200, seed)?;
    Ok(CheckResult::within(
        "noniid_argmax_and_slope",
        (a + s) as f64,
        0.0,
        format!("{a} argmax violations, {s} nonnegative slopes over 200 distributions"),
    ))
}

fn noniid_derivative_difference(seed: u64) -> Result<CheckResult> {
    let mut rng = StreamKey::new(seed, "verify-noniid-fd").rng(0);
    let mut errs = Vec::new();
    for n in 2..=8 {
        let mu = BitVectorDist::random(n, &mut rng)?;
        let step = 1e-5;
        let fd = (v_hacker_noniid(&mu, nl(step)?) - v_hacker_noniid(&mu, NoiseLevel::ZERO)) / step;
        errs.push(fd - v_hacker_noniid_derivative_at_zero(&mu));
    }
    Ok(CheckResult::within("noniid_derivative_difference", max_abs(errs), 1e-3, "step 1e-5"))
}

fn red_herring_zero_noise(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for n in 1..=20 {
        for h in [0.1, 0.5, 0.9] {
            let expect = -h + (1.0 - h) * (1.0 - 0.5f64.powi(n as i32));
            errs.push(red_herring_payoff(NoiseLevel::ZERO, &ScreenParams::baseline(n, h)?) - expect);
        }
    }
    Ok(CheckResult::within("red_herring_zero_noise", max_abs(errs), 1e-14, ""))
}

/// Worst gap between the closed-form slope at zero noise and a one-sided
/// finite difference, and whether the slope changes sign at the threshold,
/// for `N = n`.
pub fn red_herring_threshold_report(n: u32) -> Result<(f64, bool)> {
    let t = red_herring_threshold(n);
    let mut worst = 0.0f64;
    for h in [t * 0.5, t * 0.99, t, t * 1.01, t * 2.0] {
        let p = ScreenParams::baseline(n, h)?;
        let fd = forward_derivative(|q| red_herring_payoff(NoiseLevel::new(q).unwrap(), &p), 1e-6);
        worst = worst.max((fd - red_herring_derivative_at_zero(&p)).abs());
    }
    let slope = |h: f64| -> Result<f64> { Ok(red_herring_derivative_at_zero(&ScreenParams::baseline(n, h)?)) };
    let flips = slope(t * (1.0 - 1e-9))? < 0.0 && slope(t * (1.0 + 1e-9))? > 0.0 && slope(t)?.abs() < 1e-12;
    Ok((worst, flips))
}

fn red_herring_threshold_check(_: u64) -> Result<CheckResult> {
    let t = red_herring_threshold(10);
    let (fd_err, flips) = red_herring_threshold_report(10)?;
    let err = (t - 11.0 / 2059.0).abs().max(fd_err);
    let mut r = CheckResult::within("red_herring_threshold", err, 1e-6, format!("N=10 boundary {:.4}%", 100.0 * t));
    r.passed &= flips;
    Ok(r)
}

fn finite_k_closed_form(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for n in 1..=10 {
        errs.push(finite_k_hacker_payoff_zero_noise(n, 2)? - (1.0 - 0.5f64.powi(n as i32)));
    }
    let b = Binomial::new(99, 0.125)?;
    let direct: f64 = (0..=99).map(|j| b.pmf(j) * (1.0 - j as f64) / (1.0 + j as f64)).sum();
    errs.push(finite_k_hacker_payoff_zero_noise(3, 100)? - direct);
    Ok(CheckResult::within("finite_k_closed_form", max_abs(errs), 1e-12, "K=2 and K=100, N=3"))
}

fn binary_game_simulation(seed: u64) -> Result<CheckResult> {
    let reps = 20_000;
    let mut z = Vec::new();
    let screen = ScreenParams::baseline(3, 0.5)?;
    let finite = FiniteKParams::new(5000, screen)?;
    let s = binary_game_summary(finite, NoiseLevel::ZERO, GameVariant::Baseline, reps, seed)?;
    let expect = finite_k_hacker_payoff(NoiseLevel::ZERO, 3, 5000, RedHerring::Complement)?;
    z.push((s.hacker_payoff.mean() - expect) / s.hacker_payoff.std_error());
    let s = binary_game_summary(screen, NoiseLevel::ZERO, GameVariant::RedHerring, reps, seed)?;
    z.push((s.payoff.mean() - red_herring_payoff(NoiseLevel::ZERO, &screen)) / s.payoff.std_error());
    let q = nl(0.2)?;
    let s = binary_game_summary(screen, q, GameVariant::Baseline, reps, seed)?;
    z.push((s.payoff.mean() - principal_payoff(q, &screen)) / s.payoff.std_error());
    Ok(CheckResult::within("binary_game_simulation", max_abs(z), 3.0, "largest |z| over three games"))
}

fn no_true_cause_posterior_check(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for (n, beta) in [(2u32, 0.3), (5, 0.9), (9, 0.6)] {
        let half = no_true_cause_posteriors(NoiseLevel::HALF, n, beta, MatchCase::I)?;
        errs.push(half - 0.5 * beta);
    }
    // With N = 2, one mismatch is as likely under "no cause" as under the
    // truth, so the limit below needs N >= 3.
    for (n, beta) in [(3u32, 0.3), (5, 0.9), (9, 0.6)] {
        for case in [MatchCase::I, MatchCase::Ii, MatchCase::Iii] {
            let a = no_true_cause_posteriors(nl(1e-3)?, n, beta, case)?;
            let b = no_true_cause_posteriors(nl(1e-4)?, n, beta, case)?;
            if !(b >= a && b > 0.99) {
                errs.push(1.0);
            }
        }
    }
    for m1 in 0..=4 {
        for m2 in 0..=4 {
            let p = candidate_posteriors(nl(0.1)?, 4, 0.8, m1, m2);
            errs.push(p.iter().sum::<f64>() - 1.0);
        }
    }
    Ok(CheckResult::within("no_true_cause_posteriors", max_abs(errs), 1e-12, ""))
}

fn no_true_cause_noise_helps(_: u64) -> Result<CheckResult> {
    let p = NoTrueCauseParams::new(5, 0.3, 0.9, 0.8)?;
    let bound = |q: f64| -> Result<f64> {
        Ok((1.0 - p.h()) * no_true_cause_lower_bound(nl(q)?, 5, p.beta()) - p.h() * (1.0 - q).powi(5))
    };
    let mut prev = bound(0.0)?;
    let mut ok = p.in_noise_helps_regime();
    for i in 1..=10 {
        let cur = bound(i as f64 * 1e-3)?;
        ok &= cur > prev;
        prev = cur;
    }
    Ok(CheckResult::holds("no_true_cause_noise_helps", ok, "bound minus hacker term increasing on (0, 0.01]"))
}

fn no_true_cause_reductions(seed: u64) -> Result<CheckResult> {
    let mut z = Vec::new();
    let reps = 20_000;
    let certain = NoTrueCauseParams::new(4, 0.4, 1.0, 0.8)?;
    let base = ScreenParams::baseline(4, 0.4)?;
    for q in [0.0, 0.2] {
        let s = no_true_cause_summary(&certain, nl(q)?, reps, seed)?;
        z.push((s.payoff.mean() - principal_payoff(nl(q)?, &base)) / s.payoff.std_error());
    }
    // Maven-conditional payoff at zero noise: beta times the chance the maven
    // names the true cause.
    let p = NoTrueCauseParams::new(5, 0.3, 0.9, 0.8)?;
    let s = no_true_cause_summary(&p, NoiseLevel::ZERO, reps, seed)?;
    let (_, _, exact) = no_true_cause_payoffs(NoiseLevel::ZERO, &p);
    z.push((s.maven_payoff.mean() - 0.9) / s.maven_payoff.std_error().max(1e-12));
    let mut r = CheckResult::within("no_true_cause_reductions", max_abs(z), 3.0, "largest |z|");
    r.passed &= (exact - 0.9).abs() < 1e-12;
    Ok(r)
}

fn dynamic_flow_and_transition(_: u64) -> Result<CheckResult> {
    let mut errs = Vec::new();
    for h in [0.1, 0.3, 0.45] {
        for b in [0.0, 0.4, 0.99] {
            errs.push(flow_utility(NoiseLevel::HALF, b, h) - ((1.0 - h) / 2.0 - h / 2.0));
        }
    }
    errs.push(stock_transition(nl(0.3)?, 0.99) - 0.99 * 0.3 / (0.01 * 0.7 + 0.99 * 0.3));
    Ok(CheckResult::within("dynamic_flow_and_transition", max_abs(errs), 1e-14, ""))
}

fn regression_raw_moments(seed: u64) -> Result<CheckResult> {
    let cfg = RegressionExperiment::default();
    let mut rng = StreamKey::new(seed, "verify-regression-moments").rng(0);
    let datasets = 1_000_000 / cfg.num_obs;
    let mut cols: Vec<Moments> = vec![Moments::default(); cfg.num_covariates];
    let mut y = Moments::default();
    for _ in 0..datasets {
        let d = sample_dataset(&cfg, &mut rng);
        for (m, c) in cols.iter_mut().zip(&d.raw) {
            c.iter().for_each(|&x| m.push(x));
        }
        d.outcome.iter().for_each(|&v| y.push(v));
    }
    let mean_err = max_abs(cols.iter().map(|m| m.mean()));
    let var_err = max_abs(cols.iter().map(|m| m.variance() - 1.0));
    let y_err = (y.variance() - 7.0).abs();
    let ok = mean_err < 0.01 && var_err < 0.01 && y_err < 0.05;
    Ok(CheckResult::holds(
        "regression_raw_moments",
        ok,
        format!("max |mean| {mean_err:.4}, max |var-1| {var_err:.4}, Var(Y) {:.4}", y.variance()),
    ))
}

// R² from the normal equations solved by Gaussian elimination with partial
// pivoting.
fn normal_equations_r2(y: &[f64], cols: &[&[f64]]) -> f64 {
    let n = y.len();
    let p = cols.len() + 1;
    let x = |i: usize, j: usize| if j == 0 { 1.0 } else { cols[j - 1][i] };
    let mut a = vec![vec![0.0; p + 1]; p];
    for r in 0..p {
        for c in 0..p {
            a[r][c] = (0..n).map(|i| x(i, r) * x(i, c)).sum();
        }
        a[r][p] = (0..n).map(|i| x(i, r) * y[i]).sum();
    }
    for k in 0..p {
        let piv = (k..p).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).expect("nonempty");
        a.swap(k, piv);
        for r in k + 1..p {
            let f = a[r][k] / a[k][k];
            for c in k..=p {
                a[r][c] -= f * a[k][c];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        beta[k] = (a[k][p] - (k + 1..p).map(|c| a[k][c] * beta[c]).sum::<f64>()) / a[k][k];
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = (0..n).map(|i| (y[i] - (0..p).map(|j| beta[j] * x(i, j)).sum::<f64>()).powi(2)).sum();
    1.0 - sse / sst
}

fn ols_normal_equations(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0157_0157);
    let mut errs = Vec::new();
    for _ in 0..100 {
        let n = rng.random_range(8..40);
        let k = rng.random_range(1..5);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| cols.iter().map(|c| c[i]).sum::<f64>() + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        errs.push(ols_r2(&y, &refs)? - normal_equations_r2(&y, &refs));
    }
    Ok(CheckResult::within("ols_normal_equations", max_abs(errs), 1e-10, "100 random instances"))
}

/// Frequency with which the maven picks the causal triplet when the release
/// is almost pure noise, and its standard error.
pub fn pure_noise_choice_rate(replications: u64, seed: u64) -> (f64, f64) {
    let cfg = RegressionExperiment::default();
    let key = StreamKey::new(seed, "verify-pure-noise");
    let mut m = Moments::default();
    for r in 0..replications {
        let d = sample_dataset(&cfg, &mut key.rng(r));
        let noisy = TripletScorer::new(&d.noisy(1e6), &d.outcome);
        let raw = TripletScorer::new(&d.raw, &d.outcome);
        let pick = maven_choice(&noisy, &raw, d.causal, d.alternative);
        m.push(f64::from(u8::from(pick.triplet == d.causal)));
    }
    (m.mean(), m.std_error())
}

fn regression_pure_noise_symmetry(seed: u64) -> Result<CheckResult> {
    let (rate, se) = pure_noise_choice_rate(10_000, seed);
    Ok(CheckResult::within(
        "regression_pure_noise_symmetry",
        (rate - 0.5).abs(),
        0.02,
        format!("causal choice rate {rate:.4} (SE {se:.4})"),
    ))
}

/// Fraction of draws in which the causal triplet's raw R² exceeds the 95th
/// percentile of raw R² over all triplets, and its standard error.
pub fn causal_pass_rate(replications: u64, seed: u64) -> (f64, f64) {
    let cfg = RegressionExperiment::default();
    let triplets = all_triplets(cfg.num_covariates);
    let key = StreamKey::new(seed, "verify-causal-pass");
    let mut m = Moments::default();
    for r in 0..replications {
        let d = sample_dataset(&cfg, &mut key.rng(r));
        let raw = TripletScorer::new(&d.raw, &d.outcome);
        let crit = critical_value(&raw.all(&triplets));
        m.push(f64::from(u8::from(raw.r2(&d.causal) > crit)));
    }
    (m.mean(), m.std_error())
}

fn regression_causal_pass_rate(seed: u64) -> Result<CheckResult> {
    let (rate, se) = causal_pass_rate(2_000, seed);
    Ok(CheckResult::holds(
        "regression_causal_pass_rate",
        rate - 3.0 * se > 0.5,
        format!("causal triplet passes in {rate:.4} of draws (SE {se:.4})"),
    ))
}

fn optimal_noise_example_n2(_: u64) -> Result<CheckResult> {
    let p = ScreenParams::baseline(2, 0.5)?;
    let q = optimal_noise(&p)?.value();
    let grid = grid_oracle(&p, 1e-4)?;
    let err = (q - 1.0 / 3.0).abs().max(((q - grid).abs() - 1e-4).max(0.0));
    Ok(CheckResult::within("optimal_noise_example_n2", err, 1e-12, format!("q* = {q}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        for (name, f) in CHECKS {
            if name.starts_with("regression") || name == "optimal_noise_grid_sweep" {
                continue;
            }
            let r = f(3).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn normal_equations_oracle_is_exact_on_a_perfect_fit() {
        let x = [1.0, 2.0, 4.0, 7.0, 11.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!((normal_equations_r2(&y, &[&x]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_has_one_row_per_check() {
        let r = vec![CheckResult::holds("x", true, ""), CheckResult::within("y", 2.0, 1.0, "d")];
        let t = to_table(&r);
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[1][1].as_str(), Some("false"));
    }
}
