//! Red herrings that are independent of the outcome instead of its
//! complement. The maven can then be fooled into a proposal that passes.

use crate::prob::Binomial;
use crate::screen::{NoiseLevel, ScreenParams};

/// Expected utility from a maven when the red herring is independent of the
/// outcome.
///
/// With `A, C ~ Binom(N, 1-q)` and `B ~ Binom(N, 1/2)`:
/// `sum_k P(A=k) [P(B<k) + P(B=k)/2 - 2^-N (P(C>k) + P(C=k)/2)]`.
pub fn red_herring_maven_payoff(q: NoiseLevel, n: u32) -> f64 {
    let n64 = n as u64;
    let a = Binomial::new(n64, 1.0 - q.value()).expect("valid probability");
    let b = Binomial::new(n64, 0.5).expect("valid probability");
    let two_pow = 0.5f64.powi(n as i32);
    a.expect(|k| {
        let picks_truth = b.lt_with_half_tie(k);
        let picks_herring = a.survival(k + 1) + 0.5 * a.pmf(k);
        picks_truth - two_pow * picks_herring
    })
}

/// Principal payoff `-h (1-q)^N + (1-h) * red_herring_maven_payoff`.
pub fn red_herring_payoff(q: NoiseLevel, params: &ScreenParams) -> f64 {
    let h = params.h();
    -h * (1.0 - q.value()).powi(params.n() as i32) + (1.0 - h) * red_herring_maven_payoff(q, params.n())
}

/// Derivative of [`red_herring_payoff`] at `q = 0`:
/// `hN - (1-h) N (N+1) 2^-(N+1)`.
pub fn red_herring_derivative_at_zero(params: &ScreenParams) -> f64 {
    let n = params.n() as f64;
    let h = params.h();
    h * n - (1.0 - h) * n * (n + 1.0) * 0.5f64.powi(params.n() as i32 + 1)
}

/// Hacker fraction at which the zero-noise derivative changes sign:
/// `(N+1) / (2^(N+1) + N + 1)`.
pub fn red_herring_threshold(n: u32) -> f64 {
    let n1 = n as f64 + 1.0;
    n1 / (2f64.powi(n as i32 + 1) + n1)
}
