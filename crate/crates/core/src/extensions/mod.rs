//! Extensions of the static model: correlated observations, independent red
//! herrings, finitely many covariates and the possibility that no covariate
//! is causal. Each analytic result has a Monte Carlo counterpart.

mod finite_k;
mod game;
mod no_true_cause;
mod noniid;
mod red_herring;

pub use finite_k::*;
pub use game::*;
pub use no_true_cause::*;
pub use noniid::*;
pub use red_herring::*;

use rand::Rng;

/// What an agent put forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    TrueCause,
    RedHerring,
    Other,
    Abstain,
}

/// Result of one proposal from the principal's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameOutcome {
    pub proposal_kind: ProposalKind,
    pub passed: bool,
    pub principal_utility: i8,
}

impl GameOutcome {
    /// Scores a proposal: +1 if the true cause passes, -1 if anything else
    /// passes, 0 if it is rejected or the agent abstains.
    pub fn resolve(proposal_kind: ProposalKind, passed: bool) -> Self {
        let passed = passed && proposal_kind != ProposalKind::Abstain;
        let principal_utility = match (passed, proposal_kind) {
            (false, _) => 0,
            (true, ProposalKind::TrueCause) => 1,
            (true, _) => -1,
        };
        Self { proposal_kind, passed, principal_utility }
    }

    pub fn utility(&self) -> f64 {
        self.principal_utility as f64
    }
}

/// Bit mask over the low `n` positions with each bit set independently with
/// probability `q`.
pub(crate) fn flip_mask<R: Rng + ?Sized>(rng: &mut R, n: usize, q: f64) -> u64 {
    if q <= 0.0 {
        return 0;
    }
    // Compare 32-bit uniforms against a fixed-point threshold.
    let threshold = (q * 4_294_967_296.0) as u64;
    let mut mask = 0u64;
    for i in 0..n {
        if (rng.next_u32() as u64) < threshold {
            mask |= 1 << i;
        }
    }
    mask
}

/// Uniform random vector over the low `n` bits.
pub(crate) fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> u64 {
    rng.next_u64() & crate::prob::mask(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outcome_invariants() {
        use ProposalKind::*;
        for kind in [TrueCause, RedHerring, Other, Abstain] {
            for passed in [false, true] {
                let o = GameOutcome::resolve(kind, passed);
                match (kind, passed) {
                    (Abstain, _) => assert_eq!((o.passed, o.principal_utility), (false, 0)),
                    (_, false) => assert_eq!(o.principal_utility, 0),
                    (TrueCause, true) => assert_eq!(o.principal_utility, 1),
                    (_, true) => assert_eq!(o.principal_utility, -1),
                }
            }
        }
    }

    #[test]
    fn flip_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(flip_mask(&mut rng, 10, 0.0), 0);
        let total: u32 = (0..20_000).map(|_| flip_mask(&mut rng, 10, 0.3).count_ones()).sum();
        let rate = total as f64 / 200_000.0;
        assert!((rate - 0.3).abs() < 0.005, "{rate}");
        assert_eq!(flip_mask(&mut rng, 64, 1.0 - 1e-12).count_ones(), 64);
    }
}
