//! The game in which, with probability `1 - beta`, neither candidate is the
//! true cause and both are red herrings. Agents may abstain, and they value
//! being right at `w` and getting implemented at `1 - w`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::mc::{run_batched, Moments, StreamKey};
use crate::prob::Binomial;
use crate::screen::NoiseLevel;
use crate::sweep::SweepTable;

use super::{flip_mask, GameOutcome, ProposalKind};

/// How the hacker decides whether to abstain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbstentionRule {
    /// Propose iff `(1-w)(1-q)^N > w(1-beta)`.
    #[default]
    ExpectedUtility,
    /// Propose iff `(1-w)(1-q)^N > 1-beta`.
    Literal,
}

impl std::str::FromStr for AbstentionRule {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "utility" | "expected_utility" => Ok(AbstentionRule::ExpectedUtility),
            "literal" => Ok(AbstentionRule::Literal),
            other => Err(domain(format!("unknown abstention rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoTrueCauseParams {
    n: u32,
    h: f64,
    beta: f64,
    w: f64,
    rule: AbstentionRule,
}

impl NoTrueCauseParams {
    pub fn new(n: u32, h: f64, beta: f64, w: f64) -> Result<Self> {
        if n == 0 || n as usize > crate::prob::MAX_BITS {
            return Err(domain(format!("N must be in 1..={}, got {n}", crate::prob::MAX_BITS)));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(domain(format!("hacker fraction h must lie in (0, 1), got {h}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(domain(format!("beta must be in (0, 1], got {beta}")));
        }
        if !(w > 0.0 && w < 1.0) {
            return Err(domain(format!("w must be in (0, 1), got {w}")));
        }
        Ok(Self { n, h, beta, w, rule: AbstentionRule::default() })
    }

    pub fn with_rule(mut self, rule: AbstentionRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn rule(&self) -> AbstentionRule {
        self.rule
    }

    /// `w > 3/4` and `beta > w`: small noise then strictly helps.
    pub fn in_noise_helps_regime(&self) -> bool {
        self.w > 0.75 && self.beta > self.w
    }
}

/// The three match patterns with a single flip at most.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchCase {
    /// First candidate matches everywhere, second nowhere.
    I,
    /// First matches everywhere, second in exactly one observation.
    Ii,
    /// First matches in all but one observation, second nowhere.
    Iii,
}

impl MatchCase {
    pub fn counts(self, n: u32) -> (u32, u32) {
        match self {
            MatchCase::I => (n, 0),
            MatchCase::Ii => (n, 1),
            MatchCase::Iii => (n - 1, 0),
        }
    }
}

/// Posterior probabilities `[first is true, second is true, neither]` given
/// noisy match counts `m1`, `m2` of the two candidates.
///
/// Each likelihood has the form `c q^e (1-q)^f`; at `q = 0` the limit keeps
/// the terms with the smallest `e`.
pub fn candidate_posteriors(q: NoiseLevel, n: u32, beta: f64, m1: u32, m2: u32) -> [f64; 3] {
    let (n, m1, m2) = (n as i32, m1 as i32, m2 as i32);
    let terms = [
        (0.5 * beta, n - m1 + m2, m1 + n - m2),
        (0.5 * beta, n - m2 + m1, m2 + n - m1),
        (1.0 - beta, m1 + m2, 2 * n - m1 - m2),
    ];
    let qv = q.value();
    let mut weights = [0.0; 3];
    if qv == 0.0 {
        let e_min = terms.iter().filter(|t| t.0 > 0.0).map(|t| t.1).min().unwrap_or(0);
        for (w, t) in weights.iter_mut().zip(&terms) {
            if t.0 > 0.0 && t.1 == e_min {
                *w = t.0;
            }
        }
    } else {
        let (lq, l1q) = (qv.ln(), (-qv).ln_1p());
        let logs: Vec<f64> = terms
            .iter()
            .map(|t| if t.0 > 0.0 { t.0.ln() + t.1 as f64 * lq + t.2 as f64 * l1q } else { f64::NEG_INFINITY })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (w, l) in weights.iter_mut().zip(&logs) {
            *w = (l - top).exp();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.map(|w| w / total)
}

/// Maven's posterior that the better-matching candidate is the true cause in
/// the given match pattern.
pub fn no_true_cause_posteriors(q: NoiseLevel, n: u32, beta: f64, case: MatchCase) -> Result<f64> {
    if n < 2 {
        return Err(domain("match patterns need N >= 2"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain(format!("beta must be in (0, 1], got {beta}")));
    }
    let (m1, m2) = case.counts(n);
    Ok(candidate_posteriors(q, n, beta, m1, m2)[0])
}

/// `L(q) = beta [(1-q)^(2N) + 2N (1-q)^(2N-1) q]`: the principal's payoff from
/// the maven when at most one of the `2N` released entries is flipped.
pub fn no_true_cause_lower_bound(q: NoiseLevel, n: u32, beta: f64) -> f64 {
    let (q, n2) = (q.value(), 2 * n as i32);
    beta * ((1.0 - q).powi(n2) + n2 as f64 * (1.0 - q).powi(n2 - 1) * q)
}

/// `L'(q) = -beta 2N (2N-1) (1-q)^(2N-2) q`.
pub fn no_true_cause_lower_bound_derivative(q: NoiseLevel, n: u32, beta: f64) -> f64 {
    let (q, n2) = (q.value(), 2 * n as i32);
    -beta * n2 as f64 * (n2 - 1) as f64 * (1.0 - q).powi(n2 - 2) * q
}

/// A maven's possible reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MavenReport {
    First,
    Second,
    Nothing,
    /// A covariate outside the two candidates that matches the release.
    Matcher,
}

/// Reports that maximize the maven's expected utility, in the order
/// first, second, nothing, matcher. Values within a relative `1e-12` tie.
pub fn maven_best_reports(q: NoiseLevel, params: &NoTrueCauseParams, m1: u32, m2: u32) -> Vec<MavenReport> {
    let [p1, p2, p0] = candidate_posteriors(q, params.n, params.beta, m1, m2);
    let values = [
        (MavenReport::First, p1),
        (MavenReport::Second, p2),
        (MavenReport::Nothing, params.w * p0),
        (MavenReport::Matcher, (1.0 - params.w) * (1.0 - q.value()).powi(params.n as i32)),
    ];
    let top = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    values.iter().filter(|v| v.1 >= top - 1e-12 * top.abs()).map(|v| v.0).collect()
}

/// Whether the hacker proposes a perfect noisy match rather than abstaining.
pub fn hacker_proposes(q: NoiseLevel, params: &NoTrueCauseParams) -> bool {
    let propose = (1.0 - params.w) * (1.0 - q.value()).powi(params.n as i32);
    let abstain = match params.rule {
        AbstentionRule::ExpectedUtility => params.w * (1.0 - params.beta),
        AbstentionRule::Literal => 1.0 - params.beta,
    };
    propose > abstain
}

/// Exact principal payoffs `(blended, hacker, maven)` by enumerating both
/// candidates' match counts.
pub fn no_true_cause_payoffs(q: NoiseLevel, params: &NoTrueCauseParams) -> (f64, f64, f64) {
    let n = params.n;
    let qv = q.value();
    let matcher_value = -(1.0 - qv).powi(n as i32);
    let hacker = if hacker_proposes(q, params) { matcher_value } else { 0.0 };
    let truth = Binomial::new(n as u64, 1.0 - qv).expect("valid probability");
    let herring = Binomial::new(n as u64, qv).expect("valid probability");
    let mut maven = 0.0;
    for m1 in 0..=n {
        for m2 in 0..=n {
            let p_true = params.beta * truth.pmf(m1 as u64) * herring.pmf(m2 as u64);
            let p_none = (1.0 - params.beta) * herring.pmf(m1 as u64) * herring.pmf(m2 as u64);
            if p_true == 0.0 && p_none == 0.0 {
                continue;
            }
            // By symmetry the true cause, if any, is taken to be the first.
            let reports = maven_best_reports(q, params, m1, m2);
            let share = 1.0 / reports.len() as f64;
            for r in reports {
                match r {
                    MavenReport::First => maven += share * p_true,
                    MavenReport::Matcher => maven += share * (p_true + p_none) * matcher_value,
                    MavenReport::Second | MavenReport::Nothing => {}
                }
            }
        }
    }
    (params.h * hacker + (1.0 - params.h) * maven, hacker, maven)
}

pub fn no_true_cause_payoff(q: NoiseLevel, params: &NoTrueCauseParams) -> f64 {
    no_true_cause_payoffs(q, params).0
}

/// Aggregated results of a no-true-cause simulation.
#[derive(Debug, Clone)]
pub struct NoTrueCauseSummary {
    pub params: NoTrueCauseParams,
    pub q: f64,
    pub seed: u64,
    pub payoff: Moments,
    pub hacker_payoff: Moments,
    pub maven_payoff: Moments,
    pub hacker_pass: Moments,
    pub maven_pass: Moments,
    pub maven_abstain: Moments,
}

pub const NO_TRUE_CAUSE_COLUMNS: [&str; 16] = [
    "n",
    "q",
    "h",
    "beta",
    "w",
    "replications",
    "seed",
    "mean_payoff",
    "se_payoff",
    "hacker_payoff",
    "se_hacker_payoff",
    "maven_payoff",
    "se_maven_payoff",
    "hacker_pass_rate",
    "maven_pass_rate",
    "maven_abstain_rate",
];

impl NoTrueCauseSummary {
    pub fn table_header() -> SweepTable {
        SweepTable::new(NO_TRUE_CAUSE_COLUMNS)
    }

    pub fn push_row(&self, table: &mut SweepTable) -> Result<()> {
        let p = &self.params;
        table.push(vec![
            p.n.into(),
            self.q.into(),
            p.h.into(),
            p.beta.into(),
            p.w.into(),
            self.payoff.count().into(),
            self.seed.into(),
            self.payoff.mean().into(),
            self.payoff.std_error().into(),
            self.hacker_payoff.mean().into(),
            self.hacker_payoff.std_error().into(),
            self.maven_payoff.mean().into(),
            self.maven_payoff.std_error().into(),
            self.hacker_pass.mean().into(),
            self.maven_pass.mean().into(),
            self.maven_abstain.mean().into(),
        ])
    }

    pub fn to_table(&self) -> Result<SweepTable> {
        let mut t = Self::table_header();
        self.push_row(&mut t)?;
        Ok(t)
    }
}

/// Monte Carlo of the no-true-cause game with exact-Bayes agents.
pub fn simulate_no_true_cause(
    params: &NoTrueCauseParams,
    q: NoiseLevel,
    replications: u64,
    seed: u64,
) -> Result<SweepTable> {
    no_true_cause_summary(params, q, replications, seed)?.to_table()
}

/// As [`simulate_no_true_cause`], returning the accumulators.
pub fn no_true_cause_summary(
    params: &NoTrueCauseParams,
    q: NoiseLevel,
    replications: u64,
    seed: u64,
) -> Result<NoTrueCauseSummary> {
    if replications == 0 {
        return Err(domain("replications must be at least 1"));
    }
    let n = params.n as usize;
    let key = StreamKey::new(seed, "no-true-cause")
        .with_u64(params.n as u64)
        .with_f64(params.beta)
        .with_f64(params.w)
        .with_f64(q.value());
    // Maven decisions depend only on the two match counts.
    let decisions: Vec<Vec<MavenReport>> = (0..=params.n)
        .flat_map(|m1| (0..=params.n).map(move |m2| (m1, m2)))
        .map(|(m1, m2)| maven_best_reports(q, params, m1, m2))
        .collect();
    let hacker_in = hacker_proposes(q, params);
    let h = params.h;
    let acc = run_batched(
        &key,
        replications,
        || [Moments::default(); 6],
        |rng, _, acc| {
            let (hacker, maven) = play(rng, n, q.value(), params.beta, hacker_in, &decisions);
            acc[0].push(h * hacker.utility() + (1.0 - h) * maven.utility());
            acc[1].push(hacker.utility());
            acc[2].push(maven.utility());
            acc[3].push(hacker.passed as u8 as f64);
            acc[4].push(maven.passed as u8 as f64);
            acc[5].push((maven.proposal_kind == ProposalKind::Abstain) as u8 as f64);
        },
    );
    let [payoff, hacker_payoff, maven_payoff, hacker_pass, maven_pass, maven_abstain] = acc;
    Ok(NoTrueCauseSummary {
        params: *params,
        q: q.value(),
        seed,
        payoff,
        hacker_payoff,
        maven_payoff,
        hacker_pass,
        maven_pass,
        maven_abstain,
    })
}

fn play(
    rng: &mut ChaCha8Rng,
    n: usize,
    q: f64,
    beta: f64,
    hacker_in: bool,
    decisions: &[Vec<MavenReport>],
) -> (GameOutcome, GameOutcome) {
    let cause_exists = rng.random_bool(beta);
    let star_first = rng.random_bool(0.5);
    // a* matches the outcome unless flipped; a red herring matches only where flipped.
    let star_flips = flip_mask(rng, n, q).count_ones();
    let herring_flips = flip_mask(rng, n, q).count_ones();
    let m_star = if cause_exists { n as u32 - star_flips } else { star_flips };
    let m_herring = herring_flips;
    let (m1, m2) = if star_first { (m_star, m_herring) } else { (m_herring, m_star) };

    let reports = &decisions[m1 as usize * (n + 1) + m2 as usize];
    let report = if reports.len() == 1 { reports[0] } else { reports[rng.random_range(0..reports.len())] };
    let star_kind = if cause_exists { ProposalKind::TrueCause } else { ProposalKind::RedHerring };
    let maven = match (report, star_first) {
        (MavenReport::First, true) | (MavenReport::Second, false) => GameOutcome::resolve(star_kind, cause_exists),
        (MavenReport::First, false) | (MavenReport::Second, true) => {
            GameOutcome::resolve(ProposalKind::RedHerring, false)
        }
        (MavenReport::Nothing, _) => GameOutcome::resolve(ProposalKind::Abstain, false),
        (MavenReport::Matcher, _) => GameOutcome::resolve(ProposalKind::Other, flip_mask(rng, n, q) == 0),
    };
    let hacker = if hacker_in {
        GameOutcome::resolve(ProposalKind::Other, flip_mask(rng, n, q) == 0)
    } else {
        GameOutcome::resolve(ProposalKind::Abstain, false)
    };
    (hacker, maven)
}
