//! Monte Carlo simulation of the binary game.
//!
//! Each replication draws one outcome vector, the noisy release of every
//! covariate the agents inspect, and plays both agent types against the same
//! release. The hacker proposes uniformly among the covariates with the most
//! noisy matches; the maven proposes whichever of its two candidates matches
//! more often, breaking ties uniformly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::mc::{run_batched, Moments, StreamKey};
use crate::screen::{NoiseLevel, ScreenParams};
use crate::sweep::{Cell, SweepTable};

use super::{flip_mask, random_bits, FiniteKParams, GameOutcome, ProposalKind, RedHerring};

/// Which version of the binary game to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameVariant {
    /// Red herring is the complement of the outcome.
    Baseline,
    /// Red herring is independent of the outcome.
    RedHerring,
    /// Independent red herring with finitely many covariates.
    FiniteK,
}

impl GameVariant {
    pub fn name(&self) -> &'static str {
        match self {
            GameVariant::Baseline => "baseline",
            GameVariant::RedHerring => "red_herring",
            GameVariant::FiniteK => "finite_k",
        }
    }

    fn herring(&self) -> RedHerring {
        match self {
            GameVariant::Baseline => RedHerring::Complement,
            _ => RedHerring::Independent,
        }
    }
}

impl std::str::FromStr for GameVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(GameVariant::Baseline),
            "red_herring" | "red-herring" => Ok(GameVariant::RedHerring),
            "finite_k" | "finite-k" => Ok(GameVariant::FiniteK),
            other => Err(domain(format!("unknown game variant '{other}'"))),
        }
    }
}

/// Covariate pool: the continuum of the model or a finite set of `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GameParams {
    Continuum(ScreenParams),
    Finite(FiniteKParams),
}

impl GameParams {
    pub fn screen(&self) -> &ScreenParams {
        match self {
            GameParams::Continuum(s) => s,
            GameParams::Finite(f) => f.screen(),
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            GameParams::Continuum(_) => None,
            GameParams::Finite(f) => Some(f.k()),
        }
    }
}

impl From<ScreenParams> for GameParams {
    fn from(p: ScreenParams) -> Self {
        GameParams::Continuum(p)
    }
}

impl From<FiniteKParams> for GameParams {
    fn from(p: FiniteKParams) -> Self {
        GameParams::Finite(p)
    }
}

/// Aggregated results of a binary-game simulation.
#[derive(Debug, Clone)]
pub struct GameSummary {
    pub variant: GameVariant,
    pub n: u32,
    pub k: Option<usize>,
    pub q: f64,
    pub h: f64,
    pub seed: u64,
    pub payoff: Moments,
    pub hacker_payoff: Moments,
    pub maven_payoff: Moments,
    pub hacker_pass: Moments,
    pub maven_pass: Moments,
}

pub const GAME_COLUMNS: [&str; 15] = [
    "variant",
    "n",
    "k",
    "q",
    "h",
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
];

impl GameSummary {
    pub fn table_header() -> SweepTable {
        SweepTable::new(GAME_COLUMNS)
    }

    pub fn push_row(&self, table: &mut SweepTable) -> Result<()> {
        let k = match self.k {
            Some(k) => Cell::from(k),
            None => Cell::from("inf"),
        };
        table.push(vec![
            self.variant.name().into(),
            self.n.into(),
            k,
            self.q.into(),
            self.h.into(),
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
        ])
    }

    pub fn to_table(&self) -> Result<SweepTable> {
        let mut t = Self::table_header();
        self.push_row(&mut t)?;
        Ok(t)
    }
}

/// Runs the binary game and returns one summary row.
pub fn simulate_binary_game(
    params: impl Into<GameParams>,
    q: NoiseLevel,
    variant: GameVariant,
    replications: u64,
    seed: u64,
) -> Result<SweepTable> {
    binary_game_summary(params, q, variant, replications, seed)?.to_table()
}

/// As [`simulate_binary_game`], returning the accumulators.
pub fn binary_game_summary(
    params: impl Into<GameParams>,
    q: NoiseLevel,
    variant: GameVariant,
    replications: u64,
    seed: u64,
) -> Result<GameSummary> {
    let params = params.into();
    if replications == 0 {
        return Err(domain("replications must be at least 1"));
    }
    if variant == GameVariant::FiniteK && params.k().is_none() {
        return Err(domain("the finite_k variant needs a covariate count K"));
    }
    let screen = *params.screen();
    let n = screen.n() as usize;
    if n > crate::prob::MAX_BITS {
        return Err(crate::Error::Capacity { what: "observations per covariate", got: n, max: crate::prob::MAX_BITS });
    }
    let h = screen.h();
    let herring = variant.herring();
    let key = StreamKey::new(seed, "binary-game")
        .with_u64(variant as u64)
        .with_u64(n as u64)
        .with_u64(params.k().map_or(0, |k| k as u64))
        .with_f64(q.value());
    let acc = run_batched(
        &key,
        replications,
        || [Moments::default(); 5],
        |rng, _, acc| {
            let (hacker, maven) = play(rng, n, q.value(), params.k(), herring);
            acc[0].push(h * hacker.utility() + (1.0 - h) * maven.utility());
            acc[1].push(hacker.utility());
            acc[2].push(maven.utility());
            acc[3].push(hacker.passed as u8 as f64);
            acc[4].push(maven.passed as u8 as f64);
        },
    );
    let [payoff, hacker_payoff, maven_payoff, hacker_pass, maven_pass] = acc;
    Ok(GameSummary {
        variant,
        n: screen.n(),
        k: params.k(),
        q: q.value(),
        h,
        seed,
        payoff,
        hacker_payoff,
        maven_payoff,
        hacker_pass,
        maven_pass,
    })
}

fn matches(noisy: u64, y: u64, n: usize) -> u32 {
    n as u32 - (noisy ^ y).count_ones()
}

/// One replication; returns the hacker's and the maven's outcomes.
fn play(rng: &mut ChaCha8Rng, n: usize, q: f64, k: Option<usize>, herring: RedHerring) -> (GameOutcome, GameOutcome) {
    let y = random_bits(rng, n);
    let truth_noisy = y ^ flip_mask(rng, n, q);
    let herring_raw = match herring {
        RedHerring::Complement => !y & crate::prob::mask(n),
        RedHerring::Independent => random_bits(rng, n),
    };
    let herring_noisy = herring_raw ^ flip_mask(rng, n, q);
    let m_truth = matches(truth_noisy, y, n);
    let m_herring = matches(herring_noisy, y, n);

    let maven_pick_truth = match m_truth.cmp(&m_herring) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => rng.random_bool(0.5),
    };
    let maven = if maven_pick_truth {
        GameOutcome::resolve(ProposalKind::TrueCause, true)
    } else {
        GameOutcome::resolve(ProposalKind::RedHerring, herring_raw == y)
    };

    let hacker = match k {
        // A continuum of decoys always contains a perfect noisy match; it
        // passes iff none of its entries were flipped.
        None => GameOutcome::resolve(ProposalKind::Other, flip_mask(rng, n, q) == 0),
        Some(k) => {
            // Decoy releases are uniform whatever their raw values, so the raw
            // vector is drawn only for the decoy that gets proposed.
            let decoys = match herring {
                RedHerring::Complement => k - 2,
                RedHerring::Independent => k - 1,
            };
            let mut best = m_truth;
            let mut ties = 1u64;
            let mut choice = Choice::Truth;
            let mut offer = |m: u32, c: Choice, rng: &mut ChaCha8Rng| {
                if m > best {
                    best = m;
                    ties = 1;
                    choice = c;
                } else if m == best {
                    ties += 1;
                    if rng.random_range(0..ties) == 0 {
                        choice = c;
                    }
                }
            };
            if herring == RedHerring::Complement {
                offer(m_herring, Choice::Herring, rng);
            }
            for _ in 0..decoys {
                let noisy = random_bits(rng, n);
                offer(matches(noisy, y, n), Choice::Decoy(noisy), rng);
            }
            match choice {
                Choice::Truth => GameOutcome::resolve(ProposalKind::TrueCause, true),
                Choice::Herring => GameOutcome::resolve(ProposalKind::RedHerring, herring_raw == y),
                Choice::Decoy(noisy) => GameOutcome::resolve(ProposalKind::Other, noisy ^ flip_mask(rng, n, q) == y),
            }
        }
    };
    (hacker, maven)
}

#[derive(Clone, Copy)]
enum Choice {
    Truth,
    Herring,
    Decoy(u64),
}
