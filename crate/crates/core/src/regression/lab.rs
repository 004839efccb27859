//! The specification-search experiment.
//!
//! Each replication draws a raw dataset, adds Gaussian noise to every
//! covariate for each noise level on the grid and lets both agent types pick a
//! triplet from the noisy release. A triplet passes if its raw-data R² beats
//! the 95th percentile of raw R² over all triplets. The raw data and the unit
//! noise draws are shared across noise levels within a replication.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};
use crate::mc::{run_batched, Moments, StreamKey};
use crate::sweep::SweepTable;

/// Zero-based covariate indices, ascending.
pub type Triplet = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionExperiment {
    pub num_covariates: usize,
    pub num_obs: usize,
    pub error_variance: f64,
    pub causal_triplet: Triplet,
    pub maven_alternative: Triplet,
    pub noise_std: f64,
    pub h: f64,
    pub replications: u64,
    pub seed: u64,
    /// Draw the causal and alternative triplets afresh in every replication.
    pub randomize_causal: bool,
    /// Hacker fractions for the optimal-noise comparison.
    pub comparison_h: Vec<f64>,
}

impl Default for RegressionExperiment {
    fn default() -> Self {
        Self {
            num_covariates: 20,
            num_obs: 20,
            error_variance: 4.0,
            causal_triplet: [0, 1, 2],
            maven_alternative: [3, 4, 5],
            noise_std: 0.0,
            h: 0.2,
            replications: 10_000,
            seed: 1,
            randomize_causal: false,
            comparison_h: vec![0.1, 0.2, 0.4],
        }
    }
}

/// Noise levels `0, 0.25, ..., 3`.
pub fn default_noise_grid() -> Vec<f64> {
    (0..=12).map(|i| i as f64 * 0.25).collect()
}

impl RegressionExperiment {
    pub fn validate(&self) -> Result<()> {
        if !(6..=64).contains(&self.num_covariates) {
            return Err(domain(format!("number of covariates must be in 6..=64, got {}", self.num_covariates)));
        }
        if self.num_obs < 5 {
            return Err(domain(format!("need at least 5 observations, got {}", self.num_obs)));
        }
        if !(self.error_variance >= 0.0 && self.error_variance.is_finite()) {
            return Err(domain(format!("error variance must be finite and >= 0, got {}", self.error_variance)));
        }
        for (name, t) in [("causal", self.causal_triplet), ("alternative", self.maven_alternative)] {
            if !(t[0] < t[1] && t[1] < t[2] && t[2] < self.num_covariates) {
                return Err(domain(format!(
                    "{name} triplet {t:?} must be ascending indices below {}",
                    self.num_covariates
                )));
            }
        }
        if self.causal_triplet.iter().any(|i| self.maven_alternative.contains(i)) {
            return Err(domain("causal and alternative triplets must be disjoint"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(domain(format!("noise standard deviation must be finite and >= 0, got {}", self.noise_std)));
        }
        for &h in std::iter::once(&self.h).chain(&self.comparison_h) {
            if !(h > 0.0 && h < 1.0) {
                return Err(domain(format!("hacker fraction must lie in (0, 1), got {h}")));
            }
        }
        if self.replications == 0 {
            return Err(domain("replications must be at least 1"));
        }
        Ok(())
    }

    /// All hacker fractions reported: `h` first, then the comparison list.
    pub fn h_values(&self) -> Vec<f64> {
        let mut out = vec![self.h];
        for &h in &self.comparison_h {
            if !out.contains(&h) {
                out.push(h);
            }
        }
        out
    }
}

/// One draw of the experiment's data. Matrices are stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub raw: Vec<Vec<f64>>,
    /// Standard normal noise; the release at level `s` is `raw + s * unit_noise`.
    pub unit_noise: Vec<Vec<f64>>,
    pub outcome: Vec<f64>,
    pub causal: Triplet,
    pub alternative: Triplet,
}

impl Dataset {
    pub fn noisy(&self, noise_std: f64) -> Vec<Vec<f64>> {
        self.raw
            .iter()
            .zip(&self.unit_noise)
            .map(|(r, z)| r.iter().zip(z).map(|(a, b)| a + noise_std * b).collect())
            .collect()
    }
}

/// Draws raw covariates, the outcome and the unit noise. The outcome itself
/// is never perturbed.
pub fn sample_dataset<R: Rng + ?Sized>(cfg: &RegressionExperiment, rng: &mut R) -> Dataset {
    let (p, n) = (cfg.num_covariates, cfg.num_obs);
    let (causal, alternative) = if cfg.randomize_causal {
        let picks = sample(rng, p, 6).into_vec();
        let mut c = [picks[0], picks[1], picks[2]];
        let mut a = [picks[3], picks[4], picks[5]];
        c.sort_unstable();
        a.sort_unstable();
        (c, a)
    } else {
        (cfg.causal_triplet, cfg.maven_alternative)
    };
    let draw = |rng: &mut R| -> Vec<Vec<f64>> {
        (0..p).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
    };
    let raw = draw(rng);
    let sd = cfg.error_variance.sqrt();
    let outcome = (0..n)
        .map(|k| {
            let eps: f64 = rng.sample(StandardNormal);
            causal.iter().map(|&c| raw[c][k]).sum::<f64>() + sd * eps
        })
        .collect();
    let unit_noise = draw(rng);
    Dataset { raw, unit_noise, outcome, causal, alternative }
}

/// All ascending triplets of `0..p` in lexicographic order.
pub fn all_triplets(p: usize) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) * p.saturating_sub(2) / 6);
    for i in 0..p {
        for j in i + 1..p {
            for k in j + 1..p {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Scores triplet regressions (with intercept) of one outcome on one design
/// via the centred Gram matrix.
#[derive(Debug, Clone)]
pub struct TripletScorer {
    p: usize,
    gram: Vec<f64>,
    cross: Vec<f64>,
    sst: f64,
}

impl TripletScorer {
    pub fn new(columns: &[Vec<f64>], outcome: &[f64]) -> Self {
        let n = outcome.len() as f64;
        let center = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n;
            v.iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        let xs: Vec<Vec<f64>> = columns.iter().map(|c| center(c)).collect();
        let y = center(outcome);
        let p = xs.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut gram = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let g = dot(&xs[i], &xs[j]);
                gram[i * p + j] = g;
                gram[j * p + i] = g;
            }
        }
        let cross = xs.iter().map(|x| dot(x, &y)).collect();
        Self { p, gram, cross, sst: dot(&y, &y) }
    }

    /// R² of the regression on the triplet; 0 if the triplet is degenerate.
    pub fn r2(&self, t: &Triplet) -> f64 {
        let g = |a: usize, b: usize| self.gram[t[a] * self.p + t[b]];
        let c = [self.cross[t[0]], self.cross[t[1]], self.cross[t[2]]];
        // Cholesky of the 3x3 block.
        let l00 = g(0, 0).sqrt();
        let l10 = g(1, 0) / l00;
        let l20 = g(2, 0) / l00;
        let l11 = (g(1, 1) - l10 * l10).sqrt();
        let l21 = (g(2, 1) - l20 * l10) / l11;
        let l22 = (g(2, 2) - l20 * l20 - l21 * l21).sqrt();
        let z0 = c[0] / l00;
        let z1 = (c[1] - l10 * z0) / l11;
        let z2 = (c[2] - l20 * z0 - l21 * z1) / l22;
        let r2 = (z0 * z0 + z1 * z1 + z2 * z2) / self.sst;
        if r2.is_finite() {
            r2.clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn all(&self, triplets: &[Triplet]) -> Vec<f64> {
        triplets.iter().map(|t| self.r2(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletResult {
    pub triplet: Triplet,
    pub r2_noisy: f64,
    pub r2_raw: f64,
}

/// The triplet with the highest noisy R²; the first in lexicographic order
/// wins ties.
pub fn hacker_search(noisy: &TripletScorer, raw: &TripletScorer, triplets: &[Triplet]) -> TripletResult {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, t) in triplets.iter().enumerate() {
        let r = noisy.r2(t);
        if r > best.1 {
            best = (i, r);
        }
    }
    let t = triplets[best.0];
    TripletResult { triplet: t, r2_noisy: best.1, r2_raw: raw.r2(&t) }
}

/// The better of the maven's two candidates on the noisy data; the first in
/// lexicographic order wins ties.
pub fn maven_choice(noisy: &TripletScorer, raw: &TripletScorer, a: Triplet, b: Triplet) -> TripletResult {
    let (ra, rb) = (noisy.r2(&a), noisy.r2(&b));
    let (t, r) = if ra > rb || (ra == rb && a < b) { (a, ra) } else { (b, rb) };
    TripletResult { triplet: t, r2_noisy: r, r2_raw: raw.r2(&t) }
}

/// 95th percentile of raw R² over every triplet, interpolating linearly
/// between order statistics.
pub fn critical_value(raw_r2: &[f64]) -> f64 {
    let mut v = raw_r2.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = 0.95 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn utility(proposal: &TripletResult, causal: &Triplet, critical: f64) -> (f64, bool) {
    let passed = proposal.r2_raw > critical;
    let u = match (passed, proposal.triplet == *causal) {
        (false, _) => 0.0,
        (true, true) => 1.0,
        (true, false) => -1.0,
    };
    (u, passed)
}

// Accumulator slots per noise level; blended payoffs follow.
const HACKER: usize = 0;
const MAVEN: usize = 1;
const HACKER_PASS: usize = 2;
const MAVEN_PASS: usize = 3;
const MAVEN_CORRECT: usize = 4;
const FIXED: usize = 5;

/// Accumulated results of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RegressionResults {
    pub config: RegressionExperiment,
    pub noise_grid: Vec<f64>,
    pub h_values: Vec<f64>,
    stats: Vec<Moments>,
}

pub const REGRESSION_COLUMNS: [&str; 13] = [
    "noise_std",
    "h",
    "payoff_vs_hacker",
    "se_hacker",
    "payoff_vs_maven",
    "se_maven",
    "blended",
    "se_blended",
    "hacker_pass_rate",
    "maven_pass_rate",
    "maven_correct_rate",
    "replications",
    "seed",
];

pub const ARGMAX_COLUMNS: [&str; 7] = [
    "h",
    "argmax_noise_std",
    "blended_at_argmax",
    "se_at_argmax",
    "blended_at_zero",
    "se_at_zero",
    "gain_in_combined_se",
];

impl RegressionResults {
    fn width(&self) -> usize {
        FIXED + self.h_values.len()
    }

    fn slot(&self, level: usize, k: usize) -> &Moments {
        &self.stats[level * self.width() + k]
    }

    pub fn hacker(&self, level: usize) -> &Moments {
        self.slot(level, HACKER)
    }

    pub fn maven(&self, level: usize) -> &Moments {
        self.slot(level, MAVEN)
    }

    pub fn hacker_pass(&self, level: usize) -> &Moments {
        self.slot(level, HACKER_PASS)
    }

    pub fn maven_pass(&self, level: usize) -> &Moments {
        self.slot(level, MAVEN_PASS)
    }

    pub fn maven_correct(&self, level: usize) -> &Moments {
        self.slot(level, MAVEN_CORRECT)
    }

    /// Blended payoff at noise level `level` for the `j`-th entry of `h_values`.
    pub fn blended(&self, level: usize, j: usize) -> &Moments {
        self.slot(level, FIXED + j)
    }

    /// Index of the noise level with the highest blended payoff for `h_values[j]`;
    /// the smallest level wins ties.
    pub fn argmax_level(&self, j: usize) -> usize {
        let mut best = 0;
        for i in 1..self.noise_grid.len() {
            if self.blended(i, j).mean() > self.blended(best, j).mean() {
                best = i;
            }
        }
        best
    }

    /// Per-level rows for every reported hacker fraction.
    pub fn to_table(&self) -> SweepTable {
        let mut t = SweepTable::new(REGRESSION_COLUMNS);
        for (i, &s) in self.noise_grid.iter().enumerate() {
            for (j, &h) in self.h_values.iter().enumerate() {
                let b = self.blended(i, j);
                t.push(vec![
                    s.into(),
                    h.into(),
                    self.hacker(i).mean().into(),
                    self.hacker(i).std_error().into(),
                    self.maven(i).mean().into(),
                    self.maven(i).std_error().into(),
                    b.mean().into(),
                    b.std_error().into(),
                    self.hacker_pass(i).mean().into(),
                    self.maven_pass(i).mean().into(),
                    self.maven_correct(i).mean().into(),
                    self.hacker(i).count().into(),
                    self.config.seed.into(),
                ])
                .expect("row width matches header");
            }
        }
        t
    }

    /// Optimal noise level for each reported hacker fraction.
    pub fn argmax_table(&self) -> SweepTable {
        let mut t = SweepTable::new(ARGMAX_COLUMNS);
        for (j, &h) in self.h_values.iter().enumerate() {
            let i = self.argmax_level(j);
            let (best, zero) = (self.blended(i, j), self.blended(0, j));
            let se = (best.std_error().powi(2) + zero.std_error().powi(2)).sqrt();
            let gain = if se > 0.0 { (best.mean() - zero.mean()) / se } else { 0.0 };
            t.push(vec![
                h.into(),
                self.noise_grid[i].into(),
                best.mean().into(),
                best.std_error().into(),
                zero.mean().into(),
                zero.std_error().into(),
                gain.into(),
            ])
            .expect("row width matches header");
        }
        t
    }
}

/// Runs every replication against every noise level of the grid.
pub fn run_experiment(cfg: &RegressionExperiment, noise_grid: &[f64]) -> Result<RegressionResults> {
    cfg.validate()?;
    if noise_grid.is_empty() {
        return Err(domain("noise grid is empty"));
    }
    if let Some(s) = noise_grid.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(domain(format!("noise levels must be finite and >= 0, got {s}")));
    }
    let h_values = cfg.h_values();
    let width = FIXED + h_values.len();
    let triplets = all_triplets(cfg.num_covariates);
    let key = StreamKey::new(cfg.seed, "regression")
        .with_u64(cfg.num_covariates as u64)
        .with_u64(cfg.num_obs as u64)
        .with_f64(cfg.error_variance)
        .with_u64(cfg.randomize_causal as u64);
    let stats = run_batched(
        &key,
        cfg.replications,
        || vec![Moments::default(); width * noise_grid.len()],
        |rng, _, acc| {
            let data = sample_dataset(cfg, rng);
            let raw = TripletScorer::new(&data.raw, &data.outcome);
            let critical = critical_value(&raw.all(&triplets));
            for (i, &s) in noise_grid.iter().enumerate() {
                let noisy = if s == 0.0 { raw.clone() } else { TripletScorer::new(&data.noisy(s), &data.outcome) };
                let hack = hacker_search(&noisy, &raw, &triplets);
                let mav = maven_choice(&noisy, &raw, data.causal, data.alternative);
                let (uh, ph) = utility(&hack, &data.causal, critical);
                let (um, pm) = utility(&mav, &data.causal, critical);
                let row = &mut acc[i * width..(i + 1) * width];
                row[HACKER].push(uh);
                row[MAVEN].push(um);
                row[HACKER_PASS].push(ph as u8 as f64);
                row[MAVEN_PASS].push(pm as u8 as f64);
                row[MAVEN_CORRECT].push((mav.triplet == data.causal) as u8 as f64);
                for (j, &h) in h_values.iter().enumerate() {
                    row[FIXED + j].push(h * uh + (1.0 - h) * um);
                }
            }
        },
    );
    Ok(RegressionResults { config: cfg.clone(), noise_grid: noise_grid.to_vec(), h_values, stats })
}

#[cfg(test)]
mod tests {
    use super::super::ols_r2;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scorers(cfg: &RegressionExperiment, seed: u64, s: f64) -> (Dataset, TripletScorer, TripletScorer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sample_dataset(cfg, &mut rng);
        let raw = TripletScorer::new(&d.raw, &d.outcome);
        let noisy = TripletScorer::new(&d.noisy(s), &d.outcome);
        (d, raw, noisy)
    }

    #[test]
    fn triplet_counts() {
        assert_eq!(all_triplets(20).len(), 1140);
        assert_eq!(all_triplets(10).len(), 120);
        let t = all_triplets(7);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_noise_release_is_raw() {
        let cfg = RegressionExperiment::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = sample_dataset(&cfg, &mut rng);
        assert_eq!(d.noisy(0.0), d.raw);
    }

    #[test]
    fn sampling_moments() {
        let cfg = RegressionExperiment::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = Moments::default();
        let mut y = Moments::default();
        for rep in 0..50_000 {
            let d = sample_dataset(&cfg, &mut rng);
            if rep < 2_500 {
                d.raw.iter().flatten().for_each(|&v| x.push(v));
            }
            d.outcome.iter().for_each(|&v| y.push(v));
        }
        assert_eq!(x.count(), 1_000_000);
        assert!(x.mean().abs() < 0.01 && (x.variance() - 1.0).abs() < 0.01);
        assert!((y.variance() - 7.0).abs() < 0.05, "{}", y.variance());
    }

    #[test]
    fn scorer_matches_qr() {
        let cfg = RegressionExperiment::default();
        let (d, raw, noisy) = scorers(&cfg, 3, 0.7);
        let noisy_cols = d.noisy(0.7);
        for t in all_triplets(20).iter().step_by(37) {
            let cols: Vec<&[f64]> = t.iter().map(|&i| d.raw[i].as_slice()).collect();
            assert!((raw.r2(t) - ols_r2(&d.outcome, &cols).unwrap()).abs() < 1e-10);
            let cols: Vec<&[f64]> = t.iter().map(|&i| noisy_cols[i].as_slice()).collect();
            assert!((noisy.r2(t) - ols_r2(&d.outcome, &cols).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn hacker_and_maven_choices() {
        let cfg = RegressionExperiment::default();
        let triplets = all_triplets(20);
        let (_, raw, _) = scorers(&cfg, 4, 0.0);
        let best = hacker_search(&raw, &raw, &triplets);
        let max_raw = raw.all(&triplets).into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.r2_noisy, max_raw);
        assert_eq!(best.r2_raw, max_raw);
        let crit = critical_value(&raw.all(&triplets));
        assert!(best.r2_raw >= crit);
        for seed in 0..20 {
            let (d, raw, noisy) = scorers(&cfg, seed, 1.0);
            let m = maven_choice(&noisy, &raw, d.causal, d.alternative);
            assert!(m.triplet == d.causal || m.triplet == d.alternative);
        }
    }

    #[test]
    fn maven_picks_truth_in_large_samples() {
        let cfg = RegressionExperiment { num_obs: 2_000, ..RegressionExperiment::default() };
        let (d, raw, _) = scorers(&cfg, 5, 0.0);
        assert_eq!(maven_choice(&raw, &raw, d.causal, d.alternative).triplet, [0, 1, 2]);
    }

    #[test]
    fn maven_is_a_coin_flip_in_pure_noise() {
        let cfg = RegressionExperiment::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut picks = Moments::default();
        for _ in 0..10_000 {
            let d = sample_dataset(&cfg, &mut rng);
            let raw = TripletScorer::new(&d.raw, &d.outcome);
            let noisy = TripletScorer::new(&d.noisy(1e6), &d.outcome);
            picks.push((maven_choice(&noisy, &raw, d.causal, d.alternative).triplet == d.causal) as u8 as f64);
        }
        assert!((picks.mean() - 0.5).abs() < 0.02, "{}", picks.mean());
    }

    #[test]
    fn critical_value_properties() {
        assert_eq!(critical_value(&[3.0, 1.0, 2.0]), 2.9);
        let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        assert!((critical_value(&v) - 95.0).abs() < 1e-12);
        let cfg = RegressionExperiment::default();
        let (d, raw, _) = scorers(&cfg, 7, 0.0);
        let triplets = all_triplets(20);
        let crit = critical_value(&raw.all(&triplets));
        let perm: Vec<Vec<f64>> = d.raw.iter().rev().cloned().collect();
        let permuted = TripletScorer::new(&perm, &d.outcome);
        assert!((critical_value(&permuted.all(&triplets)) - crit).abs() < 1e-12);
    }

    #[test]
    fn causal_triplet_usually_passes() {
        let cfg = RegressionExperiment::default();
        let triplets = all_triplets(20);
        let mut pass = Moments::default();
        for seed in 0..400 {
            let (d, raw, _) = scorers(&cfg, 100 + seed, 0.0);
            pass.push((raw.r2(&d.causal) > critical_value(&raw.all(&triplets))) as u8 as f64);
        }
        // About two thirds; an independent least-squares script gives 0.67.
        assert!(pass.mean() > 0.5, "{} +- {}", pass.mean(), pass.std_error());
        assert!((pass.mean() - 0.67).abs() < 4.0 * pass.std_error(), "{} +- {}", pass.mean(), pass.std_error());
    }

    #[test]
    fn validation() {
        let ok = RegressionExperiment::default();
        assert!(ok.validate().is_ok());
        assert!(RegressionExperiment { maven_alternative: [2, 3, 4], ..ok.clone() }.validate().is_err());
        assert!(RegressionExperiment { causal_triplet: [1, 0, 2], ..ok.clone() }.validate().is_err());
        assert!(RegressionExperiment { noise_std: -1.0, ..ok.clone() }.validate().is_err());
        assert!(RegressionExperiment { replications: 0, ..ok.clone() }.validate().is_err());
        assert!(run_experiment(&ok, &[]).is_err());
    }

    #[test]
    fn small_experiment_is_thread_invariant() {
        let cfg = RegressionExperiment { replications: 1_500, ..RegressionExperiment::default() };
        let grid = [0.0, 1.0];
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_experiment(&cfg, &grid).unwrap().to_table().to_csv())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        let res = run_experiment(&cfg, &grid).unwrap();
        for i in 0..2 {
            for m in [res.hacker(i), res.maven(i)] {
                assert!((-1.0..=1.0).contains(&m.mean()));
            }
        }
        assert_eq!(res.to_table().len(), 2 * res.h_values.len());
    }

    #[test]
    fn randomized_causal_triplets_are_disjoint() {
        let cfg = RegressionExperiment { randomize_causal: true, ..RegressionExperiment::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let d = sample_dataset(&cfg, &mut rng);
            assert!(d.causal.windows(2).all(|w| w[0] < w[1]));
            assert!(d.causal.iter().all(|i| !d.alternative.contains(i)));
        }
    }
}
