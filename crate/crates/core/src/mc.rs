//! Reproducible Monte Carlo plumbing.
//!
//! Every simulator derives its generators from a single 64-bit master seed.
//! A [`StreamKey`] mixes the master seed with a domain tag and the cell's
//! parameters into a ChaCha key; replications are grouped into fixed-size
//! batches and batch `i` uses ChaCha stream `i`. Batches are reduced in index
//! order, so results do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Replications per independent stream.
pub const BATCH_SIZE: u64 = 1_000;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one family of random streams: master seed, domain tag and the
/// numeric parameters of the simulated cell.
#[derive(Debug, Clone)]
pub struct StreamKey {
    state: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, domain: &str) -> Self {
        let mut state = master_seed;
        let mut key = Self { state: splitmix64(&mut state) };
        for b in domain.bytes() {
            key = key.with_u64(b as u64);
        }
        key
    }

    pub fn with_u64(mut self, v: u64) -> Self {
        let mut s = self.state ^ v.wrapping_mul(0xA24B_AED4_963E_E407);
        self.state = splitmix64(&mut s);
        self
    }

    pub fn with_f64(self, v: f64) -> Self {
        // -0.0 and 0.0 name the same cell.
        let v = if v == 0.0 { 0.0 } else { v };
        self.with_u64(v.to_bits())
    }

    /// Generator for stream `index` of this family.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut s = self.state;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(index);
        rng
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Count, sum and sum of squares of a stream of observations.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum.add(other.sum.sum);
        self.sum.add(other.sum.comp);
        self.sum_sq.add(other.sum_sq.sum);
        self.sum_sq.add(other.sum_sq.comp);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Runs `replications` draws of `body` in deterministic batches and reduces
/// the per-batch accumulators in batch order.
///
/// `body` receives the batch generator and the global replication index and
/// folds its observation into the accumulator.
pub fn run_batched<A, F>(key: &StreamKey, replications: u64, init: impl Fn() -> A + Sync, body: F) -> A
where
    A: Send + Merge,
    F: Fn(&mut ChaCha8Rng, u64, &mut A) + Sync,
{
    let batches = replications.div_ceil(BATCH_SIZE);
    let parts: Vec<A> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = key.rng(b);
            let mut acc = init();
            let start = b * BATCH_SIZE;
            let end = (start + BATCH_SIZE).min(replications);
            for r in start..end {
                body(&mut rng, r, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in &parts {
        out.merge_from(p);
    }
    out
}

/// Accumulators that can absorb another accumulator of the same kind.
pub trait Merge {
    fn merge_from(&mut self, other: &Self);
}

impl Merge for Moments {
    fn merge_from(&mut self, other: &Self) {
        self.merge(other);
    }
}

impl<const K: usize> Merge for [Moments; K] {
    fn merge_from(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl Merge for Vec<Moments> {
    fn merge_from(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn keys_separate_domains_and_cells() {
        let a = StreamKey::new(7, "game").with_f64(0.1);
        let b = StreamKey::new(7, "game").with_f64(0.2);
        let c = StreamKey::new(7, "lab").with_f64(0.1);
        let d = StreamKey::new(7, "game").with_f64(0.1);
        let draw = |k: &StreamKey| k.rng(0).random::<u64>();
        assert_ne!(draw(&a), draw(&b));
        assert_ne!(draw(&a), draw(&c));
        assert_eq!(draw(&a), draw(&d));
        assert_ne!(a.rng(0).random::<u64>(), a.rng(1).random::<u64>());
        assert_eq!(draw(&StreamKey::new(1, "x").with_f64(-0.0)), draw(&StreamKey::new(1, "x").with_f64(0.0)));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn moments_match_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-9);
    }

    #[test]
    fn batched_runs_are_thread_count_invariant() {
        let key = StreamKey::new(42, "test");
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_batched(&key, 10_500, Moments::default, |rng, _, acc| acc.push(rng.random::<f64>())))
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.count(), 10_500);
        assert_eq!(a.mean().to_bits(), b.mean().to_bits());
        assert_eq!(a.std_error().to_bits(), b.std_error().to_bits());
    }
}
