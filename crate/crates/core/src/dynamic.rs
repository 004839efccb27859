//! Repeated noisy releases of one fixed dataset.
//!
//! A hacker in period `t` proposes a covariate that showed up as a match in
//! every earlier release; `b` is the probability that such a covariate is a
//! bait, i.e. does not match in the raw data. Each release spends some of this
//! stock of randomness. The value function is solved on a grid over
//! `f = 1 - b`, where it is decreasing and, by the theory, convex.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::screen::NoiseLevel;
use crate::sweep::SweepTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicParams {
    h: f64,
    delta: f64,
    kappa: f64,
}

impl DynamicParams {
    pub fn new(h: f64, delta: f64, kappa: f64) -> Result<Self> {
        if !(h > 0.0 && h < 0.5) {
            return Err(domain(format!("hacker fraction h must lie in (0, 1/2), got {h}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("discount factor must lie in (0, 1), got {delta}")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(domain(format!("kappa must lie in (0, 1), got {kappa}")));
        }
        Ok(Self { h, delta, kappa })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Bait probability in period 1, when the hacker guesses blindly.
    pub fn initial_bait(&self) -> f64 {
        1.0 - self.kappa
    }
}

/// Principal's expected payoff in one period:
/// `(1-h)(1-q) + h(-(1-b)(1-q) - bq)`.
pub fn flow_utility(q: NoiseLevel, b: f64, h: f64) -> f64 {
    let q = q.value();
    (1.0 - h) * (1.0 - q) + h * (-(1.0 - b) * (1.0 - q) - b * q)
}

/// Next-period bait probability `bq / ((1-b)(1-q) + bq)`. A raw release
/// (`q = 0`) leaves no randomness.
pub fn stock_transition(q: NoiseLevel, b: f64) -> f64 {
    let q = q.value();
    if q == 0.0 {
        return 0.0;
    }
    let num = b * q;
    num / ((1.0 - b) * (1.0 - q) + num)
}

/// The same transition in `f = 1 - b` coordinates.
fn theta(q: f64, f: f64) -> f64 {
    if q == 0.0 {
        return 1.0;
    }
    let keep = f * (1.0 - q);
    keep / (keep + (1.0 - f) * q)
}

fn flow_f(q: f64, f: f64, h: f64) -> f64 {
    (1.0 - h) * (1.0 - q) - h * (f * (1.0 - q) + (1.0 - f) * q)
}

/// Grid and stopping settings for [`solve_bellman`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub grid_size: usize,
    pub q_grid_size: usize,
    pub tol: f64,
    pub max_iterations: usize,
    /// Policy-evaluation steps between greedy sweeps; 0 gives plain value
    /// iteration.
    pub eval_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { grid_size: 2001, q_grid_size: 1001, tol: 1e-9, max_iterations: 100_000, eval_steps: 500 }
    }
}

/// Converged value function and greedy policy on a uniform grid over `f`.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    params: DynamicParams,
    grid: Vec<f64>,
    values: Vec<f64>,
    policy: Vec<f64>,
    q_grid: Vec<f64>,
    deltas: Vec<f64>,
}

/// Solves `v(f) = max_q u(q, f) + delta v(theta(q, f))` by value iteration.
///
/// The iteration starts from the value of releasing raw data immediately,
/// which is exact wherever that is optimal and is improved on by one Bellman
/// step, so the iterates increase monotonically. Between greedy sweeps the
/// current policy is evaluated for `eval_steps` cheap steps. Convergence is
/// declared when a greedy sweep changes no value by more than `tol`.
pub fn solve_bellman(params: &DynamicParams, settings: &SolverSettings) -> Result<ValueGrid> {
    let SolverSettings { grid_size, q_grid_size, tol, max_iterations, eval_steps } = *settings;
    if grid_size < 101 {
        return Err(domain(format!("grid size must be at least 101, got {grid_size}")));
    }
    if q_grid_size < 2 {
        return Err(domain(format!("noise grid needs at least 2 points, got {q_grid_size}")));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    let grid = uniform(grid_size, 1.0);
    let q_grid = uniform(q_grid_size, 0.5);
    let (h, delta) = (params.h, params.delta);
    let tail = delta * (1.0 - 2.0 * h) / (1.0 - delta);
    let mut values: Vec<f64> = grid.iter().map(|&f| flow_f(0.0, f, h) + tail).collect();
    let mut deltas = Vec::new();
    loop {
        let next: Vec<(f64, f64)> = grid.par_iter().map(|&f| greedy(f, &values, &q_grid, h, delta)).collect();
        let diff = next.iter().zip(&values).map(|(n, v)| (n.1 - v).abs()).fold(0.0, f64::max);
        deltas.push(diff);
        let done = diff < tol;
        let policy: Vec<f64> = next.iter().map(|n| n.0).collect();
        values = next.into_iter().map(|n| n.1).collect();
        if done {
            return Ok(ValueGrid { params: *params, grid, values, policy, q_grid, deltas });
        }
        if deltas.len() >= max_iterations {
            return Err(Error::NonConvergence { iterations: deltas.len(), last_delta: diff, tol });
        }
        if eval_steps > 0 {
            evaluate_policy(&mut values, &grid, &policy, h, delta, eval_steps);
        }
    }
}

/// Applies the Bellman operator of a fixed policy `steps` times.
fn evaluate_policy(values: &mut Vec<f64>, grid: &[f64], policy: &[f64], h: f64, delta: f64, steps: usize) {
    let last = grid.len() - 1;
    let plan: Vec<(f64, usize, f64)> = grid
        .iter()
        .zip(policy)
        .map(|(&f, &q)| {
            let x = theta(q, f).clamp(0.0, 1.0) * last as f64;
            let i = (x.floor() as usize).min(last - 1);
            (flow_f(q, f, h), i, x - i as f64)
        })
        .collect();
    let mut next = vec![0.0; values.len()];
    for _ in 0..steps {
        for (out, &(u, i, t)) in next.iter_mut().zip(&plan) {
            *out = u + delta * (values[i] + t * (values[i + 1] - values[i]));
        }
        std::mem::swap(values, &mut next);
    }
}

fn uniform(size: usize, top: f64) -> Vec<f64> {
    let last = (size - 1) as f64;
    (0..size).map(|i| top * i as f64 / last).collect()
}

/// Linear interpolation on the uniform grid over `[0, 1]`.
fn interpolate(values: &[f64], f: f64) -> f64 {
    let last = values.len() - 1;
    let x = f.clamp(0.0, 1.0) * last as f64;
    let i = (x.floor() as usize).min(last - 1);
    let t = x - i as f64;
    values[i] + t * (values[i + 1] - values[i])
}

/// Best noise level at `f` and its value; ties go to the smaller noise.
fn greedy(f: f64, values: &[f64], q_grid: &[f64], h: f64, delta: f64) -> (f64, f64) {
    let mut best = (0.0, f64::NEG_INFINITY);
    for &q in q_grid {
        let v = flow_f(q, f, h) + delta * interpolate(values, theta(q, f));
        if v > best.1 {
            best = (q, v);
        }
    }
    best
}

impl ValueGrid {
    pub fn params(&self) -> &DynamicParams {
        &self.params
    }

    /// Grid points in `f = 1 - b`, ascending.
    pub fn grid_points(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn policy(&self) -> &[f64] {
        &self.policy
    }

    /// Sup-norm change of each value-iteration sweep.
    pub fn sweep_deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }

    pub fn q_step(&self) -> f64 {
        self.q_grid[1] - self.q_grid[0]
    }

    /// Interpolated value at bait probability `b`.
    pub fn value_at_bait(&self, b: f64) -> f64 {
        interpolate(&self.values, 1.0 - b)
    }

    /// Greedy noise level at bait probability `b`, using the converged values.
    pub fn policy_at_bait(&self, b: f64) -> NoiseLevel {
        let (q, _) = greedy(1.0 - b, &self.values, &self.q_grid, self.params.h, self.params.delta);
        NoiseLevel::new(q).expect("noise grid stays in [0, 1/2]")
    }

    /// Largest increase between neighbouring grid values; `<= 0` means the
    /// values are nonincreasing in `f`.
    pub fn max_increase(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest second difference over the grid; `>= 0` means convex in `f`.
    pub fn min_second_difference(&self) -> f64 {
        self.values.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Largest ratio of successive greedy-sweep changes, ignoring sweeps whose
    /// change is already below `floor`.
    pub fn max_contraction_ratio(&self, floor: f64) -> f64 {
        self.deltas.windows(2).filter(|w| w[0] > floor).map(|w| w[1] / w[0]).fold(0.0, f64::max)
    }
}

/// One period of the optimal path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord {
    pub t: usize,
    pub b: f64,
    pub q: f64,
    pub pass_prob_maven: f64,
    pub pass_prob_hacker: f64,
    pub flow_utility: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<PeriodRecord>,
    /// First period in which raw data is released, if any within the horizon.
    pub t_star: Option<usize>,
}

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["t", "b_t", "q_t", "pass_prob_maven", "pass_prob_hacker", "flow_utility"];

impl Trajectory {
    pub fn record(&self, t: usize) -> Option<&PeriodRecord> {
        self.records.get(t.checked_sub(1)?)
    }

    pub fn to_table(&self) -> SweepTable {
        let mut table = SweepTable::new(TRAJECTORY_COLUMNS);
        for r in &self.records {
            table
                .push(vec![
                    r.t.into(),
                    r.b.into(),
                    r.q.into(),
                    r.pass_prob_maven.into(),
                    r.pass_prob_hacker.into(),
                    r.flow_utility.into(),
                ])
                .expect("row width matches header");
        }
        table
    }
}

/// Follows the greedy policy from `b_1 = 1 - kappa` for `horizon` periods.
/// Noise below half a grid step counts as a raw release.
pub fn simulate_trajectory(params: &DynamicParams, grid: &ValueGrid, horizon: usize) -> Trajectory {
    let eps = 0.5 * grid.q_step();
    let mut b = params.initial_bait();
    let mut records = Vec::with_capacity(horizon);
    let mut t_star = None;
    for t in 1..=horizon {
        let q = grid.policy_at_bait(b);
        let qv = if q.value() < eps { 0.0 } else { q.value() };
        if qv == 0.0 && t_star.is_none() {
            t_star = Some(t);
        }
        let q = NoiseLevel::new(qv).expect("valid noise");
        records.push(PeriodRecord {
            t,
            b,
            q: qv,
            pass_prob_maven: 1.0 - qv,
            pass_prob_hacker: (1.0 - b) * (1.0 - qv) + b * qv,
            flow_utility: flow_utility(q, b, params.h),
        });
        b = stock_transition(q, b);
    }
    Trajectory { records, t_star }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nl(q: f64) -> NoiseLevel {
        NoiseLevel::new(q).unwrap()
    }

    #[test]
    fn flow_utility_examples() {
        for h in [0.1, 0.3, 0.45] {
            assert!((flow_utility(NoiseLevel::ZERO, 0.0, h) - (1.0 - 2.0 * h)).abs() < 1e-15);
            assert!((flow_utility(NoiseLevel::ZERO, 1.0, h) - (1.0 - h)).abs() < 1e-15);
            for b in [0.0, 0.3, 1.0] {
                assert!((flow_utility(NoiseLevel::HALF, b, h) - ((1.0 - h) / 2.0 - h / 2.0)).abs() < 1e-15);
                let f = 1.0 - b;
                for q in [0.0, 0.2, 0.4] {
                    let d = (flow_utility(nl(q + 1e-6), b, h) - flow_utility(nl(q), b, h)) / 1e-6;
                    assert!((d - (-1.0 + 2.0 * h * f)).abs() < 1e-8);
                    assert!(d < 0.0);
                }
            }
        }
    }

    #[test]
    fn transition_examples() {
        for b in [0.0, 0.2, 0.99, 1.0] {
            assert!((stock_transition(NoiseLevel::HALF, b) - b).abs() < 1e-15);
        }
        for b in [0.0, 0.5, 1.0] {
            assert_eq!(stock_transition(NoiseLevel::ZERO, b), 0.0);
        }
        let expect = 0.99 * 0.3 / (0.01 * 0.7 + 0.99 * 0.3);
        assert!((stock_transition(nl(0.3), 0.99) - expect).abs() < 1e-15);
        for b in [0.1, 0.5, 0.9] {
            let mut prev = -1.0;
            for i in 0..=50 {
                let next = stock_transition(nl(i as f64 * 0.01), b);
                assert!(next > prev && next <= b + 1e-15);
                prev = next;
            }
        }
    }

    #[test]
    fn theta_matches_transition() {
        for b in [0.1, 0.5, 0.99] {
            for q in [0.0, 0.1, 0.5] {
                assert!((theta(q, 1.0 - b) - (1.0 - stock_transition(nl(q), b))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(DynamicParams::new(0.5, 0.9, 0.1).is_err());
        assert!(DynamicParams::new(0.3, 1.0, 0.1).is_err());
        assert!(DynamicParams::new(0.3, 0.9, 0.0).is_err());
        let p = DynamicParams::new(0.3, 0.9, 0.1).unwrap();
        let small = SolverSettings { grid_size: 50, ..SolverSettings::default() };
        assert!(solve_bellman(&p, &small).is_err());
        let capped = SolverSettings { grid_size: 101, q_grid_size: 51, tol: 1e-15, max_iterations: 3, eval_steps: 0 };
        assert!(matches!(solve_bellman(&p, &capped), Err(Error::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn small_problem_properties() {
        let p = DynamicParams::new(0.45, 0.9, 0.01).unwrap();
        let s = SolverSettings { grid_size: 401, q_grid_size: 201, tol: 1e-10, max_iterations: 10_000, eval_steps: 0 };
        let g = solve_bellman(&p, &s).unwrap();
        let floor = (1.0 - p.h() - 0.5) / (1.0 - p.delta());
        assert!(g.values().iter().all(|&v| v >= floor - 1e-9));
        assert!(g.max_increase() <= 1e-9);
        assert!(g.policy()[1..].iter().all(|&q| q < 0.5));
        assert!(g.max_contraction_ratio(1e-8) <= p.delta() + 1e-6);
        let fast = solve_bellman(&p, &SolverSettings { eval_steps: 300, ..s }).unwrap();
        assert!(fast.iterations() < g.iterations());
        assert!(fast.max_contraction_ratio(1e-8) <= p.delta() + 1e-6);
        let gap = fast.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-7, "{gap}");
        assert_eq!(fast.policy(), g.policy());
        let traj = simulate_trajectory(&p, &g, 30);
        assert!(traj.records.windows(2).all(|w| w[1].b <= w[0].b + 1e-15));
        let t_star = traj.t_star.unwrap();
        for r in &traj.records[t_star..] {
            assert_eq!((r.q, r.b), (0.0, 0.0));
            assert!((r.flow_utility - (1.0 - 2.0 * p.h())).abs() < 1e-12);
        }
    }

    #[test]
    fn almost_no_hackers_release_raw_data_at_once() {
        let p = DynamicParams::new(1e-6, 0.99, 0.01).unwrap();
        let s = SolverSettings { grid_size: 201, q_grid_size: 101, tol: 1e-10, max_iterations: 10_000, eval_steps: 0 };
        let g = solve_bellman(&p, &s).unwrap();
        assert_eq!(simulate_trajectory(&p, &g, 5).t_star, Some(1));
    }

    #[test]
    fn trajectory_table_columns() {
        let p = DynamicParams::new(0.3, 0.9, 0.2).unwrap();
        let s = SolverSettings { grid_size: 101, q_grid_size: 51, tol: 1e-9, max_iterations: 10_000, eval_steps: 0 };
        let g = solve_bellman(&p, &s).unwrap();
        let t = simulate_trajectory(&p, &g, 8).to_table();
        assert_eq!(t.columns(), TRAJECTORY_COLUMNS);
        assert_eq!(t.len(), 8);
    }
}
