//! Command execution: turns a resolved [`ExperimentConfig`] into output
//! tables, writes them with a [`RunManifest`] and replays manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{Command, ExperimentConfig};
use crate::dynamic::{simulate_trajectory, solve_bellman, DynamicParams, SolverSettings};
use crate::error::domain;
use crate::extensions::*;
use crate::manifest::{OutputDigest, RunManifest};
use crate::mc::StreamKey;
use crate::regression::{run_experiment, RegressionExperiment, Triplet};
use crate::screen::*;
use crate::sweep::{Cell, SweepTable};
use crate::{verify, Error, Result};

/// Validated inputs of one command.
#[derive(Debug, Clone)]
enum Plan {
    StaticSweep {
        params: ScreenParams,
        qs: Vec<NoiseLevel>,
    },
    OptimalNoise {
        params: ScreenParams,
        grid_step: f64,
        n_list: Vec<u32>,
    },
    Threshold {
        params: ScreenParams,
        q: NoiseLevel,
    },
    RedHerring {
        params: ScreenParams,
        qs: Vec<NoiseLevel>,
        sim_q: Vec<NoiseLevel>,
        replications: u64,
        seed: u64,
    },
    FiniteK {
        screen: ScreenParams,
        ks: Vec<FiniteKParams>,
        qs: Vec<NoiseLevel>,
        herring: RedHerring,
        replications: u64,
        seed: u64,
    },
    NonIid {
        n: usize,
        h: f64,
        mu: BitVectorDist,
        qs: Vec<NoiseLevel>,
    },
    NoTrueCause {
        params: NoTrueCauseParams,
        qs: Vec<NoiseLevel>,
        replications: u64,
        seed: u64,
    },
    Dynamic {
        params: DynamicParams,
        settings: SolverSettings,
        horizon: usize,
    },
    Regression {
        experiment: RegressionExperiment,
        grid: Vec<f64>,
    },
    Verify {
        seed: u64,
    },
}

fn to_u32(key: &str, v: u64) -> Result<u32> {
    u32::try_from(v).map_err(|_| domain(format!("{key} = {v} is too large")))
}

fn to_usize(key: &str, v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| domain(format!("{key} = {v} is too large")))
}

fn levels(qs: &[f64]) -> Result<Vec<NoiseLevel>> {
    qs.iter().map(|&q| NoiseLevel::new(q)).collect()
}

fn triplet(key: &str, v: &[u64]) -> Result<Triplet> {
    match v {
        [a, b, c] => Ok([to_usize(key, *a)?, to_usize(key, *b)?, to_usize(key, *c)?]),
        _ => Err(domain(format!("{key} must list exactly three covariates, got {}", v.len()))),
    }
}

fn screen(cfg: &ExperimentConfig) -> Result<ScreenParams> {
    let n = to_u32("n", cfg.int("n")?)?;
    let h = cfg.real("h")?;
    match (cfg.value("w_maven"), cfg.value("w_hacker")) {
        (Some(_), Some(_)) => ScreenParams::new(n, h, cfg.real("w_maven")?, cfg.real("w_hacker")?),
        _ => ScreenParams::baseline(n, h),
    }
}

fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    Ok(match cfg.command {
        Command::StaticSweep => {
            let params = screen(cfg)?;
            let explicit = cfg.reals("q")?;
            let qs = if explicit.is_empty() { NoiseLevel::grid(cfg.real("q_step")?)? } else { levels(explicit)? };
            Plan::StaticSweep { params, qs }
        }
        Command::OptimalNoise => {
            let params = screen(cfg)?;
            if params.n() < 2 {
                return Err(domain("optimal noise needs N >= 2"));
            }
            let grid_step = cfg.real("grid_step")?;
            if !(grid_step > 0.0 && grid_step <= 0.5) {
                return Err(domain(format!("grid_step must lie in (0, 1/2], got {grid_step}")));
            }
            let n_list = cfg.ints("n_list")?.iter().map(|&n| to_u32("n_list", n)).collect::<Result<Vec<_>>>()?;
            if n_list.iter().any(|&n| n < 2) || n_list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(domain("n_list must be strictly ascending with every N >= 2"));
            }
            Plan::OptimalNoise { params, grid_step, n_list }
        }
        Command::Threshold => Plan::Threshold { params: screen(cfg)?, q: NoiseLevel::new(cfg.real("q")?)? },
        Command::RedHerring => Plan::RedHerring {
            params: screen(cfg)?,
            qs: NoiseLevel::grid(cfg.real("q_step")?)?,
            sim_q: levels(cfg.reals("sim_q")?)?,
            replications: cfg.int("replications")?,
            seed: cfg.int("seed")?,
        },
        Command::FiniteK => {
            let screen = ScreenParams::baseline(to_u32("n", cfg.int("n")?)?, cfg.real("h")?)?;
            let ks = cfg
                .ints("k")?
                .iter()
                .map(|&k| FiniteKParams::new(to_usize("k", k)?, screen))
                .collect::<Result<Vec<_>>>()?;
            if ks.is_empty() {
                return Err(domain("k must list at least one covariate count"));
            }
            let herring = match cfg.text("herring")? {
                "independent" => RedHerring::Independent,
                "complement" => RedHerring::Complement,
                other => return Err(Error::Usage(format!("herring must be independent or complement, got {other:?}"))),
            };
            Plan::FiniteK {
                screen,
                ks,
                qs: levels(cfg.reals("q")?)?,
                herring,
                replications: cfg.int("replications")?,
                seed: cfg.int("seed")?,
            }
        }
        Command::NonIid => {
            let n = to_usize("n", cfg.int("n")?)?;
            let h = cfg.real("h")?;
            if !(h > 0.0 && h < 1.0) {
                return Err(domain(format!("hacker fraction h must lie in (0, 1), got {h}")));
            }
            if n == 0 {
                return Err(domain("number of observations N must be positive"));
            }
            let mu = match cfg.text("mu")? {
                "uniform" => BitVectorDist::uniform(n)?,
                "random" => {
                    crate::prob::check_enum_capacity(n)?;
                    BitVectorDist::random(n, &mut StreamKey::new(cfg.int("seed")?, "non-iid-mu").rng(0))?
                }
                other => return Err(Error::Usage(format!("mu must be uniform or random, got {other:?}"))),
            };
            Plan::NonIid { n, h, mu, qs: NoiseLevel::grid(cfg.real("q_step")?)? }
        }
        Command::NoTrueCause => {
            let rule: AbstentionRule = cfg.text("abstention")?.parse()?;
            let params =
                NoTrueCauseParams::new(to_u32("n", cfg.int("n")?)?, cfg.real("h")?, cfg.real("beta")?, cfg.real("w")?)?
                    .with_rule(rule);
            Plan::NoTrueCause {
                params,
                qs: levels(cfg.reals("q")?)?,
                replications: cfg.int("replications")?,
                seed: cfg.int("seed")?,
            }
        }
        Command::Dynamic => {
            let params = DynamicParams::new(cfg.real("h")?, cfg.real("delta")?, cfg.real("kappa")?)?;
            let settings = SolverSettings {
                grid_size: to_usize("grid_size", cfg.int("grid_size")?)?,
                q_grid_size: to_usize("q_grid_size", cfg.int("q_grid_size")?)?,
                tol: cfg.real("tol")?,
                max_iterations: to_usize("max_iterations", cfg.int("max_iterations")?)?,
                eval_steps: to_usize("eval_steps", cfg.int("eval_steps")?)?,
            };
            if settings.grid_size < 101 || settings.q_grid_size < 2 || !(settings.tol > 0.0) {
                return Err(domain("need grid_size >= 101, q_grid_size >= 2 and tol > 0"));
            }
            let horizon = to_usize("horizon", cfg.int("horizon")?)?;
            if horizon == 0 {
                return Err(domain("horizon must be positive"));
            }
            Plan::Dynamic { params, settings, horizon }
        }
        Command::Regression => {
            let experiment = RegressionExperiment {
                num_covariates: to_usize("num_covariates", cfg.int("num_covariates")?)?,
                num_obs: to_usize("num_obs", cfg.int("num_obs")?)?,
                error_variance: cfg.real("error_variance")?,
                causal_triplet: triplet("causal_triplet", cfg.ints("causal_triplet")?)?,
                maven_alternative: triplet("maven_alternative", cfg.ints("maven_alternative")?)?,
                noise_std: 0.0,
                h: cfg.real("h")?,
                replications: cfg.int("replications")?,
                seed: cfg.int("seed")?,
                randomize_causal: cfg.flag("randomize_causal")?,
                comparison_h: cfg.reals("comparison_h")?.to_vec(),
            };
            experiment.validate()?;
            let grid = cfg.reals("noise_std")?.to_vec();
            if grid.is_empty() || grid.iter().any(|s| *s < 0.0) {
                return Err(domain("noise_std must list at least one level, each >= 0"));
            }
            Plan::Regression { experiment, grid }
        }
        Command::Verify => Plan::Verify { seed: cfg.int("seed")? },
    })
}

/// Checks every parameter against the owning module's preconditions.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    plan(cfg).map(|_| ())
}

/// Tables and console lines produced by one command.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    /// `(suffix, table)`; the empty suffix names the primary table.
    pub tables: Vec<(String, SweepTable)>,
    pub messages: Vec<String>,
    /// Failed checks, for `verify`.
    pub failures: usize,
}

impl RunOutput {
    fn table(&mut self, suffix: &str, t: SweepTable) {
        self.tables.push((suffix.to_string(), t));
    }

    fn say(&mut self, line: impl Into<String>) {
        self.messages.push(line.into());
    }
}

/// Runs the command in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    match plan(cfg)? {
        Plan::StaticSweep { params, qs } => {
            let t = static_sweep(&params, &qs);
            if qs.len() <= 10 {
                for q in &qs {
                    let vh = v_hacker(*q, params.n());
                    out.say(format!(
                        "q = {}: bait_probability = {:.6}, payoff = {:.6}",
                        q.value(),
                        1.0 - vh,
                        principal_payoff(*q, &params)
                    ));
                }
            }
            out.table("", t);
        }
        Plan::OptimalNoise { params, grid_step, n_list } => {
            let q = optimal_noise(&params)?;
            let numeric = numeric_optimal_noise(&params, grid_step, crate::OPT_TOL)?;
            let mut t = SweepTable::long();
            let n = params.n();
            t.push_long(n, q.value(), "optimal_noise");
            t.push_long(n, numeric.value(), "numeric_optimal_noise");
            t.push_long(n, principal_payoff(q, &params), "payoff");
            t.push_long(n, principal_payoff(NoiseLevel::ZERO, &params), "payoff_at_zero_noise");
            t.push_long(n, corner_odds(n), "corner_odds");
            out.say(format!("q* = {}", q.value()));
            out.say(format!("numeric q* = {}", numeric.value()));
            out.table("", t);
            if !n_list.is_empty() {
                out.table("asymptotic", asymptotic_payoff_curve(params.h(), &n_list)?);
            }
        }
        Plan::Threshold { params, q } => {
            let n = params.n();
            let mut t = SweepTable::long();
            for k in 1..=n {
                let test = ThresholdTest::new(k, n)?;
                t.push_long(k, hacker_pass_with_threshold(q, test, n), "hacker_pass");
                t.push_long(k, payoff_with_threshold(q, test, &params), "payoff");
            }
            let best = optimal_threshold(q, &params);
            out.say(format!("optimal threshold = {} of {n}", best.value()));
            out.table("", t);
        }
        Plan::RedHerring { params, qs, sim_q, replications, seed } => {
            let mut t = SweepTable::long();
            for q in &qs {
                t.push_long(q.value(), red_herring_payoff(*q, &params), "red_herring_payoff");
                t.push_long(q.value(), red_herring_maven_payoff(*q, params.n()), "maven_payoff");
                t.push_long(q.value(), principal_payoff(*q, &params), "baseline_payoff");
            }
            out.table("", t);
            let mut s = SweepTable::long();
            let n = params.n();
            let slope = red_herring_derivative_at_zero(&params);
            s.push_long(n, slope, "derivative_at_zero");
            s.push_long(n, red_herring_threshold(n), "sign_threshold_h");
            out.say(format!("slope at zero noise = {slope:.6e}, sign threshold h = {:.6e}", red_herring_threshold(n)));
            out.table("summary", s);
            if replications > 0 {
                let mut sim = GameSummary::table_header();
                for q in &sim_q {
                    binary_game_summary(params, *q, GameVariant::RedHerring, replications, seed)?.push_row(&mut sim)?;
                }
                out.table("simulation", sim);
            }
        }
        Plan::FiniteK { screen, ks, qs, herring, replications, seed } => {
            let herring_name = match herring {
                RedHerring::Independent => "independent",
                RedHerring::Complement => "complement",
            };
            let mut t = SweepTable::new([
                "n",
                "k",
                "q",
                "h",
                "herring",
                "exact_hacker_payoff",
                "exact_payoff",
                "zero_noise_hacker_payoff",
            ]);
            let mut sim = GameSummary::table_header();
            let variant = match herring {
                RedHerring::Independent => GameVariant::FiniteK,
                RedHerring::Complement => GameVariant::Baseline,
            };
            for fk in &ks {
                for q in &qs {
                    let exact = finite_k_hacker_payoff(*q, screen.n(), fk.k(), herring)?;
                    t.push(vec![
                        screen.n().into(),
                        fk.k().into(),
                        q.value().into(),
                        screen.h().into(),
                        herring_name.into(),
                        exact.into(),
                        finite_k_payoff(*q, fk, herring)?.into(),
                        finite_k_hacker_payoff_zero_noise(screen.n(), fk.k())?.into(),
                    ])?;
                    if replications > 0 {
                        let s = binary_game_summary(*fk, *q, variant, replications, seed)?;
                        out.say(format!(
                            "K = {}, q = {}: hacker payoff {:.5} (SE {:.5}), exact {:.5}",
                            fk.k(),
                            q.value(),
                            s.hacker_payoff.mean(),
                            s.hacker_payoff.std_error(),
                            exact
                        ));
                        s.push_row(&mut sim)?;
                    }
                }
            }
            out.table("", t);
            if replications > 0 {
                out.table("simulation", sim);
            }
        }
        Plan::NonIid { n, h, mu, qs } => {
            let mut t = SweepTable::long();
            for q in &qs {
                t.push_long(q.value(), v_hacker_noniid(&mu, *q), "v_hacker");
                t.push_long(q.value(), (1.0 - q.value()).powi(n as i32), "v_hacker_iid");
                t.push_long(q.value(), noniid_payoff(&mu, *q, h), "payoff");
            }
            out.table("", t);
            let d = v_hacker_noniid_derivative_at_zero(&mu);
            let mut s = SweepTable::long();
            s.push_long(n, d, "derivative_at_zero");
            out.say(format!("hacker slope at zero noise = {d:.6}"));
            out.table("summary", s);
        }
        Plan::NoTrueCause { params, qs, replications, seed } => {
            let mut t = SweepTable::new([
                "n",
                "q",
                "h",
                "beta",
                "w",
                "rule",
                "exact_payoff",
                "exact_hacker_payoff",
                "exact_maven_payoff",
                "maven_lower_bound",
            ]);
            let mut sim = NoTrueCauseSummary::table_header();
            let rule = match params.rule() {
                AbstentionRule::ExpectedUtility => "utility",
                AbstentionRule::Literal => "literal",
            };
            for q in &qs {
                let (blended, hacker, maven) = no_true_cause_payoffs(*q, &params);
                t.push(vec![
                    params.n().into(),
                    q.value().into(),
                    params.h().into(),
                    params.beta().into(),
                    params.w().into(),
                    rule.into(),
                    blended.into(),
                    hacker.into(),
                    maven.into(),
                    no_true_cause_lower_bound(*q, params.n(), params.beta()).into(),
                ])?;
                let mut line = format!("q = {}: exact payoff {blended:.5}", q.value());
                if replications > 0 {
                    let s = no_true_cause_summary(&params, *q, replications, seed)?;
                    line += &format!(", simulated {:.5} (SE {:.5})", s.payoff.mean(), s.payoff.std_error());
                    s.push_row(&mut sim)?;
                }
                out.say(line);
            }
            out.table("", t);
            if replications > 0 {
                out.table("simulation", sim);
            }
        }
        Plan::Dynamic { params, settings, horizon } => {
            let grid = solve_bellman(&params, &settings)?;
            let traj = simulate_trajectory(&params, &grid, horizon);
            match traj.t_star {
                Some(t) => out.say(format!("t* = {t}")),
                None => out.say(format!("no raw release within {horizon} periods")),
            }
            out.say(format!("converged after {} sweeps", grid.iterations()));
            out.table("", traj.to_table());
            let mut v = SweepTable::new(["b", "value", "policy_q"]);
            for ((f, val), q) in grid.grid_points().iter().zip(grid.values()).zip(grid.policy()).rev() {
                v.push(vec![Cell::from(1.0 - f), (*val).into(), (*q).into()])?;
            }
            out.table("values", v);
        }
        Plan::Regression { experiment, grid } => {
            let r = run_experiment(&experiment, &grid)?;
            let argmax = r.argmax_table();
            for row in argmax.rows() {
                out.say(format!(
                    "h = {}: best noise_std = {}, gain = {:.2} combined SE",
                    row[0].as_f64().unwrap_or(f64::NAN),
                    row[1].as_f64().unwrap_or(f64::NAN),
                    row[6].as_f64().unwrap_or(f64::NAN)
                ));
            }
            out.table("", r.to_table());
            out.table("argmax", argmax);
        }
        Plan::Verify { seed } => {
            let results = verify::run_all(seed);
            for r in &results {
                out.say(format!(
                    "{} {} (error {:.3e}, tolerance {:.3e}) {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.error,
                    r.tolerance,
                    r.detail
                ));
            }
            out.failures = results.iter().filter(|r| !r.passed).count();
            out.say(format!("{} of {} checks passed", results.len() - out.failures, results.len()));
            out.table("", verify::to_table(&results));
        }
    }
    Ok(out)
}

/// File name of a table.
pub fn output_name(command: Command, suffix: &str, ext: &str) -> String {
    if suffix.is_empty() {
        format!("{}.{ext}", command.name())
    } else {
        format!("{}_{suffix}.{ext}", command.name())
    }
}

/// File name of the manifest written next to the outputs.
pub fn manifest_name(command: Command) -> String {
    format!("{}.manifest.json", command.name())
}

/// Everything a completed run produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub output: RunOutput,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// Executes `cfg` on a pool of `threads` workers (0: one per core), writes
/// every table and the manifest into the configured output directory.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> Result<RunRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    let workers = pool.current_num_threads();
    let start = Instant::now();
    let output = pool.install(|| execute(cfg))?;
    let duration = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut outputs = Vec::new();
    for (suffix, table) in &output.tables {
        let name = output_name(cfg.command, suffix, cfg.format.extension());
        let bytes = table.encode(cfg.format).into_bytes();
        std::fs::write(cfg.out_dir.join(&name), &bytes)?;
        outputs.push(OutputDigest::of(name, &bytes));
    }
    let manifest = RunManifest::new(cfg, workers, duration, outputs);
    let manifest_path = cfg.out_dir.join(manifest_name(cfg.command));
    manifest.write(&manifest_path)?;
    Ok(RunRecord { output, manifest, manifest_path })
}

/// Comparison of one regenerated file with its recorded digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayFile {
    pub file: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl ReplayFile {
    pub fn matches(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub files: Vec<ReplayFile>,
    pub record: RunRecord,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        self.files.iter().all(ReplayFile::matches) && self.files.len() == self.record.manifest.outputs.len()
    }
}

/// Reruns the command recorded in the manifest at `path`, writing into
/// `out_dir`, and compares the new files with the recorded digests.
pub fn replay(path: &Path, out_dir: &Path, threads: usize) -> Result<ReplayReport> {
    let manifest = RunManifest::read(path)?;
    let cfg = manifest.config()?.with_out_dir(out_dir);
    let record = run(&cfg, threads)?;
    let files = manifest
        .outputs
        .iter()
        .map(|o| ReplayFile {
            file: o.file.clone(),
            expected: o.sha256.clone(),
            actual: record.manifest.outputs.iter().find(|n| n.file == o.file).map(|n| n.sha256.clone()),
        })
        .collect();
    Ok(ReplayReport { files, record })
}
