//! Experiment configuration: a per-command parameter schema, `key = value`
//! files and flag overrides resolved into one typed [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::sweep::Format;
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NOISEBAIT_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    StaticSweep,
    OptimalNoise,
    Threshold,
    RedHerring,
    FiniteK,
    NonIid,
    NoTrueCause,
    Dynamic,
    Regression,
    Verify,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::StaticSweep,
        Command::OptimalNoise,
        Command::Threshold,
        Command::RedHerring,
        Command::FiniteK,
        Command::NonIid,
        Command::NoTrueCause,
        Command::Dynamic,
        Command::Regression,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::StaticSweep => "static-sweep",
            Command::OptimalNoise => "optimal-noise",
            Command::Threshold => "threshold",
            Command::RedHerring => "red-herring",
            Command::FiniteK => "finite-k",
            Command::NonIid => "non-iid",
            Command::NoTrueCause => "no-true-cause",
            Command::Dynamic => "dynamic",
            Command::Regression => "regression",
            Command::Verify => "verify",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::StaticSweep => "Pass probabilities and payoff across noise levels",
            Command::OptimalNoise => "Closed-form and numeric optimal noise level",
            Command::Threshold => "Payoff under partial-match passing thresholds",
            Command::RedHerring => "Payoff with an independent red herring",
            Command::FiniteK => "Finitely many covariates: exact payoff and Monte Carlo",
            Command::NonIid => "Correlated observations drawn from a distribution over bit vectors",
            Command::NoTrueCause => "Game in which no covariate may be causal",
            Command::Dynamic => "Dynamic data reuse: Bellman solution and trajectory",
            Command::Regression => "Linear-regression Monte Carlo with Gaussian release noise",
            Command::Verify => "Run every oracle cross-check",
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        use ParamKind::*;
        const fn p(key: &'static str, kind: ParamKind, default: &'static str, help: &'static str) -> ParamSpec {
            ParamSpec { key, kind, default, help }
        }
        match self {
            Command::StaticSweep => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "10", "observations per covariate"),
                    p("h", Real, "0.3", "hacker fraction"),
                    p("w_maven", Real, "1", "maven weight on passing a true cause"),
                    p("w_hacker", Real, "0", "hacker weight on passing a true cause"),
                    p("q", RealList, "", "explicit noise levels; overrides q_step"),
                    p("q_step", Real, "0.01", "noise grid step over [0, 1/2]"),
                ];
                P
            }
            Command::OptimalNoise => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "2", "observations per covariate"),
                    p("h", Real, "0.5", "hacker fraction"),
                    p("w_maven", Real, "1", "maven weight on passing a true cause"),
                    p("w_hacker", Real, "0", "hacker weight on passing a true cause"),
                    p("grid_step", Real, "0.0001", "grid step of the numeric search"),
                    p("n_list", IntList, "", "ascending N values for the asymptotic curve"),
                ];
                P
            }
            Command::Threshold => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "10", "observations per covariate"),
                    p("h", Real, "0.3", "hacker fraction"),
                    p("q", Real, "0.1", "noise level"),
                ];
                P
            }
            Command::RedHerring => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "10", "observations per covariate"),
                    p("h", Real, "0.3", "hacker fraction"),
                    p("q_step", Real, "0.01", "noise grid step over [0, 1/2]"),
                    p("sim_q", RealList, "0,0.05,0.1", "noise levels for the Monte Carlo check"),
                    p("replications", Int, "0", "Monte Carlo replications per level; 0 skips"),
                    p("seed", Seed, "1", "master seed"),
                ];
                P
            }
            Command::FiniteK => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "3", "observations per covariate"),
                    p("h", Real, "0.5", "hacker fraction"),
                    p("k", IntList, "2,10,100,5000", "covariate counts"),
                    p("q", RealList, "0", "noise levels"),
                    p("herring", Text, "independent", "red herring: independent or complement"),
                    p("replications", Int, "100000", "Monte Carlo replications per cell; 0 skips"),
                    p("seed", Seed, "1", "master seed"),
                ];
                P
            }
            Command::NonIid => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "4", "observations per covariate"),
                    p("h", Real, "0.3", "hacker fraction"),
                    p("mu", Text, "uniform", "distribution over bit vectors: uniform or random"),
                    p("q_step", Real, "0.01", "noise grid step over [0, 1/2]"),
                    p("seed", Seed, "1", "seed for a random distribution"),
                ];
                P
            }
            Command::NoTrueCause => {
                const P: &[ParamSpec] = &[
                    p("n", Int, "5", "observations per covariate"),
                    p("h", Real, "0.3", "hacker fraction"),
                    p("beta", Real, "0.9", "probability that the maven's first candidate is causal"),
                    p("w", Real, "0.8", "agent weight on passing"),
                    p("q", RealList, "0,0.005,0.01,0.02", "noise levels"),
                    p("abstention", Text, "utility", "hacker abstention rule: utility or literal"),
                    p("replications", Int, "100000", "Monte Carlo replications per level; 0 skips"),
                    p("seed", Seed, "1", "master seed"),
                ];
                P
            }
            Command::Dynamic => {
                const P: &[ParamSpec] = &[
                    p("h", Real, "0.45", "hacker fraction"),
                    p("delta", Real, "0.99", "discount factor"),
                    p("kappa", Real, "0.01", "initial probability of a prior hacker match"),
                    p("grid_size", Int, "2001", "points on the bait-probability grid"),
                    p("q_grid_size", Int, "1001", "points on the noise grid"),
                    p("tol", Real, "1e-9", "sup-norm stopping tolerance"),
                    p("max_iterations", Int, "100000", "iteration cap"),
                    p("eval_steps", Int, "500", "policy-evaluation steps per sweep; 0 is plain value iteration"),
                    p("horizon", Int, "30", "periods to simulate"),
                ];
                P
            }
            Command::Regression => {
                const P: &[ParamSpec] = &[
                    p("num_covariates", Int, "20", "covariates"),
                    p("num_obs", Int, "20", "observations"),
                    p("error_variance", Real, "4", "outcome error variance"),
                    p("causal_triplet", IntList, "0,1,2", "causal covariates (0-based)"),
                    p("maven_alternative", IntList, "3,4,5", "maven's alternative triplet (0-based)"),
                    p(
                        "noise_std",
                        RealList,
                        "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.25,2.5,2.75,3",
                        "release noise levels",
                    ),
                    p("h", Real, "0.2", "hacker fraction for the blended payoff"),
                    p("comparison_h", RealList, "0.1,0.2,0.4", "hacker fractions for the argmax comparison"),
                    p("randomize_causal", Bool, "false", "draw the triplets afresh each replication"),
                    p("replications", Int, "10000", "replications"),
                    p("seed", Seed, "1", "master seed"),
                ];
                P
            }
            Command::Verify => {
                const P: &[ParamSpec] = &[p("seed", Seed, "1", "master seed for the stochastic checks")];
                P
            }
        }
    }

    pub fn param(self, key: &str) -> Option<&'static ParamSpec> {
        self.params().iter().find(|p| p.key == key)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Usage(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Int,
    Real,
    Seed,
    Text,
    Bool,
    IntList,
    RealList,
}

impl ParamKind {
    pub fn placeholder(self) -> &'static str {
        match self {
            ParamKind::Int => "INT",
            ParamKind::Real => "REAL",
            ParamKind::Seed => "SEED",
            ParamKind::Text => "TEXT",
            ParamKind::Bool => "BOOL",
            ParamKind::IntList => "INT,...",
            ParamKind::RealList => "REAL,...",
        }
    }
}

/// One schema entry. An empty default means "unset".
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
    pub help: &'static str,
}

impl ParamSpec {
    /// The command-line spelling, e.g. `--q-grid-size`.
    pub fn flag(&self) -> String {
        self.key.replace('_', "-")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Int(u64),
    Real(f64),
    Seed(u64),
    Text(String),
    Bool(bool),
    IntList(Vec<u64>),
    RealList(Vec<f64>),
}

impl ParamValue {
    pub fn parse(kind: ParamKind, key: &str, raw: &str) -> Result<Self> {
        let raw = raw.trim();
        let bad = |what: &str| Error::Usage(format!("parameter {key}: expected {what}, got {raw:?}"));
        let int = |s: &str| s.trim().parse::<u64>().map_err(|_| bad("a non-negative integer"));
        let real =
            |s: &str| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad("a finite real number"));
        let items = || raw.split(',').filter(|s| !s.trim().is_empty());
        Ok(match kind {
            ParamKind::Int => ParamValue::Int(int(raw)?),
            ParamKind::Seed => ParamValue::Seed(int(raw)?),
            ParamKind::Real => ParamValue::Real(real(raw)?),
            ParamKind::Text => ParamValue::Text(raw.to_string()),
            ParamKind::Bool => ParamValue::Bool(match raw {
                "true" | "1" | "yes" => true,
                "false" | "0" | "no" => false,
                _ => return Err(bad("true or false")),
            }),
            ParamKind::IntList => ParamValue::IntList(items().map(int).collect::<Result<_>>()?),
            ParamKind::RealList => ParamValue::RealList(items().map(real).collect::<Result<_>>()?),
        })
    }

    /// Canonical text form; parsing it back yields the same value.
    pub fn canonical(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        match self {
            ParamValue::Int(v) | ParamValue::Seed(v) => v.to_string(),
            ParamValue::Real(v) => format!("{v:?}"),
            ParamValue::Text(s) => s.clone(),
            ParamValue::Bool(b) => b.to_string(),
            ParamValue::IntList(v) => join(v),
            ParamValue::RealList(v) => v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","),
        }
    }
}

/// Fully resolved configuration for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    params: BTreeMap<String, ParamValue>,
    pub format: Format,
    pub out_dir: PathBuf,
}

/// Keys accepted by every command besides its own parameters.
pub const COMMON_KEYS: [&str; 2] = ["format", "out_dir"];

fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

impl ExperimentConfig {
    /// Resolves defaults, then `file` entries, then `flags`; later sources
    /// win. Unknown keys are rejected.
    pub fn resolve(
        command: Command,
        file: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<String, String> = BTreeMap::new();
        for (source, entries) in [("config file", file), ("flags", flags)] {
            for (k, v) in entries {
                let key = normalize_key(k);
                if command.param(&key).is_none() && !COMMON_KEYS.contains(&key.as_str()) {
                    return Err(Error::Usage(format!("unknown parameter {key:?} for {command} (from {source})")));
                }
                merged.insert(key, v.clone());
            }
        }
        let mut params = BTreeMap::new();
        for spec in command.params() {
            let raw = merged.get(spec.key).map(String::as_str).unwrap_or(spec.default);
            if raw.trim().is_empty() && !matches!(spec.kind, ParamKind::IntList | ParamKind::RealList) {
                continue;
            }
            params.insert(spec.key.to_string(), ParamValue::parse(spec.kind, spec.key, raw)?);
        }
        let format = match merged.get("format") {
            Some(f) => f.trim().parse()?,
            None => Format::Csv,
        };
        let out_dir = match merged.get("out_dir") {
            Some(d) => PathBuf::from(d.trim()),
            None => default_out_dir(),
        };
        let cfg = Self { command, params, format, out_dir };
        crate::runner::validate(&cfg)?;
        Ok(cfg)
    }

    /// Defaults with `flags` applied.
    pub fn from_flags(command: Command, flags: &[(&str, &str)]) -> Result<Self> {
        let flags = flags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self::resolve(command, &BTreeMap::new(), &flags)
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = dir.into();
        self
    }

    pub fn value(&self, key: &str) -> Option<&ParamValue> {
        self.params.get(key)
    }

    fn missing(&self, key: &str) -> Error {
        Error::Usage(format!("parameter {key} is not set for {}", self.command))
    }

    pub fn int(&self, key: &str) -> Result<u64> {
        match self.params.get(key) {
            Some(ParamValue::Int(v)) | Some(ParamValue::Seed(v)) => Ok(*v),
            _ => Err(self.missing(key)),
        }
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        match self.params.get(key) {
            Some(ParamValue::Real(v)) => Ok(*v),
            _ => Err(self.missing(key)),
        }
    }

    pub fn text(&self, key: &str) -> Result<&str> {
        match self.params.get(key) {
            Some(ParamValue::Text(v)) => Ok(v),
            _ => Err(self.missing(key)),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.params.get(key) {
            Some(ParamValue::Bool(v)) => Ok(*v),
            _ => Err(self.missing(key)),
        }
    }

    pub fn ints(&self, key: &str) -> Result<&[u64]> {
        match self.params.get(key) {
            Some(ParamValue::IntList(v)) => Ok(v),
            _ => Err(self.missing(key)),
        }
    }

    pub fn reals(&self, key: &str) -> Result<&[f64]> {
        match self.params.get(key) {
            Some(ParamValue::RealList(v)) => Ok(v),
            _ => Err(self.missing(key)),
        }
    }

    /// Master seed, for commands that draw random numbers.
    pub fn seed(&self) -> Option<u64> {
        match self.params.get("seed") {
            Some(ParamValue::Seed(s)) => Some(*s),
            _ => None,
        }
    }

    /// Every parameter plus `format` in canonical text form.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = self.params.iter().map(|(k, v)| (k.clone(), v.canonical())).collect();
        out.insert("format".into(), self.format.extension().into());
        out
    }
}

/// Output directory from the environment, else the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a repeated key is an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::ConfigParse { line: line_no, message: format!("expected key = value, got {line:?}") });
        };
        let key = normalize_key(k);
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::ConfigParse { line: line_no, message: format!("invalid key {:?}", k.trim()) });
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::ConfigParse { line: line_no, message: format!("duplicate key {key:?}") });
        }
    }
    Ok(out)
}

/// Reads a `key = value` file.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Reads `path`, applies `flags` on top and validates the result.
pub fn load_config(command: Command, path: &Path, flags: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(command, &load_config_file(path)?, flags)
}
