//! `key = value` run configuration with a fixed schema.
//!
//! One assignment per line, `#` starts a comment. Every key must appear in
//! [`SCHEMA`]; unknown or repeated keys are rejected with their line number.
//! Values are validated when the resolved config is built, so a bad value
//! fails before any data is read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use csranker::dataset::{SynthSpec, DEFAULT_WEIGHTS, NUM_FEATURES};
use csranker::{BatchConfig, ModelParams, OnlineConfig, SolverChoice};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Path,
    Count,
    Seed,
    Real,
    Flag,
    Solver,
    Preset,
    RealList,
    NameList,
    Weights,
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    /// Empty means "no default".
    pub default: &'static str,
    pub help: &'static str,
}

const fn k(key: &'static str, kind: Kind, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec {
        key,
        kind,
        default,
        help,
    }
}

pub const SCHEMA: &[KeySpec] = &[
    k("data", Kind::Path, "", "PSM table (TSV)"),
    k("model", Kind::Path, "", "trained model file, for score"),
    k(
        "scores",
        Kind::NameList,
        "",
        "comma-separated score files, for eval",
    ),
    k("out", Kind::Path, "out", "output directory"),
    k(
        "seed",
        Kind::Seed,
        "0",
        "master seed: synthesis, split, sample order",
    ),
    k("synth.preset", Kind::Preset, "normal", "normal or hard"),
    k("synth.n_target", Kind::Count, "1500", "synthetic targets"),
    k("synth.n_decoy", Kind::Count, "1500", "synthetic decoys"),
    k(
        "synth.pi_correct",
        Kind::Real,
        "",
        "overrides the preset's correct fraction",
    ),
    k(
        "synth.separation",
        Kind::Real,
        "4",
        "distance between correct and incorrect means",
    ),
    k(
        "split.train",
        Kind::Count,
        "2",
        "train parts of the split ratio",
    ),
    k(
        "split.test",
        Kind::Count,
        "1",
        "test parts of the split ratio",
    ),
    k(
        "weights",
        Kind::Weights,
        "",
        "nine comma-separated feature weights",
    ),
    k("C1", Kind::Real, "2", "decoy loss weight"),
    k("C2", Kind::Real, "1", "target loss weight"),
    k(
        "lambda",
        Kind::Real,
        "0.5",
        "selection weight, s = 1 - lambda/C2",
    ),
    k("sigma", Kind::Real, "1", "Gaussian kernel width"),
    k(
        "allow_negative_s",
        Kind::Flag,
        "false",
        "permit lambda > C2",
    ),
    k("solver", Kind::Solver, "online", "online or batch"),
    k(
        "online.min_active",
        Kind::Count,
        "200",
        "active-set size before concave activation",
    ),
    k("online.tau", Kind::Real, "0.001", "REPROCESS tolerance"),
    k(
        "online.clean_period",
        Kind::Count,
        "500",
        "insertions between CLEAN calls",
    ),
    k(
        "online.max_clean",
        Kind::Count,
        "300",
        "max removals per CLEAN",
    ),
    k(
        "online.finishing_sweeps",
        Kind::Count,
        "",
        "REPROCESS budget after the last insertion",
    ),
    k(
        "online.clean_by_abs_gradient",
        Kind::Flag,
        "false",
        "evict by |g| instead of g",
    ),
    k(
        "online.epochs",
        Kind::Count,
        "1",
        "passes over the training data",
    ),
    k("online.cache_rows", Kind::Count, "512", "kernel cache rows"),
    k(
        "online.mu_safe",
        Kind::Real,
        "",
        "accepted for compatibility, unused",
    ),
    k(
        "online.mu_safe_target",
        Kind::Real,
        "",
        "accepted for compatibility, unused",
    ),
    k("batch.tol_inner", Kind::Real, "0.001", "inner QP tolerance"),
    k("batch.max_outer", Kind::Count, "20", "CCCP iteration cap"),
    k(
        "batch.max_inner_sweeps",
        Kind::Count,
        "",
        "sweeps per QP, default 10n",
    ),
    k(
        "batch.cache_mb",
        Kind::Count,
        "256",
        "kernel cache budget in MiB",
    ),
    k(
        "target_fdr",
        Kind::RealList,
        "0.05",
        "FDR levels to report, the first drives acceptance",
    ),
    k(
        "bench.trials",
        Kind::Count,
        "10",
        "stability trials per solver",
    ),
    k(
        "bench.solvers",
        Kind::NameList,
        "online,batch",
        "solvers to benchmark",
    ),
    k(
        "bench.subsets",
        Kind::Count,
        "0",
        "random training subsets to average (0 = off)",
    ),
    k("bench.subset_size", Kind::Count, "16000", "PSMs per subset"),
];

pub const IGNORED_KEYS: &[&str] = &["online.mu_safe", "online.mu_safe_target"];

fn spec(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

/// Raw assignments before typing, with where each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, (String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        for (k, line) in text.lines().enumerate() {
            let lineno = k + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{origin}:{lineno}: expected `key = value`, got `{content}`"
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if spec(key).is_none() {
                return Err(CliError::Config(format!(
                    "{origin}:{lineno}: unknown key `{key}`"
                )));
            }
            if raw.values.contains_key(key) {
                return Err(CliError::Config(format!(
                    "{origin}:{lineno}: duplicate key `{key}`"
                )));
            }
            raw.values.insert(
                key.to_string(),
                (value.to_string(), format!("{origin}:{lineno}")),
            );
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets or replaces a value; command-line flags go through here.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), CliError> {
        if spec(key).is_none() {
            return Err(CliError::Config(format!("{origin}: unknown key `{key}`")));
        }
        self.values.insert(
            key.to_string(),
            (value.trim().to_string(), origin.to_string()),
        );
        Ok(())
    }

    /// Parses `key=value` from a `--set` flag.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(CliError::Config(format!(
                "--set expects key=value, got `{assignment}`"
            )));
        };
        self.set(key.trim(), value, "--set")
    }
}

/// Typed, validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    resolved: BTreeMap<String, String>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Vec<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub synth: SynthSpec,
    pub split: (usize, usize),
    pub weights: [f64; NUM_FEATURES],
    pub params: ModelParams,
    pub solver: SolverChoice,
    pub online: OnlineConfig,
    pub batch: BatchConfig,
    pub target_fdr: Vec<f64>,
    pub bench_trials: usize,
    pub bench_solvers: Vec<String>,
    pub bench_subsets: usize,
    pub bench_subset_size: usize,
    pub ignored: Vec<String>,
}

fn bad(key: &str, value: &str, origin: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!(
        "{origin}: invalid value `{value}` for `{key}`: {why}"
    ))
}

fn check(key: &str, kind: Kind, value: &str, origin: &str) -> Result<(), CliError> {
    let real = |v: &str| -> Result<f64, CliError> {
        let x: f64 = v.trim().parse().map_err(|e| bad(key, value, origin, e))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(bad(key, value, origin, "not finite"))
        }
    };
    match kind {
        Kind::Path => {
            if value.is_empty() {
                return Err(bad(key, value, origin, "empty path"));
            }
        }
        Kind::Count => {
            value
                .parse::<usize>()
                .map_err(|e| bad(key, value, origin, e))?;
        }
        Kind::Seed => {
            value
                .parse::<u64>()
                .map_err(|e| bad(key, value, origin, e))?;
        }
        Kind::Real => {
            real(value)?;
        }
        Kind::Flag => {
            value
                .parse::<bool>()
                .map_err(|e| bad(key, value, origin, e))?;
        }
        Kind::Solver => {
            if !matches!(value, "online" | "batch") {
                return Err(bad(key, value, origin, "expected online or batch"));
            }
        }
        Kind::Preset => {
            if !matches!(value, "normal" | "hard") {
                return Err(bad(key, value, origin, "expected normal or hard"));
            }
        }
        Kind::RealList => {
            if value.is_empty() {
                return Err(bad(key, value, origin, "empty list"));
            }
            for part in value.split(',') {
                real(part)?;
            }
        }
        Kind::NameList => {
            if value.split(',').any(|s| s.trim().is_empty()) {
                return Err(bad(key, value, origin, "empty list entry"));
            }
        }
        Kind::Weights => {
            let parts: Vec<&str> = value.split(',').collect();
            if parts.len() != NUM_FEATURES {
                return Err(bad(
                    key,
                    value,
                    origin,
                    format!("expected {NUM_FEATURES} weights"),
                ));
            }
            for part in parts {
                if real(part)? < 0.0 {
                    return Err(bad(key, value, origin, "weights must be non-negative"));
                }
            }
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self, CliError> {
        let mut resolved = BTreeMap::new();
        let mut origin = BTreeMap::new();
        for s in SCHEMA {
            if let Some((v, o)) = raw.values.get(s.key) {
                check(s.key, s.kind, v, o)?;
                resolved.insert(s.key.to_string(), v.clone());
                origin.insert(s.key, o.clone());
            } else if !s.default.is_empty() {
                resolved.insert(s.key.to_string(), s.default.to_string());
                origin.insert(s.key, "default".to_string());
            }
        }
        let get = |key: &str| resolved.get(key).map(String::as_str);
        let count = |key: &str| get(key).map(|v| v.parse::<usize>().expect("checked"));
        let real = |key: &str| get(key).map(|v| v.trim().parse::<f64>().expect("checked"));
        let flag = |key: &str| get(key).map(|v| v == "true").unwrap_or(false);
        let reals = |key: &str| -> Vec<f64> {
            get(key)
                .map(|v| {
                    v.split(',')
                        .map(|p| p.trim().parse().expect("checked"))
                        .collect()
                })
                .unwrap_or_default()
        };
        let names = |key: &str| -> Vec<String> {
            get(key)
                .map(|v| v.split(',').map(|p| p.trim().to_string()).collect())
                .unwrap_or_default()
        };
        let param_err = |key: &str, e: csranker::Error| {
            CliError::Config(format!("{}: {e}", origin.get(key).map_or("default", |s| s)))
        };

        let seed: u64 = get("seed").expect("default").parse().expect("checked");
        let mut synth = if get("synth.preset") == Some("hard") {
            SynthSpec::hard(0, 0, seed)
        } else {
            SynthSpec::normal(0, 0, seed)
        };
        synth.n_target = count("synth.n_target").expect("default");
        synth.n_decoy = count("synth.n_decoy").expect("default");
        if let Some(pi) = real("synth.pi_correct") {
            synth.pi_correct = pi;
        }
        synth.separation = real("synth.separation").expect("default");

        let split = (
            count("split.train").expect("default"),
            count("split.test").expect("default"),
        );
        if split.0 == 0 || split.1 == 0 {
            return Err(CliError::Config("split parts must be positive".into()));
        }
        let weights = match get("weights") {
            Some(_) => {
                let w = reals("weights");
                let mut out = [0.0; NUM_FEATURES];
                out.copy_from_slice(&w);
                out
            }
            None => DEFAULT_WEIGHTS,
        };

        let (c1, c2) = (real("C1").expect("default"), real("C2").expect("default"));
        let (lambda, sigma) = (
            real("lambda").expect("default"),
            real("sigma").expect("default"),
        );
        let params = if flag("allow_negative_s") {
            ModelParams::with_negative_s(c1, c2, lambda, sigma)
        } else {
            ModelParams::new(c1, c2, lambda, sigma)
        }
        .map_err(|e| param_err("C1", e))?;

        let online = OnlineConfig {
            min_active: count("online.min_active").expect("default"),
            tau: real("online.tau").expect("default"),
            clean_period: count("online.clean_period").expect("default"),
            max_clean: count("online.max_clean").expect("default"),
            finishing_sweeps: count("online.finishing_sweeps"),
            clean_by_abs_gradient: flag("online.clean_by_abs_gradient"),
            epochs: count("online.epochs").expect("default"),
            seed,
            cache_rows: count("online.cache_rows").expect("default"),
            log_every: None,
        };
        if online.tau.is_nan()
            || online.tau <= 0.0
            || online.clean_period == 0
            || online.epochs == 0
        {
            return Err(CliError::Config(
                "online.tau must be positive; clean_period and epochs at least 1".into(),
            ));
        }
        let batch = BatchConfig {
            tol_inner: real("batch.tol_inner").expect("default"),
            max_outer: count("batch.max_outer").expect("default"),
            max_inner_sweeps: count("batch.max_inner_sweeps"),
            cache_mb: count("batch.cache_mb").expect("default"),
            seed,
        };
        if batch.tol_inner.is_nan()
            || batch.tol_inner <= 0.0
            || batch.max_outer == 0
            || batch.max_inner_sweeps == Some(0)
        {
            return Err(CliError::Config(
                "batch.tol_inner, batch.max_outer and batch.max_inner_sweeps must be positive"
                    .into(),
            ));
        }
        let solver = match get("solver") {
            Some("batch") => SolverChoice::Batch(batch.clone()),
            _ => SolverChoice::Online(online.clone()),
        };

        let target_fdr = reals("target_fdr");
        if let Some(bad) = target_fdr.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return Err(CliError::Config(format!("target FDR {bad} outside [0, 1)")));
        }
        let bench_solvers = names("bench.solvers");
        if let Some(s) = bench_solvers
            .iter()
            .find(|s| !matches!(s.as_str(), "online" | "batch"))
        {
            return Err(CliError::Config(format!(
                "unknown solver `{s}` in bench.solvers"
            )));
        }
        let ignored = IGNORED_KEYS
            .iter()
            .filter(|k| resolved.contains_key(**k))
            .map(|k| k.to_string())
            .collect();

        Ok(RunConfig {
            data: get("data").map(PathBuf::from),
            model: get("model").map(PathBuf::from),
            scores: names("scores").into_iter().map(PathBuf::from).collect(),
            out: PathBuf::from(get("out").expect("default")),
            seed,
            synth,
            split,
            weights,
            params,
            solver,
            online,
            batch,
            target_fdr,
            bench_trials: count("bench.trials").expect("default"),
            bench_solvers,
            bench_subsets: count("bench.subsets").expect("default"),
            bench_subset_size: count("bench.subset_size").expect("default"),
            ignored,
            resolved,
        })
    }

    /// Every key with its effective value, defaults included.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn solver_named(&self, name: &str) -> SolverChoice {
        match name {
            "batch" => SolverChoice::Batch(self.batch.clone()),
            _ => SolverChoice::Online(self.online.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::resolve(&RawConfig::parse(text, "cfg")?)
    }

    #[test]
    fn defaults_resolve() {
        let c = resolve("").unwrap();
        assert_eq!(c.params.c1, 2.0);
        assert_eq!(c.target_fdr, vec![0.05]);
        assert_eq!(c.solver.name(), "online");
        assert_eq!(c.split, (2, 1));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = resolve("# run\n\nC1 = 4   # heavier decoys\nsolver=batch\n").unwrap();
        assert_eq!(c.params.c1, 4.0);
        assert_eq!(c.solver.name(), "batch");
    }

    #[test]
    fn unknown_key_names_line() {
        let e = resolve("C1 = 2\nfoo = 1\n").unwrap_err().to_string();
        assert!(e.contains("cfg:2") && e.contains("foo"), "{e}");
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        assert!(resolve("C1 = 2\nC1 = 3\n")
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        assert!(resolve("C1 2\n").unwrap_err().to_string().contains("cfg:1"));
    }

    #[test]
    fn bad_values_rejected() {
        for text in [
            "C1 = abc",
            "seed = -1",
            "solver = sgd",
            "weights = 1,2",
            "target_fdr = 0.05,1.5",
            "C1 = 0.5",
            "lambda = 3",
            "split.test = 0",
            "online.tau = 0",
            "synth.separation = nan",
        ] {
            assert!(matches!(resolve(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hard_preset_and_override() {
        let c = resolve("synth.preset = hard").unwrap();
        assert_eq!(c.synth.pi_correct, 0.065);
        let c = resolve("synth.preset = hard\nsynth.pi_correct = 0.2").unwrap();
        assert_eq!(c.synth.pi_correct, 0.2);
    }

    #[test]
    fn flags_override_file_values() {
        let mut raw = RawConfig::parse("seed = 3\n", "cfg").unwrap();
        raw.set("seed", "9", "--seed").unwrap();
        raw.set_assignment("online.tau=0.01").unwrap();
        let c = RunConfig::resolve(&raw).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.online.tau, 0.01);
        assert_eq!(c.online.seed, 9);
        assert!(raw.set_assignment("nope=1").is_err());
    }

    #[test]
    fn compatibility_keys_are_reported() {
        let c = resolve("online.mu_safe = 0.3").unwrap();
        assert_eq!(c.ignored, vec!["online.mu_safe".to_string()]);
    }
}
