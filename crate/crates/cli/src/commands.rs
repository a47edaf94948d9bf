//! The five subcommands. Each writes its outputs plus `manifest.json` into
//! the configured output directory and returns the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use csranker::dataset::generate_synthetic;
use csranker::evaluation::{
    fdr_threshold, oracle_roc_curve, overlap, roc_curve, score_all, stability_trials,
    test_total_ratio, FdrResult, ScoreTable, StabilityReport, StabilityRow,
};
use csranker::trainer::{train, SolverReport, TrainOutcome};
use csranker::{Dataset, Discriminant, Execution, SolverChoice, TrainingSet};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{Manifest, OutputDir};

pub const DATASET_FILE: &str = "dataset.tsv";
pub const MODEL_FILE: &str = "model.tsv";
pub const SCORES_FILE: &str = "scores.tsv";
pub const FDR_REPORT_FILE: &str = "fdr_report.tsv";
pub const ROC_FILE: &str = "roc.tsv";
pub const ORACLE_ROC_FILE: &str = "roc_oracle.tsv";
pub const OVERLAP_FILE: &str = "overlap.tsv";

/// Manifest plus whether the run ended with a numeric warning (exit 4).
pub struct Outcome {
    pub manifest: Manifest,
    pub numeric_warning: bool,
}

fn manifest(command: &str, cfg: &RunConfig) -> Manifest {
    Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.resolved().clone(),
        ignored_keys: cfg.ignored.clone(),
        timings: BTreeMap::new(),
        kkt_violation: None,
        converged: None,
        warnings: Vec::new(),
        details: BTreeMap::new(),
        outputs: Vec::new(),
    }
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Loads the configured data file and assigns the train/test split when
/// the file does not carry one.
fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("no data file given (set `data` or pass --data)".into()))?;
    let d = Dataset::load_tsv(path)?;
    if d.is_empty() {
        return Err(CliError::Data(format!("{} has no records", path.display())));
    }
    if d.splits().is_some() {
        Ok(d)
    } else {
        Ok(d.split_train_test(cfg.split, cfg.seed)?)
    }
}

fn primary_fdr(cfg: &RunConfig) -> f64 {
    cfg.target_fdr[0]
}

pub fn synth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let d = generate_synthetic(&cfg.synth)?.split_train_test(cfg.split, cfg.seed)?;
    let mut out = OutputDir::create(&cfg.out)?;
    out.write(DATASET_FILE, &render(|w| d.write_to(w)))?;
    let mut m = manifest("synth", cfg);
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    let (t, dec) = d.counts();
    m.details.insert("targets".into(), json!(t));
    m.details.insert("decoys".into(), json!(dec));
    m.details
        .insert("pi_correct".into(), json!(cfg.synth.pi_correct));
    m.details
        .insert("separation".into(), json!(cfg.synth.separation));
    Ok(Outcome {
        manifest: out.finish(m)?,
        numeric_warning: false,
    })
}

fn solver_details(outcome: &TrainOutcome) -> Value {
    match &outcome.report {
        SolverReport::Online(o) => json!({
            "rounds": o.rounds,
            "reprocess_steps": o.reprocess_steps,
            "finishing_steps": o.finishing_steps,
            "cleans": o.cleans,
            "removed": o.removed,
            "active_set_size": o.active_set_size,
            "eta_active": o.eta_active,
            "dual_objective": o.dual_objective,
        }),
        SolverReport::Batch(b) => json!({
            "outer_iterations": b.outer_iterations,
            "eta_converged": b.converged,
            "inner_converged": b.inner_converged,
            "primal_trace": b.primal_trace,
            "eta_flips": b.eta_flips,
            "total_sweeps": b.total_sweeps,
        }),
    }
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let d = load_data(cfg)?.normalize_and_weight(cfg.weights)?;
    let set = TrainingSet::from_dataset(&d)?;
    let load = start.elapsed().as_secs_f64();

    let outcome = train(&set, &cfg.params, &cfg.solver);
    let mut out = OutputDir::create(&cfg.out)?;
    out.write(MODEL_FILE, &render(|w| outcome.discriminant.write_to(w)))?;

    let mut m = manifest("train", cfg);
    m.timings.insert("load".into(), load);
    m.timings.insert("train".into(), outcome.solver_seconds);
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    m.kkt_violation = Some(outcome.kkt_violation);
    m.converged = Some(outcome.converged);
    m.details.insert("solver".into(), json!(cfg.solver.name()));
    m.details.insert("training_psms".into(), json!(set.len()));
    m.details
        .insert("support_vectors".into(), json!(outcome.discriminant.len()));
    m.details.insert(
        "kernel_evaluations".into(),
        json!(outcome.kernel_evaluations),
    );
    m.details
        .insert("solver_report".into(), solver_details(&outcome));
    if !outcome.converged {
        m.warnings.push(format!(
            "{} solver did not converge (KKT violation {:.3e})",
            cfg.solver.name(),
            outcome.kkt_violation
        ));
    }
    Ok(Outcome {
        manifest: out.finish(m)?,
        numeric_warning: !outcome.converged,
    })
}

pub fn score_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let model_path = cfg.model.as_ref().ok_or_else(|| {
        CliError::Config("no model file given (set `model` or pass --model)".into())
    })?;
    let model = Discriminant::load_tsv(model_path)?;
    if model.normalization.is_none() {
        return Err(CliError::Data(format!(
            "{} carries no feature normalization",
            model_path.display()
        )));
    }
    let d = load_data(cfg)?;
    let table = score_all(&d, &model);
    let r = fdr_threshold(&table, primary_fdr(cfg))?;
    let mut out = OutputDir::create(&cfg.out)?;
    out.write(SCORES_FILE, &render(|w| table.write_to(w, &r)))?;
    let mut m = manifest("score", cfg);
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    m.details.insert("psms".into(), json!(table.len()));
    m.details
        .insert("accepted_at".into(), json!(primary_fdr(cfg)));
    m.details
        .insert("accepted_targets".into(), json!(r.accepted_targets));
    Ok(Outcome {
        manifest: out.finish(m)?,
        numeric_warning: false,
    })
}

fn fmt_ratio(r: &FdrResult) -> String {
    test_total_ratio(r).map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn write_fdr_report(w: &mut Vec<u8>, rows: &[FdrResult]) -> std::io::Result<()> {
    writeln!(
        w,
        "target_fdr\tthreshold\taccepted_targets\taccepted_decoys\testimated_fdr\ttest_total_ratio"
    )?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.target_fdr,
            r.threshold,
            r.accepted_targets,
            r.accepted_decoys,
            r.estimated_fdr,
            fmt_ratio(r)
        )?;
    }
    Ok(())
}

fn fdr_rows(
    table: &ScoreTable,
    cfg: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<FdrResult>, CliError> {
    let mut rows = Vec::new();
    for &f in &cfg.target_fdr {
        let r = fdr_threshold(table, f)?;
        if !r.attained {
            warnings.push(format!("no threshold attains FDR {f}; acceptance is empty"));
        }
        rows.push(r);
    }
    Ok(rows)
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    if cfg.scores.is_empty() {
        return Err(CliError::Config(
            "no score files given (set `scores` or pass --scores)".into(),
        ));
    }
    if cfg.scores.len() > 3 {
        return Err(CliError::Config(
            "overlap takes at most three score files".into(),
        ));
    }
    let tables = cfg
        .scores
        .iter()
        .map(ScoreTable::load_tsv)
        .collect::<Result<Vec<_>, _>>()?;
    let mut m = manifest("eval", cfg);
    let mut out = OutputDir::create(&cfg.out)?;

    let rows = fdr_rows(&tables[0], cfg, &mut m.warnings)?;
    out.write(FDR_REPORT_FILE, &render(|w| write_fdr_report(w, &rows)))?;
    let roc = roc_curve(&tables[0])?;
    out.write(ROC_FILE, &render(|w| roc.write_to(w)))?;
    m.details.insert("auc".into(), json!(roc.auc));
    if tables[0].has_oracle() {
        let oracle = oracle_roc_curve(&tables[0])?;
        out.write(ORACLE_ROC_FILE, &render(|w| oracle.write_to(w)))?;
        m.details.insert("oracle_auc".into(), json!(oracle.auc));
        let fractions: Vec<Value> = rows
            .iter()
            .map(|r| json!(tables[0].oracle_false_fraction(r)))
            .collect();
        m.details
            .insert("oracle_false_fraction".into(), Value::Array(fractions));
    }

    if tables.len() > 1 {
        let mut text = Vec::new();
        writeln!(text, "target_fdr\ta\tb\tc\tab\tac\tbc\tabc").expect("memory");
        for &f in &cfg.target_fdr {
            let sets: Vec<BTreeSet<String>> = tables
                .iter()
                .map(|t| fdr_threshold(t, f).map(|r| t.accepted_target_ids(&r)))
                .collect::<Result<_, _>>()?;
            let empty = BTreeSet::new();
            let o = overlap(&sets[0], &sets[1], sets.get(2).unwrap_or(&empty));
            writeln!(
                text,
                "{f}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                o.a, o.b, o.c, o.ab, o.ac, o.bc, o.abc
            )
            .expect("memory");
        }
        out.write(OVERLAP_FILE, &text)?;
    }
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    Ok(Outcome {
        manifest: out.finish(m)?,
        numeric_warning: false,
    })
}

fn single_trial(
    d: &Dataset,
    cfg: &RunConfig,
    solver: &SolverChoice,
) -> Result<StabilityReport, CliError> {
    let set = TrainingSet::from_dataset(d)?;
    let start = Instant::now();
    let outcome = train(&set, &cfg.params, &solver.with_seed(cfg.seed));
    let wall_seconds = start.elapsed().as_secs_f64();
    let r = fdr_threshold(&score_all(d, &outcome.discriminant), primary_fdr(cfg))?;
    Ok(StabilityReport {
        rows: vec![StabilityRow {
            trial: 0,
            seed: cfg.seed,
            accepted_total: r.accepted_targets,
            wall_seconds,
        }],
        mean: r.accepted_targets as f64,
        min: r.accepted_targets,
        max: r.accepted_targets,
    })
}

/// Trains on `subsets` random draws of the training split and scores every
/// PSM by the mean of the per-subset scores.
fn subset_average(d: &Dataset, cfg: &RunConfig, m: &mut Manifest) -> Result<ScoreTable, CliError> {
    let train_idx = d.indices(csranker::Split::Train);
    let size = cfg.bench_subset_size.min(train_idx.len());
    if size == 0 {
        return Err(CliError::Data("training split is empty".into()));
    }
    let mut sum: Option<ScoreTable> = None;
    let mut walls = Vec::new();
    for s in 0..cfg.bench_subsets {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + s as u64));
        let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, train_idx.len(), size)
            .into_iter()
            .map(|k| train_idx[k])
            .collect();
        pick.sort_unstable();
        let set = TrainingSet::from_indices(d, pick);
        let start = Instant::now();
        let outcome = train(
            &set,
            &cfg.params,
            &cfg.solver.with_seed(cfg.seed.wrapping_add(s as u64)),
        );
        walls.push(start.elapsed().as_secs_f64());
        let table = score_all(d, &outcome.discriminant);
        match &mut sum {
            None => sum = Some(table),
            Some(acc) => {
                for (a, b) in acc.rows.iter_mut().zip(&table.rows) {
                    a.score += b.score;
                }
            }
        }
    }
    let mut table = sum.expect("at least one subset");
    for row in &mut table.rows {
        row.score /= cfg.bench_subsets as f64;
    }
    m.details.insert(
        "subset_mode".into(),
        json!({ "subsets": cfg.bench_subsets, "subset_size": size, "solver": cfg.solver.name() }),
    );
    m.timings
        .insert("subset_train_total".into(), walls.iter().sum());
    Ok(table)
}

pub fn bench_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    if cfg.bench_trials == 0 {
        return Err(CliError::Config("bench.trials must be at least 1".into()));
    }
    let d = load_data(cfg)?.normalize_and_weight(cfg.weights)?;
    let mut m = manifest("bench", cfg);
    let mut out = OutputDir::create(&cfg.out)?;
    for name in &cfg.bench_solvers {
        let solver = cfg.solver_named(name);
        let report = if cfg.bench_trials >= 2 {
            stability_trials(
                &d,
                &cfg.params,
                &solver,
                cfg.bench_trials,
                primary_fdr(cfg),
                cfg.seed,
                Execution::default(),
            )?
        } else {
            single_trial(&d, cfg, &solver)?
        };
        out.write(
            &format!("stability_{name}.tsv"),
            &render(|w| report.write_to(w)),
        )?;
        let walls: Vec<f64> = report.rows.iter().map(|r| r.wall_seconds).collect();
        m.timings
            .insert(format!("{name}_train_total"), walls.iter().sum());
        m.details.insert(
            format!("{name}_stability"),
            json!({
                "mean": report.mean,
                "min": report.min,
                "max": report.max,
                "spread": report.spread(),
                "trial_wall_seconds": walls,
            }),
        );
    }
    if cfg.bench_subsets > 0 {
        let table = subset_average(&d, cfg, &mut m)?;
        let rows = fdr_rows(&table, cfg, &mut m.warnings)?;
        out.write(
            "subset_scores.tsv",
            &render(|w| table.write_to(w, &rows[0])),
        )?;
        out.write(
            "subset_fdr_report.tsv",
            &render(|w| write_fdr_report(w, &rows)),
        )?;
    }
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    Ok(Outcome {
        manifest: out.finish(m)?,
        numeric_warning: false,
    })
}
