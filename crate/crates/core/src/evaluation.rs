//! PSM scoring, target-decoy FDR thresholds, ROC curves and the summary
//! statistics used to compare solvers.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_2_PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use crate::dataset::{Dataset, Label, Split, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::FeatureMatrix;
use crate::model::{Discriminant, ModelParams};
use crate::trainer::{train, SolverChoice, TrainingSet};

/// `(2/π)·arctan(f)`, strictly increasing and in (−1, 1).
#[inline]
pub fn score_of(f: f64) -> f64 {
    FRAC_2_PI * f.atan()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub label: Label,
    pub split: Option<Split>,
    pub score: f64,
    pub oracle_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

pub fn score_all(d: &Dataset, f: &Discriminant) -> ScoreTable {
    score_all_with(d, f, Execution::default())
}

/// Scores every PSM of `d`. Features are normalized with the model's stored
/// statistics when it has them, otherwise with the dataset's own.
pub fn score_all_with(d: &Dataset, f: &Discriminant, exec: Execution) -> ScoreTable {
    let xs = FeatureMatrix::from_rows(
        NUM_FEATURES,
        (0..d.len()).map(|i| match &f.normalization {
            Some(n) => n.apply(&d.record(i).features),
            None => d.features(i),
        }),
    );
    let values = f.evaluate_all(&xs, exec);
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = d.record(i);
            ScoreRow {
                id: r.id.clone(),
                label: r.label,
                split: d.split_of(i),
                score: score_of(v),
                oracle_correct: r.oracle_correct,
            }
        })
        .collect();
    ScoreTable { rows }
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_oracle(&self) -> bool {
        self.rows.iter().any(|r| r.oracle_correct.is_some())
    }

    /// Row indices by descending score.
    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|&a, &b| {
            self.rows[b]
                .score
                .total_cmp(&self.rows[a].score)
                .then(a.cmp(&b))
        });
        idx
    }

    /// Ids of targets at or above the acceptance threshold.
    pub fn accepted_target_ids(&self, r: &FdrResult) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|row| row.label.is_target() && row.score >= r.threshold)
            .map(|row| row.id.clone())
            .collect()
    }

    /// Fraction of accepted targets that are known-incorrect matches.
    pub fn oracle_false_fraction(&self, r: &FdrResult) -> Option<f64> {
        let accepted: Vec<&ScoreRow> = self
            .rows
            .iter()
            .filter(|row| row.label.is_target() && row.score >= r.threshold)
            .collect();
        if accepted.is_empty() || accepted.iter().any(|row| row.oracle_correct.is_none()) {
            return None;
        }
        let wrong = accepted
            .iter()
            .filter(|row| row.oracle_correct == Some(false))
            .count();
        Some(wrong as f64 / accepted.len() as f64)
    }

    /// Monotonized FDR (q-value) of every row, aligned with `rows`.
    pub fn q_values(&self) -> Vec<f64> {
        let order = self.ranked();
        let groups = tie_groups(&order, &self.rows);
        let mut q = vec![0.0; self.rows.len()];
        let mut running = f64::INFINITY;
        for g in groups.iter().rev() {
            running = running.min(g.raw_fdr());
            for &i in &order[g.start..g.end] {
                q[i] = running;
            }
        }
        q
    }

    /// Columns `id label split score accepted`, plus `oracle_correct` when
    /// any row carries it. `accepted` marks rows scoring at or above the
    /// threshold of `fdr`.
    pub fn write_to<W: Write>(&self, w: &mut W, fdr: &FdrResult) -> std::io::Result<()> {
        let with_oracle = self.has_oracle();
        write!(w, "id\tlabel\tsplit\tscore\taccepted")?;
        if with_oracle {
            write!(w, "\toracle_correct")?;
        }
        writeln!(w)?;
        for r in &self.rows {
            let split = r.split.map_or("-", Split::as_str);
            write!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                r.id,
                r.label,
                split,
                r.score,
                r.score >= fdr.threshold
            )?;
            if with_oracle {
                match r.oracle_correct {
                    Some(b) => write!(w, "\t{b}")?,
                    None => write!(w, "\t")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>, fdr: &FdrResult) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w, fdr)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(BufReader::new(f))
    }

    pub fn read_tsv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::parse(1, e.to_string()))?,
            None => return Err(Error::parse(1, "empty score file")),
        };
        let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
        let find = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (id_c, label_c, split_c, score_c) =
            (find("id")?, find("label")?, find("split")?, find("score")?);
        let oracle_c = cols.iter().position(|c| *c == "oracle_correct");
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let lineno = k + 2;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let get = |c: usize| {
                f.get(c)
                    .copied()
                    .ok_or_else(|| Error::parse(lineno, format!("missing field {}", c + 1)))
            };
            let label = Label::parse(get(label_c)?).ok_or_else(|| {
                Error::parse(
                    lineno,
                    format!("unknown label `{}`", get(label_c).unwrap_or("")),
                )
            })?;
            let split = match get(split_c)? {
                "-" => None,
                tok => Some(
                    Split::parse(tok)
                        .ok_or_else(|| Error::parse(lineno, format!("unknown split `{tok}`")))?,
                ),
            };
            let score: f64 = get(score_c)?
                .parse()
                .map_err(|_| Error::parse(lineno, "score is not a number"))?;
            let oracle_correct = match oracle_c.map(get).transpose()? {
                Some("true") => Some(true),
                Some("false") => Some(false),
                _ => None,
            };
            rows.push(ScoreRow {
                id: get(id_c)?.to_string(),
                label,
                split,
                score,
                oracle_correct,
            });
        }
        Ok(ScoreTable { rows })
    }
}

#[derive(Debug, Clone, Copy)]
struct Group {
    start: usize,
    end: usize,
    score: f64,
    targets: usize,
    decoys: usize,
}

impl Group {
    fn raw_fdr(&self) -> f64 {
        self.decoys as f64 / self.targets.max(1) as f64
    }
}

/// Distinct-score groups along `order`, with cumulative counts.
fn tie_groups(order: &[usize], rows: &[ScoreRow]) -> Vec<Group> {
    let mut groups = Vec::new();
    let (mut t, mut d) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let score = rows[order[k]].score;
        let start = k;
        while k < order.len() && rows[order[k]].score == score {
            match rows[order[k]].label {
                Label::Target => t += 1,
                Label::Decoy => d += 1,
            }
            k += 1;
        }
        groups.push(Group {
            start,
            end: k,
            score,
            targets: t,
            decoys: d,
        });
    }
    groups
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub targets: usize,
    pub decoys: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdrResult {
    pub target_fdr: f64,
    /// Accept PSMs scoring at or above this; `+∞` when nothing is accepted.
    pub threshold: f64,
    pub accepted_targets: usize,
    pub accepted_decoys: usize,
    /// `accepted_decoys / max(1, accepted_targets)`.
    pub estimated_fdr: f64,
    /// False when no threshold reaches the target FDR.
    pub attained: bool,
    pub train: SplitCounts,
    pub test: SplitCounts,
}

/// Largest accepted set whose decoy/target ratio is at most `target_fdr`.
/// Thresholds are distinct score values, so tied PSMs move together.
pub fn fdr_threshold(t: &ScoreTable, target_fdr: f64) -> Result<FdrResult> {
    if t.is_empty() {
        return Err(Error::InvalidData("score table is empty".into()));
    }
    if !(0.0..1.0).contains(&target_fdr) {
        return Err(Error::InvalidParameter(format!(
            "target FDR must lie in [0, 1), got {target_fdr}"
        )));
    }
    let order = t.ranked();
    let groups = tie_groups(&order, &t.rows);
    let best = groups.iter().rev().find(|g| g.raw_fdr() <= target_fdr);
    let mut r = FdrResult {
        target_fdr,
        threshold: f64::INFINITY,
        accepted_targets: 0,
        accepted_decoys: 0,
        estimated_fdr: 0.0,
        attained: false,
        train: SplitCounts::default(),
        test: SplitCounts::default(),
    };
    if let Some(g) = best {
        r.threshold = g.score;
        r.accepted_targets = g.targets;
        r.accepted_decoys = g.decoys;
        r.estimated_fdr = g.raw_fdr();
        r.attained = true;
        for &i in &order[..g.end] {
            let row = &t.rows[i];
            let bucket = match row.split {
                Some(Split::Test) => &mut r.test,
                _ => &mut r.train,
            };
            match row.label {
                Label::Target => bucket.targets += 1,
                Label::Decoy => bucket.decoys += 1,
            }
        }
    }
    Ok(r)
}

/// Accepted targets on the test split over all accepted targets.
pub fn test_total_ratio(r: &FdrResult) -> Option<f64> {
    (r.accepted_targets > 0).then(|| r.test.targets as f64 / r.accepted_targets as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "threshold\tfpr\ttpr")?;
        for p in &self.points {
            writeln!(w, "{}\t{}\t{}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

fn roc_from(t: &ScoreTable, positive: impl Fn(&ScoreRow) -> bool) -> Result<RocCurve> {
    let n_pos = t.rows.iter().filter(|r| positive(r)).count();
    let n_neg = t.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidData(
            "ROC needs at least one positive and one negative".into(),
        ));
    }
    let order = t.ranked();
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let score = t.rows[order[k]].score;
        while k < order.len() && t.rows[order[k]].score == score {
            if positive(&t.rows[order[k]]) {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Targets as positives, decoys as negatives.
pub fn roc_curve(t: &ScoreTable) -> Result<RocCurve> {
    roc_from(t, |r| r.label.is_target())
}

/// Correct targets as positives, everything else as negatives.
pub fn oracle_roc_curve(t: &ScoreTable) -> Result<RocCurve> {
    if !t.has_oracle() {
        return Err(Error::InvalidData(
            "score table has no oracle column".into(),
        ));
    }
    roc_from(t, |r| r.label.is_target() && r.oracle_correct == Some(true))
}

/// Venn counts of three id sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overlap {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub ab: usize,
    pub ac: usize,
    pub bc: usize,
    pub abc: usize,
}

pub fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>, c: &BTreeSet<String>) -> Overlap {
    Overlap {
        a: a.len(),
        b: b.len(),
        c: c.len(),
        ab: a.intersection(b).count(),
        ac: a.intersection(c).count(),
        bc: b.intersection(c).count(),
        abc: a
            .iter()
            .filter(|x| b.contains(*x) && c.contains(*x))
            .count(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub trial: usize,
    pub seed: u64,
    pub accepted_total: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl StabilityReport {
    pub fn spread(&self) -> usize {
        self.max - self.min
    }

    /// `trial seed accepted_total`; wall times are left out so the file is
    /// reproducible.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "trial\tseed\taccepted_total")?;
        for r in &self.rows {
            writeln!(w, "{}\t{}\t{}", r.trial, r.seed, r.accepted_total)?;
        }
        Ok(())
    }
}

/// Trains `trials` times with solver seeds `base_seed + trial` on the same
/// split and reports accepted-target counts at `target_fdr`.
pub fn stability_trials(
    d: &Dataset,
    p: &ModelParams,
    solver: &SolverChoice,
    trials: usize,
    target_fdr: f64,
    base_seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    if trials < 2 {
        return Err(Error::InvalidParameter(format!(
            "stability needs at least 2 trials, got {trials}"
        )));
    }
    let set = TrainingSet::from_dataset(d)?;
    let results: Vec<Result<StabilityRow>> = exec.map_tasks(trials, |trial| {
        let seed = base_seed.wrapping_add(trial as u64);
        let start = Instant::now();
        let out = train(&set, p, &solver.with_seed(seed));
        let wall_seconds = start.elapsed().as_secs_f64();
        let table = score_all_with(d, &out.discriminant, Execution::Sequential);
        let r = fdr_threshold(&table, target_fdr)?;
        Ok(StabilityRow {
            trial,
            seed,
            accepted_total: r.accepted_targets,
            wall_seconds,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let counts = rows.iter().map(|r| r.accepted_total);
    let min = counts.clone().min().unwrap_or(0);
    let max = counts.clone().max().unwrap_or(0);
    let mean = counts.sum::<usize>() as f64 / rows.len() as f64;
    Ok(StabilityReport {
        rows,
        mean,
        min,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(Label, f64)]) -> ScoreTable {
        ScoreTable {
            rows: entries
                .iter()
                .enumerate()
                .map(|(k, &(label, score))| ScoreRow {
                    id: format!("r{k}"),
                    label,
                    split: Some(if k % 3 == 0 {
                        Split::Test
                    } else {
                        Split::Train
                    }),
                    score,
                    oracle_correct: None,
                })
                .collect(),
        }
    }

    #[test]
    fn score_values() {
        assert_eq!(score_of(0.0), 0.0);
        assert!((score_of(1.0) - 0.5).abs() < 1e-16);
        assert!(score_of(1e300) < 1.0 + 1e-15 && score_of(-1e300) > -1.0 - 1e-15);
    }

    #[test]
    fn hundred_targets_five_decoys() {
        let mut e: Vec<(Label, f64)> = (0..100).map(|k| (Label::Target, 1.0 + k as f64)).collect();
        e.extend((0..5).map(|k| (Label::Decoy, 0.5 + 0.01 * k as f64)));
        e.extend((0..50).map(|k| (Label::Decoy, -1.0 - k as f64)));
        let r = fdr_threshold(&table(&e), 0.05).unwrap();
        assert_eq!(r.accepted_targets, 100);
        assert_eq!(r.accepted_decoys, 5);
        assert_eq!(r.estimated_fdr, 0.05);
        assert!(r.attained);
    }

    #[test]
    fn separable_accepts_all_targets() {
        let mut e: Vec<(Label, f64)> = (0..40).map(|k| (Label::Target, 10.0 + k as f64)).collect();
        e.extend((0..40).map(|k| (Label::Decoy, -(k as f64))));
        let r = fdr_threshold(&table(&e), 0.01).unwrap();
        assert_eq!(r.accepted_targets, 40);
        assert_eq!(r.accepted_decoys, 0);
        assert_eq!(r.estimated_fdr, 0.0);
    }

    #[test]
    fn top_decoy_with_zero_fdr_is_empty() {
        let e = [
            (Label::Decoy, 3.0),
            (Label::Target, 2.0),
            (Label::Decoy, 1.0),
            (Label::Target, 0.0),
        ];
        let r = fdr_threshold(&table(&e), 0.0).unwrap();
        assert!(!r.attained);
        assert_eq!(r.accepted_targets, 0);
        assert_eq!(r.threshold, f64::INFINITY);
        assert_eq!(test_total_ratio(&r), None);
        assert!(fdr_threshold(&table(&e), 1.0).is_err());
        assert!(fdr_threshold(&ScoreTable::default(), 0.05).is_err());
    }

    #[test]
    fn ties_move_together() {
        let e = [
            (Label::Target, 1.0),
            (Label::Target, 0.5),
            (Label::Decoy, 0.5),
            (Label::Target, 0.1),
        ];
        let r = fdr_threshold(&table(&e), 0.4).unwrap();
        // the tied block at 0.5 gives 1/2 > 0.4; the next block recovers 1/3
        assert_eq!((r.accepted_targets, r.accepted_decoys), (3, 1));
        let r = fdr_threshold(&table(&e), 0.3).unwrap();
        assert_eq!((r.accepted_targets, r.accepted_decoys), (1, 0));
    }

    #[test]
    fn roc_separated_and_endpoints() {
        let e = [
            (Label::Target, 3.0),
            (Label::Target, 2.0),
            (Label::Decoy, 1.0),
            (Label::Decoy, 0.0),
        ];
        let roc = roc_curve(&table(&e)).unwrap();
        assert_eq!(roc.auc, 1.0);
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(roc_curve(&table(&[(Label::Target, 1.0)])).is_err());
    }

    #[test]
    fn overlap_cases() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        let a = s(&["1", "2"]);
        assert_eq!(overlap(&a, &a, &a).abc, 2);
        let o = overlap(&s(&["1"]), &s(&["2"]), &s(&["3"]));
        assert_eq!((o.ab, o.ac, o.bc, o.abc), (0, 0, 0, 0));
        let (a, b, c) = (s(&["1"]), s(&["1", "2"]), s(&["1", "2", "3"]));
        let o = overlap(&a, &b, &c);
        assert_eq!((o.ab, o.ac, o.bc), (1, 1, 2));
    }

    #[test]
    fn score_file_round_trip() {
        let mut t = table(&[(Label::Target, 0.25), (Label::Decoy, -0.125)]);
        t.rows[1].split = None;
        let r = fdr_threshold(&t, 0.05).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf, &r).unwrap();
        assert_eq!(ScoreTable::read_tsv(buf.as_slice()).unwrap(), t);
        assert!(ScoreTable::read_tsv("id\tlabel\n".as_bytes()).is_err());
    }
}
