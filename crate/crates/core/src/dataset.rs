//! PSM records, TSV ingestion, train/test splitting, feature normalization and
//! a synthetic generator for desk-scale experiments.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 9;

/// Column names in canonical order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "xcorr", "deltacn", "sprank", "ions", "hit_mass", "enzN", "enzC", "numProt", "deltacnR",
];

/// 1.0 for xcorr and deltacn, 0.5 for the other seven.
pub const DEFAULT_WEIGHTS: [f64; NUM_FEATURES] = [1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];

pub type Features = [f64; NUM_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Decoy,
}

impl Label {
    /// +1 for targets, −1 for decoys.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Target => 1.0,
            Label::Decoy => -1.0,
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Decoy => "decoy",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "target" => Some(Label::Target),
            "decoy" => Some(Label::Decoy),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled peptide-spectrum match.
#[derive(Debug, Clone, PartialEq)]
pub struct PsmRecord {
    pub id: String,
    pub label: Label,
    pub features: Features,
    /// Ground truth for synthetic data: whether a target is a correct match.
    /// Always `Some(false)` for synthetic decoys, `None` for real data.
    pub oracle_correct: Option<bool>,
}

impl PsmRecord {
    pub fn new(id: impl Into<String>, label: Label, features: Features) -> Result<Self> {
        let id = id.into();
        if let Some(q) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "record `{id}`: feature `{}` is not finite",
                FEATURE_NAMES[q]
            )));
        }
        Ok(PsmRecord {
            id,
            label,
            features,
            oracle_correct: None,
        })
    }
}

/// Per-feature z-scoring followed by a per-feature weight:
/// `v_q = weight_q * (raw_q - mean_q) / std_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub means: Features,
    pub stds: Features,
    pub weights: Features,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            means: [0.0; NUM_FEATURES],
            stds: [1.0; NUM_FEATURES],
            weights: [1.0; NUM_FEATURES],
        }
    }

    /// Population mean/std over `rows`; zero-variance columns get std 1.0.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a Features>, weights: Features) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; NUM_FEATURES];
        let mut collected = Vec::new();
        for r in rows {
            n += 1;
            for q in 0..NUM_FEATURES {
                sum[q] += r[q];
            }
            collected.push(r);
        }
        if n == 0 {
            return Err(Error::InvalidData(
                "cannot fit normalization on an empty training split".into(),
            ));
        }
        let mut means = [0.0; NUM_FEATURES];
        for q in 0..NUM_FEATURES {
            means[q] = sum[q] / n as f64;
        }
        let mut var = [0.0; NUM_FEATURES];
        for r in &collected {
            for q in 0..NUM_FEATURES {
                let d = r[q] - means[q];
                var[q] += d * d;
            }
        }
        let mut stds = [1.0; NUM_FEATURES];
        for q in 0..NUM_FEATURES {
            let sd = (var[q] / n as f64).sqrt();
            if sd > 0.0 {
                stds[q] = sd;
            }
        }
        Ok(Normalization {
            means,
            stds,
            weights,
        })
    }

    #[inline]
    pub fn apply(&self, raw: &Features) -> Features {
        let mut out = [0.0; NUM_FEATURES];
        for q in 0..NUM_FEATURES {
            out[q] = self.weights[q] * (raw[q] - self.means[q]) / self.stds[q];
        }
        out
    }
}

/// An immutable collection of PSMs with optional split assignment and
/// normalization. Transformations consume `self` and return a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<PsmRecord>,
    split: Option<Vec<Split>>,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn from_records(records: Vec<PsmRecord>) -> Self {
        Dataset {
            records,
            split: None,
            normalization: None,
        }
    }

    pub fn records(&self) -> &[PsmRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &PsmRecord {
        &self.records[i]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// (targets, decoys)
    pub fn counts(&self) -> (usize, usize) {
        let t = self.records.iter().filter(|r| r.label.is_target()).count();
        (t, self.records.len() - t)
    }

    pub fn splits(&self) -> Option<&[Split]> {
        self.split.as_deref()
    }

    pub fn split_of(&self, i: usize) -> Option<Split> {
        self.split.as_ref().map(|s| s[i])
    }

    /// Indices of records in `which`. Without a split assignment every record
    /// counts as training data.
    pub fn indices(&self, which: Split) -> Vec<usize> {
        match &self.split {
            Some(s) => (0..self.len()).filter(|&i| s[i] == which).collect(),
            None if which == Split::Train => (0..self.len()).collect(),
            None => Vec::new(),
        }
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Normalized, weighted features when a normalization is attached,
    /// raw features otherwise.
    pub fn features(&self, i: usize) -> Features {
        let raw = &self.records[i].features;
        match &self.normalization {
            Some(n) => n.apply(raw),
            None => *raw,
        }
    }

    pub fn has_oracle(&self) -> bool {
        self.records.iter().any(|r| r.oracle_correct.is_some())
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.records.len() {
            return Err(Error::InvalidData(format!(
                "split has {} entries for {} records",
                split.len(),
                self.records.len()
            )));
        }
        self.split = Some(split);
        Ok(self)
    }

    /// Seeded Fisher-Yates shuffle; the first ⌈n·train/(train+test)⌉ records
    /// of the permutation go to the training split.
    pub fn split_train_test(self, ratio: (usize, usize), seed: u64) -> Result<Self> {
        let (a, b) = ratio;
        if a == 0 || b == 0 {
            return Err(Error::InvalidParameter(format!(
                "split ratio parts must be positive, got {a}:{b}"
            )));
        }
        let n = self.records.len();
        if n < a + b {
            return Err(Error::InvalidData(format!(
                "{n} records cannot be split {a}:{b}"
            )));
        }
        let n_train = (a * n).div_ceil(a + b);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut split = vec![Split::Test; n];
        for &i in &order[..n_train] {
            split[i] = Split::Train;
        }
        self.with_split(split)
    }

    /// Fits z-score statistics on the training split and attaches them with
    /// the given per-feature weights.
    pub fn normalize_and_weight(self, weights: Features) -> Result<Self> {
        let split = self.split.as_ref().ok_or_else(|| {
            Error::InvalidData("normalization requires a train/test split".into())
        })?;
        let norm = Normalization::fit(
            self.records
                .iter()
                .zip(split)
                .filter(|(_, s)| **s == Split::Train)
                .map(|(r, _)| &r.features),
            weights,
        )?;
        Ok(self.with_normalization(norm))
    }

    /// Attaches a previously fitted normalization (e.g. from a stored model).
    pub fn with_normalization(mut self, norm: Normalization) -> Self {
        self.normalization = Some(norm);
        self
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
            None => return Err(Error::parse(1, "empty file, expected a header row")),
        };
        let columns: HashMap<&str, usize> = header
            .trim_end_matches('\r')
            .split('\t')
            .enumerate()
            .map(|(k, c)| (c, k))
            .collect();
        let col = |name: &str| {
            columns
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let id_col = col("id")?;
        let label_col = col("label")?;
        let mut feature_cols = [0usize; NUM_FEATURES];
        for (q, name) in FEATURE_NAMES.iter().enumerate() {
            feature_cols[q] = col(name)?;
        }
        let split_col = columns.get("split").copied();
        let oracle_col = columns.get("oracle_correct").copied();

        let mut records = Vec::new();
        let mut split = Vec::new();
        for (k, line) in lines.enumerate() {
            let lineno = k + 2;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let field = |c: usize| {
                fields.get(c).copied().ok_or_else(|| {
                    Error::parse(
                        lineno,
                        format!("expected at least {} fields, found {}", c + 1, fields.len()),
                    )
                })
            };
            let label_tok = field(label_col)?;
            let label = Label::parse(label_tok)
                .ok_or_else(|| Error::parse(lineno, format!("unknown label `{label_tok}`")))?;
            let mut features = [0.0; NUM_FEATURES];
            for q in 0..NUM_FEATURES {
                let tok = field(feature_cols[q])?;
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(
                        lineno,
                        format!("feature `{}`: `{tok}` is not a number", FEATURE_NAMES[q]),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        lineno,
                        format!("feature `{}` is not finite", FEATURE_NAMES[q]),
                    ));
                }
                features[q] = v;
            }
            let mut rec = PsmRecord {
                id: field(id_col)?.to_string(),
                label,
                features,
                oracle_correct: None,
            };
            if let Some(c) = oracle_col {
                rec.oracle_correct = match field(c)? {
                    "" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    other => {
                        return Err(Error::parse(
                            lineno,
                            format!("oracle_correct: expected true/false, got `{other}`"),
                        ))
                    }
                };
            }
            if let Some(c) = split_col {
                let tok = field(c)?;
                split.push(
                    Split::parse(tok)
                        .ok_or_else(|| Error::parse(lineno, format!("unknown split `{tok}`")))?,
                );
            }
            records.push(rec);
        }
        let ds = Dataset::from_records(records);
        if split_col.is_some() {
            ds.with_split(split)
        } else {
            Ok(ds)
        }
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Raw (un-normalized) values are written with shortest round-trip
    /// formatting, so reading the file back reproduces them exactly.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let with_oracle = self.has_oracle();
        write!(w, "id\tlabel")?;
        for name in FEATURE_NAMES {
            write!(w, "\t{name}")?;
        }
        if self.split.is_some() {
            write!(w, "\tsplit")?;
        }
        if with_oracle {
            write!(w, "\toracle_correct")?;
        }
        writeln!(w)?;
        for (i, r) in self.records.iter().enumerate() {
            write!(w, "{}\t{}", r.id, r.label)?;
            for v in &r.features {
                write!(w, "\t{v}")?;
            }
            if let Some(s) = &self.split {
                write!(w, "\t{}", s[i])?;
            }
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
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_target: usize,
    pub n_decoy: usize,
    /// Fraction of targets drawn from the correct-match distribution.
    pub pi_correct: f64,
    /// Distance between the correct and incorrect means along xcorr.
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Fraction of correct targets in the "hard" regime, where only about
    /// 6.5% of targets are identifiable.
    pub const HARD_PI_CORRECT: f64 = 0.065;
    pub const NORMAL_PI_CORRECT: f64 = 0.5;
    pub const DEFAULT_SEPARATION: f64 = 4.0;

    pub fn hard(n_target: usize, n_decoy: usize, seed: u64) -> Self {
        SynthSpec {
            n_target,
            n_decoy,
            pi_correct: Self::HARD_PI_CORRECT,
            separation: Self::DEFAULT_SEPARATION,
            seed,
        }
    }

    pub fn normal(n_target: usize, n_decoy: usize, seed: u64) -> Self {
        SynthSpec {
            n_target,
            n_decoy,
            pi_correct: Self::NORMAL_PI_CORRECT,
            separation: Self::DEFAULT_SEPARATION,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_target == 0 || self.n_decoy == 0 {
            return Err(Error::InvalidParameter(format!(
                "synthetic counts must be positive (n_target={}, n_decoy={})",
                self.n_target, self.n_decoy
            )));
        }
        if !(0.0..=1.0).contains(&self.pi_correct) {
            return Err(Error::InvalidParameter(format!(
                "pi_correct must lie in [0, 1], got {}",
                self.pi_correct
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "separation must be finite and non-negative, got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

/// Draws a labeled dataset from two spherical unit-variance Gaussians in the
/// 9-dimensional feature space. Incorrect targets and all decoys share the
/// incorrect-match distribution centred at `-separation/2` on the xcorr axis;
/// `round(pi_correct * n_target)` targets come from the correct-match
/// distribution centred at `+separation/2`. Record order is shuffled.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_correct = (spec.pi_correct * spec.n_target as f64).round() as usize;
    let half = spec.separation / 2.0;
    let draw = |rng: &mut ChaCha8Rng, centre: f64| {
        let mut x = [0.0; NUM_FEATURES];
        for v in x.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        x[0] += centre;
        x
    };
    let mut records = Vec::with_capacity(spec.n_target + spec.n_decoy);
    for k in 0..spec.n_target {
        let correct = k < n_correct;
        let x = draw(&mut rng, if correct { half } else { -half });
        records.push((Label::Target, x, correct));
    }
    for _ in 0..spec.n_decoy {
        let x = draw(&mut rng, -half);
        records.push((Label::Decoy, x, false));
    }
    records.shuffle(&mut rng);
    let records = records
        .into_iter()
        .enumerate()
        .map(|(k, (label, features, correct))| PsmRecord {
            id: format!("psm{k:07}"),
            label,
            features,
            oracle_correct: Some(correct),
        })
        .collect();
    Ok(Dataset::from_records(records))
}
