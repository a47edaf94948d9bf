//! Model parameters, losses, dual box bounds, the dual state shared by both
//! solvers, and the kernel-expansion discriminant.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{Label, Normalization, FEATURE_NAMES, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::{kernel_value, FeatureMatrix, KernelParams};
use crate::trainer::TrainingSet;

/// Cost weights and ramp parameter of the cost-sensitive ranker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Loss weight on decoys.
    pub c1: f64,
    /// Loss weight on targets.
    pub c2: f64,
    /// Selection weight; sets the ramp knee through `s = 1 - lambda / c2`.
    pub lambda: f64,
    pub kernel: KernelParams,
    pub allow_negative_s: bool,
}

impl ModelParams {
    /// Requires `c1 >= c2 > 0` and `0 < lambda <= c2`, so `s ∈ [0, 1)`.
    pub fn new(c1: f64, c2: f64, lambda: f64, sigma: f64) -> Result<Self> {
        Self::build(c1, c2, lambda, sigma, false)
    }

    /// Like [`ModelParams::new`] but only requires `lambda > 0`, which still
    /// keeps `s < 1` while allowing a negative ramp knee.
    pub fn with_negative_s(c1: f64, c2: f64, lambda: f64, sigma: f64) -> Result<Self> {
        Self::build(c1, c2, lambda, sigma, true)
    }

    fn build(c1: f64, c2: f64, lambda: f64, sigma: f64, allow_negative_s: bool) -> Result<Self> {
        if !(c2 > 0.0 && c2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C2 must be positive, got {c2}"
            )));
        }
        if !(c1 >= c2 && c1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C1 must satisfy C1 >= C2 (C1={c1}, C2={c2})"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !allow_negative_s && lambda > c2 {
            return Err(Error::InvalidParameter(format!(
                "lambda must not exceed C2 (lambda={lambda}, C2={c2}); \
                 enable allow_negative_s to permit s < 0"
            )));
        }
        Ok(ModelParams {
            c1,
            c2,
            lambda,
            kernel: KernelParams::new(sigma)?,
            allow_negative_s,
        })
    }

    /// Ramp knee `s = 1 - lambda / c2`.
    #[inline]
    pub fn s(&self) -> f64 {
        1.0 - self.lambda / self.c2
    }
}

#[inline]
pub fn hinge(t: f64) -> f64 {
    (1.0 - t).max(0.0)
}

/// Shifted hinge `max(0, s - t)`.
#[inline]
pub fn h_s(t: f64, s: f64) -> f64 {
    (s - t).max(0.0)
}

/// Ramp loss `min(1 - s, max(0, 1 - t))`.
#[inline]
pub fn ramp(t: f64, s: f64) -> f64 {
    (1.0 - s).min(hinge(t))
}

/// Dual box `(A_i, B_i)`.
///
/// Decoys: `(min(0, C1 y), max(0, C1 y)) = (-C1, 0)`.
/// Targets: the same with `C2`, shifted by `-C2 η y`, giving `(0, C2)` for
/// `η = 0` and `(-C2, 0)` for `η = 1`.
pub fn compute_bounds(label: Label, eta: bool, p: &ModelParams) -> (f64, f64) {
    let y = label.sign();
    match label {
        Label::Decoy => ((p.c1 * y).min(0.0), (p.c1 * y).max(0.0)),
        Label::Target => {
            let shift = if eta { p.c2 * y } else { 0.0 };
            ((p.c2 * y).min(0.0) - shift, (p.c2 * y).max(0.0) - shift)
        }
    }
}

fn label_of(y: f64) -> Label {
    if y > 0.0 {
        Label::Target
    } else {
        Label::Decoy
    }
}

/// Running `(argmin g over α > A, argmax g over α < B)`; ties keep the
/// first position visited.
#[derive(Debug, Clone, Copy)]
pub struct PairScan {
    lo: usize,
    lo_g: f64,
    hi: usize,
    hi_g: f64,
}

impl Default for PairScan {
    fn default() -> Self {
        PairScan::new()
    }
}

impl PairScan {
    pub fn new() -> Self {
        PairScan {
            lo: usize::MAX,
            lo_g: f64::INFINITY,
            hi: usize::MAX,
            hi_g: f64::NEG_INFINITY,
        }
    }

    #[inline(always)]
    pub fn visit(&mut self, k: usize, g: f64, alpha: f64, lower: f64, upper: f64) {
        // gradients are finite, so the infinite sentinels lose every comparison
        let down = if alpha > lower { g } else { f64::INFINITY };
        let up = if alpha < upper { g } else { f64::NEG_INFINITY };
        if down < self.lo_g {
            self.lo = k;
            self.lo_g = down;
        }
        if up > self.hi_g {
            self.hi = k;
            self.hi_g = up;
        }
    }

    pub fn finish(self) -> (Option<usize>, Option<usize>) {
        let pick = |k: usize| (k != usize::MAX).then_some(k);
        (pick(self.lo), pick(self.hi))
    }
}

/// Dual variables over an index set, with their boxes, concave-activation
/// flags and the gradient cache `g_i = y_i - Σ_j α_j k(x_i, x_j)`.
///
/// All vectors are aligned by position; `index[pos]` is the training index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualState {
    pub index: Vec<usize>,
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub grad: Vec<f64>,
    pub eta: Vec<bool>,
}

impl DualState {
    pub fn new() -> Self {
        Self::default()
    }

    /// All training indices with `α = 0`, `η = 0`; the gradient is then `y`.
    pub fn full(train: &TrainingSet, p: &ModelParams) -> Self {
        let mut st = DualState::new();
        for i in 0..train.len() {
            st.push(i, train.y[i], p);
        }
        st
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Appends an index with `α = 0`, `η = 0` and `g = y`. The caller is
    /// responsible for fixing up `g` if other coefficients are non-zero.
    pub fn push(&mut self, index: usize, y: f64, p: &ModelParams) -> usize {
        let (a, b) = compute_bounds(label_of(y), false, p);
        self.index.push(index);
        self.y.push(y);
        self.alpha.push(0.0);
        self.lower.push(a);
        self.upper.push(b);
        self.grad.push(y);
        self.eta.push(false);
        self.index.len() - 1
    }

    /// Sets `η` (ignored for decoys) and refreshes the box. Returns whether
    /// the box changed. `α` is left untouched.
    pub fn set_eta(&mut self, pos: usize, eta: bool, p: &ModelParams) -> bool {
        if self.y[pos] < 0.0 || self.eta[pos] == eta {
            return false;
        }
        self.eta[pos] = eta;
        let (a, b) = compute_bounds(Label::Target, eta, p);
        self.lower[pos] = a;
        self.upper[pos] = b;
        true
    }

    /// Discriminant value on an index of the set, from the gradient identity
    /// `f(x_i) = y_i - g_i`.
    #[inline]
    pub fn output(&self, pos: usize) -> f64 {
        self.y[pos] - self.grad[pos]
    }

    /// `(argmin g over α > A, argmax g over α < B)`.
    pub fn extreme_pair(&self) -> (Option<usize>, Option<usize>) {
        let mut scan = PairScan::new();
        for k in 0..self.len() {
            scan.visit(k, self.grad[k], self.alpha[k], self.lower[k], self.upper[k]);
        }
        scan.finish()
    }

    /// `max(g_j, -g_i)` over the extreme pair, floored at zero.
    pub fn max_violation(&self) -> f64 {
        let (lo, hi) = self.extreme_pair();
        let down = lo.map_or(f64::NEG_INFINITY, |i| -self.grad[i]);
        let up = hi.map_or(f64::NEG_INFINITY, |j| self.grad[j]);
        down.max(up).max(0.0)
    }

    pub fn is_feasible(&self) -> bool {
        (0..self.len()).all(|k| self.lower[k] <= self.alpha[k] && self.alpha[k] <= self.upper[k])
    }

    /// `y_i - Σ_j α_j k(x_i, x_j)` computed from scratch.
    pub fn recompute_gradient(&self, x: &FeatureMatrix, kernel: &KernelParams) -> Vec<f64> {
        let support: Vec<(usize, f64)> = (0..self.len())
            .filter(|&k| self.alpha[k] != 0.0)
            .map(|k| (self.index[k], self.alpha[k]))
            .collect();
        let mut out = vec![0.0; self.len()];
        Execution::default().fill(&mut out, |k| {
            let xi = x.row(self.index[k]);
            let f: f64 = support
                .iter()
                .map(|&(j, a)| a * kernel_value(xi, x.row(j), kernel))
                .sum();
            self.y[k] - f
        });
        out
    }

    /// ∞-norm distance between the cached and recomputed gradients.
    pub fn gradient_error(&self, x: &FeatureMatrix, kernel: &KernelParams) -> f64 {
        self.recompute_gradient(x, kernel)
            .iter()
            .zip(&self.grad)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Keeps only the positions where `keep` is true.
    pub fn retain_positions(&mut self, keep: &[bool]) {
        fn retain<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut k = 0;
            v.retain(|_| {
                let r = keep[k];
                k += 1;
                r
            });
        }
        retain(&mut self.index, keep);
        retain(&mut self.y, keep);
        retain(&mut self.alpha, keep);
        retain(&mut self.lower, keep);
        retain(&mut self.upper, keep);
        retain(&mut self.grad, keep);
        retain(&mut self.eta, keep);
    }

    /// Kernel expansion over the non-zero coefficients.
    pub fn to_discriminant(&self, train: &TrainingSet, p: &ModelParams) -> Discriminant {
        let mut d = Discriminant::empty(*p, train.normalization.clone());
        for k in 0..self.len() {
            if self.alpha[k] != 0.0 {
                let i = self.index[k];
                d.push(train.x.row(i), self.alpha[k], train.record[i]);
            }
        }
        d
    }
}

/// `G(α) = -½ αᵀKα + ⟨α, y⟩ + λ·Σ η`, the dual of the surrogate with the
/// concave part linearised at `η`.
///
/// Uses `αᵀKα = ⟨α, y - g⟩`, so the gradient cache must be consistent.
pub fn dual_objective(st: &DualState, p: &ModelParams) -> f64 {
    let mut quad_lin = 0.0;
    let mut n_eta = 0usize;
    for k in 0..st.len() {
        quad_lin += st.alpha[k] * (st.y[k] + st.grad[k]);
        n_eta += st.eta[k] as usize;
    }
    0.5 * quad_lin + p.lambda * n_eta as f64
}

/// [`dual_objective`] from an explicit row-major Gram matrix.
pub fn dual_objective_dense(
    alpha: &[f64],
    y: &[f64],
    eta: &[bool],
    gram: &[f64],
    p: &ModelParams,
) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * gram[i * n + j];
        }
    }
    let lin: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
    let n_eta = eta.iter().filter(|&&e| e).count();
    -0.5 * quad + lin + p.lambda * n_eta as f64
}

/// Primal objective from precomputed pieces: `½‖w‖² + C1 Σ_decoys h(y f) +
/// C2 Σ_targets R_s(y f)`.
pub fn primal_from_outputs(y: &[f64], outputs: &[f64], norm_sq: f64, p: &ModelParams) -> f64 {
    let s = p.s();
    let mut loss = 0.0;
    for (&yi, &fi) in y.iter().zip(outputs) {
        let t = yi * fi;
        loss += if yi < 0.0 {
            p.c1 * hinge(t)
        } else {
            p.c2 * ramp(t, s)
        };
    }
    0.5 * norm_sq + loss
}

/// Convex surrogate with the concave part linearised at `η`: targets with
/// `η_i = 1` pay `C2 (h(y f) + y f - s)` instead of `C2 R_s(y f)`.
pub fn surrogate_from_outputs(
    y: &[f64],
    outputs: &[f64],
    eta: &[bool],
    norm_sq: f64,
    p: &ModelParams,
) -> f64 {
    let s = p.s();
    let mut loss = 0.0;
    for ((&yi, &fi), &e) in y.iter().zip(outputs).zip(eta) {
        let t = yi * fi;
        loss += if yi < 0.0 {
            p.c1 * hinge(t)
        } else if e {
            p.c2 * (hinge(t) + t - s)
        } else {
            p.c2 * hinge(t)
        };
    }
    0.5 * norm_sq + loss
}

/// Difference-of-convex split `(J_vex, J_cav)`: the convex part carries
/// hinge losses on every PSM, the concave part `-C2 Σ_targets H_s(y f)`.
pub fn convex_concave_split(
    y: &[f64],
    outputs: &[f64],
    norm_sq: f64,
    p: &ModelParams,
) -> (f64, f64) {
    let s = p.s();
    let mut vex = 0.5 * norm_sq;
    let mut cav = 0.0;
    for (&yi, &fi) in y.iter().zip(outputs) {
        let t = yi * fi;
        if yi < 0.0 {
            vex += p.c1 * hinge(t);
        } else {
            vex += p.c2 * hinge(t);
            cav -= p.c2 * h_s(t, s);
        }
    }
    (vex, cav)
}

/// Primal objective of `f` over the training set.
pub fn primal_objective(train: &TrainingSet, f: &Discriminant, p: &ModelParams) -> f64 {
    let outputs = f.evaluate_all(&train.x, Execution::default());
    primal_from_outputs(&train.y, &outputs, f.norm_sq(), p)
}

/// `f(x) = Σ_j α_j k(x_j, x)` with zero offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminant {
    /// Normalized, weighted feature vectors of the support indices.
    pub support: FeatureMatrix,
    pub alpha: Vec<f64>,
    /// Dataset record index of each support vector.
    pub source: Vec<usize>,
    pub params: ModelParams,
    pub normalization: Option<Normalization>,
}

const MODEL_MAGIC: &str = "#csranker-model";
const MODEL_VERSION: u32 = 1;

impl Discriminant {
    pub fn empty(params: ModelParams, normalization: Option<Normalization>) -> Self {
        Discriminant {
            support: FeatureMatrix::new(NUM_FEATURES),
            alpha: Vec::new(),
            source: Vec::new(),
            params,
            normalization,
        }
    }

    pub fn push(&mut self, x: &[f64], alpha: f64, source: usize) {
        self.support.push(x);
        self.alpha.push(alpha);
        self.source.push(source);
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        evaluate_f(self, x)
    }

    pub fn evaluate_all(&self, xs: &FeatureMatrix, exec: Execution) -> Vec<f64> {
        let mut out = vec![0.0; xs.len()];
        exec.fill(&mut out, |i| self.evaluate(xs.row(i)));
        out
    }

    /// `‖w‖² = Σ_ij α_i α_j k(x_i, x_j)`.
    pub fn norm_sq(&self) -> f64 {
        let n = self.len();
        let mut total = 0.0;
        for i in 0..n {
            let xi = self.support.row(i);
            let mut row = 0.0;
            for j in 0..n {
                row += self.alpha[j] * kernel_value(xi, self.support.row(j), &self.params.kernel);
            }
            total += self.alpha[i] * row;
        }
        total
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Versioned TSV: a `key<TAB>value…` header block, then one row per
    /// support vector (`index alpha <9 features>`).
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let p = &self.params;
        writeln!(w, "{MODEL_MAGIC}\t{MODEL_VERSION}")?;
        writeln!(w, "sigma\t{}", p.kernel.sigma)?;
        writeln!(w, "C1\t{}", p.c1)?;
        writeln!(w, "C2\t{}", p.c2)?;
        writeln!(w, "lambda\t{}", p.lambda)?;
        writeln!(w, "allow_negative_s\t{}", p.allow_negative_s)?;
        if let Some(n) = &self.normalization {
            for (key, vals) in [
                ("means", &n.means),
                ("stds", &n.stds),
                ("weights", &n.weights),
            ] {
                write!(w, "{key}")?;
                for v in vals {
                    write!(w, "\t{v}")?;
                }
                writeln!(w)?;
            }
        }
        write!(w, "index\talpha")?;
        for name in FEATURE_NAMES {
            write!(w, "\t{name}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}\t{}", self.source[k], self.alpha[k])?;
            for v in self.support.row(k) {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(BufReader::new(f))
    }

    pub fn read_tsv<R: Read>(reader: R) -> Result<Self> {
        let mut header: Vec<(String, Vec<String>)> = Vec::new();
        let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
        let mut in_rows = false;
        for (k, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = k + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t').map(str::to_string);
            let key = fields.next().unwrap_or_default();
            if lineno == 1 {
                let version = fields.next().unwrap_or_default();
                if key != MODEL_MAGIC {
                    return Err(Error::parse(1, "not a csranker model file"));
                }
                if version != MODEL_VERSION.to_string() {
                    return Err(Error::parse(
                        1,
                        format!("unsupported model version `{version}`"),
                    ));
                }
                continue;
            }
            if in_rows {
                rows.push((lineno, line.split('\t').map(str::to_string).collect()));
            } else if key == "index" {
                in_rows = true;
            } else {
                header.push((key, fields.collect()));
            }
        }
        if header.is_empty() && rows.is_empty() {
            return Err(Error::parse(1, "empty model file"));
        }

        let get = |name: &str| -> Result<&Vec<String>> {
            header
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let scalar = |name: &str| -> Result<f64> {
            let v = get(name)?;
            v.first()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::InvalidData(format!("model field `{name}` is not a number")))
        };
        let vector = |name: &str| -> Result<[f64; NUM_FEATURES]> {
            let v = get(name)?;
            if v.len() != NUM_FEATURES {
                return Err(Error::InvalidData(format!(
                    "model field `{name}` has {} values, expected {NUM_FEATURES}",
                    v.len()
                )));
            }
            let mut out = [0.0; NUM_FEATURES];
            for (o, t) in out.iter_mut().zip(v) {
                *o = t.parse().map_err(|_| {
                    Error::InvalidData(format!("model field `{name}`: `{t}` is not a number"))
                })?;
            }
            Ok(out)
        };

        let allow_negative_s = get("allow_negative_s")
            .ok()
            .and_then(|v| v.first())
            .map(|t| t == "true")
            .unwrap_or(false);
        let (c1, c2, lambda, sigma) = (
            scalar("C1")?,
            scalar("C2")?,
            scalar("lambda")?,
            scalar("sigma")?,
        );
        let params = if allow_negative_s {
            ModelParams::with_negative_s(c1, c2, lambda, sigma)?
        } else {
            ModelParams::new(c1, c2, lambda, sigma)?
        };
        let normalization = if header.iter().any(|(k, _)| k == "means") {
            Some(Normalization {
                means: vector("means")?,
                stds: vector("stds")?,
                weights: vector("weights")?,
            })
        } else {
            None
        };

        let mut d = Discriminant::empty(params, normalization);
        for (lineno, fields) in rows {
            if fields.len() != NUM_FEATURES + 2 {
                return Err(Error::parse(
                    lineno,
                    format!(
                        "expected {} fields, found {}",
                        NUM_FEATURES + 2,
                        fields.len()
                    ),
                ));
            }
            let source: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad index `{}`", fields[0])))?;
            let nums: std::result::Result<Vec<f64>, _> =
                fields[1..].iter().map(|t| t.parse::<f64>()).collect();
            let nums =
                nums.map_err(|_| Error::parse(lineno, "non-numeric coefficient or feature"))?;
            d.push(&nums[1..], nums[0], source);
        }
        Ok(d)
    }
}

/// Kernel expansion value `Σ_j α_j k(x_j, x)`.
pub fn evaluate_f(f: &Discriminant, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..f.len() {
        total += f.alpha[j] * kernel_value(f.support.row(j), x, &f.params.kernel);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn loss_values() {
        assert_eq!(hinge(1.0), 0.0);
        assert_eq!(hinge(0.0), 1.0);
        assert_eq!(hinge(-2.0), 3.0);
        let s = 0.3;
        assert_eq!(h_s(s, s), 0.0);
        assert_eq!(h_s(s - 1.0, s), 1.0);
        assert_eq!(h_s(s + 5.0, s), 0.0);
        assert_eq!(ramp(2.0, 0.5), 0.0);
        assert_eq!(ramp(-3.0, 0.5), 0.5);
    }

    #[test]
    fn ramp_is_difference_of_hinges() {
        for k in 0..10_000 {
            let t = -5.0 + 10.0 * k as f64 / 9_999.0;
            for s in [-0.5, 0.0, 0.25, 0.5, 0.99] {
                let r = ramp(t, s);
                assert!((r - (hinge(t) - h_s(t, s))).abs() <= 1e-15);
                assert!((0.0..=1.0 - s).contains(&r));
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 2.0, 0.5, 1.0).is_err());
        assert!(ModelParams::new(2.0, 1.0, 1.5, 1.0).is_err());
        assert!(ModelParams::new(2.0, 1.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(2.0, 0.0, 0.5, 1.0).is_err());
        let p = ModelParams::with_negative_s(2.0, 1.0, 1.5, 1.0).unwrap();
        assert!(p.s() < 0.0);
        assert_eq!(ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap().s(), 0.0);
    }

    #[test]
    fn bounds_by_label_and_eta() {
        let p = ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(compute_bounds(Label::Decoy, false, &p), (-2.0, 0.0));
        assert_eq!(compute_bounds(Label::Decoy, true, &p), (-2.0, 0.0));
        assert_eq!(compute_bounds(Label::Target, false, &p), (0.0, 1.0));
        assert_eq!(compute_bounds(Label::Target, true, &p), (-1.0, 0.0));
    }

    #[test]
    fn dual_objective_small_cases() {
        let p = params();
        let mut st = DualState::new();
        st.push(0, -1.0, &p);
        assert_eq!(dual_objective(&st, &p), 0.0);
        // single index, K = 1: G(a) = -a²/2 + a y
        let a = -0.7;
        st.alpha[0] = a;
        st.grad[0] = st.y[0] - a;
        let expect = -0.5 * a * a + a * st.y[0];
        assert!((dual_objective(&st, &p) - expect).abs() < 1e-15);
        assert!(
            (dual_objective_dense(&st.alpha, &st.y, &st.eta, &[1.0], &p) - expect).abs() < 1e-15
        );
    }

    #[test]
    fn single_decoy_norm() {
        let p = params();
        let mut d = Discriminant::empty(p, None);
        d.push(&[0.0; NUM_FEATURES], -p.c1, 0);
        assert_eq!(d.norm_sq(), p.c1 * p.c1);
        assert_eq!(d.evaluate(&[0.0; NUM_FEATURES]), -p.c1);
    }

    #[test]
    fn zero_model_objective() {
        let p = params();
        let y = [1.0, 1.0, -1.0, 1.0, -1.0];
        let out = [0.0; 5];
        let j = primal_from_outputs(&y, &out, 0.0, &p);
        assert!((j - (p.c1 * 2.0 + p.c2 * 3.0 * (1.0 - p.s()))).abs() < 1e-15);
        let (vex, cav) = convex_concave_split(&y, &out, 0.0, &p);
        assert!((vex + cav - j).abs() < 1e-15);
    }

    #[test]
    fn model_file_round_trip() {
        let p = ModelParams::new(3.0, 1.5, 0.7, 0.8).unwrap();
        let mut d = Discriminant::empty(
            p,
            Some(Normalization {
                means: [0.1; NUM_FEATURES],
                stds: [2.0 / 3.0; NUM_FEATURES],
                weights: crate::dataset::DEFAULT_WEIGHTS,
            }),
        );
        d.push(&[1.0 / 3.0; NUM_FEATURES], -1.2345678901234567, 7);
        d.push(&[-0.1; NUM_FEATURES], 0.5, 11);
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = Discriminant::read_tsv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn model_file_rejects_garbage() {
        assert!(Discriminant::read_tsv("hello\tworld\n".as_bytes()).is_err());
        assert!(Discriminant::read_tsv("".as_bytes()).is_err());
    }
}
