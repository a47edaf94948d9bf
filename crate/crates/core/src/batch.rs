//! Batch solver: CCCP outer loop over a box-constrained dual QP solved by
//! cyclic coordinate ascent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kernel::{kernel_value, FeatureMatrix, KernelCache};
use crate::model::{primal_from_outputs, Discriminant, DualState, ModelParams};
use crate::trainer::TrainingSet;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    /// KKT tolerance of each inner QP.
    pub tol_inner: f64,
    /// Cap on CCCP iterations.
    pub max_outer: usize,
    /// Cap on coordinate sweeps per QP; `None` means `10·n`.
    pub max_inner_sweeps: Option<usize>,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
    /// Seed of the per-sweep coordinate permutation.
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            tol_inner: 1e-3,
            max_outer: 20,
            max_inner_sweeps: None,
            cache_mb: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpReport {
    pub sweeps: usize,
    /// Coordinates whose value actually changed.
    pub updates: usize,
    pub converged: bool,
    pub violation: f64,
}

/// Coordinate ascent on `G(α)` with the boxes currently stored in `st`.
///
/// Each coordinate takes the exact 1-D maximizer `α_i + g_i / K_ii` clipped
/// to `[A_i, B_i]`; the gradient cache is updated with the kernel row of the
/// moved coordinate. Coordinates already within `tol` of optimality are
/// skipped. Stops once the maximal violation is at most `tol` or after
/// `max_sweeps` sweeps (reported as not converged).
pub fn solve_inner_qp(
    st: &mut DualState,
    x: &FeatureMatrix,
    p: &ModelParams,
    cache: &mut KernelCache,
    tol: f64,
    max_sweeps: usize,
    rng: &mut ChaCha8Rng,
) -> QpReport {
    let n = st.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = QpReport {
        sweeps: 0,
        updates: 0,
        converged: false,
        violation: st.max_violation(),
    };
    while report.violation > tol {
        if report.sweeps >= max_sweeps {
            return report;
        }
        order.shuffle(rng);
        for &k in &order {
            let g = st.grad[k];
            let up = st.alpha[k] < st.upper[k] && g > tol;
            let down = st.alpha[k] > st.lower[k] && -g > tol;
            if !(up || down) {
                continue;
            }
            let xi = x.row(st.index[k]);
            let kii = kernel_value(xi, xi, &p.kernel);
            let new = (st.alpha[k] + g / kii).clamp(st.lower[k], st.upper[k]);
            let delta = new - st.alpha[k];
            if delta == 0.0 {
                continue;
            }
            st.alpha[k] = new;
            let row = cache.row(st.index[k], &st.index, 0, x, &p.kernel);
            for (gs, r) in st.grad.iter_mut().zip(row) {
                *gs -= delta * r;
            }
            report.updates += 1;
        }
        report.sweeps += 1;
        report.violation = st.max_violation();
    }
    report.converged = true;
    report
}

/// Reference solver for tests: projected gradient ascent on `G` over a dense
/// Gram matrix with the fixed step `1 / trace(K)`, starting from `α = 0`.
/// Runs until the largest coordinate change falls below `1e-15` or `iters`
/// iterations. Returns a state with the oracle `α` and a freshly computed
/// gradient.
pub fn brute_qp_oracle(
    st: &DualState,
    x: &FeatureMatrix,
    p: &ModelParams,
    iters: usize,
) -> DualState {
    let n = st.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = kernel_value(x.row(st.index[i]), x.row(st.index[j]), &p.kernel);
        }
    }
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    let step = 1.0 / trace;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for _ in 0..iters {
        for i in 0..n {
            let mut ka = 0.0;
            for j in 0..n {
                ka += gram[i * n + j] * alpha[j];
            }
            grad[i] = st.y[i] - ka;
        }
        let mut change: f64 = 0.0;
        for i in 0..n {
            let new = (alpha[i] + step * grad[i]).clamp(st.lower[i], st.upper[i]);
            change = change.max((new - alpha[i]).abs());
            alpha[i] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    let mut out = st.clone();
    for i in 0..n {
        let mut ka = 0.0;
        for j in 0..n {
            ka += gram[i * n + j] * alpha[j];
        }
        out.grad[i] = st.y[i] - ka;
    }
    out.alpha = alpha;
    out
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub discriminant: Discriminant,
    /// Number of QP solves, including the final confirming one.
    pub outer_iterations: usize,
    /// η reached a fixed point with unchanged α.
    pub converged: bool,
    /// Every inner QP met its tolerance.
    pub inner_converged: bool,
    /// Primal objective after each QP solve.
    pub primal_trace: Vec<f64>,
    /// Number of η flips after each QP solve.
    pub eta_flips: Vec<usize>,
    /// Number of targets with η = 1 after each η update.
    pub eta_active: Vec<usize>,
    pub final_violation: f64,
    pub total_sweeps: usize,
    pub kernel_evaluations: u64,
}

fn primal_of(st: &DualState, p: &ModelParams) -> f64 {
    let outputs: Vec<f64> = (0..st.len()).map(|k| st.output(k)).collect();
    let norm_sq: f64 = (0..st.len()).map(|k| st.alpha[k] * outputs[k]).sum();
    primal_from_outputs(&st.y, &outputs, norm_sq, p)
}

/// CCCP: start from `η = 0`, solve the dual QP, set `η_i = [y_i f(x_i) < s]`
/// on targets, refresh their boxes and repeat. Terminates when a solve under
/// unchanged `η` leaves `α` untouched, or after `max_outer` solves; in the
/// latter case the iterate with the lowest primal objective is returned.
pub fn cccp_solve(train: &TrainingSet, p: &ModelParams, cfg: &BatchConfig) -> BatchOutcome {
    let n = train.len();
    let mut st = DualState::full(train, p);
    let row_bytes = (n * std::mem::size_of::<f64>()).max(1);
    let mut cache = KernelCache::new((cfg.cache_mb * 1024 * 1024 / row_bytes).max(2));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_sweeps = cfg.max_inner_sweeps.unwrap_or(10 * n).max(1);
    let s = p.s();

    let mut out = BatchOutcome {
        discriminant: Discriminant::empty(*p, train.normalization.clone()),
        outer_iterations: 0,
        converged: false,
        inner_converged: true,
        primal_trace: Vec::new(),
        eta_flips: Vec::new(),
        eta_active: Vec::new(),
        final_violation: 0.0,
        total_sweeps: 0,
        kernel_evaluations: 0,
    };
    let mut best: Option<(f64, DualState)> = None;
    let mut eta_changed = true;

    for it in 1..=cfg.max_outer {
        let qp = solve_inner_qp(
            &mut st,
            &train.x,
            p,
            &mut cache,
            cfg.tol_inner,
            max_sweeps,
            &mut rng,
        );
        out.outer_iterations = it;
        out.total_sweeps += qp.sweeps;
        out.inner_converged &= qp.converged;
        let j = primal_of(&st, p);
        out.primal_trace.push(j);
        if best.as_ref().is_none_or(|(b, _)| j < *b) {
            best = Some((j, st.clone()));
        }
        if it > 1 && qp.updates == 0 && !eta_changed {
            out.converged = true;
            break;
        }

        let flipped: Vec<usize> = (0..n)
            .filter(|&k| st.y[k] > 0.0 && (st.y[k] * st.output(k) < s) != st.eta[k])
            .collect();
        for &k in &flipped {
            let eta = !st.eta[k];
            st.set_eta(k, eta, p);
        }
        // the old values lie on the far side of zero; zero is the projection
        // onto the new boxes
        for &k in &flipped {
            let delta = -st.alpha[k];
            if delta != 0.0 {
                st.alpha[k] = 0.0;
                let row = cache.row(st.index[k], &st.index, 0, &train.x, &p.kernel);
                for (gs, r) in st.grad.iter_mut().zip(row) {
                    *gs -= delta * r;
                }
            }
        }
        let flips = flipped.len();
        eta_changed = flips > 0;
        out.eta_flips.push(flips);
        out.eta_active.push(st.eta.iter().filter(|&&e| e).count());
    }

    let final_state = if out.converged {
        st
    } else {
        best.map(|(_, b)| b).unwrap_or(st)
    };
    out.final_violation = final_state.max_violation();
    out.kernel_evaluations = cache.stats().evaluations;
    out.discriminant = final_state.to_discriminant(train, p);
    out
}
