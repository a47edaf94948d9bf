//! Online active-set solver.
//!
//! PSMs are fed one at a time in a seeded random order. Each round inserts
//! the new index into the active set `S`, refreshes the concave-activation
//! flags `η` (only once `|S| > M`), zeroes coefficients whose boxes moved
//! (PROCESS), then takes maximal-violation coordinate steps until the active
//! dual is τ-optimal (REPROCESS). Every `clean_period` insertions, zero
//! coefficients are evicted from `S` (CLEAN).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kernel::{kernel_value, KernelCache, DEFAULT_CACHE_ROWS};
use crate::model::{dual_objective, Discriminant, DualState, ModelParams, PairScan};
use crate::trainer::TrainingSet;

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    /// Minimum active-set size before concave activation (`M`).
    pub min_active: usize,
    /// REPROCESS KKT tolerance (`τ`).
    pub tau: f64,
    /// Insertions between CLEAN calls.
    pub clean_period: usize,
    /// Maximum non-support vectors removed per CLEAN (`m`).
    pub max_clean: usize,
    /// REPROCESS budget after the last insertion; `None` means `10·|S|`.
    pub finishing_sweeps: Option<usize>,
    /// Evict by largest `|g|` instead of largest `g`.
    pub clean_by_abs_gradient: bool,
    pub epochs: usize,
    pub seed: u64,
    pub cache_rows: usize,
    /// Record a progress line every this many rounds.
    pub log_every: Option<usize>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            min_active: 200,
            tau: 1e-3,
            clean_period: 500,
            max_clean: 300,
            finishing_sweeps: None,
            clean_by_abs_gradient: false,
            epochs: 1,
            seed: 0,
            cache_rows: DEFAULT_CACHE_ROWS,
            log_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub round: usize,
    pub active: usize,
    pub eta_active: usize,
    pub violation: f64,
    pub kernel_evaluations: u64,
}

/// Dual state restricted to the active set, with the kernel cache keyed by
/// the set's version.
pub struct ActiveSet<'a> {
    train: &'a TrainingSet,
    params: ModelParams,
    state: DualState,
    member: Vec<bool>,
    cache: KernelCache,
    version: u64,
    insertions: usize,
    last_resets: Vec<usize>,
    reprocess_steps: u64,
    direct_evaluations: u64,
}

impl<'a> ActiveSet<'a> {
    pub fn new(train: &'a TrainingSet, params: ModelParams, cache_rows: usize) -> Self {
        ActiveSet {
            train,
            params,
            state: DualState::new(),
            member: vec![false; train.len()],
            cache: KernelCache::new(cache_rows),
            version: 0,
            insertions: 0,
            last_resets: Vec::new(),
            reprocess_steps: 0,
            direct_evaluations: 0,
        }
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn insertions(&self) -> usize {
        self.insertions
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Positions whose coefficient was reset by the last PROCESS.
    pub fn last_resets(&self) -> &[usize] {
        &self.last_resets
    }

    pub fn reprocess_steps(&self) -> u64 {
        self.reprocess_steps
    }

    pub fn kernel_evaluations(&self) -> u64 {
        self.cache.stats().evaluations + self.direct_evaluations
    }

    /// `y_pos - Σ_s α_s k(x_pos, x_s)`, summing over non-zero coefficients
    /// only. A cached row is used when present; otherwise the kernel is
    /// evaluated directly against the support without filling the cache.
    fn fresh_gradient(&mut self, pos: usize) -> f64 {
        let y = self.state.y[pos];
        let i = self.state.index[pos];
        if let Some(row) = self.cache.peek(i, self.state.len(), self.version) {
            let f: f64 = row.iter().zip(&self.state.alpha).map(|(k, a)| k * a).sum();
            return y - f;
        }
        let xi = self.train.x.row(i);
        let mut f = 0.0;
        for (k, &a) in self.state.alpha.iter().enumerate() {
            if a != 0.0 {
                f += a * kernel_value(
                    xi,
                    self.train.x.row(self.state.index[k]),
                    &self.params.kernel,
                );
                self.direct_evaluations += 1;
            }
        }
        y - f
    }

    /// Adds training index `i` with `α = 0`, `η = 0` and a consistent
    /// gradient. Returns its position.
    pub fn insert(&mut self, i: usize) -> usize {
        assert!(!self.member[i], "index {i} already in the active set");
        self.member[i] = true;
        self.insertions += 1;
        let pos = self.state.push(i, self.train.y[i], &self.params);
        self.state.grad[pos] = self.fresh_gradient(pos);
        pos
    }

    /// Sets `η_j = [y_j f(x_j) < s and |S| > M]` for every target in the set
    /// and refreshes its box. Returns positions whose box changed.
    pub fn update_eta(&mut self, min_active: usize) -> Vec<usize> {
        let s = self.params.s();
        let active = self.state.len() > min_active;
        let mut changed = Vec::new();
        for k in 0..self.state.len() {
            if self.state.y[k] < 0.0 {
                continue;
            }
            let eta = active && self.state.y[k] * self.state.output(k) < s;
            if self.state.set_eta(k, eta, &self.params) {
                changed.push(k);
            }
        }
        changed
    }

    /// PROCESS: zero the coefficients at `changed` positions (and the new
    /// position), subtract their old contributions from every gradient, then
    /// recompute the gradients of the new and reset positions directly.
    pub fn process(&mut self, new_pos: Option<usize>, changed: &[usize]) {
        self.last_resets.clear();
        for &k in changed {
            let delta = -self.state.alpha[k];
            if delta == 0.0 {
                continue;
            }
            self.state.alpha[k] = 0.0;
            self.last_resets.push(k);
            let i = self.state.index[k];
            let row = self.cache.row(
                i,
                &self.state.index,
                self.version,
                &self.train.x,
                &self.params.kernel,
            );
            for (g, r) in self.state.grad.iter_mut().zip(row) {
                *g -= delta * r;
            }
        }
        if let Some(k) = new_pos {
            debug_assert_eq!(self.state.alpha[k], 0.0);
            self.state.grad[k] = self.fresh_gradient(k);
        }
        for idx in 0..self.last_resets.len() {
            let k = self.last_resets[idx];
            self.state.grad[k] = self.fresh_gradient(k);
        }
    }

    /// Coordinate REPROCESS would step on for the given extreme pair, or
    /// `None` when the active dual is τ-optimal or no coordinate can move.
    fn choose(&self, pair: (Option<usize>, Option<usize>), tau: f64) -> Option<usize> {
        let st = &self.state;
        let (lo, hi) = pair;
        let down = lo.map_or(f64::NEG_INFINITY, |i| -st.grad[i]);
        let up = hi.map_or(f64::NEG_INFINITY, |j| st.grad[j]);
        if down.max(up) <= tau {
            return None;
        }
        match (lo, hi) {
            (Some(i), _) if down > tau && (up < tau || down > up) => Some(i),
            (_, Some(j)) => Some(j),
            (Some(i), None) => Some(i),
            (None, None) => None,
        }
    }

    /// Clipped Newton step on coordinate `t`, updating every gradient and
    /// returning the extreme pair of the updated state.
    fn step_on(&mut self, t: usize) -> (Option<usize>, Option<usize>) {
        let st = &mut self.state;
        let xt = self.train.x.row(st.index[t]);
        let ktt = kernel_value(xt, xt, &self.params.kernel);
        let new = (st.alpha[t] + st.grad[t] / ktt).clamp(st.lower[t], st.upper[t]);
        let step = new - st.alpha[t];
        st.alpha[t] = new;
        self.reprocess_steps += 1;
        if step == 0.0 {
            return self.state.extreme_pair();
        }
        let row = self.cache.row(
            st.index[t],
            &st.index,
            self.version,
            &self.train.x,
            &self.params.kernel,
        );
        let mut scan = PairScan::new();
        let n = st.grad.len();
        let (grad, alpha, lower, upper) = (
            &mut st.grad[..n],
            &st.alpha[..n],
            &st.lower[..n],
            &st.upper[..n],
        );
        for (k, &r) in row[..n].iter().enumerate() {
            let g = grad[k] - step * r;
            grad[k] = g;
            scan.visit(k, g, alpha[k], lower[k], upper[k]);
        }
        scan.finish()
    }

    /// REPROCESS: one maximal-violation coordinate step. Returns `true`
    /// (exit) when the active dual is τ-optimal or no coordinate can move.
    pub fn reprocess(&mut self, tau: f64) -> bool {
        match self.choose(self.state.extreme_pair(), tau) {
            Some(t) => {
                self.step_on(t);
                false
            }
            None => true,
        }
    }

    /// Repeated REPROCESS until exit or `budget` steps. Returns the number
    /// of steps taken and whether the exit condition was reached.
    pub fn settle(&mut self, tau: f64, budget: usize) -> (usize, bool) {
        let mut pair = self.state.extreme_pair();
        let mut steps = 0;
        loop {
            let Some(t) = self.choose(pair, tau) else {
                return (steps, true);
            };
            if steps == budget {
                return (steps, false);
            }
            pair = self.step_on(t);
            steps += 1;
        }
    }

    /// CLEAN: among positions with `α = 0`, remove all of them when there
    /// are at most `m`, otherwise the `m` with the largest gradient (or
    /// largest `|g|`). Returns the number removed.
    pub fn clean(&mut self, m: usize, by_abs: bool) -> usize {
        let mut zero: Vec<usize> = (0..self.state.len())
            .filter(|&k| self.state.alpha[k] == 0.0)
            .collect();
        if zero.is_empty() || m == 0 {
            return 0;
        }
        if zero.len() > m {
            let key = |k: usize| {
                let g = self.state.grad[k];
                if by_abs {
                    g.abs()
                } else {
                    g
                }
            };
            zero.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
            zero.truncate(m);
        }
        let mut keep = vec![true; self.state.len()];
        for &k in &zero {
            keep[k] = false;
            self.member[self.state.index[k]] = false;
            self.cache.forget(self.state.index[k]);
        }
        self.state.retain_positions(&keep);
        self.cache.compact(&keep, self.version, self.version + 1);
        self.version += 1;
        self.last_resets.clear();
        zero.len()
    }

    pub fn dual_objective(&self) -> f64 {
        dual_objective(&self.state, &self.params)
    }

    pub fn gradient_error(&self) -> f64 {
        self.state
            .gradient_error(&self.train.x, &self.params.kernel)
    }

    pub fn discriminant(&self) -> Discriminant {
        self.state.to_discriminant(self.train, &self.params)
    }

    fn progress(&self, round: usize) -> ProgressRecord {
        ProgressRecord {
            round,
            active: self.state.len(),
            eta_active: self.state.eta.iter().filter(|&&e| e).count(),
            violation: self.state.max_violation(),
            kernel_evaluations: self.kernel_evaluations(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub discriminant: Discriminant,
    /// Maximal KKT violation on the final active set.
    pub final_violation: f64,
    pub rounds: usize,
    pub reprocess_steps: u64,
    pub finishing_steps: usize,
    pub cleans: usize,
    pub removed: usize,
    pub active_set_size: usize,
    pub eta_active: usize,
    pub kernel_evaluations: u64,
    pub dual_objective: f64,
    pub progress: Vec<ProgressRecord>,
}

#[cfg(debug_assertions)]
const DEBUG_CHECK_EVERY: usize = 997;

/// Runs the online solver over the training set.
pub fn run(train: &TrainingSet, p: &ModelParams, cfg: &OnlineConfig) -> OnlineOutcome {
    let n = train.len();
    let mut set = ActiveSet::new(train, *p, cfg.cache_rows);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut progress = Vec::new();
    let (mut rounds, mut cleans, mut removed) = (0usize, 0usize, 0usize);
    let clean_period = cfg.clean_period.max(1);

    for _ in 0..cfg.epochs.max(1) {
        order.shuffle(&mut rng);
        for &i0 in &order {
            let new_pos = (!set.contains(i0)).then(|| set.insert(i0));
            let changed = set.update_eta(cfg.min_active);
            set.process(new_pos, &changed);
            set.settle(cfg.tau, usize::MAX);
            rounds += 1;
            if new_pos.is_some() && set.insertions().is_multiple_of(clean_period) {
                let r = set.clean(cfg.max_clean, cfg.clean_by_abs_gradient);
                cleans += 1;
                removed += r;
            }
            if let Some(every) = cfg.log_every {
                if every > 0 && rounds % every == 0 {
                    progress.push(set.progress(rounds));
                }
            }
            #[cfg(debug_assertions)]
            if rounds % DEBUG_CHECK_EVERY == 0 {
                let err = set.gradient_error();
                debug_assert!(err <= 1e-8, "gradient drift {err} at round {rounds}");
            }
        }
    }

    // finishing: one last η refresh without insertion, then REPROCESS
    let changed = set.update_eta(cfg.min_active);
    set.process(None, &changed);
    let budget = cfg.finishing_sweeps.unwrap_or(10 * set.len());
    let (finishing_steps, _) = set.settle(cfg.tau, budget);
    if cfg.log_every.is_some() {
        progress.push(set.progress(rounds));
    }

    OnlineOutcome {
        discriminant: set.discriminant(),
        final_violation: set.state.max_violation(),
        rounds,
        reprocess_steps: set.reprocess_steps(),
        finishing_steps,
        cleans,
        removed,
        active_set_size: set.len(),
        eta_active: set.state.eta.iter().filter(|&&e| e).count(),
        kernel_evaluations: set.kernel_evaluations(),
        dual_objective: set.dual_objective(),
        progress,
    }
}
