use csranker::batch::{brute_qp_oracle, cccp_solve, solve_inner_qp};
use csranker::dataset::{generate_synthetic, SynthSpec, DEFAULT_WEIGHTS};
use csranker::evaluation::{fdr_threshold, score_all};
use csranker::model::{dual_objective, primal_objective, DualState};
use csranker::online::{run, ActiveSet};
use csranker::{BatchConfig, Execution, KernelCache, ModelParams, OnlineConfig, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth_set(spec: SynthSpec) -> (csranker::Dataset, TrainingSet) {
    let seed = spec.seed;
    let d = generate_synthetic(&spec)
        .unwrap()
        .split_train_test((2, 1), seed)
        .unwrap()
        .normalize_and_weight(DEFAULT_WEIGHTS)
        .unwrap();
    let set = TrainingSet::from_dataset(&d).unwrap();
    (d, set)
}

fn params() -> ModelParams {
    ModelParams::new(2.0, 1.0, 0.5, 1.0).unwrap()
}

#[test]
fn coordinate_ascent_matches_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for inst in 0..50u64 {
        let n = rng.random_range(5..=30);
        let (_, set) = synth_set(SynthSpec::normal(n, n, 100 + inst));
        let c2 = rng.random_range(0.2..2.0);
        let c1 = c2 * rng.random_range(1.0..4.0);
        let p = ModelParams::new(c1, c2, c2 * rng.random_range(0.1..1.0), 1.0).unwrap();
        let mut st = DualState::full(&set, &p);
        for k in 0..st.len() {
            st.set_eta(k, rng.random_bool(0.3), &p);
        }
        let oracle = brute_qp_oracle(&st, &set.x, &p, 400_000);
        let mut cache = KernelCache::default();
        let mut order = ChaCha8Rng::seed_from_u64(inst);
        let r = solve_inner_qp(
            &mut st, &set.x, &p, &mut cache, 1e-10, 1_000_000, &mut order,
        );
        assert!(r.converged);
        assert!(st.is_feasible());
        let (g, go) = (dual_objective(&st, &p), dual_objective(&oracle, &p));
        assert!(
            (g - go).abs() / (1.0 + go.abs()) <= 1e-6,
            "instance {inst}: {g} vs {go}"
        );
        let da = st
            .alpha
            .iter()
            .zip(&oracle.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(da <= 1e-4, "instance {inst}: alpha gap {da}");
    }
}

#[test]
fn cccp_descends_to_eta_fixed_point() {
    for seed in 0..10 {
        let (_, set) = synth_set(SynthSpec::normal(150, 150, seed));
        let out = cccp_solve(&set, &params(), &BatchConfig::default());
        assert!(out.converged, "seed {seed}");
        assert!(out.outer_iterations <= 20);
        assert_eq!(*out.eta_flips.last().unwrap(), 0);
        for w in out.primal_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "seed {seed}: {:?}", out.primal_trace);
        }
        let j = primal_objective(&set, &out.discriminant, &params());
        let last = *out.primal_trace.last().unwrap();
        assert!((j - last).abs() <= 1e-8 * last.abs().max(1.0));
    }
}

#[test]
fn cccp_stops_after_two_solves_when_eta_never_flips() {
    // a huge lambda pushes s far below every margin
    let (_, set) = synth_set(SynthSpec::normal(40, 40, 3));
    let p = ModelParams::with_negative_s(2.0, 1.0, 50.0, 1.0).unwrap();
    let out = cccp_solve(&set, &p, &BatchConfig::default());
    assert!(out.converged);
    assert_eq!(out.outer_iterations, 2);
    assert_eq!(out.eta_flips, vec![0]);
}

#[test]
fn online_reaches_tau_kkt() {
    for seed in 0..3 {
        let (_, set) = synth_set(SynthSpec::normal(600, 600, seed));
        let cfg = OnlineConfig {
            seed,
            ..Default::default()
        };
        let out = run(&set, &params(), &cfg);
        assert!(
            out.final_violation <= cfg.tau,
            "seed {seed}: {}",
            out.final_violation
        );
    }
}

#[test]
fn online_is_deterministic() {
    let (_, set) = synth_set(SynthSpec::normal(300, 300, 9));
    let cfg = OnlineConfig {
        seed: 4,
        ..Default::default()
    };
    let a = run(&set, &params(), &cfg);
    let b = run(&set, &params(), &cfg);
    assert_eq!(a.discriminant, b.discriminant);
    assert_eq!(a.reprocess_steps, b.reprocess_steps);
}

#[test]
fn online_and_batch_accept_similar_counts() {
    let (d, set) = synth_set(SynthSpec::normal(1500, 1500, 1));
    let on = run(&set, &params(), &OnlineConfig::default());
    let ba = cccp_solve(&set, &params(), &BatchConfig::default());
    let a = fdr_threshold(&score_all(&d, &on.discriminant), 0.05)
        .unwrap()
        .accepted_targets as f64;
    let b = fdr_threshold(&score_all(&d, &ba.discriminant), 0.05)
        .unwrap()
        .accepted_targets as f64;
    assert!((a - b).abs() / b <= 0.02, "online {a} batch {b}");
}

#[test]
fn single_decoy_online() {
    let set = TrainingSet {
        x: csranker::FeatureMatrix::from_rows(9, [[1.0; 9]]),
        y: vec![-1.0],
        record: vec![0],
        normalization: None,
    };
    let p = ModelParams::new(0.5, 0.5, 0.25, 1.0).unwrap();
    let out = run(&set, &p, &OnlineConfig::default());
    assert_eq!(out.rounds, 1);
    assert_eq!(out.discriminant.alpha, vec![-0.5]);
}

#[test]
fn clean_leaves_discriminant_unchanged() {
    let (_, set) = synth_set(SynthSpec::normal(200, 200, 5));
    let p = params();
    let mut a = ActiveSet::new(&set, p, 64);
    for i in 0..150 {
        let pos = a.insert(i);
        let changed = a.update_eta(20);
        a.process(Some(pos), &changed);
        a.settle(1e-3, usize::MAX);
    }
    let probes = csranker::FeatureMatrix::from_rows(9, (150..200).map(|i| set.x.row(i).to_vec()));
    let before = a
        .discriminant()
        .evaluate_all(&probes, Execution::Sequential);
    let zeros = a.state().alpha.iter().filter(|&&v| v == 0.0).count();
    assert!(zeros > 0);
    let removed = a.clean(usize::MAX, false);
    assert_eq!(removed, zeros);
    let after = a
        .discriminant()
        .evaluate_all(&probes, Execution::Sequential);
    for (x, y) in before.iter().zip(&after) {
        assert!((x - y).abs() <= 1e-12);
    }
    assert!(a.gradient_error() <= 1e-8);
}

#[test]
fn clean_removes_at_most_m_largest_gradients() {
    let (_, set) = synth_set(SynthSpec::normal(100, 100, 6));
    let mut a = ActiveSet::new(&set, params(), 64);
    for i in 0..3 {
        let pos = a.insert(i);
        a.process(Some(pos), &[]);
    }
    // three zero coefficients, m = 5: all go
    assert_eq!(a.clean(5, false), 3);
    assert!(a.is_empty());

    for i in 0..40 {
        let pos = a.insert(i);
        a.process(Some(pos), &[]);
    }
    let mut grads: Vec<f64> = a.state().grad.clone();
    grads.sort_by(|x, y| y.total_cmp(x));
    let cutoff = grads[9];
    assert_eq!(a.clean(10, false), 10);
    assert_eq!(a.len(), 30);
    assert!(a.state().grad.iter().all(|&g| g <= cutoff));
}

/// Random interleaving of insertion rounds, single REPROCESS steps and
/// CLEAN calls; checks gradients against full recomputation at random
/// checkpoints, feasibility after every step, and dual ascent within each
/// fixed-η stretch.
fn fuzz(steps: usize, checkpoints: usize, seed: u64) -> f64 {
    let (_, set) = synth_set(SynthSpec::normal(250, 250, seed));
    let p = ModelParams::new(2.0, 1.0, 0.4, 1.0).unwrap();
    let mut a = ActiveSet::new(&set, p, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check_at: Vec<usize> = (0..checkpoints)
        .map(|_| rng.random_range(0..steps))
        .collect();
    check_at.sort_unstable();
    let mut next = 0;
    let mut worst: f64 = 0.0;
    let mut last_g = f64::NEG_INFINITY;
    for step in 0..steps {
        let roll: f64 = rng.random();
        if roll < 0.2 || a.is_empty() {
            let free: Vec<usize> = (0..set.len()).filter(|&i| !a.contains(i)).collect();
            if let Some(&i) = free.get(rng.random_range(0..free.len().max(1))) {
                let pos = a.insert(i);
                let changed = a.update_eta(30);
                a.process(Some(pos), &changed);
            }
            last_g = f64::NEG_INFINITY;
        } else if roll < 0.97 {
            a.reprocess(1e-3);
            let g = a.dual_objective();
            assert!(
                g >= last_g - 1e-9 * g.abs().max(1.0),
                "dual decreased at step {step}"
            );
            last_g = g;
        } else {
            a.clean(rng.random_range(0..50), rng.random_bool(0.5));
            last_g = a.dual_objective();
        }
        assert!(a.state().is_feasible(), "infeasible at step {step}");
        while next < check_at.len() && check_at[next] == step {
            worst = worst.max(a.gradient_error());
            next += 1;
        }
    }
    worst
}

#[test]
fn incremental_gradients_survive_random_operations() {
    let worst = fuzz(20_000, 40, 11);
    assert!(worst <= 1e-8, "worst gradient error {worst}");
}
