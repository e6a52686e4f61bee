//! Ten acceptance checks covering the whole pipeline, one test per
//! criterion. Every test prints exactly one `criterion NN PASS/FAIL` line
//! with the measured values and pinned tolerances; run with
//! `cargo test -p airgrad-cli --test acceptance -- --nocapture` to see the
//! lines for passing criteria too.
//!
//! Criteria 1–3, 8, and 9 share one expensive fixture: a generated
//! 60×60 world with 260 stations and a known exponential dispersion
//! kernel (λ = 40 km, observation noise 5% of the mean concentration),
//! plus a model found by a small grid search and retrained on the winner,
//! all on a single worker thread so the runtime bound is honest.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use airgrad_core::grid::{
    compute_station_weights, extract_window, normalize_stack, split_dataset, ChannelId, GridStack,
    World, NUM_CHANNELS,
};
use airgrad_core::health::{
    curtailment_sweep, damage_by_distance, hazard_ratio, marginal_damage_field, mean_inverse_rr,
    theta_draws, total_damage, vsl, DemographyTable, EmissionFactors, GemmParams, VslConfig,
};
use airgrad_core::model::{build_model, ChannelStats, HyperParams, ResCnn};
use airgrad_core::nn::{Mode, ParamSet};
use airgrad_core::rng::stream;
use airgrad_core::synth::{
    generate_world, oracle_concentration, oracle_damage_field, set_station_observations,
    GenConfig, OracleKernel, ADULT_AGE_SHARES,
};
use airgrad_core::tensor::Tensor;
use airgrad_core::train::{
    build_samples, evaluate, grid_search_with, predict_subset, prune_space, random_search_with,
    train_model, EvalMetrics, PruneConfig, SampleSet, SearchSpace, TrialContext,
};
use rand::Rng;

const WORLD_SEED: u64 = 3301;
const SPLIT_SEED: u64 = 17;
const TRAIN_SEED: u64 = 23;
const SEARCH_SEED: u64 = 4242;
const HALF_EXTENT: usize = 10;

/// Adult all-cause yearly mortality rates for the twelve age groups,
/// matching the bundled demography fixture.
const MORTALITY: [f64; 12] = [
    0.00082, 0.00105, 0.00146, 0.00213, 0.00322, 0.00506, 0.00778, 0.01243, 0.02015, 0.03388,
    0.05899, 0.13756,
];

fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:02} {verdict} - {detail}");
    assert!(pass, "criterion {id:02} failed: {detail}");
}

fn demography() -> DemographyTable {
    DemographyTable::new(MORTALITY, ADULT_AGE_SHARES).unwrap()
}

fn factors() -> EmissionFactors {
    EmissionFactors {
        rrc: 2.66,
        idc: 2.66,
        ido: 2.10,
        svc: 2.66,
        trn: 2.10,
    }
}

fn emission_sectors() -> Vec<ChannelId> {
    ChannelId::ALL
        .into_iter()
        .filter(|c| c.is_emission())
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

// ---------------------------------------------------------------------------
// Shared oracle-world fixture
// ---------------------------------------------------------------------------

struct Fixture {
    world: World,
    kernel: OracleKernel,
    weights: Vec<f64>,
    samples: SampleSet,
    hyper: HyperParams,
    state: Vec<(String, Tensor)>,
    stats: ChannelStats,
    test_metrics: EvalMetrics,
    /// Wall time of the search-plus-train stage on one worker thread.
    elapsed_secs: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(build_fixture)
}

/// Rebuilds the trained model from the stored weights; tests mutate their
/// own copy because forward passes cache activations.
fn fixture_model(fx: &Fixture) -> ResCnn {
    let mut model = build_model(&fx.hyper, 0).unwrap();
    model.load_state(&fx.state).unwrap();
    model.set_stats(fx.stats.clone());
    model
}

fn build_fixture() -> Fixture {
    let gen = GenConfig::default(); // 60x60 cells, 10 km, 260 stations
    let mut kernel = OracleKernel {
        lambda_km: 40.0,
        noise_std: 0.0,
        ..OracleKernel::default()
    };
    let mut world = generate_world(WORLD_SEED, &gen, &kernel).unwrap();
    // Observation noise: 5% of the mean noiseless station concentration.
    let mean_c =
        world.stations.iter().map(|s| s.pm25).sum::<f64>() / world.stations.len() as f64;
    kernel.noise_std = 0.05 * mean_c;
    set_station_observations(&mut world, &kernel).unwrap();

    let split = split_dataset(world.stations.len(), SPLIT_SEED).unwrap();
    let weights = compute_station_weights(&world).unwrap();
    let samples = build_samples(&world, HALF_EXTENT).unwrap();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let started = Instant::now();
    let (hyper, state, stats) = pool.install(|| {
        // A small architectural grid; each candidate trains briefly and is
        // scored by weighted validation error, then the winner retrains
        // with a longer budget.
        let space = SearchSpace {
            iterations: vec![120],
            batch_size: vec![64],
            conv_layers: vec![1, 2],
            filters: vec![20],
            conv_kernel: vec![3, 5],
            conv_stride: vec![2],
            pool_kernel: vec![2],
            pool_stride: vec![2],
            dropout: vec![false],
            dropout_rate: vec![0.1],
            batchnorm: vec![true],
            fc_layers: vec![1],
            fc_width: vec![100],
            augment: vec![false],
            augment_noise: vec![0.05],
            learning_rate: vec![1e-3],
            half_extent: vec![HALF_EXTENT],
        };
        let ctx = TrialContext {
            world: &world,
            split: &split,
            weights: &weights,
        };
        let (best, _trials) =
            grid_search_with(&space, SEARCH_SEED, |_, h, seed| ctx.run_trial(h, seed)).unwrap();
        let mut hyper = space.nth(best).unwrap();
        hyper.iterations = 400;
        let mut model = build_model(&hyper, TRAIN_SEED).unwrap();
        train_model(&mut model, &samples, &split.train, &weights, TRAIN_SEED).unwrap();
        (hyper, model.state(), model.stats().unwrap().clone())
    });
    let elapsed_secs = started.elapsed().as_secs_f64();

    let mut model = build_model(&hyper, 0).unwrap();
    model.load_state(&state).unwrap();
    model.set_stats(stats.clone());
    let preds = predict_subset(&mut model, &samples, &split.test).unwrap();
    let targets: Vec<f64> = split.test.iter().map(|i| samples.targets[*i]).collect();
    let w: Vec<f64> = split.test.iter().map(|i| weights[*i]).collect();
    let test_metrics = evaluate(&targets, &preds, &w).unwrap();

    Fixture {
        world,
        kernel,
        weights,
        samples,
        hyper,
        state,
        stats,
        test_metrics,
        elapsed_secs,
    }
}

// ---------------------------------------------------------------------------
// 1. Oracle fit
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_oracle_fit() {
    let fx = fixture();
    let m = &fx.test_metrics;
    let pass = m.r2 >= 0.85 && m.pearson >= 0.9 && fx.elapsed_secs <= 600.0;
    report(
        1,
        pass,
        &format!(
            "weighted test R2={:.3} (>=0.85), rho={:.3} (>=0.90), \
             search+train {:.1}s on one worker (<=600s), {} stations",
            m.r2,
            m.pearson,
            fx.elapsed_secs,
            fx.world.stations.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Gradient fidelity
// ---------------------------------------------------------------------------

/// Eval-mode prediction for one raw window, running the full path: per-window
/// normalization, both branches, channel-mean standardization.
fn predict_raw(model: &mut ResCnn, stack: &GridStack) -> f64 {
    let norm = normalize_stack(stack);
    let size = stack.size;
    let x = norm
        .data
        .clone()
        .reshaped(&[1, NUM_CHANNELS, size, size])
        .unwrap();
    model
        .predict_batch(&x, &[stack.channel_means()], Mode::Eval)
        .unwrap()[0]
        .combined
}

fn bump_param(model: &mut ResCnn, name: &str, entry: usize, delta: f64) {
    model.visit_params(&mut |slot| {
        if slot.name == name {
            slot.value.data_mut()[entry] += delta;
        }
    });
}

fn batch_sum(model: &mut ResCnn, x: &Tensor, means: &[[f64; NUM_CHANNELS]], mode: Mode) -> f64 {
    model
        .predict_batch(x, means, mode)
        .unwrap()
        .iter()
        .map(|p| p.combined)
        .sum()
}

/// Worst relative error between analytic and central-difference parameter
/// gradients, per layer, through a fresh two-block model.
fn per_layer_fd(mode: Mode) -> BTreeMap<String, f64> {
    let hyper = HyperParams {
        iterations: 1,
        batch_size: 3,
        conv_layers: 2,
        filters: 6,
        conv_kernel: 3,
        conv_stride: 2,
        pool_kernel: 2,
        pool_stride: 2,
        dropout: false,
        dropout_rate: 0.1,
        batchnorm: true,
        fc_layers: 2,
        fc_width: 13,
        augment: false,
        augment_noise: 0.05,
        learning_rate: 1e-3,
        half_extent: HALF_EXTENT,
    };
    let mut model = build_model(&hyper, 55).unwrap();
    model.set_stats(ChannelStats {
        mean: [0.4; NUM_CHANNELS],
        std: [1.3; NUM_CHANNELS],
    });
    let size = hyper.window_size();
    let batch = 3usize;
    let mut rng = stream(
        2024,
        "layer-fd",
        match mode {
            Mode::Train => 0,
            Mode::Eval => 1,
        },
    );
    let x = Tensor::from_vec(
        &[batch, NUM_CHANNELS, size, size],
        (0..batch * NUM_CHANNELS * size * size)
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect(),
    )
    .unwrap();
    let means: Vec<[f64; NUM_CHANNELS]> = (0..batch)
        .map(|_| {
            let mut m = [0.0; NUM_CHANNELS];
            for v in &mut m {
                *v = rng.gen_range(-1.0..1.0);
            }
            m
        })
        .collect();

    // One forward-backward with dJ/dy = 1 per sample gives dJ/dparam for
    // J = sum of predictions.
    let _ = batch_sum(&mut model, &x, &means, mode);
    model.backward(&vec![1.0; batch]).unwrap();
    let mut params: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |slot| {
        params.push((
            slot.name.to_string(),
            slot.value.data().to_vec(),
            slot.grad.data().to_vec(),
        ));
    });

    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for (name, values, grads) in &params {
        let layer = name.split('.').next().unwrap().to_string();
        for e in 0..values.len() {
            let h = 1e-5 * values[e].abs().max(1.0);
            bump_param(&mut model, name, e, h);
            let plus = batch_sum(&mut model, &x, &means, mode);
            bump_param(&mut model, name, e, -2.0 * h);
            let minus = batch_sum(&mut model, &x, &means, mode);
            bump_param(&mut model, name, e, h);
            let fd = (plus - minus) / (2.0 * h);
            let an = grads[e];
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
            let w = worst.entry(layer.clone()).or_insert(0.0);
            if rel > *w {
                *w = rel;
            }
        }
    }
    worst
}

#[test]
fn criterion_02_gradient_fidelity() {
    let fx = fixture();
    let mut model = fixture_model(fx);

    // End-to-end: analytic raw-window gradients against central finite
    // differences at random (station, channel, cell) probes. The network is
    // piecewise linear, so a central difference is exact whenever the step
    // stays inside one linear region; a mismatch therefore means either a
    // straddled ReLU/argmax boundary or a wrong analytic gradient. Shrinking
    // the step separates the two: a straddle heals, a bug never does.
    let mut rng = stream(1234, "probe", 0);
    let size = 2 * HALF_EXTENT + 1;
    let mut probes = 0usize;
    let mut worst_probe = 0.0f64;
    while probes < 120 {
        let s = rng.gen_range(0..fx.world.stations.len());
        let k = rng.gen_range(0..NUM_CHANNELS);
        let i = rng.gen_range(0..size);
        let j = rng.gen_range(0..size);
        let norm = &fx.samples.norms[s];
        if norm.degenerate[k] {
            continue; // a constant channel has no defined window gradient
        }
        let grad = model.input_gradient(norm).unwrap();
        let an = grad.at3(k, i, j);
        let gmax = grad.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if an.abs() < 1e-6 * gmax {
            continue; // near-zero slope leaves no relative scale to compare
        }
        let mut stack = extract_window(&fx.world, &fx.world.stations[s], HALF_EXTENT).unwrap();
        let x0 = stack.data.at3(k, i, j);
        let f0 = predict_raw(&mut model, &stack);
        // Large enough that the smallest retry step still lifts the secant
        // well above f64 cancellation, small enough to usually stay within
        // one linear region.
        let h0 = (1e-3 * norm.stds[k].max(x0.abs()))
            .max(1e-6 * f0.abs().max(1.0) / an.abs());
        let mut best = f64::INFINITY;
        let mut fd_best = f64::NAN;
        for div in [1.0, 8.0, 64.0] {
            let h = h0 / div;
            *stack.data.at3_mut(k, i, j) = x0 + h;
            let plus = predict_raw(&mut model, &stack);
            *stack.data.at3_mut(k, i, j) = x0 - h;
            let minus = predict_raw(&mut model, &stack);
            *stack.data.at3_mut(k, i, j) = x0;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - an).abs() / an.abs().max(fd.abs());
            if rel < best {
                best = rel;
                fd_best = fd;
            }
            if best < 1e-4 {
                break;
            }
        }
        assert!(
            best < 1e-4,
            "probe {probes}: station {s} channel {k} cell ({i},{j}): \
             analytic {an:.6e} vs finite difference {fd_best:.6e} (rel {best:.2e})"
        );
        if best > worst_probe {
            worst_probe = best;
        }
        probes += 1;
    }

    // Per-layer: every parameter gradient of a conv/batchnorm/pool/dense
    // stack against finite differences, in both forward modes.
    let mut worst_layer = 0.0f64;
    let mut worst_name = String::new();
    for mode in [Mode::Eval, Mode::Train] {
        for (layer, rel) in per_layer_fd(mode) {
            if rel > worst_layer {
                worst_layer = rel;
                worst_name = format!("{layer} ({mode:?})");
            }
        }
    }

    let pass = worst_layer < 1e-6;
    report(
        2,
        pass,
        &format!(
            "120 raw-window probes rel<1e-4 (worst {worst_probe:.2e}); \
             per-layer FD worst {worst_layer:.2e} at {worst_name} (<1e-6)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Marginal-damage recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_marginal_damage_recovery() {
    let fx = fixture();
    let mut model = fixture_model(fx);
    let demog = demography();
    let gemm = GemmParams::default();
    let value = vsl(&VslConfig::default()).unwrap();
    let fac = factors();

    let mut lines = Vec::new();
    let mut min_r = f64::INFINITY;
    for sector in emission_sectors() {
        let field =
            marginal_damage_field(&mut model, &fx.world, sector, &demog, &gemm, value, &fac, false)
                .unwrap();
        let oracle = oracle_damage_field(
            &fx.world,
            &fx.kernel,
            sector,
            HALF_EXTENT,
            &demog,
            &gemm,
            value,
            &fac,
        )
        .unwrap();
        assert_eq!(field.covered, oracle.covered, "coverage must agree");
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for idx in 0..field.md.len() {
            if field.covered[idx] {
                xs.push(field.md[idx]);
                ys.push(oracle.md[idx]);
            }
        }
        let r = pearson(&xs, &ys);
        min_r = min_r.min(r);
        lines.push(format!("{}={r:.3}", sector.name()));
    }
    let pass = min_r >= 0.7;
    report(
        3,
        pass,
        &format!(
            "model vs oracle marginal-damage correlation over covered cells: {} (all >=0.70)",
            lines.join(", ")
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Hazard-curve closed form vs Monte Carlo
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_hazard_closed_form_vs_monte_carlo() {
    let gemm = GemmParams::default();
    let points = [
        0.5, 1.5, 2.4, 3.0, 4.0, 6.0, 8.0, 10.0, 12.5, 15.5, 20.0, 25.0, 30.0, 35.0, 45.0, 60.0,
        75.0, 90.0, 110.0, 140.0,
    ];
    let draws = theta_draws(&gemm, 100_000, 909).unwrap();
    let mut worst_z = 0.0f64;
    for &c in &points {
        let closed = mean_inverse_rr(c, &gemm);
        let inv: Vec<f64> = draws.iter().map(|&t| 1.0 / hazard_ratio(c, &gemm, t)).collect();
        let n = inv.len() as f64;
        let mean = inv.iter().sum::<f64>() / n;
        let var = inv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let diff = (closed - mean).abs();
        assert!(
            diff <= 3.0 * se + 1e-15,
            "c={c}: closed {closed} vs Monte Carlo {mean} (diff {diff:.3e}, se {se:.3e})"
        );
        if se > 0.0 {
            worst_z = worst_z.max(diff / se);
        }
    }

    // Zero parameter spread collapses the expectation to 1/RR exactly.
    let frozen = GemmParams {
        theta_sd: 0.0,
        ..GemmParams::default()
    };
    let mut worst_abs = 0.0f64;
    for &c in &points {
        let diff =
            (mean_inverse_rr(c, &frozen) - 1.0 / hazard_ratio(c, &frozen, frozen.theta_mean)).abs();
        worst_abs = worst_abs.max(diff);
    }
    let pass = worst_abs < 1e-12;
    report(
        4,
        pass,
        &format!(
            "closed form within 3 SE of 1e5-draw Monte Carlo at 20 points \
             (worst {worst_z:.2} SE); sd=0 collapse worst abs {worst_abs:.2e} (<1e-12)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Value-of-statistical-life transfer
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_vsl_transfer() {
    let v = vsl(&VslConfig::default()).unwrap();
    let frozen = 1_823_972.693_875_565_2;
    let pass = (v - 1.8e6).abs() <= 0.05e6 && (v - frozen).abs() < 1e-6;
    report(
        5,
        pass,
        &format!("transferred VSL = {v:.2} USD (1.8M +/- 0.05M; frozen {frozen:.2})"),
    );
}

// ---------------------------------------------------------------------------
// 6. Search-protocol fidelity
// ---------------------------------------------------------------------------

/// How many dimensions of a sampled configuration fall outside the value
/// sets the pruned grid should keep.
fn off_target(h: &HyperParams) -> usize {
    let mut n = 0;
    if h.iterations != 500 {
        n += 1;
    }
    if h.batch_size != 200 {
        n += 1;
    }
    if h.conv_layers > 2 {
        n += 1;
    }
    if ![20, 50, 80].contains(&h.filters) {
        n += 1;
    }
    if h.conv_kernel > 3 {
        n += 1;
    }
    if h.conv_stride != 2 {
        n += 1;
    }
    if h.pool_kernel != 2 {
        n += 1;
    }
    if h.pool_stride != 2 {
        n += 1;
    }
    if h.dropout_rate != 0.1 {
        n += 1;
    }
    if h.fc_layers > 2 {
        n += 1;
    }
    if h.fc_width != 200 {
        n += 1;
    }
    if h.augment_noise > 0.1 {
        n += 1;
    }
    n
}

fn target_space() -> SearchSpace {
    SearchSpace {
        iterations: vec![500],
        batch_size: vec![200],
        conv_layers: vec![1, 2],
        filters: vec![20, 50, 80],
        conv_kernel: vec![2, 3],
        conv_stride: vec![2],
        pool_kernel: vec![2],
        pool_stride: vec![2],
        dropout: vec![true, false],
        dropout_rate: vec![0.1],
        batchnorm: vec![true, false],
        fc_layers: vec![1, 2],
        fc_width: vec![200],
        augment: vec![true, false],
        augment_noise: vec![0.05, 0.1],
        learning_rate: vec![1e-3],
        half_extent: vec![10],
    }
}

#[test]
fn criterion_06_search_protocol() {
    // A synthetic objective that charges a fixed penalty per off-target
    // dimension; with enough random trials, pruning by mean and variance
    // must recover exactly the target value sets.
    let full = SearchSpace::default();
    let trials =
        random_search_with(&full, 4000, 616_161, |_, h, _| Ok(1000.0 * off_target(h) as f64))
            .unwrap();
    let pruned = prune_space(&full, &trials, &PruneConfig::default()).unwrap();
    assert_eq!(pruned.space, target_space(), "pruned value sets");
    assert_eq!(pruned.space.cardinality(), 384);

    // Enumeration covers 384 distinct in-set combinations...
    let mut seen = HashSet::new();
    for i in 0..384 {
        let h = pruned.space.nth(i).unwrap();
        assert_eq!(off_target(&h), 0, "combination {i} outside the value sets");
        assert!(seen.insert(format!("{h:?}")), "combination {i} repeated");
    }

    // ...and grid search evaluates each exactly once.
    let visits = Mutex::new(vec![0u32; 384]);
    let (_best, grid_trials) = grid_search_with(&pruned.space, 7, |i, _, _| {
        visits.lock().unwrap()[i] += 1;
        Ok(i as f64)
    })
    .unwrap();
    let visits = visits.into_inner().unwrap();
    let pass = grid_trials.len() == 384 && visits.iter().all(|v| *v == 1);
    report(
        6,
        pass,
        &format!(
            "pruning kept exactly the target value sets ({} combinations, {} dropped values); \
             grid enumeration visited each combination once",
            pruned.space.cardinality(),
            pruned.dropped.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Metric identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_metric_identities() {
    // Perfect predictions.
    let t = [3.0, 7.0, 11.0, 19.0];
    let m = evaluate(&t, &t, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(m.mfb, 0.0);
    assert_eq!(m.mfe, 0.0);
    assert_eq!(m.mpe, 0.0);
    assert!((m.pearson - 1.0).abs() < 1e-12);
    assert!((m.r2 - 1.0).abs() < 1e-12);

    // Hand-computed two-station fixture.
    let m = evaluate(&[10.0, 20.0], &[12.0, 18.0], &[1.0, 1.0]).unwrap();
    let checks = [
        (m.mfb, -8.0 / 209.0, "MFB"),
        (m.mfe, 30.0 / 209.0, "MFE"),
        (m.mpe, 5.0 / 36.0, "MPE"),
        (m.pearson, 1.0, "rho"),
        (m.r2, 0.84, "R2"),
    ];
    let mut worst = 0.0f64;
    for (got, want, name) in checks {
        let diff = (got - want).abs();
        assert!(diff <= 1e-9, "{name}: got {got}, frozen {want}");
        worst = worst.max(diff);
    }

    // MFE dominates |MFB| on random fixtures.
    let mut rng = stream(909, "metric-fixture", 0);
    let mut holds = true;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=40);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..100.0)).collect();
        let preds: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..100.0)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let m = evaluate(&targets, &preds, &weights).unwrap();
        holds &= m.mfe + 1e-12 >= m.mfb.abs();
    }
    report(
        7,
        holds,
        &format!(
            "perfect-prediction identities exact; two-station fixture within 1e-9 \
             (worst {worst:.2e}); MFE >= |MFB| on 1000 random fixtures"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Scenario behaviour
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_scenario_behaviour() {
    let fx = fixture();
    let mut model = fixture_model(fx);
    let fractions: Vec<f64> = (0..=10).map(|i| i as f64 * 0.02).collect();
    let (_baseline, rows) = curtailment_sweep(
        &mut model,
        &fx.world,
        ChannelId::Idc,
        &fractions,
        &demography(),
        &GemmParams::default(),
        &fx.weights,
        500,
        1313,
        0.95,
    )
    .unwrap();
    assert_eq!(rows.len(), fractions.len());
    assert_eq!(rows[0].avoided.mean, 0.0, "no curtailment, no avoided deaths");
    let mut increasing = true;
    for pair in rows.windows(2) {
        increasing &= pair[1].avoided.mean > pair[0].avoided.mean;
    }
    let xs: Vec<f64> = rows[1..].iter().map(|r| r.fraction).collect();
    let ys: Vec<f64> = rows[1..].iter().map(|r| r.avoided.mean).collect();
    let r2 = pearson(&xs, &ys).powi(2);
    let pass = increasing && r2 >= 0.98;
    report(
        8,
        pass,
        &format!(
            "avoided deaths: 0.0 at p=0, strictly increasing to {:.1} at p=0.20, \
             linear-fit R2={r2:.4} (>=0.98)",
            ys.last().unwrap()
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Distance closure
// ---------------------------------------------------------------------------

/// Cumulative oracle-world damage by Chebyshev window edge, evaluated from
/// the analytic kernel (marginal `beta * exp(-d/lambda)` on every window
/// cell, valued through the hazard curve).
fn oracle_distance_curve(
    world: &World,
    kernel: &OracleKernel,
    sector: ChannelId,
    edges: &[usize],
    demog: &DemographyTable,
    gemm: &GemmParams,
    vsl_usd: f64,
) -> Vec<f64> {
    let pops = demog.station_populations(world).unwrap();
    let h = HALF_EXTENT as i64;
    let beta = kernel.beta[sector.index()];
    let mut ring = vec![0.0; HALF_EXTENT + 1]; // indexed by Chebyshev radius
    for (n, station) in world.stations.iter().enumerate() {
        let c0 = oracle_concentration(world, station, kernel).unwrap();
        let base = mean_inverse_rr(c0, gemm);
        let deaths_weight: f64 = demog
            .mortality
            .iter()
            .zip(&pops[n])
            .map(|(m, p)| m * p)
            .sum();
        for di in -h..=h {
            for dj in -h..=h {
                let (r, c) = (station.row as i64 + di, station.col as i64 + dj);
                if !world.in_bounds(r, c) {
                    continue;
                }
                let d = world.cell_km * ((di * di + dj * dj) as f64).sqrt();
                let g = beta * (-d / kernel.lambda_km).exp();
                let dm = deaths_weight * (mean_inverse_rr(c0 + g, gemm) - base);
                let x = world.value(sector, r as usize, c as usize);
                let cheb = di.abs().max(dj.abs()) as usize;
                ring[cheb] += -vsl_usd * dm * x;
            }
        }
    }
    let mut cum = 0.0;
    let mut by_radius = vec![0.0; HALF_EXTENT + 1];
    for (radius, v) in ring.iter().enumerate() {
        cum += v;
        by_radius[radius] = cum;
    }
    edges.iter().map(|e| by_radius[(e - 1) / 2]).collect()
}

#[test]
fn criterion_09_distance_closure() {
    let fx = fixture();
    let demog = demography();
    let gemm = GemmParams::default();
    let value = vsl(&VslConfig::default()).unwrap();
    let fac = factors();
    let full_edge = 2 * HALF_EXTENT + 1; // 21
    let center_edge = full_edge / 3; // the central one-ninth-area sub-square: 7

    // (a) The widest distance restriction reproduces the unrestricted total.
    let mut model = fixture_model(fx);
    let mut worst_rel = 0.0f64;
    for sector in emission_sectors() {
        let field =
            marginal_damage_field(&mut model, &fx.world, sector, &demog, &gemm, value, &fac, false)
                .unwrap();
        let total = total_damage(&field, &fx.world, None).unwrap().total;
        let curve = damage_by_distance(
            &mut model,
            &fx.world,
            sector,
            &[full_edge],
            &demog,
            &gemm,
            value,
            &fac,
        )
        .unwrap();
        let rel = (curve[0].1 - total).abs() / total.abs().max(1.0);
        assert!(
            rel <= 1e-9,
            "{}: full-window curve {} vs total {}",
            sector.name(),
            curve[0].1,
            total
        );
        worst_rel = worst_rel.max(rel);
    }

    // (b) The oracle-world curve is monotone and center-heavy (lambda 40 km
    // <= 60 km).
    let edges: Vec<usize> = (0..=HALF_EXTENT).map(|r| 2 * r + 1).collect();
    let mut min_center_fraction = f64::INFINITY;
    for sector in emission_sectors() {
        let curve = oracle_distance_curve(
            &fx.world, &fx.kernel, sector, &edges, &demog, &gemm, value,
        );
        let widest = *curve.last().unwrap();
        // Cross-check the manual accumulation against the damage-field path.
        let field = oracle_damage_field(
            &fx.world, &fx.kernel, sector, HALF_EXTENT, &demog, &gemm, value, &fac,
        )
        .unwrap();
        let total = total_damage(&field, &fx.world, None).unwrap().total;
        assert!(
            (widest - total).abs() <= 1e-9 * total.abs().max(1.0),
            "{}: manual widest {widest} vs field total {total}",
            sector.name()
        );
        for pair in curve.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-9 * widest.abs(),
                "{}: cumulative damage decreased: {pair:?}",
                sector.name()
            );
        }
        let fraction = curve[(center_edge - 1) / 2] / widest;
        min_center_fraction = min_center_fraction.min(fraction);
    }
    let pass = min_center_fraction > 0.5;
    report(
        9,
        pass,
        &format!(
            "full-window curve equals total damage (worst rel {worst_rel:.1e} <= 1e-9); \
             oracle curve monotone, central {center_edge}x{center_edge} of {full_edge}x{full_edge} \
             holds {:.0}% of damage in the worst sector (>50%)",
            100.0 * min_center_fraction
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_airgrad"))
        .args(args)
        .output()
        .expect("run airgrad");
    assert!(
        out.status.success(),
        "airgrad {:?} failed:\n{}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// All files under a run directory keyed by relative path, excluding the
/// manifest (whose wall-clock timings are the one documented exception to
/// byte-level reproducibility).
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().unwrap() != "manifest.json" {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn assert_identical(a: &Path, b: &Path, what: &str) {
    let ta = tree(a);
    let tb = tree(b);
    assert_eq!(
        ta.keys().collect::<Vec<_>>(),
        tb.keys().collect::<Vec<_>>(),
        "{what}: differing file sets"
    );
    for (name, bytes) in &ta {
        assert_eq!(bytes, &tb[name], "{what}: {name} differs between reruns");
    }
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = |name: &str| root.join(name).display().to_string();

    std::fs::write(
        root.join("gen.toml"),
        "seed = 4040\n\
         regions = 4\n\n\
         [world]\n\
         rows = 16\n\
         cols = 16\n\
         cell_km = 10.0\n\
         n_stations = 24\n\
         n_cities = 5\n\
         n_clusters = 3\n\
         emission_totals = [20000.0, 400000.0, 60000.0, 25000.0, 90000.0]\n\
         population_total = 2000000.0\n\n\
         [kernel]\n\
         lambda_km = 40.0\n\
         noise_std = 0.8\n",
    )
    .unwrap();
    std::fs::write(
        root.join("train.toml"),
        format!(
            "world_dir = \"{}\"\n\
             split_seed = 17\n\
             train_seed = 23\n\n\
             [hyper]\n\
             iterations = 40\n\
             batch_size = 16\n\
             conv_layers = 1\n\
             filters = 8\n\
             conv_kernel = 3\n\
             conv_stride = 2\n\
             pool_kernel = 2\n\
             pool_stride = 2\n\
             dropout = false\n\
             dropout_rate = 0.1\n\
             batchnorm = true\n\
             fc_layers = 1\n\
             fc_width = 20\n\
             augment = true\n\
             augment_noise = 0.05\n\
             learning_rate = 0.001\n\
             half_extent = 3\n",
            p("w1")
        ),
    )
    .unwrap();
    std::fs::write(
        root.join("search.toml"),
        format!(
            "world_dir = \"{}\"\n\
             split_seed = 17\n\
             master_seed = 29\n\
             trials = 4\n\
             then_grid = true\n\n\
             [space]\n\
             iterations = [12]\n\
             batch_size = [16]\n\
             conv_layers = [0, 1]\n\
             filters = [8]\n\
             conv_kernel = [3]\n\
             conv_stride = [2]\n\
             pool_kernel = [2]\n\
             pool_stride = [2]\n\
             dropout = [false]\n\
             dropout_rate = [0.1]\n\
             batchnorm = [true]\n\
             fc_layers = [1]\n\
             fc_width = [20]\n\
             augment = [false]\n\
             augment_noise = [0.05]\n\
             learning_rate = [0.001]\n\
             half_extent = [3]\n",
            p("w1")
        ),
    )
    .unwrap();
    std::fs::write(
        root.join("evaluate.toml"),
        format!("world_dir = \"{}\"\nmodel_dir = \"{}\"\n", p("w1"), p("t1/model")),
    )
    .unwrap();
    let mut mortality = String::from("age_group,mortality,share\n");
    for (label, (m, s)) in airgrad_core::grid::AGE_GROUPS
        .iter()
        .zip(MORTALITY.iter().zip(ADULT_AGE_SHARES.iter()))
    {
        mortality.push_str(&format!("{label},{m},{s}\n"));
    }
    std::fs::write(root.join("mortality.csv"), mortality).unwrap();
    std::fs::write(
        root.join("health.toml"),
        format!(
            "world_dir = \"{}\"\n\
             model_dir = \"{}\"\n\
             mortality = \"{}\"\n\
             sector = \"IDC\"\n\
             p_max = 0.06\n\
             p_step = 0.02\n\
             draws = 200\n\
             ci = 0.9\n\
             seed = 101\n\
             regions = \"{}\"\n\
             edges = [1, 3, 7]\n\n\
             [factors]\n\
             rrc = 2.66\n\
             idc = 2.66\n\
             ido = 2.10\n\
             svc = 2.66\n\
             trn = 2.10\n",
            p("w1"),
            p("t1/model"),
            p("mortality.csv"),
            p("w1/regions.csv"),
        ),
    )
    .unwrap();

    // Every subcommand twice: same config and seeds, different worker
    // counts. Artifacts must match byte for byte (manifests excepted).
    let pairs = [
        ("gen-world", "gen.toml", "w1", "w2"),
        ("train", "train.toml", "t1", "t2"),
        ("search", "search.toml", "s1", "s2"),
        ("evaluate", "evaluate.toml", "e1", "e2"),
        ("scenario-sweep", "health.toml", "v1", "v2"),
        ("md-map", "health.toml", "m1", "m2"),
        ("total-damage", "health.toml", "d1", "d2"),
        ("distance-curve", "health.toml", "c1", "c2"),
    ];
    for (cmd, cfg, out1, out2) in pairs {
        run_cli(&[cmd, "--config", &p(cfg), "--out-dir", &p(out1), "--workers", "1"]);
        run_cli(&[cmd, "--config", &p(cfg), "--out-dir", &p(out2), "--workers", "2"]);
        assert_identical(&root.join(out1), &root.join(out2), cmd);
        assert!(root.join(out1).join("manifest.json").is_file());
    }
    report(
        10,
        true,
        "all 8 subcommands byte-identical across reruns and worker counts (manifest timings excepted)",
    );
}
