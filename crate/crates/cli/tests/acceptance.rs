//! Acceptance suite. One test per criterion, each printing a PASS line with
//! its measured runtime. Heavy training runs are shared between criteria
//! through lazily computed fixtures.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use prae_cli::compare::{build_comparison, compare_reports};
use prae_cli::config::{DatasetSource, ExperimentConfig};
use prae_cli::evalcmd::evaluate_model;
use prae_cli::runrecord::RunRecord;
use prae_cli::sweep::{expected_params, run_sweep};
use prae_cli::train::{load_and_split_dataset, run_training};

use prae_core::arch::{build_model, Backbone, DecoderSpec, EncoderKind, EncoderSpec};
use prae_core::checkpoint::{checkpoint_crc, load_checkpoint};
use prae_core::data::Split;
use prae_core::gradcheck::{min_stencil_margin, model_gradient_error, relative_error, sequence_gradient_error};
use prae_core::loss::{multihead_chamfer, nn_tie_margin};
use prae_core::metrics::{
    chamfer, emd_approx, emd_exact, f1_score, hausdorff, nn_distances, BackendKind, CostMode, EmdMode,
    MetricsReport, PointCloud,
};
use prae_core::nn::{init_linear, BatchNormParams, Init, Layer, Mode};
use prae_core::tensor::Tensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Shared fixtures

struct StoredRun {
    record: RunRecord,
    best_path: PathBuf,
    final_path: PathBuf,
    config: ExperimentConfig,
}

fn workspace() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("acceptance workspace"))
        .path()
}

/// The training-sanity configuration: light backbone, depth 3, synthetic
/// corpus of 8 categories x 50 shapes at 256 points, 30 epochs.
fn sanity_config(heads: usize, out: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        encoder: EncoderKind::LightAe,
        depth: 3,
        heads,
        epochs: 30,
        batch_size: 32,
        learning_rate: 5e-4,
        seed: 42,
        points: 256,
        dataset: DatasetSource::Synthetic {
            instances_per_category: 50,
            seed: 7,
        },
        emd_mode: EmdMode::Skip,
        out_dir: out,
        ..Default::default()
    }
}

fn train_stored(cfg: &ExperimentConfig) -> StoredRun {
    let outcome = run_training(cfg, None).expect("training run");
    StoredRun {
        record: outcome.record,
        best_path: outcome.best_path,
        final_path: outcome.final_path,
        config: cfg.clone(),
    }
}

fn sanity_run_m1() -> &'static StoredRun {
    static RUN: OnceLock<StoredRun> = OnceLock::new();
    RUN.get_or_init(|| train_stored(&sanity_config(1, workspace().join("m1"))))
}

fn sanity_run_m2() -> &'static StoredRun {
    static RUN: OnceLock<StoredRun> = OnceLock::new();
    RUN.get_or_init(|| train_stored(&sanity_config(2, workspace().join("m2_a"))))
}

fn sanity_run_m2_repeat() -> &'static StoredRun {
    static RUN: OnceLock<StoredRun> = OnceLock::new();
    RUN.get_or_init(|| train_stored(&sanity_config(2, workspace().join("m2_b"))))
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect(),
    )
    .unwrap()
}

fn pass(criterion: &str, detail: String, started: Instant) {
    println!(
        "ACCEPTANCE {criterion}: PASS ({detail}; {:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 1: parameter-count reproduction

#[test]
fn criterion_1_parameter_count_reproduction() {
    let started = Instant::now();
    let rows = prae_cli::audit::audit_rows();
    assert_eq!(rows.len(), 30);
    for r in &rows {
        assert!(
            r.within_tolerance,
            "{} depth {} heads {}: computed {} vs reference {}",
            r.backbone.name(),
            r.depth,
            r.heads,
            r.computed_millions,
            r.reference_millions
        );
    }
    let anchor = |b: Backbone, d: usize, m: usize| {
        rows.iter()
            .find(|r| r.backbone == b && r.depth == d && r.heads == m)
            .unwrap()
            .computed_millions
    };
    assert_eq!(anchor(Backbone::LightAe, 1, 1), 0.79);
    assert_eq!(anchor(Backbone::LightAe, 1, 2), 0.79);
    assert_eq!(anchor(Backbone::LightAe, 2, 1), 1.61);
    assert_eq!(anchor(Backbone::LightAe, 2, 2), 1.65);
    assert_eq!(anchor(Backbone::DeepAe, 1, 1), 6.30);
    assert_eq!(anchor(Backbone::DeepAe, 1, 2), 6.30);
    assert_eq!(anchor(Backbone::DeepAe, 5, 1), 9.45);
    assert_eq!(anchor(Backbone::Ptv3, 2, 1), 1.71);
    assert!(started.elapsed().as_secs_f64() < 1.0, "must finish within 1 s");
    pass("1 parameter-count reproduction", "30/30 rows within ±0.01 M".into(), started);
}

// ---------------------------------------------------------------------------
// Criterion 2: metric oracle equivalence

/// Exhaustive minimum of the mean squared assignment cost over all
/// bijections.
fn brute_force_assignment_min(p: &PointCloud, q: &PointCloud) -> f64 {
    fn recurse(p: &PointCloud, q: &PointCloud, used: &mut Vec<bool>, chosen: &mut Vec<usize>, best: &mut f64) {
        let i = chosen.len();
        if i == p.len() {
            let mut sum = 0.0f64;
            for (i, &j) in chosen.iter().enumerate() {
                let a = p.points()[i];
                let b = q.points()[j];
                let (dx, dy, dz) = (
                    a[0] as f64 - b[0] as f64,
                    a[1] as f64 - b[1] as f64,
                    a[2] as f64 - b[2] as f64,
                );
                sum += dx * dx + dy * dy + dz * dz;
            }
            let cost = sum / p.len() as f64;
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for j in 0..q.len() {
            if !used[j] {
                used[j] = true;
                chosen.push(j);
                recurse(p, q, used, chosen, best);
                chosen.pop();
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    recurse(p, q, &mut vec![false; q.len()], &mut Vec::new(), &mut best);
    best
}

#[test]
fn criterion_2_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);

    // 200 pairs, n in 2..=8: exact solver equals the permutation oracle.
    for trial in 0..200 {
        let n = rng.random_range(2..=8);
        let p = random_cloud(n, &mut rng);
        let q = random_cloud(n, &mut rng);
        let exact = emd_exact(&p, &q).unwrap().total_cost;
        let brute = brute_force_assignment_min(&p, &q);
        assert!(
            (exact - brute).abs() <= 1e-12 * brute.max(1.0),
            "trial {trial}: exact {exact} vs permutation oracle {brute}"
        );
    }

    // 100 pairs, n <= 100: spatial index equals brute force within 1e-12.
    for _ in 0..100 {
        let n = rng.random_range(1..=100);
        let from = random_cloud(n, &mut rng);
        let to = random_cloud(rng.random_range(1..=100), &mut rng);
        let brute = nn_distances(&from, &to, BackendKind::BruteForce).unwrap();
        let spatial = nn_distances(&from, &to, BackendKind::SpatialIndex).unwrap();
        for (b, s) in brute.iter().zip(&spatial) {
            assert!((b - s).abs() <= 1e-12, "backend disagreement: {b} vs {s}");
        }
    }

    // Auction approximation within 2% of exact for n <= 64.
    for _ in 0..30 {
        let n = rng.random_range(8..=64);
        let p = random_cloud(n, &mut rng);
        let q = random_cloud(n, &mut rng);
        let exact = emd_exact(&p, &q).unwrap().total_cost;
        let approx = emd_approx(&p, &q).unwrap().total_cost;
        assert!(
            (approx - exact).abs() / exact < 0.02,
            "n={n}: auction {approx} vs exact {exact}"
        );
    }

    assert!(started.elapsed().as_secs_f64() < 60.0, "must finish within 1 min");
    pass(
        "2 metric oracle equivalence",
        "200 permutation checks, 100 backend checks, 30 auction checks".into(),
        started,
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: hand-computed metric fixtures

#[test]
fn criterion_3_hand_computed_fixtures() {
    let started = Instant::now();
    let tol = 1e-9;

    let origin = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
    let far = PointCloud::new(vec![[3.0, 4.0, 0.0]]).unwrap();
    assert!((chamfer(&origin, &far, BackendKind::BruteForce).unwrap() - 50.0).abs() < tol);

    let two = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
    assert!((chamfer(&two, &origin, BackendKind::BruteForce).unwrap() - 0.5).abs() < tol);
    assert!((hausdorff(&two, &origin, BackendKind::BruteForce).unwrap() - 1.0).abs() < tol);

    let gt = PointCloud::new(vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]).unwrap();
    let pred = PointCloud::new(vec![[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]).unwrap();
    let f1 = f1_score(&pred, &gt, BackendKind::BruteForce).unwrap();
    assert!((f1.threshold - 0.1).abs() < tol);
    assert!((f1.precision - 0.5).abs() < tol);
    assert!((f1.recall - 0.5).abs() < tol);
    assert!((f1.f1 - 0.5).abs() < tol);

    // Two-point assignment fixture: parallel pairing wins at cost 1.
    let p = PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
    let q = PointCloud::new(vec![[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
    assert!((emd_exact(&p, &q).unwrap().total_cost - 1.0).abs() < tol);
    assert!((emd_exact_unsquared_cost(&origin, &far) - 5.0).abs() < tol);

    assert!(started.elapsed().as_secs_f64() < 1.0, "must finish within 1 s");
    pass("3 hand-computed metric fixtures", "CD, HD, F1, assignment fixtures at 1e-9".into(), started);
}

fn emd_exact_unsquared_cost(p: &PointCloud, q: &PointCloud) -> f64 {
    prae_core::metrics::emd_exact_with(p, q, CostMode::Euclidean)
        .unwrap()
        .total_cost
}

// ---------------------------------------------------------------------------
// Criterion 4: gradient correctness

#[test]
fn criterion_4_gradient_correctness() {
    let started = Instant::now();
    let h = 1e-3;
    let tol = 1e-3;

    // Every layer type, 20 margin-safe instances each.
    let layer_cases: Vec<(&str, Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Layer>, Vec<usize>)>)> = vec![
        ("pointwise", Box::new(|rng| (vec![Layer::PointwiseLinear(init_linear(6, 3, Init::HeNormal, rng))], vec![2, 3, 7]))),
        ("dense", Box::new(|rng| (vec![Layer::Dense(init_linear(5, 4, Init::HeNormal, rng))], vec![3, 4]))),
        ("batchnorm", Box::new(|_| (vec![Layer::BatchNorm(BatchNormParams::new(4))], vec![3, 4, 5]))),
        ("relu", Box::new(|_| (vec![Layer::Relu], vec![2, 4, 6]))),
        ("maxpool", Box::new(|_| (vec![Layer::MaxPoolPoints], vec![2, 5, 9]))),
    ];
    for (name, build) in &layer_cases {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 20 {
            assert!(seed < 400, "{name}: not enough margin-safe instances");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            seed += 1;
            let (layers, shape) = build(&mut rng);
            let len: usize = shape.iter().product();
            let x = Tensor::from_vec(&shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            if min_stencil_margin(&layers, &x, Mode::Train).unwrap() < 8.0 * h {
                continue;
            }
            let err = sequence_gradient_error(&layers, &x, Mode::Train, h).unwrap();
            assert!(err < tol, "{name} seed {}: relative error {err}", seed - 1);
            checked += 1;
        }
    }

    // Composed encoder-decoder, 20 instances, stencil-unsafe probes
    // discarded inside the checker.
    for seed in 0..20u64 {
        let enc = EncoderSpec::new(EncoderKind::LightAe);
        let dec = DecoderSpec::table(Backbone::LightAe, 1, if seed % 2 == 0 { 1 } else { 2 }, 16).unwrap();
        let model = build_model(enc, dec, 300 + seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut x = Tensor::zeros(&[2, 3, 32]);
        let mut gt = Vec::new();
        for b in 0..2 {
            let cloud = random_cloud(32, &mut rng);
            for (n, p) in cloud.points().iter().enumerate() {
                for c in 0..3 {
                    x.set3(b, c, n, p[c]);
                }
            }
            gt.push(cloud);
        }
        let err = model_gradient_error(&model, &x, &gt, 4e-3, 3, 17).unwrap();
        assert!(err < tol, "composed model seed {seed}: relative error {err}");
    }

    // Multi-head loss gradients for M in {1, 2, 4}, 20 margin-safe
    // instances each, against the central-difference oracle on the points.
    for m in [1usize, 2, 4] {
        let mut checked = 0;
        let mut seed = 1000u64;
        while checked < 20 {
            assert!(seed < 4000, "loss M={m}: not enough margin-safe instances");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            seed += 1;
            let gt = random_cloud(16, &mut rng);
            let heads: Vec<PointCloud> = (0..m).map(|_| random_cloud(8, &mut rng)).collect();
            // A coordinate stencil of ±h moves any squared-distance gap by
            // at most ~8h here; 0.015 keeps flips out of reach.
            if nn_tie_margin(&gt, &heads) < 0.015 {
                continue;
            }
            let (_, analytic) = multihead_chamfer(&gt, &heads).unwrap();
            let flat_analytic: Vec<f64> = analytic
                .iter()
                .flat_map(|head| head.iter().flat_map(|g| g.iter().copied()))
                .collect();
            let mut theta =
                Tensor::from_vec(&[m * 8 * 3], heads.iter().flat_map(|h| h.to_flat()).collect()).unwrap();
            let gt_ref = &gt;
            let fd = prae_core::gradcheck::central_diff(&mut theta, h, |t| {
                let heads: Vec<PointCloud> = t
                    .data()
                    .chunks_exact(8 * 3)
                    .map(|c| PointCloud::from_flat(c).unwrap())
                    .collect();
                multihead_chamfer(gt_ref, &heads).unwrap().0
            });
            let rel = relative_error(&fd, &flat_analytic);
            assert!(rel < tol, "loss M={m} seed {}: relative error {rel}", seed - 1);
            checked += 1;
        }
    }

    assert!(started.elapsed().as_secs_f64() < 120.0, "must finish within 2 min");
    pass(
        "4 gradient correctness",
        "5 layer kinds, composed model, loss M in {1,2,4}, 20+ instances each".into(),
        started,
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: multi-head loss reduces to the plain metric at M=1

#[test]
fn criterion_5_single_head_loss_equals_chamfer_bitwise() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    for trial in 0..100 {
        let gt = random_cloud(rng.random_range(4..=64), &mut rng);
        let head = random_cloud(rng.random_range(4..=64), &mut rng);
        let (loss, _) = multihead_chamfer(&gt, std::slice::from_ref(&head)).unwrap();
        let cd = chamfer(&gt, &head, BackendKind::BruteForce).unwrap();
        assert!(loss == cd, "trial {trial}: {loss} != {cd} (must be bit-identical)");
    }
    pass("5 single-head reduction", "100 random pairs bit-identical".into(), started);
}

// ---------------------------------------------------------------------------
// Criterion 6: training sanity at desk scale

#[test]
fn criterion_6_training_sanity() {
    let started = Instant::now();
    for run in [sanity_run_m1(), sanity_run_m2()] {
        let heads = run.config.heads;
        let record = &run.record;
        assert_eq!(record.epochs.len(), 30);
        let first = record.epochs.first().unwrap().train_loss;
        let last = record.epochs.last().unwrap().train_loss;
        assert!(
            last < 0.10 * first,
            "M={heads}: final loss {last} is not below 10% of epoch-1 loss {first}"
        );
        assert!(record.best.cd.is_finite());

        // Untrained baseline: same architecture and seed, no training.
        let cfg = &run.config;
        let untrained = build_model(cfg.encoder_spec(), cfg.decoder_spec().unwrap(), cfg.seed).unwrap();
        let ds = load_and_split_dataset(cfg).unwrap();
        let baseline = evaluate_model(&untrained, &ds, Some(Split::Test), &cfg.eval_options(), cfg.batch_size)
            .unwrap();
        assert!(
            record.best.cd * 5.0 <= baseline.cd,
            "M={heads}: best test CD {} is not 5x below the untrained {}",
            record.best.cd,
            baseline.cd
        );
    }
    assert!(started.elapsed().as_secs_f64() < 900.0, "must finish within 15 min");
    pass(
        "6 training sanity",
        format!(
            "M=1 best CD {:.5}, M=2 best CD {:.5}",
            sanity_run_m1().record.best.cd,
            sanity_run_m2().record.best.cd
        ),
        started,
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism

#[test]
fn criterion_7_determinism() {
    let started = Instant::now();
    let a = sanity_run_m2();
    let b = sanity_run_m2_repeat();
    assert_eq!(
        a.record.epochs, b.record.epochs,
        "per-epoch loss curves must be bit-identical"
    );
    assert_eq!(
        checkpoint_crc(&a.best_path).unwrap(),
        checkpoint_crc(&b.best_path).unwrap(),
        "best checkpoints must share a CRC"
    );
    assert_eq!(
        checkpoint_crc(&a.final_path).unwrap(),
        checkpoint_crc(&b.final_path).unwrap(),
        "final checkpoints must share a CRC"
    );
    pass("7 determinism", "30-epoch curves and checkpoint CRCs identical".into(), started);
}

// ---------------------------------------------------------------------------
// Criterion 8: checkpoint round trip and split-run equivalence

#[test]
fn criterion_8_checkpoint_round_trip_and_split_run() {
    let started = Instant::now();
    let a = sanity_run_m2();
    let cfg = &a.config;
    let ds = load_and_split_dataset(cfg).unwrap();

    // save -> load -> eval reproduces the recorded best metrics bitwise.
    let loaded = load_checkpoint(&a.best_path).unwrap();
    let report = evaluate_model(
        &loaded.model,
        &ds,
        Some(cfg.select_split),
        &cfg.eval_options(),
        cfg.batch_size,
    )
    .unwrap();
    assert_eq!(report, a.record.best, "reloaded best checkpoint must evaluate identically");

    // Split run: 15 epochs, then resume for 15 more, against the straight
    // 30-epoch run.
    let split_dir = workspace().join("split_run");
    let mut cfg15 = sanity_config(2, split_dir.clone());
    cfg15.epochs = 15;
    let first = run_training(&cfg15, None).unwrap();
    assert_eq!(first.record.epochs.len(), 15);

    let mut cfg30 = sanity_config(2, split_dir);
    cfg30.epochs = 30;
    let resumed = run_training(&cfg30, Some(&first.final_path)).unwrap();
    assert_eq!(resumed.record.epochs.len(), 15, "resume covers epochs 15..30");

    let mut stitched = first.record.epochs.clone();
    stitched.extend(resumed.record.epochs.iter().cloned());
    assert_eq!(
        stitched, a.record.epochs,
        "split-run loss curve must match the uninterrupted run bit for bit"
    );
    assert_eq!(
        checkpoint_crc(&resumed.final_path).unwrap(),
        checkpoint_crc(&a.final_path).unwrap(),
        "final checkpoints must be identical"
    );
    assert_eq!(
        checkpoint_crc(&resumed.best_path).unwrap(),
        checkpoint_crc(&a.best_path).unwrap(),
        "best checkpoints must be identical"
    );
    assert_eq!(resumed.record.best_epoch, a.record.best_epoch);
    assert_eq!(resumed.record.best, a.record.best);
    pass("8 checkpoint round trip", "reload-eval bitwise; 15+15 == 30 bitwise".into(), started);
}

// ---------------------------------------------------------------------------
// Criterion 9: comparison arithmetic on the published fixture, and a full
// single- vs multi-head sweep

fn fixture_record(heads: usize, depth: usize, cd: f64, emd: f64, hd: f64, f1: f64) -> RunRecord {
    let cfg = ExperimentConfig {
        depth,
        heads,
        ..Default::default()
    };
    let best = MetricsReport {
        cd: cd * 1e-3,
        emd: Some(emd),
        hd: hd * 1e-2,
        f1: f1 / 100.0,
        precision: 0.0,
        recall: 0.0,
        threshold: 0.0,
    };
    RunRecord {
        config_hash: cfg.identity_hash(),
        config: cfg,
        param_count: 0,
        decoder_param_count: 0,
        epochs: Vec::new(),
        best_epoch: 0,
        best,
        wall_clock_secs: 0.0,
    }
}

#[test]
fn criterion_9_comparison_fixture_and_full_sweep() {
    let started = Instant::now();

    // Published light-backbone block: (depth, cd, emd, hd, f1) in table
    // units (1e3 cd, raw emd, 1e2 hd, percent f1).
    let single = [
        (1, 3.39, 154.74, 16.97, 24.84),
        (2, 3.52, 150.88, 16.92, 23.96),
        (3, 3.29, 138.40, 15.79, 26.03),
        (4, 3.38, 145.12, 15.61, 26.94),
        (5, 3.48, 166.64, 16.08, 26.76),
    ];
    let multi = [
        (1, 3.42, 128.37, 17.07, 25.37),
        (2, 3.37, 110.20, 16.73, 25.16),
        (3, 3.18, 103.92, 15.77, 26.83),
        (4, 3.24, 111.50, 15.42, 27.45),
        (5, 3.36, 113.09, 15.61, 27.37),
    ];
    let singles: Vec<RunRecord> = single.iter().map(|&(d, cd, e, h, f)| fixture_record(1, d, cd, e, h, f)).collect();
    let multis: Vec<RunRecord> = multi.iter().map(|&(d, cd, e, h, f)| fixture_record(2, d, cd, e, h, f)).collect();
    let table = build_comparison(&singles, &multis).unwrap();
    assert_eq!(table.rows.len(), 5);

    // The published deltas, in table units (multi - single).
    let expect_cd = [0.03, -0.15, -0.11, -0.14, -0.12];
    let expect_emd = [-26.37, -40.68, -34.48, -33.62, -53.55];
    let expect_hd = [0.10, -0.19, -0.02, -0.19, -0.47];
    let expect_f1 = [0.53, 1.20, 0.80, 0.51, 0.61];
    for (i, row) in table.rows.iter().enumerate() {
        assert_eq!(row.depth, i + 1);
        assert!((row.delta.cd * 1e3 - expect_cd[i]).abs() < 1e-9, "depth {} cd delta", i + 1);
        assert!((row.delta.emd.unwrap() - expect_emd[i]).abs() < 1e-9, "depth {} emd delta", i + 1);
        assert!((row.delta.hd * 1e2 - expect_hd[i]).abs() < 1e-9, "depth {} hd delta", i + 1);
        assert!((row.delta.f1 * 1e2 - expect_f1[i]).abs() < 1e-9, "depth {} f1 delta", i + 1);
    }
    // Depth-3 anchor: -0.11 delta is a +3.34% improvement.
    let d3 = &table.rows[2];
    assert_eq!((d3.pct_improvement.cd * 100.0).round() / 100.0, 3.34);
    assert!(d3.improved_cd());
    assert!(!table.rows[0].improved_cd(), "depth-1 cd moved against the improvement direction");

    // Full single- vs multi-head sweep on the synthetic corpus.
    let sweep_dir = workspace().join("sweep");
    let template = ExperimentConfig {
        encoder: EncoderKind::LightAe,
        depth: 3,
        heads: 1,
        epochs: 3,
        batch_size: 32,
        learning_rate: 5e-4,
        seed: 5,
        points: 256,
        dataset: DatasetSource::Synthetic {
            instances_per_category: 10,
            seed: 7,
        },
        emd_mode: EmdMode::Approx,
        out_dir: sweep_dir.clone(),
        ..Default::default()
    };
    let outcome = run_sweep(&template, &[1, 2, 3, 4, 5], &[1, 2], 1, false).unwrap();
    assert!(outcome.failures.is_empty(), "all sweep cells must complete");
    assert_eq!(outcome.records.len(), 10);
    for record in &outcome.records {
        assert_eq!(record.decoder_param_count, expected_params(&record.config).unwrap());
        assert!(record.best.cd.is_finite());
        assert!(record.best.emd.unwrap().is_finite());
    }
    let csv = std::fs::read_to_string(&outcome.csv_path).unwrap();
    assert_eq!(csv.lines().count(), 11, "header plus ten rows");
    assert!(sweep_dir.join("metrics_vs_depth.svg").exists());
    assert!(sweep_dir.join("metrics_vs_params.svg").exists());
    assert!(sweep_dir.join("comparison.csv").exists());
    assert!(sweep_dir.join("comparison.txt").exists());

    // The CSV is loss-free: rebuilding the comparison from it reproduces
    // the table computed from the full records.
    let from_csv = comparison_from_csv(&csv);
    let sweep_singles: Vec<RunRecord> = outcome.records.iter().filter(|r| r.config.heads == 1).cloned().collect();
    let sweep_multis: Vec<RunRecord> = outcome.records.iter().filter(|r| r.config.heads == 2).cloned().collect();
    let direct = build_comparison(&sweep_singles, &sweep_multis).unwrap();
    assert_eq!(direct.rows.len(), from_csv.len());
    for (row, (depth, delta_cd, pct_cd)) in direct.rows.iter().zip(&from_csv) {
        assert_eq!(row.depth, *depth);
        assert_eq!(row.delta.cd, *delta_cd, "depth {depth}: CSV-derived delta must match exactly");
        assert_eq!(row.pct_improvement.cd, *pct_cd);
    }

    assert!(started.elapsed().as_secs_f64() < 3600.0, "must finish within 1 h");
    pass(
        "9 comparison fixture + full sweep",
        format!("published deltas reproduced; {} sweep cells", outcome.records.len()),
        started,
    );
}

/// Re-derives (depth, cd delta, cd pct) from the sweep CSV text.
fn comparison_from_csv(csv: &str) -> Vec<(usize, f64, f64)> {
    let mut singles = std::collections::BTreeMap::new();
    let mut multis = std::collections::BTreeMap::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let depth: usize = cols[1].parse().unwrap();
        let heads: usize = cols[2].parse().unwrap();
        let cd: f64 = cols[4].parse().unwrap();
        if heads == 1 {
            singles.insert(depth, cd);
        } else {
            multis.insert(depth, cd);
        }
    }
    singles
        .iter()
        .map(|(depth, s)| {
            let m = multis[depth];
            let single = MetricsReport {
                cd: *s,
                emd: None,
                hd: 0.0,
                f1: 0.0,
                precision: 0.0,
                recall: 0.0,
                threshold: 0.0,
            };
            let multi = MetricsReport { cd: m, ..single };
            let (delta, pct) = compare_reports(&single, &multi);
            (*depth, delta.cd, pct.cd)
        })
        .collect()
}
