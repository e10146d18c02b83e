//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. Exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use latent_rcps::config::RunConfig;
use latent_rcps::pgm;
use latent_rcps::pipeline::{self, write_panels};
use latent_rcps_core::encoder::{grad, pinball_loss, total_loss, train, TrainConfig};
use latent_rcps_core::eval::{
    adaptivity_study, coverage_trials, downsample_levels, mask_levels, DifficultyLevel,
};
use latent_rcps_core::rcps::{
    calibrate, hb_ucb, hoeffding_ucb, interval_at, mean_coverage_loss, risk_curve_from, Prediction,
};
use latent_rcps_core::synth::{generate_samples, make_dataset};
use latent_rcps_core::viz::{endpoint_latent, Endpoint};
use latent_rcps_core::{
    rng, BoundKind, CorruptionPolicy, DatasetSplit, DimMask, EncoderOutput, EncoderParams,
    Generator, LambdaGrid, LatentVector, RiskSpec,
};
use rand::Rng;

const SEED: u64 = 0;
const ALPHA: f64 = 0.1;
const DELTA: f64 = 0.1;

// 1
const POOL: usize = 10_000;
const TRIALS: usize = 100;
const MAX_VIOLATIONS: usize = 18;
// 2
const HOEFFDING_EXPECTED: f64 = 0.095_174_271_293_851_46;
const HOEFFDING_TOL: f64 = 1e-12;
// 3
const DOMINANCE_SLACK: f64 = 1e-12;
// 4
const RANDOM_OUTPUTS: usize = 50;
// 5
const PINBALL_SAMPLES: usize = 10_000;
const PINBALL_STEP: f64 = 0.002;
const PINBALL_LEVELS: [f64; 3] = [0.05, 0.5, 0.95];
// 6
const FD_STEP: f64 = 1e-5;
const FD_COORDS: usize = 100;
const FD_REL_TOL: f64 = 1e-4;
// 7
const PER_LEVEL: usize = 500;
// 8
const UNDERTRAINED_POOL: usize = 4_000;
const MIN_CONTROLLED: usize = 90;
// 9
const ENDPOINT_SAMPLES: usize = 20;

struct Trained {
    gen: Generator,
    mask: DimMask,
    data: DatasetSplit,
    params: EncoderParams,
    lambda_hat: f64,
}

fn spec() -> RiskSpec {
    RiskSpec::new(ALPHA, DELTA).unwrap()
}

fn train_encoder(policy: CorruptionPolicy, n: usize, epochs: usize, hidden: Vec<usize>) -> Trained {
    let gen = Generator::default();
    let mask = DimMask::all(gen.dim);
    let data = make_dataset(&gen, n, &policy, SEED).unwrap();
    let cfg = TrainConfig {
        epochs,
        hidden,
        seed: SEED,
        alpha: ALPHA,
        ..TrainConfig::default()
    };
    let params = train(&gen, &data.train, &mask, &cfg).unwrap().params;
    let cal = calibrate(
        &params,
        &data.calibration,
        &mask,
        &LambdaGrid::default(),
        &spec(),
        BoundKind::HoeffdingBentkus,
    )
    .unwrap();
    let lambda_hat = cal.lambda_hat.expect("trained encoder calibrates");
    Trained {
        gen,
        mask,
        data,
        params,
        lambda_hat,
    }
}

fn downsample_encoder() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| train_encoder(CorruptionPolicy::default(), 10_000, 20, vec![128, 64]))
}

fn mask_encoder() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        train_encoder(
            CorruptionPolicy::Mask(vec![0.3, 0.6, 0.9]),
            10_000,
            20,
            vec![128, 64],
        )
    })
}

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn rcps_guarantee() -> Outcome {
    let t = downsample_encoder();
    let pool = generate_samples(
        &t.gen,
        &CorruptionPolicy::default(),
        SEED,
        "acceptance-pool",
        POOL,
    )
    .unwrap();
    let report = coverage_trials(
        &t.params,
        &pool,
        &t.mask,
        &spec(),
        BoundKind::HoeffdingBentkus,
        &LambdaGrid::default(),
        TRIALS,
        SEED,
    )
    .unwrap();
    let v = report.violations();
    (
        v <= MAX_VIOLATIONS && report.n_trials() == TRIALS,
        format!(
            "{v}/{TRIALS} trials above alpha (limit {MAX_VIOLATIONS}); mean risk {:.4} before, {:.4} after",
            report.mean_pre_risk(),
            report.mean_post_risk()
        ),
    )
}

fn hoeffding_exact() -> Outcome {
    let got = hoeffding_ucb(0.08, 5000, 0.1).unwrap();
    let direct = 0.08 + ((1.0f64 / 0.1).ln() / (2.0 * 5000.0)).sqrt();
    let err = (got - HOEFFDING_EXPECTED).abs().max((got - direct).abs());
    (
        err <= HOEFFDING_TOL,
        format!("hoeffding_ucb(0.08, 5000, 0.1) = {got:.17}, error {err:.1e}"),
    )
}

fn bound_dominance() -> Outcome {
    let mut checked = 0;
    let mut violations = Vec::new();
    for i in 0..=100 {
        let mean = i as f64 / 100.0;
        for n in [10, 100, 1000, 5000, 10_000] {
            for delta in [0.01, 0.05, 0.1, 0.2] {
                let hb = hb_ucb(mean, n, delta).unwrap();
                let h = hoeffding_ucb(mean, n, delta).unwrap();
                checked += 1;
                if hb > h + DOMINANCE_SLACK {
                    violations.push((mean, n, delta));
                }
            }
        }
    }
    (
        violations.is_empty(),
        format!(
            "{} violations over {checked} (mean, n, delta) points {violations:?}",
            violations.len()
        ),
    )
}

fn risk_monotonicity() -> Outcome {
    let grid = LambdaGrid::default();
    let mut r = rng::substream(SEED, "acceptance-outputs", 0);
    let mask = DimMask::all(8);
    let mut preds = Vec::new();
    let mut violations = 0;
    for _ in 0..RANDOM_OUTPUTS {
        let draw =
            |r: &mut rng::Stream| LatentVector((0..8).map(|_| r.random_range(-3.0..3.0)).collect());
        let out = EncoderOutput::new(draw(&mut r), draw(&mut r), draw(&mut r)).unwrap();
        let p = Prediction {
            out,
            z: draw(&mut r),
        };
        let direct: Vec<f64> = grid
            .values()
            .iter()
            .map(|&l| mean_coverage_loss(std::slice::from_ref(&p), l, &mask).unwrap())
            .collect();
        violations += direct.windows(2).filter(|w| w[1] > w[0]).count();
        preds.push(p);
    }
    let pooled = risk_curve_from(&preds, &mask, &grid).unwrap();
    violations += pooled.windows(2).filter(|w| w[1] > w[0]).count();
    (
        violations == 0,
        format!("{violations} increases over {RANDOM_OUTPUTS} curves plus the pooled curve"),
    )
}

fn quantile_consistency() -> Outcome {
    let mut r = rng::substream(SEED, "acceptance-pinball", 0);
    let sample: Vec<f64> = (0..PINBALL_SAMPLES)
        .map(|_| r.sample(rand_distr_normal()))
        .collect();
    let mut sorted = sample.clone();
    sorted.sort_by(f64::total_cmp);
    let grid: Vec<f64> = (0..=(8.0 / PINBALL_STEP) as usize)
        .map(|i| -4.0 + i as f64 * PINBALL_STEP)
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for beta in PINBALL_LEVELS {
        let loss = |q: f64| {
            sample
                .iter()
                .map(|&z| pinball_loss(q, z, beta).unwrap())
                .sum::<f64>()
        };
        let best = grid
            .iter()
            .copied()
            .map(|q| (q, loss(q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        let k = ((beta * PINBALL_SAMPLES as f64).ceil() as usize).max(1) - 1;
        let gap = (best - sorted[k]).abs();
        ok &= gap <= PINBALL_STEP;
        detail.push(format!(
            "beta {beta}: |{best:.4} - {:.4}| = {gap:.4}",
            sorted[k]
        ));
    }
    (ok, format!("{} (step {PINBALL_STEP})", detail.join("; ")))
}

fn rand_distr_normal() -> impl rand::distr::Distribution<f64> {
    struct BoxMuller;
    impl rand::distr::Distribution<f64> for BoxMuller {
        fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
            let u: f64 = 1.0 - r.random::<f64>();
            let v: f64 = r.random();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
    }
    BoxMuller
}

fn gradient_correctness() -> Outcome {
    let gen = Generator::default();
    let data =
        generate_samples(&gen, &CorruptionPolicy::default(), SEED, "acceptance-fd", 8).unwrap();
    let mask = DimMask::leading(8, 6).unwrap();
    let cfg = TrainConfig::default();
    let params = EncoderParams::init(
        1024,
        &[32, 16],
        8,
        &mut rng::substream(SEED, "acceptance-fd-init", 0),
    )
    .unwrap();
    let (analytic, _) = grad(&params, &gen, &data, &mask, &cfg).unwrap();
    let f0 = total_loss(&params, &gen, &data, &mask, &cfg).unwrap();
    let mut r = rng::substream(SEED, "acceptance-fd-coords", 0);
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < FD_COORDS {
        let k = r.random_range(0..params.num_params());
        let at = |v: f64| {
            let mut p = params.clone();
            p.set_param(k, v);
            total_loss(&p, &gen, &data, &mask, &cfg).unwrap()
        };
        let (fp, fm) = (at(params.param(k) + FD_STEP), at(params.param(k) - FD_STEP));
        // A kink between the probes shows up as mismatched one-sided slopes.
        let (right, left) = ((fp - f0) / FD_STEP, (f0 - fm) / FD_STEP);
        if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-6) {
            skipped += 1;
            continue;
        }
        let fd = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic.param(k);
        worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-8));
        checked += 1;
    }
    (
        worst < FD_REL_TOL,
        format!(
            "worst relative error {worst:.2e} over {checked} coordinates ({skipped} kinks skipped)"
        ),
    )
}

fn level_means(t: &Trained, levels: &[DifficultyLevel]) -> (bool, Vec<f64>) {
    let report = adaptivity_study(
        &t.params,
        &t.gen,
        t.lambda_hat,
        levels,
        PER_LEVEL,
        &t.mask,
        SEED,
    )
    .unwrap();
    (
        report.strictly_increasing(),
        report.levels.iter().map(|l| l.mean).collect(),
    )
}

fn adaptivity_ordering() -> Outcome {
    let (ds_ok, ds) = level_means(downsample_encoder(), &downsample_levels());
    let (mk_ok, mk) = level_means(mask_encoder(), &mask_levels());
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|m| format!("{m:.3}"))
            .collect::<Vec<_>>()
            .join(" < ")
    };
    (
        ds_ok && mk_ok,
        format!(
            "downsample 1x/8x/32x: {}; mask 0.3/0.6/0.9: {}",
            fmt(&ds),
            fmt(&mk)
        ),
    )
}

fn calibration_fixes_undertraining() -> Outcome {
    let gen = Generator::default();
    let mask = DimMask::all(gen.dim);
    let policy = CorruptionPolicy::default();
    let data = make_dataset(&gen, 2000, &policy, SEED).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        hidden: vec![32],
        seed: SEED,
        alpha: ALPHA,
        ..TrainConfig::default()
    };
    let params = train(&gen, &data.train, &mask, &cfg).unwrap().params;
    let pool = generate_samples(
        &gen,
        &policy,
        SEED,
        "acceptance-undertrained",
        UNDERTRAINED_POOL,
    )
    .unwrap();
    let report = coverage_trials(
        &params,
        &pool,
        &mask,
        &spec(),
        BoundKind::HoeffdingBentkus,
        &LambdaGrid::default(),
        TRIALS,
        SEED,
    )
    .unwrap();
    let controlled = report
        .rows
        .iter()
        .filter(|r| r.lambda_hat.is_some() && r.post_risk <= ALPHA)
        .count();
    let pre = report.mean_pre_risk();
    (
        pre > ALPHA && controlled >= MIN_CONTROLLED,
        format!(
            "risk at lambda 1 = {pre:.4} > {ALPHA}; {controlled}/{TRIALS} trials at or below alpha after calibration (need {MIN_CONTROLLED})"
        ),
    )
}

fn endpoint_propagation() -> Outcome {
    let t = downsample_encoder();
    let mut bad_edits = 0;
    let mut edits = 0;
    for s in t.data.validation.iter().take(ENDPOINT_SAMPLES) {
        let out = t.params.forward(&s.x).unwrap();
        let set = interval_at(&out, t.lambda_hat).unwrap();
        for d in t.mask.indices() {
            for which in [Endpoint::Lower, Endpoint::Upper] {
                let z = endpoint_latent(&out, t.lambda_hat, d, which).unwrap();
                let expected = if which == Endpoint::Lower {
                    set.lo[d]
                } else {
                    set.hi[d]
                };
                let off_ok = (0..out.dim())
                    .filter(|&j| j != d)
                    .all(|j| z[j] == out.point[j]);
                let moved = z[d] != out.point[d];
                let width_positive = if which == Endpoint::Lower {
                    set.lo[d] < out.point[d]
                } else {
                    set.hi[d] > out.point[d]
                };
                if !off_ok || z[d] != expected || moved != width_positive {
                    bad_edits += 1;
                }
                edits += 1;
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let sample = &t.data.validation[0];
    let dims: Vec<usize> = t.mask.indices().collect();
    write_panels(dir.path(), &t.params, &t.gen, 0.0, sample, &dims, &t.mask).unwrap();
    let point = std::fs::read(dir.path().join("point.pgm")).unwrap();
    let mut mismatched = 0;
    for d in &dims {
        for which in ["lower", "upper"] {
            let bytes = std::fs::read(dir.path().join(format!("dim{d}_{which}.pgm"))).unwrap();
            mismatched += usize::from(bytes != point);
        }
    }
    let decoded = pgm::read(&dir.path().join("point.pgm")).unwrap();
    let ok = bad_edits == 0 && mismatched == 0 && decoded.height() == t.gen.height;
    (
        ok,
        format!("{bad_edits}/{edits} endpoint latents not single-coordinate edits; {mismatched} PGMs differ from the point render at lambda 0"),
    )
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        experiment: "determinism".into(),
        ..RunConfig::default()
    };
    cfg.data.n = 2000;
    cfg.train.epochs = 3;
    cfg.train.hidden = vec![32];
    cfg.adaptivity.per_level = 50;
    cfg.output.dir = tmp.path().join("runs");
    let run = || {
        pipeline::generate(&cfg).unwrap();
        pipeline::train(&cfg).unwrap();
        pipeline::calibrate_cmd(&cfg).unwrap();
        pipeline::evaluate(&cfg).unwrap();
        snapshot(&cfg.run_dir())
    };
    let first = run();
    std::fs::rename(&cfg.output.dir, tmp.path().join("first")).unwrap();
    let second = run();
    let differing: Vec<&String> = first
        .keys()
        .filter(|k| second.get(*k) != first.get(*k))
        .collect();
    let ok = !first.is_empty() && first.len() == second.len() && differing.is_empty();
    (
        ok,
        format!(
            "{} artifacts compared, {} differ {differing:?}",
            first.len(),
            differing.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("risk control over 100 coverage trials", rcps_guarantee),
        ("Hoeffding bound exactness", hoeffding_exact),
        ("Hoeffding-Bentkus dominates Hoeffding", bound_dominance),
        ("risk curve nonincreasing in lambda", risk_monotonicity),
        (
            "pinball minimizer recovers empirical quantiles",
            quantile_consistency,
        ),
        (
            "analytic gradient vs finite differences",
            gradient_correctness,
        ),
        ("set size grows with difficulty", adaptivity_ordering),
        (
            "calibration repairs an under-trained encoder",
            calibration_fixes_undertraining,
        ),
        ("endpoint propagation", endpoint_propagation),
        ("pipeline rerun is byte-identical", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!ok);
        println!(
            "[{}] {:>2}. {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
