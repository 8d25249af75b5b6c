//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line whether or not it passes; exits non-zero if any fails.
//!
//! Expected values are either published numbers (criteria 1 to 3) or come
//! from oracles written here, independently of the library code.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use streamcl::feature_store::{
    synthesize_gaussian_dataset, BackboneConstant, Dataset, SynthConfig,
};
use streamcl::harness::{run_cell, CheckpointPolicy, LearnerEntry, LoadedDataset, RunOptions};
use streamcl::learners::{
    argmax, Cbcl, FineTune, Learner, LearnerConfig, LinearHead, MergeRule, NaiveBayes, Ncm, Replay,
    ReplayBuffer, SgdConfig, Slda, Sovr,
};
use streamcl::metrics::{
    evaluate, harmonic_mean, mean_across_backbones, netscore, LabeledPool, NetScoreParams,
};
use streamcl::stream_orderings::OrderingConfig;
use streamcl::streaming_stats::{RunningMean, WelfordAccumulator};

const NETSCORE_TOL: f64 = 0.15;
const NETSCORE_ORIGINAL_TOL: f64 = 0.2;
const AGGREGATE_TOL: f64 = 0.05;
const MEAN_REL_TOL: f64 = 1e-10;
const VARIANCE_REL_TOL: f64 = 1e-8;
const SIGMA_TOL: f64 = 1e-9;
const LDA_MIN_AGREEMENT: f64 = 0.99;
const ORDER_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const FORGET_RATIO: f64 = 0.4;
const STABLE_GAP: f64 = 2.0;
const CBCL_CAP: usize = 44;
const CBCL_THRESHOLD: f64 = 17.0;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "NetScore exactness", netscore_exactness),
        (2, "aggregation exactness", aggregation_exactness),
        (3, "memory-delta exactness", memory_deltas),
        (4, "streaming vs batch oracles", streaming_oracles),
        (5, "order invariance", order_invariance),
        (
            6,
            "identity-precision SLDA equals NCM",
            identity_slda_is_ncm,
        ),
        (7, "gradient correctness", gradient_correctness),
        (8, "catastrophic-forgetting trend", forgetting_trend),
        (9, "replay-buffer fuzzing", replay_fuzz),
        (10, "CBCL cap and merge oracle", cbcl_cap),
        (11, "run_cell determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, title, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} [{status}] {title}: {} ({:.2}s)",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(n);
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

const BACKBONES: [&str; 5] = ["MNet-S", "MNet-L", "ENet-B0", "ENet-B1", "RN-18"];
const LEARNERS: [&str; 8] = [
    "Perceptron",
    "Fine-Tune",
    "Naive Bayes",
    "SOvR",
    "NCM",
    "Replay (2pc)",
    "Replay (20pc)",
    "SLDA",
];

/// Published (efficacy %, parameters, seconds, Omega) per backbone, rows
/// in `LEARNERS` order.
const TRIPLETS: [[(f64, f64, f64, f64); 8]; 5] = [
    [
        (9.8, 950048.0, 1041.0, -12.3),
        (4.3, 950048.0, 1040.0, -45.5),
        (23.2, 996128.0, 1260.0, 21.1),
        (25.9, 950048.0, 1414.0, 25.0),
        (44.2, 950048.0, 1035.0, 48.0),
        (40.5, 996128.0, 1053.0, 44.2),
        (45.0, 1410848.0, 1052.0, 46.7),
        (44.5, 1281824.0, 1040.0, 46.8),
    ],
    [
        (16.7, 3010352.0, 1082.0, 3.0),
        (6.7, 3010352.0, 1084.0, -33.4),
        (36.6, 3087152.0, 1329.0, 33.4),
        (32.3, 3010352.0, 1583.0, 27.6),
        (47.4, 3010352.0, 1078.0, 44.8),
        (43.2, 3087152.0, 1093.0, 40.9),
        (48.1, 3778352.0, 1094.0, 44.2),
        (45.4, 3931952.0, 1082.0, 41.8),
    ],
    [
        (27.2, 4058748.0, 1204.0, 20.6),
        (23.8, 4058748.0, 1198.0, 15.2),
        (42.1, 4161148.0, 1475.0, 36.9),
        (44.9, 4058748.0, 1635.0, 39.1),
        (51.6, 4058748.0, 1196.0, 46.2),
        (49.6, 4161148.0, 1211.0, 44.4),
        (53.0, 5082748.0, 1211.0, 46.1),
        (47.2, 5697148.0, 1202.0, 40.9),
    ],
    [
        (28.3, 6564384.0, 1511.0, 18.6),
        (23.6, 6564384.0, 1502.0, 11.4),
        (39.9, 6666784.0, 1719.0, 31.6),
        (45.9, 6564384.0, 1777.0, 37.2),
        (51.4, 6564384.0, 1501.0, 42.5),
        (49.1, 6666784.0, 1518.0, 40.6),
        (53.0, 7588384.0, 1513.0, 43.0),
        (46.0, 8202784.0, 1509.0, 36.9),
    ],
    [
        (8.2, 11196992.0, 1076.0, -31.8),
        (3.0, 11196992.0, 1072.0, -71.8),
        (2.1, 11237952.0, 1314.0, -87.4),
        (22.4, 11196992.0, 1567.0, 6.5),
        (46.3, 11196992.0, 1073.0, 37.4),
        (37.3, 11237952.0, 1089.0, 28.7),
        (44.7, 11606592.0, 1083.0, 35.7),
        (44.2, 11459136.0, 1074.0, 35.4),
    ],
];

/// Published Omega with square-root penalties, `[learner][backbone]`.
const ORIGINAL_OMEGA: [[f64; 5]; 8] = [
    [-115.9, -106.5, -91.0, -96.5, -147.8],
    [-149.0, -142.9, -96.3, -103.7, -187.8],
    [-83.7, -77.3, -75.8, -84.2, -204.5],
    [-80.0, -83.9, -74.0, -78.7, -111.4],
    [-55.5, -64.7, -65.3, -72.5, -78.7],
    [-59.7, -68.8, -67.3, -74.6, -87.5],
    [-58.9, -66.5, -66.6, -72.8, -80.5],
    [-58.3, -69.1, -72.3, -79.3, -80.8],
];

fn netscore_exactness() -> Outcome {
    let mut misses = Vec::new();
    let mut checked = 0;
    for (b, rows) in TRIPLETS.iter().enumerate() {
        for (l, &(a, p, c, omega)) in rows.iter().enumerate() {
            for (np, printed, tol, label) in [
                (
                    NetScoreParams::DEFAULT,
                    omega,
                    NETSCORE_TOL,
                    "beta=gamma=0.25",
                ),
                (
                    NetScoreParams::ORIGINAL,
                    ORIGINAL_OMEGA[l][b],
                    NETSCORE_ORIGINAL_TOL,
                    "beta=gamma=0.5",
                ),
            ] {
                checked += 1;
                let got = netscore(a, p, c, np).expect("published inputs are positive");
                if (got - printed).abs() > tol {
                    // Would any efficacy that rounds to the printed one
                    // reproduce the printed score?
                    let lo = netscore(a - 0.05, p, c, np).unwrap();
                    let hi = netscore(a + 0.05, p, c, np).unwrap();
                    let needed =
                        (printed / np.scale + np.beta * p.ln() + np.gamma * c.ln()) / np.alpha;
                    println!(
                        "    miss: {} / {} ({label}): ({a}, {p}, {c}) -> {got:.2}, printed {printed}; \
                         efficacy in [{:.2}, {:.2}) spans [{lo:.2}, {hi:.2}]; printed score needs efficacy {:.3}",
                        LEARNERS[l],
                        BACKBONES[b],
                        a - 0.05,
                        a + 0.05,
                        needed.exp(),
                    );
                    misses.push(format!("{}/{} ({label})", LEARNERS[l], BACKBONES[b]));
                }
            }
        }
    }
    let anchors = [
        (
            netscore(44.2, 950048.0, 1035.0, NetScoreParams::DEFAULT).unwrap(),
            48.0,
        ),
        (
            netscore(9.8, 950048.0, 1041.0, NetScoreParams::DEFAULT).unwrap(),
            -12.3,
        ),
        (
            netscore(9.8, 950048.0, 1041.0, NetScoreParams::ORIGINAL).unwrap(),
            -115.9,
        ),
    ];
    let anchors_ok = anchors.iter().all(|(g, e)| (g - e).abs() <= NETSCORE_TOL);
    Outcome::new(
        misses.is_empty() && anchors_ok,
        format!(
            "{} of {checked} published triplets within tolerance (0.15 / 0.2); named examples {}{}",
            checked - misses.len(),
            if anchors_ok {
                "reproduced"
            } else {
                "NOT reproduced"
            },
            if misses.is_empty() {
                String::new()
            } else {
                format!("; misses: {}", misses.join(", "))
            }
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Per-backbone (iid, class-iid) accuracies for one learner.
type OrderingRows = [([f64; 5], [f64; 5]); 8];

const PLACES365: OrderingRows = [
    ([29.4, 33.7, 34.7, 33.4, 29.6], [0.5, 0.6, 1.7, 1.6, 0.3]),
    ([41.2, 45.3, 46.6, 45.9, 40.8], [0.7, 0.9, 6.1, 6.3, 0.4]),
    ([3.0, 9.4, 25.5, 25.2, 0.3], [3.0, 9.4, 25.5, 25.2, 0.3]),
    ([9.6, 16.9, 29.1, 28.3, 16.0], [9.6, 16.9, 29.1, 28.3, 16.0]),
    (
        [29.4, 34.0, 36.8, 36.4, 32.8],
        [29.4, 34.0, 36.8, 36.4, 32.8],
    ),
    (
        [41.0, 44.8, 45.6, 45.1, 40.4],
        [16.2, 19.3, 26.2, 25.6, 16.4],
    ),
    (
        [41.3, 45.7, 46.3, 45.7, 41.5],
        [29.5, 32.6, 35.8, 35.0, 28.8],
    ),
    (
        [36.9, 40.3, 41.7, 41.0, 36.6],
        [36.9, 40.3, 41.7, 41.0, 36.6],
    ),
];

const PLACES_LT: OrderingRows = [
    ([15.2, 18.5, 21.3, 20.6, 14.5], [1.7, 2.8, 7.1, 7.3, 1.5]),
    ([16.9, 21.0, 23.8, 23.0, 17.3], [1.8, 3.4, 9.7, 9.7, 0.6]),
    ([1.5, 5.0, 19.9, 21.3, 0.1], [1.5, 5.0, 19.9, 21.3, 0.1]),
    ([8.9, 14.9, 26.2, 24.5, 14.6], [8.9, 14.9, 26.2, 24.5, 14.6]),
    (
        [26.5, 31.0, 33.6, 32.9, 30.0],
        [26.5, 31.0, 33.6, 32.9, 30.0],
    ),
    (
        [27.3, 29.9, 32.6, 31.9, 26.7],
        [16.6, 20.5, 24.1, 23.9, 17.9],
    ),
    (
        [29.4, 32.2, 34.0, 33.1, 28.5],
        [26.6, 29.5, 31.9, 31.3, 26.8],
    ),
    (
        [29.0, 31.8, 33.8, 32.8, 30.0],
        [29.0, 31.9, 33.8, 32.8, 30.0],
    ),
];

/// Summary table: (iid, class-iid, H-mean) for Places-365 then Places-LT.
const SUMMARY: [[f64; 6]; 8] = [
    [32.2, 0.9, 1.8, 18.0, 4.1, 6.7],
    [44.0, 2.9, 5.4, 20.4, 5.0, 8.1],
    [12.7, 12.7, 12.7, 9.6, 9.6, 9.6],
    [20.0, 20.0, 20.0, 17.8, 17.8, 17.8],
    [33.9, 33.9, 33.9, 30.8, 30.8, 30.8],
    [43.4, 20.7, 28.1, 29.7, 20.6, 24.3],
    [44.1, 32.3, 37.3, 31.4, 29.2, 30.3],
    [39.3, 39.3, 39.3, 31.5, 31.5, 31.5],
];

/// Instance-ordering accuracies per backbone with the published mean.
const INSTANCE: [([f64; 5], f64); 8] = [
    ([79.3, 88.0, 93.5, 94.2, 79.6], 86.9),
    ([83.5, 91.5, 95.8, 96.3, 82.1], 89.8),
    ([31.1, 52.6, 78.0, 78.8, 1.5], 48.4),
    ([37.4, 47.7, 73.9, 72.4, 34.6], 53.2),
    ([72.9, 78.9, 85.9, 86.7, 79.7], 80.8),
    ([89.3, 94.2, 97.0, 97.4, 90.7], 93.7),
    ([92.1, 95.6, 97.7, 97.8, 92.9], 95.2),
    ([95.6, 98.2, 98.8, 98.8, 95.0], 97.3),
];

fn aggregation_exactness() -> Outcome {
    let mut failures = Vec::new();
    let close = |got: f64, want: f64| (got - want).abs() <= AGGREGATE_TOL;

    for (a, b, want) in [(44.1, 32.3, 37.3), (39.3, 39.3, 39.3)] {
        let got = harmonic_mean(a, b);
        if !close(got, want) {
            failures.push(format!("H({a}, {b}) = {got:.3}, expected {want}"));
        }
    }

    // The H-mean column is the harmonic mean of the unrounded
    // backbone-averaged accuracies, so rebuild it from the per-backbone
    // values.
    let mut h_checked = 0;
    let mut rounded_route_misses = Vec::new();
    for (name, rows, offset) in [("Places-365", &PLACES365, 0), ("Places-LT", &PLACES_LT, 3)] {
        for (l, (iid, cls)) in rows.iter().enumerate() {
            let iid_mean = mean_across_backbones(iid).unwrap();
            let cls_mean = mean_across_backbones(cls).unwrap();
            let h = harmonic_mean(iid_mean, cls_mean);
            let printed = &SUMMARY[l][offset..offset + 3];
            for (what, got, want) in [
                ("iid", iid_mean, printed[0]),
                ("class-iid", cls_mean, printed[1]),
                ("H-mean", h, printed[2]),
            ] {
                h_checked += 1;
                if !close(got, want) {
                    failures.push(format!("{name} {} {what}: {got:.3} vs {want}", LEARNERS[l]));
                }
            }
            let from_rounded = harmonic_mean(printed[0], printed[1]);
            if !close(from_rounded, printed[2]) {
                rounded_route_misses.push(format!(
                    "{name} {}: H({}, {}) = {from_rounded:.3} vs printed {} (unrounded inputs give {h:.3})",
                    LEARNERS[l], printed[0], printed[1], printed[2]
                ));
            }
        }
    }
    for m in &rounded_route_misses {
        println!("    note: harmonic mean of the rounded printed pair misses: {m}");
    }

    for (l, (values, want)) in INSTANCE.iter().enumerate() {
        let got = mean_across_backbones(values).unwrap();
        if !close(got, *want) {
            failures.push(format!("instance mean {}: {got:.3} vs {want}", LEARNERS[l]));
        }
    }
    for f in &failures {
        println!("    miss: {f}");
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "named H examples, {h_checked} summary cells rebuilt from per-backbone values, {} instance means; {} misses",
            INSTANCE.len(),
            failures.len()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn memory_deltas() -> Outcome {
    let (k, d) = (40, 576);
    let stored = |cfg: LearnerConfig| cfg.build(k, d, 0).unwrap().stored_scalars();
    let ncm = stored(LearnerConfig::Ncm);
    let slda = stored(LearnerConfig::slda());
    let fine_tune = stored(LearnerConfig::fine_tune(1e-3));
    let replay2 = stored(LearnerConfig::replay(1e-3, 2));
    let replay20 = stored(LearnerConfig::replay(1e-3, 20));

    // Differences between published totals on the 576-dim backbone.
    let published_slda = 1_281_824u64 - 950_048;
    let published_replay20 = 1_410_848u64 - 950_048;
    let published_replay2 = 996_128u64 - 950_048;

    let checks = [
        ("SLDA - NCM", slda - ncm, 331_776u64),
        ("Replay(20pc) - Fine-Tune", replay20 - fine_tune, 460_800),
        ("Replay(2pc) - Fine-Tune", replay2 - fine_tune, 46_080),
    ];
    let mut ok = published_slda == 576 * 576
        && published_replay20 == 20 * 40 * 576
        && published_replay2 == 2 * 40 * 576;
    let mut parts = Vec::new();
    for (name, got, want) in checks {
        ok &= got == want;
        parts.push(format!("{name} = {got} (expected {want})"));
    }
    Outcome::new(ok, parts.join(", "))
}

// ---------------------------------------------------------------- 4

fn gaussian_vec(rng: &mut StdRng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Three Gaussian classes sharing a correlated covariance.
fn lda_sample(rng: &mut StdRng, means: &[Vec<f64>], mix: &DMatrix<f64>) -> (Vec<f64>, usize) {
    let y = rng.random_range(0..means.len());
    let z = DVector::from_vec(gaussian_vec(rng, mix.ncols()));
    let x = mix * z + DVector::from_column_slice(&means[y]);
    (x.as_slice().to_vec(), y)
}

fn streaming_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let d = 8;

    // Running mean and Welford against two-pass statistics on data with a
    // large offset.
    let n = 10_000;
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            gaussian_vec(&mut rng, d)
                .into_iter()
                .enumerate()
                .map(|(j, v)| 1e3 * (j as f64 + 1.0) + (j as f64 + 0.5) * v)
                .collect()
        })
        .collect();
    let mut rm = RunningMean::new(d);
    let mut wf = WelfordAccumulator::new(d);
    for x in &xs {
        rm.update(x).unwrap();
        wf.update(x).unwrap();
    }
    let two_pass_mean: Vec<f64> = (0..d)
        .map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n as f64)
        .collect();
    let two_pass_var: Vec<f64> = (0..d)
        .map(|j| {
            xs.iter()
                .map(|x| (x[j] - two_pass_mean[j]).powi(2))
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect();
    let mean_err = (0..d)
        .map(|j| rel_err(rm.mean()[j], two_pass_mean[j]))
        .fold(0.0, f64::max);
    let var = wf.sample_variance();
    let var_err = (0..d)
        .map(|j| rel_err(var[j], two_pass_var[j]))
        .fold(0.0, f64::max);

    // SLDA covariance against a replay of the recurrence written in matrix
    // form, with class means recomputed from prefix sums.
    let classes = 3;
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            gaussian_vec(&mut rng, d)
                .into_iter()
                .map(|v| 2.0 * v)
                .collect()
        })
        .collect();
    let mix = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else if j < i {
            0.4 * ((i * 7 + j * 3) % 5) as f64 / 5.0
        } else {
            0.0
        }
    });
    let train: Vec<(Vec<f64>, usize)> = (0..500)
        .map(|_| lda_sample(&mut rng, &means, &mix))
        .collect();
    let mut slda = Slda::new(classes, d, 1e-4).unwrap();
    for (x, y) in &train {
        slda.fit_one(x, *y).unwrap();
    }
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    let mut sums = vec![DVector::<f64>::zeros(d); classes];
    let mut counts = vec![0usize; classes];
    for (t, (x, y)) in train.iter().enumerate() {
        let x = DVector::from_column_slice(x);
        let mu = if counts[*y] == 0 {
            DVector::zeros(d)
        } else {
            &sums[*y] / counts[*y] as f64
        };
        let dev = &x - mu;
        let t = t as f64;
        sigma = (sigma * t + (&dev * dev.transpose()) * (t / (t + 1.0))) / (t + 1.0);
        sums[*y] += &x;
        counts[*y] += 1;
    }
    let sigma_err = (slda.covariance().sigma() - &sigma).abs().max();

    // Batch LDA: two-pass class means, pooled within-class covariance, the
    // same shrinkage, and an LU inverse.
    let class_means: Vec<DVector<f64>> =
        (0..classes).map(|k| &sums[k] / counts[k] as f64).collect();
    let mut pooled = DMatrix::<f64>::zeros(d, d);
    for (x, y) in &train {
        let dev = DVector::from_column_slice(x) - &class_means[*y];
        pooled += &dev * dev.transpose();
    }
    pooled /= train.len() as f64;
    let eps = 1e-4;
    let shrunk = pooled * (1.0 - eps) + DMatrix::<f64>::identity(d, d) * eps;
    let precision = shrunk
        .lu()
        .try_inverse()
        .expect("shrunk covariance is invertible");
    let batch_predict = |x: &[f64]| {
        let x = DVector::from_column_slice(x);
        let scores: Vec<f64> = class_means
            .iter()
            .map(|mu| {
                let w = &precision * mu;
                w.dot(&x) - 0.5 * w.dot(mu)
            })
            .collect();
        argmax(&scores)
    };
    let probes = 1000;
    let agree = (0..probes)
        .filter(|_| {
            let (x, _) = lda_sample(&mut rng, &means, &mix);
            slda.predict(&x).unwrap() == batch_predict(&x)
        })
        .count();
    let agreement = agree as f64 / probes as f64;

    Outcome::new(
        mean_err <= MEAN_REL_TOL
            && var_err <= VARIANCE_REL_TOL
            && sigma_err <= SIGMA_TOL
            && agreement >= LDA_MIN_AGREEMENT,
        format!(
            "mean rel err {mean_err:.1e}, variance rel err {var_err:.1e}, sigma max err {sigma_err:.1e}, \
             batch LDA agreement {agree}/{probes}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn synthetic(cfg: SynthConfig) -> Dataset {
    synthesize_gaussian_dataset(&cfg).unwrap().0
}

fn train_stream(ds: &Dataset) -> Vec<(Vec<f64>, usize)> {
    ds.manifest()
        .train()
        .map(|r| ds.sample(r.sample_id).unwrap())
        .collect()
}

fn order_invariance() -> Outcome {
    let ds = synthetic(SynthConfig {
        classes: 10,
        dim: 16,
        train_per_class: 100,
        test_per_class: 30,
        seed: 5,
        ..Default::default()
    });
    let stream = train_stream(&ds);
    assert_eq!(stream.len(), 1000);
    let pool = LabeledPool::test_split(&ds).unwrap();
    let (k, d) = (ds.num_classes(), ds.dim());

    let mut rng = StdRng::seed_from_u64(5);
    let mut runs = Vec::new();
    for _ in 0..10 {
        let mut order = stream.clone();
        order.shuffle(&mut rng);
        let mut ncm = Ncm::new(k, d);
        let mut sovr = Sovr::new(k, d);
        let mut nb = NaiveBayes::new(k, d, 1e-4).unwrap();
        for (x, y) in &order {
            ncm.fit_one(x, *y).unwrap();
            sovr.fit_one(x, *y).unwrap();
            nb.fit_one(x, *y).unwrap();
        }
        let means = |ms: Vec<&[f64]>| ms.into_iter().map(<[f64]>::to_vec).collect::<Vec<_>>();
        runs.push((
            [
                means(ncm.means().iter().map(RunningMean::mean).collect()),
                means(sovr.means().iter().map(RunningMean::mean).collect()),
                means(
                    nb.accumulators()
                        .iter()
                        .map(WelfordAccumulator::mean)
                        .collect(),
                ),
            ],
            [
                evaluate(&ncm, &pool, None).unwrap(),
                evaluate(&sovr, &pool, None).unwrap(),
                evaluate(&nb, &pool, None).unwrap(),
            ],
        ));
    }
    let (ref_means, ref_acc) = &runs[0];
    let mut worst = 0.0f64;
    let mut acc_identical = true;
    for (means, acc) in &runs[1..] {
        for (a, b) in means.iter().zip(ref_means) {
            for (ra, rb) in a.iter().zip(b) {
                for (va, vb) in ra.iter().zip(rb) {
                    worst = worst.max((va - vb).abs());
                }
            }
        }
        acc_identical &= acc
            .iter()
            .zip(ref_acc)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Outcome::new(
        worst <= ORDER_TOL && acc_identical,
        format!(
            "max class-mean deviation {worst:.1e} over 10 permutations; accuracies (NCM {:.2}, SOvR {:.2}, NB {:.2}) {}",
            ref_acc[0],
            ref_acc[1],
            ref_acc[2],
            if acc_identical { "identical" } else { "DIFFER" }
        ),
    )
}

// ---------------------------------------------------------------- 6

fn identity_slda_is_ncm() -> Outcome {
    let ds = synthetic(SynthConfig {
        seed: 6,
        ..Default::default()
    });
    let (k, d) = (ds.num_classes(), ds.dim());
    let mut slda = Slda::identity_precision(k, d);
    let mut ncm = Ncm::new(k, d);
    for (x, y) in train_stream(&ds) {
        slda.fit_one(&x, y).unwrap();
        ncm.fit_one(&x, y).unwrap();
    }
    // Probes spread over the region the class means occupy.
    let mut rng = StdRng::seed_from_u64(6);
    let probes = 1000;
    let agree = (0..probes)
        .filter(|_| {
            let x: Vec<f64> = gaussian_vec(&mut rng, d)
                .into_iter()
                .map(|v| 6.0 * v)
                .collect();
            slda.predict(&x).unwrap() == ncm.predict(&x).unwrap()
        })
        .count();
    Outcome::new(
        agree == probes,
        format!("{agree}/{probes} predictions equal"),
    )
}

// ---------------------------------------------------------------- 7

/// Mean softmax cross-entropy plus `lambda/2 ||W||^2`, written out here so
/// the finite differences do not go through the library.
fn oracle_loss(theta: &[f64], k: usize, d: usize, lambda: f64, batch: &[(Vec<f64>, usize)]) -> f64 {
    let (w, b) = theta.split_at(k * d);
    let mut total = 0.0;
    for (x, y) in batch {
        let z: Vec<f64> = (0..k)
            .map(|c| b[c] + (0..d).map(|j| w[c * d + j] * x[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[*y];
    }
    total / batch.len() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn central_difference(theta: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            t[i] = theta[i] + FD_STEP;
            let up = f(&t);
            t[i] = theta[i] - FD_STEP;
            let down = f(&t);
            t[i] = theta[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(f64::MIN_POSITIVE)
}

fn params_of(head: &LinearHead) -> Vec<f64> {
    head.weights().iter().chain(head.bias()).copied().collect()
}

fn gradient_correctness() -> Outcome {
    let (k, d, lambda, lr) = (4, 8, 1e-2, 0.5);
    let sgd = SgdConfig {
        lr,
        weight_decay: lambda,
        momentum: 0.0,
    };
    let mut rng = StdRng::seed_from_u64(7);
    let instances = 100;
    let mut worst = [0.0f64; 3];

    // Analytic gradient of single samples at random parameters.
    for _ in 0..instances {
        let w = gaussian_vec(&mut rng, k * d);
        let b = gaussian_vec(&mut rng, k);
        let x = gaussian_vec(&mut rng, d);
        let y = rng.random_range(0..k);
        let head = LinearHead::with_parameters(k, d, w, b, sgd).unwrap();
        let g = head.gradient(&[(&x, y)]).unwrap();
        let analytic: Vec<f64> = g.weights.iter().chain(&g.bias).copied().collect();
        let batch = [(x, y)];
        let fd = central_difference(&params_of(&head), |t| oracle_loss(t, k, d, lambda, &batch));
        worst[0] = worst[0].max(relative_gap(&analytic, &fd));
    }

    // Fine-tune: with momentum 0 one step moves the parameters by exactly
    // -lr times the gradient.
    let head = LinearHead::with_parameters(
        k,
        d,
        gaussian_vec(&mut rng, k * d),
        gaussian_vec(&mut rng, k),
        sgd,
    )
    .unwrap();
    let mut ft = FineTune::from_head(head);
    for _ in 0..instances {
        let x = gaussian_vec(&mut rng, d);
        let y = rng.random_range(0..k);
        let before = params_of(ft.head());
        ft.fit_one(&x, y).unwrap();
        let step: Vec<f64> = before
            .iter()
            .zip(params_of(ft.head()))
            .map(|(a, b)| (a - b) / lr)
            .collect();
        let batch = [(x, y)];
        let fd = central_difference(&before, |t| oracle_loss(t, k, d, lambda, &batch));
        worst[1] = worst[1].max(relative_gap(&step, &fd));
    }

    // Replay: the step uses the new sample plus the whole buffer whenever
    // the replay count covers the buffer's capacity.
    let head = LinearHead::with_parameters(
        k,
        d,
        gaussian_vec(&mut rng, k * d),
        gaussian_vec(&mut rng, k),
        sgd,
    )
    .unwrap();
    let mut replay = Replay::with_head(head, 2, 50, 7).unwrap();
    for _ in 0..instances {
        let x = gaussian_vec(&mut rng, d);
        let y = rng.random_range(0..k);
        let mut batch = vec![(x.clone(), y)];
        for c in 0..k {
            for s in replay.buffer().class_samples(c) {
                batch.push((s.clone(), c));
            }
        }
        let before = params_of(replay.head());
        replay.fit_one(&x, y).unwrap();
        let step: Vec<f64> = before
            .iter()
            .zip(params_of(replay.head()))
            .map(|(a, b)| (a - b) / lr)
            .collect();
        let fd = central_difference(&before, |t| oracle_loss(t, k, d, lambda, &batch));
        worst[2] = worst[2].max(relative_gap(&step, &fd));
    }

    Outcome::new(
        worst.iter().all(|&w| w <= GRAD_REL_TOL),
        format!(
            "max relative gap vs central differences over {instances} instances each: head gradient {:.1e}, \
             fine-tune step {:.1e}, replay step {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- 8

fn loaded(name: &str, ds: Dataset) -> LoadedDataset {
    let backbone = BackboneConstant::new("synthetic", ds.dim(), 1);
    LoadedDataset::new(name, backbone, ds).unwrap()
}

fn forgetting_trend() -> Outcome {
    let ds = loaded(
        "synthetic",
        synthetic(SynthConfig {
            classes: 10,
            dim: 32,
            seed: 7,
            ..Default::default()
        }),
    );
    let opts = RunOptions::default();
    let seeds = [1, 2, 3];
    let final_acc = |cfg: LearnerConfig, ordering: OrderingConfig| {
        let entry = LearnerEntry::from(cfg);
        seeds
            .iter()
            .map(|&s| {
                run_cell(&ds, &entry, &ordering, s, &opts)
                    .unwrap()
                    .final_accuracy
            })
            .sum::<f64>()
            / seeds.len() as f64
    };
    let mut acc = BTreeMap::new();
    for (name, cfg) in [
        ("fine_tune", LearnerConfig::fine_tune(1e-3)),
        ("slda", LearnerConfig::slda()),
        ("ncm", LearnerConfig::Ncm),
    ] {
        let iid = final_acc(cfg.clone(), OrderingConfig::Iid);
        let cls = final_acc(cfg, OrderingConfig::ClassIid);
        acc.insert(name, (iid, cls));
    }
    let (ft_iid, ft_cls) = acc["fine_tune"];
    let gap = |n: &str| (acc[n].0 - acc[n].1).abs();
    Outcome::new(
        ft_cls < FORGET_RATIO * ft_iid && gap("slda") < STABLE_GAP && gap("ncm") < STABLE_GAP,
        format!(
            "fine-tune iid {ft_iid:.1} vs class-iid {ft_cls:.1} (ratio {:.3}); SLDA {:.1}/{:.1}; NCM {:.1}/{:.1}",
            ft_cls / ft_iid,
            acc["slda"].0,
            acc["slda"].1,
            acc["ncm"].0,
            acc["ncm"].1
        ),
    )
}

// ---------------------------------------------------------------- 9

fn replay_fuzz() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let total = 100_000;
    let mut done = 0;
    let mut trials = 0;
    let mut evictions = 0;
    let mut next_id = 0u64;
    while done < total {
        trials += 1;
        let k = rng.random_range(2..=20);
        let q = if rng.random_bool(0.5) { 2 } else { 20 };
        let mut buf = ReplayBuffer::new(k, q, rng.random()).unwrap();
        let cap = buf.capacity();
        assert_eq!(cap, k * q);
        // Skewed label distribution so class counts become unequal.
        let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
        let wsum: f64 = weights.iter().sum();
        let steps = rng.random_range(1..=4 * cap).min(total - done);
        let mut shadow: Vec<Vec<u64>> = vec![Vec::new(); k];
        for _ in 0..steps {
            let mut u = rng.random::<f64>() * wsum;
            let mut y = k - 1;
            for (c, w) in weights.iter().enumerate() {
                if u < *w {
                    y = c;
                    break;
                }
                u -= w;
            }
            let id = next_id;
            next_id += 1;
            let counts: Vec<usize> = shadow.iter().map(Vec::len).collect();
            let was_full = counts.iter().sum::<usize>() == cap;
            let evicted = buf.insert(&[id as f64], y);

            let observed: Vec<Vec<u64>> = (0..k)
                .map(|c| {
                    let mut ids: Vec<u64> =
                        buf.class_samples(c).iter().map(|v| v[0] as u64).collect();
                    ids.sort_unstable();
                    ids
                })
                .collect();
            let mut expected = shadow.clone();
            expected[y].push(id);
            match (was_full, evicted) {
                (false, None) => {}
                (true, Some(c)) => {
                    evictions += 1;
                    let max = *counts.iter().max().unwrap();
                    assert_eq!(
                        counts[c], max,
                        "evicted from class {c} with {} of max {max}",
                        counts[c]
                    );
                    // Exactly one previously stored element of class c is gone.
                    let gone: Vec<u64> = shadow[c]
                        .iter()
                        .filter(|i| observed[c].binary_search(i).is_err())
                        .copied()
                        .collect();
                    assert_eq!(gone.len(), 1, "class {c} lost {gone:?}");
                    expected[c].retain(|i| *i != gone[0]);
                }
                (full, ev) => panic!("full={full} but eviction {ev:?}"),
            }
            for e in &mut expected {
                e.sort_unstable();
            }
            assert_eq!(observed, expected, "buffer contents diverge");
            assert!(buf.len() <= cap && buf.len() == observed.iter().map(Vec::len).sum::<usize>());
            shadow = observed;
        }
        done += steps;
    }
    Outcome::new(
        true,
        format!("{done} insertions over {trials} buffers, {evictions} evictions, all from a most-represented class"),
    )
}

// ---------------------------------------------------------------- 10

/// Exhaustive reimplementation: per-class lists of (centroid, count).
struct CbclOracle {
    classes: Vec<Vec<(Vec<f64>, u64)>>,
    merges: usize,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl CbclOracle {
    fn total(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    fn fit(&mut self, x: &[f64], y: usize) {
        let cs = &mut self.classes[y];
        let nearest =
            (0..cs.len()).min_by(|&i, &j| euclid(&cs[i].0, x).total_cmp(&euclid(&cs[j].0, x)));
        match nearest {
            Some(i) if euclid(&cs[i].0, x) < CBCL_THRESHOLD => {
                let (c, n) = &mut cs[i];
                for (cv, xv) in c.iter_mut().zip(x) {
                    *cv += (xv - *cv) / (*n as f64 + 1.0);
                }
                *n += 1;
            }
            _ => cs.push((x.to_vec(), 1)),
        }
        while self.total() > CBCL_CAP {
            // Every same-class pair, every class.
            let mut all: Vec<(f64, usize, usize, usize)> = Vec::new();
            for (k, cs) in self.classes.iter().enumerate() {
                for i in 0..cs.len() {
                    for j in 0..cs.len() {
                        if i < j {
                            all.push((euclid(&cs[i].0, &cs[j].0), k, i, j));
                        }
                    }
                }
            }
            let &(_, k, i, j) = all
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("over capacity implies a same-class pair");
            let (cj, nj) = self.classes[k].remove(j);
            let (ci, ni) = &mut self.classes[k][i];
            let n = (*ni + nj) as f64;
            for (a, b) in ci.iter_mut().zip(&cj) {
                *a = (*a * *ni as f64 + b * nj as f64) / n;
            }
            *ni += nj;
            self.merges += 1;
        }
    }
}

fn sorted_state(cs: impl Iterator<Item = (Vec<f64>, u64)>) -> Vec<(Vec<f64>, u64)> {
    let mut v: Vec<_> = cs.collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    v
}

type ClassPicker = fn(&mut StdRng, usize, usize) -> usize;

fn cbcl_cap() -> Outcome {
    let d = 4;
    let mut rng = StdRng::seed_from_u64(10);
    // (name, classes, samples, coordinate spread, class of step t)
    let scenarios: [(&str, usize, usize, f64, ClassPicker); 4] = [
        ("scattered", 5, 600, 200.0, |r, k, _| r.random_range(0..k)),
        ("near threshold", 3, 600, 25.0, |r, k, _| {
            r.random_range(0..k)
        }),
        ("one class floods", 8, 500, 300.0, |r, k, t| {
            if t < 2 * k {
                t % k
            } else if r.random_bool(0.9) {
                0
            } else {
                r.random_range(0..k)
            }
        }),
        ("classes equal cap", CBCL_CAP, 400, 300.0, |r, k, t| {
            if t < k {
                t
            } else {
                r.random_range(0..3)
            }
        }),
    ];
    let mut max_seen = 0;
    let mut merges = 0;
    let mut steps = 0;
    for (name, k, n, spread, pick) in scenarios {
        let mut learner =
            Cbcl::new(k, d, CBCL_THRESHOLD, CBCL_CAP, MergeRule::CountWeighted).unwrap();
        let mut oracle = CbclOracle {
            classes: vec![Vec::new(); k],
            merges: 0,
        };
        for t in 0..n {
            let y = pick(&mut rng, k, t);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-spread..spread)).collect();
            learner.fit_one(&x, y).unwrap();
            oracle.fit(&x, y);
            steps += 1;
            let total = learner.total_centroids();
            max_seen = max_seen.max(total);
            assert!(
                total <= CBCL_CAP,
                "{name}: {total} centroids after step {t}"
            );
            for c in 0..k {
                let got = sorted_state(
                    learner
                        .centroids(c)
                        .iter()
                        .map(|c| (c.vector.clone(), c.count)),
                );
                let want = sorted_state(oracle.classes[c].iter().cloned());
                assert_eq!(
                    got.len(),
                    want.len(),
                    "{name}: class {c} centroid count at step {t}"
                );
                for ((gv, gn), (wv, wn)) in got.iter().zip(&want) {
                    assert_eq!(gn, wn, "{name}: class {c} counts at step {t}");
                    assert!(
                        euclid(gv, wv) < 1e-9,
                        "{name}: class {c} centroid at step {t}"
                    );
                }
            }
        }
        merges += oracle.merges;
    }
    Outcome::new(
        max_seen <= CBCL_CAP,
        format!("{steps} steps over 4 adversarial streams, peak {max_seen} centroids, {merges} cap merges all matching the exhaustive oracle"),
    )
}

// ---------------------------------------------------------------- 11

fn determinism() -> Outcome {
    let ds = loaded(
        "small",
        synthetic(SynthConfig {
            classes: 5,
            dim: 8,
            train_per_class: 40,
            test_per_class: 10,
            seed: 11,
            ..Default::default()
        }),
    );
    let opts = RunOptions {
        base_seed: 11,
        checkpoints: CheckpointPolicy::All,
        ..Default::default()
    };
    let learners = [
        LearnerConfig::Ncm,
        LearnerConfig::sovr(),
        LearnerConfig::slda(),
        LearnerConfig::naive_bayes(),
        LearnerConfig::Perceptron,
        LearnerConfig::fine_tune(1e-2),
        LearnerConfig::replay(1e-2, 2),
        LearnerConfig::cbcl(),
    ];
    let orderings = [
        OrderingConfig::Iid,
        OrderingConfig::ClassIid,
        OrderingConfig::Instance,
        OrderingConfig::LowShotInstance,
        OrderingConfig::KShotClassIid { k: 5 },
    ];
    let mut cells = 0;
    let mut mismatches = Vec::new();
    for cfg in learners {
        let entry = LearnerEntry::from(cfg);
        for ordering in &orderings {
            for seed in [1, 2] {
                let a = run_cell(&ds, &entry, ordering, seed, &opts).unwrap();
                let b = run_cell(&ds, &entry, ordering, seed, &opts).unwrap();
                cells += 1;
                let bits = |r: &streamcl::metrics::ExperimentRecord| {
                    r.curve
                        .iter()
                        .map(|p| (p.position, p.seen_classes, p.accuracy.to_bits()))
                        .collect::<Vec<_>>()
                };
                if bits(&a) != bits(&b) {
                    mismatches.push(format!("{} {} s{seed}", entry.label(), ordering.label()));
                }
            }
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!(
            "{cells} cells run twice, {} curve mismatches",
            mismatches.len()
        ),
    )
}
