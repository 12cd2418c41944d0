//! Acceptance run: one pass/fail line per criterion.
//!
//! The end-to-end model (criteria 4, 5, 6, 8, 9, 11) is trained once and cached
//! under the cargo target directory, keyed by a hash of its configuration.
//! Failed criteria print `FAIL` lines; the exit status reflects them only when
//! `ACCEPTANCE_STRICT=1` is set.

mod common;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
use nocs_pose::denoiser::{
    forward_diffuse, loss_and_grads, make_schedule, train, ConditionSet, NoiseSchedule, Prediction, SampleMode,
    TrainConfig, TrainingSample, UNetConfig, UNetParams,
};
use nocs_pose::eval::{pose_errors, symmetric_axis_error};
use nocs_pose::features::{pca_fit, FeatureMap, Provenance};
use nocs_pose::geometry::{Grid, Intrinsics, NocsMap, SimilarityTransform};
use nocs_pose::pipeline::{
    batch_sampler, build_training_set, estimate, hypothesis_seed, register_hypotheses, resolve_noise_bound,
    sample_hypotheses, EstimateOptions, InferenceRequest, PoseModel, SampledNocs,
};
use nocs_pose::registration::{robust_register, RobustParams};
use nocs_pose::synthgen::{
    generate_builtin, icosphere_directions, write_dataset, AugmentParams, DatasetView, GenerateOptions, Manifest,
    RenderOutput,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, name: &'static str, pass: bool, detail: String) -> Outcome {
    let o = Outcome { id, name, pass, detail };
    report(&o);
    o
}

fn report(o: &Outcome) {
    println!(
        "{} {:<9} {}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    );
    std::io::stdout().flush().ok();
}

fn progress(msg: &str) {
    eprintln!("  .. {msg}");
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- criterion 1

fn icosphere_counts() -> Outcome {
    let t = Instant::now();
    let counts: Vec<usize> = (0..=2).map(|s| icosphere_directions(s).unwrap().len()).collect();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        "1",
        "icosphere counts",
        counts == [12, 42, 162] && secs < 1.0,
        format!("subdiv 0/1/2 -> {counts:?} in {secs:.3}s"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn random_sample(size: usize, feat: usize, category: usize, rng: &mut ChaCha8Rng) -> TrainingSample {
    let mut unit = || -> f32 { rng.random_range(0.0..1.0) };
    let normal = Grid::from_fn(size, size, |_, _| {
        let v = Vector3::new(unit() - 0.5, unit() - 0.5, -1.0).normalize();
        [v.x, v.y, v.z]
    });
    let rgb = Grid::from_fn(size, size, |_, _| [unit(), unit(), unit()]);
    let fdata: Vec<f32> = (0..size * size * feat).map(|_| unit()).collect();
    let nocs = Grid::from_fn(size, size, |_, _| [unit(), unit(), unit()]);
    let mask = Grid::from_fn(size, size, |x, y| (x + 2 * y) % 7 != 0);
    TrainingSample {
        cond: ConditionSet {
            normal: Some(normal),
            rgb: Some(rgb),
            feat: Some(FeatureMap::from_vec(size, size, feat, fdata, Provenance::Projected).unwrap()),
            category: Some(category),
        },
        target: NocsMap::new(nocs, mask).unwrap(),
    }
}

fn gradient_check() -> Outcome {
    let t = Instant::now();
    let cfg = UNetConfig::reduced();
    assert_eq!((cfg.channels.len(), cfg.channels[0], cfg.image_size, cfg.feat_channels), (2, 8, 16, 2));
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();
    let params = UNetParams::<f64>::init(&cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = vec![random_sample(16, 2, 1, &mut rng), random_sample(16, 2, 2, &mut rng)];
    let loss_rng = ChaCha8Rng::seed_from_u64(77);
    let (_, grads) = loss_and_grads(&params, &batch, &sched, 0.0, &mut loss_rng.clone()).unwrap();
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (bi, spec) in params.specs().iter().enumerate() {
        let n = spec.shape.iter().product::<usize>();
        let largest = (0..n).max_by(|&a, &b| grads[bi][a].abs().total_cmp(&grads[bi][b].abs())).unwrap();
        let mut picks = vec![0, n / 2, n - 1, largest];
        picks.dedup();
        for j in picks {
            let mut p = params.clone();
            p.values_mut()[bi][j] += h;
            let (lp, _) = loss_and_grads(&p, &batch, &sched, 0.0, &mut loss_rng.clone()).unwrap();
            p.values_mut()[bi][j] -= 2.0 * h;
            let (lm, _) = loss_and_grads(&p, &batch, &sched, 0.0, &mut loss_rng.clone()).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let an = grads[bi][j];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            checked += 1;
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}]", spec.name));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        "2",
        "gradient check",
        worst.0 < 1e-4 && secs < 600.0,
        format!(
            "{} blocks, {checked} entries, worst relative error {:.2e} at {} ({secs:.1}s)",
            params.specs().len(),
            worst.0,
            worst.1
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Double-double running product of `1 − β_k`.
fn alpha_bar_oracle(steps: usize, b0: f64, b1: f64) -> f64 {
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }
    let (mut hi, mut lo) = (1.0f64, 0.0f64);
    for k in 1..=steps {
        // β_k = b0 + (k−1)(b1 − b0)/(K − 1), carried in double-double
        let (num_hi, num_lo) = two_prod((k - 1) as f64, b1 - b0);
        let q = num_hi / (steps - 1) as f64;
        let (qp, qe) = two_prod(q, (steps - 1) as f64);
        let q_lo = ((num_hi - qp) - qe + num_lo) / (steps - 1) as f64;
        let (bh, bl) = two_sum(b0, q);
        let (a_hi, a_lo0) = two_sum(1.0, -bh);
        let a_lo = a_lo0 - bl - q_lo;
        let (p, e) = two_prod(hi, a_hi);
        let e = e + hi * a_lo + lo * a_hi;
        let (s, t) = two_sum(p, e);
        hi = s;
        lo = t;
    }
    hi + lo
}

fn diffusion_statistics() -> Outcome {
    let t = Instant::now();
    let sched = make_schedule(1000, 1e-4, 0.02).unwrap();
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = (0.0f64, 0usize);
    for k in 1..=1000 {
        // signed values are standard normal, i.e. n0 = (z + 1)/2
        let n0: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z + 1.0) / 2.0
            })
            .collect();
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = forward_diffuse(&n0, k, &eps, &sched).unwrap();
        let m = mean(&x);
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        if (var - 1.0).abs() > worst.0 {
            worst = ((var - 1.0).abs(), k);
        }
    }
    let oracle = alpha_bar_oracle(1000, 1e-4, 0.02);
    let rel = (sched.alpha_bar(1000) - oracle).abs() / oracle;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        "3",
        "diffusion statistics",
        worst.0 < 0.05 && rel < 1e-9 && secs < 60.0,
        format!(
            "max |var − 1| = {:.4} (k = {}); alpha_bar_K = {:.6e}, oracle relative error {rel:.1e} ({secs:.1}s)",
            worst.0,
            worst.1,
            sched.alpha_bar(1000)
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn registration_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 0.03;
    let (mut accurate, mut agree, mut slowest) = (0, 0, 0.0f64);
    for i in 0..100 {
        let scale = rng.random_range(0.5..3.0);
        let inst = registration_instance(&mut rng, 1000, 0.7, 0.01, scale);
        let params = RobustParams {
            noise_bound: eps,
            seed: i,
            ..Default::default()
        };
        let t = Instant::now();
        let h = robust_register(&inst.corrs, &params).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let truth = &inst.truth;
        let s_err = (h.transform.scale / truth.scale - 1.0).abs();
        let r_err = geodesic_deg(h.transform.rotation(), truth.rotation());
        let t_err = (h.transform.translation() - truth.translation()).norm();
        if s_err < 0.02 && r_err < 2.0 && t_err < 0.02 {
            accurate += 1;
        }
        let ours = inlier_set(&inst.corrs, &h.transform, eps);
        let (_, oracle) = ransac_oracle(&inst.corrs, eps, 10_000, &mut rng);
        if symmetric_difference_ratio(&ours, &oracle) <= 0.05 {
            agree += 1;
        }
    }
    outcome(
        "7",
        "registration robustness",
        accurate >= 95 && agree >= 90 && slowest <= 1.0,
        format!("{accurate}/100 accurate, {agree}/100 agree with RANSAC, slowest {slowest:.3}s"),
    )
}

// ---------------------------------------------------------------- criterion 10

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues descending.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 * a.norm_squared().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let vals = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (vals, vecs)
}

fn pca_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_angle, mut worst_var) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let d = rng.random_range(2..=16usize);
        let m = rng.random_range(1..=d);
        let n = 4 * d + 30;
        // distinct axis scales under a random orthogonal mixing
        let q = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)).qr().q();
        let scales: Vec<f64> = (0..d).map(|i| 3.0 * 0.75f64.powi(i as i32) * rng.random_range(0.9..1.1)).collect();
        let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z = DMatrix::from_fn(d, 1, |i, _| { let z: f64 = StandardNormal.sample(&mut rng); scales[i] * z });
                let x = &q * z;
                (0..d).map(|i| x[(i, 0)] + offset[i]).collect()
            })
            .collect();
        let basis = pca_fit(&rows, m).unwrap();

        let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let cov = DMatrix::from_fn(d, d, |i, j| {
            rows.iter().map(|r| (r[i] - mu[i]) * (r[j] - mu[j])).sum::<f64>() / (n - 1) as f64
        });
        let (vals, vecs) = jacobi_eigen(&cov);
        let u_oracle = vecs.columns(0, m).into_owned();
        let u_ours = DMatrix::from_fn(d, m, |r, c| basis.components[c][r]);
        // sine of the largest principal angle
        let resid = &u_ours - &u_oracle * (u_oracle.transpose() * &u_ours);
        let sin_max = resid.singular_values().max();
        worst_angle = worst_angle.max(sin_max.clamp(0.0, 1.0).asin());

        for c in 0..m {
            let proj: Vec<f64> = rows
                .iter()
                .map(|r| (0..d).map(|j| (r[j] - basis.mean[j]) * basis.components[c][j]).sum())
                .collect();
            let pm = mean(&proj);
            let pv = proj.iter().map(|p| (p - pm).powi(2)).sum::<f64>() / (n - 1) as f64;
            let scale = vals[0].abs().max(1.0);
            worst_var = worst_var.max((pv - vals[c]).abs() / scale).max((basis.variances[c] - vals[c]).abs() / scale);
        }
    }
    outcome(
        "10",
        "PCA oracle",
        worst_angle < 1e-6 && worst_var < 1e-8,
        format!("50 instances: max principal angle {worst_angle:.2e} rad, max variance deviation {worst_var:.2e}"),
    )
}

// ---------------------------------------------------------------- criterion 12

fn axis_error_suite() -> Outcome {
    let id = Matrix3::identity();
    let flip = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).into_inner();
    let ortho = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
    let tilt = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_4).into_inner();
    let antipodal = symmetric_axis_error(&flip, &id);
    let orthogonal = symmetric_axis_error(&ortho, &id);
    let diagonal = symmetric_axis_error(&tilt, &id);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let base = symmetric_axis_error(&a, &b);
        let ya = Rotation3::from_axis_angle(&Vector3::y_axis(), rng.random_range(-3.2..3.2)).into_inner();
        let yb = Rotation3::from_axis_angle(&Vector3::y_axis(), rng.random_range(-3.2..3.2)).into_inner();
        worst = worst.max((symmetric_axis_error(&(a * ya), &(b * yb)) - base).abs());
    }
    let pass = antipodal.abs() < 1e-9
        && (orthogonal - 90.0).abs() < 1e-9
        && (diagonal - 45.0).abs() < 1e-9
        && worst < 1e-9;
    outcome(
        "12",
        "symmetric axis error",
        pass,
        format!("antipodal {antipodal:.2e}°, orthogonal {orthogonal:.9}°, 45° -> {diagonal:.9}°, y-rotation drift {worst:.1e}°"),
    )
}

// ---------------------------------------------------------------- end-to-end model

const RUN_RENDER: usize = 32;
const RUN_SIZE: usize = 32;
const RUN_FEAT: usize = 6;
const RUN_STEPS: usize = 10_000;
const RUN_BATCH: usize = 16;
const RUN_LR: f64 = 2e-3;
const RUN_WARMUP: usize = 200;
const RUN_DROP: f64 = 0.25;
const HOLDOUT_SEED: u64 = 11;
const LOSS_WINDOW: usize = 500;

fn run_options() -> GenerateOptions {
    GenerateOptions {
        categories: vec!["cup".into(), "laptop".into()],
        models_per_category: 3,
        subdiv: 2,
        image_size: RUN_RENDER,
        ..GenerateOptions::default()
    }
}

fn run_unet() -> UNetConfig {
    UNetConfig {
        image_size: RUN_SIZE,
        feat_channels: RUN_FEAT,
        channels: vec![16, 32, 64],
        res_blocks: 1,
        groups: 8,
        time_sinusoid_dim: 32,
        time_dim: 64,
        category_dim: 16,
        categories: 2,
        zero_init_output: true,
        prediction: Prediction::Velocity,
    }
}

fn run_train_config() -> TrainConfig {
    TrainConfig {
        image_size: RUN_SIZE,
        batch_size: RUN_BATCH,
        learning_rate: RUN_LR,
        drop_rate: RUN_DROP,
        steps: RUN_STEPS,
        warmup_steps: RUN_WARMUP,
        ..TrainConfig::default()
    }
}

fn run_schedule() -> NoiseSchedule {
    make_schedule(1000, 1e-4, 0.02).unwrap()
}

/// Held-out view indices: 20 uniformly drawn views, topped up so at least 20
/// asymmetric and 10 symmetric views are held out. Everything else trains.
struct Split {
    general: Vec<usize>,
    asymmetric: Vec<usize>,
    symmetric: Vec<usize>,
    train: Vec<usize>,
}

fn symmetric_view(manifest: &Manifest, v: &DatasetView) -> bool {
    manifest
        .categories
        .iter()
        .find(|c| c.name == v.category)
        .and_then(|c| c.models.iter().find(|m| m.name == v.model))
        .is_some_and(|m| m.symmetric)
}

fn split(manifest: &Manifest, views: &[DatasetView]) -> Split {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(HOLDOUT_SEED));
    let general: Vec<usize> = order[..20].to_vec();
    let mut asymmetric: Vec<usize> = general.iter().copied().filter(|&i| !symmetric_view(manifest, &views[i])).collect();
    let mut symmetric: Vec<usize> = general.iter().copied().filter(|&i| symmetric_view(manifest, &views[i])).collect();
    for &i in &order[20..] {
        let sym = symmetric_view(manifest, &views[i]);
        if !sym && asymmetric.len() < 20 {
            asymmetric.push(i);
        } else if sym && symmetric.len() < 10 {
            symmetric.push(i);
        }
    }
    asymmetric.truncate(20);
    symmetric.truncate(10);
    let held: std::collections::BTreeSet<usize> = general.iter().chain(&asymmetric).chain(&symmetric).copied().collect();
    let train = (0..views.len()).filter(|i| !held.contains(i)).collect();
    Split {
        general,
        asymmetric,
        symmetric,
        train,
    }
}

struct Run {
    dir: PathBuf,
    views: Vec<DatasetView>,
    intr: Intrinsics,
    split: Split,
    model: PoseModel,
    losses: Vec<f64>,
}

fn run_key() -> String {
    let desc = format!(
        "{} {:?} {:?} {:?} {:?} {HOLDOUT_SEED} {:?}",
        env!("CARGO_PKG_VERSION"),
        run_options(),
        run_unet(),
        run_train_config(),
        run_schedule().config(),
        AugmentParams::default(),
    );
    let mut h = DefaultHasher::new();
    desc.hash(&mut h);
    format!("{:016x}", h.finish())
}

fn prepare_run() -> Run {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(format!("run-{}", run_key()));
    let (manifest, views) = generate_builtin(&run_options()).unwrap();
    let intr = manifest.intrinsics;
    let split = split(&manifest, &views);
    let ckpt = dir.join("model.ckpt");
    let loss_path = dir.join("loss.json");
    let done = dir.join("complete");
    if done.exists() {
        progress(&format!("using cached model {}", ckpt.display()));
        let model = PoseModel::load(&ckpt).unwrap();
        let losses: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&loss_path).unwrap()).unwrap();
        return Run {
            dir,
            views,
            intr,
            split,
            model,
            losses,
        };
    }
    std::fs::create_dir_all(&dir).unwrap();
    write_dataset(&dir.join("data"), &manifest, &views).unwrap();
    let refs: Vec<&RenderOutput> = split.train.iter().map(|&i| &views[i].render).collect();
    progress(&format!("building {} training samples", refs.len()));
    let set = build_training_set(&refs, intr, RUN_SIZE, RUN_FEAT).unwrap();
    let mut params = UNetParams::<f32>::init(&run_unet(), 0).unwrap();
    let sched = run_schedule();
    let tc = run_train_config();
    let mut losses = Vec::with_capacity(RUN_STEPS);
    let t = Instant::now();
    progress(&format!("training {RUN_STEPS} steps (cached afterwards under {})", dir.display()));
    train(
        &mut params,
        &sched,
        &tc,
        batch_sampler(&set.samples, Some(AugmentParams::default())),
        |e, _| {
            losses.push(e.loss);
            if e.step % 1000 == 0 {
                let w = &losses[losses.len() - 1000..];
                progress(&format!("step {} mean loss {:.4} ({:.0}s)", e.step, mean(w), t.elapsed().as_secs_f64()));
            }
        },
    )
    .unwrap();
    let names = manifest.categories.iter().map(|c| c.name.clone()).collect();
    let model = PoseModel::new(params, sched, set.pca.clone(), names).unwrap();
    model.save(&ckpt).unwrap();
    std::fs::write(&loss_path, serde_json::to_string(&losses).unwrap()).unwrap();
    std::fs::write(&done, "").unwrap();
    Run {
        dir,
        views,
        intr,
        split,
        model,
        losses,
    }
}

fn request(run: &Run, i: usize, n_noises: usize, seed: u64) -> InferenceRequest {
    let mut req = InferenceRequest::from_render(&run.views[i].render, run.intr);
    req.n_noises = n_noises;
    req.seed = seed;
    req
}

fn ground_truth(v: &RenderOutput) -> SimilarityTransform {
    SimilarityTransform::new(v.scale, v.camera).unwrap()
}

fn training_progress(run: &Run) -> Outcome {
    let windows: Vec<f64> = run.losses.chunks(LOSS_WINDOW).take(10).map(mean).collect();
    let decreasing = windows.len() == 10 && windows.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = windows.iter().map(|w| format!("{w:.4}")).collect();
    outcome(
        "property",
        "training progress",
        decreasing,
        format!("{LOSS_WINDOW}-step loss means over the first 10 windows: {}", shown.join(" ")),
    )
}

fn nocs_mae(run: &Run) -> Outcome {
    let opts = EstimateOptions {
        mode: SampleMode::Fast,
        sample_steps: 10,
        ..EstimateOptions::default()
    };
    let mut maes = Vec::new();
    for &i in &run.split.general {
        let req = request(run, i, 1, i as u64);
        let (maps, _, _) = sample_hypotheses(&req, &run.model, &opts).unwrap();
        let gt = &run.views[i].render.nocs;
        let (mut s, mut n) = (0.0, 0usize);
        for ((p, q), (&m, &mg)) in maps[0]
            .full
            .values()
            .as_slice()
            .iter()
            .zip(gt.values().as_slice())
            .zip(maps[0].full.mask().as_slice().iter().zip(gt.mask().as_slice()))
        {
            if m && mg {
                s += (0..3).map(|c| (p[c] - q[c]).abs() as f64).sum::<f64>();
                n += 3;
            }
        }
        maes.push(s / n as f64);
    }
    let m = mean(&maes);
    outcome(
        "4",
        "toy training NOCS error",
        m < 0.15,
        format!("mean foreground MAE {m:.4} over {} held-out views (untrained baseline 1/3)", maes.len()),
    )
}

struct PoseRun {
    rot: Vec<f64>,
    trans_rel: Vec<f64>,
    scale_rel: Vec<f64>,
    below_median_picks: usize,
}

fn pose_run(run: &Run, views: &[usize], n_noises: usize) -> PoseRun {
    let mut out = PoseRun {
        rot: Vec::new(),
        trans_rel: Vec::new(),
        scale_rel: Vec::new(),
        below_median_picks: 0,
    };
    for &i in views {
        let v = &run.views[i].render;
        let res = estimate(&request(run, i, n_noises, 1000 + i as u64), &run.model, &EstimateOptions::default()).unwrap();
        let gt = ground_truth(v);
        let (r, t) = pose_errors(&res.best.transform, &gt);
        out.rot.push(r);
        out.trans_rel.push(t / v.camera.translation.norm());
        out.scale_rel.push((res.best.transform.scale / v.scale - 1.0).abs());
        let confs: Vec<f64> = res.hypotheses.iter().filter_map(|h| h.pose.map(|p| p.confidence)).collect();
        if res.best.confidence < median(&confs) {
            out.below_median_picks += 1;
        }
    }
    out
}

fn asymmetric_pose(six: &PoseRun) -> Outcome {
    let (r, t, s) = (median(&six.rot), median(&six.trans_rel), median(&six.scale_rel));
    outcome(
        "5",
        "asymmetric pose",
        r < 15.0 && t < 0.05 && s < 0.10,
        format!(
            "{} views, 6 hypotheses: median rotation {r:.2}°, translation {:.2}% of distance, scale {:.2}%",
            six.rot.len(),
            100.0 * t,
            100.0 * s
        ),
    )
}

/// Twist angle about the canonical y-axis of `gt⁻¹ · pred`.
fn azimuth(pred: &Matrix3<f64>, gt: &Matrix3<f64>) -> f64 {
    let r = gt.transpose() * pred;
    2.0 * (r[(0, 2)] - r[(2, 0)]).atan2(1.0 + r.trace())
}

fn circular_std(angles: &[f64]) -> f64 {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let rbar = (s * s + c * c).sqrt() / angles.len() as f64;
    (-2.0 * rbar.max(1e-300).ln()).sqrt().to_degrees()
}

fn symmetry_behavior(run: &Run) -> Outcome {
    let (mut axis, mut spread) = (Vec::new(), Vec::new());
    for &i in &run.split.symmetric {
        let v = &run.views[i].render;
        let res = estimate(&request(run, i, 20, 2000 + i as u64), &run.model, &EstimateOptions::default()).unwrap();
        let gt = ground_truth(v);
        axis.push(symmetric_axis_error(res.best.transform.rotation(), gt.rotation()));
        let az: Vec<f64> = res
            .hypotheses
            .iter()
            .filter_map(|h| h.pose.map(|p| azimuth(p.transform.rotation(), gt.rotation())))
            .collect();
        spread.push(circular_std(&az));
    }
    let (a, s) = (median(&axis), median(&spread));
    outcome(
        "6",
        "symmetry behavior",
        a < 15.0 && s > 45.0,
        format!(
            "{} cylinder views, 20 hypotheses: median axis error {a:.2}°, median azimuth circular std {s:.1}°",
            axis.len()
        ),
    )
}

fn oracle_bypass(run: &Run) -> Outcome {
    let (mut rot, mut trans, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    let mut views: Vec<usize> = run.split.general.clone();
    views.extend(&run.split.asymmetric);
    views.extend(&run.split.symmetric);
    views.sort_unstable();
    views.dedup();
    for &i in &views {
        let v = &run.views[i].render;
        let req = request(run, i, 1, i as u64);
        let seed = hypothesis_seed(req.seed, 0);
        let maps = vec![SampledNocs {
            index: 0,
            seed,
            square: v.nocs.clone(),
            full: v.nocs.clone(),
        }];
        let bound = resolve_noise_bound(&req, EstimateOptions::default().noise_bound).unwrap();
        let (best, _) = register_hypotheses(&req, maps, &RobustParams::default(), bound).unwrap();
        let gt = ground_truth(v);
        let (r, t) = pose_errors(&best.transform, &gt);
        rot = rot.max(r);
        trans = trans.max(t / v.camera.translation.norm());
        scale = scale.max((best.transform.scale / v.scale - 1.0).abs());
    }
    outcome(
        "8",
        "ground-truth NOCS bypass",
        rot < 1.0 && trans < 0.01 && scale < 0.01,
        format!(
            "{} views, worst: rotation {rot:.3}°, translation {:.3}% of distance, scale {:.3}%",
            views.len(),
            100.0 * trans,
            100.0 * scale
        ),
    )
}

fn selection_ablation(six: &PoseRun, one: &PoseRun) -> Outcome {
    let (m6, m1) = (mean(&six.rot), mean(&one.rot));
    outcome(
        "9",
        "hypothesis selection",
        m6 <= m1 && six.below_median_picks == 0,
        format!(
            "mean rotation error {m6:.2}° with 6 hypotheses vs {m1:.2}° with 1; below-median picks {}",
            six.below_median_picks
        ),
    )
}

fn cli_determinism(run: &Run) -> Outcome {
    let v = &run.views[run.split.general[0]];
    let view = format!("{}/{}/{}", v.category, v.model, v.view);
    let infer = |name: &str, threads: &str| -> Vec<(String, Vec<u8>)> {
        let out = run.dir.join("determinism").join(name);
        let _ = std::fs::remove_dir_all(&out);
        let status = Command::new(env!("CARGO_BIN_EXE_nocs-pose"))
            .args(["infer", "--checkpoint"])
            .arg(run.dir.join("model.ckpt"))
            .arg("--data")
            .arg(run.dir.join("data"))
            .args(["--view", &view, "--seed", "5", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .expect("spawn nocs-pose");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = infer("a", "1");
    let b = infer("b", "1");
    let c = infer("c", "3");
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    outcome(
        "11",
        "inference determinism",
        a == b && a == c && names.contains(&"result.json") && names.iter().any(|n| n.ends_with(".png")),
        format!(
            "{} files ({}) identical across two runs and 1 vs 3 threads: {}",
            a.len(),
            names.join(", "),
            a == b && a == c
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results = vec![icosphere_counts(), gradient_check(), diffusion_statistics()];
    results.push(registration_robustness());
    results.push(pca_oracle());
    results.push(axis_error_suite());

    // `-- --no-model` skips the criteria that need the trained model
    if std::env::args().any(|a| a == "--no-model") {
        println!("end-to-end criteria skipped");
        return;
    }
    let run = prepare_run();
    results.push(training_progress(&run));
    results.push(nocs_mae(&run));
    let six = pose_run(&run, &run.split.asymmetric, 6);
    let one = pose_run(&run, &run.split.asymmetric, 1);
    results.push(asymmetric_pose(&six));
    results.push(symmetry_behavior(&run));
    results.push(oracle_bypass(&run));
    results.push(selection_ablation(&six, &one));
    results.push(cli_determinism(&run));

    results.sort_by_key(|o| o.id.parse::<u32>().unwrap_or(u32::MAX));
    println!("\nsummary ({:.0}s):", started.elapsed().as_secs_f64());
    for o in &results {
        report(o);
    }
    let failed: Vec<&str> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
    } else {
        println!("failed: {}", failed.join(", "));
        // Failures are reported above; set ACCEPTANCE_STRICT=1 to turn them into a failing exit status.
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
            std::process::exit(1);
        }
    }
}
