//! Acceptance run. Prints one `criterion N: PASS|FAIL` line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgefbg::baseline::{calibrate, predict_record_bl, predict_shape_bl, BlCalibration, CalibrationSample};
use edgefbg::dictionary::{build_dictionary, NormIndex};
use edgefbg::evaluation::{resolution_ablation, similarity_census, split_dataset, summarize, SplitSpec};
use edgefbg::explain::{loss_saliency, marker_saliency, slope_contrast, DEFAULT_SPACING};
use edgefbg::geometry::{
    estimate_curvature_torsion, integrate_frenet, markers_from_curve, resample_spline, CurvatureProfile, Interpolation,
    MarkerShape, ProfileSample, Vec3,
};
use edgefbg::nn::{
    predict_outputs, smooth_l1, smooth_l1_value, scaled_architecture, Adam, Examples, InitScheme, Layer, LayerSpec,
    ModelConfig, Network, Param, Tensor, TrainConfig, Trainer,
};
use edgefbg::optics::{
    default_layout, generate_dataset, sample_random_shape, sensor_curve, simulate_sample, Dataset, EffectsConfig,
    SampleRecord, ScenarioKind, SensorLayout, ShapeSamplerConfig, NO_GROUP, TEMPLATE_COUNT, TEMPLATE_REPETITIONS, TEMPLATE_SEGMENTS,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    summarize(v).unwrap().median
}

fn tips(preds: &[MarkerShape], truths: &[MarkerShape]) -> Vec<f64> {
    preds.iter().zip(truths).map(|(p, t)| (p.tip() - t.tip()).norm()).collect()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1

fn geometry_oracles() -> Verdict {
    let t0 = Instant::now();
    let (kappa, len) = (10.0, 0.3);
    let arc = integrate_frenet(&CurvatureProfile::constant(kappa, 0.0, 0.0, len).unwrap(), 1e-4).unwrap();
    let tip = markers_from_curve(&arc, 20).unwrap().tip();
    let r = 1.0 / kappa;
    let expected = Vec3::new(r * (kappa * len).sin(), r * (1.0 - (kappa * len).cos()), 0.0) * 1e3;
    let arc_err = (tip - expected).norm();

    // helix (a cos t, a sin t, b t) sampled densely, then resampled at 0.1 mm
    let (a, b) = (0.1f64, 0.05f64);
    let c = (a * a + b * b).sqrt();
    let pts: Vec<Vec3> = (0..=600)
        .map(|i| {
            let t = i as f64 * 0.3 / c / 600.0;
            Vec3::new(a * t.cos(), a * t.sin(), b * t)
        })
        .collect();
    let curve = resample_spline(&pts, 1e-4).unwrap();
    let e = estimate_curvature_torsion(&curve, 0.15).unwrap();
    let (k_true, t_true) = (a / (c * c), b / (c * c));
    let (dk, dt) = ((e.kappa - k_true).abs() / k_true, (e.tau - t_true).abs() / t_true);
    let el = t0.elapsed();
    verdict(
        arc_err < 0.01 && dk < 0.01 && dt < 0.02 && el < Duration::from_secs(1),
        format!("arc tip {arc_err:.2e} mm, helix kappa {:.3}% tau {:.3}%, {:.2} s", dk * 100.0, dt * 100.0, secs(el)),
    )
}

// 2

fn segment_profile(layout: &SensorLayout, rng: &mut ChaCha8Rng) -> CurvatureProfile {
    let p = &layout.plane_positions;
    let starts = std::iter::once(0.0).chain(p.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let samples = starts
        .map(|s| ProfileSample { s, kappa: rng.random_range(0.58..33.5), theta: rng.random_range(-PI..PI), tau: 0.0 })
        .collect();
    CurvatureProfile::new(samples, layout.length, Interpolation::PiecewiseConstant).unwrap()
}

fn bl_exact_regime() -> Verdict {
    let t0 = Instant::now();
    let l = default_layout();
    let e = EffectsConfig::ideal();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sims = |n: usize, rng: &mut ChaCha8Rng| {
        (0..n).map(|_| simulate_sample(&segment_profile(&l, rng), &l, &e, rng).unwrap()).collect::<Vec<_>>()
    };
    let cal: Vec<_> = sims(200, &mut rng)
        .iter()
        .map(|s| CalibrationSample::from_record(&SampleRecord::from_sample(s, &l, NO_GROUP), &l).unwrap())
        .collect();
    let calib = calibrate(&cal, &l).unwrap();
    let errors: Vec<f64> = sims(100, &mut rng)
        .iter()
        .map(|s| (predict_shape_bl(&s.scans[0].intensities, &calib, &l).unwrap().tip() - s.shape.tip()).norm())
        .collect();
    let m = median(&errors);
    let el = t0.elapsed();
    verdict(m < 1.0 && el < Duration::from_secs(30), format!("median tip {m:.3} mm over 100 shapes, {:.1} s", secs(el)))
}

// 3

fn ablation_trend() -> Verdict {
    let t0 = Instant::now();
    let l = default_layout();
    let cfg = ShapeSamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let curves: Vec<_> =
        (0..200).map(|_| sensor_curve(&sample_random_shape(&cfg, &mut rng).unwrap(), &l).unwrap()).collect();
    let rows = resolution_ablation(&curves, &[0.05, 0.025, 0.01], l.length).unwrap();
    let m: Vec<f64> = rows.iter().map(|r| r.tip.median).collect();
    let el = t0.elapsed();
    verdict(
        m[0] >= 3.0 * m[2] && m[0] >= m[1] && m[1] >= m[2] && el < Duration::from_secs(120),
        format!("medians 50/25/10 mm: {:.2} / {:.2} / {:.2} mm, ratio {:.1}, {:.1} s", m[0], m[1], m[2], m[0] / m[2], secs(el)),
    )
}

// shared trained model for 4-8 and 10

struct Bench {
    train: Dataset,
    test: Dataset,
    traj: Dataset,
    templates: Dataset,
    net: Network<f32>,
    calib: BlCalibration,
    train_time: Duration,
    beta: f64,
}

fn shapes(d: &Dataset) -> Vec<MarkerShape> {
    d.records.iter().map(SampleRecord::marker_shape).collect()
}

fn bench() -> Bench {
    let t0 = Instant::now();
    let l = default_layout();
    let e = EffectsConfig::default();
    let s = ShapeSamplerConfig::default();
    let all = generate_dataset(ScenarioKind::Random, 20_000, &l, &e, &s, 1).unwrap();
    let traj = generate_dataset(ScenarioKind::Trajectory, 1000, &l, &e, &s, 2).unwrap();
    let templates = generate_dataset(ScenarioKind::Template, TEMPLATE_COUNT, &l, &e, &s, 3).unwrap();
    let (train, val, test) = split_dataset(&all, &SplitSpec { seed: 3, ..Default::default() }).unwrap();

    let cal: Vec<_> = train.records.iter().take(3000).map(|r| CalibrationSample::from_record(r, &l).unwrap()).collect();
    let calib = calibrate(&cal, &l).unwrap();

    let cfg = TrainConfig { epochs: 40, learning_rate: 1e-3, batch_size: 256, seed: 5, ..Default::default() };
    let net = Network::<f32>::new(&scaled_architecture(), 7).unwrap();
    let (tr, va) = (Examples::from_records(&train.records).unwrap(), Examples::from_records(&val.records).unwrap());
    let mut trainer = Trainer::new(net, &cfg).unwrap();
    trainer.run_epochs(&tr, &va, cfg.epochs).unwrap();
    let (net, history) = trainer.finish();
    let best = history.best().unwrap();
    println!(
        "trained {} epochs on {} samples in {:.0} s, best epoch {} val rmse {:.2} mm",
        cfg.epochs,
        tr.len(),
        secs(t0.elapsed()),
        best.epoch,
        best.val_rmse_mm
    );
    Bench { train, test, traj, templates, net, calib, train_time: t0.elapsed(), beta: cfg.smooth_l1_beta }
}

impl Bench {
    fn dl(&self, d: &Dataset) -> Vec<MarkerShape> {
        let x: Vec<f32> = d.records.iter().flat_map(|r| r.scans.iter().copied()).collect();
        predict_outputs(&self.net, &x)
            .unwrap()
            .chunks(60)
            .map(|c| MarkerShape::from_flat(&c.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap())
            .collect()
    }

    fn bl(&self, d: &Dataset) -> Vec<MarkerShape> {
        d.records.iter().map(|r| predict_record_bl(r, &self.calib, &d.header.layout).unwrap()).collect()
    }
}

fn core_claim(b: &Bench) -> Verdict {
    let truth = shapes(&b.test);
    let (dl, bl) = (median(&tips(&b.dl(&b.test), &truth)), median(&tips(&b.bl(&b.test), &truth)));
    let within = b.train_time < Duration::from_secs(30 * 60);
    verdict(
        dl <= 0.5 * bl && within,
        format!(
            "random-split test: network {dl:.2} mm, intensity model {bl:.2} mm, factor {:.1} (desk target 5: {}), setup {:.0} s",
            bl / dl,
            if bl / dl >= 5.0 { "met" } else { "missed" },
            secs(b.train_time)
        ),
    )
}

fn distribution_shift(b: &Bench) -> Verdict {
    let test = median(&tips(&b.dl(&b.test), &shapes(&b.test)));
    let traj = median(&tips(&b.dl(&b.traj), &shapes(&b.traj)));
    verdict(traj >= 1.5 * test, format!("network: trajectory {traj:.2} mm vs random split {test:.2} mm, ratio {:.2}", traj / test))
}

fn dictionary_comparison(b: &Bench) -> Verdict {
    let dict = build_dictionary(&b.train.records).unwrap();
    let index = NormIndex::build(&dict);
    let preds: Vec<MarkerShape> =
        b.traj.records.iter().map(|r| index.query(&dict, &r.scans).unwrap().0.shape).collect();
    let truth = shapes(&b.traj);
    let (dl, dm) = (median(&tips(&b.dl(&b.traj), &truth)), median(&tips(&preds, &truth)));
    verdict(dl <= dm, format!("trajectory test: network {dl:.2} mm, dictionary {dm:.2} mm"))
}

fn census(b: &Bench) -> Verdict {
    let train = shapes(&b.train);
    let rnd = similarity_census(&shapes(&b.test), &train, 5.0, 100).unwrap();
    let trj = similarity_census(&shapes(&b.traj), &train, 5.0, 100).unwrap();
    let pass = rnd > 0.0 && rnd >= 3.0 * trj;
    verdict(pass, format!("fraction with 100 training shapes within 5 mm: random {:.2}%, trajectory {:.2}%", rnd * 100.0, trj * 100.0))
}

fn templates(b: &Bench) -> Verdict {
    let truth = shapes(&b.templates);
    let (dl, bl) = (tips(&b.dl(&b.templates), &truth), tips(&b.bl(&b.templates), &truth));
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, seg) in TEMPLATE_SEGMENTS.iter().enumerate() {
        let idx: Vec<usize> = b
            .templates
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.group as usize / TEMPLATE_REPETITIONS == k)
            .map(|(i, _)| i)
            .collect();
        let pick = |v: &[f64]| median(&idx.iter().map(|&i| v[i]).collect::<Vec<_>>());
        let (d, m) = (pick(&dl), pick(&bl));
        pass &= d < m;
        parts.push(format!("[{:.2},{:.2}] {d:.1}/{m:.1}", seg[0], seg[1]));
    }
    let (d, m) = (median(&dl), median(&bl));
    pass &= m >= 2.0 * d;
    verdict(pass, format!("network/intensity model medians: all {d:.1}/{m:.1} mm (factor {:.1}); {}", m / d, parts.join(", ")))
}

// 9

/// Worst relative and absolute gaps between backprop and central differences.
/// Gradients below 1e-6 in magnitude, such as a bias feeding a batch norm
/// (exactly zero), are judged by the absolute gap alone.
#[derive(Default, Clone, Copy)]
struct GradGap {
    rel: f64,
    abs_small: f64,
}

impl GradGap {
    fn add(&mut self, a: f64, n: f64) {
        let scale = a.abs().max(n.abs());
        if scale >= 1e-6 {
            self.rel = self.rel.max((a - n).abs() / scale);
        } else {
            self.abs_small = self.abs_small.max((a - n).abs());
        }
    }
}

/// Gradient check of `L = Σ r·y` over every parameter and input element.
fn grad_check(layers: Vec<LayerSpec>, seed: u64) -> GradGap {
    let mut cfg = ModelConfig::new(layers, InitScheme::XavierNormal);
    (cfg.input_channels, cfg.input_len, cfg.output_size) = (2, 12, 4);
    let mut net = Network::<f64>::new(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let batch = 3;
    let x: Vec<f64> = (0..batch * 24).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..batch * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &mut Network<f64>, x: &[f64]| {
        net.reseed(9);
        let y = net.forward(&Tensor::new(vec![batch, 2, 12], x.to_vec()).unwrap()).unwrap();
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
    };
    loss(&mut net, &x);
    net.zero_grad();
    net.reseed(9);
    let _ = net.forward(&Tensor::new(vec![batch, 2, 12], x.clone()).unwrap()).unwrap();
    let dx = net.backward(&Tensor::new(vec![batch, 4], r.clone()).unwrap()).unwrap().into_data();
    let grads: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
    let h = 1e-6;
    let mut worst = GradGap::default();
    for (pi, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = net.params()[pi].value[i];
            net.params_mut()[pi].value[i] = orig + h;
            let up = loss(&mut net, &x);
            net.params_mut()[pi].value[i] = orig - h;
            let down = loss(&mut net, &x);
            net.params_mut()[pi].value[i] = orig;
            worst.add(g[i], (up - down) / (2.0 * h));
        }
    }
    for i in 0..x.len() {
        let (mut a, mut b) = (x.clone(), x.clone());
        a[i] += h;
        b[i] -= h;
        worst.add(dx[i], (loss(&mut net, &a) - loss(&mut net, &b)) / (2.0 * h));
    }
    worst
}

fn adam_two_steps() -> f64 {
    let (lr, l2, b1, b2, eps) = (0.01, 0.05, 0.9, 0.999, 1e-8);
    let p0 = [0.5, -1.5, 2.0];
    let g = [[0.3, -0.2, 1e-3], [-0.1, 0.4, 0.0]];
    let mut param = Param::new(p0.to_vec());
    let mut adam = Adam::<f64>::new(lr, l2);
    let mut want = p0;
    let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
    for (t, gt) in g.iter().enumerate() {
        param.grad = gt.to_vec();
        adam.step(&mut [&mut param]).unwrap();
        let t = t as i32 + 1;
        for i in 0..3 {
            let gi = gt[i] + l2 * want[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            want[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    param.value.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn smooth_l1_joint() -> f64 {
    let mut worst = 0.0f64;
    for beta in [0.5, 1.0, 4.04] {
        let d = 1e-10;
        for x in [beta, -beta] {
            let below = smooth_l1_value(x * (1.0 - d), beta);
            let above = smooth_l1_value(x * (1.0 + d), beta);
            worst = worst.max((smooth_l1_value(x, beta) - 0.5 * beta).abs());
            worst = worst.max((below - above).abs());
            let (_, g_in) = smooth_l1(&[x * (1.0 - d)], &[0.0], beta).unwrap();
            let (_, g_out) = smooth_l1(&[x * (1.0 + d)], &[0.0], beta).unwrap();
            worst = worst.max((g_in[0] - g_out[0]).abs());
        }
    }
    worst
}

fn numerics() -> Verdict {
    use LayerSpec as L;
    let cases: Vec<(&str, Vec<LayerSpec>)> = vec![
        ("linear", vec![L::Flatten, L::linear(4)]),
        ("conv", vec![L::conv(3, 1), L::Flatten, L::linear(4)]),
        ("strided conv", vec![L::conv(3, 2), L::Flatten, L::linear(4)]),
        ("relu", vec![L::Flatten, L::linear(6), L::Relu, L::linear(4)]),
        ("pool", vec![L::conv(3, 1), L::pool(2, 2), L::Flatten, L::linear(4)]),
        ("batch norm 1d", vec![L::batch_norm(), L::Flatten, L::linear(4)]),
        ("batch norm fc", vec![L::Flatten, L::linear(6), L::batch_norm(), L::linear(4)]),
        ("dropout", vec![L::Flatten, L::linear(6), L::dropout(0.3), L::linear(4)]),
    ];
    let (mut worst, mut small) = (("", 0.0f64), 0.0f64);
    for (k, (name, layers)) in cases.into_iter().enumerate() {
        let g = grad_check(layers, k as u64 + 1);
        if g.rel >= worst.1 {
            worst = (name, g.rel);
        }
        small = small.max(g.abs_small);
    }
    let (adam, sl1) = (adam_two_steps(), smooth_l1_joint());
    verdict(
        worst.1 < 1e-4 && small < 1e-8 && adam < 1e-12 && sl1 < 1e-9,
        format!(
            "worst gradient rel error {:.1e} ({}), near-zero gradients within {small:.1e}, adam {adam:.1e}, smooth L1 joint {sl1:.1e}",
            worst.1, worst.0
        ),
    )
}

// 10

fn linear_net(seed: u64) -> Network<f64> {
    let cfg = ModelConfig::new(vec![LayerSpec::Flatten, LayerSpec::linear(60)], InitScheme::XavierNormal);
    let mut net = Network::new(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut() {
        p.value.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    net
}

fn saliency(b: &Bench) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x: Vec<f32> = (0..570).map(|_| rng.random_range(0.0..1.0)).collect();

    let mut net = linear_net(42);
    let j = 101;
    if let Layer::Linear(l) = &mut net.layers_mut()[1] {
        for o in 0..60 {
            for c in 0..3 {
                l.weight.value[o * 570 + c * 190 + j] = 0.0;
            }
        }
    }
    let truth = b.templates.records[0].marker_shape();
    let zero = loss_saliency(&net, &x, &truth, 4.04, DEFAULT_SPACING).unwrap().deltas[j] == 0.0
        && marker_saliency(&net, &x, DEFAULT_SPACING).unwrap().row(j).iter().all(|&d| d == 0.0);

    // marker displacement of a linear model: h · Σ_c W[:, c, j]
    let net = linear_net(43);
    let w = match &net.layers()[1] {
        Layer::Linear(l) => l.weight.value.clone(),
        _ => unreachable!(),
    };
    let h = 0.1;
    let map = marker_saliency(&net, &x, h).unwrap();
    let mut closed = 0.0f64;
    for j in 0..190 {
        for m in 0..20 {
            let d: f64 = (0..3)
                .map(|k| {
                    let o = 3 * m + k;
                    let s: f64 = (0..3).map(|c| w[o * 570 + c * 190 + j]).sum();
                    (h * s).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            closed = closed.max((map.row(j)[m] - d).abs());
        }
    }

    // trained model: one sample per template pose
    let layout = &b.templates.header.layout;
    let mut contrasts = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in &b.templates.records {
        if seen.insert(r.group) {
            let l = loss_saliency(&b.net, &r.scans, &r.marker_shape(), b.beta, DEFAULT_SPACING).unwrap();
            let m = marker_saliency(&b.net, &r.scans, DEFAULT_SPACING).unwrap();
            contrasts.push((slope_contrast(&l.deltas, layout).unwrap(), slope_contrast(&m.totals(), layout).unwrap()));
        }
    }
    let loss_c: Vec<f64> = contrasts.iter().map(|c| c.0).collect();
    let mark_c: Vec<f64> = contrasts.iter().map(|c| c.1).collect();
    let (lm, mm) = (median(&loss_c), median(&mark_c));
    let min_m = mark_c.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        zero && closed < 1e-9 && mm > 1.0 && lm > 1.0,
        format!(
            "ignored element zero: {zero}, linear closed form {closed:.1e}; flank/far contrast over {} template poses: marker median {mm:.2} (min {min_m:.2}), loss median {lm:.2}",
            contrasts.len()
        ),
    )
}

// 11

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_edgefbg"))
        .current_dir(dir)
        .env("EDGEFBG_THREADS", "1")
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Verdict {
    let config = r#"{"train": {"epochs": 2, "batch_size": 64},
        "ablation": {"shapes": 20},
        "tuner": {"space": {"n_conv": [1, 2], "n_fc": [1, 2], "channels": [4, 8], "fc_units": [32]},
                  "budget": {"n_configs": 3, "eta": 3, "max_epochs": 3, "seed": 8}}}"#;
    let steps: &[&[&str]] = &[
        &["config", "--config", "c.json", "--out", "effective.json"],
        &["gen", "--config", "c.json", "--kind", "random", "--count", "300", "--seed", "1", "--out", "random.bin"],
        &["gen", "--config", "c.json", "--kind", "trajectory", "--count", "60", "--seed", "2", "--out", "traj.bin"],
        &["gen", "--config", "c.json", "--kind", "template", "--seed", "3", "--out", "templates.bin"],
        &["train", "--config", "c.json", "--data", "random.bin", "--out", "model.ckpt"],
        &["tune", "--config", "c.json", "--data", "random.bin", "--log", "tune.jsonl"],
        &["calibrate", "--config", "c.json", "--dataset", "random.bin", "--out", "calib.json"],
        &["dict", "--config", "c.json", "--dataset", "random.bin", "--out", "dict.efbg"],
        &[
            "eval", "--config", "c.json", "--dataset", "traj.bin", "--methods", "bl,dl,dict", "--checkpoint", "model.ckpt",
            "--calibration", "calib.json", "--dictionary", "dict.efbg", "--out", "table.csv",
        ],
        &["explain", "--config", "c.json", "--checkpoint", "model.ckpt", "--dataset", "templates.bin", "--sample-id", "300", "--out-dir", "saliency"],
        &["ablate", "--config", "c.json", "--out", "ablation.csv"],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        std::fs::write(d.path().join("c.json"), config).unwrap();
        for s in steps {
            if !run_cli(d.path(), s) {
                return verdict(false, format!("command failed: {}", s.join(" ")));
            }
        }
    }
    let (a, b) = (files_under(dirs[0].path()), files_under(dirs[1].path()));
    if a != b {
        return verdict(false, "runs produced different file sets".into());
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|f| std::fs::read(dirs[0].path().join(f)).unwrap() != std::fs::read(dirs[1].path().join(f)).unwrap())
        .map(|f| f.display().to_string())
        .collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} commands, {} output files byte-identical across two runs", steps.len(), a.len())
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

fn main() {
    // `cargo test -- --list` and filters from the harness do not apply here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        println!("criterion {n:>2}: {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    };
    report(1, "geometry oracles", geometry_oracles());
    report(2, "intensity model exact regime", bl_exact_regime());
    report(3, "plane spacing ablation", ablation_trend());
    report(9, "numerics", numerics());
    report(11, "reproducibility", reproducibility());
    let b = bench();
    report(4, "network vs intensity model", core_claim(&b));
    report(5, "train/test distribution effect", distribution_shift(&b));
    report(6, "network vs dictionary", dictionary_comparison(&b));
    report(7, "similarity census", census(&b));
    report(8, "template bends", templates(&b));
    report(10, "saliency", saliency(&b));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
