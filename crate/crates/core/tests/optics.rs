use edgefbg::baseline::read_plane_intensities;
use edgefbg::geometry::*;
use edgefbg::optics::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn markers(p: &CurvatureProfile, l: &SensorLayout) -> MarkerShape {
    markers_from_curve(&sensor_curve(p, l).unwrap(), MARKER_COUNT).unwrap()
}

fn rmse(a: &MarkerShape, b: &MarkerShape) -> f64 {
    (a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len() as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn no_noise(mut e: EffectsConfig) -> EffectsConfig {
    e.noise_sigma = 0.0;
    e
}

#[test]
fn peak_heights_follow_cosine_law() {
    let l = default_layout();
    let e = EffectsConfig::cosine_only();
    let cfg = ShapeSamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = sample_random_shape(&cfg, &mut rng).unwrap();
        let got = read_plane_intensities(&clean_spectrum(&p, &l, &e).unwrap(), &l).unwrap();
        for (f, g) in l.fbgs.iter().zip(&got) {
            let b = p.at(l.plane_positions[f.plane_index]);
            let expected = (0.9 * (1.0 - 1500.0 * 2e-6 * b.kappa * (b.theta - f.phi).cos())).clamp(0.05, 1.0);
            assert!((g - expected).abs() < 1e-6, "{g} vs {expected}");
        }
    }
}

#[test]
fn tail_bend_is_visible_only_through_the_end_reflection() {
    let l = default_layout();
    let bent = template_shape([0.26, 0.29], 0.05, 0.0, &l).unwrap();
    let straight = CurvatureProfile::straight(0.3).unwrap();
    let normalized = |p: &CurvatureProfile, e: &EffectsConfig| {
        let c = clean_spectrum(p, &l, e).unwrap();
        finish_scan(&c, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().intensities
    };
    let max_diff = |e: &EffectsConfig| {
        normalized(&bent, e).iter().zip(normalized(&straight, e)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let on = no_noise(EffectsConfig::default());
    assert!(max_diff(&on) > 10.0 * EffectsConfig::default().noise_sigma, "{}", max_diff(&on));
    let mut off = on.clone();
    off.fresnel_tail.enabled = false;
    assert_eq!(max_diff(&off), 0.0);
}

#[test]
fn gentle_trajectory_steps_stay_within_five_mm() {
    let l = default_layout();
    let cfg = ShapeSamplerConfig {
        logit_bias: -6.0,
        logit_spread: 2.5,
        theta_spread: 0.3,
        n_modes: 20,
        trajectory_correlation: 0.99,
        ..Default::default()
    };
    let shapes: Vec<MarkerShape> = sample_trajectory(&cfg, 100, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .iter()
        .map(|p| markers(p, &l))
        .collect();
    let steps: Vec<f64> = shapes.windows(2).map(|w| rmse(&w[0], &w[1])).collect();
    assert!(median(steps) < 5.0);
}

#[test]
fn trajectory_steps_shrink_with_retention() {
    // AR(1) steps have sqrt(2 (1 - ρ)) of the spread between independent draws
    let l = default_layout();
    let mut cfg = ShapeSamplerConfig::default();
    cfg.trajectory_correlation = 0.99;
    let walk: Vec<MarkerShape> =
        sample_trajectory(&cfg, 400, &mut ChaCha8Rng::seed_from_u64(2)).unwrap().iter().map(|p| markers(p, &l)).collect();
    let step = median(walk.windows(2).map(|w| rmse(&w[0], &w[1])).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let free: Vec<MarkerShape> = (0..200).map(|_| markers(&sample_random_shape(&cfg, &mut rng).unwrap(), &l)).collect();
    let apart = median(free.chunks(2).map(|w| rmse(&w[0], &w[1])).collect());
    assert!(step < 0.25 * apart, "step {step} vs independent {apart}");
}

#[test]
fn kappa_stays_in_range_over_many_draws() {
    let cfg = ShapeSamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let p = sample_random_shape(&cfg, &mut rng).unwrap();
        assert!(p.min_kappa() >= 0.58 && p.max_kappa() <= 33.5);
    }
}

#[test]
fn template_dataset_layout() {
    let l = default_layout();
    let d = generate_dataset(ScenarioKind::Template, TEMPLATE_COUNT, &l, &EffectsConfig::default(), &ShapeSamplerConfig::default(), 5);
    let d = d.unwrap();
    assert_eq!(d.len(), 320);
    for r in &d.records {
        r.validate().unwrap();
        for k in 0..SCANS_PER_SAMPLE {
            let max = r.scan(k).iter().copied().fold(0.0f32, f32::max);
            assert!((max - 1.0).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bend_loss_never_raises_the_spectrum(seed in any::<u64>()) {
        let l = default_layout();
        let p = sample_random_shape(&ShapeSamplerConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let off = EffectsConfig::ideal();
        let mut on = off.clone();
        on.bendloss.enabled = true;
        let (a, b) = (clean_spectrum(&p, &l, &off).unwrap(), clean_spectrum(&p, &l, &on).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y <= x);
        }
        let (pa, pb) = (read_plane_intensities(&a, &l).unwrap(), read_plane_intensities(&b, &l).unwrap());
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert!(y <= x);
        }
    }

    #[test]
    fn emitted_scans_are_normalized(seed in any::<u64>(), sigma in 0.0f64..0.02) {
        let l = default_layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_random_shape(&ShapeSamplerConfig::default(), &mut rng).unwrap();
        let mut e = EffectsConfig::default();
        e.noise_sigma = sigma;
        let s = simulate_sample(&p, &l, &e, &mut rng).unwrap();
        prop_assert_eq!(s.scans.len(), 3);
        for scan in &s.scans {
            prop_assert_eq!(scan.intensities.len(), GRID_LEN);
            prop_assert!(scan.intensities.iter().all(|&v| v >= 0.0));
            let max = scan.intensities.iter().copied().fold(0.0, f64::max);
            prop_assert!((max - 1.0).abs() < 1e-12);
        }
    }
}
