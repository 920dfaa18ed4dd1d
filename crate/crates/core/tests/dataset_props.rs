mod common;

use std::f64::consts::FRAC_PI_2;

use crackscat::config::{item_rng, stream, PhysicsConfig};
use crackscat::dataset::*;
use crackscat::forward::{
    assemble_forward_matrix, CrackGeometry, ObservationSet, QuadratureGrid, SupportInterval,
};
use crackscat::linalg::{cnorm, csub, projector};
use crackscat::spectral::leading_subspace;
use crackscat::{Complex64, Error};
use proptest::prelude::*;

fn config(seed: u64) -> SampleConfig {
    SampleConfig::new(PhysicsConfig::default(), seed)
}

fn chi_square(values: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

#[test]
fn ball_radius_follows_the_volume_law() {
    let mut rng = common::rng(31);
    let draws: Vec<Vec<Complex64>> = (0..100_000)
        .map(|_| sample_complex_ball(&mut rng, 5))
        .collect();
    assert!(draws.iter().all(|r| cnorm(r) <= 1.0));
    let inside = draws.iter().filter(|r| cnorm(r) <= 0.9).count() as f64 / draws.len() as f64;
    assert!(
        (inside - 0.9f64.powi(10)).abs() <= 0.01,
        "fraction {inside}"
    );
    for k in 0..5 {
        let mean_re = draws.iter().map(|r| r[k].re).sum::<f64>() / draws.len() as f64;
        let mean_im = draws.iter().map(|r| r[k].im).sum::<f64>() / draws.len() as f64;
        assert!(mean_re.abs() <= 0.01 && mean_im.abs() <= 0.01);
    }
}

#[test]
fn crack_parameters_are_uniform() {
    let cfg = config(5);
    let n = 100_000;
    let mut cols = [vec![], vec![], vec![], vec![]];
    for i in 0..n {
        let mut rng = item_rng(cfg.seed, stream::DATASET, i);
        let (g, s) = sample_geometry_and_support(&mut rng, &cfg);
        for (c, v) in cols.iter_mut().zip([g.theta, g.offset, s.center, s.length]) {
            c.push(v);
        }
    }
    // 19 degrees of freedom; 43.8 is the 0.1% tail
    for (c, (lo, hi)) in cols.iter().zip([
        (-FRAC_PI_2, FRAC_PI_2),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (1.0, 3.0),
    ]) {
        assert!(c.iter().all(|v| (lo..=hi).contains(v)));
        let chi = chi_square(c, lo, hi, 20);
        assert!(chi < 43.8, "chi^2 = {chi}");
    }
    // the generator draws geometry first, so stored targets follow the same law
    let samples = generate_samples(&cfg, 0, 50).unwrap();
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.theta, cols[0][i]);
        assert_eq!(s.offset, cols[1][i]);
    }
}

#[test]
fn first_unit_coefficient_gives_the_first_singular_pair() {
    let physics = PhysicsConfig::default();
    let mut rng = common::rng(32);
    for _ in 0..10 {
        let (g, s) = sample_geometry_and_support(&mut rng, &config(0));
        let mut e1 = vec![Complex64::new(0.0, 0.0); 5];
        e1[0] = Complex64::new(1.0, 0.0);
        let sample = sample_from_coefficients(&physics, &g, &s, &e1).unwrap();
        assert_eq!(sample.input.len(), 80);
        let w: Vec<Complex64> = (0..40)
            .map(|i| Complex64::new(sample.input[i], sample.input[40 + i]))
            .collect();
        let grid = QuadratureGrid::new(10).unwrap();
        let a = assemble_forward_matrix(1.5, &g, &s, &grid, &ObservationSet::new(4.0, 40), false)
            .unwrap();
        let e = leading_subspace(&a.matrix, 5).unwrap();
        let lhs = a.matrix.adjoint_mul_vec(&w).unwrap();
        let rhs: Vec<Complex64> = e.right[0].iter().map(|z| z * e.sigma[0]).collect();
        assert!(cnorm(&csub(&lhs, &rhs)) <= 1e-10 * e.sigma[0]);
    }
}

#[test]
fn inputs_do_not_depend_on_the_quadrature_constant() {
    let mut rng = common::rng(33);
    let grid = QuadratureGrid::new(10).unwrap();
    let obs = ObservationSet::new(4.0, 40);
    for _ in 0..20 {
        let (g, s) = sample_geometry_and_support(&mut rng, &config(0));
        let frames: Vec<_> = [false, true]
            .iter()
            .map(|&scaled| {
                let a = assemble_forward_matrix(1.5, &g, &s, &grid, &obs, scaled).unwrap();
                projector(&leading_subspace(&a.matrix, 5).unwrap().left, 40)
            })
            .collect();
        assert!(frames[0].sub(&frames[1]).frobenius_norm() <= 1e-10);
    }
}

#[test]
fn files_round_trip_at_storage_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.crkd");
    let cfg = config(7);
    let samples = generate_samples(&cfg, 0, 1000).unwrap();
    write_dataset(&path, &cfg, &samples).unwrap();
    let header = DatasetHeader::for_config(&cfg, 1000);
    assert_eq!(
        std::fs::metadata(&path).unwrap().len(),
        (HEADER_LEN + 1000 * header.record_len()) as u64
    );
    let loaded = load_dataset(&path).unwrap();
    assert_eq!(loaded, Dataset::from_samples(&cfg, &samples));
    assert_eq!(loaded.len(), 1000);
    assert_eq!(loaded.header, header);
    for (i, s) in samples.iter().enumerate() {
        let stored: Vec<f32> = s.input.iter().map(|&x| x as f32).collect();
        assert_eq!(loaded.input(i), stored.as_slice());
        assert_eq!(loaded.raw(i), [s.theta as f32, s.offset as f32]);
        let norm = s.input.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn file_bytes_depend_only_on_seed_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(11);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let a = dir.path().join("a.crkd");
    let b = dir.path().join("b.crkd");
    let c = dir.path().join("c.crkd");
    single
        .install(|| generate_dataset(&cfg, 600, &a, |_| {}))
        .unwrap();
    generate_dataset(&cfg, 600, &b, |_| {}).unwrap();
    generate_dataset(&config(12), 600, &c, |_| {}).unwrap();
    let bytes = |p| std::fs::read(p).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    // a prefix of a larger run is the smaller run
    let d = dir.path().join("d.crkd");
    generate_dataset(&cfg, 5000, &d, |_| {}).unwrap();
    let big = load_dataset(&d).unwrap();
    let small = load_dataset(&a).unwrap();
    assert_eq!(
        big.select(&(0..600).collect::<Vec<_>>()).input(599),
        small.input(599)
    );
}

#[test]
fn damaged_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.crkd");
    let cfg = config(3);
    write_dataset(&path, &cfg, &generate_samples(&cfg, 0, 10).unwrap()).unwrap();
    let good = std::fs::read(&path).unwrap();

    let write = |bytes: &[u8]| {
        std::fs::write(&path, bytes).unwrap();
        load_dataset(&path)
    };
    assert!(matches!(
        write(&good[..good.len() - 4]),
        Err(Error::Format(_))
    ));
    assert!(matches!(write(&good[..20]), Err(Error::Format(_))));
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(write(&bad), Err(Error::Format(_))));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(write(&bad), Err(Error::Format(_))));
    let mut bad = good.clone();
    // scale the first input coordinate so the norm is off
    let at = HEADER_LEN;
    let x = f32::from_le_bytes(bad[at..at + 4].try_into().unwrap()) + 0.5;
    bad[at..at + 4].copy_from_slice(&x.to_le_bytes());
    assert!(matches!(write(&bad), Err(Error::Format(_))));
    assert!(write(&good).is_ok());
}

#[test]
fn sample_config_ranges_are_checked() {
    let mut cfg = config(0);
    cfg.length_range = (0.5, 3.0);
    assert!(cfg.validate().is_err());
    let mut cfg = config(0);
    cfg.center_range = (-1.0, 1.5);
    assert!(cfg.validate().is_err());
    assert!(encode_measurement(&[Complex64::new(0.0, 0.0); 40]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn samples_have_unit_inputs_and_box_targets(seed in 0u64..10_000, index in 0u64..1_000_000) {
        let cfg = config(seed);
        let s = make_sample(&mut item_rng(seed, stream::DATASET, index), &cfg).unwrap();
        let norm = s.input.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12);
        let t = s.normalized_target(1.0);
        prop_assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
        let (theta, a) = denormalize_target(t, 1.0);
        prop_assert!((theta - s.theta).abs() < 1e-15 && (a - s.offset).abs() < 1e-15);
    }

    #[test]
    fn encoding_is_invariant_under_positive_scaling(re in prop::collection::vec(-1.0f64..1.0, 40),
                                                    im in prop::collection::vec(-1.0f64..1.0, 40),
                                                    c in 0.01f64..100.0) {
        let w: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let scaled: Vec<Complex64> = w.iter().map(|z| z * c).collect();
        let (x, y) = (encode_measurement(&w).unwrap(), encode_measurement(&scaled).unwrap());
        prop_assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= 1e-14));
    }

    #[test]
    fn geometry_stays_admissible(seed in 0u64..100_000) {
        let (g, s) = sample_geometry_and_support(&mut common::rng(seed), &config(0));
        prop_assert!(CrackGeometry::new(g.theta, g.offset, 1.0).is_ok());
        prop_assert!(SupportInterval::new(s.center, s.length).is_ok());
    }
}
