mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use crackscat::config::PhysicsConfig;
use crackscat::dataset::{sample_geometry_and_support, SampleConfig};
use crackscat::forward::*;
use crackscat::linalg::{cdot, cnorm, csub, CMatrix};
use crackscat::spectral::leading_subspace;
use crackscat::Complex64;
use proptest::prelude::*;
use rand::Rng;

const K: f64 = 1.5;

fn physics() -> PhysicsConfig {
    PhysicsConfig::default()
}

fn random_crack(rng: &mut impl Rng) -> (CrackGeometry, SupportInterval) {
    let cfg = SampleConfig::new(physics(), 0);
    sample_geometry_and_support(rng, &cfg)
}

fn coarse(geom: &CrackGeometry, support: &SupportInterval, include_scale: bool) -> CMatrix {
    let grid = QuadratureGrid::new(10).unwrap();
    let obs = ObservationSet::new(4.0, 40);
    assemble_forward_matrix(K, geom, support, &grid, &obs, include_scale)
        .unwrap()
        .matrix
}

fn sup_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn normalized(v: &[Complex64]) -> Vec<Complex64> {
    let n = cnorm(v);
    v.iter().map(|z| z / n).collect()
}

fn offset_point(geom: &CrackGeometry, support: &SupportInterval, v: f64, eps: f64) -> Point {
    let y = crack_point(geom, support, v);
    let n = geom.normal();
    [y[0] + eps * n[0], y[1] + eps * n[1]]
}

#[test]
fn admissible_cracks_stay_away_from_the_circle() {
    let obs = ObservationSet::new(4.0, 40);
    let mut rng = common::rng(11);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let (g, s) = random_crack(&mut rng);
        worst = worst.min(min_distance_to_circle(&g, &s, &obs));
    }
    assert!(worst >= 1.29, "sampled worst {worst}");
    // extreme corner: o = 1, l = 3, |a| = 1
    let corner = min_distance_to_circle(
        &CrackGeometry::unchecked(0.3, 1.0),
        &SupportInterval::unchecked(1.0, 3.0),
        &obs,
    );
    assert!(corner >= 1.29 && (corner - (4.0 - 2.5f64.hypot(1.0))).abs() < 1e-15);
}

#[test]
fn matrix_symmetric_under_reversed_parameterization() {
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let (g, s) = random_crack(&mut rng);
        let a = coarse(&g, &s, true);
        let flipped = coarse(
            &CrackGeometry::unchecked(g.theta + PI, -g.offset),
            &SupportInterval::unchecked(-s.center, s.length),
            true,
        );
        let cols = a.cols();
        for i in 0..a.rows() {
            for j in 0..cols {
                let d = (a[(i, j)] - flipped[(i, cols - 1 - j)]).norm();
                assert!(d <= 1e-14, "entry ({i},{j}) differs by {d}");
            }
        }
    }
}

#[test]
fn derivative_matrices_match_central_differences() {
    let h = 1e-6;
    let grid = QuadratureGrid::new(10).unwrap();
    let obs = ObservationSet::new(4.0, 40);
    let mut rng = common::rng(13);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (g, s) = random_crack(&mut rng);
        let (d_theta, d_offset) = derivative_matrices(K, &g, &s, &grid, &obs, true).unwrap();
        let shifted = |dt: f64, da: f64| {
            coarse(
                &CrackGeometry::unchecked(g.theta + dt, g.offset + da),
                &s,
                true,
            )
        };
        for (analytic, plus, minus) in [
            (&d_theta.matrix, shifted(h, 0.0), shifted(-h, 0.0)),
            (&d_offset.matrix, shifted(0.0, h), shifted(0.0, -h)),
        ] {
            let scale = analytic.max_abs();
            for i in 0..analytic.rows() {
                for j in 0..analytic.cols() {
                    let fd = (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
                    // entries are measured against the largest one: isolated near-zero
                    // entries carry Hankel rounding divided by h
                    worst = worst.max((fd - analytic[(i, j)]).norm() / scale);
                }
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative entry error {worst}");
}

#[test]
fn case_data_is_linear_in_the_incident_field() {
    let g = CrackGeometry::unchecked(0.4, -0.3);
    let s = SupportInterval::unchecked(0.2, 2.0);
    let grid = QuadratureGrid::new(128).unwrap();
    let opts = BieOptions {
        n_dense: 128,
        ..BieOptions::default()
    };
    let rhs = |f: &dyn Fn(Point) -> Complex64| {
        grid_points(&g, &s, &grid)
            .into_iter()
            .map(f)
            .collect::<Vec<_>>()
    };
    let g1 = rhs(&|y| Complex64::from_polar(1.0, K * y[0]));
    let g2 = rhs(&|y| Complex64::new(y[1], -y[0] * y[0]));
    let c = Complex64::new(0.7, -1.3);
    let combo: Vec<_> = g1.iter().zip(&g2).map(|(a, b)| a + c * b).collect();
    let solve = |g_: &[Complex64]| solve_bie(K, &g, &s, g_, &opts).unwrap().density.0;
    let (p1, p2, p12) = (solve(&g1), solve(&g2), solve(&combo));
    let expect: Vec<_> = p1.iter().zip(&p2).map(|(a, b)| a + c * b).collect();
    assert!(cnorm(&csub(&p12, &expect)) <= 1e-8 * cnorm(&expect));
}

#[test]
fn forcing_case_on_the_reference_crack() {
    let g = CrackGeometry::unchecked(0.0, 0.0);
    let s = SupportInterval::unchecked(0.0, 2.0);
    let obs = ObservationSet::new(4.0, 40);
    let opts = BieOptions::default();
    let case = forward_data_for_case(K, &obs, &Excitation::Forcing, &g, &s, &opts).unwrap();
    assert_eq!(case.data.len(), 40);
    // y_2 = 0 along the crack, so psi(t) = t - i
    let grid = QuadratureGrid::new(opts.n_dense).unwrap();
    let psi: Vec<Complex64> = grid
        .nodes
        .iter()
        .map(|v| Complex64::new(v.sin(), -1.0) * v.cos())
        .collect();
    let dense = assemble_forward_matrix(K, &g, &s, &grid, &obs, true).unwrap();
    let expect = dense.matrix.mul_vec(&psi).unwrap();
    assert!(sup_diff(&case.data, &expect) <= 1e-14 * cnorm(&expect));
}

#[test]
fn plane_wave_data_is_rotation_equivariant() {
    let opts = BieOptions {
        n_dense: 128,
        ..BieOptions::default()
    };
    let g = CrackGeometry::unchecked(0.3, 0.5);
    let s = SupportInterval::unchecked(-0.4, 2.5);
    let obs = ObservationSet::new(4.0, 40);
    let base = forward_data_for_case(
        K,
        &obs,
        &Excitation::plane_wave_at_angle(0.9),
        &g,
        &s,
        &opts,
    )
    .unwrap();
    for rho in [0.37, -1.1, 2.5] {
        let rotated = forward_data_for_case(
            K,
            &ObservationSet::with_rotation(4.0, 40, rho),
            &Excitation::plane_wave_at_angle(0.9 + rho),
            &CrackGeometry::unchecked(g.theta + rho, g.offset),
            &s,
            &opts,
        )
        .unwrap();
        let err = sup_diff(&base.data, &rotated.data) / cnorm(&base.data);
        assert!(err <= 1e-6, "rho = {rho}: {err}");
    }
}

#[test]
fn dense_grid_self_convergence() {
    let obs = ObservationSet::new(4.0, 40);
    let mut rng = common::rng(14);
    for case in 1..=4u8 {
        let (g, s) = random_crack(&mut rng);
        let excitation = match case {
            1 => Excitation::plane_wave_at_angle(1.2),
            2 => Excitation::NearSource {
                source: [0.0, -3.2],
            },
            3 => Excitation::FarSource {
                source: [-4.0, 4.0],
            },
            _ => Excitation::Forcing,
        };
        let data = |n_dense| {
            let opts = BieOptions {
                n_dense,
                ..BieOptions::default()
            };
            normalized(
                &forward_data_for_case(K, &obs, &excitation, &g, &s, &opts)
                    .unwrap()
                    .data,
            )
        };
        let err = sup_diff(&data(128), &data(256));
        assert!(err <= 1e-3, "case {case}: {err}");
    }
}

#[test]
fn manufactured_density_round_trip() {
    let opts = BieOptions::default();
    let obs = ObservationSet::new(4.0, 40);
    let mut rng = common::rng(15);
    for _ in 0..3 {
        let (g, s) = random_crack(&mut rng);
        let grid = QuadratureGrid::new(opts.n_dense).unwrap();
        let exact: Vec<Complex64> = grid
            .nodes
            .iter()
            .map(|&v| Complex64::new(1.0 + 0.5 * v.sin(), (2.0 * v).cos()) * v.cos())
            .collect();
        let sl = single_layer_matrix(K, &g, &s, &grid).unwrap();
        let rhs = sl.mul_vec(&exact).unwrap();
        let sol = solve_bie(K, &g, &s, &rhs, &opts).unwrap();
        assert!(
            sol.relative_residual <= 1e-6,
            "residual {}",
            sol.relative_residual
        );

        let dense = assemble_forward_matrix(K, &g, &s, &grid, &obs, true).unwrap();
        let frame = leading_subspace(&dense.matrix, 5).unwrap().left;
        let project = |x: &[Complex64]| -> Vec<Complex64> {
            let d = dense.matrix.mul_vec(x).unwrap();
            frame.iter().map(|l| cdot(l, &d)).collect()
        };
        let (want, got) = (project(&exact), project(&sol.density.0));
        let err = cnorm(&csub(&got, &want)) / cnorm(&want);
        assert!(err <= 5e-2, "leading-subspace data error {err}");
    }
}

#[test]
fn scattered_field_cancels_incident_near_the_crack() {
    let opts = BieOptions::default();
    let obs = ObservationSet::new(4.0, 40);
    let excitation = Excitation::plane_wave_at_angle(0.6);
    let mut rng = common::rng(16);
    for _ in 0..3 {
        let (g, s) = random_crack(&mut rng);
        let case = forward_data_for_case(K, &obs, &excitation, &g, &s, &opts).unwrap();
        let eval = PotentialEvaluator::new(K, &g, &s, &case.grid, &case.density).unwrap();
        for i in 0..=40 {
            let v = (0.95f64).asin() * (2.0 * i as f64 / 40.0 - 1.0);
            for eps in [1e-3, -1e-3] {
                let x = offset_point(&g, &s, v, eps);
                let inc = incident_field(K, &excitation, x).unwrap();
                let scat = eval.potential(x).unwrap();
                let rel = (scat + inc).norm() / inc.norm();
                assert!(rel <= 2e-2, "v = {v}, eps = {eps}: {rel}");
            }
        }
    }
}

#[test]
fn total_field_reproduces_observation_data() {
    let opts = BieOptions::default();
    let obs = ObservationSet::new(4.0, 40);
    let g = CrackGeometry::unchecked(-0.8, 0.2);
    let s = SupportInterval::unchecked(0.5, 1.5);
    for excitation in [
        Excitation::plane_wave_at_angle(2.0),
        Excitation::NearSource { source: [3.0, 1.0] },
        Excitation::Forcing,
    ] {
        let case = forward_data_for_case(K, &obs, &excitation, &g, &s, &opts).unwrap();
        let field = total_field_at(K, &obs, &excitation, &g, &s, &obs.points, &opts).unwrap();
        for (sample, d) in field.iter().zip(&case.data) {
            let scat = sample.total - incident_field(K, &excitation, sample.point).unwrap();
            assert!((scat - d).norm() <= 1e-12 * cnorm(&case.data));
        }
    }
}

#[test]
fn masking_is_confined_to_the_crack_and_source() {
    let opts = BieOptions {
        n_dense: 128,
        ..BieOptions::default()
    };
    let obs = ObservationSet::new(4.0, 40);
    let g = CrackGeometry::unchecked(0.0, 0.0);
    let s = SupportInterval::unchecked(0.0, 2.0);
    let source = [3.2, 0.0];
    let points = [
        [0.3, 5e-4],
        [0.3, 2e-3],
        [1.0 + 5e-4, 0.0],
        [1.002, 0.0],
        [3.2, 5e-4],
        [3.2, 2e-3],
        [0.0, 2.0],
    ];
    let field = total_field_at(
        K,
        &obs,
        &Excitation::NearSource { source },
        &g,
        &s,
        &points,
        &opts,
    )
    .unwrap();
    let masked: Vec<bool> = field.iter().map(|f| f.masked).collect();
    assert_eq!(masked, [true, false, true, false, true, false, false]);
    for f in &field {
        assert_eq!(f.masked, f.total.re.is_nan());
    }
}

#[test]
fn scattered_field_decays_along_rays() {
    let opts = BieOptions::default();
    let obs = ObservationSet::new(4.0, 40);
    let g = CrackGeometry::unchecked(0.5, 0.1);
    let s = SupportInterval::unchecked(0.0, 2.0);
    let excitation = Excitation::plane_wave_at_angle(0.0);
    let case = forward_data_for_case(K, &obs, &excitation, &g, &s, &opts).unwrap();
    let eval = PotentialEvaluator::new(K, &g, &s, &case.grid, &case.density).unwrap();
    for phi in [0.0, 1.0, 2.5, 4.0] {
        let mags: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|r| {
                eval.potential([r * f64::cos(phi), r * f64::sin(phi)])
                    .unwrap()
                    .norm()
            })
            .collect();
        assert!(
            mags[0] > mags[1] && mags[1] > mags[2],
            "phi = {phi}: {mags:?}"
        );
    }
}

#[test]
fn total_field_nearly_vanishes_beside_coarse_nodes() {
    let opts = BieOptions::default();
    let obs = ObservationSet::new(4.0, 40);
    let mut rng = common::rng(17);
    let coarse_grid = QuadratureGrid::new(10).unwrap();
    for _ in 0..3 {
        let (g, s) = random_crack(&mut rng);
        let excitation = Excitation::plane_wave_at_angle(rng.random_range(0.0..2.0 * PI));
        let points: Vec<Point> = coarse_grid
            .nodes
            .iter()
            .filter(|v| v.abs() < FRAC_PI_2 - 1e-9)
            .flat_map(|&v| {
                [
                    offset_point(&g, &s, v, 1e-3),
                    offset_point(&g, &s, v, -1e-3),
                ]
            })
            .collect();
        let field = total_field_at(K, &obs, &excitation, &g, &s, &points, &opts).unwrap();
        for f in field {
            assert!(
                !f.masked && f.total.norm() <= 5e-2,
                "{:?}: {}",
                f.point,
                f.total.norm()
            );
        }
    }
}

#[test]
fn incident_field_examples() {
    let e = Excitation::plane_wave_at_angle(0.0);
    assert!((incident_field(K, &e, [0.0, 0.0]).unwrap() - 1.0).norm() < 1e-15);
    assert!((incident_field(K, &e, [2.0 * PI / K, 0.0]).unwrap() - 1.0).norm() < 1e-14);
    let near = Excitation::NearSource { source: [3.0, 0.0] };
    let (j0, _, y0, _) = common::bessel_oracle(4.5);
    let want = Complex64::new(-0.25 * y0, 0.25 * j0);
    assert!((incident_field(K, &near, [0.0, 0.0]).unwrap() - want).norm() < 1e-14);
    assert!(incident_field(K, &near, [3.0, 0.0]).is_err());
    assert!(Excitation::FarSource { source: [4.0, 0.0] }
        .validate()
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_and_tangent_are_orthonormal(theta in -FRAC_PI_2..FRAC_PI_2, a in -1.0f64..1.0) {
        let g = CrackGeometry::new(theta, a, 1.0).unwrap();
        let (t, n) = (g.tangent(), g.normal());
        prop_assert!((t[0] * n[0] + t[1] * n[1]).abs() < 1e-15);
        prop_assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-15);
        prop_assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn crack_points_lie_on_the_segment(theta in -FRAC_PI_2..FRAC_PI_2, a in -1.0f64..1.0,
                                       o in -1.0f64..1.0, l in 1.0f64..3.0, v in -FRAC_PI_2..FRAC_PI_2) {
        let g = CrackGeometry::unchecked(theta, a);
        let s = SupportInterval::unchecked(o, l);
        let y = crack_point(&g, &s, v);
        prop_assert!(distance_to_crack(&g, &s, y) < 1e-14);
        let obs = ObservationSet::new(4.0, 40);
        prop_assert!(4.0 - y[0].hypot(y[1]) >= min_distance_to_circle(&g, &s, &obs) - 1e-14);
    }

    #[test]
    fn scaling_data_scales_density(re in -3.0f64..3.0, im in -3.0f64..3.0) {
        prop_assume!(re.hypot(im) > 0.1);
        let g = CrackGeometry::unchecked(0.2, 0.4);
        let s = SupportInterval::unchecked(0.0, 2.0);
        let opts = BieOptions { n_dense: 64, ..BieOptions::default() };
        let grid = QuadratureGrid::new(64).unwrap();
        let rhs: Vec<Complex64> = grid_points(&g, &s, &grid).iter().map(|y| Complex64::from_polar(1.0, K * y[1])).collect();
        let c = Complex64::new(re, im);
        let scaled: Vec<Complex64> = rhs.iter().map(|z| z * c).collect();
        let p = solve_bie(K, &g, &s, &rhs, &opts).unwrap().density.0;
        let q = solve_bie(K, &g, &s, &scaled, &opts).unwrap().density.0;
        let pc: Vec<Complex64> = p.iter().map(|z| z * c).collect();
        prop_assert!(cnorm(&csub(&q, &pc)) <= 1e-12 * cnorm(&pc));
    }
}
